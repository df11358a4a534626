"""Exception hierarchy.

Two families matter to callers: argument problems (bad shapes, mismatched
grids, invalid indices) subclass ``ValueError``; numerical contract
violations (coverage, degenerate states, windows) subclass
``NumericalContractError`` so the CLI can map them to a distinct exit code.
"""


class PhlimError(Exception):
    """Base class for all package errors."""


class ArgumentError(PhlimError, ValueError):
    """Shape mismatch, grid mismatch or otherwise malformed arguments."""


class DomainError(ArgumentError):
    """Index or parameter outside the mathematical domain (e.g. |j| > l)."""


class CapabilityError(PhlimError):
    """Request exceeds a configured capability limit (e.g. l > l_max)."""


class SchemaError(ArgumentError):
    """State-spec document failed validation."""


class NumericalContractError(PhlimError):
    """A numerical pre/post-condition could not be honoured."""


class CoverageError(NumericalContractError):
    """The grid does not contain the state's support to the required level."""


class DegenerateStateError(NumericalContractError):
    """Zero norm, zero mass, or a state with no meaningful rest frame."""


class ContractError(NumericalContractError):
    """Input violates a documented precondition (e.g. unnormalized packet)."""


class WindowError(NumericalContractError):
    """Detection time window does not contain the transit."""


class OrderingError(NumericalContractError):
    """Mean arrival times are not ordered along the propagation direction."""


class ConditioningError(NumericalContractError):
    """Finite-difference evaluation is ill-conditioned at this point."""
