"""Invariant mass and mean velocity of multiphoton states of light."""

from .errors import (ArgumentError, CapabilityError, ConditioningError, ContractError,
                     CoverageError, DegenerateStateError, DomainError, NumericalContractError,
                     OrderingError, PhlimError, SchemaError, WindowError)
from .kspace import (CartesianKGrid, KVec3, SphericalKGrid, angular_project,
                     integrate_spherical, spherical_harmonic)
from .observables import (Observables, biphoton_mass_estimate, closed_form_gaussian_energy,
                          closed_form_gaussian_mass, closed_form_mixed_mass,
                          closed_form_two_mode_mass, observables_discrete, observables_packet,
                          volume_scaling_check)
from .states import (BiphotonGrid, BiphotonSpec, DiscreteModeState, GaussianPacketSpec,
                     ModeOccupation, WavePacket, make_biphoton, make_gaussian_packet,
                     marginal_density, normalize, overlap, superpose)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "BiphotonGrid", "BiphotonSpec", "CapabilityError", "CartesianKGrid",
    "ConditioningError", "ContractError", "CoverageError", "DegenerateStateError",
    "DiscreteModeState", "DomainError", "GaussianPacketSpec", "KVec3", "ModeOccupation",
    "NumericalContractError", "Observables", "OrderingError", "PhlimError", "SchemaError",
    "SphericalKGrid", "WavePacket", "WindowError", "angular_project",
    "biphoton_mass_estimate", "closed_form_gaussian_energy", "closed_form_gaussian_mass",
    "closed_form_mixed_mass", "closed_form_two_mode_mass", "integrate_spherical",
    "make_biphoton", "make_gaussian_packet", "marginal_density", "normalize",
    "observables_discrete", "observables_packet", "overlap", "spherical_harmonic",
    "superpose", "volume_scaling_check",
]
