"""State models: discrete Fock ensembles, wave packets and SPDC biphotons.

Wave packets are stored as complex amplitudes ``psi_s(k)`` on a quadrature
grid, one leading axis per polarization. Packets built from a closed form
keep the generating function as ``source`` so that boosts and resampling
can re-evaluate the amplitude anywhere instead of interpolating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats

from .errors import (ArgumentError, ContractError, CoverageError,
                     DegenerateStateError, DomainError)
from .kspace import CartesianKGrid, KVec3, SphericalKGrid

PURE = "pure_superposition"
MIXED = "mixed_ensemble"

NORM_TOL = 1e-10
TAIL_TOL = 1e-10


# ---------------------------------------------------------------------------
# Discrete plane-wave modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeOccupation:
    """``n`` photons in the plane-wave mode (k, s)."""

    k: KVec3
    s: int = 0
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "k", KVec3.of(self.k))
        if self.s not in (0, 1):
            raise DomainError(f"polarization index must be 0 or 1, got {self.s}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"occupation must be an integer >= 1, got {self.n}")

    def key(self) -> tuple:
        return (self.k.kx, self.k.ky, self.k.kz, self.s)


@dataclass(frozen=True)
class DiscreteModeState:
    """Weighted list of Fock configurations.

    Each term is a tuple of :class:`ModeOccupation` that are occupied
    simultaneously. ``kind`` distinguishes a coherent superposition
    (amplitudes ``sqrt(weight) * exp(i phase)``) from a statistical
    mixture, for which phases are ignored.
    """

    terms: tuple[tuple[ModeOccupation, ...], ...]
    weights: tuple[float, ...]
    phases: tuple[float, ...] = ()
    kind: str = MIXED

    def __post_init__(self):
        terms = tuple(tuple(t) if isinstance(t, (list, tuple)) else (t,) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "weights", weights)
        phases = tuple(float(p) for p in self.phases) or (0.0,) * len(terms)
        object.__setattr__(self, "phases", phases)
        if self.kind not in (PURE, MIXED):
            raise ArgumentError(f"unknown kind {self.kind!r}")
        if not terms:
            raise ArgumentError("a discrete state needs at least one term")
        if len(weights) != len(terms) or len(phases) != len(terms):
            raise ArgumentError("terms, weights and phases must have equal length")
        if any(w < 0.0 or not math.isfinite(w) for w in weights):
            raise DomainError("weights must be finite and non-negative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise DomainError(f"weights must sum to 1, got {sum(weights)!r}")
        for term in terms:
            keys = [m.key() for m in term]
            if len(set(keys)) != len(keys):
                raise ArgumentError("a configuration lists the same mode twice")

    @classmethod
    def fock(cls, k, n: int = 1, s: int = 0) -> "DiscreteModeState":
        return cls(((ModeOccupation(k, s, n),),), (1.0,))

    @classmethod
    def two_mode(cls, n: int, omega0: float, theta: float, s: int = 0) -> "DiscreteModeState":
        """n/2 photons in each of two modes of equal |k| = omega0 at angle theta.

        The pair is placed symmetrically about +z in the x-z plane.
        """
        if n < 2 or n % 2:
            raise DomainError(f"n must be an even integer >= 2, got {n}")
        half = 0.5 * theta
        k1 = KVec3(omega0 * math.sin(half), 0.0, omega0 * math.cos(half))
        k2 = KVec3(-omega0 * math.sin(half), 0.0, omega0 * math.cos(half))
        if k1 == k2:  # theta == 0, or so small that sin(theta/2) rounds away
            return cls.fock(k1, n, s)
        return cls(((ModeOccupation(k1, s, n // 2), ModeOccupation(k2, s, n // 2)),), (1.0,))

    @classmethod
    def ensemble(cls, wavevectors: Sequence, n: int, weights: Sequence[float],
                 phases: Sequence[float] | None = None, kind: str = MIXED,
                 s: int = 0) -> "DiscreteModeState":
        """``n`` photons in one of several single modes, mixed or superposed."""
        terms = tuple((ModeOccupation(k, s, n),) for k in wavevectors)
        return cls(terms, tuple(weights), tuple(phases or ()), kind)

    def effective_terms(self) -> list[tuple[tuple[ModeOccupation, ...], float]]:
        """Configurations with their occupation probabilities.

        Identical configurations in a pure superposition interfere, so their
        amplitudes are summed before squaring; distinct configurations are
        orthogonal Fock states and contribute independently.
        """
        if self.kind == MIXED:
            return list(zip(self.terms, self.weights))
        merged: dict[tuple, list] = {}
        for term, w, ph in zip(self.terms, self.weights, self.phases):
            key = tuple(sorted((m.key(), m.n) for m in term))
            amp = math.sqrt(w) * complex(math.cos(ph), math.sin(ph))
            if key in merged:
                merged[key][1] += amp
            else:
                merged[key] = [term, amp]
        total = sum(abs(a) ** 2 for _, a in merged.values())
        if total <= 1e-24 * sum(self.weights):
            raise DegenerateStateError("superposition amplitudes cancel exactly")
        return [(term, abs(a) ** 2 / total) for term, a in merged.values()]


# ---------------------------------------------------------------------------
# Wave packets
# ---------------------------------------------------------------------------

Source = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class WavePacket:
    """Continuous amplitude psi_s(k) on a grid.

    Exactly one of ``samples`` (shape ``(n_pol, *grid.shape)``) or
    ``source`` (callable ``(kx, ky, kz) -> (n_pol, ...)``) drives the
    amplitude; ``scale`` multiplies either. ``photons`` holds the photon
    number per polarization component.
    """

    grid: object
    photons: tuple[int, ...] = (1,)
    kind: str = "custom"
    source: Source | None = None
    samples: np.ndarray | None = None
    scale: complex = 1.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.source is None) == (self.samples is None):
            raise ArgumentError("provide exactly one of samples or source")
        photons = tuple(int(n) for n in np.atleast_1d(self.photons))
        if any(n < 1 for n in photons):
            raise DomainError("photon numbers must be >= 1")
        object.__setattr__(self, "photons", photons)
        if self.samples is not None:
            samples = np.asarray(self.samples, dtype=complex)
            if samples.shape[1:] != tuple(self.grid.shape):
                raise ArgumentError(f"samples shape {samples.shape} does not match "
                                    f"grid {self.grid.shape}")
            if not np.all(np.isfinite(samples)):
                raise ContractError("amplitude samples contain NaN or Inf")
            samples.setflags(write=False)
            object.__setattr__(self, "samples", samples)
        if len(self.photons) not in (1, self.n_pol):
            raise ArgumentError("photons must be a single value or one per polarization")

    @cached_property
    def amplitude(self) -> np.ndarray:
        if self.samples is not None:
            amp = self.samples * self.scale if self.scale != 1.0 else self.samples
        else:
            amp = self.scale * np.asarray(self.source(*self.grid.wavevectors), dtype=complex)
            amp = np.broadcast_to(amp, (amp.shape[0],) + tuple(self.grid.shape)).copy()
            if not np.all(np.isfinite(amp)):
                raise ContractError("amplitude samples contain NaN or Inf")
        amp.setflags(write=False)
        return amp

    @property
    def n_pol(self) -> int:
        if self.samples is not None:
            return self.samples.shape[0]
        if "amplitude" in self.__dict__:
            return self.amplitude.shape[0]
        probe = np.asarray(self.source(np.zeros(1), np.zeros(1), np.zeros(1)))
        return probe.shape[0]

    @property
    def photon_weights(self) -> np.ndarray:
        n = np.asarray(self.photons, dtype=float)
        return np.broadcast_to(n, (self.n_pol,)) if n.size == 1 else n

    def source_slabs(self, chunk: int = 16):
        """Yield (slice, amplitude slab) along the first grid axis.

        Closed-form packets are evaluated slab by slab so that large boxes
        never hold the full amplitude in memory.
        """
        shape = tuple(self.grid.shape)
        if self.source is None or "amplitude" in self.__dict__:
            amp = self.amplitude
            for i0 in range(0, shape[0], chunk):
                sl = slice(i0, i0 + chunk)
                yield sl, amp[:, sl]
            return
        comps = [np.broadcast_to(c, shape) for c in self.grid.wavevectors]
        for i0 in range(0, shape[0], chunk):
            sl = slice(i0, i0 + chunk)
            yield sl, self.scale * np.asarray(self.source(*(c[sl] for c in comps)), dtype=complex)

    @cached_property
    def norm_per_polarization(self) -> np.ndarray:
        shape = tuple(self.grid.shape)
        weights = np.broadcast_to(np.asarray(self.grid.weights, dtype=float), shape)
        total = 0.0
        for sl, amp in self.source_slabs():
            total = total + np.sum(np.abs(amp) ** 2 * weights[sl], axis=tuple(range(1, amp.ndim)))
        if not np.all(np.isfinite(total)):
            raise ContractError("amplitude samples contain NaN or Inf")
        return np.atleast_1d(total)

    @property
    def norm(self) -> float:
        """sum_s integral |psi_s|^2 over the grid."""
        return float(np.sum(self.norm_per_polarization))

    @property
    def mean_photons(self) -> float:
        return float(np.dot(self.photon_weights, self.norm_per_polarization))

    def evaluate(self, kx, ky, kz) -> np.ndarray:
        """Amplitude at arbitrary wave vectors (closed-form packets only)."""
        if self.source is None:
            raise ArgumentError("packet has no closed-form source; resample instead")
        return self.scale * np.asarray(self.source(kx, ky, kz), dtype=complex)

    def replace(self, **changes) -> "WavePacket":
        values = {name: getattr(self, name) for name in
                  ("grid", "photons", "kind", "source", "samples", "scale", "info")}
        values.update(changes)
        return WavePacket(**values)

    def with_photons(self, photons) -> "WavePacket":
        return self.replace(photons=photons)


def normalize(p: WavePacket) -> WavePacket:
    """Rescale so that sum_s integral |psi_s|^2 = 1."""
    norm = p.norm
    if not norm > 0.0:
        raise DegenerateStateError("cannot normalize a zero field")
    return p.replace(scale=p.scale / math.sqrt(norm))


def is_normalized(p: WavePacket, tol: float = NORM_TOL) -> bool:
    return abs(p.norm - 1.0) <= tol


def marginal_density(p: WavePacket) -> np.ndarray:
    """Polarization-marginalized density, weighted by photon number.

    |psi(k)|^2 = (1/<n>) sum_s n_s |psi_s(k)|^2, which integrates to one.
    """
    if not is_normalized(p):
        raise ContractError(f"packet is not normalized (norm = {p.norm!r})")
    weights = p.photon_weights
    dens = np.tensordot(weights, np.abs(p.amplitude) ** 2, axes=(0, 0))
    return dens / p.mean_photons


def overlap(a: WavePacket, b: WavePacket) -> complex:
    """sum_s integral conj(psi_a,s) psi_b,s."""
    _check_compatible(a, b)
    return complex(np.sum(a.grid.integrate(np.conj(a.amplitude) * b.amplitude)))


def _check_compatible(a: WavePacket, b: WavePacket) -> None:
    if a.grid != b.grid:
        raise ArgumentError("packets live on different grids")
    if a.photons != b.photons:
        raise ArgumentError("packets carry different photon numbers")
    if a.n_pol != b.n_pol:
        raise ArgumentError("packets have different polarization structure")


def superpose(a: WavePacket, b: WavePacket, relative_phase: float = 0.0,
              renormalize: bool = True) -> WavePacket:
    """Coherent sum psi_a + exp(i delta) psi_b, renormalized by default."""
    _check_compatible(a, b)
    phase = complex(math.cos(relative_phase), math.sin(relative_phase))
    info = {"components": [a.info, b.info], "relative_phase": float(relative_phase)}
    if a.source is not None and b.source is not None:
        sa, sb, ca, cb = a.source, b.source, a.scale, b.scale * phase

        def source(kx, ky, kz):
            return ca * np.asarray(sa(kx, ky, kz)) + cb * np.asarray(sb(kx, ky, kz))

        combined = WavePacket(a.grid, a.photons, "custom", source=source, info=info)
    else:
        combined = WavePacket(a.grid, a.photons, "custom",
                              samples=a.amplitude + phase * b.amplitude, info=info)
    if renormalize:
        if combined.norm <= 1e-24 * (a.norm + b.norm):
            raise DegenerateStateError("the superposition cancels exactly")
        return normalize(combined)
    return combined


# ---------------------------------------------------------------------------
# Gaussian packets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianPacketSpec:
    """Isotropic Gaussian in k-space around carrier ``k0``, centred at ``r0``.

    ``polarization`` is a (possibly complex) Jones pair; it is normalized
    on construction and only its relative weights matter.
    """

    k0: KVec3
    sigma: float
    r0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    photons: int = 1
    polarization: tuple[complex, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "k0", KVec3.of(self.k0))
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            raise DomainError("sigma must be positive")
        object.__setattr__(self, "sigma", float(self.sigma))
        r0 = tuple(float(c) for c in self.r0)
        if len(r0) != 3 or not all(math.isfinite(c) for c in r0):
            raise DomainError("r0 must be a finite 3-vector")
        object.__setattr__(self, "r0", r0)
        pol = np.asarray(self.polarization, dtype=complex)
        if pol.ndim != 1 or pol.size not in (1, 2) or not np.any(pol):
            raise DomainError("polarization must hold one or two not-all-zero components")
        object.__setattr__(self, "polarization", tuple(complex(c) for c in pol))

    def amplitude(self, kx, ky, kz) -> np.ndarray:
        """Closed-form psi_s(k), unit norm over all of k-space."""
        k0 = self.k0
        d2 = (kx - k0.kx) ** 2 + (ky - k0.ky) ** 2 + (kz - k0.kz) ** 2
        env = np.exp(-d2 / (2.0 * self.sigma ** 2)) / (math.pi ** 0.75 * self.sigma ** 1.5)
        rx, ry, rz = self.r0
        if rx or ry or rz:
            env = env * np.exp(-1j * (kx * rx + ky * ry + kz * rz))
        pol = np.asarray(self.polarization) / np.linalg.norm(self.polarization)
        return pol.reshape((-1,) + (1,) * np.ndim(env)) * env[None]

    def tail_mass(self, grid) -> float:
        """Probability mass of |psi|^2 lying outside the grid's domain."""
        s = self.sigma / math.sqrt(2.0)  # per-axis std of |psi|^2
        if isinstance(grid, SphericalKGrid):
            return float(stats.ncx2.sf((grid.k_max / s) ** 2, 3, (self.k0.magnitude() / s) ** 2))
        if isinstance(grid, CartesianKGrid):
            log_inside = 0.0
            for c in self.k0.as_array():
                outside = (stats.norm.sf((grid.k_ext - c) / s)
                           + stats.norm.cdf((-grid.k_ext - c) / s))
                log_inside += math.log1p(-min(outside, 1.0 - 1e-300))
            return float(-math.expm1(log_inside))
        raise ArgumentError(f"unsupported grid type {type(grid).__name__}")


def make_gaussian_packet(spec: GaussianPacketSpec, grid) -> WavePacket:
    """Sample the Gaussian packet on ``grid`` and normalize it there.

    The position offset enters as exp(-i k.r0), so the synthesized field is
    centred at r0.
    """
    tail = spec.tail_mass(grid)
    if tail > TAIL_TOL:
        raise CoverageError(f"grid misses {tail:.2e} of the packet (> {TAIL_TOL:.0e}); "
                            f"it must cover k0 +- 8 sigma")
    packet = WavePacket(grid, (spec.photons,), "gaussian", source=spec.amplitude,
                        info={"spec": spec, "tail_mass": tail})
    return normalize(packet)


# ---------------------------------------------------------------------------
# SPDC biphotons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiphotonSpec:
    """Frequency-degenerate type-I SPDC pair (lengths in units of 1/k_ref).

    ``sum_extent`` bounds the transverse sum variable q = k1 + k2 and
    defaults to 4.5 / w_p; ``diff_extent`` bounds the difference variable
    d = k1 - k2 and defaults to the sinc scale sqrt(8 pi n_o / (L lambda_p)).
    """

    w_p: float
    L: float
    lambda_p: float
    n_o: float
    n_sum: int = 48
    n_diff: int = 24
    sum_extent: float | None = None
    diff_extent: float | None = None

    def __post_init__(self):
        for name in ("w_p", "L", "lambda_p", "n_o"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be positive")
            object.__setattr__(self, name, value)
        if self.sum_extent is None:
            object.__setattr__(self, "sum_extent", 4.5 / self.w_p)
        if self.diff_extent is None:
            object.__setattr__(self, "diff_extent", self.sinc_scale)

    @property
    def k_deg(self) -> float:
        """Vacuum wavenumber of each photon, 2 pi / (2 lambda_p)."""
        return math.pi / self.lambda_p

    @property
    def sinc_coefficient(self) -> float:
        return self.L * self.lambda_p / (8.0 * math.pi * self.n_o)

    @property
    def sinc_scale(self) -> float:
        return 1.0 / math.sqrt(self.sinc_coefficient)

    @property
    def regime_length(self) -> float:
        return math.sqrt(self.L * self.lambda_p)

    @property
    def in_regime(self) -> bool:
        """Wide-pump regime w_p >> sqrt(L lambda_p), read as a factor of 10."""
        return self.w_p >= 10.0 * self.regime_length

    @property
    def schmidt_number(self) -> float:
        return 2.0 * math.pi * self.w_p * math.sqrt(self.n_o) / self.regime_length


@dataclass(frozen=True, eq=False)
class BiphotonGrid:
    """Tensor Gauss-Legendre grid over (q_x, q_y, d_x, d_y).

    q = k1 + k2 and d = k1 - k2 are the transverse sum and difference
    wave vectors; d^2k1 d^2k2 = d^2q d^2d / 4. Each photon's longitudinal
    component follows from the degenerate frequency,
    k_z = sqrt(k_deg^2 - |k_perp|^2).
    """

    n_sum: int
    n_diff: int
    sum_extent: float
    diff_extent: float
    k_deg: float

    @classmethod
    def for_spec(cls, spec: BiphotonSpec) -> "BiphotonGrid":
        return cls(spec.n_sum, spec.n_diff, spec.sum_extent, spec.diff_extent, spec.k_deg)

    def doubled(self) -> "BiphotonGrid":
        return BiphotonGrid(2 * self.n_sum, 2 * self.n_diff, self.sum_extent,
                            self.diff_extent, self.k_deg)

    def params(self) -> dict:
        return {"type": "biphoton", "n_sum": self.n_sum, "n_diff": self.n_diff,
                "sum_extent": self.sum_extent, "diff_extent": self.diff_extent,
                "k_deg": self.k_deg}

    def __eq__(self, other):
        return isinstance(other, BiphotonGrid) and self.params() == other.params()

    def __hash__(self):
        return hash(tuple(self.params().values()))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_sum, self.n_sum, self.n_diff, self.n_diff)

    @cached_property
    def sum_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = leggauss(self.n_sum)
        return self.sum_extent * x, self.sum_extent * w

    @cached_property
    def diff_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = leggauss(self.n_diff)
        return self.diff_extent * x, self.diff_extent * w

    @cached_property
    def weights(self) -> np.ndarray:
        _, wq = self.sum_nodes
        _, wd = self.diff_nodes
        return 0.25 * np.einsum("a,b,c,d->abcd", wq, wq, wd, wd)

    @cached_property
    def transverse(self) -> tuple[np.ndarray, np.ndarray]:
        """Broadcastable (q_x, q_y, d_x, d_y) arrays."""
        q, _ = self.sum_nodes
        d, _ = self.diff_nodes
        return (q[:, None, None, None], q[None, :, None, None],
                d[None, None, :, None], d[None, None, None, :])

    def photon_vectors(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """(kx, ky, kz, omega) for photon 1 and photon 2 at every node."""
        qx, qy, dx, dy = self.transverse
        out = []
        for sign in (1.0, -1.0):
            kx = 0.5 * (qx + sign * dx)
            ky = 0.5 * (qy + sign * dy)
            kperp2 = kx * kx + ky * ky
            if np.max(kperp2) >= self.k_deg ** 2:
                raise CoverageError("transverse grid reaches |k_perp| >= k_deg (non-paraxial)")
            kz = np.sqrt(self.k_deg ** 2 - kperp2)
            out.append((kx, ky, kz, np.full(np.broadcast_shapes(kx.shape, ky.shape), self.k_deg)))
        return out

    def integrate(self, f):
        f = np.asarray(f)
        if f.shape[-4:] != self.shape:
            raise ArgumentError(f"field shape {f.shape} does not match grid {self.shape}")
        return np.sum(f * self.weights, axis=(-4, -3, -2, -1))

    def boundary_fraction(self, density: np.ndarray, shells: int = 2) -> float:
        dens = np.abs(np.asarray(density)) * self.weights
        total = float(np.sum(dens))
        if total == 0.0:
            return 0.0
        inner = dens[shells:-shells, shells:-shells]
        return (total - float(np.sum(inner))) / total


def biphoton_amplitude(spec: BiphotonSpec, qx, qy) -> np.ndarray:
    """Pump Gaussian times phase-matching sinc, both in the sum variable."""
    q2 = qx * qx + qy * qy
    x = spec.sinc_coefficient * q2
    return np.exp(-q2 * spec.w_p ** 2) * np.sinc(x / math.pi)


def make_biphoton(spec: BiphotonSpec, grid: BiphotonGrid | None = None) -> WavePacket:
    """Normalized two-photon transverse amplitude as a 2-photon packet.

    The observables of the returned packet are those of the single-photon
    marginal multiplied by two photons.
    """
    grid = grid or BiphotonGrid.for_spec(spec)
    lobes = spec.sinc_coefficient * 2.0 * grid.sum_extent ** 2 / math.pi
    if lobes > grid.n_sum / 8.0:
        raise CoverageError(f"{lobes:.1f} sinc lobes inside the sum window are unresolved "
                            f"by {grid.n_sum} nodes")
    edge = float(np.exp(-2.0 * (grid.sum_extent * spec.w_p) ** 2))
    if edge > TAIL_TOL and lobes < 1.0:
        raise CoverageError(f"pump Gaussian not contained in the sum window (edge {edge:.1e})")
    grid.photon_vectors()  # paraxial check
    qx, qy, _, _ = grid.transverse
    amp = biphoton_amplitude(spec, qx, qy)
    amp = np.broadcast_to(amp, grid.shape)[None].astype(complex)
    packet = WavePacket(grid, (2,), "biphoton_marginal", samples=amp,
                        info={"spec": spec, "in_regime": spec.in_regime})
    return normalize(packet)
