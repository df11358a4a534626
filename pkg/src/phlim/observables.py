"""Mean energy, momentum, invariant mass and velocity of light states.

All quantities are in natural units (hbar = c = 1 unless an explicit
``hbar`` is passed), with wavenumbers measured in units of k_ref.

Masses are never formed as the bare difference H^2 - |P|^2, which loses
every significant digit for nearly collinear states. Wave packets use
m^2 = (H - |P|)(H + |P|) with H - |P| integrated directly from
omega - k.n, and discrete states use the pairwise form
m^2 = 1/2 sum_ab w_a w_b omega_a omega_b |khat_a - khat_b|^2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .errors import ArgumentError, ContractError, CoverageError, DomainError
from .kspace import CartesianKGrid, SphericalKGrid
from .states import (DiscreteModeState, GaussianPacketSpec, WavePacket, BiphotonSpec,
                     TAIL_TOL, is_normalized, make_gaussian_packet, marginal_density)

ZERO_MOMENTUM_RTOL = 1e-12
MASS_CLAMP_RTOL = 1e-10
CHUNK = 32


@dataclass(frozen=True)
class Observables:
    """First moments of a state and the derived invariant mass and speed.

    energy is in hbar c k_ref, momentum in hbar k_ref and mass in
    hbar k_ref / c. ``mass_clamped`` records that a small negative m^2
    from rounding was set to zero.
    """

    energy: float
    momentum: tuple[float, float, float]
    mass: float
    beta: float
    direction: tuple[float, float, float]
    mass_clamped: bool = False

    @classmethod
    def from_moments(cls, energy: float, momentum, mass_excess: float | None = None,
                     beta: float | None = None) -> "Observables":
        """Assemble observables from H, P and optionally H - |P|.

        ``mass_excess`` is H - |P| evaluated without cancellation. ``beta``
        may be supplied from unscaled moments so that it does not depend on
        the unit convention used for energy and momentum.
        """
        energy = float(energy)
        p = np.asarray(momentum, dtype=float).reshape(3)
        if not (math.isfinite(energy) and np.all(np.isfinite(p))):
            raise ContractError("non-finite moments")
        if energy < 0.0:
            raise ContractError(f"negative energy {energy!r}")
        pmag = float(np.linalg.norm(p))
        at_rest = pmag <= ZERO_MOMENTUM_RTOL * energy
        if at_rest or mass_excess is None:
            m2 = (energy - pmag) * (energy + pmag)
        else:
            m2 = float(mass_excess) * (energy + pmag)
        clamped = False
        if m2 < 0.0:
            if m2 > -MASS_CLAMP_RTOL * energy ** 2:
                warnings.warn(f"m^2 = {m2:.3e} from rounding clamped to zero", RuntimeWarning,
                              stacklevel=3)
                m2, clamped = 0.0, True
            else:
                raise ContractError(f"H^2 - |P|^2 = {m2:.3e} is significantly negative")
        if at_rest:
            direction = (0.0, 0.0, 0.0)
            beta = 0.0
        else:
            direction = tuple(float(c) for c in p / pmag)
            if beta is None:
                beta = pmag / energy
        beta = min(max(float(beta), 0.0), 1.0)
        return cls(energy, tuple(float(c) for c in p), math.sqrt(m2), beta, direction, clamped)

    def as_dict(self) -> dict:
        return {"energy": self.energy, "momentum": list(self.momentum), "mass": self.mass,
                "beta": self.beta, "direction": list(self.direction),
                "mass_clamped": self.mass_clamped}


# ---------------------------------------------------------------------------
# Discrete states
# ---------------------------------------------------------------------------

def _weighted_modes(state: DiscreteModeState) -> list[tuple[float, np.ndarray]]:
    """(lambda * n, k) for every occupied mode of every configuration."""
    modes = []
    for term, weight in state.effective_terms():
        for occ in term:
            if weight > 0.0:
                modes.append((weight * occ.n, occ.k.as_array()))
    return modes


def observables_discrete(state: DiscreteModeState, hbar: float = 1.0) -> Observables:
    """Observables of a Fock ensemble.

    Coherent and incoherent superpositions of distinct configurations give
    the same first moments, so both kinds share this path.
    """
    modes = _weighted_modes(state)
    w = np.array([m[0] for m in modes])
    k = np.array([m[1] for m in modes]).reshape(-1, 3)
    omega = np.linalg.norm(k, axis=1)
    energy = float(np.dot(w, omega))
    momentum = w @ k
    live = omega > 0.0
    unit = k[live] / omega[live, None]
    a = w[live] * omega[live]
    diff2 = np.sum((unit[:, None, :] - unit[None, :, :]) ** 2, axis=-1)
    m2 = 0.5 * float(a @ diff2 @ a)
    pmag = float(np.linalg.norm(momentum))
    beta = pmag / energy if energy > 0.0 else 0.0
    # pass H - |P| consistent with the pairwise m^2 so no cancellation occurs
    excess = m2 / (energy + pmag) if energy > 0.0 else 0.0
    return Observables.from_moments(hbar * energy, hbar * momentum, hbar * excess, beta)


def closed_form_two_mode_mass(n: int, omega0: float, theta: float, hbar: float = 1.0) -> float:
    """n/2 photons in each of two modes of frequency omega0 at angle theta."""
    if int(n) != n or n < 2 or n % 2:
        raise DomainError(f"n must be an even integer >= 2, got {n}")
    if not omega0 > 0.0:
        raise DomainError("omega0 must be positive")
    if not 0.0 <= theta <= math.pi:
        raise DomainError("theta must lie in [0, pi]")
    return n * hbar * omega0 * math.sin(0.5 * theta)


def closed_form_mixed_mass(weights: Sequence[float], angles, n: int, omega0: float,
                           hbar: float = 1.0) -> float:
    """Mass of a mixture of n-photon single-mode states with equal |k|.

    ``angles`` is the symmetric matrix of pairwise angles theta_ij.
    """
    lam = np.asarray(weights, dtype=float)
    theta = np.asarray(angles, dtype=float).reshape(lam.size, lam.size)
    if np.any(lam < 0.0) or abs(lam.sum() - 1.0) > 1e-12:
        raise DomainError("weights must be non-negative and sum to 1")
    s2 = np.sin(0.5 * theta) ** 2
    lower = np.tril(np.outer(lam, lam) * s2, k=-1)
    return 2.0 * n * hbar * omega0 * math.sqrt(float(lower.sum()))


def closed_form_gaussian_energy(k0: float, sigma: float, hbar: float = 1.0) -> float:
    """Mean energy of the normalized isotropic Gaussian packet."""
    _check_gaussian(k0, sigma)
    x = k0 / sigma
    return hbar * (k0 * special.erf(x) * (1.0 + sigma ** 2 / (2.0 * k0 ** 2))
                   + sigma * math.exp(-x * x) / math.sqrt(math.pi))


def gaussian_energy_excess(k0: float, sigma: float) -> float:
    """E - k0 for the Gaussian packet, free of cancellation."""
    _check_gaussian(k0, sigma)
    x = k0 / sigma
    return (-k0 * special.erfc(x) + special.erf(x) * sigma ** 2 / (2.0 * k0)
            + sigma * math.exp(-x * x) / math.sqrt(math.pi))


@dataclass(frozen=True)
class GaussianMass:
    """Exact closed-form mass with its small-width asymptote hbar sigma / c."""

    mass: float
    asymptote: float
    asymptote_valid: bool
    clamped: bool = False


ASYMPTOTE_RTOL = 0.02


def closed_form_gaussian_mass(k0: float, sigma: float, hbar: float = 1.0) -> GaussianMass:
    """sqrt(E^2 - k0^2) for the Gaussian packet.

    The asymptote is flagged valid when its leading relative correction,
    sigma^2 / (8 k0^2), is at most 2%.
    """
    excess = gaussian_energy_excess(k0, sigma)
    m2 = excess * (excess + 2.0 * k0)
    clamped = m2 < 0.0
    if clamped:
        warnings.warn("negative m^2 from rounding clamped to zero", RuntimeWarning, stacklevel=2)
        m2 = 0.0
    valid = sigma ** 2 / (8.0 * k0 ** 2) <= ASYMPTOTE_RTOL
    return GaussianMass(hbar * math.sqrt(m2), hbar * sigma, bool(valid), bool(clamped))


def _check_gaussian(k0: float, sigma: float) -> None:
    if not (k0 > 0.0 and math.isfinite(k0)):
        raise DomainError("k0 must be positive")
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise DomainError("sigma must be positive")


# ---------------------------------------------------------------------------
# Wave packets
# ---------------------------------------------------------------------------

def _photon_vectors(grid):
    if hasattr(grid, "photon_vectors"):
        return grid.photon_vectors()
    kx, ky, kz = grid.wavevectors
    return [(kx, ky, kz, grid.frequency)]


def _chunked_sum(grid, density: np.ndarray, integrand) -> np.ndarray:
    """sum over nodes of weight * density * integrand(kx, ky, kz, omega).

    Works in fixed-order slabs along the first grid axis to bound memory;
    ``integrand`` returns an array of shape (m, *slab).
    """
    shape = tuple(grid.shape)
    weights = np.broadcast_to(np.asarray(grid.weights, dtype=float), shape)
    photons = [tuple(np.broadcast_to(a, shape) for a in vecs) for vecs in _photon_vectors(grid)]
    total = None
    for i0 in range(0, shape[0], CHUNK):
        sl = slice(i0, i0 + CHUNK)
        wd = weights[sl] * density[sl]
        for vecs in photons:
            vals = integrand(*(a[sl] for a in vecs))
            part = np.array([np.sum(v * wd) for v in vals])
            total = part if total is None else total + part
    return total / len(photons)


def packet_moments(p: WavePacket) -> tuple[float, np.ndarray, float]:
    """Per-photon (E, P, E - |P|) from the marginal density."""
    dens = marginal_density(p)
    grid = p.grid
    e, px, py, pz = _chunked_sum(grid, dens, lambda kx, ky, kz, w: (w, kx, ky, kz))
    momentum = np.array([px, py, pz])
    pmag = float(np.linalg.norm(momentum))
    if pmag == 0.0:
        return float(e), momentum, float(e)
    n = momentum / pmag

    def excess(kx, ky, kz, w):
        kn = kx * n[0] + ky * n[1] + kz * n[2]
        cx = ky * n[2] - kz * n[1]
        cy = kz * n[0] - kx * n[2]
        cz = kx * n[1] - ky * n[0]
        perp2 = cx * cx + cy * cy + cz * cz
        with np.errstate(divide="ignore", invalid="ignore"):
            stable = perp2 / (w + kn)
        return (np.where(kn > 0.0, stable, w - kn),)

    (ex,) = _chunked_sum(grid, dens, excess)
    return float(e), momentum, float(ex)


def check_coverage(p: WavePacket) -> None:
    tail = p.info.get("tail_mass")
    if tail is not None and tail > TAIL_TOL:
        raise CoverageError(f"analytic tail mass {tail:.2e} outside the grid")
    if isinstance(p.grid, (SphericalKGrid, CartesianKGrid)):
        frac = p.grid.boundary_fraction(np.sum(np.abs(p.amplitude) ** 2, axis=0))
        if frac > TAIL_TOL:
            raise CoverageError(f"{frac:.2e} of the packet sits at the grid boundary")


def observables_packet(p: WavePacket, grid=None, hbar: float = 1.0) -> Observables:
    """Observables of a normalized packet, <n> times the marginal moments."""
    if grid is not None and grid != p.grid:
        raise ArgumentError("grid does not match the packet's grid")
    if not is_normalized(p):
        raise ContractError(f"packet is not normalized (norm = {p.norm!r})")
    check_coverage(p)
    e, mom, ex = packet_moments(p)
    pmag = float(np.linalg.norm(mom))
    beta = pmag / e if e > 0.0 else 0.0
    scale = hbar * p.mean_photons
    return Observables.from_moments(scale * e, scale * mom, scale * ex, beta)


# ---------------------------------------------------------------------------
# Volume scaling and the biphoton estimate
# ---------------------------------------------------------------------------

def gaussian_rms_width(sigma: float) -> float:
    """Per-axis rms width of |Phi(r)|^2 for the Gaussian packet, 1/(sqrt(2) sigma)."""
    return 1.0 / (math.sqrt(2.0) * sigma)


@dataclass(frozen=True)
class VolumeScalingRow:
    scale: float
    sigma: float
    volume_cbrt: float
    mass: float

    @property
    def product(self) -> float:
        return self.mass * self.volume_cbrt


@dataclass(frozen=True)
class VolumeScalingTable:
    rows: tuple[VolumeScalingRow, ...]
    tolerance: float
    spread: float | None = None
    constant: bool | None = None


def volume_scaling_check(scales: Iterable[float], k0_over_sigma: float = 20.0,
                         sigma_ref: float = 1.0, direction=(0.0, 0.0, 1.0),
                         tol: float = 0.03, grid_kwargs: dict | None = None) -> VolumeScalingTable:
    """Quadrature mass times V^(1/3) over the family sigma = sigma_ref / a.

    V^(1/3) is the rms localization width of the packet in coordinate
    space, so V scales as a^3. ``constant`` is None for a single member.
    """
    grid_kwargs = dict(grid_kwargs or {})
    unit = np.asarray(direction, dtype=float)
    unit = unit / np.linalg.norm(unit)
    rows = []
    for a in scales:
        if not a > 0.0:
            raise DomainError("scales must be positive")
        sigma = sigma_ref / a
        spec = GaussianPacketSpec(tuple(k0_over_sigma * sigma * unit), sigma)
        grid = SphericalKGrid.for_gaussian(spec.k0, sigma, **grid_kwargs)
        obs = observables_packet(make_gaussian_packet(spec, grid))
        rows.append(VolumeScalingRow(float(a), sigma, gaussian_rms_width(sigma), obs.mass))
    if len(rows) < 2:
        return VolumeScalingTable(tuple(rows), tol)
    products = np.array([r.product for r in rows])
    spread = float((products.max() - products.min()) / products.mean())
    return VolumeScalingTable(tuple(rows), tol, spread, spread <= tol)


@dataclass(frozen=True)
class BiphotonEstimate:
    mass: float
    schmidt_number: float
    mass_floor: float
    in_regime: bool
    log_argument_valid: bool = True


def biphoton_mass_estimate(spec: BiphotonSpec, hbar: float = 1.0) -> BiphotonEstimate:
    """Schmidt-number estimate (hbar K / 2 w_p) sqrt(ln(pi L / 2 n_o lambda_p) / pi).

    K is taken as 2 pi w_p sqrt(n_o) / sqrt(L lambda_p) exactly, so the
    estimate is order-of-magnitude only. ``mass_floor`` is hbar / (2 w_p).
    """
    K = spec.schmidt_number
    log_arg = math.log(math.pi * spec.L / (2.0 * spec.n_o * spec.lambda_p))
    valid = log_arg > 0.0
    mass = hbar * K / (2.0 * spec.w_p) * math.sqrt(max(log_arg, 0.0) / math.pi)
    if not spec.in_regime:
        warnings.warn("biphoton parameters are outside the wide-pump regime", RuntimeWarning,
                      stacklevel=2)
    return BiphotonEstimate(mass, K, hbar / (2.0 * spec.w_p), spec.in_regime, valid)


def gaussian_beta_leading(k0: float, sigma: float) -> float:
    """Leading-order speed sqrt(1 - sigma^2 / k0^2)."""
    _check_gaussian(k0, sigma)
    return math.sqrt(max(1.0 - (sigma / k0) ** 2, 0.0))


def gaussian_beta_exact(k0: float, sigma: float) -> float:
    """k0 / E with the full erf energy."""
    return k0 / closed_form_gaussian_energy(k0, sigma)
