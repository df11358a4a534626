"""Lorentz boosts of packets and the rest-frame spherical-harmonic basis.

A packet with nonzero invariant mass m has a rest frame moving with
velocity beta = |P|/H along its mean momentum. Amplitudes transform as
psi'(k') = psi(k) sqrt(omega_k / omega_k'), which preserves the
one-particle norm because d^3k' / omega' = d^3k / omega. Polarization is
carried along unchanged (no Wigner rotation).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .errors import (ArgumentError, ContractError, CoverageError,
                     DegenerateStateError)
from .kspace import (CartesianKGrid, SphericalKGrid, angular_synthesis,
                     angular_transform, channel_list)
from .observables import ZERO_MOMENTUM_RTOL, observables_packet, packet_moments
from .states import TAIL_TOL, WavePacket, is_normalized

MASS_FLOOR = 1e-8
REST_RTOL = 1e-6
TRUNCATION_WARN = 1e-3
EXCLUDED_MASS = 1e-12


class TruncationWarning(RuntimeWarning):
    """The angular expansion misses more than the warning threshold."""


@dataclass(frozen=True)
class BoostParameters:
    """Pure boost into a frame moving with speed ``beta`` along ``direction``.

    ``one_minus_beta`` is kept separately so that ultra-relativistic
    boosts do not lose precision.
    """

    gamma: float
    direction: tuple[float, float, float]
    beta: float
    one_minus_beta: float

    @property
    def rapidity(self) -> float:
        return math.asinh(self.gamma * self.beta)

    @property
    def gamma_beta(self) -> float:
        return self.gamma * self.beta

    @classmethod
    def identity(cls) -> "BoostParameters":
        return cls(1.0, (0.0, 0.0, 0.0), 0.0, 1.0)

    @classmethod
    def from_moments(cls, energy: float, momentum, excess: float) -> "BoostParameters":
        """Rest-frame boost of a state with moments H, P and H - |P|."""
        p = np.asarray(momentum, dtype=float)
        pmag = float(np.linalg.norm(p))
        m2 = excess * (energy + pmag)
        if not m2 > 0.0 or math.sqrt(m2) <= MASS_FLOOR:
            raise DegenerateStateError("state has no rest frame (mass below floor)")
        if pmag <= ZERO_MOMENTUM_RTOL * energy:
            return cls.identity()
        m = math.sqrt(m2)
        return cls(energy / m, tuple(float(c) for c in p / pmag), pmag / energy, excess / energy)

    def inverse(self) -> "BoostParameters":
        return BoostParameters(self.gamma, tuple(-c for c in self.direction), self.beta,
                               self.one_minus_beta)

    def as_dict(self) -> dict:
        return {"gamma": self.gamma, "direction": list(self.direction), "beta": self.beta,
                "rapidity": self.rapidity}


def transform_wavevectors(kx, ky, kz, params: BoostParameters):
    """Map lab wave vectors into the moving frame; returns (kx', ky', kz', omega').

    Uses omega - k_par = k_perp^2 / (omega + k_par) for forward modes and
    the stored 1 - beta, so nearly collinear modes keep full precision.
    """
    n = np.asarray(params.direction)
    # hypot avoids underflow of squared components
    omega = np.hypot(np.hypot(kx, ky), kz)
    if params.beta == 0.0:
        return kx, ky, kz, omega
    kpar = kx * n[0] + ky * n[1] + kz * n[2]
    cx = ky * n[2] - kz * n[1]
    cy = kz * n[0] - kx * n[2]
    cz = kx * n[1] - ky * n[0]
    perp = np.hypot(np.hypot(cx, cy), cz)
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.where(kpar > 0.0, perp * (perp / (omega + kpar)), omega - kpar)
    g, omb = params.gamma, params.one_minus_beta
    omega_new = g * (gap + omb * kpar)
    kpar_new = g * (omb * omega - gap)
    shift = kpar_new - kpar
    return kx + shift * n[0], ky + shift * n[1], kz + shift * n[2], omega_new


def _resampler(p: WavePacket):
    """Callable (kx, ky, kz) -> amplitude, exact for closed forms."""
    if p.source is not None:
        return p.evaluate
    grid = p.grid
    amp = p.amplitude
    if isinstance(grid, SphericalKGrid):
        k, _ = grid.radial
        u, _ = grid.polar
        pad = 3
        wrapped = np.concatenate([amp[..., -pad:], amp, amp[..., :pad]], axis=-1)
        rot = grid.rotation

        def sample(kx, ky, kz):
            local = np.einsum("ba,b...->a...", rot, np.stack(np.broadcast_arrays(kx, ky, kz)))
            r = np.sqrt(np.sum(local ** 2, axis=0))
            with np.errstate(invalid="ignore", divide="ignore"):
                cu = np.where(r > 0.0, local[2] / r, 1.0)
            phi = np.mod(np.arctan2(local[1], local[0]), 2.0 * math.pi)
            coords = np.stack([
                np.interp(r, k, np.arange(k.size), left=0.0, right=k.size - 1),
                np.interp(cu, u, np.arange(u.size)),
                phi / grid.azimuth[1] + pad,
            ])
            out = np.stack([ndimage.map_coordinates(a, coords, order=3, mode="nearest")
                            for a in wrapped])
            return np.where(r <= grid.k_max, out, 0.0)
        return sample
    if isinstance(grid, CartesianKGrid):
        def sample(kx, ky, kz):
            kx, ky, kz = np.broadcast_arrays(kx, ky, kz)
            coords = np.stack([(c + grid.k_ext) / grid.dk for c in (kx, ky, kz)])
            return np.stack([ndimage.map_coordinates(a, coords, order=3, mode="constant", cval=0.0)
                             for a in amp])
        return sample
    raise ArgumentError(f"cannot boost a packet on {type(grid).__name__}")


def boost(p: WavePacket, params: BoostParameters, target_grid: SphericalKGrid) -> WavePacket:
    """Boost ``p`` into the frame described by ``params`` and sample it on ``target_grid``.

    Closed-form packets stay closed-form (the pull-back is composed with
    the original source); sampled packets are resampled by cubic splines.
    The result is not renormalized; a drop in norm signals lost coverage.
    """
    inverse = params.inverse()
    psi = _resampler(p)

    def source(kx, ky, kz):
        lx, ly, lz, omega_lab = transform_wavevectors(kx, ky, kz, inverse)
        omega_new = np.sqrt(kx * kx + ky * ky + kz * kz)
        with np.errstate(invalid="ignore", divide="ignore"):
            jac = np.where(omega_new > 0.0, np.sqrt(omega_lab / omega_new), 1.0)
        return psi(lx, ly, lz) * jac

    info = {"boost": params.as_dict(), "parent": p.info}
    out = WavePacket(target_grid, p.photons, p.kind, source=source, info=info)
    frac = target_grid.boundary_fraction(np.sum(np.abs(out.amplitude) ** 2, axis=0))
    if frac > TAIL_TOL:
        raise CoverageError(f"boosted packet reaches the target grid edge ({frac:.2e})")
    return out


def rest_grid_for(p: WavePacket, params: BoostParameters, n_k: int | None = None,
                  n_theta: int | None = None, n_phi: int | None = None) -> SphericalKGrid:
    """Spherical grid sized to hold the boosted packet.

    k_max is the smallest rest-frame frequency beyond which at most 1e-12
    of the lab-grid mass lands, plus a 5% margin. The radial count defaults
    to max(256, 2 n_k) of the lab grid because boosting compresses the
    packet towards small |k'|.
    """
    grid = p.grid
    dens = np.sum(np.abs(p.amplitude) ** 2, axis=0) * np.broadcast_to(grid.weights, grid.shape)
    kx, ky, kz = (np.broadcast_to(c, grid.shape) for c in grid.wavevectors)
    _, _, _, omega_new = transform_wavevectors(kx, ky, kz, params)
    order = np.argsort(omega_new, axis=None)[::-1]
    tail = np.cumsum(dens.ravel()[order]) / np.sum(dens)
    cut = int(np.searchsorted(tail, EXCLUDED_MASS))
    k_max = 1.05 * float(omega_new.ravel()[order[min(cut, order.size - 1)]])
    lab_nk = getattr(grid, "n_k", grid.shape[0])
    axis = params.direction if params.beta > 0.0 else (0.0, 0.0, 1.0)
    return SphericalKGrid(n_k or max(256, 2 * lab_nk),
                          n_theta or getattr(grid, "n_theta", 64),
                          n_phi or getattr(grid, "n_phi", 64), k_max, axis)


def boost_to_rest_frame(p: WavePacket, grid=None,
                        target_grid: SphericalKGrid | None = None
                        ) -> tuple[WavePacket, BoostParameters]:
    """Boost a normalized packet into the frame where its mean momentum vanishes."""
    if grid is not None and grid != p.grid:
        raise ArgumentError("grid does not match the packet's grid")
    if not is_normalized(p):
        raise ContractError("packet must be normalized before boosting")
    e, mom, ex = packet_moments(p)
    params = BoostParameters.from_moments(e, mom, ex)
    if params.beta == 0.0 and target_grid is None:
        return p, params
    target = target_grid or rest_grid_for(p, params)
    rest = boost(p, params, target)
    if abs(rest.norm - p.norm) > 1e-8:
        raise CoverageError(f"boost changed the norm by {rest.norm - p.norm:.2e}")
    return rest, params


# ---------------------------------------------------------------------------
# Angular decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AngularDecomposition:
    """Coefficients beta_{l,j}(k_r) on the radial nodes of a spherical grid.

    ``coefficients`` has shape (n_pol, n_channels, n_k) with channel index
    l^2 + l + j. ``residual`` is 1 - (Parseval sum / packet norm) when the
    decomposition came from a packet.
    """

    grid: SphericalKGrid
    l_max: int
    coefficients: np.ndarray
    photons: tuple[int, ...] = (1,)
    residual: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim == 2:
            c = c[None]
        if c.shape[1:] != ((self.l_max + 1) ** 2, self.grid.n_k):
            raise ArgumentError(f"coefficient shape {c.shape} does not match l_max and grid")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @staticmethod
    def channel(l: int, j: int) -> int:
        return l * l + l + j

    def coefficient(self, l: int, j: int, s: int = 0) -> np.ndarray:
        if l > self.l_max or abs(j) > l:
            raise ArgumentError(f"channel ({l}, {j}) not in the decomposition")
        return self.coefficients[s, self.channel(l, j)]

    def channel_weights(self) -> np.ndarray:
        """sum_s integral |beta_{l,j}|^2 k^2 dk per channel."""
        return np.sum(np.abs(self.coefficients) ** 2 * self.grid.radial_measure, axis=(0, 2))

    def parseval_sum(self) -> float:
        return float(np.sum(self.channel_weights()))

    def fixed_mass_slice(self, k_m: float) -> np.ndarray:
        """beta_{l,j}(k_m) for every channel, by cubic spline in k_r."""
        k, _ = self.grid.radial
        if not k[0] <= k_m <= k[-1]:
            raise ArgumentError("k_m outside the radial nodes")
        spline = CubicSpline(k, self.coefficients, axis=-1)
        return spline(k_m)

    @classmethod
    def shell_state(cls, grid: SphericalKGrid, node: int, coefficients: dict,
                    l_max: int) -> "AngularDecomposition":
        """Fixed-mass shell state at the radial node ``node``.

        ``coefficients`` maps (l, j) to c_{l,j}; the radial profile is a
        discrete delta normalized so that the mode-space norm is
        sum |c_{l,j}|^2 and the mass label is k_m = grid.radial[0][node].
        """
        k, w = grid.radial
        beta = np.zeros((1, (l_max + 1) ** 2, grid.n_k), dtype=complex)
        amp = 1.0 / math.sqrt(grid.radial_measure[node])
        for (l, j), c in coefficients.items():
            if l > l_max or abs(j) > l:
                raise ArgumentError(f"invalid channel ({l}, {j})")
            beta[0, cls.channel(l, j), node] = c * amp
        return cls(grid, l_max, beta, info={"k_m": float(k[node])})

    def to_table(self, sep: str = " ") -> str:
        """Columns l, j, k_r, re_beta, im_beta (plus a leading s if polarized)."""
        k, _ = self.grid.radial
        multi = self.coefficients.shape[0] > 1
        header = (["s"] if multi else []) + ["l", "j", "k_r", "re_beta", "im_beta"]
        lines = [sep.join(header)]
        for s in range(self.coefficients.shape[0]):
            for l, j in channel_list(self.l_max):
                row = self.coefficients[s, self.channel(l, j)]
                for kr, b in zip(k, row):
                    cols = ([str(s)] if multi else []) + [
                        str(l), str(j), f"{kr:.17g}", f"{b.real:.17g}", f"{b.imag:.17g}"]
                    lines.append(sep.join(cols))
        return "\n".join(lines) + "\n"


def shell_grid(k_m: float, n_k: int = 64, n_theta: int = 64, n_phi: int = 64,
               node: int | None = None) -> tuple[SphericalKGrid, int]:
    """Spherical grid with a radial node placed at k_m; returns (grid, node)."""
    from numpy.polynomial.legendre import leggauss
    x, _ = leggauss(n_k)
    node = n_k // 2 if node is None else node
    k_max = k_m / (0.5 * (x[node] + 1.0))
    return SphericalKGrid(n_k, n_theta, n_phi, k_max), node


def decompose(p: WavePacket, l_max: int = 16, check_rest: bool = True) -> AngularDecomposition:
    """Spherical-harmonic coefficients beta_{l,j}(k_r) of a rest-frame packet."""
    if not isinstance(p.grid, SphericalKGrid):
        raise ArgumentError("decomposition needs a packet on a SphericalKGrid")
    if check_rest:
        obs = observables_packet(p)
        if np.linalg.norm(obs.momentum) > REST_RTOL * max(obs.mass, MASS_FLOOR):
            raise ContractError(f"packet is not at rest: |P| = {np.linalg.norm(obs.momentum):.3e}, "
                                f"m = {obs.mass:.3e}")
    coeffs = angular_transform(p.amplitude, p.grid, l_max)
    d = AngularDecomposition(p.grid, l_max, coeffs, p.photons)
    norm = p.norm
    residual = 1.0 - d.parseval_sum() / norm if norm > 0.0 else 0.0
    if residual > TRUNCATION_WARN:
        warnings.warn(f"angular truncation at l_max={l_max} misses {residual:.2e} of the norm",
                      TruncationWarning, stacklevel=2)
    return AngularDecomposition(p.grid, l_max, coeffs, p.photons, residual,
                                {"truncation_residual": residual})


def reconstruct(d: AngularDecomposition) -> WavePacket:
    """psi(k) = sum_{l,j} beta_{l,j}(k_r) Y_{l,j}(theta, phi) on the decomposition grid."""
    samples = angular_synthesis(d.coefficients, d.grid, d.l_max)
    return WavePacket(d.grid, d.photons, "custom", samples=samples,
                      info={"reconstructed_l_max": d.l_max})


def _check_pair(d1: AngularDecomposition, d2: AngularDecomposition) -> None:
    if d1.grid != d2.grid:
        raise ArgumentError("decompositions use different radial grids")
    if d1.l_max != d2.l_max:
        raise ArgumentError("decompositions use different l_max")
    if d1.coefficients.shape != d2.coefficients.shape:
        raise ArgumentError("decompositions have different polarization structure")


def scalar_product_modes(d1: AngularDecomposition, d2: AngularDecomposition) -> complex:
    """sum_{l,j} integral conj(beta1) beta2 k^2 dk."""
    _check_pair(d1, d2)
    return complex(np.sum(np.conj(d1.coefficients) * d2.coefficients * d1.grid.radial_measure))


def energy_in_modes(d: AngularDecomposition, hbar: float = 1.0) -> float:
    """sum_s n_s sum_{l,j} integral hbar k |beta_{l,j,s}|^2 k^2 dk."""
    k, _ = d.grid.radial
    n_pol = d.coefficients.shape[0]
    n = np.broadcast_to(np.asarray(d.photons, dtype=float), (n_pol,))
    per_pol = np.sum(np.abs(d.coefficients) ** 2 * (k * d.grid.radial_measure), axis=(1, 2))
    return hbar * float(np.dot(n, per_pol))
