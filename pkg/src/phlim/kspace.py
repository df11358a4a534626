"""Wave-vector space: points, quadrature grids and spherical harmonics.

Everything here works in natural units (hbar = c = 1) with wavenumbers
measured in a caller-chosen reference ``k_ref``; the photon dispersion is
then simply ``omega(k) = |k|``.

Two grid families are provided. :class:`SphericalKGrid` is the workhorse
for moment integrals and angular decompositions (Gauss-Legendre in the
radius and in cos(theta), trapezoid in phi, optionally rotated so that the
polar axis follows a carrier direction). :class:`CartesianKGrid` is the
FFT-conjugate box used for field synthesis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ArgumentError, CapabilityError, DomainError

L_MAX_DEFAULT = 32


@dataclass(frozen=True)
class KVec3:
    """A single wave vector (kx, ky, kz) in units of ``k_ref``."""

    kx: float
    ky: float
    kz: float

    def __post_init__(self):
        for name in ("kx", "ky", "kz"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    @classmethod
    def of(cls, k) -> "KVec3":
        if isinstance(k, KVec3):
            return k
        kx, ky, kz = (float(c) for c in k)
        return cls(kx, ky, kz)

    def as_array(self) -> np.ndarray:
        return np.array([self.kx, self.ky, self.kz])

    def magnitude(self) -> float:
        return math.hypot(self.kx, self.ky, self.kz)

    def frequency(self) -> float:
        """Vacuum dispersion omega = c|k| with c = 1."""
        return self.magnitude()

    def unit(self) -> np.ndarray:
        mag = self.magnitude()
        if mag == 0.0:
            return np.zeros(3)
        return self.as_array() / mag


def frequency(k: np.ndarray) -> np.ndarray:
    """|k| along the leading axis of a (3, ...) array."""
    k = np.asarray(k, dtype=float)
    return np.sqrt(k[0] ** 2 + k[1] ** 2 + k[2] ** 2)


def frame_for_axis(axis) -> np.ndarray:
    """Orthonormal matrix whose third column is ``axis``.

    Columns are (e1, e2, e3) with e3 the normalized axis, so ``R @ local``
    maps grid-local coordinates to lab coordinates. The +z axis maps to the
    exact identity.
    """
    a = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(a)
    if not np.isfinite(norm) or norm == 0.0:
        raise ArgumentError("axis must be a finite nonzero 3-vector")
    e3 = a / norm
    if e3[0] == 0.0 and e3[1] == 0.0 and e3[2] > 0.0:
        return np.eye(3)
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, e3) * e3
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.column_stack([e1, e2, e3])


def _check_lj(l: int, j: int, l_max: int) -> None:
    if l < 0:
        raise DomainError(f"l must be >= 0, got {l}")
    if abs(j) > l:
        raise DomainError(f"|j| must not exceed l (l={l}, j={j})")
    if l > l_max:
        raise CapabilityError(f"l={l} exceeds the configured l_max={l_max}")


def normalized_legendre(l_max: int, u) -> np.ndarray:
    """Normalized associated Legendre functions by upward recurrence.

    Returns ``P[l, j, ...]`` for 0 <= j <= l <= l_max with

        P[l, j] = sqrt((2l+1)(l-j)! / (4 pi (l+j)!)) * P_l^j(u)

    where ``P_l^j`` carries no Condon-Shortley phase. Entries with j > l
    are zero.
    """
    if l_max < 0:
        raise DomainError("l_max must be >= 0")
    u = np.asarray(u, dtype=float)
    s = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    out = np.zeros((l_max + 1, l_max + 1) + u.shape)
    out[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for j in range(1, l_max + 1):
        out[j, j] = math.sqrt((2 * j + 1) / (2.0 * j)) * s * out[j - 1, j - 1]
    for j in range(0, l_max):
        out[j + 1, j] = math.sqrt(2 * j + 3) * u * out[j, j]
    for j in range(0, l_max + 1):
        for l in range(j + 2, l_max + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - j * j))
            b = math.sqrt(((l - 1.0) ** 2 - j * j) / (4.0 * (l - 1.0) ** 2 - 1.0))
            out[l, j] = a * (u * out[l - 1, j] - b * out[l - 2, j])
    return out


def _harmonic_phase(j: int) -> float:
    # Y_{l,j} = (-1)^j Pbar e^{ij phi} for j >= 0; Y_{l,-j} = (-1)^j conj(Y_{l,j})
    # leaves no sign for negative orders.
    return -1.0 if (j > 0 and j % 2) else 1.0


def spherical_harmonic(l: int, j: int, theta, phi, l_max: int = L_MAX_DEFAULT):
    """Y_{l,j}(theta, phi), orthonormal on the unit sphere.

    Non-negative orders carry the (-1)^j phase in front of the normalized
    Legendre function; negative orders follow Y_{l,-j} = (-1)^j conj(Y_{l,j}).
    Accepts scalars or broadcastable arrays; returns complex.
    """
    _check_lj(l, j, l_max)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any((theta < 0.0) | (theta > math.pi)):
        raise DomainError("theta must lie in [0, pi]")
    pbar = normalized_legendre(l, np.cos(theta))[l, abs(j)]
    value = _harmonic_phase(j) * pbar * np.exp(1j * j * phi)
    return value[()] if value.ndim == 0 else value


def channel_list(l_max: int) -> list[tuple[int, int]]:
    """(l, j) pairs in canonical order: l ascending, j from -l to l."""
    return [(l, j) for l in range(l_max + 1) for j in range(-l, l + 1)]


@dataclass(frozen=True, eq=False)
class SphericalKGrid:
    """Product quadrature over the ball |k| <= k_max.

    Radial nodes are Gauss-Legendre on [0, k_max] (weights include k^2),
    polar nodes are Gauss-Legendre in u = cos(theta), azimuthal nodes are
    uniform with trapezoid weights 2 pi / n_phi. The polar axis may be
    rotated onto any direction; angles are always grid-local.
    """

    n_k: int = 128
    n_theta: int = 64
    n_phi: int = 64
    k_max: float = 1.0
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        for name in ("n_k", "n_theta", "n_phi"):
            if int(getattr(self, name)) < 1:
                raise ArgumentError(f"{name} must be positive")
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (math.isfinite(self.k_max) and self.k_max > 0.0):
            raise ArgumentError("k_max must be positive and finite")
        object.__setattr__(self, "k_max", float(self.k_max))
        ax = np.asarray(self.axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        object.__setattr__(self, "axis", tuple(float(a) for a in ax))

    @classmethod
    def for_gaussian(cls, k0, sigma: float, n_k: int = 128, n_theta: int | None = None,
                     n_phi: int = 64, tail_sigmas: float = 8.0) -> "SphericalKGrid":
        """Grid aligned with a carrier, k_max = |k0| + tail_sigmas * sigma.

        The polar count defaults to 64 and doubles for every doubling of
        |k0|/sigma beyond 10, since the angular width shrinks as sigma/|k0|.
        """
        k0 = KVec3.of(k0)
        if n_theta is None:
            ratio = k0.magnitude() / sigma
            n_theta = 64 * 2 ** max(0, math.ceil(math.log2(ratio / 10.0))) if ratio > 10 else 64
        axis = k0.as_array() if k0.magnitude() > 0.0 else (0.0, 0.0, 1.0)
        return cls(n_k, n_theta, n_phi, k0.magnitude() + tail_sigmas * sigma, axis)

    def doubled(self) -> "SphericalKGrid":
        return SphericalKGrid(2 * self.n_k, 2 * self.n_theta, 2 * self.n_phi,
                              self.k_max, self.axis)

    def params(self) -> dict:
        return {"type": "spherical", "n_k": self.n_k, "n_theta": self.n_theta,
                "n_phi": self.n_phi, "k_max": self.k_max, "axis": list(self.axis)}

    def __eq__(self, other):
        return isinstance(other, SphericalKGrid) and self.params() == other.params()

    def __hash__(self):
        return hash((self.n_k, self.n_theta, self.n_phi, self.k_max, self.axis))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_k, self.n_theta, self.n_phi)

    @cached_property
    def radial(self) -> tuple[np.ndarray, np.ndarray]:
        """Radial nodes and plain Gauss-Legendre weights (no k^2)."""
        x, w = leggauss(self.n_k)
        return 0.5 * self.k_max * (x + 1.0), 0.5 * self.k_max * w

    @cached_property
    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes u = cos(theta) in ascending order, and weights."""
        return leggauss(self.n_theta)

    @cached_property
    def azimuth(self) -> tuple[np.ndarray, float]:
        return 2.0 * math.pi * np.arange(self.n_phi) / self.n_phi, 2.0 * math.pi / self.n_phi

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(self.polar[0])

    @cached_property
    def radial_measure(self) -> np.ndarray:
        """w_k * k^2, the radial part of d^3k."""
        k, w = self.radial
        return w * k * k

    @cached_property
    def angular_weights(self) -> np.ndarray:
        """(n_theta, n_phi) solid-angle weights."""
        _, wu = self.polar
        _, wphi = self.azimuth
        return np.repeat(wu[:, None] * wphi, self.n_phi, axis=1)

    @cached_property
    def weights(self) -> np.ndarray:
        return self.radial_measure[:, None, None] * self.angular_weights[None, :, :]

    @cached_property
    def rotation(self) -> np.ndarray:
        return frame_for_axis(self.axis)

    @cached_property
    def local_wavevectors(self) -> np.ndarray:
        k, _ = self.radial
        u, _ = self.polar
        phi, _ = self.azimuth
        s = np.sqrt(1.0 - u * u)
        kk = k[:, None, None]
        return np.stack([
            kk * (s[:, None] * np.cos(phi)[None, :])[None],
            kk * (s[:, None] * np.sin(phi)[None, :])[None],
            kk * np.broadcast_to(u[:, None], (self.n_theta, self.n_phi))[None],
        ])

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """(3, n_k, n_theta, n_phi) lab-frame node coordinates."""
        local = self.local_wavevectors
        if np.array_equal(self.rotation, np.eye(3)):
            return local
        return np.einsum("ab,b...->a...", self.rotation, local)

    @cached_property
    def frequency(self) -> np.ndarray:
        k, _ = self.radial
        return np.broadcast_to(k[:, None, None], self.shape)

    def integrate(self, f) -> complex | float:
        return integrate_spherical(f, self)

    def boundary_fraction(self, density: np.ndarray, shells: int = 4) -> float:
        """Share of ``density`` carried by the outermost radial shells."""
        dens = np.abs(np.asarray(density))
        total = float(np.sum(dens * self.weights))
        if total == 0.0:
            return 0.0
        outer = float(np.sum(dens[-shells:] * self.weights[-shells:]))
        return outer / total


@dataclass(frozen=True, eq=False)
class CartesianKGrid:
    """Uniform FFT box: n^3 samples on [-k_ext, k_ext)^3.

    The conjugate coordinate grid has spacing dr = 2 pi / (n dk) and
    spans a periodic box of side L = 2 pi / dk.
    """

    n: int
    k_ext: float

    def __post_init__(self):
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise ArgumentError(f"n must be a power of two, got {self.n}")
        if not (math.isfinite(self.k_ext) and self.k_ext > 0.0):
            raise ArgumentError("k_ext must be positive and finite")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k_ext", float(self.k_ext))

    @classmethod
    def for_gaussian(cls, k0, sigma: float, n: int = 256,
                     tail_sigmas: float = 8.0) -> "CartesianKGrid":
        k0 = KVec3.of(k0)
        return cls(n, float(np.max(np.abs(k0.as_array()))) + tail_sigmas * sigma)

    def doubled(self) -> "CartesianKGrid":
        """Twice the samples per axis over the same coordinate box (dr halved)."""
        return CartesianKGrid(2 * self.n, 2.0 * self.k_ext)

    def refined(self) -> "CartesianKGrid":
        """Twice the samples per axis over the same k extent (dk halved)."""
        return CartesianKGrid(2 * self.n, self.k_ext)

    def params(self) -> dict:
        return {"type": "cartesian", "n": self.n, "k_ext": self.k_ext}

    def __eq__(self, other):
        return isinstance(other, CartesianKGrid) and self.params() == other.params()

    def __hash__(self):
        return hash((self.n, self.k_ext))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def dk(self) -> float:
        return 2.0 * self.k_ext / self.n

    @property
    def dr(self) -> float:
        return 2.0 * math.pi / (self.n * self.dk)

    @property
    def box_length(self) -> float:
        return self.n * self.dr

    @property
    def cell_volume(self) -> float:
        return self.dk ** 3

    @cached_property
    def k_axis(self) -> np.ndarray:
        return -self.k_ext + self.dk * np.arange(self.n)

    @cached_property
    def r_axis(self) -> np.ndarray:
        return self.dr * (np.arange(self.n) - self.n // 2)

    @property
    def weights(self) -> float:
        return self.cell_volume

    @property
    def wavevectors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable (kx, ky, kz) views, axis order (x, y, z)."""
        k = self.k_axis
        return k[:, None, None], k[None, :, None], k[None, None, :]

    @cached_property
    def frequency(self) -> np.ndarray:
        kx, ky, kz = self.wavevectors
        return np.sqrt(kx * kx + ky * ky + kz * kz)

    def integrate(self, f) -> complex | float:
        f = np.asarray(f)
        if f.shape[-3:] != self.shape:
            raise ArgumentError(f"field shape {f.shape} does not match grid {self.shape}")
        return np.sum(f, axis=(-3, -2, -1)) * self.cell_volume

    def boundary_fraction(self, density: np.ndarray, cells: int = 2) -> float:
        dens = np.abs(np.asarray(density))
        total = float(np.sum(dens))
        if total == 0.0:
            return 0.0
        inner = dens[cells:-cells, cells:-cells, cells:-cells]
        return (total - float(np.sum(inner))) / total


def integrate_spherical(f, grid: SphericalKGrid):
    """Quadrature sum of ``f`` sampled at every node of ``grid``.

    Leading axes beyond the grid shape are kept (e.g. polarization).
    """
    f = np.asarray(f)
    if f.shape[-3:] != grid.shape:
        raise ArgumentError(f"field shape {f.shape} does not match grid {grid.shape}")
    return np.sum(f * grid.weights, axis=(-3, -2, -1))


def angular_transform(f, grid: SphericalKGrid, l_max: int) -> np.ndarray:
    """All radial-resolved coefficients up to ``l_max``.

    Returns an array of shape ``f.shape[:-3] + (n_channels, n_k)`` in
    :func:`channel_list` order, where each entry is the integral of
    ``f(k_r, theta, phi) * conj(Y_{l,j})`` over the sphere.
    """
    f = np.asarray(f)
    if f.shape[-3:] != grid.shape:
        raise ArgumentError(f"field shape {f.shape} does not match grid {grid.shape}")
    if l_max > L_MAX_DEFAULT:
        raise CapabilityError(f"l_max={l_max} exceeds {L_MAX_DEFAULT}")
    if grid.n_phi <= 2 * l_max:
        raise ArgumentError(f"n_phi={grid.n_phi} aliases azimuthal orders up to {l_max}; "
                            f"need n_phi > {2 * l_max}")
    u, wu = grid.polar
    pbar = normalized_legendre(l_max, u)
    # F_j(k, u) = int f e^{-i j phi} dphi
    fj = np.fft.fft(f, axis=-1) * (2.0 * math.pi / grid.n_phi)
    lead = f.shape[:-3]
    out = np.empty(lead + (len(channel_list(l_max)), grid.n_k), dtype=complex)
    for idx, (l, j) in enumerate(channel_list(l_max)):
        weight = _harmonic_phase(j) * pbar[l, abs(j)] * wu
        out[..., idx, :] = np.tensordot(fj[..., j % grid.n_phi], weight, axes=([-1], [0]))
    return out


def angular_project(f, grid: SphericalKGrid, l: int, j: int,
                    l_max: int = L_MAX_DEFAULT) -> np.ndarray:
    """beta_{l,j}(k_r) for every radial node of ``grid``."""
    _check_lj(l, j, l_max)
    coeffs = angular_transform(f, grid, l)
    return coeffs[..., channel_list(l).index((l, j)), :]


def angular_synthesis(coeffs: np.ndarray, grid: SphericalKGrid, l_max: int) -> np.ndarray:
    """Inverse of :func:`angular_transform`: sum_{l,j} beta_{l,j}(k_r) Y_{l,j}."""
    coeffs = np.asarray(coeffs)
    channels = channel_list(l_max)
    if coeffs.shape[-2:] != (len(channels), grid.n_k):
        raise ArgumentError(f"coefficient shape {coeffs.shape} does not match "
                            f"l_max={l_max} on a grid with n_k={grid.n_k}")
    u, _ = grid.polar
    phi, _ = grid.azimuth
    pbar = normalized_legendre(l_max, u)
    lead = coeffs.shape[:-2]
    out = np.zeros(lead + grid.shape, dtype=complex)
    for j in range(-l_max, l_max + 1):
        # G_j(k, u) = sum_l beta_{l,j}(k) * phase * Pbar_l^{|j|}(u)
        g = np.zeros(lead + (grid.n_k, grid.n_theta), dtype=complex)
        for l in range(abs(j), l_max + 1):
            idx = l * l + l + j
            g += coeffs[..., idx, :, None] * (_harmonic_phase(j) * pbar[l, abs(j)])
        out += g[..., None] * np.exp(1j * j * phi)
    return out
