"""Simulated photodetection: field synthesis, detector-plane records, velocities.

The detected intensity is the equal-point first-order correlation of a
scalar field model,

    Phi(r, t) = integral sqrt(k) psi(k) exp(i (k.r - omega_k t)) d^3k,

evaluated on the FFT box conjugate to a :class:`CartesianKGrid`. Constant
prefactors are dropped; every record is normalized downstream. With this
weighting the intensity centroid moves with velocity <P>/<H> exactly, which
is what the estimators here measure.

Only the support of the amplitude (samples above 1e-12 of the peak) is
kept, so time evolution costs one exponential per support point and plane
records need a 2D rather than a 3D transform.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft

from .errors import (ArgumentError, ConditioningError, CoverageError,
                     OrderingError, WindowError)
from .kspace import CartesianKGrid, KVec3
from .states import WavePacket

EDGE_CELLS = 4
EDGE_TOL = 1e-6
PLANE_EDGE_TOL = 1e-4
SUPPORT_RTOL = 1e-24  # on |psi|^2 relative to its peak
SLAB = 16
RASTER_HEADER = 64


class NonlinearityWarning(RuntimeWarning):
    """Centroid track deviates from a straight line by more than the threshold."""


def fft_workers() -> int:
    """Thread count for transforms, from PHLIM_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("PHLIM_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Support extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PacketSupport:
    """Nonnegligible samples of sqrt(k) psi(k) on a Cartesian grid.

    ``index`` holds flat indices into the n^3 box in C order, ``psi``
    has shape (n_pol, m) and ``values`` adds the sqrt(k) weight.
    """

    grid: CartesianKGrid
    index: np.ndarray
    psi: np.ndarray
    omega: np.ndarray
    kz: np.ndarray

    @classmethod
    def of(cls, p: WavePacket) -> "PacketSupport":
        grid = p.grid
        if not isinstance(grid, CartesianKGrid):
            raise ArgumentError("field synthesis needs a packet on a CartesianKGrid")
        n = grid.n
        k = grid.k_axis
        idx_parts, val_parts = [], []
        peak = 0.0
        for sl, amp in p.source_slabs(SLAB):
            dens = np.sum(np.abs(amp) ** 2, axis=0)
            peak = max(peak, float(dens.max()))
            keep = np.flatnonzero(dens >= SUPPORT_RTOL * peak) if peak > 0.0 else np.array([], int)
            idx_parts.append(keep + sl.start * n * n)
            val_parts.append(amp.reshape(amp.shape[0], -1)[:, keep])
        index = np.concatenate(idx_parts)
        values = np.concatenate(val_parts, axis=1)
        dens = np.sum(np.abs(values) ** 2, axis=0)
        keep = dens >= SUPPORT_RTOL * peak
        index, values = index[keep], values[:, keep]
        ix, rem = np.divmod(index, n * n)
        iy, iz = np.divmod(rem, n)
        kx, ky, kz = k[ix], k[iy], k[iz]
        omega = np.sqrt(kx * kx + ky * ky + kz * kz)
        return cls(grid, index, values, omega, kz)

    @cached_property
    def values(self) -> np.ndarray:
        return self.psi * np.sqrt(self.omega)

    @property
    def n_pol(self) -> int:
        return self.values.shape[0]

    def evolved(self, t: float) -> np.ndarray:
        """Values times exp(-i omega t)."""
        if t == 0.0:
            return self.values
        return self.values * np.exp(-1j * self.omega * t)

    @cached_property
    def columns(self) -> np.ndarray:
        """Flat (kx, ky) index of each support point."""
        return self.index // self.grid.n

    def _plane_from(self, weighted: np.ndarray) -> np.ndarray:
        n = self.grid.n
        scale = float(n) ** 2 * self.grid.cell_volume
        total = np.zeros((n, n))
        for v in weighted:
            g = (np.bincount(self.columns, weights=np.ascontiguousarray(v.real), minlength=n * n)
                 + 1j * np.bincount(self.columns, weights=np.ascontiguousarray(v.imag),
                                    minlength=n * n)).reshape(n, n)
            f = fft.fftshift(fft.ifft2(fft.ifftshift(g), workers=fft_workers()))
            total += np.abs(f * scale) ** 2
        return total

    def plane(self, z: float, t: float) -> np.ndarray:
        """Intensity |Phi|^2 on the plane z at time t, shape (n, n) in (x, y)."""
        phase = np.exp(1j * (self.kz * z - self.omega * t))
        return self._plane_from(self.values * phase)

    def plane_series(self, z: float, t: np.ndarray) -> np.ndarray:
        """Planes at equally spaced times, shape (n_t, n, n).

        The evolution phase is advanced by repeated multiplication with
        exp(-i omega dt), which avoids one complex exponential per sample.
        """
        t = np.asarray(t, dtype=float)
        current = self.values * np.exp(1j * (self.kz * z - self.omega * t[0]))
        if t.size == 1:
            return self._plane_from(current)[None]
        step = np.exp(-1j * self.omega * (t[1] - t[0]))
        out = np.empty((t.size, self.grid.n, self.grid.n))
        for i in range(t.size):
            if i:
                current *= step
            out[i] = self._plane_from(current)
        return out

    @cached_property
    def density(self) -> np.ndarray:
        """|psi|^2 summed over polarizations on the support."""
        return np.sum(np.abs(self.psi) ** 2, axis=0)

    @property
    def shifted_index(self) -> np.ndarray:
        """Flat indices after ifftshift, i.e. in FFT frequency order."""
        n = self.grid.n
        ix, rem = np.divmod(self.index, n * n)
        iy, iz = np.divmod(rem, n)
        h = n // 2
        return (((ix + h) % n) * n + (iy + h) % n) * n + (iz + h) % n

    def energy_per_norm(self) -> float:
        d = self.density
        return float(np.sum(d * self.omega) / np.sum(d))

    def plane_flux_per_norm(self) -> float:
        """integral |psi|^2 k^2 / |k_z| over the norm.

        Integrating |Phi|^2 over a whole plane and all times gives
        (2 pi)^3 times this, since the time integral fixes omega and
        d omega / d k_z = k_z / k.
        """
        d = self.density
        live = self.kz != 0.0
        return float(np.sum(d[live] * self.omega[live] ** 2 / np.abs(self.kz[live])) / np.sum(d))


# ---------------------------------------------------------------------------
# Field frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FieldFrame:
    """Field Phi(r, t) on the coordinate grid conjugate to ``grid``.

    ``field`` has shape (n_pol, n, n, n); axes are (x, y, z) with
    coordinates ``grid.r_axis`` and spacing dr = 2 pi / (n dk).
    """

    field: np.ndarray
    t: float
    grid: CartesianKGrid

    @property
    def dr(self) -> float:
        return self.grid.dr

    @property
    def r_axis(self) -> np.ndarray:
        return self.grid.r_axis

    @property
    def intensity(self) -> np.ndarray:
        return np.sum(np.abs(self.field) ** 2, axis=0)

    def summary(self, cells: int = EDGE_CELLS) -> dict:
        """Integral, centroid and edge fraction of |Phi|^2."""
        inten = self.intensity
        r = self.r_axis
        total = float(inten.sum())
        centroid = np.array([np.dot(r, inten.sum(axis=(1, 2))), np.dot(r, inten.sum(axis=(0, 2))),
                             np.dot(r, inten.sum(axis=(0, 1)))]) / total
        inner = float(inten[cells:-cells, cells:-cells, cells:-cells].sum())
        return {"integral": total * self.dr ** 3, "centroid": centroid,
                "edge_fraction": (total - inner) / total}


def _fft_field(support: PacketSupport, t: float, pol: int, box: np.ndarray | None = None
               ) -> np.ndarray:
    """Phi for one polarization in FFT order (r index m maps to r_axis[(m + n/2) % n])."""
    grid = support.grid
    n = grid.n
    if box is None:
        box = np.zeros((n, n, n), dtype=complex)
    else:
        box.fill(0.0)
    vals = support.values[pol]
    if t != 0.0:
        vals = vals * np.exp(-1j * support.omega * t)
    box.ravel()[support.shifted_index] = vals
    box = fft.ifftn(box, overwrite_x=True, workers=fft_workers())
    box *= float(n) ** 3 * grid.cell_volume
    return box


def _summary_fft_order(support: PacketSupport, t: float, cells: int = EDGE_CELLS) -> dict:
    """Integral, centroid and edge fraction of |Phi|^2 without reordering the box."""
    grid = support.grid
    n = grid.n
    r = fft.ifftshift(grid.r_axis)
    inner_axis = np.zeros(n, dtype=bool)
    inner_axis[cells:n - cells] = True
    inner_axis = fft.ifftshift(inner_axis)
    total = 0.0
    first = np.zeros(3)
    inner = 0.0
    box = None
    for pol in range(support.n_pol):
        box = _fft_field(support, t, pol, box)
        for i0 in range(0, n, SLAB):
            sl = slice(i0, i0 + SLAB)
            slab = box[sl].real ** 2 + box[sl].imag ** 2
            total += float(slab.sum())
            first[0] += float(np.dot(r[sl], slab.sum(axis=(1, 2))))
            first[1] += float(np.dot(r, slab.sum(axis=(0, 2))))
            first[2] += float(np.dot(r, slab.sum(axis=(0, 1))))
            keep = inner_axis[sl]
            if keep.any():
                inner += float(slab[keep][:, inner_axis][:, :, inner_axis].sum())
    del box
    centroid = first / total if total > 0.0 else np.zeros(3)
    edge = (total - inner) / total if total > 0.0 else 0.0
    return {"integral": total * grid.dr ** 3, "centroid": centroid, "edge_fraction": edge}


def synthesize_field(p: WavePacket, t: float, check: bool = True,
                     support: PacketSupport | None = None) -> FieldFrame:
    """Phi(r, t) by a 3D inverse FFT of sqrt(k) psi(k) exp(-i omega t).

    Raises CoverageError when more than 1e-6 of |Phi|^2 lies within four
    cells of the box edge, the signature of wrap-around aliasing.
    """
    support = support or PacketSupport.of(p)
    fields = np.stack([fft.fftshift(_fft_field(support, float(t), s))
                       for s in range(support.n_pol)])
    frame = FieldFrame(fields, float(t), support.grid)
    if check:
        edge = frame.summary()["edge_fraction"]
        if edge > EDGE_TOL:
            raise CoverageError(f"{edge:.2e} of the field lies near the box edge at t={t}")
    return frame


# ---------------------------------------------------------------------------
# Plane records
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IntensityRecord:
    """Normalized detection density p_z(x, y, t) on the plane z.

    ``p`` has shape (n_t, n_x, n_y) and sums to one against dx dy dt.
    ``normalization`` is the integral before normalization; ``reference``
    is its value for a window holding the complete transit,
    (2 pi)^3 integral |psi|^2 k^2 / |k_z| per unit norm.
    """

    z: float
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    normalization: float
    reference: float
    meta: dict = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 1.0

    @property
    def cell(self) -> float:
        return self.dx * float(self.y[1] - self.y[0]) * self.dt

    def total(self) -> float:
        return float(np.sum(self.p) * self.cell)

    def mean_time(self) -> float:
        return float(np.dot(self.t, np.sum(self.p, axis=(1, 2))) * self.cell)

    def to_csv(self, path) -> None:
        """Columns x, y, t, p, one row per sample."""
        tt, xx, yy = np.meshgrid(self.t, self.x, self.y, indexing="ij")
        table = np.column_stack([xx.ravel(), yy.ravel(), tt.ravel(), self.p.ravel()])
        np.savetxt(path, table, delimiter=",", header="x,y,t,p", comments="", fmt="%.17g")

    def to_raster(self, path) -> None:
        """64-byte JSON header, then little-endian float64 samples in (t, x, y) order."""
        header = json.dumps({"shape": list(self.p.shape), "order": "txy", "units": "natural"},
                            separators=(",", ":"), sort_keys=True).encode()
        if len(header) > RASTER_HEADER - 1:
            raise ArgumentError("raster header does not fit in 64 bytes")
        with open(path, "wb") as fh:
            fh.write(header.ljust(RASTER_HEADER - 1) + b"\n")
            fh.write(np.ascontiguousarray(self.p, dtype="<f8").tobytes())


def read_raster(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.read(RASTER_HEADER).decode().strip())
        data = np.frombuffer(fh.read(), dtype="<f8")
    return header, data.reshape(header["shape"])


def _check_window_ends(support: PacketSupport, t: np.ndarray) -> None:
    for te in (float(t[0]), float(t[-1])):
        edge = _summary_fft_order(support, te)["edge_fraction"]
        if edge > EDGE_TOL:
            raise WindowError(f"packet is not contained in the box at t={te} "
                              f"(edge fraction {edge:.2e})")


def intensity_record(p: WavePacket, z: float, t, check: bool = True,
                     support: PacketSupport | None = None) -> IntensityRecord:
    """Sample |Phi|^2 on the plane z over the time grid ``t``.

    The plane spans the full transverse box. The transit must be inside
    the window: the plane flux at both window ends has to be below 1e-4 of
    its peak (the field has algebraic tails, so a stricter bound would be
    unreachable in a finite box) and the packet must stay clear of the box
    edge.
    """
    support = support or PacketSupport.of(p)
    grid = support.grid
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 3 or np.any(np.diff(t) <= 0.0):
        raise ArgumentError("t must be an increasing grid of at least 3 times")
    if not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0.0):
        raise ArgumentError("t must be equally spaced")
    half = 0.5 * grid.box_length
    if not -half <= z < half:
        raise WindowError(f"plane z={z} lies outside the box [-{half}, {half})")
    planes = support.plane_series(z, t)
    flux = planes.sum(axis=(1, 2))
    if check:
        peak = float(flux.max())
        if peak <= 0.0 or max(flux[0], flux[-1]) > PLANE_EDGE_TOL * peak:
            raise WindowError("transit through the plane is not contained in the time window")
        _check_window_ends(support, t)
    cell = grid.dr ** 2 * float(t[1] - t[0])
    raw = float(np.sum(planes) * cell)
    if not raw > 0.0:
        raise WindowError("no signal on the detector plane")
    reference = (2.0 * math.pi) ** 3 * support.plane_flux_per_norm()
    r = grid.r_axis
    return IntensityRecord(float(z), r.copy(), r.copy(), t, planes / raw, raw, reference,
                           {"grid": grid.params()})


def transit_window(p: WavePacket, z: float, half_width: float | None = None,
                   support: PacketSupport | None = None) -> np.ndarray:
    """Equally spaced times covering the passage of the packet through plane z.

    The window is centred on the arrival of the centroid, (z - z_c)/v_z,
    and by default spans the time in which the centroid travels L/4 either
    way. The step resolves the fastest beat of the intensity,
    pi / (omega_max - omega_min).
    """
    support = support or PacketSupport.of(p)
    grid = support.grid
    vz = float(_centroid_velocity_analytic(support)[2])
    if vz <= 0.0:
        raise WindowError("packet does not move towards +z")
    r = fft.ifftshift(grid.r_axis)
    prof = np.zeros(grid.n)
    for pol in range(support.n_pol):
        box = _fft_field(support, 0.0, pol)
        prof += np.sum(box.real ** 2 + box.imag ** 2, axis=(0, 1))
        del box
    zc = float(np.dot(r, prof) / prof.sum())
    t_c = (z - zc) / vz
    half = half_width if half_width is not None else 0.25 * grid.box_length / vz
    dt = math.pi / float(support.omega.max() - support.omega.min())
    n_t = 2 * math.ceil(half / dt) + 1
    return np.linspace(t_c - half, t_c + half, n_t)


def _centroid_velocity_analytic(support: PacketSupport) -> np.ndarray:
    # |sqrt(k) psi|^2 weighted mean of k/omega: sum |psi|^2 k / sum |psi|^2 omega
    grid = support.grid
    n = grid.n
    k = grid.k_axis
    ix, rem = np.divmod(support.index, n * n)
    iy, iz = np.divmod(rem, n)
    w = support.density
    e = float(np.sum(w * support.omega))
    return np.array([np.sum(w * k[ix]), np.sum(w * k[iy]), np.sum(w * k[iz])]) / e


# ---------------------------------------------------------------------------
# Velocity estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityEstimate:
    """A speed estimate in units of c with its fit diagnostics."""

    kind: str
    value: float
    residual: float
    window: tuple[float, float]
    samples: int
    velocity: tuple[float, float, float] | None = None
    track: tuple[tuple[float, float, float, float], ...] = ()

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "value": self.value, "residual": self.residual,
               "window": list(self.window), "samples": self.samples}
        if self.velocity is not None:
            out["velocity"] = list(self.velocity)
        return out


def estimate_velocity_centroid(p: WavePacket, t=None, n_t: int = 16,
                               support: PacketSupport | None = None) -> VelocityEstimate:
    """Least-squares slope of the 3D intensity centroid against time.

    The default window is ``n_t`` equally spaced times over [-L/8, L/8]
    with L the box length, i.e. at most a quarter box of travel. A
    residual above 1e-3 L triggers a NonlinearityWarning.
    """
    support = support or PacketSupport.of(p)
    grid = support.grid
    if t is None:
        half = grid.box_length / 8.0
        t = np.linspace(-half, half, n_t)
    t = np.asarray(t, dtype=float)
    if t.size < 8:
        raise ArgumentError("the centroid fit needs at least 8 time samples")
    centroids = []
    for ti in t:
        summ = _summary_fft_order(support, float(ti))
        if summ["edge_fraction"] > EDGE_TOL:
            raise CoverageError(f"field reaches the box edge at t={ti} "
                                f"({summ['edge_fraction']:.2e})")
        centroids.append(summ["centroid"])
    c = np.array(centroids)
    design = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(design, c, rcond=None)
    slope = coef[1]
    resid = float(np.sqrt(np.mean(np.sum((design @ coef - c) ** 2, axis=1))))
    if resid > 1e-3 * grid.box_length:
        warnings.warn(f"centroid track is not linear (rms residual {resid:.3e})",
                      NonlinearityWarning, stacklevel=2)
    track = tuple((float(ti), *(float(v) for v in ci)) for ti, ci in zip(t, c))
    return VelocityEstimate("centroid_slope", float(np.linalg.norm(slope)), resid,
                            (float(t[0]), float(t[-1])), int(t.size),
                            tuple(float(v) for v in slope), track)


def estimate_velocity_toa(rec1: IntensityRecord, rec2: IntensityRecord) -> VelocityEstimate:
    """(z2 - z1) / (<t>_2 - <t>_1) from mean arrival times on two planes.

    This measures the z-component of the mean velocity only.
    """
    if rec2.z <= rec1.z:
        raise ArgumentError("the second plane must lie downstream (z2 > z1)")
    dt = rec2.mean_time() - rec1.mean_time()
    if dt <= 0.0:
        raise OrderingError(f"mean arrival at z2 is not later than at z1 (dt = {dt:.3e})")
    value = (rec2.z - rec1.z) / dt
    residual = abs(rec2.normalization / rec1.normalization - 1.0)
    return VelocityEstimate("plane_toa", float(value), float(residual),
                            (float(min(rec1.t[0], rec2.t[0])), float(max(rec1.t[-1], rec2.t[-1]))),
                            int(rec1.t.size + rec2.t.size))


def toa_slope_analytic(p: WavePacket, support: PacketSupport | None = None) -> float:
    """Plane-ToA speed predicted from the amplitude alone.

    Arrival-time moments at a plane give
    1/v = integral |psi|^2 k^3/k_z^2 / integral |psi|^2 k^2/k_z over k_z > 0.
    """
    support = support or PacketSupport.of(p)
    dens = support.density
    fwd = support.kz > 0.0
    k, kz, d = support.omega[fwd], support.kz[fwd], dens[fwd]
    return float(np.sum(d * k * k / kz) / np.sum(d * k ** 3 / kz ** 2))


def dispersion_gradient_check(k) -> np.ndarray:
    """Central-difference gradient of omega(k) = |k| with step 1e-5 |k|."""
    k = KVec3.of(k)
    mag = k.magnitude()
    if mag < 1e-3:
        raise ConditioningError(f"|k| = {mag:.3e} is too small for a stable gradient")
    h = 1e-5 * mag
    base = k.as_array()
    grad = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        grad[i] = (np.linalg.norm(base + e) - np.linalg.norm(base - e)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Both estimators on one packet
# ---------------------------------------------------------------------------

TOA_MIN_VZ = 1e-6


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Centroid and plane-ToA estimates for one packet.

    ``toa`` is None when the packet has no motion along +z
    (v_z <= 1e-6), since plane arrival times are then undefined.
    """

    centroid: VelocityEstimate
    toa: VelocityEstimate | None
    planes: tuple[float, float] | None
    records: tuple[IntensityRecord, ...] = ()
    analytic_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)


def detect(p: WavePacket, planes=None, n_t: int = 16, half_width: float | None = None,
           support: PacketSupport | None = None) -> DetectionResult:
    """Run the centroid fit and, when applicable, two-plane time of arrival.

    Default planes sit L/16 either side of the initial centroid along z.
    """
    support = support or PacketSupport.of(p)
    grid = support.grid
    centroid = estimate_velocity_centroid(p, n_t=n_t, support=support)
    v = _centroid_velocity_analytic(support)
    if float(v[2]) <= TOA_MIN_VZ:
        return DetectionResult(centroid, None, None, (), tuple(float(c) for c in v))
    if planes is None:
        zc = float(_summary_fft_order(support, 0.0)["centroid"][2])
        planes = (zc - grid.box_length / 16.0, zc + grid.box_length / 16.0)
    z1, z2 = (float(z) for z in planes)
    recs = tuple(intensity_record(p, z, transit_window(p, z, half_width, support), support=support)
                 for z in (z1, z2))
    toa = estimate_velocity_toa(*recs)
    return DetectionResult(centroid, toa, (z1, z2), recs, tuple(float(c) for c in v))
