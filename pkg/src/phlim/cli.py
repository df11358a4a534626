"""Command-line front end: ``phlim run`` and ``phlim compare``.

Exit status is 0 on success, 2 for malformed input or unsupported
requests and 3 when a numerical contract (coverage, degeneracy, window,
rest frame) is violated. Nothing is written unless the run succeeds.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
import warnings

import numpy as np

from . import __version__
from . import detection, observables, restframe, states
from .errors import ArgumentError, CapabilityError, NumericalContractError, PhlimError
from .kspace import SphericalKGrid
from .specdoc import ResolvedSpec, load, resolve
from .units import UnitSystem

log = logging.getLogger("phlim")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

# Unit kind of every numeric key that may appear in an echoed block.
KEY_KINDS = {
    "k0": "wavenumber", "sigma": "wavenumber", "k": "wavenumber", "k_max": "wavenumber",
    "k_ext": "wavenumber", "sum_extent": "wavenumber", "diff_extent": "wavenumber",
    "k_deg": "wavenumber",
    "r0": "length", "w_p": "length", "L": "length", "lambda_p": "length", "planes": "length",
    "box_length": "length",
    "omega0": "angular_frequency",
    "half_width": "time",
    "theta": "angle", "relative_phase": "angle", "phase": "angle",
    "photons": "count", "n": "count", "n_sum": "count", "n_diff": "count", "s": "count",
    "n_k": "count", "n_theta": "count", "n_phi": "count", "cartesian_n": "count",
    "n_t": "count", "l_max": "count", "seed": "count",
}

TOLERANCES = {
    "normalization": states.NORM_TOL,
    "tail_mass": states.TAIL_TOL,
    "zero_momentum_relative": observables.ZERO_MOMENTUM_RTOL,
    "mass_clamp_relative": observables.MASS_CLAMP_RTOL,
    "rest_frame_relative": restframe.REST_RTOL,
    "rest_mass_floor": restframe.MASS_FLOOR,
    "boost_norm_change": 1e-8,
    "truncation_warning": restframe.TRUNCATION_WARN,
    "field_edge_fraction": detection.EDGE_TOL,
    "plane_flux_at_window_ends": detection.PLANE_EDGE_TOL,
    "toa_min_vz": detection.TOA_MIN_VZ,
}


def _label(value, units: UnitSystem, kind: str | None = None, key: str | None = None):
    """Attach unit labels to every numeric leaf of an echoed structure."""
    kind = KEY_KINDS.get(key, kind) if key is not None else kind
    if isinstance(value, dict):
        return {k: _label(v, units, kind=None, key=k) for k, v in value.items()}
    if isinstance(value, bool) or isinstance(value, str) or value is None:
        return value
    if isinstance(value, (int, float)):
        return units.out(value, kind or "dimensionless")
    if isinstance(value, (list, tuple)):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return units.out(list(value), kind or "dimensionless")
        return [_label(v, units, kind) for v in value]
    raise TypeError(f"cannot label {type(value).__name__}")


def _na(reason: str) -> dict:
    return {"value": None, "unit": "c", "status": "not_applicable", "reason": reason}


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------

class Context:
    """Lazily built packets shared by the tasks of one run."""

    def __init__(self, spec: ResolvedSpec, units: UnitSystem):
        self.spec = spec
        self.units = units
        self._packets: dict = {}
        self.sidecars: dict[str, str] = {}

    def packet(self, cartesian: bool = False) -> states.WavePacket:
        if not self.spec.is_packet:
            raise CapabilityError(f"a {self.spec.kind} state has no packet amplitude")
        if cartesian and self.spec.kind == "biphoton":
            raise CapabilityError("detection needs a Cartesian grid; biphotons use their own grid")
        if cartesian not in self._packets:
            self._packets[cartesian] = self.spec.packet(cartesian)
        return self._packets[cartesian]


def _observables_block(obs: observables.Observables, u: UnitSystem, photons: float) -> dict:
    return {
        "energy": u.out(obs.energy, "energy"),
        "momentum": u.out(list(obs.momentum), "momentum"),
        "mass": u.out(obs.mass, "mass"),
        "beta": u.out(obs.beta, "speed"),
        "direction": u.out(list(obs.direction), "dimensionless"),
        "mass_clamped": obs.mass_clamped,
        "mean_photons": u.out(photons, "count"),
    }


def _grid_block(grid, u: UnitSystem) -> dict:
    params = dict(grid.params())
    params.pop("type", None)
    return _label(params, u)


def task_observables(ctx: Context, params: dict) -> dict:
    u = ctx.units
    if not ctx.spec.is_packet:
        state = ctx.spec.discrete_state()
        obs = observables.observables_discrete(state)
        photons = sum(w * sum(m.n for m in cfg) for cfg, w in zip(state.terms, state.weights))
        return {"observables": _observables_block(obs, u, photons), "method": "pairwise_sum"}
    p = ctx.packet()
    obs = observables.observables_packet(p)
    density = np.sum(np.abs(p.amplitude) ** 2, axis=0)
    diagnostics = {
        "grid": _grid_block(p.grid, u),
        "norm_minus_one": u.out(p.norm - 1.0, "dimensionless"),
        "boundary_fraction": u.out(p.grid.boundary_fraction(density), "dimensionless"),
    }
    if p.info.get("tail_mass") is not None:
        diagnostics["tail_mass"] = u.out(p.info["tail_mass"], "dimensionless")
    return {"observables": _observables_block(obs, u, p.mean_photons), "method": "quadrature",
            "diagnostics": diagnostics}


def _gaussian_oracle(g: states.GaussianPacketSpec, u: UnitSystem) -> dict:
    k0 = g.k0.magnitude()
    if k0 == 0.0:
        energy = 2.0 * g.sigma / math.sqrt(math.pi)
        return {"energy_per_photon": u.out(energy, "energy"),
                "mass_per_photon": u.out(energy, "mass"),
                "beta_exact": u.out(0.0, "speed"), "beta_leading": u.out(0.0, "speed"),
                "asymptote_valid": False}
    m = observables.closed_form_gaussian_mass(k0, g.sigma)
    return {
        "energy_per_photon": u.out(observables.closed_form_gaussian_energy(k0, g.sigma), "energy"),
        "mass_per_photon": u.out(m.mass, "mass"),
        "mass_asymptote": u.out(m.asymptote, "mass"),
        "asymptote_valid": m.asymptote_valid,
        "beta_exact": u.out(observables.gaussian_beta_exact(k0, g.sigma), "speed"),
        "beta_leading": u.out(observables.gaussian_beta_leading(k0, g.sigma), "speed"),
    }


def task_oracle(ctx: Context, params: dict) -> dict:
    u = ctx.units
    spec = ctx.spec
    st = spec.state
    if spec.kind == "gaussian":
        return {"closed_form": _gaussian_oracle(spec.gaussian_specs()[0], u)}
    if spec.kind == "discrete":
        if "two_mode" in st:
            tm = st["two_mode"]
            mass = observables.closed_form_two_mode_mass(tm["n"], tm["omega0"], tm["theta"])
            return {"closed_form": {"mass": u.out(mass, "mass")}}
        obs = observables.observables_discrete(spec.discrete_state())
        return {"closed_form": {"mass": u.out(obs.mass, "mass"),
                                "energy": u.out(obs.energy, "energy")}}
    if spec.kind == "biphoton":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = observables.biphoton_mass_estimate(spec.biphoton_spec())
        return {"closed_form": {"mass_estimate": u.out(est.mass, "mass"),
                                "schmidt_number": u.out(est.schmidt_number, "dimensionless"),
                                "mass_floor": u.out(est.mass_floor, "mass"),
                                "in_regime": est.in_regime,
                                "log_argument_valid": est.log_argument_valid}}
    return {"closed_form": {"status": "not_applicable",
                            "reason": "no closed form for a superposition",
                            "components": [_gaussian_oracle(g, u) for g in spec.gaussian_specs()]}}


def _estimate_block(est: detection.VelocityEstimate, u: UnitSystem) -> dict:
    out = {"value": u.out(est.value, "speed"), "samples": u.out(est.samples, "count"),
           "window": u.out(list(est.window), "time")}
    if est.kind == "centroid_slope":
        out["rms_residual"] = u.out(est.residual, "length")
        out["velocity"] = u.out(list(est.velocity), "speed")
    else:
        out["flux_mismatch"] = u.out(est.residual, "dimensionless")
    return out


def _run_detection(ctx: Context, params: dict) -> detection.DetectionResult:
    p = ctx.packet(cartesian=True)
    return detection.detect(p, params.get("planes"), params.get("n_t", 16),
                            params.get("half_width"))


def task_detect(ctx: Context, params: dict) -> dict:
    u = ctx.units
    res = _run_detection(ctx, params)
    p = ctx.packet(cartesian=True)
    out = {"grid": _grid_block(p.grid, u),
           "box_length": u.out(p.grid.box_length, "length"),
           "centroid": _estimate_block(res.centroid, u),
           "analytic_velocity": u.out(list(res.analytic_velocity), "speed")}
    if res.toa is None:
        out["toa"] = _na("packet has no motion along +z")
    else:
        out["toa"] = _estimate_block(res.toa, u)
        out["planes"] = u.out(list(res.planes), "length")
        out["records"] = [{"z": u.out(r.z, "length"),
                           "normalization_over_reference":
                               u.out(r.normalization / r.reference, "dimensionless"),
                           "time_samples": u.out(r.t.size, "count")} for r in res.records]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"t [{u.label('time')}]", f"x [{u.label('length')}]",
                f"y [{u.label('length')}]", f"z [{u.label('length')}]"])
    ft, fl = u.factor("time"), u.factor("length")
    for t, x, y, z in res.centroid.track:
        w.writerow([repr(t * ft), repr(x * fl), repr(y * fl), repr(z * fl)])
    ctx.sidecars["centroid_track"] = buf.getvalue()
    if params.get("records") and res.records:
        for i, rec in enumerate(res.records, 1):
            rbuf = io.StringIO()
            tt, xx, yy = np.meshgrid(rec.t, rec.x, rec.y, indexing="ij")
            table = np.column_stack([xx.ravel() * fl, yy.ravel() * fl, tt.ravel() * ft,
                                     rec.p.ravel()])
            np.savetxt(rbuf, table, delimiter=",", fmt="%.17g", comments="",
                       header=f"x [{u.label('length')}],y [{u.label('length')}],"
                              f"t [{u.label('time')}],p [1/({u.label('length')}^2*"
                              f"{u.label('time')})]")
            ctx.sidecars[f"plane{i}"] = rbuf.getvalue()
    return out


def task_decompose(ctx: Context, params: dict) -> dict:
    u = ctx.units
    p = ctx.packet()
    if not isinstance(p.grid, SphericalKGrid):
        raise CapabilityError("decomposition needs a packet on a spherical grid")
    rest, boost = restframe.boost_to_rest_frame(p)
    obs = observables.observables_packet(rest)
    dec = restframe.decompose(rest, params["l_max"])
    weights = dec.channel_weights()
    per_l = [float(np.sum(weights[l * l:(l + 1) ** 2])) for l in range(dec.l_max + 1)]
    ctx.sidecars["decomposition"] = dec.to_table(sep=",")
    return {
        "boost": {"gamma": u.out(boost.gamma, "dimensionless"),
                  "beta": u.out(boost.beta, "speed"),
                  "rapidity": u.out(boost.rapidity, "dimensionless"),
                  "direction": u.out(list(boost.direction), "dimensionless")},
        "rest_grid": _grid_block(rest.grid, u),
        "rest_observables": _observables_block(obs, u, rest.mean_photons),
        "l_max": u.out(dec.l_max, "count"),
        "truncation_residual": u.out(dec.residual, "dimensionless"),
        "power_per_l": u.out(per_l, "dimensionless"),
        "energy_in_modes": u.out(restframe.energy_in_modes(dec), "energy"),
        "sidecar_units": "natural",
    }


TASKS = {
    "observables": task_observables,
    "oracle": task_oracle,
    "detect": task_detect,
    "decompose": task_decompose,
}


# ---------------------------------------------------------------------------
# Compare
# ---------------------------------------------------------------------------

def compare_betas(ctx: Context) -> dict:
    """Quadrature, closed-form, centroid and time-of-arrival speeds side by side."""
    u = ctx.units
    spec = ctx.spec
    if not spec.is_packet or spec.kind == "biphoton":
        raise CapabilityError("compare needs a Gaussian packet or a superposition of two")
    betas: dict[str, float | None] = {}
    betas["quadrature"] = observables.observables_packet(ctx.packet()).beta
    if spec.kind == "gaussian":
        g = spec.gaussian_specs()[0]
        k0 = g.k0.magnitude()
        betas["closed_form"] = observables.gaussian_beta_exact(k0, g.sigma) if k0 > 0 else 0.0
    else:
        betas["closed_form"] = None
    res = _run_detection(ctx, {})
    betas["centroid"] = res.centroid.value
    betas["toa"] = res.toa.value if res.toa is not None else None
    table = {}
    for name, val in betas.items():
        if val is None:
            table[name] = _na("closed form undefined for a superposition" if name == "closed_form"
                              else "packet has no motion along +z")
        else:
            table[name] = u.out(val, "speed")
    deviations = {}
    names = list(betas)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if betas[a] is None or betas[b] is None:
                continue
            diff = betas[a] - betas[b]
            scale = max(abs(betas[a]), abs(betas[b]))
            deviations[f"{a}-{b}"] = {
                "absolute": u.out(diff, "speed"),
                "relative": u.out(diff / scale if scale > 0.0 else 0.0, "dimensionless"),
            }
    return {"betas": table, "deviations": deviations,
            "detection_grid": _grid_block(ctx.packet(cartesian=True).grid, u)}


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _flatten(obj, prefix: str = ""):
    """(key, value, unit) rows for the CSV rendering of a report."""
    if isinstance(obj, dict):
        if "unit" in obj and "value" in obj:
            v = obj["value"]
            v = ";".join(repr(x) for x in v) if isinstance(v, list) else ("" if v is None else repr(v))
            yield prefix, v, obj["unit"]
            for k in sorted(obj):
                if k not in ("unit", "value"):
                    yield from _flatten(obj[k], f"{prefix}.{k}")
            return
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, "" if obj is None else str(obj).lower() if isinstance(obj, bool) else str(obj), ""


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value", "unit"])
    for row in _flatten(report):
        w.writerow(row)
    return buf.getvalue()


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".phlim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sidecar_path(out: str, name: str) -> str:
    return f"{out}.{name}.csv"


def _parse_grid(text: str | None):
    if text is None:
        return None
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ArgumentError(f"--grid expects three integers nk,ntheta,nphi, got {text!r}") from None
    if len(vals) != 3 or min(vals) < 2:
        raise ArgumentError(f"--grid expects three integers >= 2, got {text!r}")
    return vals


def build_report(command: str, args) -> tuple[dict, dict[str, str]]:
    """Run a command and return (report, sidecars); raises on any failure."""
    doc = load(args.spec)
    if args.lmax is not None and args.lmax < 0:
        raise ArgumentError("--lmax must be non-negative")
    spec = resolve(doc, _parse_grid(args.grid), args.lmax)
    out_units = UnitSystem(args.units or spec.input_units.system, spec.input_units.k_ref)
    ctx = Context(spec, out_units)
    report = {
        "tool": {"name": "phlim", "version": __version__},
        "command": command,
        "units": {"system": out_units.system,
                  "k_ref": {"value": out_units.k_ref, "unit": "1/m"}},
        "flags": {"format": args.format, "grid": args.grid, "lmax": args.lmax,
                  "seed": None if args.seed is None else _label(args.seed, out_units, "count")},
        "spec": {"input_units": spec.input_units.system,
                 "state": _label(spec.state, out_units),
                 "grid": _label(spec.grid, out_units),
                 "tasks": [{"op": t["op"], "params": _label(t["params"], out_units)}
                           for t in spec.tasks]},
        "tolerances": _label(TOLERANCES, out_units, "dimensionless"),
    }
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if command == "run":
            results = []
            for t in spec.tasks:
                log.info("task %s", t["op"])
                block = TASKS[t["op"]](ctx, t["params"])
                results.append({"op": t["op"], **block})
            report["results"] = results
        else:
            report["compare"] = compare_betas(ctx)
    report["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    for msg in report["warnings"]:
        log.warning(msg)
    return report, ctx.sidecars


def _execute(command: str, args) -> int:
    start = time.perf_counter()
    try:
        report, sidecars = build_report(command, args)
        text = render(report, args.format)
    except (ArgumentError, CapabilityError) as exc:
        print(f"phlim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalContractError as exc:
        print(f"phlim: numerical contract violated ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PhlimError as exc:
        print(f"phlim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    elapsed = time.perf_counter() - start
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    try:
        for name, body in sidecars.items():
            _atomic_write(_sidecar_path(args.out, name), body)
        timing = {"wall_clock": {"value": elapsed, "unit": "s"}, "version": __version__}
        _atomic_write(f"{args.out}.timing.json", json.dumps(timing, sort_keys=True) + "\n")
        _atomic_write(args.out, text)
    except OSError as exc:
        print(f"phlim: error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="state-spec JSON document")
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--units", choices=("si", "natural"),
                        help="output unit system (default: that of the spec)")
    common.add_argument("--grid", metavar="NK,NTHETA,NPHI",
                        help="override the spherical grid sizes")
    common.add_argument("--lmax", type=int, help="angular cutoff for decompose tasks")
    common.add_argument("--seed", type=int, help="reserved; echoed in the report")
    common.add_argument("--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="phlim",
                                     description="Invariant mass and speed of photon states.")
    parser.add_argument("--version", action="version", version=f"phlim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="execute the tasks of a spec document")
    sub.add_parser("compare", parents=[common], help="compare the speed estimates of a packet")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    return _execute(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
