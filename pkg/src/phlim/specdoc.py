"""State-spec documents: JSON schema, validation and resolution to objects.

A document looks like::

    {"units": "natural", "state": {"type": "gaussian", "k0": [0, 0, 10], "sigma": 1},
     "grid": {"n_k": 128}, "tasks": [{"op": "observables"}]}

With ``"units": "si"`` wavenumbers are in 1/m, lengths in m, angular
frequencies in rad/s, and ``k_ref`` (1/m) fixes the natural scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import jsonschema

from .errors import SchemaError
from .kspace import CartesianKGrid, KVec3, SphericalKGrid
from .states import (BiphotonGrid, BiphotonSpec, DiscreteModeState, GaussianPacketSpec,
                     ModeOccupation, make_biphoton, make_gaussian_packet, superpose)
from .units import UnitSystem

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_POS = {"type": "number", "exclusiveMinimum": 0}
_COUNT = {"type": "integer", "minimum": 1}

_GAUSSIAN = {
    "type": "object",
    "properties": {
        "type": {"const": "gaussian"},
        "k0": _VEC3,
        "sigma": _POS,
        "r0": _VEC3,
        "photons": _COUNT,
        "polarization": {
            "type": "array", "minItems": 1, "maxItems": 2,
            "items": {"oneOf": [
                {"type": "number"},
                {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            ]},
        },
    },
    "required": ["type", "k0", "sigma"],
    "additionalProperties": False,
}

_MODE = {
    "type": "object",
    "properties": {"k": _VEC3, "s": {"enum": [0, 1]}, "n": _COUNT},
    "required": ["k"],
    "additionalProperties": False,
}

_DISCRETE = {
    "type": "object",
    "properties": {
        "type": {"const": "discrete"},
        "kind": {"enum": ["pure_superposition", "mixed_ensemble"]},
        "terms": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "weight": {"type": "number", "minimum": 0},
                    "phase": {"type": "number"},
                    "modes": {"type": "array", "items": _MODE, "minItems": 1},
                },
                "required": ["weight", "modes"],
                "additionalProperties": False,
            },
        },
        "two_mode": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "minimum": 2, "multipleOf": 2},
                "omega0": _POS,
                "theta": {"type": "number", "minimum": 0, "maximum": math.pi},
                "s": {"enum": [0, 1]},
            },
            "required": ["n", "omega0", "theta"],
            "additionalProperties": False,
        },
    },
    "required": ["type"],
    "oneOf": [{"required": ["terms"]}, {"required": ["two_mode"]}],
    "additionalProperties": False,
}

_BIPHOTON = {
    "type": "object",
    "properties": {
        "type": {"const": "biphoton"},
        "w_p": _POS, "L": _POS, "lambda_p": _POS, "n_o": _POS,
        "n_sum": {"type": "integer", "minimum": 4},
        "n_diff": {"type": "integer", "minimum": 4},
        "sum_extent": _POS, "diff_extent": _POS,
    },
    "required": ["type", "w_p", "L", "lambda_p", "n_o"],
    "additionalProperties": False,
}

_SUPERPOSITION = {
    "type": "object",
    "properties": {
        "type": {"const": "superposition"},
        "a": _GAUSSIAN,
        "b": _GAUSSIAN,
        "relative_phase": {"type": "number"},
    },
    "required": ["type", "a", "b"],
    "additionalProperties": False,
}

OPS = ("observables", "detect", "decompose", "oracle")

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "units": {"enum": ["si", "natural"]},
        "k_ref": _POS,
        "state": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["discrete", "gaussian", "biphoton", "superposition"]}},
            "allOf": [
                {"if": {"properties": {"type": {"const": t}}}, "then": s}
                for t, s in (("gaussian", _GAUSSIAN), ("discrete", _DISCRETE),
                             ("biphoton", _BIPHOTON), ("superposition", _SUPERPOSITION))
            ],
        },
        "grid": {
            "type": "object",
            "properties": {
                "n_k": {"type": "integer", "minimum": 4},
                "n_theta": {"type": "integer", "minimum": 2},
                "n_phi": {"type": "integer", "minimum": 3},
                "k_max": _POS,
                "cartesian_n": {"type": "integer", "minimum": 8},
                "k_ext": _POS,
            },
            "additionalProperties": False,
        },
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "op": {"enum": list(OPS)},
                    "params": {"type": "object"},
                },
                "required": ["op"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["units", "state"],
    "additionalProperties": False,
    "if": {"properties": {"units": {"const": "si"}}},
    "then": {"required": ["k_ref"]},
}

TASK_PARAMS = {
    "observables": {"type": "object", "additionalProperties": False},
    "oracle": {"type": "object", "additionalProperties": False},
    "detect": {
        "type": "object",
        "properties": {
            "planes": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            "n_t": {"type": "integer", "minimum": 8},
            "half_width": _POS,
            "records": {"type": "boolean"},
        },
        "additionalProperties": False,
    },
    "decompose": {
        "type": "object",
        "properties": {"l_max": {"type": "integer", "minimum": 0, "maximum": 32}},
        "additionalProperties": False,
    },
}


def validate(doc) -> None:
    """Raise SchemaError with a readable path if ``doc`` is not a valid spec."""
    try:
        jsonschema.validate(doc, SCHEMA)
        for task in doc.get("tasks", []):
            jsonschema.validate(task.get("params", {}), TASK_PARAMS[task["op"]])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"spec invalid at {where}: {exc.message}") from None


def load(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read spec: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"spec is not valid JSON: {exc}") from None
    validate(doc)
    return doc


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------

def _pol(values) -> tuple[complex, ...]:
    return tuple(complex(v[0], v[1]) if isinstance(v, list) else complex(v) for v in values)


@dataclass
class ResolvedSpec:
    """A validated document converted to natural units, with every default filled."""

    input_units: UnitSystem
    state: dict
    grid: dict
    tasks: list
    extras: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {"units_in": self.input_units.system, "k_ref_per_m": self.input_units.k_ref,
                "state": self.state, "grid": self.grid, "tasks": self.tasks}

    # -- state objects ---------------------------------------------------
    @property
    def kind(self) -> str:
        return self.state["type"]

    @property
    def is_packet(self) -> bool:
        return self.kind in ("gaussian", "superposition", "biphoton")

    def gaussian_specs(self) -> list[GaussianPacketSpec]:
        if self.kind == "gaussian":
            parts = [self.state]
        elif self.kind == "superposition":
            parts = [self.state["a"], self.state["b"]]
        else:
            return []
        return [GaussianPacketSpec(tuple(d["k0"]), d["sigma"], tuple(d["r0"]), d["photons"],
                                   _pol(d["polarization"])) for d in parts]

    def discrete_state(self) -> DiscreteModeState:
        st = self.state
        if "two_mode" in st:
            tm = st["two_mode"]
            return DiscreteModeState.two_mode(tm["n"], tm["omega0"], tm["theta"], tm["s"])
        terms = tuple(tuple(ModeOccupation(KVec3.of(m["k"]), m["s"], m["n"]) for m in t["modes"])
                      for t in st["terms"])
        return DiscreteModeState(terms, tuple(t["weight"] for t in st["terms"]),
                                 tuple(t["phase"] for t in st["terms"]), st["kind"])

    def biphoton_spec(self) -> BiphotonSpec:
        st = self.state
        return BiphotonSpec(st["w_p"], st["L"], st["lambda_p"], st["n_o"], st["n_sum"],
                            st["n_diff"], st["sum_extent"], st["diff_extent"])

    def spherical_grid(self) -> SphericalKGrid:
        g = self.grid
        return SphericalKGrid(g["n_k"], g["n_theta"], g["n_phi"], g["k_max"], tuple(g["axis"]))

    def cartesian_grid(self) -> CartesianKGrid:
        return CartesianKGrid(self.grid["cartesian_n"], self.grid["k_ext"])

    def packet(self, cartesian: bool = False):
        if self.kind == "biphoton":
            spec = self.biphoton_spec()
            return make_biphoton(spec, BiphotonGrid.for_spec(spec))
        grid = self.cartesian_grid() if cartesian else self.spherical_grid()
        specs = self.gaussian_specs()
        packets = [make_gaussian_packet(s, grid) for s in specs]
        if self.kind == "superposition":
            return superpose(packets[0], packets[1], self.state["relative_phase"])
        return packets[0]


def resolve(doc: dict, grid_override: tuple[int, int, int] | None = None,
            lmax_override: int | None = None) -> ResolvedSpec:
    """Convert a validated document to natural units and fill in defaults."""
    units = UnitSystem(doc["units"], float(doc.get("k_ref", 1.0)))
    st = dict(doc["state"])
    nat = units.to_natural

    def gaussian(d):
        return {
            "type": "gaussian",
            "k0": nat(d["k0"], "wavenumber"),
            "sigma": nat(d["sigma"], "wavenumber"),
            "r0": nat(d.get("r0", [0.0, 0.0, 0.0]), "length"),
            "photons": int(d.get("photons", 1)),
            "polarization": [v if isinstance(v, list) else [float(v), 0.0]
                             for v in d.get("polarization", [1.0])],
        }

    kind = st["type"]
    if kind == "gaussian":
        state = gaussian(st)
    elif kind == "superposition":
        state = {"type": "superposition", "a": gaussian(st["a"]), "b": gaussian(st["b"]),
                 "relative_phase": float(st.get("relative_phase", 0.0))}
    elif kind == "biphoton":
        state = {"type": "biphoton"}
        for key in ("w_p", "L", "lambda_p"):
            state[key] = nat(st[key], "length")
        state["n_o"] = float(st["n_o"])
        spec = BiphotonSpec(state["w_p"], state["L"], state["lambda_p"], state["n_o"],
                            int(st.get("n_sum", 48)), int(st.get("n_diff", 24)),
                            nat(st["sum_extent"], "wavenumber") if "sum_extent" in st else None,
                            nat(st["diff_extent"], "wavenumber") if "diff_extent" in st else None)
        state.update({"n_sum": spec.n_sum, "n_diff": spec.n_diff,
                      "sum_extent": spec.sum_extent, "diff_extent": spec.diff_extent})
    else:
        if "two_mode" in st:
            tm = st["two_mode"]
            state = {"type": "discrete", "kind": "mixed_ensemble",
                     "two_mode": {"n": int(tm["n"]),
                                  "omega0": nat(tm["omega0"], "angular_frequency"),
                                  "theta": float(tm["theta"]), "s": int(tm.get("s", 0))}}
        else:
            state = {"type": "discrete", "kind": st.get("kind", "mixed_ensemble"),
                     "terms": [{"weight": float(t["weight"]), "phase": float(t.get("phase", 0.0)),
                                "modes": [{"k": nat(m["k"], "wavenumber"), "s": int(m.get("s", 0)),
                                           "n": int(m.get("n", 1))} for m in t["modes"]]}
                               for t in st["terms"]]}

    resolved = ResolvedSpec(units, state, {}, [])
    resolved.grid = _resolve_grid(resolved, doc.get("grid", {}), units, grid_override)
    tasks = doc.get("tasks") or [{"op": "observables"}]
    resolved.tasks = [_resolve_task(t, units, lmax_override) for t in tasks]
    return resolved


def _resolve_grid(r: ResolvedSpec, g: dict, units: UnitSystem, override) -> dict:
    specs = r.gaussian_specs()
    if not specs:
        return {}
    ratio = max(s.k0.magnitude() / s.sigma for s in specs)
    base = SphericalKGrid.for_gaussian(specs[0].k0, specs[0].sigma)
    n_theta = SphericalKGrid.for_gaussian((0.0, 0.0, ratio), 1.0).n_theta
    k_max = max(s.k0.magnitude() + 8.0 * s.sigma for s in specs)
    k_ext = max(float(max(abs(c) for c in s.k0.as_array())) + 8.0 * s.sigma for s in specs)
    grid = {
        "n_k": int(g.get("n_k", base.n_k)),
        "n_theta": int(g.get("n_theta", n_theta)),
        "n_phi": int(g.get("n_phi", base.n_phi)),
        "k_max": units.to_natural(g["k_max"], "wavenumber") if "k_max" in g else k_max,
        "axis": list(base.axis),
        "cartesian_n": int(g.get("cartesian_n", 256)),
        "k_ext": units.to_natural(g["k_ext"], "wavenumber") if "k_ext" in g else k_ext,
    }
    if override is not None:
        grid["n_k"], grid["n_theta"], grid["n_phi"] = (int(v) for v in override)
    return grid


def _resolve_task(task: dict, units: UnitSystem, lmax_override) -> dict:
    op = task["op"]
    params = dict(task.get("params", {}))
    if op == "decompose":
        params["l_max"] = int(lmax_override if lmax_override is not None
                              else params.get("l_max", 16))
    elif op == "detect":
        params.setdefault("n_t", 16)
        params.setdefault("records", False)
        if "planes" in params:
            params["planes"] = units.to_natural(params["planes"], "length")
        if "half_width" in params:
            params["half_width"] = units.to_natural(params["half_width"], "time")
    return {"op": op, "params": params}
