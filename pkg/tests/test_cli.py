import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from phlim import __version__
from phlim.cli import main
from phlim.errors import SchemaError
from phlim.specdoc import resolve, validate


def write(tmp_path, doc, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(tmp_path, doc, *flags, command="run"):
    spec = write(tmp_path, doc)
    out = tmp_path / "report.json"
    code = main([command, "--spec", spec, "--out", str(out), *flags])
    return code, out


def gaussian_doc(k0=(0, 0, 10), sigma=1.0, tasks=None, **extra):
    doc = {"units": "natural", "state": {"type": "gaussian", "k0": list(k0), "sigma": sigma}}
    if tasks is not None:
        doc["tasks"] = tasks
    doc.update(extra)
    return doc


def numeric_leaves_labelled(obj):
    if isinstance(obj, dict):
        if "value" in obj:
            return "unit" in obj
        return all(numeric_leaves_labelled(v) for v in obj.values())
    if isinstance(obj, list):
        return all(numeric_leaves_labelled(v) for v in obj)
    return not isinstance(obj, (int, float)) or isinstance(obj, bool)


class TestRun:
    def test_gaussian_observables(self, tmp_path):
        code, out = run(tmp_path, gaussian_doc())
        assert code == 0
        report = json.loads(out.read_text())
        obs = report["results"][0]["observables"]
        assert obs["beta"]["value"] == pytest.approx(math.sqrt(0.99), abs=1e-3)
        assert obs["mass"]["value"] == pytest.approx(1.0, abs=0.02)
        assert obs["mass"]["unit"] == "hbar*k_ref/c"
        assert report["tool"]["version"] == __version__
        assert numeric_leaves_labelled(report)
        assert (tmp_path / "report.json.timing.json").exists()

    def test_two_mode_mass(self, tmp_path):
        doc = {"units": "natural", "state": {"type": "discrete",
                                             "two_mode": {"n": 2, "omega0": 1.5, "theta": math.pi}}}
        code, out = run(tmp_path, doc)
        assert code == 0
        mass = json.loads(out.read_text())["results"][0]["observables"]["mass"]["value"]
        assert mass == pytest.approx(3.0, rel=1e-12)

    def test_echo_and_tolerances(self, tmp_path):
        code, out = run(tmp_path, gaussian_doc(tasks=[{"op": "decompose",
                                                       "params": {"l_max": 4}}]),
                        "--grid", "96,64,48")
        assert code == 0
        report = json.loads(out.read_text())
        grid = report["spec"]["grid"]
        assert (grid["n_k"]["value"], grid["n_phi"]["value"]) == (96, 48)
        assert report["spec"]["tasks"][0]["params"]["l_max"]["value"] == 4
        assert "normalization" in report["tolerances"]
        table = (tmp_path / "report.json.decomposition.csv").read_text().splitlines()
        assert table[0] == "l,j,k_r,re_beta,im_beta"

    def test_lmax_flag_overrides(self, tmp_path):
        code, out = run(tmp_path, gaussian_doc(tasks=[{"op": "decompose"}]), "--lmax", "3")
        assert code == 0
        res = json.loads(out.read_text())["results"][0]
        assert res["l_max"]["value"] == 3
        assert len(res["power_per_l"]["value"]) == 4

    def test_deterministic(self, tmp_path):
        doc = gaussian_doc(tasks=[{"op": "observables"}, {"op": "oracle"}])
        run(tmp_path, doc)
        first = (tmp_path / "report.json").read_bytes()
        run(tmp_path, doc)
        assert (tmp_path / "report.json").read_bytes() == first

    def test_csv_format(self, tmp_path):
        code, out = run(tmp_path, gaussian_doc(), "--format", "csv")
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "key,value,unit"
        assert any(l.startswith("results[0].observables.mass,") for l in lines)

    def test_stdout(self, tmp_path, capsys):
        assert main(["run", "--spec", write(tmp_path, gaussian_doc())]) == 0
        assert json.loads(capsys.readouterr().out)["command"] == "run"


class TestUnits:
    def test_si_round_trip(self, tmp_path):
        k_ref = 2.0e6
        si = {"units": "si", "k_ref": k_ref,
              "state": {"type": "gaussian", "k0": [0, 0, 10 * k_ref], "sigma": k_ref,
                        "r0": [0.5 / k_ref, 0, 0]}}
        nat = {
            "units": "natural", "k_ref": k_ref,
            "state": {"type": "gaussian", "k0": [0, 0, 10], "sigma": 1, "r0": [0.5, 0, 0]}}
        _, a = run(tmp_path, si)
        rep_si = json.loads(a.read_text())["results"][0]["observables"]
        _, b = run(tmp_path, nat, "--units", "si")
        rep_nat = json.loads(b.read_text())["results"][0]["observables"]
        for key in ("energy", "mass", "beta"):
            assert rep_si[key]["unit"] == rep_nat[key]["unit"]
            assert rep_si[key]["value"] == pytest.approx(rep_nat[key]["value"], rel=1e-12)
        assert rep_si["mass"]["unit"] == "kg"

    def test_si_requires_k_ref(self):
        with pytest.raises(SchemaError):
            validate({"units": "si", "state": {"type": "gaussian", "k0": [0, 0, 1], "sigma": 1}})

    @settings(max_examples=25, deadline=None)
    @given(st.floats(1e3, 1e9), st.floats(0.1, 100))
    def test_conversion_inverse(self, k_ref, value):
        from phlim.units import UnitSystem
        u = UnitSystem("si", k_ref)
        for kind in ("wavenumber", "length", "time", "energy", "mass", "angular_frequency"):
            back = u.out(u.to_natural(value, kind), kind)["value"]
            assert back == pytest.approx(value, rel=1e-12)


class TestErrors:
    @pytest.mark.parametrize("doc", [
        {"units": "natural", "state": {"type": "gaussian", "k0": [0, 0, 10]}},
        {"units": "natural", "state": {"type": "gaussian", "k0": [0, 0, 10], "sigma": 1},
         "unexpected": 1},
        {"units": "natural", "state": {"type": "photon", "k0": [0, 0, 10]}},
        {"units": "natural", "state": {"type": "gaussian", "k0": [0, 0, 10], "sigma": -1}},
        {"units": "natural", "state": {"type": "gaussian", "k0": [0, 10], "sigma": 1}},
        {"units": "natural", "state": {"type": "gaussian", "k0": [0, 0, 10], "sigma": 1},
         "tasks": [{"op": "detect", "params": {"bogus": 1}}]},
    ])
    def test_schema_violation_exit_2(self, tmp_path, doc):
        code, out = run(tmp_path, doc)
        assert code == 2 and not out.exists()

    def test_unparseable(self, tmp_path):
        spec = tmp_path / "bad.json"
        spec.write_text("{not json")
        assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "r.json")]) == 2
        assert not (tmp_path / "r.json").exists()

    def test_missing_file(self, tmp_path):
        assert main(["run", "--spec", str(tmp_path / "none.json")]) == 2

    def test_coverage_exit_3(self, tmp_path):
        code, out = run(tmp_path, gaussian_doc(grid={"k_max": 12}))
        assert code == 3 and not out.exists()
        assert not list(tmp_path.glob("report.json*"))

    def test_degenerate_exit_3(self, tmp_path):
        g = {"type": "gaussian", "k0": [0, 0, 5], "sigma": 1}
        doc = {"units": "natural",
               "state": {"type": "superposition", "a": g, "b": g, "relative_phase": math.pi}}
        code, _ = run(tmp_path, doc)
        assert code == 3

    def test_unsupported_op_exit_2(self, tmp_path):
        doc = {"units": "natural", "state": {"type": "discrete",
                                             "two_mode": {"n": 2, "omega0": 1, "theta": 1}},
               "tasks": [{"op": "detect"}]}
        code, _ = run(tmp_path, doc)
        assert code == 2

    def test_bad_grid_flag(self, tmp_path):
        code, _ = run(tmp_path, gaussian_doc(), "--grid", "64,32")
        assert code == 2

    def test_argparse_usage(self):
        assert main([]) == 2


class TestCompare:
    def test_gaussian(self, tmp_path):
        code, out = run(tmp_path, gaussian_doc(grid={"cartesian_n": 128}), command="compare")
        assert code == 0
        betas = json.loads(out.read_text())["compare"]["betas"]
        vals = [betas[k]["value"] for k in ("quadrature", "closed_form", "centroid", "toa")]
        assert max(vals) - min(vals) < 0.01 * max(vals)

    def test_isotropic(self, tmp_path):
        code, out = run(tmp_path, gaussian_doc(k0=(0, 0, 0)),
                        command="compare")
        assert code == 0
        betas = json.loads(out.read_text())["compare"]["betas"]
        assert betas["quadrature"]["value"] <= 1e-3
        assert betas["centroid"]["value"] <= 1e-3
        assert betas["toa"]["status"] == "not_applicable"

    def test_two_lobes(self, tmp_path):
        a = {"type": "gaussian", "k0": [0, 0, 10], "sigma": 1}
        b = {"type": "gaussian", "k0": [0, 0, -10], "sigma": 1}
        doc = {"units": "natural", "state": {"type": "superposition", "a": a, "b": b},
               "grid": {"cartesian_n": 128}}
        code, out = run(tmp_path, doc, command="compare")
        assert code == 0
        betas = json.loads(out.read_text())["compare"]["betas"]
        assert betas["quadrature"]["value"] < 1e-6
        assert betas["centroid"]["value"] < 1e-6
        assert betas["closed_form"]["status"] == "not_applicable"


class TestResolve:
    def test_defaults_filled(self):
        doc = gaussian_doc()
        validate(doc)
        r = resolve(doc)
        assert r.state["r0"] == [0.0, 0.0, 0.0] and r.state["photons"] == 1
        assert r.tasks == [{"op": "observables", "params": {}}]
        assert r.grid["n_theta"] == 64 and r.grid["cartesian_n"] == 256
