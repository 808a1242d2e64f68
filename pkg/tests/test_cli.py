import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from magspec import Lattice, ground_state_spectrum
from magspec.cli import main, parse_phi
from magspec.spectrum import GroundStateTable, SpectrumSlice

PI2 = math.pi**2


@pytest.fixture
def run():
    runner = CliRunner()

    def invoke(*args, env=None):
        return runner.invoke(main, list(args), env=env, catch_exceptions=False)

    return invoke


def test_spectrum_half_flux(run):
    res = run("spectrum", "--lattice", "Z2", "--potential", "0.5,0", "--cutoff", "60")
    assert res.exit_code == 0
    data = json.loads(res.output)
    vals = [e["value"] for e in data["eigenvalues"]]
    mult = [e["multiplicity"] for e in data["eigenvalues"]]
    assert np.allclose(vals, [PI2, 5 * PI2]) and mult == [2, 4]
    assert data["lambda1"] == pytest.approx(PI2)


def test_spectrum_json_roundtrips(run):
    res = run("spectrum", "--lattice", "hex", "--potential", "0.2,0.1", "--cutoff", "200")
    s = SpectrumSlice.from_dict(json.loads(res.output))
    assert json.loads(json.dumps(s.to_dict())) == {k: v for k, v in json.loads(res.output).items()
                                                   if k in ("cutoff", "eigenvalues")}


def test_spectrum_gauge(run):
    a = run("spectrum", "--potential", "1,0", "--format", "csv")
    b = run("spectrum", "--potential", "0,0", "--format", "csv")
    rows_a = [line.split(",") for line in a.output.splitlines()[1:]]
    rows_b = [line.split(",") for line in b.output.splitlines()[1:]]
    assert [r[1] for r in rows_a] == [r[1] for r in rows_b]
    assert np.allclose([float(r[0]) for r in rows_a], [float(r[0]) for r in rows_b], atol=1e-10)


def test_spectrum_hex_circumcenter(run):
    res = run("spectrum", "--lattice", "[[1,0],[0.5,0.8660254]]", "--potential", "0.333333,0.577350")
    data = json.loads(res.output)
    assert data["lambda1"] == pytest.approx(4 * PI2 * 4 / 9, rel=1e-5)


def test_spectrum_fluxes(run):
    a = json.loads(run("spectrum", "--lattice", "hex", "--fluxes", "0.5,0.5").output)
    # alpha = Phi1, beta = (Phi2 - p Phi1) / q on the (p, q)-lattice
    q = math.sqrt(3) / 2
    b = json.loads(run("spectrum", "--lattice", "hex", "--potential", f"0.5,{0.25 / q!r}").output)
    assert a["lambda1"] == pytest.approx(b["lambda1"], rel=1e-12)


@pytest.mark.parametrize("lattice, field", [
    ('{"dim": 2}', "basis"),
    ("[[1,0],[2,0]]", "dependent"),
    ("[[1,0", "JSON"),
    ("square", "shorthand"),
])
def test_spectrum_bad_lattice(run, lattice, field):
    res = run("spectrum", "--lattice", lattice)
    assert res.exit_code == 2
    assert field in res.output


def test_spectrum_bad_potential(run):
    assert run("spectrum", "--potential", "1,2,3").exit_code == 2
    assert run("spectrum", "--potential", "a,b").exit_code == 2
    assert run("spectrum", "--cutoff", "-1").exit_code == 2


def test_invariants(run):
    res = run("invariants", "--p", "0.5", "--q", "0.8660254", "--format", "json")
    assert res.exit_code == 0
    data = json.loads(res.stdout)
    assert data["lambda1_class"] == pytest.approx(8 * PI2 / (3 * math.sqrt(3)), abs=1e-4)
    res = run("invariants", "--p", "0", "--q", "1", "--format", "json")
    assert json.loads(res.output)["lambda1_class"] == pytest.approx(2 * PI2)


def test_invariants_normalizes_with_notice(run):
    res = run("invariants", "--p", "0.7", "--q", "0.5", "--format", "json")
    assert res.exit_code == 0
    assert "normalized" in res.stderr
    m = json.loads(res.stdout)["moduli"]
    assert 0 <= m["p"] <= 0.5 and m["p"] ** 2 + m["q"] ** 2 >= 1
    assert run("invariants", "--p", "0", "--q", "-1").exit_code == 2


def test_global_min(run):
    res = run("global-min", "--step", "0.001", "--format", "json")
    data = json.loads(res.output)
    assert data["value"] == pytest.approx(8 * PI2 / (3 * math.sqrt(3)), abs=1e-6)
    assert data["moduli"]["p"] == pytest.approx(0.5, abs=1e-3)
    assert data["moduli"]["q"] == pytest.approx(0.8660254, abs=1e-3)
    assert run("global-min", "--step", "0.5").exit_code == 2


def test_table_and_reconstruct(run, tmp_path):
    out = tmp_path / "hex.json"
    res = run("table", "--lattice", "hex", "--n", "8,16,32", "--out", str(out))
    assert res.exit_code == 0
    t = GroundStateTable.from_dict(json.loads(out.read_text()))
    assert t.entries == ground_state_spectrum(Lattice([[1, 0], [0.5, math.sqrt(3) / 2]]), [8, 16, 32]).entries
    res = run("reconstruct", str(out))
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert data["volume"] == pytest.approx(math.sqrt(3) / 2)
    assert np.allclose(data["gram"]["matrix"], (2 / math.sqrt(3)) * np.array([[1, -0.5], [-0.5, 1]]))
    assert data["moduli"]["p"] == pytest.approx(0.5)


def test_reconstruct_corrupted(run, tmp_path):
    t = ground_state_spectrum(Lattice(np.eye(2)), [8, 16, 32]).to_dict()
    t["entries"][4]["mu"] = -1.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(t))
    res = run("reconstruct", str(path))
    assert res.exit_code == 3
    e = t["entries"][4]
    assert f"j={e['j']}, k={e['k']}, n={e['n']}" in res.output
    path.write_text("not json")
    assert run("reconstruct", str(path)).exit_code == 3


def test_reconstruct_compare(run, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("table", "--lattice", "Z2", "--out", str(a))
    s = (2 / math.sqrt(3)) ** 0.5
    run("table", "--lattice", f"[[{s},0],[{s / 2},{s * math.sqrt(3) / 2}]]", "--out", str(b))
    res = run("reconstruct", str(a), "--compare", str(b), "--format", "json")
    assert res.exit_code == 0
    assert json.loads(res.output)["isometric"] is False
    res = run("reconstruct", str(a), "--compare", str(a), "--format", "pretty")
    assert res.output.startswith("isometric")


def test_verify_asymptotics(run, tmp_path):
    csv_path = tmp_path / "asym.csv"
    res = run("verify", "asymptotics", "--phi", "0.2*sin", "--rs", "0.25,0.125,0.0625",
              "--N", "48", "--csv", str(csv_path))
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert data["relative_error"] < 1e-2 and data["upper_bound_ok"]
    assert csv_path.read_text().startswith("r,vol_lambda1_over_r2")


def test_verify_flat_best(run):
    res = run("verify", "flat-best", "--phi", "0", "--N", "32")
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert abs(data["discrete_gap"]) < 1e-9
    res = run("verify", "flat-best", "--phi", "0.3*sincos", "--N", "32")
    assert res.exit_code == 0 and json.loads(res.output)["gap"] > 1e-3


def test_verify_convergence(run, tmp_path):
    csv_path = tmp_path / "conv.csv"
    res = run("verify", "convergence", "--N", "16,32,64", "--csv", str(csv_path))
    assert res.exit_code == 0
    assert "order 16->32: 1.99" in res.output or "order 16->32: 2.00" in res.output
    assert len(csv_path.read_text().splitlines()) == 4
    res = run("verify", "convergence", "--N", "16,32", "--order", "3")
    assert res.exit_code == 4


def test_flat_best_violation_exit_code(run):
    # a negative tolerance turns the (true) inequality into a failing assertion
    res = run("verify", "flat-best", "--phi", "0", "--N", "16", "--c", "-100")
    assert res.exit_code == 4


def test_tolerance_env_and_config(run, tmp_path):
    res = run("spectrum", "--potential", "0.5,0", env={"MAGSPEC_TOL": "cvp=bad"})
    assert res.exit_code == 2
    res = run("spectrum", "--potential", "0.5,0", env={"MAGSPEC_TOL": "merge=1e-6"})
    assert res.exit_code == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nlattice = hex\ncutoff = 40\n")
    res = run("--config", str(cfg), "spectrum", "--potential", "0,0")
    data = json.loads(res.output)
    assert data["cutoff"] == 40 and data["lattice"]["basis"][1][0] == 0.5


def test_deterministic(run):
    a = run("verify", "convergence", "--N", "16,32", "--format", "json").output
    b = run("verify", "convergence", "--N", "16,32", "--format", "json").output
    assert a == b


def test_parse_phi():
    f = parse_phi("0.2*sin")
    assert f(0.25, 0.0) == pytest.approx(0.2)
    assert parse_phi("0.5")(0.1, 0.2) == 0.5
    assert parse_phi("0.1*cos(2*pi*x2) + x1**2")(0.5, 0.0) == pytest.approx(0.35)
    from magspec import DomainError

    for bad in ("x1.real", "open('f')", "y + 1", "lambda: 1"):
        with pytest.raises(DomainError):
            parse_phi(bad)
