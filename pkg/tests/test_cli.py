import json

import numpy as np
import pytest

from msfa import cli
from msfa.global_factor import cov_to_corr, fit_global, whole_network_cov
from msfa.io import read_layout, read_matrix, read_panel, write_layout, write_matrix
from msfa.layout import NetworkLayout, center_panel
from msfa.local_factor import VarianceThreshold, select_num_factors_bic
from msfa.rv import bonferroni_threshold
from msfa.simulate import (
    SimulationSpec, build_modular_var, benchmark_spec, read_model, simulate_series,
)


def _small_spec(tmp_path, **kw):
    spec = benchmark_spec(layout=NetworkLayout.from_sizes([6] * 5), **kw)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    return path


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--spec", str(_small_spec(tmp_path)), "--T", "80",
                     "--seed", "7", "--out", str(out)]) == 0
    return out


def _fit(sim_dir, out, *extra):
    return cli.main(["fit", "--panel", str(sim_dir / "panel.csv"), "--layout",
                     str(sim_dir / "layout.json"), "--out", str(out), *extra])


def test_simulate_matches_library(sim_dir):
    model_seed, panel_seed = cli.simulation_seeds(7)
    spec = SimulationSpec.from_dict(json.loads((sim_dir / "spec.json").read_text()))
    assert spec.seed == model_seed
    model = build_modular_var(spec)
    panel = simulate_series(model, 80, seed=panel_seed)
    np.testing.assert_array_equal(read_panel(sim_dir / "panel.csv").data, panel.data)
    np.testing.assert_array_equal(read_model(sim_dir).phi, model.phi)
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7 and "phi.bin" in manifest["outputs"]
    assert read_matrix(sim_dir / "true_rv_clusters.csv").shape == (5, 5)


def test_simulate_without_seed_prints_it(tmp_path, capsys):
    assert cli.main(["simulate", "--spec", str(_small_spec(tmp_path)), "--T", "10",
                     "--out", str(tmp_path / "o")]) == 0
    err = capsys.readouterr().err
    seed = int(err.split("seed:")[1].split()[0])
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == seed


def test_simulate_binary(tmp_path):
    out = tmp_path / "b"
    assert cli.main(["simulate", "--spec", str(_small_spec(tmp_path)), "--T", "20", "--seed", "1",
                     "--binary", "--out", str(out)]) == 0
    assert read_panel(out / "panel.bin").data.shape == (20, 30)


def test_fit_outputs_match_library(sim_dir, tmp_path):
    out = tmp_path / "fit"
    assert _fit(sim_dir, out) == 0
    fit = fit_global(center_panel(read_panel(sim_dir / "panel.csv")),
                     read_layout(sim_dir / "layout.json"), VarianceThreshold(0.5))
    S = whole_network_cov(fit)
    ref = tmp_path / "ref"
    write_matrix(ref / "cov.csv", S)
    write_matrix(ref / "corr.csv", cov_to_corr(S))
    write_matrix(ref / "factor_cov.csv", fit.factor_cov)
    for name in ("cov.csv", "corr.csv", "factor_cov.csv"):
        assert (out / name).read_bytes() == (ref / name).read_bytes()
    doc = json.loads((out / "fit.json").read_text())
    assert doc["selection"] == {"policy": "variance", "tau": 0.5, "cap": None}


def test_fit_fixed_and_bic(sim_dir, tmp_path, capsys):
    assert _fit(sim_dir, tmp_path / "m1", "--fixed-m", "1") == 0
    assert read_matrix(tmp_path / "m1" / "factor_cov.csv").shape == (5, 5)
    assert capsys.readouterr().out.strip() == "factors per cluster: 1 1 1 1 1"
    assert _fit(sim_dir, tmp_path / "bic", "--bic", "--max-factors", "3") == 0
    Y = center_panel(read_panel(sim_dir / "panel.csv")).data
    expect = [select_num_factors_bic(Y[:, 6 * r:6 * r + 6], 3) for r in range(5)]
    assert capsys.readouterr().out.split(":")[1].split() == [str(m) for m in expect]


def test_fit_binary_and_dense_guard(sim_dir, tmp_path):
    out = tmp_path / "bin"
    assert _fit(sim_dir, out, "--binary", "--max-dense-nodes", "10") == 0
    assert read_matrix(out / "factor_cov.bin").ndim == 2
    assert not (out / "cov.bin").exists()


def test_connectivity_and_test(sim_dir, tmp_path, capsys):
    out = tmp_path / "fit"
    assert _fit(sim_dir, out) == 0
    assert cli.main(["connectivity", "--fit", str(out)]) == 0
    rv = json.loads((out / "rv_cluster.json").read_text())
    assert np.allclose(np.diag(rv["values"]), 1.0) and rv["names"][0] == "C1"
    assert cli.main(["test", "--fit", str(out), "--alpha", "1", "--d-override", "1"]) == 0
    doc = json.loads((out / "test_cluster.json").read_text())
    assert doc["summary"]["n_pairs"] == 10
    assert all(r["significant"] == (r["z"] >= 0) for r in doc["results"])
    assert cli.main(["test", "--fit", str(out), "--d-override", "9216"]) == 0
    doc = json.loads((out / "test_cluster.json").read_text())
    assert doc["results"][0]["threshold"] == pytest.approx(bonferroni_threshold(0.05, 9216))
    lines = (out / "test_cluster.csv").read_text().splitlines()
    assert lines[0] == "i,j,name_i,name_j,rv,z,significant" and len(lines) == 11


def test_connectivity_single_cluster(tmp_path):
    rng = np.random.default_rng(0)
    write_matrix(tmp_path / "p.csv", rng.standard_normal((30, 4)))
    write_layout(tmp_path / "l.json", NetworkLayout.from_sizes([4]))
    assert cli.main(["fit", "--panel", str(tmp_path / "p.csv"), "--layout",
                     str(tmp_path / "l.json"), "--out", str(tmp_path / "f")]) == 0
    assert cli.main(["connectivity", "--fit", str(tmp_path / "f")]) == 0
    assert read_matrix(tmp_path / "f" / "rv_cluster.csv").tolist() == [[1.0]]


def test_duplicate_cluster_has_unit_rv(tmp_path):
    x = np.random.default_rng(1).standard_normal((40, 3))
    write_matrix(tmp_path / "p.csv", np.hstack([x, x]))
    write_layout(tmp_path / "l.json", NetworkLayout.from_sizes([3, 3]))
    assert cli.main(["fit", "--panel", str(tmp_path / "p.csv"), "--layout",
                     str(tmp_path / "l.json"), "--out", str(tmp_path / "f")]) == 0
    assert cli.main(["connectivity", "--fit", str(tmp_path / "f")]) == 0
    assert read_matrix(tmp_path / "f" / "rv_cluster.csv")[0, 1] == pytest.approx(1.0)


def test_exit_codes(tmp_path, sim_dir):
    bad = _small_spec(tmp_path, spectral_radius=1.0)
    assert cli.main(["simulate", "--spec", str(bad), "--T", "10", "--seed", "0",
                     "--out", str(tmp_path / "x")]) == cli.EXIT_VALIDATION
    assert cli.main(["connectivity", "--fit", str(tmp_path / "missing")]) == cli.EXIT_IO
    (tmp_path / "corrupt").mkdir()
    (tmp_path / "corrupt" / "fit.json").write_text('{"layout": {}}')
    assert cli.main(["connectivity", "--fit", str(tmp_path / "corrupt")]) == cli.EXIT_VALIDATION
    (tmp_path / "corrupt" / "fit.json").write_text("{not json")
    assert cli.main(["test", "--fit", str(tmp_path / "corrupt")]) == cli.EXIT_VALIDATION
    write_layout(tmp_path / "l.json", NetworkLayout.from_sizes([4]))
    assert cli.main(["fit", "--panel", str(sim_dir / "panel.csv"), "--layout",
                     str(tmp_path / "l.json"), "--out", str(tmp_path / "f")]) == cli.EXIT_VALIDATION
    with pytest.raises(SystemExit):
        cli.main(["fit", "--panel", "p", "--layout", "l", "--out", "o", "--tau", "0.5", "--bic"])


def test_bench_smoke_and_defaults(tmp_path, capsys):
    spec = benchmark_spec(layout=NetworkLayout.from_sizes([5] * 5)).to_dict()
    cfg = {"spec": spec, "sample_sizes": [30], "n_replications": 2,
           "roster": ["sample", {"kind": "msfa", "tau": 0.5}]}
    (tmp_path / "b.json").write_text(json.dumps(cfg))
    assert cli.main(["bench", "--config", str(tmp_path / "b.json"), "--seed", "3",
                     "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "bench.json").read_text())
    assert [r["estimator"] for r in doc["rows"]] == ["sample", "msfa_tau0.5"]
    first = (tmp_path / "o" / "bench.csv").read_bytes()
    assert cli.main(["bench", "--config", str(tmp_path / "b.json"), "--seed", "3",
                     "--out", str(tmp_path / "o2")]) == 0
    assert (tmp_path / "o2" / "bench.csv").read_bytes() == first
    capsys.readouterr()
    assert cli.main(["defaults", "spec"]) == 0
    assert SimulationSpec.from_dict(json.loads(capsys.readouterr().out)) == benchmark_spec()
