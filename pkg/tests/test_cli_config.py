import csv
import json

import numpy as np
import pytest
import yaml

from satdesign import config
from satdesign.cli import main
from satdesign.errors import SchemaError

EX1 = {
    "version": 1,
    "seed": 3,
    "graph": {"source": "sbm", "clusters": 8, "cluster_size": 10,
              "block": {"kind": "diagonal", "p_in": 0.6, "p_out": 0.0}},
    "outcomes": {"source": "distribution",
                 "alpha": {"kind": "cluster_normal", "mean": 0, "sd": 3, "noise_sd": 0.1},
                 "beta": {"kind": "constant", "value": 1},
                 "gamma": {"kind": "cluster_uniform", "low": 0, "high": 1}},
    "optimizer": {"kind": "symmetric", "tier": "simplified"},
}


def write_cfg(tmp_path, tree, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(tree))
    return p


def run(*argv):
    return main([str(a) for a in argv])


def test_defaults_validate_and_hash_is_stable():
    cfg = config.resolve({})
    assert cfg["version"] == 1 and cfg["seed"] == 0
    assert config.config_hash(cfg) == config.config_hash(config.resolve({}))
    assert config.config_hash(cfg) != config.config_hash(config.resolve({}, seed=1))


def test_schema_errors():
    with pytest.raises(SchemaError):
        config.resolve({"graph": {"source": "sbm", "clusters": 0}})
    with pytest.raises(SchemaError):
        config.resolve({"unknown_key": 1})
    with pytest.raises(SchemaError):
        config.resolve({"version": 2})


def test_infinity_round_trips_through_yaml(tmp_path):
    p = write_cfg(tmp_path, {"version": 1, "seed": 0})
    p.write_text("version: 1\nseed: 0\nvar_shape: {lambda_grid: [0.0, .inf]}\n")
    cfg = config.load(p)
    assert cfg["var_shape"]["lambda_grid"] == [0.0, "inf"]
    assert config.as_float("inf") == float("inf")
    again = config.resolve(yaml.safe_load(config.dump(cfg)))
    assert again == cfg


def test_print_config_lists_every_default(tmp_path, capsys):
    assert run("--print-config", "--seed", 42) == 0
    printed = yaml.safe_load(capsys.readouterr().out)
    assert printed["seed"] == 42
    assert set(config.DEFAULTS) <= set(printed)


def test_complete_block_writes_fifteen_edges(tmp_path):
    cfg = write_cfg(tmp_path, {"version": 1, "seed": 1,
                               "graph": {"source": "sbm", "sizes": [3, 3],
                                         "block": {"kind": "matrix", "A": [[1, 1], [1, 1]]}}})
    out = tmp_path / "new" / "dir"
    assert run("--config", cfg, "--out", out, "gen-graph") == 0
    rows = list(csv.reader((out / "edges.csv").open()))
    assert rows[0] == ["u", "v"] and len(rows) - 1 == 15


def test_generation_is_byte_identical_per_seed(tmp_path):
    cfg = write_cfg(tmp_path, EX1)
    for d in ("a", "b"):
        assert run("--config", cfg, "--out", tmp_path / d, "gen-graph") == 0
        assert run("--config", cfg, "--out", tmp_path / d, "gen-outcomes") == 0
    for f in ("edges.csv", "membership.csv", "outcomes.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert run("--config", cfg, "--seed", 4, "--out", tmp_path / "c", "gen-graph") == 0
    assert (tmp_path / "a" / "edges.csv").read_bytes() != (tmp_path / "c" / "edges.csv").read_bytes()


def test_generated_files_load_back_as_instance(tmp_path):
    cfg = write_cfg(tmp_path, EX1)
    run("--config", cfg, "--out", tmp_path, "gen-graph")
    run("--config", cfg, "--out", tmp_path, "gen-outcomes")
    from_files = dict(EX1, graph={"source": "files", "edges_file": "edges.csv", "membership_file": "membership.csv"},
                      outcomes={"source": "file", "file": "outcomes.csv"})
    cfg2 = write_cfg(tmp_path, from_files, "files.yaml")
    assert run("--config", cfg, "--out", tmp_path / "x", "analyze") == 0
    assert run("--config", cfg2, "--out", tmp_path / "y", "analyze") == 0
    a = json.loads((tmp_path / "x" / "analysis.json").read_text())
    b = json.loads((tmp_path / "y" / "analysis.json").read_text())
    assert a["coefficients"] == b["coefficients"]


def test_analyze_without_interference_reports_sutva_tier(tmp_path):
    tree = dict(EX1, outcomes=dict(EX1["outcomes"], gamma={"kind": "constant", "value": 0.0}))
    cfg = write_cfg(tmp_path, tree)
    assert run("--config", cfg, "--out", tmp_path, "analyze") == 0
    rep = json.loads((tmp_path / "analysis.json").read_text())
    assert rep["tier"] == "sutva"
    V = rep["coefficients"]["full"]
    assert (V["V2"], V["V3"], V["V4"]) == (0.0, 0.0, 0.0)


def test_analyze_perfect_clustering_bias_regime(tmp_path):
    cfg = write_cfg(tmp_path, EX1)
    assert run("--config", cfg, "--out", tmp_path, "analyze") == 0
    rep = json.loads((tmp_path / "analysis.json").read_text())
    assert rep["bias_regime"]["regime"] == "cluster_based"
    assert rep["bias_regime"]["minimized_bias"] == 0.0


def test_optimize_between_cluster_heterogeneity_gives_constant_design(tmp_path):
    cfg = write_cfg(tmp_path, EX1)
    assert run("--config", cfg, "--out", tmp_path, "optimize") == 0
    rep = json.loads((tmp_path / "optimize.json").read_text())
    assert rep["case"] == "TwoPoint"
    assert rep["pi_star"] == [0.5] * 8


def test_simulate_and_enumerate(tmp_path):
    tree = {"version": 1, "seed": 2,
            "graph": {"source": "sbm", "sizes": [4, 4], "block": {"kind": "diagonal", "p_in": 0.5, "p_out": 0.2}},
            "design": {"mode": "permutation", "pi": [0.25, 0.75]},
            "simulation": {"replications": 400}}
    cfg = write_cfg(tmp_path, tree)
    assert run("--config", cfg, "--out", tmp_path, "enumerate") == 0
    assert run("--config", cfg, "--out", tmp_path, "simulate", "--threads", 2) == 0
    ex = json.loads((tmp_path / "enumerate.json").read_text())
    sim = json.loads((tmp_path / "simulate.json").read_text())
    assert ex["count"] == 2 * 4 * 4
    assert abs(sim["mean_tau"] - ex["mean"]) < 5 * sim["se_mean"]


def test_oversized_enumeration_exits_two(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"version": 1, "seed": 0, "graph": {"source": "sbm", "clusters": 4, "cluster_size": 20}})
    assert run("--config", cfg, "--out", tmp_path, "--limit", 1000, "enumerate") == 2
    assert "count=" in capsys.readouterr().err


def test_error_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("version: 1\nseed: 0\ngraph: {source: sbm, clusters: -1}\n")
    assert run("--config", bad, "analyze") == 1
    assert run("--config", tmp_path / "missing.yaml", "analyze") == 1
    assert run("--threads", 0, "--print-config") == 2
    tree = dict(EX1, outcomes=dict(EX1["outcomes"], gamma={"kind": "normal", "mean": 0, "sd": 1}),
                optimizer={"kind": "symmetric", "tier": "simplified"})
    assert run("--config", write_cfg(tmp_path, tree), "--out", tmp_path, "optimize") == 2


def _smoke(tmp_path, extra):
    tree = {"version": 1, "seed": 1, "graph": {"source": "sbm", "clusters": 10, "cluster_size": 20},
            "simulation": {"realizations": 3, "replications": 50}}
    tree.update(extra)
    return write_cfg(tmp_path, tree)


def test_repro_var_shape_smoke(tmp_path):
    from satdesign.montecarlo.repro import VAR_SHAPE_DETAIL_HEADER, VAR_SHAPE_HEADER

    cfg = _smoke(tmp_path, {"var_shape": {"lambda_grid": [0.0, 1.0, "inf"]}})
    assert run("--config", cfg, "--out", tmp_path, "repro", "fig-var-shape") == 0
    rows = list(csv.reader((tmp_path / "fig_var_shape.csv").open()))
    assert rows[0] == VAR_SHAPE_HEADER and len(rows) == 4
    assert rows[-1][0] == "inf" and float(rows[-1][1]) == 100.0
    assert next(csv.reader((tmp_path / "fig_var_shape_realizations.csv").open())) == VAR_SHAPE_DETAIL_HEADER
    side = json.loads((tmp_path / "fig_var_shape.json").read_text())
    assert len(side["realizations"]) == 3


def test_repro_flat_curve_without_spillover_or_cluster_structure(tmp_path):
    cfg = _smoke(tmp_path, {"outcomes": {"source": "distribution", "center_alpha": False,
                                         "gamma": {"kind": "constant", "value": 0.0},
                                         "beta": {"kind": "constant", "value": 1.0}},
                            "var_shape": {"lambda_grid": [0.0, 1.0, "inf"], "calibrate_alpha": False},
                            "simulation": {"realizations": 40, "replications": 1000}})
    assert run("--config", cfg, "--out", tmp_path, "repro", "fig-var-shape") == 0
    vals = [float(r["mean_relative_variance_pct"]) for r in csv.DictReader((tmp_path / "fig_var_shape.csv").open())]
    assert np.allclose(vals, 100.0, atol=12.0)


def test_repro_deterministic_smoke(tmp_path):
    from satdesign.montecarlo.repro import DESIGNS_HEADER, IMPROVEMENT_HEADER

    cfg = _smoke(tmp_path, {"graph": {"source": "sbm", "clusters": 6, "cluster_size": 10,
                                      "block": {"kind": "diagonal", "p_in": 0.5, "p_out": 0.0}}})
    assert run("--config", cfg, "--out", tmp_path, "repro", "fig-deterministic") == 0
    rows = list(csv.DictReader((tmp_path / "fig_deterministic_designs.csv").open()))
    assert list(rows[0]) == DESIGNS_HEADER and len(rows) == 9
    assert {r["design"] for r in rows} == {"randomized", "deterministic", "rerandomized"}
    assert next(csv.reader((tmp_path / "fig_deterministic_improvement.csv").open())) == IMPROVEMENT_HEADER
