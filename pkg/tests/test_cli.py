"""End-to-end CLI tests: exact output bytes, strict config rejection,
exit codes, and rerun/thread reproducibility."""

import json
import math
import os

import numpy as np
import pytest

from cp_lab.cli import (
    _default_threads,
    build_graph,
    main,
    parse_degree_spec,
    run_experiment,
)
from cp_lab.errors import ConfigError
from cp_lab.graphs import graph_from_edge_list_text, read_edge_list


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def test_gen_star_exact_bytes(tmp_path):
    out = tmp_path / "star.txt"
    assert main(["gen", "--family", "star", "--k", "3",
                 "--out", str(out)]) == 0
    assert out.read_bytes() == b"4 3\n0 1\n0 2\n0 3\n"


def test_gen_round_trip_reconstructs_graph(tmp_path):
    out = tmp_path / "cm.txt"
    assert main(["gen", "--family", "configuration", "--n", "60",
                 "--degree", "poisson:2.5", "--seed", "5",
                 "--out", str(out)]) == 0
    g = read_edge_list(out)
    assert g.n == 60
    assert g.m > 0
    again = tmp_path / "cm2.txt"
    assert main(["gen", "--family", "configuration", "--n", "60",
                 "--degree", "poisson:2.5", "--seed", "5",
                 "--out", str(again)]) == 0
    assert out.read_bytes() == again.read_bytes()


def test_gen_random_family_requires_seed(tmp_path):
    out = tmp_path / "g.txt"
    assert main(["gen", "--family", "regular", "--n", "10", "--d", "3",
                 "--out", str(out)]) == 1
    assert not out.exists()


def test_gen_missing_family_key(tmp_path):
    out = tmp_path / "g.txt"
    assert main(["gen", "--family", "star", "--out", str(out)]) == 1
    assert not out.exists()


def test_gen_usage_error_exits_one(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--family", "star", "--k", "3"])  # no --out
    assert exc.value.code == 1


# ---------------------------------------------------------------------------
# sim
# ---------------------------------------------------------------------------

def test_sim_pure_death_run(tmp_path, capsys):
    graph = tmp_path / "star.txt"
    main(["gen", "--family", "star", "--k", "3", "--out", str(graph)])
    out = tmp_path / "traj.csv"
    code = main(["sim", "--graph", str(graph), "--lam", "0",
                 "--horizon", "50", "--seed", "9", "--out", str(out)])
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert "status=extinct" in line and "censored=false" in line
    body = out.read_text()
    assert body.startswith("time,infected\n0,4\n")


def test_sim_missing_graph_file(tmp_path):
    assert main(["sim", "--graph", str(tmp_path / "nope.txt"), "--lam", "0.5",
                 "--horizon", "5", "--seed", "1",
                 "--out", str(tmp_path / "t.csv")]) == 1


def test_sim_infinite_horizon_needs_sample_times(tmp_path):
    graph = tmp_path / "c.txt"
    main(["gen", "--family", "cycle", "--n", "5", "--out", str(graph)])
    assert main(["sim", "--graph", str(graph), "--lam", "0.5",
                 "--horizon", "inf", "--seed", "1",
                 "--out", str(tmp_path / "t.csv")]) == 1
    assert main(["sim", "--graph", str(graph), "--lam", "0.5",
                 "--horizon", "inf", "--seed", "1",
                 "--sample-times", "0,1,2",
                 "--out", str(tmp_path / "t.csv")]) == 0


# ---------------------------------------------------------------------------
# config parsing and graph building
# ---------------------------------------------------------------------------

def test_parse_degree_spec():
    mu = parse_degree_spec("poisson:3.0")
    assert mu.mean == pytest.approx(3.0, rel=1e-6)
    delta = parse_degree_spec("delta:4")
    assert [k for k, _ in delta.support()] == [4]
    for bad in ("poisson:x", "delta:2.5", "zipf:3", "poisson"):
        with pytest.raises(ConfigError):
            parse_degree_spec(bad)


def test_build_graph_families(tmp_path):
    star = build_graph({"family": "star", "k": 3}, seed=0)
    assert (star.n, star.m) == (4, 3)
    lattice = build_graph({"family": "lattice", "dim": 2, "side": 4}, seed=0)
    assert lattice.n == 16
    with pytest.raises(ConfigError):
        build_graph({"family": "star"}, seed=0)
    with pytest.raises(ConfigError):
        build_graph({"family": "hypercube", "n": 8}, seed=0)
    path = tmp_path / "g.txt"
    path.write_text("2 1\n0 1\n")
    from_file = build_graph({"family": "file", "path": str(path)}, seed=0)
    assert (from_file.n, from_file.m) == (2, 1)


def test_experiment_rejects_unknown_preset(tmp_path):
    cfg = _write(tmp_path / "c.ini",
                 "[experiment]\npreset = warp-drive\nseed = 1\n")
    assert main(["experiment", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 1
    assert not (tmp_path / "out").exists()


def test_experiment_rejects_unknown_section(tmp_path):
    cfg = _write(tmp_path / "c.ini",
                 "[experiment]\npreset = duality-check\nseed = 1\n"
                 "[mystery]\nx = 1\n")
    assert main(["experiment", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 1


def test_experiment_rejects_unknown_key(tmp_path):
    cfg = _write(tmp_path / "c.ini",
                 "[experiment]\npreset = duality-check\nseed = 1\n"
                 "[run]\ninstancess = 10\n")
    assert main(["experiment", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 1


def test_experiment_rejects_negative_trials(tmp_path):
    cfg = _write(tmp_path / "c.ini",
                 "[experiment]\npreset = duality-check\nseed = 1\n"
                 "[run]\ninstances = -3\n")
    assert main(["experiment", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 1
    assert not (tmp_path / "out").exists()


def test_experiment_requires_a_seed(tmp_path):
    cfg = _write(tmp_path / "c.ini",
                 "[experiment]\npreset = duality-check\n"
                 "[run]\ninstances = 5\nn_max = 6\n")
    assert main(["experiment", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 1
    assert main(["experiment", "--config", cfg, "--seed", "4",
                 "--out", str(tmp_path / "out")]) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 4


def test_missing_config_file(tmp_path):
    assert main(["experiment", "--config", str(tmp_path / "nope.ini"),
                 "--out", str(tmp_path / "out")]) == 1


# ---------------------------------------------------------------------------
# experiment outputs and reproducibility
# ---------------------------------------------------------------------------

DUALITY_INI = ("[experiment]\npreset = duality-check\nseed = 31\n"
               "[run]\ninstances = 25\nn_max = 10\n")


def test_experiment_writes_csv_and_manifest(tmp_path):
    cfg = _write(tmp_path / "c.ini", DUALITY_INI)
    out = tmp_path / "out"
    assert main(["experiment", "--config", cfg, "--out", str(out)]) == 0
    body = (out / "duality.csv").read_text()
    header, *rows = body.strip().split("\n")
    assert header.split(",")[-1] == "pathwise_agree"
    assert len(rows) == 25
    assert all(row.endswith("true") for row in rows)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["preset"] == "duality-check"
    assert manifest["config"]["run"]["instances"] == 25
    assert manifest["outputs"] == ["duality.csv"]
    assert "numpy" in manifest["versions"]


def test_experiment_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path / "c.ini", DUALITY_INI)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["experiment", "--config", cfg, "--out", str(a)]) == 0
    assert main(["experiment", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "duality.csv").read_bytes() == (b / "duality.csv").read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    ma.pop("created"), mb.pop("created")
    assert ma == mb


def test_experiment_thread_count_does_not_change_outputs(tmp_path):
    ini = ("[experiment]\npreset = almostlocal\nseed = 8\n"
           "[run]\nlam = 0.6\nt = 2.0\nradii = 1, 2\ntrials = 300\n"
           "[graph]\nfamily = cycle\nn = 40\n")
    cfg = _write(tmp_path / "c.ini", ini)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["experiment", "--config", cfg, "--out", str(a),
                 "--threads", "1"]) == 0
    assert main(["experiment", "--config", cfg, "--out", str(b),
                 "--threads", "4"]) == 0
    assert (a / "almostlocal.csv").read_bytes() == \
        (b / "almostlocal.csv").read_bytes()


def test_run_experiment_function_matches_cli(tmp_path):
    cfg = _write(tmp_path / "c.ini", DUALITY_INI)
    out = tmp_path / "out"
    assert run_experiment(cfg, str(out), seed=None, threads=1) == 0
    assert (out / "duality.csv").exists()


# ---------------------------------------------------------------------------
# estimate subcommand
# ---------------------------------------------------------------------------

def test_estimate_eta_csv(tmp_path):
    ini = ("[estimate]\nestimator = eta_geq_R\nseed = 3\nlam = 0.5\n"
           "r = 1\nsamples = 500\ndegree = delta:3\n")
    cfg = _write(tmp_path / "c.ini", ini)
    out = tmp_path / "out"
    assert main(["estimate", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "estimates.csv").read_text().strip().split("\n")
    assert lines[0] == ("estimator,param_json,mean,stderr,n,n_censored,"
                        "ci_lo,ci_hi,seed")
    assert lines[1].startswith("eta_geq_R,")
    mean = float(lines[1].split(",")[-7])
    assert 0.0 <= mean <= 1.0


def test_estimate_density_multiple_rows(tmp_path):
    ini = ("[estimate]\nestimator = density\nseed = 3\nlam = 0.0\n"
           "ts = 0.0, 1.0\ntrials = 200\n"
           "[graph]\nfamily = cycle\nn = 30\n")
    cfg = _write(tmp_path / "c.ini", ini)
    out = tmp_path / "out"
    assert main(["estimate", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "estimates.csv").read_text().strip().split("\n")
    assert len(lines) == 3
    first = lines[1].split(",")
    assert float(first[-7]) == 1.0


def test_estimate_unknown_estimator(tmp_path):
    ini = "[estimate]\nestimator = psychic\nseed = 3\nlam = 0.5\n"
    cfg = _write(tmp_path / "c.ini", ini)
    assert main(["estimate", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 1


def test_estimate_censoring_budget_exit_code(tmp_path):
    # a tight horizon censors most star runs, blowing the default budget
    ini = ("[estimate]\nestimator = star_extinction\nseed = 3\nlam = 0.5\n"
           "k = 4\ntrials = 200\nhorizon = 0.2\n")
    cfg = _write(tmp_path / "c.ini", ini)
    out = tmp_path / "out"
    assert main(["estimate", "--config", cfg, "--out", str(out)]) == 2
    assert (out / "estimates.csv").exists()


def test_estimate_missing_required_key(tmp_path):
    ini = "[estimate]\nestimator = eta_geq_R\nseed = 3\n"  # no lam
    cfg = _write(tmp_path / "c.ini", ini)
    assert main(["estimate", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 1


# ---------------------------------------------------------------------------
# threads default
# ---------------------------------------------------------------------------

def test_threads_env_fallback(monkeypatch):
    monkeypatch.delenv("CP_LAB_THREADS", raising=False)
    assert _default_threads() == 1
    monkeypatch.setenv("CP_LAB_THREADS", "6")
    assert _default_threads() == 6
    monkeypatch.setenv("CP_LAB_THREADS", "junk")
    assert _default_threads() == 1
    monkeypatch.setenv("CP_LAB_THREADS", "0")
    assert _default_threads() == 1
