"""Command-line driver for reproducible runs.

Subcommands:
  gen         write a graph to an edge-list file
  sim         run one trajectory on a graph file, write a time-series CSV
  estimate    run one named estimator from a config file, write its CSV
  experiment  run a named preset, writing CSVs plus a manifest

Configs are INI files parsed strictly: an unknown section or key is an
error, counts must be positive, and a master seed is mandatory (there is
no wall-clock seeding anywhere).  A rerun with the same config and seed
produces byte-identical CSV bodies; the only timestamp lives in
manifest.json.  Exit codes: 0 success, 1 usage or config error, 2 when
the censored fraction exceeds the configured budget.
"""

import argparse
import configparser
import json
import math
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .contact_process import (
    ctmc_exact_expected_extinction,
    evolve,
    geometric_time_grid,
    reverse_timeline,
    run_direct,
    sample_extinction_times,
    sample_timeline,
    sample_timeline_extinction_times,
    shift_timeline,
    thin_timeline,
    trajectory_csv_text,
)
from .errors import ConfigError, CpLabError
from .estimators import (
    ESTIMATE_CSV_HEADER,
    almostlocal_diagnostic,
    bootstrap_log_median_slope,
    estimate_csv_row,
    estimate_density,
    estimate_eta_geq_R,
    estimate_star_extinction,
    estimate_Z_geq_R,
    tightness_diagnostic,
)
from .graphs import (
    DegreeDistribution,
    Graph,
    RadiusLaw,
    generate_configuration_model,
    generate_cycle,
    generate_lattice_box,
    generate_random_regular,
    generate_spatial_torus_graph,
    generate_star,
    giant_component,
    read_edge_list,
    top_eps_degree_sum,
    write_edge_list,
)
from .local_convergence import (
    empirical_ball_distribution,
    limit_ball_distribution,
    make_ubgw_sampler,
    tv_distance,
)
from .rng import derive_rng, derive_seeds

__all__ = ["main", "run_experiment", "parse_experiment_config", "build_graph"]


# ---------------------------------------------------------------------------
# config machinery
# ---------------------------------------------------------------------------

_REQUIRED = object()


def _to_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _to_floats(s: str):
    return [float(tok) for tok in s.replace(",", " ").split()]


def _to_ints(s: str):
    return [int(tok) for tok in s.replace(",", " ").split()]


def _to_count(s: str) -> int:
    value = int(s)
    if value < 1:
        raise ValueError(f"must be a positive count, got {value}")
    return value


def _to_posfloat(s: str) -> float:
    value = float(s)
    if not value > 0:
        raise ValueError(f"must be positive, got {value}")
    return value


_COERCE = {
    "int": int,
    "count": _to_count,
    "float": float,
    "posfloat": _to_posfloat,
    "str": str.strip,
    "bool": _to_bool,
    "floats": _to_floats,
    "ints": _to_ints,
}

_GRAPH_SECTION = {
    "family": ("str", _REQUIRED),
    "n": ("count", None),
    "k": ("count", None),
    "dim": ("count", None),
    "side": ("count", None),
    "d": ("count", None),
    "degree": ("str", None),
    "p": ("posfloat", None),
    "path": ("str", None),
    "giant": ("bool", False),
}


def parse_degree_spec(spec: str) -> DegreeDistribution:
    """Parse 'poisson:3.0' or 'delta:4' into a degree distribution."""
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    try:
        if name == "poisson":
            return DegreeDistribution.poisson(float(arg))
        if name == "delta":
            return DegreeDistribution.delta(int(arg))
    except (ValueError, CpLabError) as exc:
        raise ConfigError(f"bad degree spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown degree family {name!r} (use poisson:M or delta:K)")


def build_graph(spec: dict, seed: int) -> Graph:
    """Build the graph described by a parsed [graph] section."""

    def need(key):
        if spec.get(key) is None:
            raise ConfigError(f"graph family {spec['family']!r} needs key {key!r}")
        return spec[key]

    family = spec["family"]
    if family == "star":
        return generate_star(need("k"))
    if family == "cycle":
        return generate_cycle(need("n"))
    if family == "lattice":
        return generate_lattice_box(need("dim"), need("side"))
    if family == "regular":
        return generate_random_regular(need("d"), need("n"),
                                       seed=_subseed(seed, "graph"))
    if family == "configuration":
        mu = parse_degree_spec(need("degree"))
        g = generate_configuration_model(mu, need("n"), seed=_subseed(seed, "graph"))
        if spec.get("giant"):
            g, _ = giant_component(g)
        return g
    if family == "spatial-torus":
        return generate_spatial_torus_graph(need("n"), RadiusLaw(need("p")),
                                            seed=_subseed(seed, "graph"))
    if family == "file":
        return read_edge_list(need("path"))
    raise ConfigError(f"unknown graph family {family!r}")


def _subseed(seed: int, *path) -> int:
    parts = [repr(p) if isinstance(p, float) else p for p in path]
    return int(derive_seeds(seed, *parts, n=1)[0])


def _validate_sections(cp: configparser.ConfigParser, schema: dict,
                       path: str) -> dict:
    """Check every key in the file against the schema, coerce, apply defaults."""
    parsed = {}
    for section in cp.sections():
        if section not in schema:
            raise ConfigError(f"{path}: unknown section [{section}]")
    for section, keys in schema.items():
        got = dict(cp.items(section)) if cp.has_section(section) else {}
        for key in got:
            if key not in keys:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
        out = {}
        for key, (typ, default) in keys.items():
            if key in got:
                try:
                    out[key] = _COERCE[typ](got[key])
                except ValueError as exc:
                    raise ConfigError(
                        f"{path}: bad value for {key!r} in [{section}]: {exc}"
                    ) from exc
            elif default is _REQUIRED:
                raise ConfigError(f"{path}: missing required key {key!r} "
                                  f"in [{section}]")
            else:
                out[key] = default
        parsed[section] = out
    return parsed


def _read_ini(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return cp


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv(header: str, rows) -> str:
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _versions() -> dict:
    return {
        "cp_lab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _write_outputs(out_dir: str, files: dict, manifest: dict) -> None:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8", newline="")
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write to {out_dir}: {exc}") from exc


# ---------------------------------------------------------------------------
# shared random instances for the invariant suites
# ---------------------------------------------------------------------------

def _random_test_graph(rng, n_max: int, density: float = 2.0) -> Graph:
    n = int(rng.integers(2, n_max + 1))
    p = min(0.9, density / n)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Graph.from_edges(n, np.column_stack((iu[keep], ju[keep])))


def _random_subset(rng, n: int) -> np.ndarray:
    k = int(rng.integers(1, n + 1))
    return np.sort(rng.choice(n, size=k, replace=False))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _preset_duality(cfg, seed, threads):
    run = cfg["run"]
    rows = []
    for i in range(run["instances"]):
        rng = derive_rng(seed, "duality", i)
        g = _random_test_graph(rng, run["n_max"])
        tl = sample_timeline(g, run["lam"], run["t_end"],
                             seed=_subseed(seed, "duality-tl", i))
        t = float(rng.uniform(0.05, run["t_end"]))
        a = _random_subset(rng, g.n)
        b = _random_subset(rng, g.n)
        fwd = bool(evolve(tl, a, t)[b].any())
        bwd = bool(evolve(reverse_timeline(tl, t), b, t)[a].any())
        rows.append((i, g.n, g.m, run["lam"], t, fwd, bwd, fwd == bwd))
    files = {"duality.csv": _csv(
        "instance,n,m,lam,t,forward,backward,pathwise_agree", rows)}
    n_agree = sum(1 for r in rows if r[-1])
    return files, {"agree": n_agree, "instances": len(rows)}, 0.0


def _preset_coupling(cfg, seed, threads):
    run = cfg["run"]
    rows = []
    t_end = run["t_end"]
    grid = (0.5 * t_end, t_end)
    for i in range(run["instances"]):
        rng = derive_rng(seed, "coupling", i)
        g = _random_test_graph(rng, run["n_max"])
        tl = sample_timeline(g, run["lam"], t_end,
                             seed=_subseed(seed, "coupling-tl", i))
        a = _random_subset(rng, g.n)
        b = _random_subset(rng, g.n)
        union = np.union1d(a, b)

        additive = all(
            np.array_equal(evolve(tl, union, t),
                           evolve(tl, a, t) | evolve(tl, b, t))
            for t in grid)
        attractive = all(
            bool(np.all(evolve(tl, a, t) <= evolve(tl, union, t)))
            for t in grid)
        x1 = evolve(tl, a, grid[0])
        flow = np.array_equal(
            evolve(tl, a, t_end),
            evolve(shift_timeline(tl, grid[0]), x1.astype(bool),
                   t_end - grid[0]))
        thin = thin_timeline(tl, 0.5 * run["lam"],
                             seed=_subseed(seed, "coupling-thin", i))
        thinned = all(
            bool(np.all(evolve(thin, a, t) <= evolve(tl, a, t)))
            for t in grid)
        for prop, ok in (("additivity", additive), ("attractivity", attractive),
                         ("flow", flow), ("thinning", thinned)):
            rows.append((i, prop, bool(ok)))
    files = {"coupling.csv": _csv("instance,property,agree", rows)}
    n_agree = sum(1 for r in rows if r[-1])
    return files, {"agree": n_agree, "checks": len(rows)}, 0.0


def _preset_oracle(cfg, seed, threads):
    import scipy.stats

    run = cfg["run"]
    lambdas = run["lambdas"]
    rows = []
    worst = 0.0
    for gi in range(run["graphs"]):
        rng = derive_rng(seed, "oracle-graph", gi)
        g = _random_test_graph(rng, run["n_max"], density=run["density"])
        lam = lambdas[gi % len(lambdas)]
        exact = ctmc_exact_expected_extinction(g, lam, "full")
        direct = sample_extinction_times(
            g, lam, run["trials"], seed=_subseed(seed, "oracle-direct", gi))
        statuses, tl_times = sample_timeline_extinction_times(
            g, lam, run["trials"], seed=_subseed(seed, "oracle-timeline", gi))
        worst = max(worst,
                    float((~direct.extinct).mean()),
                    float((statuses != 0).mean()))
        d_mean = float(direct.times.mean())
        d_se = float(direct.times.std(ddof=1)) / math.sqrt(direct.times.size)
        t_mean = float(tl_times.mean())
        t_se = float(tl_times.std(ddof=1)) / math.sqrt(tl_times.size)
        ks_p = float(scipy.stats.ks_2samp(direct.times, tl_times).pvalue)
        ok = (abs(d_mean - exact) <= 3 * d_se
              and abs(t_mean - exact) <= 3 * t_se
              and ks_p > run["ks_alpha"])
        rows.append((gi, g.n, g.m, lam, exact, d_mean, d_se, t_mean, t_se,
                     ks_p, ok))
    files = {"oracle.csv": _csv(
        "graph,n,m,lam,exact,direct_mean,direct_se,timeline_mean,"
        "timeline_se,ks_p,agree", rows)}
    n_agree = sum(1 for r in rows if r[-1])
    return files, {"agree": n_agree, "cells": len(rows)}, worst


def _preset_star_survival(cfg, seed, threads):
    run = cfg["run"]
    rows = []
    slope_rows = []
    worst = 0.0
    for lam in run["lambdas"]:
        samples = {}
        for k in run["ks"]:
            est = estimate_star_extinction(
                k, lam, run["trials"], run["horizon"],
                seed=_subseed(seed, "star", lam, k),
                max_events=run["max_events"], threads=threads)
            samples[k] = est.extras["times"]
            worst = max(worst, est.n_censored / est.n_samples)
            rows.append((lam, k, est.extras["median"], est.extras["log_median"],
                         est.mean, est.stderr, est.n_samples, est.n_censored))
        if len(run["ks"]) >= 2:
            slope, lo, hi = bootstrap_log_median_slope(
                samples, seed=_subseed(seed, "star-slope", lam),
                n_boot=run["bootstrap"], level=run["level"])
            slope_rows.append((lam, slope, lo, hi, bool(lo > 0)))
    files = {
        "star_extinction.csv": _csv(
            "lam,k,median,log_median,mean,stderr,n,n_censored", rows),
        "star_slope.csv": _csv("lam,slope,ci_lo,ci_hi,positive", slope_rows),
    }
    return files, {"cells": len(rows)}, worst


def _preset_max_radius(cfg, seed, threads):
    run = cfg["run"]
    law = RadiusLaw(run["p"])
    n = run["n"]
    threshold = n / math.log(n) ** run["exponent"]
    rows = []
    below = 0
    for i in range(run["seeds"]):
        rng = derive_rng(seed, "max-radius", i)
        radii = law.sample_many(1.0 - rng.random(n))
        r_max = float(radii.max())
        hit = r_max <= threshold
        below += int(hit)
        rows.append((i, r_max, hit))
    closed_form = (1.0 - law.survival(threshold)) ** n
    freq = below / run["seeds"]
    z = 2.5758293035489004  # normal quantile at 0.995
    half = z * math.sqrt(closed_form * (1 - closed_form) / run["seeds"])
    files = {
        "max_radius.csv": _csv("seed_index,r_max,below_threshold", rows),
        "max_radius_summary.csv": _csv(
            "n,p,exponent,threshold,freq,closed_form,ci_lo,ci_hi,inside",
            [(n, run["p"], run["exponent"], threshold, freq, closed_form,
              closed_form - half, closed_form + half,
              bool(closed_form - half <= freq <= closed_form + half))]),
    }
    return files, {"freq": freq, "closed_form": closed_form}, 0.0


def _preset_slow_extinction(cfg, seed, threads):
    run = cfg["run"]
    torus = generate_spatial_torus_graph(run["n"], RadiusLaw(run["p"]),
                                         seed=_subseed(seed, "torus"))
    mean_deg = 2.0 * torus.m / torus.n
    matched = generate_configuration_model(
        DegreeDistribution.poisson(mean_deg, cap=256), run["n"],
        seed=_subseed(seed, "matched-cm"))
    rows = []
    medians = {}
    worst = 0.0
    for name, g in (("spatial-torus", torus), ("configuration", matched)):
        sample = sample_extinction_times(
            g, run["lam"], run["trials"], seed=_subseed(seed, "slow", name),
            max_events=run["max_events"])
        med = float(np.median(sample.times))
        medians[name] = med
        frac_cens = float((~sample.extinct).mean())
        worst = max(worst, frac_cens)
        rows.append((name, g.n, g.m, 2.0 * g.m / g.n, med,
                     int((~sample.extinct).sum()), run["trials"]))
    ratio = medians["spatial-torus"] / medians["configuration"]
    files = {
        "slow_extinction.csv": _csv(
            "family,n,m,mean_degree,median,n_censored,trials", rows),
        "slow_extinction_summary.csv": _csv(
            "torus_median,cm_median,ratio",
            [(medians["spatial-torus"], medians["configuration"], ratio)]),
    }
    return files, {"ratio": ratio}, worst


def _preset_lln(cfg, seed, threads):
    run = cfg["run"]
    mu = parse_degree_spec(run["degree"])
    eta = estimate_eta_geq_R(mu, run["lam"], run["r"], run["eta_samples"],
                             seed=_subseed(seed, "lln-eta"), threads=threads)
    g_big = generate_configuration_model(mu, run["n_big"],
                                         seed=_subseed(seed, "lln-big"))
    z_big = estimate_Z_geq_R(g_big, run["lam"], run["r"],
                             run["trials_per_vertex"], run["vertex_sample"],
                             seed=_subseed(seed, "lln-z"), threads=threads)
    gap = abs(eta.mean - z_big.mean)
    agree = gap <= 3.0 * (eta.stderr + z_big.stderr)

    var_rows = []
    variances = {}
    for n in (run["n_small"], run["n_big"]):
        values = []
        for r in range(run["realizations"]):
            g = generate_configuration_model(
                mu, n, seed=_subseed(seed, "lln-graph", n, r))
            est = estimate_Z_geq_R(
                g, run["lam"], run["r"], 1, min(n, run["vertex_sample"]),
                seed=_subseed(seed, "lln-zvar", n, r), threads=threads)
            values.append(est.mean)
            var_rows.append((n, r, est.mean))
        variances[n] = float(np.var(values, ddof=1))
    decreasing = variances[run["n_big"]] < variances[run["n_small"]]
    files = {
        "lln_agreement.csv": _csv(
            "estimator,mean,stderr,n,n_censored",
            [("eta_geq_R", eta.mean, eta.stderr, eta.n_samples, eta.n_censored),
             ("z_geq_R", z_big.mean, z_big.stderr, z_big.n_samples,
              z_big.n_censored)]),
        "lln_realizations.csv": _csv("n,realization,z_fraction", var_rows),
        "lln_summary.csv": _csv(
            "gap,combined_3se,agree,var_small,var_big,variance_decreasing",
            [(gap, 3.0 * (eta.stderr + z_big.stderr), agree,
              variances[run["n_small"]], variances[run["n_big"]],
              bool(decreasing))]),
    }
    worst = max(eta.n_censored / eta.n_samples, z_big.n_censored / z_big.n_samples)
    return files, {"agree": bool(agree), "variance_decreasing": bool(decreasing)}, worst


def _preset_metastable(cfg, seed, threads):
    run = cfg["run"]
    mu = parse_degree_spec(run["degree"])
    g = generate_configuration_model(mu, run["n"],
                                     seed=_subseed(seed, "metastable-graph"))
    ts = run["ts"] if run["ts"] is not None else [math.log(run["n"])]
    rows = []
    worst = 0.0
    for lam in run["lambdas"]:
        dens = estimate_density(g, lam, ts, run["density_trials"],
                                seed=_subseed(seed, "metastable-density", lam),
                                threads=threads)
        eta = estimate_eta_geq_R(mu, lam, run["r"], run["eta_samples"],
                                 seed=_subseed(seed, "metastable-eta", lam),
                                 threads=threads)
        for t, d in zip(ts, dens):
            bound = eta.mean + 3.0 * (d.stderr + eta.stderr) + run["slack"]
            worst = max(worst, d.n_censored / max(1, d.n_samples))
            rows.append((lam, t, d.mean, d.stderr, eta.mean, eta.stderr,
                         run["slack"], bound, bool(d.mean <= bound)))
    files = {"metastable.csv": _csv(
        "lam,t,density,density_se,eta_R,eta_se,slack,bound,below_bound", rows)}
    return files, {"cells": len(rows)}, worst


def _preset_local_convergence(cfg, seed, threads):
    run = cfg["run"]
    mu = DegreeDistribution.delta(run["d"])
    limit = limit_ball_distribution(make_ubgw_sampler(mu), run["depth"],
                                    n_samples=1,
                                    seed=_subseed(seed, "lc-limit"))
    rows = []
    tvs = []
    for n in run["ns"]:
        g = generate_random_regular(run["d"], n,
                                    seed=_subseed(seed, "lc-graph", n))
        emp = empirical_ball_distribution(g, run["depth"])
        tv = tv_distance(emp, limit)
        tvs.append(tv)
        rows.append((n, run["depth"], tv))
    monotone = all(b <= a for a, b in zip(tvs, tvs[1:]))
    files = {"local_convergence.csv": _csv("n,depth,tv_to_limit", rows),
             "local_convergence_summary.csv": _csv(
                 "monotone_decreasing,final_tv",
                 [(bool(monotone), tvs[-1])])}
    return files, {"monotone": bool(monotone), "final_tv": tvs[-1]}, 0.0


def _preset_tightness(cfg, seed, threads):
    run = cfg["run"]
    graphs = [generate_cycle(n) for n in run["ns"]]
    rows_in = tightness_diagnostic(graphs, run["lam"], run["quantiles"],
                                   run["trials"], seed=_subseed(seed, "tight"),
                                   horizon=run["horizon"], threads=threads)
    rows = []
    worst = 0.0
    for row in rows_in:
        worst = max(worst, row["n_censored"] / row["n_trials"])
        for q, value in sorted(row["quantiles"].items()):
            rows.append((row["n_vertices"], q, value, row["n_censored"]))
    files = {"tightness.csv": _csv("n,quantile,value,n_censored", rows)}
    return files, {"graphs": len(rows_in)}, worst


def _preset_sparsity(cfg, seed, threads):
    run = cfg["run"]
    mu = parse_degree_spec(run["degree"])
    rows = []
    for n in run["ns"]:
        cm = generate_configuration_model(mu, n,
                                          seed=_subseed(seed, "sparsity-cm", n))
        torus = generate_spatial_torus_graph(n, RadiusLaw(run["p"]),
                                             seed=_subseed(seed, "sparsity-torus", n))
        for name, g in (("configuration", cm), ("spatial-torus", torus)):
            for eps in run["eps"]:
                rows.append((name, n, eps, top_eps_degree_sum(g, eps)))
    files = {"sparsity.csv": _csv("family,n,eps,top_degree_sum_per_n", rows)}
    return files, {"rows": len(rows)}, 0.0


def _preset_almostlocal(cfg, seed, threads):
    run = cfg["run"]
    graph_seed = _subseed(seed, "almostlocal-graph")
    g = build_graph(cfg["graph"], graph_seed)
    ests = almostlocal_diagnostic(g, run["lam"], run["t"], run["radii"],
                                  run["trials"],
                                  seed=_subseed(seed, "almostlocal"),
                                  threads=threads)
    rows = []
    worst = 0.0
    for r, est in zip(run["radii"], ests):
        worst = max(worst, est.n_censored / est.n_samples)
        rows.append((r, run["t"], est.mean, est.stderr, est.ci[0], est.ci[1],
                     est.n_censored))
    files = {"almostlocal.csv": _csv(
        "radius,t,joint_prob,stderr,ci_lo,ci_hi,n_censored", rows)}
    return files, {"radii": len(rows)}, worst


_COMMON_EXPERIMENT = {
    "preset": ("str", _REQUIRED),
    "seed": ("int", None),
    "max_censored_fraction": ("float", None),
}

_PRESETS = {
    "duality-check": (
        "exact pathwise duality of forward and time-reversed runs on shared "
        "timelines over random instances",
        {"run": {"instances": ("count", 1000), "n_max": ("count", 20),
                 "lam": ("posfloat", 1.0), "t_end": ("posfloat", 2.0)}},
        _preset_duality, 0.0),
    "coupling-check": (
        "exact additivity, attractivity, flow, and thinning couplings on "
        "shared timelines",
        {"run": {"instances": ("count", 1000), "n_max": ("count", 20),
                 "lam": ("posfloat", 1.0), "t_end": ("posfloat", 2.0)}},
        _preset_coupling, 0.0),
    "oracle-check": (
        "both simulation engines against exact chain expectations on small "
        "random graphs, plus a two-sample distribution test",
        {"run": {"graphs": ("count", 20), "n_max": ("count", 10),
                 "trials": ("count", 100000),
                 "lambdas": ("floats", [0.3, 1.0, 3.0]),
                 "density": ("posfloat", 1.5),
                 "ks_alpha": ("posfloat", 0.01)}},
        _preset_oracle, 0.0),
    "star-survival": (
        "extinction-time growth on stars: per-size medians and the "
        "bootstrap slope of log median versus leaf count",
        {"run": {"lambdas": ("floats", [0.5]),
                 "ks": ("ints", [50, 100, 200, 400]),
                 "trials": ("count", 200),
                 "horizon": ("posfloat", math.inf),
                 "max_events": ("count", 10 ** 6),
                 "bootstrap": ("count", 2000),
                 "level": ("posfloat", 0.99)}},
        _preset_star_survival, 1.0),
    "max-radius": (
        "largest sampled interaction radius against the closed-form tail "
        "bound frequency",
        {"run": {"p": ("posfloat", 1.5), "n": ("count", 10000),
                 "seeds": ("count", 200), "exponent": ("posfloat", 1.6)}},
        _preset_max_radius, 0.0),
    "slow-extinction": (
        "median full-start extinction time on the heavy-tailed geometric "
        "torus versus a degree-mean-matched configuration model",
        {"run": {"lam": ("posfloat", 0.2), "n": ("count", 2000),
                 "p": ("posfloat", 1.5), "trials": ("count", 50),
                 "max_events": ("count", 10 ** 7)}},
        _preset_slow_extinction, 1.0),
    "lln-concentration": (
        "agreement of the tree-root passage probability with the "
        "finite-graph vertex fraction, and its concentration across "
        "graph realizations",
        {"run": {"lam": ("posfloat", 0.5), "r": ("count", 2),
                 "degree": ("str", "poisson:3.0"),
                 "eta_samples": ("count", 20000),
                 "n_big": ("count", 10000), "n_small": ("count", 1000),
                 "realizations": ("count", 20),
                 "trials_per_vertex": ("count", 1),
                 "vertex_sample": ("count", 10000)}},
        _preset_lln, 0.05),
    "metastable-upper": (
        "long-run infected density from the all-infected start against the "
        "passage-probability upper proxy",
        {"run": {"lambdas": ("floats", [0.3, 0.8]), "n": ("count", 10000),
                 "degree": ("str", "poisson:3.0"), "r": ("count", 4),
                 "ts": ("floats", None),
                 "density_trials": ("count", 200),
                 "eta_samples": ("count", 4000),
                 "slack": ("posfloat", 0.05)}},
        _preset_metastable, 0.05),
    "local-convergence": (
        "total-variation distance of empirical neighborhood distributions "
        "from the regular-tree limit as graphs grow",
        {"run": {"ns": ("ints", [100, 1000, 10000]), "d": ("count", 3),
                 "depth": ("count", 2)}},
        _preset_local_convergence, 0.0),
    "tightness": (
        "stability of single-start extinction-time quantiles across graph "
        "sizes",
        {"run": {"ns": ("ints", [1000, 10000]), "lam": ("posfloat", 0.1),
                 "quantiles": ("floats", [0.5, 0.9, 0.99]),
                 "trials": ("count", 4000),
                 "horizon": ("posfloat", 100.0)}},
        _preset_tightness, 0.05),
    "sparsity": (
        "normalized top-degree sums across graph families and sizes",
        {"run": {"degree": ("str", "poisson:3.0"), "p": ("posfloat", 1.5),
                 "eps": ("floats", [0.01, 0.1]),
                 "ns": ("ints", [1000, 2000, 4000])}},
        _preset_sparsity, 0.0),
    "almostlocal": (
        "joint probability of early death after reaching a given distance, "
        "per radius",
        {"run": {"lam": ("posfloat", 0.5), "t": ("posfloat", 5.0),
                 "radii": ("ints", [1, 2, 3]), "trials": ("count", 4000)},
         "graph": _GRAPH_SECTION},
        _preset_almostlocal, 0.05),
}


def parse_experiment_config(path: str):
    """Parse and validate an experiment config; returns (preset, cfg, seed,
    budget) where seed may be None if the file does not set one."""
    cp = _read_ini(path)
    if not cp.has_section("experiment") or not cp.has_option("experiment", "preset"):
        raise ConfigError(f"{path}: missing [experiment] preset")
    preset = cp.get("experiment", "preset").strip()
    if preset not in _PRESETS:
        known = ", ".join(sorted(_PRESETS))
        raise ConfigError(f"{path}: unknown preset {preset!r} (known: {known})")
    _, schema, _, default_budget = _PRESETS[preset]
    full_schema = dict(schema)
    full_schema["experiment"] = _COMMON_EXPERIMENT
    cfg = _validate_sections(cp, full_schema, path)
    budget = cfg["experiment"]["max_censored_fraction"]
    if budget is None:
        budget = default_budget
    if not 0.0 <= budget <= 1.0:
        raise ConfigError(f"{path}: max_censored_fraction must be in [0, 1]")
    return preset, cfg, cfg["experiment"]["seed"], budget


def run_experiment(config_path: str, out_dir: str, seed: int | None = None,
                   threads: int = 1) -> int:
    """Run a preset experiment end to end.  Returns the process exit code."""
    preset, cfg, cfg_seed, budget = parse_experiment_config(config_path)
    master_seed = seed if seed is not None else cfg_seed
    if master_seed is None:
        raise ConfigError("a master seed is required (config [experiment] "
                          "seed or --seed)")
    description, _, runner, _ = _PRESETS[preset]
    files, summary, censored = runner(cfg, master_seed, threads)
    overrun = censored > budget
    manifest = {
        "preset": preset,
        "description": description,
        "seed": master_seed,
        "threads": threads,
        "config": {k: v for k, v in cfg.items()},
        "censored_fraction": censored,
        "max_censored_fraction": budget,
        "censoring_overrun": overrun,
        "outputs": sorted(files),
        "versions": _versions(),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    _write_outputs(out_dir, files, manifest)
    return 2 if overrun else 0


# ---------------------------------------------------------------------------
# estimate subcommand
# ---------------------------------------------------------------------------

_ESTIMATE_SCHEMA = {
    "estimate": {
        "estimator": ("str", _REQUIRED),
        "seed": ("int", None),
        "max_censored_fraction": ("float", 0.05),
        "lam": ("float", _REQUIRED),
        "r": ("int", None),
        "radii": ("ints", None),
        "ts": ("floats", None),
        "t": ("posfloat", None),
        "trials": ("count", 1000),
        "trials_per_vertex": ("count", 1),
        "vertex_sample": ("count", 1000),
        "samples": ("count", 1000),
        "degree": ("str", None),
        "k": ("count", None),
        "horizon": ("posfloat", math.inf),
        "max_events": ("count", 10 ** 7),
    },
    "graph": _GRAPH_SECTION,
}


def _run_estimate(config_path: str, out_dir: str, seed: int | None,
                  threads: int) -> int:
    cp = _read_ini(config_path)
    schema = dict(_ESTIMATE_SCHEMA)
    if not cp.has_section("graph"):
        schema = {"estimate": _ESTIMATE_SCHEMA["estimate"]}
    cfg = _validate_sections(cp, schema, config_path)
    est_cfg = cfg["estimate"]
    master_seed = seed if seed is not None else est_cfg["seed"]
    if master_seed is None:
        raise ConfigError("a master seed is required (config [estimate] "
                          "seed or --seed)")
    name = est_cfg["estimator"]

    def need(key):
        if est_cfg.get(key) is None:
            raise ConfigError(f"estimator {name!r} needs key {key!r}")
        return est_cfg[key]

    def need_graph():
        if "graph" not in cfg:
            raise ConfigError(f"estimator {name!r} needs a [graph] section")
        return build_graph(cfg["graph"], _subseed(master_seed, "graph"))

    rows = []
    if name == "eta_geq_R":
        mu = parse_degree_spec(need("degree"))
        est = estimate_eta_geq_R(mu, est_cfg["lam"], need("r"),
                                 est_cfg["samples"],
                                 seed=_subseed(master_seed, "estimate"),
                                 threads=threads)
        rows.append(estimate_csv_row(name, {"lam": est_cfg["lam"],
                                            "R": est_cfg["r"],
                                            "degree": est_cfg["degree"]},
                                     est, master_seed))
        ests = [est]
    elif name == "z_geq_R":
        g = need_graph()
        est = estimate_Z_geq_R(g, est_cfg["lam"], need("r"),
                               est_cfg["trials_per_vertex"],
                               est_cfg["vertex_sample"],
                               seed=_subseed(master_seed, "estimate"),
                               threads=threads)
        rows.append(estimate_csv_row(name, {"lam": est_cfg["lam"],
                                            "R": est_cfg["r"]},
                                     est, master_seed))
        ests = [est]
    elif name == "density":
        g = need_graph()
        ts = need("ts")
        ests = estimate_density(g, est_cfg["lam"], ts, est_cfg["trials"],
                                seed=_subseed(master_seed, "estimate"),
                                threads=threads)
        for t, est in zip(ts, ests):
            rows.append(estimate_csv_row(name, {"lam": est_cfg["lam"], "t": t},
                                         est, master_seed))
    elif name == "star_extinction":
        est = estimate_star_extinction(need("k"), est_cfg["lam"],
                                       est_cfg["trials"], est_cfg["horizon"],
                                       seed=_subseed(master_seed, "estimate"),
                                       max_events=est_cfg["max_events"],
                                       threads=threads)
        rows.append(estimate_csv_row(name, {"lam": est_cfg["lam"],
                                            "k": est_cfg["k"]},
                                     est, master_seed))
        ests = [est]
    elif name == "almostlocal":
        g = need_graph()
        radii = need("radii")
        ests = almostlocal_diagnostic(g, est_cfg["lam"], need("t"), radii,
                                      est_cfg["trials"],
                                      seed=_subseed(master_seed, "estimate"),
                                      threads=threads)
        for r, est in zip(radii, ests):
            rows.append(estimate_csv_row(name, {"lam": est_cfg["lam"],
                                                "t": est_cfg["t"], "R": r},
                                         est, master_seed))
    else:
        raise ConfigError(f"unknown estimator {name!r}")

    text = ESTIMATE_CSV_HEADER + "\n" + "".join(rows)
    _write_outputs(out_dir, {"estimates.csv": text}, {
        "estimator": name,
        "seed": master_seed,
        "threads": threads,
        "config": cfg,
        "versions": _versions(),
        "created": datetime.now(timezone.utc).isoformat(),
    })
    worst = max(e.n_censored / max(1, e.n_samples) for e in ests)
    return 2 if worst > est_cfg["max_censored_fraction"] else 0


# ---------------------------------------------------------------------------
# gen and sim subcommands
# ---------------------------------------------------------------------------

def _run_gen(args) -> int:
    spec = {
        "family": args.family,
        "n": args.n, "k": args.k, "dim": args.dim, "side": args.side,
        "d": args.d, "degree": args.degree, "p": args.p, "path": None,
        "giant": args.giant,
    }
    needs_seed = args.family in ("regular", "configuration", "spatial-torus")
    if needs_seed and args.seed is None:
        raise ConfigError(f"family {args.family!r} is random and needs --seed")
    g = build_graph(spec, args.seed if args.seed is not None else 0)
    write_edge_list(g, args.out)
    print(f"wrote {args.out}: n={g.n} m={g.m}")
    return 0


def _run_sim(args) -> int:
    g = read_edge_list(args.graph)
    if args.init == "full":
        init = "full"
    else:
        try:
            init = [int(tok) for tok in args.init.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"bad --init: {exc}") from exc
    if args.sample_times is not None:
        times = [float(tok) for tok in args.sample_times.replace(",", " ").split()]
    elif math.isfinite(args.horizon):
        times = geometric_time_grid(args.horizon).tolist()
    else:
        raise ConfigError("an infinite --horizon needs explicit --sample-times")
    try:
        traj = run_direct(g, args.lam, init, args.horizon, seed=args.seed,
                          max_events=args.max_events, sample_times=times)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    Path(args.out).write_text(trajectory_csv_text(traj), encoding="utf-8",
                              newline="")
    ext = traj.extinction_time
    print(f"status={traj.status} stop_time={traj.stop_time!r} "
          f"extinction_time={'none' if ext is None else repr(ext)} "
          f"events={traj.n_events} censored={str(traj.censored).lower()}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse that exits with code 1 on usage errors, keeping 2 for
    censoring-budget overruns."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_threads() -> int:
    env = os.environ.get("CP_LAB_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


def _build_parser() -> _Parser:
    parser = _Parser(prog="cp-lab",
                     description="Contact-process experiments, reproducibly.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a graph as an edge-list file",
                         description="Write a graph to an edge-list file.")
    gen.add_argument("--family", required=True,
                     choices=["star", "cycle", "lattice", "regular",
                              "configuration", "spatial-torus"])
    gen.add_argument("--n", type=int)
    gen.add_argument("--k", type=int)
    gen.add_argument("--dim", type=int)
    gen.add_argument("--side", type=int)
    gen.add_argument("--d", type=int)
    gen.add_argument("--degree", help="poisson:MEAN or delta:K")
    gen.add_argument("--p", type=float, help="radius tail exponent")
    gen.add_argument("--giant", action="store_true",
                     help="keep only the largest component")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", required=True)

    sim = sub.add_parser("sim", help="run one trajectory on a graph file",
                         description="Run one trajectory, write its CSV.")
    sim.add_argument("--graph", required=True)
    sim.add_argument("--lam", type=float, required=True)
    sim.add_argument("--horizon", type=float, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--init", default="full",
                     help='"full" or comma-separated vertex ids')
    sim.add_argument("--sample-times", help="comma-separated times")
    sim.add_argument("--max-events", type=int, default=10 ** 7)
    sim.add_argument("--out", required=True)

    est = sub.add_parser("estimate", help="run one estimator from a config",
                         description="Run a named estimator from an INI "
                                     "config, write estimates.csv.")
    est.add_argument("--config", required=True)
    est.add_argument("--out", required=True)
    est.add_argument("--seed", type=int)
    est.add_argument("--threads", type=int, default=None)

    presets = "; ".join(f"{name}: {desc}"
                        for name, (desc, _, _, _) in sorted(_PRESETS.items()))
    exp = sub.add_parser("experiment", help="run a preset experiment",
                         description=f"Run a preset experiment. Presets: "
                                     f"{presets}")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", required=True)
    exp.add_argument("--seed", type=int)
    exp.add_argument("--threads", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads is None:
        threads = _default_threads()
    try:
        if args.command == "gen":
            return _run_gen(args)
        if args.command == "sim":
            return _run_sim(args)
        if args.command == "estimate":
            return _run_estimate(args.config, args.out, args.seed, threads)
        if args.command == "experiment":
            return run_experiment(args.config, args.out, args.seed, threads)
    except (CpLabError, OSError) as exc:
        print(f"cp-lab: error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
