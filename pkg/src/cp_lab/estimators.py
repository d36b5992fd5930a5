"""Monte Carlo estimators with uncertainty reporting.

Every estimator here follows the same rules: the master seed plus the
arguments determine the result exactly, trials are indexed so that the
degree of thread parallelism cannot change the output, and censoring is
surfaced in the returned counts rather than silently dropped.
"""

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from . import _kernels
from .contact_process import (
    DEFAULT_MAX_EVENTS,
    first_passage_radius,
    sample_first_passage,
)
from .errors import BallTooLarge
from .graphs import DegreeDistribution, Graph, generate_star, generate_ubgw_ball
from .rng import derive_rng, derive_seeds

__all__ = [
    "ESTIMATE_CSV_HEADER",
    "Estimate",
    "almostlocal_diagnostic",
    "bootstrap_log_median_slope",
    "estimate_csv_row",
    "estimate_density",
    "estimate_eta_geq_R",
    "estimate_star_extinction",
    "estimate_Z_geq_R",
    "mean_estimate",
    "proportion_estimate",
    "tightness_diagnostic",
    "wilson_interval",
]


@dataclass(frozen=True)
class Estimate:
    """Point estimate with an attached confidence interval.

    ``extras`` carries estimator-specific raw material (sample arrays,
    medians) and takes no part in comparisons or the CSV row format.
    """

    mean: float
    stderr: float
    n_samples: int
    n_censored: int
    ci_level: float
    ci: tuple
    extras: dict | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be nonnegative")
        lo, hi = self.ci
        if not lo <= self.mean <= hi:
            raise ValueError(f"mean {self.mean} outside interval ({lo}, {hi})")
        if not 0 <= self.n_censored <= self.n_samples:
            raise ValueError("censored count exceeds sample count")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must be in (0, 1)")


ESTIMATE_CSV_HEADER = "estimator,param_json,mean,stderr,n,n_censored,ci_lo,ci_hi,seed"


def estimate_csv_row(name: str, params: dict, est: Estimate, seed: int) -> str:
    """One CSV row (with trailing newline) in the shared estimator format."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        name,
        json.dumps(params, sort_keys=True, separators=(",", ":")),
        repr(float(est.mean)),
        repr(float(est.stderr)),
        est.n_samples,
        est.n_censored,
        repr(float(est.ci[0])),
        repr(float(est.ci[1])),
        seed,
    ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# confidence intervals
# ---------------------------------------------------------------------------

def wilson_interval(n_success: int, n: int, level: float = 0.95) -> tuple:
    """Wilson score interval for a binomial proportion.

    With z the normal quantile at (1+level)/2 and p = k/n, the interval is
    (p + z^2/2n +- z*sqrt(p(1-p)/n + z^2/4n^2)) / (1 + z^2/n).  It always
    contains p, its lower end is exactly 0 at k=0, and its upper end is
    exactly 1 at k=n; near-degenerate proportions keep sensible coverage,
    which the plain Wald interval does not.
    """
    if n < 1:
        raise ValueError("need at least one trial")
    if not 0 <= n_success <= n:
        raise ValueError("success count out of range")
    z = float(scipy.stats.norm.ppf(0.5 * (1.0 + level)))
    p = n_success / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    # the boundary endpoints are exact analytically; do not let rounding
    # push them off 0 or 1
    lo = 0.0 if n_success == 0 else max(0.0, center - half)
    hi = 1.0 if n_success == n else min(1.0, center + half)
    return (lo, hi)


def proportion_estimate(n_success: int, n: int, level: float = 0.95,
                        n_censored: int = 0, extras: dict | None = None) -> Estimate:
    p = n_success / n
    return Estimate(
        mean=p,
        stderr=math.sqrt(p * (1.0 - p) / n),
        n_samples=n,
        n_censored=n_censored,
        ci_level=level,
        ci=wilson_interval(n_success, n, level),
        extras=extras,
    )


def t_interval(values: np.ndarray, level: float = 0.95) -> tuple:
    """(mean, stderr, lo, hi) with a Student-t interval; degenerate at n=1."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 1:
        raise ValueError("need a nonempty 1-d sample")
    mean = float(values.mean())
    if values.size == 1:
        return mean, 0.0, mean, mean
    sem = float(values.std(ddof=1)) / math.sqrt(values.size)
    tq = float(scipy.stats.t.ppf(0.5 * (1.0 + level), df=values.size - 1))
    return mean, sem, mean - tq * sem, mean + tq * sem


def mean_estimate(values: np.ndarray, level: float = 0.95,
                  n_censored: int = 0, extras: dict | None = None) -> Estimate:
    mean, sem, lo, hi = t_interval(values, level)
    return Estimate(mean=mean, stderr=sem, n_samples=int(np.asarray(values).size),
                    n_censored=n_censored, ci_level=level, ci=(lo, hi),
                    extras=extras)


# ---------------------------------------------------------------------------
# trial parallelism
# ---------------------------------------------------------------------------

def _trial_ranges(n: int, threads: int):
    n_chunks = min(n, max(1, threads) * 4)
    edges = np.linspace(0, n, n_chunks + 1).astype(np.int64)
    return [range(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _for_each_trial(n: int, threads: int, body) -> None:
    """Run body(i) for i in range(n), optionally across a thread pool.

    Each trial writes only to its own slots of preallocated output arrays,
    so any split into chunks produces identical results; the compiled
    kernels release the GIL, which is where the parallel speedup comes from.
    """
    if threads <= 1 or n <= 1:
        for i in range(n):
            body(i)
        return

    def run(rg):
        for i in rg:
            body(i)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run, _trial_ranges(n, threads)))


def _run_seed_chunks(seeds: np.ndarray, threads: int, call):
    """call(seed_chunk) -> tuple of per-trial arrays, concatenated in order."""
    if threads <= 1 or seeds.size <= 1:
        return call(seeds)
    chunks = [seeds[rg.start:rg.stop] for rg in _trial_ranges(seeds.size, threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(call, chunks))
    return tuple(np.concatenate([part[j] for part in parts])
                 for j in range(len(parts[0])))


# ---------------------------------------------------------------------------
# passage-probability estimators
# ---------------------------------------------------------------------------

def estimate_eta_geq_R(mu: DegreeDistribution, lam: float, R: int,
                       n_samples: int, seed: int, *,
                       vertex_cap: int = 10 ** 6,
                       max_events: int = DEFAULT_MAX_EVENTS,
                       level: float = 0.95, threads: int = 1) -> Estimate:
    """Probability that an infection started at the root of a fresh
    unimodular branching-process tree reaches graph distance ``R`` before
    dying out.

    Each trial draws its own depth-R ball (the tree law is averaged over,
    not conditioned on) and runs the process with no time horizon, so the
    only censoring left is the event cap.  Reaching distance R is decided
    by the depth-R ball alone: the first visit to distance R happens from
    a vertex at distance R-1, so no edge beyond the ball can matter before
    the decision.  Oversized balls and event-capped runs are counted as
    hits and reported in ``n_censored`` -- the estimate is used as an upper
    proxy, so unknowns round up.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    ball_seeds = derive_seeds(seed, "eta-ball", n=n_samples)
    run_seeds = derive_seeds(seed, "eta-run", n=n_samples)
    hits = np.zeros(n_samples, np.uint8)
    capped = np.zeros(n_samples, np.uint8)

    def body(i):
        try:
            ball = generate_ubgw_ball(mu, R, int(ball_seeds[i]),
                                      vertex_cap=vertex_cap)
        except BallTooLarge:
            hits[i] = 1
            capped[i] = 1
            return
        status, _ = first_passage_radius(ball.graph, lam, ball.root, R,
                                         math.inf, int(run_seeds[i]),
                                         max_events=max_events)
        if status == "hit":
            hits[i] = 1
        elif status == "event_cap":
            hits[i] = 1
            capped[i] = 1

    _for_each_trial(n_samples, threads, body)
    return proportion_estimate(int(hits.sum()), n_samples, level,
                               n_censored=int(capped.sum()))


def estimate_Z_geq_R(g: Graph, lam: float, R: int, n_trials_per_vertex: int,
                     vertex_sample: int, seed: int, *,
                     max_events: int = DEFAULT_MAX_EVENTS,
                     level: float = 0.95, threads: int = 1) -> Estimate:
    """Mean fraction of vertices from which the infection reaches distance
    ``R`` before dying out.

    Vertices are sampled uniformly with replacement; each gets its own
    batch of independent runs.  The confidence interval is a t-interval
    over the per-vertex success fractions, which absorbs both the run
    noise and the vertex-to-vertex variation; the per-vertex fractions
    are returned in ``extras``.
    """
    if R < 0:
        raise ValueError("R must be nonnegative")
    if n_trials_per_vertex < 1 or vertex_sample < 1:
        raise ValueError("trial counts must be positive")
    roots = derive_rng(seed, "z-roots").integers(0, g.n, size=vertex_sample)
    vertex_seeds = derive_seeds(seed, "z-vertex", n=vertex_sample)
    per_vertex = np.zeros(vertex_sample)
    capped = np.zeros(vertex_sample, np.int64)

    def body(j):
        statuses, _ = sample_first_passage(
            g, lam, int(roots[j]), R, n_trials_per_vertex,
            int(vertex_seeds[j]), max_events=max_events)
        hit = (statuses == 3) | (statuses == 2)
        per_vertex[j] = hit.mean()
        capped[j] = int((statuses == 2).sum())

    _for_each_trial(vertex_sample, threads, body)
    mean, sem, lo, hi = t_interval(per_vertex, level)
    return Estimate(
        mean=mean,
        stderr=sem,
        n_samples=vertex_sample * n_trials_per_vertex,
        n_censored=int(capped.sum()),
        ci_level=level,
        ci=(max(0.0, lo), min(1.0, hi)),
        extras={"roots": roots, "per_vertex": per_vertex},
    )


# ---------------------------------------------------------------------------
# density and extinction-time estimators
# ---------------------------------------------------------------------------

def estimate_density(g: Graph, lam: float, t_list, n_trials: int, seed: int, *,
                     max_events: int = DEFAULT_MAX_EVENTS,
                     level: float = 0.95, threads: int = 1) -> list:
    """Expected infected fraction at each requested time, starting from
    everything infected.  Returns one Estimate per entry of ``t_list``.

    Runs censored by the event cap leave NaN at the times they never
    reached; those slots drop out of the per-time average and the runs are
    counted in ``n_censored``.
    """
    t_list = [float(t) for t in t_list]
    if not t_list:
        raise ValueError("need at least one sample time")
    seeds = derive_seeds(seed, "density", n=n_trials)
    horizon = max(t_list)
    order = np.argsort(t_list, kind="stable")
    sorted_times = np.asarray([t_list[j] for j in order])

    def call(chunk):
        out = _kernels.density_batch(g.indptr, g.indices, lam, chunk,
                                     sorted_times, horizon, max_events, -1)
        return out[0], out[3]

    _, counts = _run_seed_chunks(seeds, threads, call)
    by_time = {}
    for col, t in zip(counts.T, sorted_times):
        dens = col[np.isfinite(col)] / g.n
        est = mean_estimate(dens, level, n_censored=n_trials - dens.size)
        by_time[float(t)] = est
    return [by_time[t] for t in t_list]


def estimate_star_extinction(k: int, lam: float, n_trials: int,
                             safety_horizon: float, seed: int, *,
                             max_events: int = 10 ** 6,
                             level: float = 0.95, threads: int = 1) -> Estimate:
    """Extinction time of the fully infected star with ``k`` leaves.

    Censored runs (horizon or event cap) enter the sample at their stopping
    time, which biases the mean and median downward only; they are counted
    in ``n_censored`` and the raw arrays ride along in ``extras`` so the
    caller can treat them as lower bounds.  The median is the headline
    number because once censoring kicks in the mean is dominated by it.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    g = generate_star(k)
    seeds = derive_seeds(seed, "star-extinction", n=n_trials)

    def call(chunk):
        return _kernels.ext_batch_full(g.indptr, g.indices, lam, chunk,
                                       safety_horizon, max_events)

    statuses, times, _ = _run_seed_chunks(seeds, threads, call)
    median = float(np.median(times))
    est = mean_estimate(times, level, n_censored=int((statuses != 0).sum()),
                        extras={
                            "times": times,
                            "statuses": statuses,
                            "median": median,
                            "log_median": math.log(median),
                        })
    return est


def bootstrap_log_median_slope(samples: dict, seed: int, *,
                               n_boot: int = 2000, level: float = 0.99):
    """Least-squares slope of log(median extinction time) against the key.

    ``samples`` maps a size parameter to its array of extinction times.
    Resamples each size's trials with replacement, refits the slope, and
    returns (slope, lo, hi) with percentile bounds at ``level``.
    """
    ks = sorted(samples)
    if len(ks) < 2:
        raise ValueError("need at least two sizes to fit a slope")
    xs = np.asarray(ks, dtype=np.float64)
    arrays = [np.asarray(samples[k], dtype=np.float64) for k in ks]
    if any(a.size < 1 or a.min() <= 0 for a in arrays):
        raise ValueError("extinction times must be positive and nonempty")

    def slope_of(medians):
        return float(np.polyfit(xs, np.log(medians), 1)[0])

    point = slope_of([np.median(a) for a in arrays])
    rng = derive_rng(seed, "slope-bootstrap")
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        meds = [np.median(rng.choice(a, size=a.size, replace=True))
                for a in arrays]
        slopes[b] = slope_of(meds)
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(slopes, [alpha, 1.0 - alpha])
    return point, float(lo), float(hi)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def tightness_diagnostic(graph_seq, lam: float, quantile_levels, n_trials: int,
                         seed: int, *, horizon: float = math.inf,
                         max_events: int = DEFAULT_MAX_EVENTS,
                         threads: int = 1) -> list:
    """Empirical quantiles of the single-start extinction time at a uniform
    root, one row per graph.

    A sequence whose upper quantiles hold still as the graphs grow behaves
    tightly; upper quantiles marching upward with n flag survival.  Rows are
    dicts with the vertex count, the requested quantiles, and the censored
    count (censored runs sit at their stopping times, so quantiles above
    the censored fraction are lower bounds).
    """
    if len(graph_seq) < 2:
        raise ValueError("need at least two graphs to compare")
    levels = [float(q) for q in quantile_levels]
    if not levels or not all(0 < q < 1 for q in levels):
        raise ValueError("quantile levels must lie in (0, 1)")
    rows = []
    for gi, g in enumerate(graph_seq):
        roots = derive_rng(seed, "tightness-roots", gi).integers(
            0, g.n, size=n_trials)
        seeds = derive_seeds(seed, "tightness-runs", gi, n=n_trials)

        def run(rg, g=g, roots=roots, seeds=seeds):
            return _kernels.ext_batch_roots(
                g.indptr, g.indices, lam, roots[rg.start:rg.stop],
                seeds[rg.start:rg.stop], horizon, max_events)

        ranges = (_trial_ranges(n_trials, threads)
                  if threads > 1 and n_trials > 1 else [range(n_trials)])
        if len(ranges) == 1:
            parts = [run(ranges[0])]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(run, ranges))
        statuses = np.concatenate([p[0] for p in parts])
        times = np.concatenate([p[1] for p in parts])
        rows.append({
            "n_vertices": g.n,
            "n_trials": n_trials,
            "n_censored": int((statuses != 0).sum()),
            "quantiles": {q: float(np.quantile(times, q)) for q in levels},
        })
    return rows


def almostlocal_diagnostic(g: Graph, lam: float, t: float, R_list,
                           n_trials: int, seed: int, *,
                           max_events: int = DEFAULT_MAX_EVENTS,
                           level: float = 0.95, threads: int = 1) -> list:
    """Probability that a run from a uniform root is dead at time ``t`` yet
    reached distance R before dying, for each R.  Returns one Estimate per
    entry of ``R_list``.

    An event-capped run never confirms the joint event, so it counts as a
    miss; the censored count in each Estimate is the signal that the event
    budget was too thin to trust the point value.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    radii = sorted(set(int(r) for r in R_list))
    if len(radii) != len(R_list):
        raise ValueError("R_list must be distinct")
    if radii and radii[0] < 0:
        raise ValueError("radii must be nonnegative")
    roots = derive_rng(seed, "almostlocal-roots").integers(0, g.n, size=n_trials)
    seeds = derive_seeds(seed, "almostlocal-runs", n=n_trials)
    radii_arr = np.asarray(radii, dtype=np.int64)

    ranges = (_trial_ranges(n_trials, threads)
              if threads > 1 and n_trials > 1 else [range(n_trials)])

    def run(rg):
        return _kernels.almostlocal_batch(
            g.indptr, g.indices, lam, roots[rg.start:rg.stop], radii_arr,
            t, max_events, seeds[rg.start:rg.stop])

    if len(ranges) == 1:
        parts = [run(ranges[0])]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, ranges))
    statuses = np.concatenate([p[0] for p in parts])
    taus = np.concatenate([p[2] for p in parts])
    n_capped = int((statuses == 2).sum())
    dead = statuses == 0
    out = {}
    for col, r in zip(taus.T, radii):
        joint = int((dead & np.isfinite(col)).sum())
        out[r] = proportion_estimate(joint, n_trials, level,
                                     n_censored=n_capped)
    return [out[int(r)] for r in R_list]
