"""Contact process engines.

Two constructions of the same process:

* ``Timeline`` materializes the graphical representation: per-edge arrow
  times with directions (rate 2*lam per edge, fair-coin orientation) and
  per-vertex recovery times (rate 1) on a window [0, t_end].  ``evolve``
  interprets a timeline from any initial set, so coupling identities
  (duality, additivity, monotonicity, thinning) can be checked pathwise,
  event for event.

* ``run_direct`` jumps from event to event Gillespie-style without storing
  the timeline, which is what every large batch uses.  Per-trial seeding
  makes batches independent of chunking and thread layout.

``ctmc_exact_expected_extinction`` solves the 2^n-state chain exactly and
anchors both engines in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import StateSpaceTooLarge
from .graphs import Graph
from .rng import derive_rng, derive_seeds

__all__ = [
    "DEFAULT_MAX_EVENTS",
    "Timeline",
    "sample_timeline",
    "evolve",
    "reverse_timeline",
    "thin_timeline",
    "restrict_timeline",
    "shift_timeline",
    "timelines_equal",
    "timeline_to_text",
    "timeline_from_text",
    "Trajectory",
    "run_direct",
    "first_passage_radius",
    "ExtinctionSample",
    "sample_extinction_times",
    "sample_timeline_extinction_times",
    "sample_first_passage",
    "DensitySample",
    "sample_density",
    "sample_root_runs",
    "ctmc_exact_expected_extinction",
    "trajectory_csv_text",
    "geometric_time_grid",
]

DEFAULT_MAX_EVENTS = 10_000_000

_STATUS_NAMES = {0: "extinct", 1: "horizon", 2: "event_cap", 3: "radii_resolved"}


def as_init_ids(g: Graph, init) -> np.ndarray:
    """Normalize an initial set: "full", a boolean mask, or vertex ids."""
    if isinstance(init, str):
        if init == "full":
            return np.arange(g.n, dtype=np.int64)
        raise ValueError(f"unknown initial set {init!r}")
    arr = np.asarray(init)
    if arr.dtype == bool:
        if arr.shape != (g.n,):
            raise ValueError("boolean mask must have length n")
        return np.nonzero(arr)[0].astype(np.int64)
    ids = np.unique(arr.astype(np.int64)) if arr.size else np.empty(0, np.int64)
    if ids.size and (ids[0] < 0 or ids[-1] >= g.n):
        raise ValueError("initial vertex out of range")
    return ids


# ---------------------------------------------------------------------------
# timelines
# ---------------------------------------------------------------------------

class Timeline:
    """Arrow and recovery marks for one realization on [0, t_end].

    Arrows are stored per edge in the canonical ``graph.edge_array()`` order:
    segment i of ``arrow_times`` (delimited by ``arrow_indptr``) holds the
    ascending times on edge i, and ``arrow_dirs`` holds 0 for u -> v and 1
    for v -> u, with u < v.  Recoveries are stored per vertex the same way.
    All arrays are frozen.
    """

    def __init__(self, graph: Graph, lam: float, t_end: float,
                 arrow_indptr, arrow_times, arrow_dirs,
                 rec_indptr, rec_times):
        self.graph = graph
        self.lam = float(lam)
        self.t_end = float(t_end)
        self.edges = graph.edge_array()
        self.arrow_indptr = np.ascontiguousarray(arrow_indptr, dtype=np.int64)
        self.arrow_times = np.ascontiguousarray(arrow_times, dtype=np.float64)
        self.arrow_dirs = np.ascontiguousarray(arrow_dirs, dtype=np.uint8)
        self.rec_indptr = np.ascontiguousarray(rec_indptr, dtype=np.int64)
        self.rec_times = np.ascontiguousarray(rec_times, dtype=np.float64)
        if self.lam < 0 or self.t_end <= 0:
            raise ValueError("need lam >= 0 and t_end > 0")
        if self.arrow_indptr.shape != (self.edges.shape[0] + 1,):
            raise ValueError("arrow_indptr must have one entry per edge plus one")
        if self.rec_indptr.shape != (graph.n + 1,):
            raise ValueError("rec_indptr must have one entry per vertex plus one")
        if self.arrow_times.shape != self.arrow_dirs.shape:
            raise ValueError("arrow times and directions must align")
        for a in (self.edges, self.arrow_indptr, self.arrow_times,
                  self.arrow_dirs, self.rec_indptr, self.rec_times):
            a.flags.writeable = False
        self._merged = None

    @property
    def n_arrows(self) -> int:
        return self.arrow_times.shape[0]

    @property
    def n_recoveries(self) -> int:
        return self.rec_times.shape[0]

    def arrows_on_edge(self, i: int):
        lo, hi = self.arrow_indptr[i], self.arrow_indptr[i + 1]
        return self.arrow_times[lo:hi], self.arrow_dirs[lo:hi]

    def recoveries_at(self, v: int):
        lo, hi = self.rec_indptr[v], self.rec_indptr[v + 1]
        return self.rec_times[lo:hi]

    def merged_events(self):
        """Event arrays (times, kinds, ea, eb) in stable chronological order.

        kind 0 is an arrow ea -> eb, kind 1 is a recovery of ea.  Ties are
        broken by assembly order (arrows in edge order, then recoveries in
        vertex order), fixed once per timeline.
        """
        if self._merged is None:
            m = self.edges.shape[0]
            edge_id = np.repeat(np.arange(m), np.diff(self.arrow_indptr))
            src = np.where(self.arrow_dirs == 0,
                           self.edges[edge_id, 0], self.edges[edge_id, 1])
            dst = np.where(self.arrow_dirs == 0,
                           self.edges[edge_id, 1], self.edges[edge_id, 0])
            rec_v = np.repeat(np.arange(self.graph.n), np.diff(self.rec_indptr))
            times = np.concatenate((self.arrow_times, self.rec_times))
            kinds = np.concatenate((np.zeros(src.size, np.uint8),
                                    np.ones(rec_v.size, np.uint8)))
            ea = np.concatenate((src, rec_v)).astype(np.int64)
            eb = np.concatenate((dst, np.full(rec_v.size, -1, np.int64)))
            order = np.argsort(times, kind="stable")
            self._merged = (times[order], kinds[order], ea[order], eb[order])
        return self._merged

    def __eq__(self, other):
        if not isinstance(other, Timeline):
            return NotImplemented
        return timelines_equal(self, other)

    def __repr__(self):
        return (f"Timeline(n={self.graph.n}, m={self.edges.shape[0]}, "
                f"lam={self.lam}, t_end={self.t_end}, "
                f"arrows={self.n_arrows}, recoveries={self.n_recoveries})")


def sample_timeline(g: Graph, lam: float, t_end: float, seed: int) -> Timeline:
    """Draw a timeline: Poisson(2*lam*t_end) directed arrows per edge,
    Poisson(t_end) recoveries per vertex, all times uniform on the window."""
    if lam < 0 or t_end <= 0:
        raise ValueError("need lam >= 0 and t_end > 0")
    rng = derive_rng(seed, "timeline")
    m = g.m
    e_counts = rng.poisson(2.0 * lam * t_end, m)
    total_a = int(e_counts.sum())
    a_times = rng.random(total_a) * t_end
    a_dirs = rng.integers(0, 2, total_a).astype(np.uint8)
    edge_id = np.repeat(np.arange(m), e_counts)
    order = np.lexsort((a_times, edge_id))
    v_counts = rng.poisson(t_end, g.n)
    total_r = int(v_counts.sum())
    r_times = rng.random(total_r) * t_end
    vert_id = np.repeat(np.arange(g.n), v_counts)
    r_order = np.lexsort((r_times, vert_id))
    return Timeline(
        graph=g, lam=lam, t_end=t_end,
        arrow_indptr=np.concatenate(([0], np.cumsum(e_counts))),
        arrow_times=a_times[order], arrow_dirs=a_dirs[order],
        rec_indptr=np.concatenate(([0], np.cumsum(v_counts))),
        rec_times=r_times[r_order])


def evolve(timeline: Timeline, init, t: float) -> np.ndarray:
    """State at time t from the initial set, processing events with time <= t.

    Plain readable interpreter; batches should go through the direct engine.
    """
    if not 0.0 <= t <= timeline.t_end:
        raise ValueError("t must lie in [0, t_end]")
    n = timeline.graph.n
    infected = np.zeros(n, np.uint8)
    infected[as_init_ids(timeline.graph, init)] = 1
    times, kinds, ea, eb = timeline.merged_events()
    for j in range(times.shape[0]):
        if times[j] > t:
            break
        if kinds[j] == 0:
            if infected[ea[j]] == 1 and infected[eb[j]] == 0:
                infected[eb[j]] = 1
        else:
            infected[ea[j]] = 0
    return infected


def _rebuild(tl: Timeline, lam, t_end, a_keep, a_times, a_dirs, r_keep, r_times,
             resort: bool) -> Timeline:
    m = tl.edges.shape[0]
    edge_id = np.repeat(np.arange(m), np.diff(tl.arrow_indptr))[a_keep]
    vert_id = np.repeat(np.arange(tl.graph.n), np.diff(tl.rec_indptr))[r_keep]
    if resort:
        a_order = np.lexsort((a_times, edge_id))
        r_order = np.lexsort((r_times, vert_id))
        a_times, a_dirs = a_times[a_order], a_dirs[a_order]
        r_times = r_times[r_order]
    a_counts = np.bincount(edge_id, minlength=m)
    r_counts = np.bincount(vert_id, minlength=tl.graph.n)
    return Timeline(
        graph=tl.graph, lam=lam, t_end=t_end,
        arrow_indptr=np.concatenate(([0], np.cumsum(a_counts))),
        arrow_times=a_times, arrow_dirs=a_dirs,
        rec_indptr=np.concatenate(([0], np.cumsum(r_counts))),
        rec_times=r_times)


def reverse_timeline(tl: Timeline, t: Optional[float] = None) -> Timeline:
    """Time reversal on [0, t]: an arrow u -> v at s becomes v -> u at t - s,
    a recovery at s moves to t - s.  Events at time >= t are dropped."""
    if t is None:
        t = tl.t_end
    if not 0.0 < t <= tl.t_end:
        raise ValueError("t must lie in (0, t_end]")
    a_keep = tl.arrow_times < t
    r_keep = tl.rec_times < t
    return _rebuild(tl, tl.lam, t,
                    a_keep, t - tl.arrow_times[a_keep],
                    (1 - tl.arrow_dirs[a_keep]).astype(np.uint8),
                    r_keep, t - tl.rec_times[r_keep], resort=True)


def thin_timeline(tl: Timeline, lam_new: float, seed: int) -> Timeline:
    """Keep each arrow independently with probability lam_new / lam.

    The result is a rate-lam_new timeline coupled below the original:
    evolving both from the same set keeps the thinned state a subset.
    """
    if not 0.0 <= lam_new <= tl.lam:
        raise ValueError("need 0 <= lam_new <= lam")
    if tl.lam == 0.0:
        a_keep = np.ones(tl.n_arrows, bool)
    else:
        u = derive_rng(seed, "thin").random(tl.n_arrows)
        a_keep = u < lam_new / tl.lam
    r_keep = np.ones(tl.n_recoveries, bool)
    return _rebuild(tl, lam_new, tl.t_end,
                    a_keep, tl.arrow_times[a_keep], tl.arrow_dirs[a_keep],
                    r_keep, tl.rec_times, resort=False)


def restrict_timeline(tl: Timeline, t_new: float) -> Timeline:
    """Truncate the window to [0, t_new], keeping events with time <= t_new."""
    if not 0.0 < t_new <= tl.t_end:
        raise ValueError("t_new must lie in (0, t_end]")
    a_keep = tl.arrow_times <= t_new
    r_keep = tl.rec_times <= t_new
    return _rebuild(tl, tl.lam, t_new,
                    a_keep, tl.arrow_times[a_keep], tl.arrow_dirs[a_keep],
                    r_keep, tl.rec_times[r_keep], resort=False)


def shift_timeline(tl: Timeline, t0: float) -> Timeline:
    """Drop events at time <= t0 and shift the rest to [0, t_end - t0].

    Strict at t0, so restricting to [0, t0] and shifting past t0 partition
    the events exactly; the flow identity then holds event for event.
    """
    if not 0.0 <= t0 < tl.t_end:
        raise ValueError("t0 must lie in [0, t_end)")
    a_keep = tl.arrow_times > t0
    r_keep = tl.rec_times > t0
    return _rebuild(tl, tl.lam, tl.t_end - t0,
                    a_keep, tl.arrow_times[a_keep] - t0, tl.arrow_dirs[a_keep],
                    r_keep, tl.rec_times[r_keep] - t0, resort=False)


def timelines_equal(a: Timeline, b: Timeline, time_atol: float = 0.0) -> bool:
    """Structural equality; ``time_atol`` forgives float error in the times."""
    if a.graph != b.graph or a.lam != b.lam or a.t_end != b.t_end:
        return False
    if not (np.array_equal(a.arrow_indptr, b.arrow_indptr)
            and np.array_equal(a.arrow_dirs, b.arrow_dirs)
            and np.array_equal(a.rec_indptr, b.rec_indptr)):
        return False
    if time_atol == 0.0:
        return (np.array_equal(a.arrow_times, b.arrow_times)
                and np.array_equal(a.rec_times, b.rec_times))
    return (np.allclose(a.arrow_times, b.arrow_times, rtol=0, atol=time_atol)
            and np.allclose(a.rec_times, b.rec_times, rtol=0, atol=time_atol))


def timeline_to_text(tl: Timeline) -> str:
    """Serialize events: one ``arrow a b time`` line per arrow (a infects b)
    and one ``recovery v time`` line per recovery, after a header."""
    lines = [f"timeline {tl.lam:.17g} {tl.t_end:.17g}"]
    for i in range(tl.edges.shape[0]):
        u, v = int(tl.edges[i, 0]), int(tl.edges[i, 1])
        times, dirs = tl.arrows_on_edge(i)
        for s, d in zip(times, dirs):
            a, b = (u, v) if d == 0 else (v, u)
            lines.append(f"arrow {a} {b} {s:.17g}")
    for v in range(tl.graph.n):
        for s in tl.recoveries_at(v):
            lines.append(f"recovery {v} {s:.17g}")
    return "\n".join(lines) + "\n"


def timeline_from_text(text: str, g: Graph) -> Timeline:
    """Parse ``timeline_to_text`` output back onto its graph."""
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or not lines[0].startswith("timeline "):
        raise ValueError("missing timeline header")
    head = lines[0].split()
    if len(head) != 3:
        raise ValueError("header must be 'timeline lam t_end'")
    lam, t_end = float(head[1]), float(head[2])
    edges = g.edge_array()
    index_of = {(int(u), int(v)): i for i, (u, v) in enumerate(edges)}
    a_bucket: list[list] = [[] for _ in range(len(index_of))]
    r_bucket: list[list] = [[] for _ in range(g.n)]
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "arrow" and len(parts) == 4:
            a, b, s = int(parts[1]), int(parts[2]), float(parts[3])
            key = (min(a, b), max(a, b))
            if key not in index_of:
                raise ValueError(f"arrow on a non-edge: {ln!r}")
            a_bucket[index_of[key]].append((s, 0 if a < b else 1))
        elif parts[0] == "recovery" and len(parts) == 3:
            v, s = int(parts[1]), float(parts[2])
            if not 0 <= v < g.n:
                raise ValueError(f"recovery at unknown vertex: {ln!r}")
            r_bucket[v].append(s)
        else:
            raise ValueError(f"unrecognized line: {ln!r}")
    a_counts = np.array([len(b) for b in a_bucket], dtype=np.int64)
    r_counts = np.array([len(b) for b in r_bucket], dtype=np.int64)
    a_times = np.empty(int(a_counts.sum()))
    a_dirs = np.empty(int(a_counts.sum()), np.uint8)
    pos = 0
    for bucket in a_bucket:
        bucket.sort()
        for s, d in bucket:
            a_times[pos] = s
            a_dirs[pos] = d
            pos += 1
    r_times = np.empty(int(r_counts.sum()))
    pos = 0
    for bucket in r_bucket:
        bucket.sort()
        for s in bucket:
            r_times[pos] = s
            pos += 1
    return Timeline(graph=g, lam=lam, t_end=t_end,
                    arrow_indptr=np.concatenate(([0], np.cumsum(a_counts))),
                    arrow_times=a_times, arrow_dirs=a_dirs,
                    rec_indptr=np.concatenate(([0], np.cumsum(r_counts))),
                    rec_times=r_times)


# ---------------------------------------------------------------------------
# direct engine
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Outcome of one direct-engine run."""

    n: int
    lam: float
    horizon: float
    seed: int
    initial: np.ndarray
    status: str
    stop_time: float
    n_events: int
    extinction_time: Optional[float]
    censored: bool
    first_passage: dict = field(default_factory=dict)
    sample_times: Optional[np.ndarray] = None
    density_counts: Optional[np.ndarray] = None
    eps_density: Optional[float] = None
    low_density_time: Optional[float] = None
    low_density_fraction: Optional[float] = None


def run_direct(g: Graph, lam: float, init, horizon: float, seed: int,
               max_events: int = DEFAULT_MAX_EVENTS,
               radii=None, sample_times=None, eps_density=None,
               stop_when_radii_resolved: bool = False) -> Trajectory:
    """One contact-process trajectory via event-by-event simulation.

    ``radii`` requests first-passage times to graph distance >= r from the
    initial set; ``sample_times`` requests infected counts at fixed times;
    ``eps_density`` tracks time spent at or below that infected fraction.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    ids = as_init_ids(g, init)
    radii_arr = np.array(sorted(int(r) for r in (radii or ())), dtype=np.int64)
    stimes = (np.array([], dtype=np.float64) if sample_times is None
              else np.ascontiguousarray(sample_times, dtype=np.float64))
    if stimes.size:
        if np.any(np.diff(stimes) < 0) or stimes[0] < 0:
            raise ValueError("sample_times must be ascending and non-negative")
        if stimes[-1] > horizon:
            raise ValueError("sample_times must not exceed the horizon")
    if radii_arr.size:
        dist = g.distances_from(ids)
    else:
        dist = np.zeros(g.n, dtype=np.int64)
    eps_count = -1 if eps_density is None else int(
        math.floor(eps_density * g.n + 1e-9))
    trial_seed = derive_seeds(seed, "direct", n=1)[0]
    tau = np.empty(radii_arr.size, np.float64)
    dens = np.empty(stimes.size, np.float64)
    status, stop_time, n_events, low_time = _kernels.direct_trial(
        g.indptr, g.indices, float(lam), ids, float(horizon), int(max_events),
        dist, radii_arr, stimes, eps_count, stop_when_radii_resolved,
        trial_seed, tau, dens)
    first_passage = {}
    for r, t in zip(radii_arr, tau):
        first_passage[int(r)] = None if math.isnan(t) else float(t)
    status_name = _STATUS_NAMES[int(status)]
    extinct = status_name == "extinct"
    traj = Trajectory(
        n=g.n, lam=float(lam), horizon=float(horizon), seed=int(seed),
        initial=ids, status=status_name, stop_time=float(stop_time),
        n_events=int(n_events),
        extinction_time=float(stop_time) if extinct else None,
        censored=not extinct and status_name != "radii_resolved",
        first_passage=first_passage)
    if stimes.size:
        traj.sample_times = stimes
        traj.density_counts = dens
    if eps_density is not None:
        traj.eps_density = float(eps_density)
        traj.low_density_time = float(low_time)
        window = horizon if status_name in ("extinct", "horizon") else stop_time
        if math.isfinite(window) and window > 0:
            traj.low_density_fraction = float(low_time) / window
    return traj


def first_passage_radius(g: Graph, lam: float, root: int, radius: int,
                         horizon: float, seed: int,
                         max_events: int = DEFAULT_MAX_EVENTS):
    """First time the infection started at ``root`` reaches distance
    ``radius``.  Returns (status, time): status "hit" with the passage time,
    "extinct" with the extinction time, or "horizon"/"event_cap" with the
    censoring time."""
    statuses, times = sample_first_passage(g, lam, root, radius, 1, seed,
                                           horizon=horizon,
                                           max_events=max_events)
    name = _STATUS_NAMES[int(statuses[0])]
    return ("hit" if name == "radii_resolved" else name), float(times[0])


# ---------------------------------------------------------------------------
# batch wrappers (one derived seed per trial)
# ---------------------------------------------------------------------------

@dataclass
class ExtinctionSample:
    times: np.ndarray
    statuses: np.ndarray
    n_events: np.ndarray

    @property
    def extinct(self) -> np.ndarray:
        return self.statuses == 0

    @property
    def censored(self) -> np.ndarray:
        return self.statuses != 0


def sample_extinction_times(g: Graph, lam: float, n_runs: int, seed: int, *,
                            horizon: float = math.inf,
                            max_events: int = DEFAULT_MAX_EVENTS,
                            start="full", roots=None) -> ExtinctionSample:
    """Extinction times from ``n_runs`` independent direct-engine runs.

    ``start="full"`` infects everyone; ``start="roots"`` takes a scalar or
    per-run array of single starting vertices.
    """
    seeds = derive_seeds(seed, "extinction", n=n_runs)
    if start == "full":
        statuses, times, events = _kernels.ext_batch_full(
            g.indptr, g.indices, float(lam), seeds, float(horizon),
            int(max_events))
    elif start == "roots":
        if roots is None:
            raise ValueError('start="roots" needs roots')
        roots_arr = np.broadcast_to(np.asarray(roots, dtype=np.int64),
                                    (n_runs,)).copy()
        statuses, times, events = _kernels.ext_batch_roots(
            g.indptr, g.indices, float(lam), roots_arr, seeds, float(horizon),
            int(max_events))
    else:
        raise ValueError('start must be "full" or "roots"')
    return ExtinctionSample(times=times, statuses=statuses, n_events=events)


def sample_timeline_extinction_times(g: Graph, lam: float, n_runs: int,
                                     seed: int, *, chunk: float = 4.0,
                                     max_time: float = 1e6):
    """Extinction times from the all-infected start via the graphical
    construction (chunked timelines).  Returns (statuses, times); status 1
    marks runs still alive at ``max_time``."""
    seeds = derive_seeds(seed, "timeline-extinction", n=n_runs)
    edges = g.edge_array()
    return _kernels.ext_batch_timeline(
        g.indptr, g.indices, np.ascontiguousarray(edges[:, 0]),
        np.ascontiguousarray(edges[:, 1]), float(lam), seeds, float(chunk),
        float(max_time))


def sample_first_passage(g: Graph, lam: float, root: int, radius: int,
                         n_runs: int, seed: int, *, horizon: float = math.inf,
                         max_events: int = DEFAULT_MAX_EVENTS):
    """First-passage runs from a single root to graph distance ``radius``.

    Returns (statuses, times); see ``first_passage_radius`` for the codes.
    """
    if not 0 <= root < g.n:
        raise ValueError("root out of range")
    seeds = derive_seeds(seed, "first-passage", n=n_runs)
    dist = g.distances_from([root], max_depth=radius)
    return _kernels.first_passage_batch(
        g.indptr, g.indices, float(lam), int(root), int(radius), dist, seeds,
        float(horizon), int(max_events))


@dataclass
class DensitySample:
    sample_times: np.ndarray
    counts: np.ndarray
    statuses: np.ndarray
    stop_times: np.ndarray
    low_times: np.ndarray


def sample_density(g: Graph, lam: float, n_runs: int, seed: int,
                   sample_times, *, horizon: float,
                   max_events: int = DEFAULT_MAX_EVENTS,
                   eps_density=None) -> DensitySample:
    """Full-start runs recording infected counts at fixed times.

    ``counts[i, j]`` is run i's infected count at ``sample_times[j]`` (NaN
    when the run was censored first).
    """
    stimes = np.ascontiguousarray(sample_times, dtype=np.float64)
    if stimes.size and (np.any(np.diff(stimes) < 0) or stimes[0] < 0
                        or stimes[-1] > horizon):
        raise ValueError("sample_times must be ascending within [0, horizon]")
    eps_count = -1 if eps_density is None else int(
        math.floor(eps_density * g.n + 1e-9))
    seeds = derive_seeds(seed, "density", n=n_runs)
    statuses, stop_times, lows, counts = _kernels.density_batch(
        g.indptr, g.indices, float(lam), seeds, stimes, float(horizon),
        int(max_events), eps_count)
    return DensitySample(sample_times=stimes, counts=counts,
                         statuses=statuses, stop_times=stop_times,
                         low_times=lows)


def sample_root_runs(g: Graph, lam: float, roots, radii, horizon: float,
                     seed: int, max_events: int = DEFAULT_MAX_EVENTS):
    """Single-root runs to a fixed horizon with first-passage records.

    Returns (statuses, stop_times, taus) where ``taus[i, k]`` is run i's
    first-passage time to distance ``radii[k]`` from its root (inf if the
    run died first, NaN if censored first).
    """
    roots_arr = np.ascontiguousarray(roots, dtype=np.int64)
    radii_arr = np.array(sorted(int(r) for r in radii), dtype=np.int64)
    seeds = derive_seeds(seed, "root-runs", n=roots_arr.size)
    return _kernels.almostlocal_batch(
        g.indptr, g.indices, float(lam), roots_arr, radii_arr, float(horizon),
        int(max_events), seeds)


# ---------------------------------------------------------------------------
# exact finite-state answer
# ---------------------------------------------------------------------------

def ctmc_exact_expected_extinction(g: Graph, lam: float, init,
                                   max_vertices: int = 20) -> float:
    """Exact expected extinction time by solving the 2^n-state chain.

    Direct sparse solve up to 2^16 states, preconditioned iterative solve
    beyond; either way the residual is checked to 1e-10.  Graphs larger
    than ``max_vertices`` raise StateSpaceTooLarge.
    """
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    n = g.n
    if n > min(max_vertices, 20):
        raise StateSpaceTooLarge(
            f"{n} vertices means 2^{n} states; the cap is {min(max_vertices, 20)}")
    ids = as_init_ids(g, init)
    if ids.size == 0:
        return 0.0
    n_states = 1 << n
    states = np.arange(n_states, dtype=np.int64)
    nbr_mask = np.zeros(n, dtype=np.int64)
    for v in range(n):
        for w in g.neighbors(v):
            nbr_mask[v] |= 1 << int(w)
    rows, cols, data = [], [], []
    for v in range(n):
        bit = np.int64(1) << v
        has = (states & bit) != 0
        s_has = states[has]
        rows.append(s_has)
        cols.append(s_has ^ bit)
        data.append(np.ones(s_has.size))
        s_not = states[~has]
        k = np.bitwise_count(s_not & nbr_mask[v]).astype(np.float64)
        w = lam * k
        nz = w > 0
        rows.append(s_not[nz])
        cols.append(s_not[nz] | bit)
        data.append(w[nz])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    q_off = sp.csr_matrix((data, (rows, cols)), shape=(n_states, n_states))
    out_rate = np.asarray(q_off.sum(axis=1)).ravel()
    # expected hitting times of the empty state solve (D - Q) E = 1 on the
    # nonempty states; the empty state's column drops out since E(0) = 0
    a = sp.diags(out_rate[1:]) - q_off[1:, 1:]
    b = np.ones(n_states - 1)
    a = a.tocsr()
    if n_states <= 1 << 16:
        x = spla.spsolve(a, b)
    else:
        precond = spla.LinearOperator(a.shape, lambda y: y / out_rate[1:])
        x, info = spla.bicgstab(a, b, rtol=1e-13, atol=0.0, maxiter=2000,
                                M=precond)
        if info != 0:
            raise RuntimeError(f"iterative solve failed (info={info})")
    resid = np.abs(a @ x - b).max()
    if resid > 1e-10 * max(1.0, np.abs(x).max()):
        raise RuntimeError(f"solve residual {resid:.3e} too large")
    s0 = 0
    for v in ids:
        s0 |= 1 << int(v)
    return float(x[s0 - 1])


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def trajectory_csv_text(traj: Trajectory) -> str:
    """Density samples of one run as ``time,infected`` CSV (nan = censored)."""
    if traj.sample_times is None:
        raise ValueError("trajectory has no density samples")
    lines = ["time,infected"]
    for t, c in zip(traj.sample_times, traj.density_counts):
        lines.append(f"{t:.17g},{c:.17g}")
    return "\n".join(lines) + "\n"


def geometric_time_grid(horizon: float, first: float = 0.1,
                        factor: float = 1.3) -> np.ndarray:
    """[0, first, first*factor, ...] up to and including the last point
    at most ``horizon``."""
    if not (horizon > 0 and first > 0 and factor > 1):
        raise ValueError("need horizon > 0, first > 0, factor > 1")
    out = [0.0]
    t = first
    while t <= horizon:
        out.append(t)
        t *= factor
    return np.array(out)
