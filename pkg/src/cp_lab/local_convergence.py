"""Rooted neighborhood balls, canonical keys, and ball-distribution metrics.

A depth-k ball is the induced subgraph on all vertices within graph distance
k of a root.  Two balls receive the same canonical key exactly when there is
a root-preserving isomorphism between them, so distributions over balls can
be compared as plain histograms keyed by bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BallTooLarge
from .graphs import Graph, generate_ubgw_ball
from .rng import derive_seeds

__all__ = [
    "OVERSIZE_KEY",
    "RootedBall",
    "extract_ball",
    "canonical_key",
    "BallDistribution",
    "empirical_ball_distribution",
    "limit_ball_distribution",
    "make_ubgw_sampler",
    "tv_distance",
    "d_star_from_tvs",
    "convergence_report",
]

# stand-in key for balls whose size exceeds the canonicalization cap;
# real keys start with b"T" or b"G" so this can never collide
OVERSIZE_KEY = b"OVERSIZE"

_SEARCH_BUDGET = 200_000


@dataclass(frozen=True)
class RootedBall:
    """A graph with a distinguished root, produced by depth-``depth`` truncation."""

    graph: Graph
    root: int
    depth: int

    def __post_init__(self):
        if not 0 <= self.root < self.graph.n:
            raise ValueError("root out of range")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")


def extract_ball(g: Graph, v: int, depth: int) -> RootedBall:
    """Induced subgraph on vertices within ``depth`` of ``v``.

    Ball vertices are relabeled 0..size-1 in increasing original id, so the
    result is a deterministic function of (g, v, depth).
    """
    if not 0 <= v < g.n:
        raise ValueError("vertex out of range")
    dist = g.distances_from([v], max_depth=depth)
    ids = np.nonzero(dist >= 0)[0]
    new_of_old = np.full(g.n, -1, dtype=np.int64)
    new_of_old[ids] = np.arange(ids.size, dtype=np.int64)
    rows = np.repeat(ids, g.degrees[ids])
    cols = (np.concatenate([g.neighbors(int(u)) for u in ids])
            if ids.size else np.empty(0, dtype=np.int64))
    keep = (new_of_old[cols] >= 0) & (rows < cols)
    edges = np.column_stack((new_of_old[rows[keep]], new_of_old[cols[keep]]))
    ball_graph = Graph.from_edges(int(ids.size), edges)
    return RootedBall(graph=ball_graph, root=int(new_of_old[v]), depth=depth)


# ---------------------------------------------------------------------------
# canonical keys
# ---------------------------------------------------------------------------

def canonical_key(ball: RootedBall, max_vertices: int = 10_000) -> bytes:
    """Bytes identifying the rooted isomorphism class of ``ball``.

    Trees are encoded by bottom-up subtree ranking in linear time.  Other
    graphs go through color refinement with individualization backtracking;
    vertices with identical neighborhoods inside a color class are
    interchangeable by an automorphism, so only one of them is branched on.
    Raises BallTooLarge past ``max_vertices``.
    """
    g, root = ball.graph, ball.root
    n = g.n
    if n > max_vertices:
        raise BallTooLarge(n, max_vertices)
    neigh = [g.neighbors(v).tolist() for v in range(n)]
    dist = g.distances_from([root])
    if g.m == n - 1 and dist.min() >= 0:
        return _tree_key(neigh, dist)
    deg = g.degrees
    init = [(0, 0) if v == root else (1, int(deg[v])) for v in range(n)]
    rank = {s: i for i, s in enumerate(sorted(set(init)))}
    colors = [rank[s] for s in init]
    budget = [_SEARCH_BUDGET]
    return b"G" + _canon_search(neigh, colors, budget)


def _tree_key(neigh, dist) -> bytes:
    """Bottom-up canonical code for a tree rooted at distance-0."""
    n = len(neigh)
    maxd = int(dist.max())
    levels: list[list[int]] = [[] for _ in range(maxd + 1)]
    for v in range(n):
        levels[int(dist[v])].append(v)
    label = [0] * n
    chunks = []
    for d in range(maxd, -1, -1):
        sigs = []
        for v in levels[d]:
            kids = tuple(sorted(label[w] for w in neigh[v] if dist[w] == d + 1))
            sigs.append(kids)
        rank = {s: i for i, s in enumerate(sorted(set(sigs)))}
        for v, s in zip(levels[d], sigs):
            label[v] = rank[s]
        chunks.append(repr(sorted(sigs)))
    return ("T" + "|".join(chunks)).encode("ascii")


def _refine(neigh, colors):
    """Iterated neighborhood coloring to a stable partition, canonical ranks."""
    n = len(colors)
    while True:
        sigs = [(colors[v], tuple(sorted(colors[w] for w in neigh[v])))
                for v in range(n)]
        rank = {s: i for i, s in enumerate(sorted(set(sigs)))}
        new = [rank[s] for s in sigs]
        if new == colors:
            return colors
        colors = new


def _twin_representatives(neigh, cls):
    """One vertex per group of mutually interchangeable vertices in ``cls``.

    Vertices with equal open neighborhoods (non-adjacent twins) or equal
    closed neighborhoods (adjacent twins) are swapped by an automorphism
    fixing everything else, so their branches produce identical codes.
    """
    parent = {v: v for v in cls}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    by_open: dict = {}
    by_closed: dict = {}
    for v in cls:
        o = frozenset(neigh[v])
        for table, key in ((by_open, o), (by_closed, o | {v})):
            if key in table:
                parent[find(v)] = find(table[key])
            else:
                table[key] = v
    return [v for v in cls if find(v) == v]


def _individualize(colors, v):
    n = len(colors)
    sigs = [(colors[u], 0 if u == v else 1) for u in range(n)]
    rank = {s: i for i, s in enumerate(sorted(set(sigs)))}
    return [rank[s] for s in sigs]


def _encode(neigh, colors) -> bytes:
    n = len(colors)
    pairs = sorted((colors[v], colors[w])
                   for v in range(n) for w in neigh[v] if colors[v] < colors[w])
    out = bytearray(n.to_bytes(4, "big"))
    for a, b in pairs:
        out += a.to_bytes(4, "big") + b.to_bytes(4, "big")
    return bytes(out)


def _canon_search(neigh, colors, budget) -> bytes:
    budget[0] -= 1
    if budget[0] < 0:
        raise RuntimeError("canonical form search budget exceeded; "
                           "graph is too symmetric for this solver")
    colors = _refine(neigh, colors)
    n = len(colors)
    counts: dict[int, int] = {}
    for c in colors:
        counts[c] = counts.get(c, 0) + 1
    split = [c for c, k in counts.items() if k > 1]
    if not split:
        return _encode(neigh, colors)
    target = min(split)
    cls = [v for v in range(n) if colors[v] == target]
    best = None
    for v in _twin_representatives(neigh, cls):
        enc = _canon_search(neigh, _individualize(colors, v), budget)
        if best is None or enc < best:
            best = enc
    return best


# ---------------------------------------------------------------------------
# ball distributions
# ---------------------------------------------------------------------------

_CSV_HEADER = "key_hex,weight"


@dataclass(frozen=True, eq=False)
class BallDistribution:
    """Probability weights over canonical ball keys at a fixed depth."""

    depth: int
    probs: dict

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total!r}, not 1")
        if any(w <= 0 for w in self.probs.values()):
            raise ValueError("weights must be positive")

    @classmethod
    def from_counts(cls, counts: dict, depth: int) -> "BallDistribution":
        total = sum(counts.values())
        if total <= 0:
            raise ValueError("need at least one observation")
        return cls(depth=depth, probs={k: c / total for k, c in counts.items()})

    def support(self):
        return sorted(self.probs)

    def to_csv_text(self) -> str:
        rows = [_CSV_HEADER]
        for key in sorted(self.probs):
            rows.append(f"{key.hex()},{self.probs[key]:.17g}")
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv_text(cls, text: str, depth: int) -> "BallDistribution":
        lines = [ln for ln in text.split("\n") if ln]
        if not lines or lines[0] != _CSV_HEADER:
            raise ValueError(f"expected header {_CSV_HEADER!r}")
        probs: dict = {}
        for ln in lines[1:]:
            key_hex, _, weight = ln.partition(",")
            key = bytes.fromhex(key_hex)
            if key in probs:
                raise ValueError(f"duplicate key {key_hex}")
            probs[key] = float(weight)
        return cls(depth=depth, probs=probs)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def read_csv(cls, path, depth: int) -> "BallDistribution":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read(), depth)


def empirical_ball_distribution(g: Graph, depth: int,
                                max_ball_vertices: int = 10_000) -> BallDistribution:
    """Ball law of a uniformly random root of ``g``.

    Balls larger than ``max_ball_vertices`` are binned under OVERSIZE_KEY
    instead of being canonicalized.
    """
    if g.n == 0:
        raise ValueError("graph has no vertices")
    counts: dict = {}
    for v in range(g.n):
        ball = extract_ball(g, v, depth)
        if ball.graph.n > max_ball_vertices:
            key = OVERSIZE_KEY
        else:
            key = canonical_key(ball, max_vertices=max_ball_vertices)
        counts[key] = counts.get(key, 0) + 1
    return BallDistribution.from_counts(counts, depth)


def limit_ball_distribution(sampler, depth: int, n_samples: int,
                            seed: int,
                            max_ball_vertices: int = 10_000) -> BallDistribution:
    """Monte Carlo ball law of a limit object.

    ``sampler(depth, seed)`` must return a RootedBall drawn from the limit.
    Samples that overflow ``max_ball_vertices`` (including samplers raising
    BallTooLarge) are binned under OVERSIZE_KEY.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    seeds = derive_seeds(seed, "limit-balls", depth, n=n_samples)
    counts: dict = {}
    for s in seeds:
        try:
            ball = sampler(depth, int(s))
            if ball.graph.n > max_ball_vertices:
                key = OVERSIZE_KEY
            else:
                key = canonical_key(ball, max_vertices=max_ball_vertices)
        except BallTooLarge:
            key = OVERSIZE_KEY
        counts[key] = counts.get(key, 0) + 1
    return BallDistribution.from_counts(counts, depth)


def make_ubgw_sampler(mu, vertex_cap: int = 10 ** 6):
    """Sampler over branching-tree balls with root law ``mu``, for
    ``limit_ball_distribution``."""

    def sampler(depth: int, seed: int) -> RootedBall:
        return generate_ubgw_ball(mu, depth, seed, vertex_cap=vertex_cap)

    return sampler


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def tv_distance(a: BallDistribution, b: BallDistribution) -> float:
    """Total variation distance between two same-depth ball laws."""
    if a.depth != b.depth:
        raise ValueError(f"depth mismatch: {a.depth} vs {b.depth}")
    keys = set(a.probs) | set(b.probs)
    return 0.5 * sum(abs(a.probs.get(k, 0.0) - b.probs.get(k, 0.0)) for k in keys)


def d_star_from_tvs(tvs, tol: float = 0.0) -> float:
    """Ultrametric from per-depth disagreement: 2 ** -(last agreeing depth).

    ``tvs[k]`` is the TV distance between depth-k ball laws, k = 0, 1, ...
    Two laws agreeing at no depth at all sit at distance one.  When every
    listed depth agrees the value is an upper bound at the window edge.
    """
    last = -1
    for k, tv in enumerate(tvs):
        if tv <= tol:
            last = k
        else:
            break
    return 1.0 if last < 0 else 2.0 ** (-last)


def convergence_report(g: Graph, sampler, max_depth: int, n_samples: int,
                       seed: int, tol: float = 0.0,
                       max_ball_vertices: int = 10_000) -> dict:
    """TV distance per depth between ``g``'s ball law and a limit sampler."""
    depths = list(range(max_depth + 1))
    tvs = []
    for k in depths:
        emp = empirical_ball_distribution(g, k, max_ball_vertices)
        lim = limit_ball_distribution(sampler, k, n_samples, seed,
                                      max_ball_vertices)
        tvs.append(tv_distance(emp, lim))
    return {"depths": depths, "tv": tvs,
            "d_star": d_star_from_tvs(tvs, tol)}
