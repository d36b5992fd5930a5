"""Graph containers, degree/radius laws, and random-graph generators.

Graphs are immutable CSR adjacency structures.  All generators are
deterministic functions of their arguments plus a seed; calling twice with
the same inputs returns bit-identical objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

import numpy as np

from ._kernels import bfs_distances
from .errors import EdgeListFormatError, EmptyGraphError, BallTooLarge
from .rng import derive_rng

if TYPE_CHECKING:
    from .local_convergence import RootedBall

__all__ = [
    "Graph",
    "DegreeDistribution",
    "RadiusLaw",
    "generate_configuration_model",
    "giant_component",
    "generate_star",
    "generate_random_regular",
    "generate_cycle",
    "generate_lattice_box",
    "generate_spatial_torus_graph",
    "generate_ubgw_ball",
    "sample_radius",
    "sample_radii",
    "top_eps_degree_sum",
    "graph_to_edge_list_text",
    "graph_from_edge_list_text",
    "write_edge_list",
    "read_edge_list",
]


# ---------------------------------------------------------------------------
# core container
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph in compressed sparse row form.

    ``indices[indptr[v]:indptr[v+1]]`` lists the neighbors of ``v`` in
    increasing order.  Both orientations of each edge are stored, so
    ``indices`` has length ``2 * m``.  Arrays are frozen after construction.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indptr", np.ascontiguousarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "indices", np.ascontiguousarray(self.indices, dtype=np.int64))
        if self.indptr.shape != (self.n + 1,):
            raise ValueError("indptr must have length n + 1")
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False

    # -- basic accessors ----------------------------------------------------

    @property
    def m(self) -> int:
        return self.indices.shape[0] // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return i < nb.shape[0] and nb[i] == v

    def edge_array(self) -> np.ndarray:
        """All edges as an (m, 2) array with u < v, lexicographically sorted."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return np.column_stack((rows[keep], self.indices[keep]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"

    # -- construction --------------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, edges, dedupe: bool = False) -> "Graph":
        """Build from an iterable/array of (u, v) pairs.

        With ``dedupe=False`` self-loops and repeated edges raise ValueError;
        with ``dedupe=True`` self-loops are dropped and parallel edges are
        collapsed (the configuration-model erasure convention).
        """
        if n < 0:
            raise ValueError("n must be >= 0")
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("edges must be pairs")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError("edge endpoint out of range")
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        loops = lo == hi
        if loops.any():
            if not dedupe:
                raise ValueError("self-loop in edge list")
            lo, hi = lo[~loops], hi[~loops]
        if lo.size:
            key = lo * np.int64(n) + hi
            uniq, counts = np.unique(key, return_counts=True)
            if not dedupe and (counts > 1).any():
                raise ValueError("duplicate edge in edge list")
            lo = uniq // n
            hi = uniq % n
        both_src = np.concatenate((lo, hi))
        both_dst = np.concatenate((hi, lo))
        order = np.lexsort((both_dst, both_src))
        indices = both_dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, both_src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n=n, indptr=indptr, indices=indices)

    # -- traversal ------------------------------------------------------------

    def distances_from(self, sources: Iterable[int], max_depth: int = -1) -> np.ndarray:
        """BFS distances from a vertex set; -1 beyond reach or max_depth."""
        src = np.asarray(sorted(set(int(s) for s in sources)), dtype=np.int64)
        if src.size and (src.min() < 0 or src.max() >= self.n):
            raise ValueError("source vertex out of range")
        return bfs_distances(self.indptr, self.indices, src, np.int64(max_depth))


# ---------------------------------------------------------------------------
# edge-list text format
# ---------------------------------------------------------------------------

def graph_to_edge_list_text(g: Graph) -> str:
    """Serialize: first line ``n m``, then one ``u v`` line per edge, u < v."""
    parts = [f"{g.n} {g.m}"]
    for u, v in g.edge_array():
        parts.append(f"{u} {v}")
    return "\n".join(parts) + "\n"


def graph_from_edge_list_text(text: str) -> Graph:
    """Parse the edge-list format, rejecting violations with line numbers."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EdgeListFormatError(1, "missing header line")
    head = lines[0].split()
    if len(head) != 2:
        raise EdgeListFormatError(1, "header must be 'n m'")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError:
        raise EdgeListFormatError(1, "header must contain two integers") from None
    if n < 0 or m < 0:
        raise EdgeListFormatError(1, "n and m must be non-negative")
    if len(lines) - 1 != m:
        bad = len(lines) + 1 if len(lines) - 1 < m else m + 2
        raise EdgeListFormatError(bad, f"expected {m} edge lines, found {len(lines) - 1}")
    edges = np.empty((m, 2), dtype=np.int64)
    seen = set()
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListFormatError(i, "edge line must be 'u v'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListFormatError(i, "edge endpoints must be integers") from None
        if not (0 <= u < n and 0 <= v < n):
            raise EdgeListFormatError(i, f"endpoint out of range [0, {n})")
        if u >= v:
            raise EdgeListFormatError(i, "edges must satisfy u < v")
        if (u, v) in seen:
            raise EdgeListFormatError(i, f"duplicate edge {u} {v}")
        seen.add((u, v))
        edges[i - 2, 0] = u
        edges[i - 2, 1] = v
    return Graph.from_edges(n, edges)


def write_edge_list(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(graph_to_edge_list_text(g))


def read_edge_list(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_edge_list_text(fh.read())


# ---------------------------------------------------------------------------
# degree distributions
# ---------------------------------------------------------------------------

_PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    """A probability law on degrees 0..K stored as a dense vector."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-d vector")
        if (p < 0).any():
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)
        p.flags.writeable = False
        object.__setattr__(self, "_cdf", np.cumsum(p))

    @classmethod
    def delta(cls, k: int) -> "DegreeDistribution":
        if k < 0:
            raise ValueError("degree must be >= 0")
        p = np.zeros(k + 1)
        p[k] = 1.0
        return cls(p)

    @classmethod
    def poisson(cls, mean: float, cap: int = 64) -> "DegreeDistribution":
        """Poisson(mean) conditioned on {0..cap} (renormalized truncation)."""
        if mean < 0:
            raise ValueError("mean must be >= 0")
        if cap < 0:
            raise ValueError("cap must be >= 0")
        if mean == 0:
            return cls.delta(0)
        k = np.arange(cap + 1)
        logp = k * math.log(mean) - mean - np.array([math.lgamma(x + 1) for x in k])
        p = np.exp(logp)
        return cls(p / p.sum())

    @classmethod
    def from_pairs(cls, pairs) -> "DegreeDistribution":
        pairs = list(pairs)
        kmax = max(k for k, _ in pairs)
        p = np.zeros(kmax + 1)
        for k, pk in pairs:
            p[k] += pk
        return cls(p)

    @property
    def max_degree(self) -> int:
        nz = np.nonzero(self.probs)[0]
        return int(nz[-1]) if nz.size else 0

    @property
    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def support(self):
        return [(int(k), float(self.probs[k])) for k in np.nonzero(self.probs)[0]]

    def size_biased(self) -> "DegreeDistribution":
        """Offspring law of a non-root vertex: prob(k) ∝ (k+1)·p(k+1)."""
        mu = self.mean
        if mu <= 0:
            raise ValueError("size-biasing needs positive mean degree")
        k = np.arange(1, self.probs.size)
        p = k * self.probs[1:] / mu
        if p.size == 0:
            p = np.array([1.0])
        else:
            p = p / p.sum()
        return DegreeDistribution(p)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        return np.searchsorted(self._cdf, u, side="right").astype(np.int64)


# ---------------------------------------------------------------------------
# heavy-tailed radius law
# ---------------------------------------------------------------------------

def _invert_tail_weight(p: float, x_star: float, targets: np.ndarray) -> np.ndarray:
    """Solve x * ln(x)**p = c for each c >= 1 on [x_star, inf) by bisection."""
    c = np.asarray(targets, dtype=np.float64)
    lo = np.full(c.shape, x_star)
    hi = np.maximum(np.e, 1.0 + c)  # x*ln(x)**p >= x for x >= e
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = mid * np.log(mid) ** p < c
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-10 * lo):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class RadiusLaw:
    """Radius law with survival function min(1, 1 / (x ln(x)**p)), p > 1.

    The support starts at ``x_star``, the unique root of x ln(x)**p = 1 in
    (1, e); below it the formal survival exceeds one and is capped.
    Logarithms are natural.
    """

    p: float
    x_star: float = field(init=False)

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        lo, hi = 1.0 + 1e-12, float(np.e)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid * math.log(mid) ** self.p < 1.0:
                lo = mid
            else:
                hi = mid
        object.__setattr__(self, "x_star", 0.5 * (lo + hi))

    def survival(self, x):
        """P(R > x), vectorized."""
        x = np.asarray(x, dtype=np.float64)
        out = np.ones_like(x)
        big = x > self.x_star
        out[big] = 1.0 / (x[big] * np.log(x[big]) ** self.p)
        return out if out.ndim else float(out)

    def mean(self) -> float:
        """E[R] = x_star + ln(x_star)**(1-p) / (p-1)."""
        return self.x_star + math.log(self.x_star) ** (1.0 - self.p) / (self.p - 1.0)

    def sample(self, u: float) -> float:
        return sample_radius(self, u)

    def sample_many(self, u: np.ndarray) -> np.ndarray:
        return sample_radii(self, u)


def sample_radius(law: RadiusLaw, u: float) -> float:
    """Quantile transform: the unique x with survival(x) = u, for 0 < u <= 1.

    Computed by bracketed bisection on x ln(x)**p = 1/u to relative
    tolerance 1e-10; u = 1 returns x_star.
    """
    if not 0.0 < u <= 1.0:
        raise ValueError("u must lie in (0, 1]")
    return float(_invert_tail_weight(law.p, law.x_star, np.array([1.0 / u]))[0])


def sample_radii(law: RadiusLaw, u: np.ndarray) -> np.ndarray:
    """Vectorized ``sample_radius``."""
    u = np.asarray(u, dtype=np.float64)
    if u.size and (u.min() <= 0.0 or u.max() > 1.0):
        raise ValueError("u must lie in (0, 1]")
    return _invert_tail_weight(law.p, law.x_star, 1.0 / u)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_configuration_model(dist: DegreeDistribution, n: int, seed: int) -> Graph:
    """Configuration model with i.i.d. degrees from ``dist``, simplified.

    Degrees are drawn i.i.d.; if their total is odd, one uniformly chosen
    vertex's degree is incremented.  Half-edges are matched by a uniform
    permutation, then self-loops are erased and parallel edges collapsed.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = derive_rng(seed, "configuration-model", n)
    degrees = dist.sample(rng, n)
    if degrees.sum() % 2 == 1:
        degrees[int(rng.integers(n))] += 1
    stubs = np.repeat(np.arange(n, dtype=np.int64), degrees)
    stubs = stubs[rng.permutation(stubs.size)]
    pairs = stubs.reshape(-1, 2)
    return Graph.from_edges(n, pairs, dedupe=True)


def giant_component(g: Graph) -> tuple[Graph, dict[int, int]]:
    """Largest connected component, re-indexed to 0..n'-1.

    Ties go to the component containing the smallest vertex id.  Returns the
    subgraph and the old-id -> new-id map.  Raises EmptyGraphError on a
    vertex-free graph.
    """
    if g.n == 0:
        raise EmptyGraphError("graph has no vertices")
    import scipy.sparse as sp
    import scipy.sparse.csgraph as csgraph

    adj = sp.csr_matrix((np.ones(g.indices.shape[0], dtype=np.int8),
                         g.indices, g.indptr), shape=(g.n, g.n))
    n_comp, labels = csgraph.connected_components(adj, directed=False)
    sizes = np.bincount(labels, minlength=n_comp)
    best_size = sizes.max()
    candidates = np.nonzero(sizes == best_size)[0]
    first_vertex = np.full(n_comp, g.n, dtype=np.int64)
    np.minimum.at(first_vertex, labels, np.arange(g.n, dtype=np.int64))
    chosen = candidates[np.argmin(first_vertex[candidates])]

    old_ids = np.nonzero(labels == chosen)[0]
    new_of_old = np.full(g.n, -1, dtype=np.int64)
    new_of_old[old_ids] = np.arange(old_ids.size, dtype=np.int64)
    edges = g.edge_array()
    keep = new_of_old[edges[:, 0]] >= 0
    sub_edges = new_of_old[edges[keep]]
    sub = Graph.from_edges(int(old_ids.size), sub_edges)
    return sub, {int(o): int(new_of_old[o]) for o in old_ids}


def generate_star(k: int) -> Graph:
    """Star with center 0 and k leaves."""
    if k < 0:
        raise ValueError("k must be >= 0")
    edges = np.column_stack((np.zeros(k, dtype=np.int64),
                             np.arange(1, k + 1, dtype=np.int64)))
    return Graph.from_edges(k + 1, edges)


def generate_random_regular(d: int, n: int, seed: int) -> Graph:
    """Uniform-ish simple d-regular graph by pairing with rejection."""
    if d < 0 or n <= 0:
        raise ValueError("need d >= 0 and n > 0")
    if d >= n:
        raise ValueError("d must be < n")
    if (d * n) % 2 == 1:
        raise ValueError("d * n must be even")
    if d == 0:
        return Graph.from_edges(n, np.empty((0, 2), dtype=np.int64))
    rng = derive_rng(seed, "random-regular", d, n)
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    for _ in range(10000):
        perm = stubs[rng.permutation(stubs.size)]
        u = perm[0::2]
        v = perm[1::2]
        if (u == v).any():
            continue
        key = np.minimum(u, v) * np.int64(n) + np.maximum(u, v)
        if np.unique(key).size != key.size:
            continue
        return Graph.from_edges(n, np.column_stack((u, v)))
    raise RuntimeError("pairing failed to produce a simple graph; d too large?")


def generate_cycle(n: int) -> Graph:
    """Cycle on n >= 3 vertices."""
    if n < 3:
        raise ValueError("cycle needs n >= 3")
    i = np.arange(n, dtype=np.int64)
    edges = np.column_stack((i, (i + 1) % n))
    return Graph.from_edges(n, edges)


def generate_lattice_box(dim: int, side: int) -> Graph:
    """side^dim box of Z^dim with nearest-neighbor edges, open boundary."""
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2, or 3")
    if side < 1:
        raise ValueError("side must be >= 1")
    n = side ** dim
    coords = np.arange(n, dtype=np.int64)
    edges = []
    stride = 1
    for _ in range(dim):
        pos = (coords // stride) % side
        keep = pos < side - 1
        edges.append(np.column_stack((coords[keep], coords[keep] + stride)))
        stride *= side
    all_edges = np.concatenate(edges) if edges else np.empty((0, 2), np.int64)
    return Graph.from_edges(n, all_edges)


def generate_spatial_torus_graph(n: int, law, seed: int) -> Graph:
    """Random geometric graph on the length-n circle plus a Hamiltonian ring.

    n even points land uniformly on (-n/2, n/2] and are relabeled 0..n-1 in
    increasing position.  Each vertex gets an i.i.d. radius from ``law``
    (any object with ``sample_many``); i ~ j whenever the torus distance is
    below R_i + R_j, and consecutive positions are always joined.  The
    neighbor search scans sorted positions inside each vertex's own window,
    so expected work is proportional to the total radius mass, not n^2.
    """
    if n < 4 or n % 2 == 1:
        raise ValueError("n must be even and >= 4")
    rng = derive_rng(seed, "spatial-torus", n)
    pos = np.sort(n / 2.0 - n * rng.random(n))
    radii = law.sample_many(1.0 - rng.random(n))

    i_arr = np.arange(n, dtype=np.int64)
    ring = np.column_stack((i_arr, (i_arr + 1) % n))
    edges = [ring]

    order_key = np.lexsort((i_arr, radii))  # ascending (R, id)
    rank = np.empty(n, dtype=np.int64)
    rank[order_key] = np.arange(n)

    extra_u = []
    extra_v = []
    for i in range(n):
        w = 2.0 * radii[i]
        if 4.0 * radii[i] >= n:
            # window covers at least half the circle: scan everyone
            for j in range(n):
                if j == i or rank[j] >= rank[i]:
                    continue
                gap = abs(pos[j] - pos[i])
                dist = min(gap, n - gap)
                if dist < radii[i] + radii[j]:
                    extra_u.append(min(i, j))
                    extra_v.append(max(i, j))
            continue
        # forward scan
        j = i + 1 if i + 1 < n else 0
        while j != i:
            gap = pos[j] - pos[i]
            if gap < 0:
                gap += n
            if gap >= w:
                break
            if rank[j] < rank[i] and gap < radii[i] + radii[j]:
                extra_u.append(min(i, j))
                extra_v.append(max(i, j))
            j = j + 1 if j + 1 < n else 0
        # backward scan
        j = i - 1 if i > 0 else n - 1
        while j != i:
            gap = pos[i] - pos[j]
            if gap < 0:
                gap += n
            if gap >= w:
                break
            if rank[j] < rank[i] and gap < radii[i] + radii[j]:
                extra_u.append(min(i, j))
                extra_v.append(max(i, j))
            j = j - 1 if j > 0 else n - 1
    if extra_u:
        edges.append(np.column_stack((np.array(extra_u, dtype=np.int64),
                                      np.array(extra_v, dtype=np.int64))))
    return Graph.from_edges(n, np.concatenate(edges), dedupe=True)


def generate_ubgw_ball(mu: DegreeDistribution, depth: int, seed: int,
                       vertex_cap: int = 10 ** 6) -> "RootedBall":
    """Depth-``depth`` ball of the unimodular branching tree driven by ``mu``.

    The root draws its child count from ``mu``; every other internal vertex
    draws from the size-biased shift of ``mu``.  Vertices at distance
    ``depth`` are leaves.  Raises BallTooLarge when the tree passes
    ``vertex_cap`` vertices.
    """
    from .local_convergence import RootedBall

    if depth < 0:
        raise ValueError("depth must be >= 0")
    rng = derive_rng(seed, "ubgw-ball", depth)
    parents = [-1]
    frontier = [0]
    total = 1
    hat = None
    for gen in range(depth):
        if not frontier:
            break
        if gen == 0:
            counts = mu.sample(rng, len(frontier))
        else:
            if hat is None:
                hat = mu.size_biased()
            counts = hat.sample(rng, len(frontier))
        new_frontier = []
        for v, c in zip(frontier, counts):
            for _ in range(int(c)):
                if total >= vertex_cap:
                    raise BallTooLarge(total + 1, vertex_cap)
                parents.append(v)
                new_frontier.append(total)
                total += 1
        frontier = new_frontier
    if total > 1:
        child = np.arange(1, total, dtype=np.int64)
        edges = np.column_stack((np.array(parents[1:], dtype=np.int64), child))
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    g = Graph.from_edges(total, edges)
    return RootedBall(graph=g, root=0, depth=depth)


# ---------------------------------------------------------------------------
# degree statistics
# ---------------------------------------------------------------------------

def top_eps_degree_sum(g: Graph, eps: float) -> float:
    """Mean contribution of the floor(eps * n) largest degrees: their sum / n."""
    if g.n == 0:
        raise EmptyGraphError("graph has no vertices")
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    k = int(math.floor(eps * g.n + 1e-9))
    if k == 0:
        return 0.0
    deg = g.degrees
    top = np.partition(deg, g.n - k)[g.n - k:]
    return float(top.sum()) / g.n
