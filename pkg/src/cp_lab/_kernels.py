"""Compiled kernels for the hot simulation loops.

Everything here is numba-jitted and free of Python-object state.  Randomness
comes from an explicit xoshiro256++ stream seeded per trial with splitmix64,
so a trial's output depends only on its own 64-bit seed: batches can be run
in any order or thread layout without changing a single bit of output.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64

__all__ = [
    "bfs_distances",
    "direct_trial",
    "ext_batch_full",
    "ext_batch_roots",
    "ext_batch_timeline",
    "first_passage_batch",
    "density_batch",
    "almostlocal_batch",
    "sweep_events",
]


# ---------------------------------------------------------------------------
# random number generation
# ---------------------------------------------------------------------------

@njit(inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (U64(64) - k))


@njit(inline="always")
def _seed_state(seed, state):
    # splitmix64 expansion of a 64-bit seed into xoshiro256++ state
    z = U64(seed)
    for i in range(4):
        z = z + U64(0x9E3779B97F4A7C15)
        w = z
        w = (w ^ (w >> U64(30))) * U64(0xBF58476D1CE4E5B9)
        w = (w ^ (w >> U64(27))) * U64(0x94D049BB133111EB)
        state[i] = w ^ (w >> U64(31))


@njit(inline="always")
def _next_u64(state):
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    result = _rotl(s0 + s3, U64(23)) + s0
    t = s1 << U64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, U64(45))
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return result


@njit(inline="always")
def _u01(state):
    # 53-bit uniform in [0, 1)
    return (_next_u64(state) >> U64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def _exp_rv(state):
    # Exp(1); argument of log is in (0, 1]
    return -np.log(1.0 - _u01(state))


@njit(inline="always")
def _randint(state, n):
    # uniform in [0, n); modulo bias is ~n/2^64, irrelevant at our n
    return np.int64(_next_u64(state) % U64(n))


@njit(inline="always")
def _poisson_small(state, mean):
    if mean <= 0.0:
        return 0
    limit = np.exp(-mean)
    k = 0
    p = 1.0
    while True:
        p *= _u01(state)
        if p <= limit:
            return k
        k += 1


@njit(inline="always")
def _poisson(state, mean):
    # split large means so the product method stays in safe float range
    total = 0
    remaining = mean
    while remaining > 20.0:
        total += _poisson_small(state, 20.0)
        remaining -= 20.0
    total += _poisson_small(state, remaining)
    return total


# ---------------------------------------------------------------------------
# graph traversal
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def bfs_distances(indptr, indices, sources, max_depth):
    """Multi-source BFS distances; -1 marks vertices beyond reach or depth.

    ``max_depth < 0`` means unbounded.
    """
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    head = 0
    tail = 0
    for si in range(sources.shape[0]):
        s = sources[si]
        if dist[s] == -1:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        dv = dist[v]
        if max_depth >= 0 and dv >= max_depth:
            continue
        for ei in range(indptr[v], indptr[v + 1]):
            w = indices[ei]
            if dist[w] == -1:
                dist[w] = dv + 1
                queue[tail] = w
                tail += 1
    return dist


# ---------------------------------------------------------------------------
# Fenwick tree over vertex degrees (degree-weighted source sampling)
# ---------------------------------------------------------------------------

@njit(inline="always")
def _fen_add(fen, i, delta):
    j = i + 1
    nn = fen.shape[0] - 1
    while j <= nn:
        fen[j] += delta
        j += j & (-j)


@njit(inline="always")
def _fen_search(fen, n, r):
    # smallest 0-based index whose cumulative weight exceeds r
    pos = 0
    bit = 1
    while (bit << 1) <= n:
        bit <<= 1
    rem = r
    while bit != 0:
        nxt = pos + bit
        if nxt <= n and fen[nxt] <= rem:
            rem -= fen[nxt]
            pos = nxt
        bit >>= 1
    if pos >= n:
        pos = n - 1
    return pos


# ---------------------------------------------------------------------------
# direct (Gillespie) engine
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def direct_trial(indptr, indices, lam, init, horizon, max_events,
                 dist, radii, sample_times, eps_count, stop_after_radii,
                 seed, tau_out, dens_out):
    """One trajectory of the contact process, event by event.

    Rates: each infected vertex recovers at rate 1 and pushes infection at
    rate ``lam`` per incident edge; pushes into already-infected neighbors
    are no-ops, which keeps the jump chain identical in law to the graphical
    construction.

    Recording side channels:
      * ``radii`` (sorted ascending) get first-passage times written to
        ``tau_out``: hit time, +inf if the process died first, NaN if the
        run was censored before either.
      * ``sample_times`` (sorted ascending, all <= horizon) get the infected
        count at those times written to ``dens_out`` (NaN when censored by
        the event cap before the sample time).
      * time spent with count <= eps_count accumulates into the returned
        ``low_time`` (pass eps_count = -1 to disable).

    Returns ``(status, stop_time, n_events, low_time)`` with status
    0 = extinct, 1 = reached horizon, 2 = hit event cap, 3 = all radii
    resolved (only when ``stop_after_radii``).
    """
    n = indptr.shape[0] - 1
    state = np.empty(4, np.uint64)
    _seed_state(seed, state)

    infected = np.zeros(n, np.uint8)
    inf_list = np.empty(n, np.int64)
    inf_pos = np.full(n, -1, np.int64)
    fen = np.zeros(n + 1, np.int64)

    count = 0
    wdeg = 0
    for k in range(init.shape[0]):
        v = init[k]
        if infected[v] == 0:
            infected[v] = 1
            inf_list[count] = v
            inf_pos[v] = count
            count += 1
            d = indptr[v + 1] - indptr[v]
            wdeg += d
            _fen_add(fen, v, d)

    n_radii = radii.shape[0]
    n_samples = sample_times.shape[0]
    for k in range(n_radii):
        tau_out[k] = np.nan
    for k in range(n_samples):
        dens_out[k] = np.nan

    ri = 0
    while ri < n_radii and radii[ri] <= 0:
        tau_out[ri] = 0.0
        ri += 1

    t = 0.0
    n_events = 0
    low_time = 0.0
    si = 0
    status = -1

    while True:
        if count == 0:
            status = 0
            break
        if stop_after_radii and ri >= n_radii:
            status = 3
            break
        rate = count + lam * wdeg
        t_next = t + _exp_rv(state) / rate
        while si < n_samples and sample_times[si] < t_next and sample_times[si] <= horizon:
            dens_out[si] = count
            si += 1
        if t_next > horizon:
            if count <= eps_count:
                low_time += horizon - t
            t = horizon
            status = 1
            break
        if count <= eps_count:
            low_time += t_next - t
        t = t_next
        n_events += 1

        u = _u01(state) * rate
        if u < count:
            # recovery of a uniformly chosen infected vertex
            k = _randint(state, count)
            v = inf_list[k]
            last = inf_list[count - 1]
            inf_list[k] = last
            inf_pos[last] = k
            inf_pos[v] = -1
            count -= 1
            infected[v] = 0
            d = indptr[v + 1] - indptr[v]
            wdeg -= d
            _fen_add(fen, v, -d)
        else:
            # arrow out of a degree-weighted infected source, uniform neighbor
            r = _u01(state) * wdeg
            v = _fen_search(fen, n, r)
            d = indptr[v + 1] - indptr[v]
            w = indices[indptr[v] + _randint(state, d)]
            if infected[w] == 0:
                infected[w] = 1
                inf_list[count] = w
                inf_pos[w] = count
                count += 1
                dw = indptr[w + 1] - indptr[w]
                wdeg += dw
                _fen_add(fen, w, dw)
                dd = dist[w]
                if dd >= 0:
                    while ri < n_radii and radii[ri] <= dd:
                        tau_out[ri] = t
                        ri += 1
        if n_events >= max_events:
            status = 2
            break

    if status == 0:
        while si < n_samples and sample_times[si] <= horizon:
            dens_out[si] = 0.0
            si += 1
        while ri < n_radii:
            tau_out[ri] = np.inf
            ri += 1
        if horizon < np.inf:
            low_time += horizon - t
    elif status == 1:
        while si < n_samples and sample_times[si] <= horizon:
            dens_out[si] = count
            si += 1
    return status, t, n_events, low_time


_NO_RADII = np.empty(0, np.int64)
_NO_TIMES = np.empty(0, np.float64)


@njit(cache=True, nogil=True)
def ext_batch_full(indptr, indices, lam, seeds, horizon, max_events):
    """Extinction times from the all-infected start, one per seed."""
    n_trials = seeds.shape[0]
    n = indptr.shape[0] - 1
    statuses = np.empty(n_trials, np.int64)
    times = np.empty(n_trials)
    events = np.empty(n_trials, np.int64)
    init = np.arange(n)
    dist = np.zeros(n, np.int64)
    radii = np.empty(0, np.int64)
    stimes = np.empty(0, np.float64)
    tau = np.empty(0, np.float64)
    dens = np.empty(0, np.float64)
    for i in range(n_trials):
        st, t, ne, _ = direct_trial(indptr, indices, lam, init, horizon, max_events,
                                    dist, radii, stimes, -1, False, seeds[i], tau, dens)
        statuses[i] = st
        times[i] = t
        events[i] = ne
    return statuses, times, events


@njit(cache=True, nogil=True)
def ext_batch_roots(indptr, indices, lam, roots, seeds, horizon, max_events):
    """Extinction times from per-trial single-vertex starts."""
    n_trials = seeds.shape[0]
    n = indptr.shape[0] - 1
    statuses = np.empty(n_trials, np.int64)
    times = np.empty(n_trials)
    events = np.empty(n_trials, np.int64)
    init = np.empty(1, np.int64)
    dist = np.zeros(n, np.int64)
    radii = np.empty(0, np.int64)
    stimes = np.empty(0, np.float64)
    tau = np.empty(0, np.float64)
    dens = np.empty(0, np.float64)
    for i in range(n_trials):
        init[0] = roots[i]
        st, t, ne, _ = direct_trial(indptr, indices, lam, init, horizon, max_events,
                                    dist, radii, stimes, -1, False, seeds[i], tau, dens)
        statuses[i] = st
        times[i] = t
        events[i] = ne
    return statuses, times, events


@njit(cache=True, nogil=True)
def first_passage_batch(indptr, indices, lam, root, radius, dist, seeds,
                        horizon, max_events):
    """Run from ``root`` until distance ``radius`` is hit or the process dies.

    Status per trial: 3 = hit (time is the hit time), 0 = extinct first
    (time is the extinction time), 1/2 = censored by horizon/event cap.
    """
    n_trials = seeds.shape[0]
    statuses = np.empty(n_trials, np.int64)
    times = np.empty(n_trials)
    init = np.empty(1, np.int64)
    init[0] = root
    radii = np.empty(1, np.int64)
    radii[0] = radius
    tau = np.empty(1, np.float64)
    stimes = np.empty(0, np.float64)
    dens = np.empty(0, np.float64)
    for i in range(n_trials):
        st, t, ne, _ = direct_trial(indptr, indices, lam, init, horizon, max_events,
                                    dist, radii, stimes, -1, True, seeds[i], tau, dens)
        statuses[i] = st
        times[i] = tau[0] if st == 3 else t
    return statuses, times


@njit(cache=True, nogil=True)
def density_batch(indptr, indices, lam, seeds, sample_times, horizon,
                  max_events, eps_count):
    """Full-start runs recording infected counts at fixed times."""
    n_trials = seeds.shape[0]
    n = indptr.shape[0] - 1
    statuses = np.empty(n_trials, np.int64)
    stop_times = np.empty(n_trials)
    lows = np.empty(n_trials)
    counts = np.empty((n_trials, sample_times.shape[0]))
    init = np.arange(n)
    dist = np.zeros(n, np.int64)
    radii = np.empty(0, np.int64)
    tau = np.empty(0, np.float64)
    for i in range(n_trials):
        st, t, ne, low = direct_trial(indptr, indices, lam, init, horizon, max_events,
                                      dist, radii, sample_times, eps_count, False,
                                      seeds[i], tau, counts[i])
        statuses[i] = st
        stop_times[i] = t
        lows[i] = low
    return statuses, stop_times, lows, counts


@njit(cache=True, nogil=True)
def almostlocal_batch(indptr, indices, lam, roots, radii, horizon,
                      max_events, seeds):
    """Per-trial single-root runs to a fixed horizon, with first-passage records."""
    n_trials = roots.shape[0]
    n_radii = radii.shape[0]
    statuses = np.empty(n_trials, np.int64)
    stop_times = np.empty(n_trials)
    taus = np.empty((n_trials, n_radii))
    init = np.empty(1, np.int64)
    stimes = np.empty(0, np.float64)
    dens = np.empty(0, np.float64)
    max_r = np.int64(0)
    for k in range(n_radii):
        if radii[k] > max_r:
            max_r = radii[k]
    for i in range(n_trials):
        init[0] = roots[i]
        dist = bfs_distances(indptr, indices, init, max_r)
        st, t, ne, _ = direct_trial(indptr, indices, lam, init, horizon, max_events,
                                    dist, radii, stimes, -1, False, seeds[i],
                                    taus[i], dens)
        statuses[i] = st
        stop_times[i] = t
    return statuses, stop_times, taus


# ---------------------------------------------------------------------------
# timeline (graphical representation) engine
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def sweep_events(n, etimes, kinds, ea, eb, init, t_end):
    """Chronological sweep of pre-sorted events up to and including t_end.

    kind 0 is an arrow ea -> eb (infects eb if ea is infected), kind 1 is a
    recovery of ea.  Returns the infected indicator vector at t_end.
    """
    infected = np.zeros(n, np.uint8)
    for k in range(init.shape[0]):
        infected[init[k]] = 1
    for j in range(etimes.shape[0]):
        if etimes[j] > t_end:
            break
        if kinds[j] == 0:
            if infected[ea[j]] == 1 and infected[eb[j]] == 0:
                infected[eb[j]] = 1
        else:
            infected[ea[j]] = 0
    return infected


@njit(cache=True, nogil=True)
def ext_batch_timeline(indptr, indices, edges_u, edges_v, lam, seeds,
                       chunk, max_time):
    """Extinction times from the all-infected start via the graphical
    representation, materialized in chunks of length ``chunk``.

    Each chunk draws per-edge Poisson(2*lam*chunk) arrows with fair coin
    directions and per-vertex Poisson(chunk) recoveries, sorts them, and
    sweeps; surviving states roll into the next chunk.  Identical in law to
    the eager single-timeline construction by the restarting property.
    """
    n_trials = seeds.shape[0]
    n = indptr.shape[0] - 1
    m = edges_u.shape[0]
    statuses = np.empty(n_trials, np.int64)
    times = np.empty(n_trials)
    infected = np.zeros(n, np.uint8)
    ec = np.empty(m, np.int64)
    vc = np.empty(n, np.int64)
    state = np.empty(4, np.uint64)
    for i in range(n_trials):
        _seed_state(seeds[i], state)
        for v in range(n):
            infected[v] = 1
        count = n
        base = 0.0
        while True:
            tot = 0
            for e in range(m):
                c = _poisson(state, 2.0 * lam * chunk)
                ec[e] = c
                tot += c
            for v in range(n):
                c = _poisson(state, chunk)
                vc[v] = c
                tot += c
            etimes = np.empty(tot)
            kinds = np.empty(tot, np.uint8)
            ea = np.empty(tot, np.int64)
            eb = np.empty(tot, np.int64)
            idx = 0
            for e in range(m):
                for _ in range(ec[e]):
                    etimes[idx] = chunk * _u01(state)
                    if _u01(state) < 0.5:
                        ea[idx] = edges_u[e]
                        eb[idx] = edges_v[e]
                    else:
                        ea[idx] = edges_v[e]
                        eb[idx] = edges_u[e]
                    kinds[idx] = 0
                    idx += 1
            for v in range(n):
                for _ in range(vc[v]):
                    etimes[idx] = chunk * _u01(state)
                    kinds[idx] = 1
                    ea[idx] = v
                    eb[idx] = -1
                    idx += 1
            order = np.argsort(etimes)
            ext_t = -1.0
            for oi in range(tot):
                j = order[oi]
                if kinds[j] == 0:
                    if infected[ea[j]] == 1 and infected[eb[j]] == 0:
                        infected[eb[j]] = 1
                        count += 1
                else:
                    if infected[ea[j]] == 1:
                        infected[ea[j]] = 0
                        count -= 1
                        if count == 0:
                            ext_t = etimes[j]
                            break
            if ext_t >= 0.0:
                statuses[i] = 0
                times[i] = base + ext_t
                break
            base += chunk
            if base >= max_time:
                statuses[i] = 1
                times[i] = base
                for v in range(n):
                    infected[v] = 0
                break
    return statuses, times
