"""Tests for both contact-process engines.

The timeline construction is checked against pathwise identities that must
hold event for event on a shared realization (duality, additivity, monotone
and thinning couplings, the semigroup property).  Both engines are anchored
to exact 2^n-state chain solutions and closed-form small cases.
"""

import math

import numpy as np
import pytest
import scipy.stats

from cp_lab import _kernels
from cp_lab.contact_process import (
    DensitySample,
    Timeline,
    as_init_ids,
    ctmc_exact_expected_extinction,
    evolve,
    first_passage_radius,
    geometric_time_grid,
    restrict_timeline,
    reverse_timeline,
    run_direct,
    sample_density,
    sample_extinction_times,
    sample_first_passage,
    sample_root_runs,
    sample_timeline,
    sample_timeline_extinction_times,
    shift_timeline,
    thin_timeline,
    timeline_from_text,
    timeline_to_text,
    timelines_equal,
    trajectory_csv_text,
)
from cp_lab.errors import StateSpaceTooLarge
from cp_lab.graphs import (
    DegreeDistribution,
    Graph,
    generate_configuration_model,
    generate_cycle,
    generate_lattice_box,
    generate_star,
)
from cp_lab.rng import derive_seeds

SINGLE = Graph.from_edges(1, [])


def _test_graphs():
    return [
        generate_lattice_box(1, 4),
        generate_cycle(6),
        generate_star(4),
        generate_configuration_model(DegreeDistribution.poisson(2.5), 8, seed=1),
    ]


def _random_subset(rng, n):
    k = int(rng.integers(1, n + 1))
    return rng.choice(n, size=k, replace=False)


# ---------------------------------------------------------------------------
# timeline structure
# ---------------------------------------------------------------------------

def test_sample_timeline_layout_and_determinism():
    g = generate_cycle(6)
    tl = sample_timeline(g, lam=0.8, t_end=3.0, seed=5)
    assert tl == sample_timeline(g, 0.8, 3.0, seed=5)
    assert not timelines_equal(tl, sample_timeline(g, 0.8, 3.0, seed=6))
    for i in range(g.m):
        times, dirs = tl.arrows_on_edge(i)
        assert np.all(np.diff(times) >= 0)
        assert np.all((dirs == 0) | (dirs == 1))
        assert times.size == 0 or (times.min() >= 0 and times.max() < 3.0)
    for v in range(g.n):
        times = tl.recoveries_at(v)
        assert np.all(np.diff(times) >= 0)
    with pytest.raises(ValueError):
        tl.arrow_times[0] = 0.0


def test_sample_timeline_rates_are_right_on_average():
    g = generate_cycle(40)
    tl = sample_timeline(g, lam=1.5, t_end=5.0, seed=0)
    # 40 edges * Poisson(15) arrows, 40 vertices * Poisson(5) recoveries
    assert abs(tl.n_arrows - 600) < 5 * math.sqrt(600)
    assert abs(tl.n_recoveries - 200) < 5 * math.sqrt(200)


def test_evolve_matches_compiled_sweep():
    rng = np.random.default_rng(12)
    for g in _test_graphs():
        tl = sample_timeline(g, lam=1.0, t_end=2.0, seed=int(rng.integers(2 ** 31)))
        times, kinds, ea, eb = tl.merged_events()
        init = as_init_ids(g, _random_subset(rng, g.n))
        for t in (0.0, 0.5, 1.3, 2.0):
            ref = evolve(tl, init, t)
            kern = _kernels.sweep_events(g.n, times, kinds, ea, eb, init, t)
            assert np.array_equal(ref, kern)


# ---------------------------------------------------------------------------
# pathwise identities on shared timelines
# ---------------------------------------------------------------------------

def test_duality_holds_pathwise():
    rng = np.random.default_rng(3)
    for g in _test_graphs():
        for _ in range(25):
            tl = sample_timeline(g, lam=0.8, t_end=2.0,
                                 seed=int(rng.integers(2 ** 31)))
            t = float(rng.uniform(0.1, 2.0))
            a = _random_subset(rng, g.n)
            b = _random_subset(rng, g.n)
            fwd = evolve(tl, a, t)
            bwd = evolve(reverse_timeline(tl, t), b, t)
            assert bool(fwd[b].any()) == bool(bwd[a].any())


def test_additivity_holds_pathwise():
    rng = np.random.default_rng(4)
    for g in _test_graphs():
        for _ in range(15):
            tl = sample_timeline(g, lam=1.2, t_end=2.0,
                                 seed=int(rng.integers(2 ** 31)))
            a = _random_subset(rng, g.n)
            b = _random_subset(rng, g.n)
            union = np.union1d(a, b)
            for t in (0.7, 2.0):
                xa = evolve(tl, a, t)
                xb = evolve(tl, b, t)
                assert np.array_equal(evolve(tl, union, t), xa | xb)


def test_monotonicity_holds_pathwise():
    rng = np.random.default_rng(5)
    for g in _test_graphs():
        for _ in range(15):
            tl = sample_timeline(g, lam=0.9, t_end=2.0,
                                 seed=int(rng.integers(2 ** 31)))
            b = _random_subset(rng, g.n)
            a = b[: max(1, b.size // 2)]
            for t in (0.5, 1.5):
                assert np.all(evolve(tl, a, t) <= evolve(tl, b, t))


def test_flow_property_holds_pathwise():
    rng = np.random.default_rng(6)
    for g in _test_graphs():
        for _ in range(15):
            tl = sample_timeline(g, lam=1.0, t_end=3.0,
                                 seed=int(rng.integers(2 ** 31)))
            t1 = float(rng.uniform(0.2, 1.5))
            t2 = float(rng.uniform(t1, 3.0))
            a = _random_subset(rng, g.n)
            x1 = evolve(tl, a, t1)
            direct = evolve(tl, a, t2)
            relayed = evolve(shift_timeline(tl, t1), x1.astype(bool), t2 - t1)
            assert np.array_equal(direct, relayed)


def test_thinning_couples_below():
    rng = np.random.default_rng(7)
    for g in _test_graphs():
        tl = sample_timeline(g, lam=1.0, t_end=3.0,
                             seed=int(rng.integers(2 ** 31)))
        thin = thin_timeline(tl, 0.4, seed=99)
        assert thin.lam == 0.4
        assert thin.n_arrows <= tl.n_arrows
        assert np.array_equal(thin.rec_times, tl.rec_times)
        a = _random_subset(rng, g.n)
        for t in (0.5, 1.5, 3.0):
            assert np.all(evolve(thin, a, t) <= evolve(tl, a, t))
    tl = sample_timeline(generate_cycle(5), 0.7, 2.0, seed=1)
    assert timelines_equal(thin_timeline(tl, 0.7, seed=5), tl)
    with pytest.raises(ValueError):
        thin_timeline(tl, 0.8, seed=5)


def test_reversal_is_an_involution():
    g = generate_cycle(6)
    tl = sample_timeline(g, lam=1.1, t_end=2.0, seed=8)
    rev2 = reverse_timeline(reverse_timeline(tl))
    assert timelines_equal(rev2, tl, time_atol=1e-9)
    rng = np.random.default_rng(0)
    a = _random_subset(rng, g.n)
    for t in (0.5, 1.2, 2.0):
        assert np.array_equal(evolve(rev2, a, t), evolve(tl, a, t))


def test_restrict_preserves_the_past():
    g = generate_lattice_box(1, 5)
    tl = sample_timeline(g, lam=1.0, t_end=3.0, seed=9)
    r = restrict_timeline(tl, 1.7)
    assert r.t_end == 1.7
    assert r.n_arrows <= tl.n_arrows
    rng = np.random.default_rng(1)
    for _ in range(10):
        a = _random_subset(rng, g.n)
        t = float(rng.uniform(0, 1.7))
        assert np.array_equal(evolve(r, a, t), evolve(tl, a, t))


def test_timeline_window_validation():
    tl = sample_timeline(generate_cycle(4), 0.5, 2.0, seed=2)
    with pytest.raises(ValueError):
        reverse_timeline(tl, 0.0)
    with pytest.raises(ValueError):
        reverse_timeline(tl, 2.5)
    with pytest.raises(ValueError):
        shift_timeline(tl, 2.0)
    with pytest.raises(ValueError):
        restrict_timeline(tl, 0.0)
    with pytest.raises(ValueError):
        evolve(tl, [0], 2.5)


def test_timeline_text_round_trip():
    g = generate_configuration_model(DegreeDistribution.poisson(2.0), 10, seed=3)
    tl = sample_timeline(g, lam=0.9, t_end=2.5, seed=14)
    back = timeline_from_text(timeline_to_text(tl), g)
    assert back == tl


def test_timeline_text_rejects_garbage():
    g = generate_cycle(4)
    tl = sample_timeline(g, 0.5, 1.0, seed=0)
    with pytest.raises(ValueError):
        timeline_from_text("not a header\n", g)
    with pytest.raises(ValueError):
        timeline_from_text("timeline 0.5 1\narrow 0 2 0.3\n", g)  # chord of C4
    with pytest.raises(ValueError):
        timeline_from_text("timeline 0.5 1\nrecovery 9 0.3\n", g)


# ---------------------------------------------------------------------------
# exact chain anchors
# ---------------------------------------------------------------------------

def test_exact_chain_single_vertex():
    assert ctmc_exact_expected_extinction(SINGLE, 0.7, [0]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.3, 1.0, 3.0])
def test_exact_chain_single_edge(lam):
    g = Graph.from_edges(2, [(0, 1)])
    # with both endpoints infected the chain solves to (3 + lam) / 2,
    # and from one endpoint to 1 + lam / 2
    assert ctmc_exact_expected_extinction(g, lam, "full") == pytest.approx(
        (3.0 + lam) / 2.0, rel=1e-10)
    assert ctmc_exact_expected_extinction(g, lam, [0]) == pytest.approx(
        1.0 + lam / 2.0, rel=1e-10)


def test_exact_chain_zero_rate_is_harmonic():
    g = generate_lattice_box(1, 5)
    h5 = sum(1.0 / k for k in range(1, 6))
    assert ctmc_exact_expected_extinction(g, 0.0, "full") == pytest.approx(h5, rel=1e-10)


def test_exact_chain_ignores_rate_without_edges():
    g = Graph.from_edges(2, [])
    assert ctmc_exact_expected_extinction(g, 3.0, "full") == pytest.approx(1.5, rel=1e-10)


def test_exact_chain_monotone_in_rate():
    g = generate_lattice_box(1, 3)
    values = [ctmc_exact_expected_extinction(g, lam, "full")
              for lam in (0.0, 0.5, 1.0, 2.0)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_exact_chain_guards():
    path21 = generate_lattice_box(1, 21)
    with pytest.raises(StateSpaceTooLarge):
        ctmc_exact_expected_extinction(path21, 0.5, "full")
    assert ctmc_exact_expected_extinction(SINGLE, 0.5, []) == 0.0


def test_direct_engine_matches_exact_chain():
    g = generate_lattice_box(1, 3)
    exact = ctmc_exact_expected_extinction(g, 1.0, "full")
    sample = sample_extinction_times(g, 1.0, 40000, seed=17)
    assert sample.extinct.all()
    sem = sample.times.std(ddof=1) / math.sqrt(sample.times.size)
    assert abs(sample.times.mean() - exact) < 4.5 * sem


def test_timeline_engine_matches_exact_chain():
    g = generate_lattice_box(1, 3)
    exact = ctmc_exact_expected_extinction(g, 1.0, "full")
    statuses, times = sample_timeline_extinction_times(g, 1.0, 40000, seed=23)
    assert (statuses == 0).all()
    sem = times.std(ddof=1) / math.sqrt(times.size)
    assert abs(times.mean() - exact) < 4.5 * sem


def test_engines_agree_in_distribution():
    g = generate_cycle(4)
    direct = sample_extinction_times(g, 0.7, 5000, seed=31).times
    _, timeline = sample_timeline_extinction_times(g, 0.7, 5000, seed=32)
    assert scipy.stats.ks_2samp(direct, timeline).pvalue > 1e-3


def test_isolated_vertex_lifetime_is_exponential():
    sample = sample_extinction_times(SINGLE, 0.5, 100000, seed=4)
    assert sample.extinct.all()
    assert scipy.stats.kstest(sample.times, "expon").pvalue > 1e-3
    assert abs(sample.times.mean() - 1.0) < 4.5 / math.sqrt(100000)


def test_star_first_push_probability():
    # from the center, infecting any leaf (rate k * lam) races one recovery
    g = generate_star(6)
    statuses, _ = sample_first_passage(g, 0.5, root=0, radius=1,
                                       n_runs=20000, seed=8)
    assert set(np.unique(statuses)) <= {0, 3}
    hit = float((statuses == 3).mean())
    p = 3.0 / 4.0
    assert abs(hit - p) < 4.5 * math.sqrt(p * (1 - p) / 20000)


# ---------------------------------------------------------------------------
# direct-engine features
# ---------------------------------------------------------------------------

def test_run_direct_is_deterministic():
    g = generate_cycle(8)
    kw = dict(radii=[2], sample_times=[0.0, 1.0, 2.0], eps_density=0.25)
    a = run_direct(g, 0.8, [0], 5.0, seed=21, **kw)
    b = run_direct(g, 0.8, [0], 5.0, seed=21, **kw)
    assert a.stop_time == b.stop_time and a.status == b.status
    assert a.n_events == b.n_events
    assert a.first_passage == b.first_passage
    assert np.array_equal(a.density_counts, b.density_counts, equal_nan=True)
    assert a.low_density_time == b.low_density_time
    c = run_direct(g, 0.8, [0], 5.0, seed=22, **kw)
    assert c.stop_time != a.stop_time


def test_run_direct_accepts_masks_ids_and_full():
    g = generate_cycle(6)
    mask = np.zeros(g.n, bool)
    mask[[0, 2]] = True
    a = run_direct(g, 0.7, [0, 2], 3.0, seed=5)
    b = run_direct(g, 0.7, mask, 3.0, seed=5)
    assert a.stop_time == b.stop_time and a.n_events == b.n_events
    full = run_direct(g, 0.7, "full", 3.0, seed=5)
    assert full.initial.size == g.n


def test_run_direct_first_passage_ordering():
    g = generate_lattice_box(1, 8)
    traj = run_direct(g, 4.0, [0], math.inf, seed=13, radii=[0, 3, 7])
    fp = traj.first_passage
    assert fp[0] == 0.0
    for r in (3, 7):
        assert fp[r] is not None
    if math.isfinite(fp[3]) and math.isfinite(fp[7]):
        assert fp[3] <= fp[7]
    if fp[3] == math.inf:
        assert fp[7] == math.inf


def test_run_direct_stop_when_radii_resolved():
    g = generate_lattice_box(1, 10)
    traj = run_direct(g, 6.0, [0], math.inf, seed=2, radii=[2],
                      stop_when_radii_resolved=True)
    assert traj.status in ("radii_resolved", "extinct")
    if traj.status == "radii_resolved":
        assert math.isfinite(traj.first_passage[2])
        assert not traj.censored


def test_first_passage_radius_zero_is_immediate():
    g = generate_cycle(5)
    assert first_passage_radius(g, 0.5, 0, 0, 10.0, seed=1) == ("hit", 0.0)


def test_density_samples_track_a_pure_death_run():
    traj = run_direct(SINGLE, 0.0, [0], 4.0, seed=2,
                      sample_times=[0.0, 0.5, 1.0, 2.0, 4.0])
    tau = traj.extinction_time if traj.status == "extinct" else math.inf
    expect = [1.0 if t < tau else 0.0 for t in traj.sample_times]
    assert traj.density_counts.tolist() == expect


def test_low_density_time_on_a_single_vertex():
    traj = run_direct(SINGLE, 0.0, [0], 5.0, seed=11, eps_density=0.0)
    assert traj.status == "extinct"
    assert traj.low_density_time == pytest.approx(5.0 - traj.extinction_time)
    assert traj.low_density_fraction == pytest.approx(traj.low_density_time / 5.0)


def test_run_direct_validates_inputs():
    g = generate_cycle(4)
    with pytest.raises(ValueError):
        run_direct(g, -0.1, [0], 1.0, seed=0)
    with pytest.raises(ValueError):
        run_direct(g, 0.5, [0], 0.0, seed=0)
    with pytest.raises(ValueError):
        run_direct(g, 0.5, [0], 1.0, seed=0, sample_times=[0.5, 0.2])
    with pytest.raises(ValueError):
        run_direct(g, 0.5, [0], 1.0, seed=0, sample_times=[2.0])
    with pytest.raises(ValueError):
        run_direct(g, 0.5, "everything", 1.0, seed=0)
    with pytest.raises(ValueError):
        run_direct(g, 0.5, [9], 1.0, seed=0)


def test_batches_are_chunking_invariant():
    g = generate_cycle(6)
    seeds = derive_seeds(5, "probe", n=100)
    _, full_times, _ = _kernels.ext_batch_full(
        g.indptr, g.indices, 0.8, seeds, math.inf, 10 ** 6)
    _, h1, _ = _kernels.ext_batch_full(
        g.indptr, g.indices, 0.8, seeds[:37], math.inf, 10 ** 6)
    _, h2, _ = _kernels.ext_batch_full(
        g.indptr, g.indices, 0.8, seeds[37:], math.inf, 10 ** 6)
    assert np.array_equal(full_times, np.concatenate((h1, h2)))


def test_timeline_engine_censors_at_max_time():
    statuses, times = sample_timeline_extinction_times(
        SINGLE, 0.0, 2000, seed=3, chunk=0.5, max_time=0.5)
    censored = statuses == 1
    assert 0 < censored.sum() < 2000
    assert np.all(times[censored] >= 0.5)
    frac = censored.mean()
    p = math.exp(-0.5)
    assert abs(frac - p) < 4.5 * math.sqrt(p * (1 - p) / 2000)


def test_sample_density_wrapper_shapes():
    g = generate_cycle(6)
    out = sample_density(g, 0.5, 50, seed=1, sample_times=[0.0, 1.0, 3.0],
                         horizon=3.0, eps_density=0.2)
    assert isinstance(out, DensitySample)
    assert out.counts.shape == (50, 3)
    assert np.all(out.counts[:, 0] == 6)
    assert out.statuses.shape == (50,) and out.low_times.shape == (50,)


def test_sample_root_runs_shapes_and_codes():
    g = generate_cycle(8)
    statuses, stop_times, taus = sample_root_runs(
        g, 0.9, roots=[0, 3, 5], radii=[1, 2], horizon=2.0, seed=6)
    assert statuses.shape == (3,) and taus.shape == (3, 2)
    assert np.all((statuses == 0) | (statuses == 1))
    finite = np.isfinite(taus)
    assert np.all(taus[finite] >= 0)


def test_extinction_sample_roots_start():
    g = generate_star(3)
    sample = sample_extinction_times(g, 0.2, 500, seed=9, start="roots", roots=0)
    assert sample.extinct.all()
    assert sample.times.min() > 0
    with pytest.raises(ValueError):
        sample_extinction_times(g, 0.2, 10, seed=9, start="roots")
    with pytest.raises(ValueError):
        sample_extinction_times(g, 0.2, 10, seed=9, start="typo")


def test_trajectory_csv_text():
    traj = run_direct(SINGLE, 0.0, [0], 2.0, seed=3, sample_times=[0.0, 2.0])
    text = trajectory_csv_text(traj)
    lines = text.split("\n")
    assert lines[0] == "time,infected"
    assert lines[1] == "0,1"
    assert len(lines) == 4 and lines[3] == ""
    with pytest.raises(ValueError):
        trajectory_csv_text(run_direct(SINGLE, 0.0, [0], 1.0, seed=0))


def test_geometric_time_grid():
    grid = geometric_time_grid(1.0, first=0.1, factor=1.3)
    assert grid[0] == 0.0 and grid[1] == pytest.approx(0.1)
    assert grid[-1] <= 1.0 and grid[-1] * 1.3 > 1.0
    assert np.all(np.diff(grid) > 0)
    with pytest.raises(ValueError):
        geometric_time_grid(0.0)
