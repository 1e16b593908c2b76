"""Tests for partitioning, assignment ranking, and association likelihoods."""

import itertools
import math

import numpy as np
import pytest

from etpmb import (
    BernoulliComponent,
    GammaParams,
    GaussianKinematics,
    GGIWDensity,
    InverseWishartExtent,
    PoissonComponent,
    PoissonIntensity,
    SensorConfig,
    all_partitions,
    association_log_likelihood,
    build_hypotheses,
    dbscan_partition,
    effective_miss_prob,
    enumerate_associations,
    ggiw_cell_update,
    hungarian,
    murty_k_best,
    partition_sweep,
)
from etpmb.association import InfeasibleAssignmentError, UpdateTables


def _track_at(pos, existence=0.8, track_id=0, rate_mean=6.0):
    mean = np.array([pos[0], 0.0, pos[1], 0.0])
    cov = np.diag([2.0, 1.0, 2.0, 1.0])
    return BernoulliComponent(
        existence,
        GGIWDensity(GammaParams(2.0 * rate_mean, 2.0),
                    GaussianKinematics(mean, cov),
                    InverseWishartExtent(14.0, 8.0 * np.eye(2))),
        track_id,
    )


def _ppp_at(positions, weight=0.3):
    comps = []
    for pos in positions:
        mean = np.array([pos[0], 0.0, pos[1], 0.0])
        comps.append(PoissonComponent(
            weight,
            GGIWDensity(GammaParams(8.0, 1.0),
                        GaussianKinematics(mean, np.diag([25.0, 4.0, 25.0, 4.0])),
                        InverseWishartExtent(14.0, 8.0 * np.eye(2)))))
    return PoissonIntensity(tuple(comps))


def _sensor(pd=0.9, lam=10.0):
    return SensorConfig(detection_prob=pd, clutter_rate=lam,
                        clutter_density=1.0 / 400.0,
                        meas_noise=np.zeros((2, 2)))


# ---------------------------------------------------------------------------
# partitioning


def test_dbscan_far_points_are_singletons():
    z = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    part = dbscan_partition(z, eps=1.0)
    assert sorted(part) == [(0,), (1,), (2,)]


def test_dbscan_chain_connects_into_one_cell():
    z = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    part = dbscan_partition(z, eps=1.5)
    assert part == ((0, 1, 2, 3),)


def test_dbscan_is_a_cover_for_any_radius():
    rng = np.random.default_rng(50)
    z = rng.uniform(-5.0, 5.0, size=(12, 2))
    for eps in (0.1, 0.5, 1.0, 3.0, 20.0):
        part = dbscan_partition(z, eps)
        flat = sorted(i for cell in part for i in cell)
        assert flat == list(range(12))
        assert all(len(set(cell)) == len(cell) for cell in part)
    assert dbscan_partition(z, 1000.0) == (tuple(range(12)),)


def test_dbscan_min_pts_noise_becomes_singletons():
    z = np.array([[0.0, 0.0], [0.5, 0.0], [0.9, 0.0], [50.0, 50.0]])
    part = dbscan_partition(z, eps=1.0, min_pts=3)
    assert (3,) in part
    flat = sorted(i for cell in part for i in cell)
    assert flat == [0, 1, 2, 3]


def test_dbscan_empty_input():
    assert dbscan_partition(np.zeros((0, 2)), 1.0) == ()


def test_partition_sweep_deduplicates_and_orders():
    z = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]])
    parts = partition_sweep(z, [0.1, 0.2, 1.5, 2.0, 10.0])
    # three regimes: all singletons, {0,1} together, everything together
    assert len(parts) == 3
    assert parts[0] == ((0,), (1,), (2,))
    assert parts[-1] == ((0, 1, 2),)
    with pytest.raises(ValueError):
        partition_sweep(z, [])


def test_all_partitions_counts_match_bell_numbers():
    bell = {0: 1, 1: 1, 2: 2, 3: 5, 4: 15, 5: 52}
    for n, count in bell.items():
        parts = all_partitions(n)
        assert len(parts) == count
        assert len(set(parts)) == count
        for part in parts:
            flat = sorted(i for cell in part for i in cell)
            assert flat == list(range(n))


# ---------------------------------------------------------------------------
# assignment ranking


def _brute_force_assignments(cost):
    rows, cols = cost.shape
    out = []
    for perm in itertools.permutations(range(cols), rows):
        total = sum(cost[i, j] for i, j in enumerate(perm))
        if math.isfinite(total):
            out.append((total, perm))
    out.sort(key=lambda t: t[0])
    return out


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(51)
    for trial in range(300):
        rows = int(rng.integers(1, 6))
        cols = int(rng.integers(rows, 6))
        cost = rng.uniform(-5.0, 5.0, size=(rows, cols))
        if trial % 3 == 0:
            cost[rng.random(size=cost.shape) < 0.25] = np.inf
        ref = _brute_force_assignments(cost)
        if not ref:
            with pytest.raises(InfeasibleAssignmentError):
                hungarian(cost)
            continue
        cols_out, total = hungarian(cost)
        assert total == pytest.approx(ref[0][0], rel=1e-12, abs=1e-12)
        assert len(set(cols_out)) == rows


def test_hungarian_rejects_more_rows_than_columns():
    with pytest.raises(ValueError):
        hungarian(np.zeros((3, 2)))


def test_murty_matches_sorted_brute_force():
    rng = np.random.default_rng(52)
    for trial in range(100):
        cost = rng.uniform(0.0, 10.0, size=(4, 4))
        if trial % 4 == 0:
            cost[rng.random(size=cost.shape) < 0.2] = np.inf
        ref = _brute_force_assignments(cost)
        got = murty_k_best(cost, 10)
        assert len(got) == min(10, len(ref))
        for (cols, total), (ref_total, _) in zip(got, ref):
            assert total == pytest.approx(ref_total, rel=1e-10, abs=1e-10)
            assert len(set(cols)) == 4
            recomputed = sum(cost[i, j] for i, j in enumerate(cols))
            assert recomputed == pytest.approx(total, rel=1e-10)


def test_murty_edge_cases():
    cost = np.array([[1.0, 2.0], [3.0, 0.5]])
    assert murty_k_best(cost, 0) == []
    top = murty_k_best(cost, 1)
    cols, total = hungarian(cost)
    assert len(top) == 1
    assert tuple(top[0][0]) == tuple(cols)
    assert top[0][1] == pytest.approx(total)
    # more requested than feasible: returns every assignment, sorted
    everything = murty_k_best(cost, 50)
    assert len(everything) == 2
    assert everything[0][1] <= everything[1][1]
    assert murty_k_best(np.full((2, 2), np.inf), 5) == []


def test_murty_costs_are_nondecreasing_and_unique():
    rng = np.random.default_rng(53)
    for _ in range(30):
        cost = rng.uniform(0.0, 4.0, size=(5, 7))
        got = murty_k_best(cost, 20)
        totals = [t for _, t in got]
        assert all(a <= b + 1e-12 for a, b in zip(totals, totals[1:]))
        assert len({tuple(c) for c, _ in got}) == len(got)


# ---------------------------------------------------------------------------
# association likelihood factors


def test_background_cell_singleton_matches_direct_formula():
    z = np.array([[3.0, 1.0]])
    ppp = _ppp_at([(0.0, 0.0), (5.0, 5.0)], weight=0.4)
    sensor = _sensor(lam=6.0)
    tables = UpdateTables(z, [], ppp, sensor, gate_prob=None)
    bg = tables.background((0,))
    inner = sum(
        c.weight * math.exp(ggiw_cell_update(c.density, z, sensor).log_lik)
        for c in ppp.components)
    kappa = sensor.clutter_rate * sensor.clutter_density
    assert bg.log_inner == pytest.approx(math.log(inner), rel=1e-10)
    assert bg.log_kappa == pytest.approx(math.log(kappa), rel=1e-12)
    assert bg.log_total == pytest.approx(math.log(kappa + inner), rel=1e-10)
    assert bg.existence == pytest.approx(inner / (kappa + inner), rel=1e-10)


def test_background_cell_multi_measurement_has_no_clutter_term():
    z = np.array([[0.0, 0.0], [1.0, 0.5]])
    ppp = _ppp_at([(0.0, 0.0)])
    sensor = _sensor()
    tables = UpdateTables(z, [], ppp, sensor, gate_prob=None)
    bg = tables.background((0, 1))
    assert bg.log_total == pytest.approx(bg.log_inner, rel=1e-12)
    assert bg.existence == 1.0


def test_detection_entries_match_cell_update():
    z = np.array([[2.0, 0.5], [30.0, 30.0]])
    track = _track_at((2.0, 0.0), existence=0.7)
    sensor = _sensor()
    tables = UpdateTables(z, [track], _ppp_at([(0.0, 0.0)]), sensor, gate_prob=None)
    logs, _ = tables.detection((0,))
    expect = math.log(0.7) + ggiw_cell_update(track.density, z[:1], sensor).log_lik
    assert logs[0] == pytest.approx(expect, rel=1e-10)


def test_centroid_gate_suppresses_far_cells():
    z = np.array([[200.0, 200.0]])
    track = _track_at((0.0, 0.0))
    gated = UpdateTables(z, [track], _ppp_at([]), _sensor(), gate_prob=0.999)
    open_t = UpdateTables(z, [track], _ppp_at([]), _sensor(), gate_prob=None)
    assert gated.detection((0,))[0][0] == -np.inf
    assert np.isfinite(open_t.detection((0,))[0][0])


def test_miss_factors_use_effective_miss_probability():
    track = _track_at((0.0, 0.0), existence=0.6)
    sensor = _sensor(pd=0.8)
    tables = UpdateTables(np.zeros((0, 2)), [track], _ppp_at([]), sensor)
    q = effective_miss_prob(track.density.meas_rate, 0.8)
    assert tables.miss_logs[0] == pytest.approx(math.log(1.0 - 0.6 + 0.6 * q),
                                                rel=1e-12)


def test_association_log_likelihood_single_track_single_measurement():
    z = np.array([[1.5, -0.5]])
    track = _track_at((1.0, 0.0), existence=0.75)
    ppp = _ppp_at([(0.0, 0.0)])
    sensor = _sensor(lam=4.0)
    hyps = enumerate_associations(z, [track], ppp, sensor)
    assert len(hyps) == 2
    by_key = {h.key: h for h in hyps}
    detect = by_key[frozenset({((0,), 0)})]
    background = by_key[frozenset({((0,), None)})]

    cell_ll = ggiw_cell_update(track.density, z, sensor).log_lik
    expect_detect = math.log(0.75) + cell_ll
    assert detect.log_likelihood == pytest.approx(expect_detect, rel=1e-10)

    inner = sum(c.weight * math.exp(ggiw_cell_update(c.density, z, sensor).log_lik)
                for c in ppp.components)
    kappa = sensor.clutter_rate * sensor.clutter_density
    q = effective_miss_prob(track.density.meas_rate, sensor.detection_prob)
    expect_bg = math.log(kappa + inner) + math.log(1.0 - 0.75 + 0.75 * q)
    assert background.log_likelihood == pytest.approx(expect_bg, rel=1e-10)

    # direct evaluator agrees with the enumerated values
    for h in hyps:
        direct = association_log_likelihood(z, h, [track], ppp, sensor)
        assert direct == pytest.approx(h.log_likelihood, rel=1e-12)


def test_enumerate_two_measurements_one_track_gives_five_associations():
    z = np.array([[1.0, 0.0], [2.0, 0.5]])
    track = _track_at((1.5, 0.0))
    ppp = _ppp_at([(0.0, 0.0)])
    hyps = enumerate_associations(z, [track], ppp, _sensor())
    assert len(hyps) == 5
    keys = {h.key for h in hyps}
    expect = {
        frozenset({((0, 1), 0)}),              # merged cell to the track
        frozenset({((0, 1), None)}),           # merged cell to the background
        frozenset({((0,), 0), ((1,), None)}),  # first detects, second clutter
        frozenset({((0,), None), ((1,), 0)}),  # second detects, first clutter
        frozenset({((0,), None), ((1,), None)}),  # both background
    }
    assert keys == expect
    assert sum(h.weight for h in hyps) == pytest.approx(1.0, abs=1e-12)


def test_enumerate_weights_are_likelihood_ratios():
    rng = np.random.default_rng(54)
    z = rng.normal(scale=2.0, size=(3, 2))
    tracks = [_track_at((0.0, 0.0), track_id=0), _track_at((2.0, 2.0), track_id=1)]
    hyps = enumerate_associations(z, tracks, _ppp_at([(0.0, 0.0)]), _sensor())
    assert sum(h.weight for h in hyps) == pytest.approx(1.0, abs=1e-12)
    logs = np.array([h.log_likelihood for h in hyps])
    expect = np.exp(logs - logs.max())
    expect /= expect.sum()
    np.testing.assert_allclose([h.weight for h in hyps], expect, rtol=1e-10)


def test_enumerate_guard_rails():
    z = np.zeros((7, 2))
    with pytest.raises(ValueError):
        enumerate_associations(z, [], _ppp_at([]), _sensor())
    tracks = [_track_at((0.0, 0.0), track_id=i) for i in range(5)]
    with pytest.raises(ValueError):
        enumerate_associations(np.zeros((1, 2)), tracks, _ppp_at([]), _sensor())


# ---------------------------------------------------------------------------
# ranked hypothesis building


def test_build_hypotheses_exhaustive_matches_enumeration():
    rng = np.random.default_rng(55)
    for trial in range(10):
        n_meas = int(rng.integers(1, 5))
        n_tracks = int(rng.integers(0, 3))
        z = rng.normal(scale=3.0, size=(n_meas, 2))
        tracks = [_track_at(tuple(rng.normal(scale=2.0, size=2)), track_id=i,
                            existence=float(rng.uniform(0.3, 0.9)))
                  for i in range(n_tracks)]
        ppp = _ppp_at([(0.0, 0.0)])
        sensor = _sensor(lam=float(rng.uniform(2.0, 15.0)))
        ref = {h.key: h.weight for h in enumerate_associations(z, tracks, ppp, sensor)}
        got = build_hypotheses(z, all_partitions(n_meas), tracks, ppp, sensor,
                               murty_k=None, cum_weight=1.0, gate_prob=None)
        assert len(got) == len(ref)
        for h in got:
            assert h.weight == pytest.approx(ref[h.key], rel=1e-9, abs=1e-12)


def test_build_hypotheses_truncates_by_cumulative_weight():
    rng = np.random.default_rng(56)
    z = rng.normal(scale=3.0, size=(4, 2))
    tracks = [_track_at((0.0, 0.0), track_id=0)]
    ppp = _ppp_at([(0.0, 0.0)])
    full = build_hypotheses(z, all_partitions(4), tracks, ppp, _sensor(),
                            murty_k=None, cum_weight=1.0, gate_prob=None)
    cut = build_hypotheses(z, all_partitions(4), tracks, ppp, _sensor(),
                           murty_k=None, cum_weight=0.9, gate_prob=None)
    assert len(cut) < len(full)
    assert sum(h.weight for h in cut) == pytest.approx(1.0, abs=1e-12)
    # kept hypotheses are the heaviest ones of the full list
    full_sorted = sorted(full, key=lambda h: -h.weight)
    kept = {h.key for h in cut}
    assert kept == {h.key for h in full_sorted[:len(cut)]}


def test_build_hypotheses_all_background_when_nothing_gates():
    z = np.array([[500.0, 500.0]])
    tracks = [_track_at((0.0, 0.0))]
    hyps = build_hypotheses(z, [((0,),)], tracks, _ppp_at([(0.0, 0.0)]), _sensor())
    assert len(hyps) >= 1
    assert hyps[0].cell_tracks == (None,)
