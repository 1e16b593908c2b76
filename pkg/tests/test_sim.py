"""Tests for scenario generation and extended-target measurement simulation."""

import json

import numpy as np
import pytest

from etpmb import (
    ScenarioConfig,
    SensorConfig,
    TargetSpec,
    generate_measurements,
    generate_truth,
    measurement_records,
    scenario_from_json,
    sensor_config,
    truth_records,
)


def _unit_extent():
    return ((1.0, 0.0), (0.0, 1.0))


def _static_target(duration, pos=(0.0, 0.0), meas_rate=8.0):
    return TargetSpec(0, duration, pos, (0.0, 0.0), _unit_extent(), meas_rate)


def _bare_config(duration, *, detection_prob=0.9, clutter_rate=10.0, targets=()):
    return ScenarioConfig(name="test", duration=duration, region=(-200.0, 200.0),
                          detection_prob=detection_prob, clutter_rate=clutter_rate,
                          targets=tuple(targets))


# ---------------------------------------------------------------------------
# Preset scenarios


def test_preset_crowded_scene_counts():
    truth = generate_truth("scenario1", seed=0)
    assert len(truth.trajectories) == 27
    assert truth.duration == 100
    for traj in truth.trajectories:
        assert 0 <= traj.birth_step < traj.death_step <= 100
        assert traj.states.shape == (traj.death_step - traj.birth_step, 4)
        np.testing.assert_allclose(traj.extent, traj.extent.T)
        assert np.all(np.linalg.eigvalsh(traj.extent) > 0.0)


def test_preset_dense_birth_all_start_together():
    truth = generate_truth("scenario2", seed=3)
    assert len(truth.trajectories) == 5
    assert truth.duration == 10
    assert all(traj.birth_step == 0 for traj in truth.trajectories)
    assert all(traj.death_step == 10 for traj in truth.trajectories)
    assert truth.cardinality(0) == 5 and truth.cardinality(9) == 5


def test_preset_merge_split_counts():
    truth = generate_truth("scenario3", seed=1)
    assert len(truth.trajectories) == 5
    assert truth.duration == 40
    # The targets converge towards the origin mid-scene.
    start = np.mean([np.linalg.norm(t.center_at(0)) for t in truth.trajectories])
    mid = np.mean([np.linalg.norm(t.center_at(20)) for t in truth.trajectories])
    assert mid < 0.5 * start


def test_preset_turning_pair_reverses_heading():
    truth = generate_truth("scenario4", seed=2)
    assert len(truth.trajectories) == 2
    assert truth.duration == 300
    for traj in truth.trajectories:
        v_before = traj.states[50, [1, 3]]
        v_after = traj.states[250, [1, 3]]
        # A half turn between steps 100 and 200 flips the velocity vector.
        np.testing.assert_allclose(v_after, -v_before, atol=1e-8)


def test_preset_truth_is_seed_deterministic():
    a = generate_truth("scenario1", seed=42)
    b = generate_truth("scenario1", seed=42)
    c = generate_truth("scenario1", seed=43)
    for ta, tb in zip(a.trajectories, b.trajectories):
        np.testing.assert_array_equal(ta.states, tb.states)
        np.testing.assert_array_equal(ta.extent, tb.extent)
    assert any(ta.states.shape != tc.states.shape
               or not np.array_equal(ta.states, tc.states)
               for ta, tc in zip(a.trajectories, c.trajectories))


def test_unknown_preset_name_is_treated_as_path():
    with pytest.raises(OSError):
        generate_truth("no_such_scenario")


# ---------------------------------------------------------------------------
# Trajectory integration


def test_constant_velocity_integration():
    spec = TargetSpec(2, 7, (1.0, -2.0), (0.5, 1.5), _unit_extent(), 6.0)
    truth = generate_truth(_bare_config(10, targets=[spec]))
    traj = truth.trajectories[0]
    for k in range(5):
        np.testing.assert_allclose(
            traj.states[k], [1.0 + 0.5 * k, 0.5, -2.0 + 1.5 * k, 1.5])


def test_turn_rotates_velocity_during_window():
    # Quarter-turn per step applied at steps 1 and 2 only.
    spec = TargetSpec(0, 5, (0.0, 0.0), (1.0, 0.0), _unit_extent(), 6.0,
                      turn_rate=np.pi / 2.0, turn_start=1, turn_end=3)
    traj = generate_truth(_bare_config(5, targets=[spec])).trajectories[0]
    np.testing.assert_allclose(traj.states[:, [1, 3]],
                               [[1, 0], [1, 0], [0, 1], [-1, 0], [-1, 0]],
                               atol=1e-12)
    np.testing.assert_allclose(traj.states[:, [0, 2]],
                               [[0, 0], [1, 0], [1, 1], [0, 1], [-1, 1]],
                               atol=1e-12)


def test_trajectory_alive_and_state_accessors():
    spec = TargetSpec(3, 8, (2.0, 4.0), (1.0, 0.0), _unit_extent(), 6.0)
    traj = generate_truth(_bare_config(10, targets=[spec])).trajectories[0]
    assert not traj.alive_at(2) and traj.alive_at(3)
    assert traj.alive_at(7) and not traj.alive_at(8)
    np.testing.assert_allclose(traj.center_at(3), [2.0, 4.0])
    np.testing.assert_allclose(traj.center_at(5), [4.0, 4.0])
    with pytest.raises(ValueError):
        traj.state_at(8)


def test_truth_set_pairs_match_alive_targets():
    specs = [TargetSpec(0, 4, (0.0, 0.0), (1.0, 0.0), _unit_extent(), 6.0),
             TargetSpec(2, 6, (5.0, 5.0), (0.0, 1.0), _unit_extent(), 6.0)]
    truth = generate_truth(_bare_config(6, targets=specs))
    assert truth.cardinality(0) == 1
    assert truth.cardinality(3) == 2
    pairs = truth.truth_set(3)
    assert len(pairs) == 2
    centers = sorted(tuple(c) for c, _ in pairs)
    assert centers == [(3.0, 0.0), (5.0, 6.0)]
    for _, extent in pairs:
        np.testing.assert_array_equal(extent, np.eye(2))


def test_degenerate_lifetime_rejected():
    spec = TargetSpec(5, 5, (0.0, 0.0), (1.0, 0.0), _unit_extent(), 6.0)
    with pytest.raises(ValueError):
        generate_truth(_bare_config(10, targets=[spec]))


# ---------------------------------------------------------------------------
# Measurement generation


def test_measurements_shape_and_determinism():
    truth = generate_truth("scenario2", seed=0)
    scans_a = generate_measurements(truth, seed=5)
    scans_b = generate_measurements(truth, seed=5)
    scans_c = generate_measurements(truth, seed=6)
    assert len(scans_a) == truth.duration
    for scan in scans_a:
        assert scan.ndim == 2 and scan.shape[1] == 2
    for a, b in zip(scans_a, scans_b):
        np.testing.assert_array_equal(a, b)
    assert any(a.shape != c.shape or not np.array_equal(a, c)
               for a, c in zip(scans_a, scans_c))


def test_silent_sensor_produces_empty_scans():
    truth = generate_truth(_bare_config(20, targets=[_static_target(20)]))
    sensor = SensorConfig(detection_prob=0.0, clutter_rate=0.0,
                          clutter_density=1.0 / 400.0**2, meas_noise=0.25 * np.eye(2))
    scans = generate_measurements(truth, seed=0, sensor=sensor)
    assert all(scan.shape == (0, 2) for scan in scans)


def test_measurement_origins_match_alive_targets():
    truth = generate_truth("scenario1", seed=7)
    scans, origins = generate_measurements(truth, seed=7, return_origins=True)
    assert len(origins) == len(scans)
    saw_clutter = saw_target = False
    for t, (scan, src) in enumerate(zip(scans, origins)):
        assert len(src) == len(scan)
        for s in src:
            if s < 0:
                saw_clutter = True
            else:
                saw_target = True
                assert truth.trajectories[s].alive_at(t)
    assert saw_clutter and saw_target


def test_detection_count_statistics():
    # Per-step count is Bernoulli(pd) times Poisson(rate); check the empirical
    # total over many steps against its mean within four standard deviations.
    pd, rate, steps = 0.6, 8.0, 400
    truth = generate_truth(_bare_config(steps, detection_prob=pd, clutter_rate=0.0,
                                        targets=[_static_target(steps, meas_rate=rate)]))
    scans = generate_measurements(truth, seed=11)
    total = sum(len(scan) for scan in scans)
    mean = steps * pd * rate
    var = steps * (pd * (rate + rate**2) - (pd * rate) ** 2)
    assert abs(total - mean) < 4.0 * np.sqrt(var)
    # A scan is empty when detection fails (or the Poisson draw is zero).
    empty = sum(len(scan) == 0 for scan in scans)
    p_empty = 1.0 - pd + pd * np.exp(-rate)
    assert abs(empty - steps * p_empty) < 4.0 * np.sqrt(steps * p_empty * (1 - p_empty))


def test_clutter_count_statistics_and_support():
    steps, lam = 300, 12.0
    truth = generate_truth(_bare_config(steps, detection_prob=0.0, clutter_rate=lam))
    scans, origins = generate_measurements(truth, seed=13, return_origins=True)
    total = sum(len(scan) for scan in scans)
    assert abs(total - steps * lam) < 4.0 * np.sqrt(steps * lam)
    for scan, src in zip(scans, origins):
        assert np.all(src == -1)
        if len(scan):
            assert np.all(scan >= -200.0) and np.all(scan <= 200.0)


def test_detections_cluster_around_target():
    truth = generate_truth(_bare_config(
        200, detection_prob=1.0, clutter_rate=0.0,
        targets=[_static_target(200, pos=(30.0, -40.0), meas_rate=10.0)]))
    scans = generate_measurements(truth, seed=17)
    points = np.concatenate(scans, axis=0)
    # Spread is extent plus measurement noise: 1.25 * I here.
    np.testing.assert_allclose(points.mean(axis=0), [30.0, -40.0], atol=0.15)
    np.testing.assert_allclose(points.var(axis=0), [1.25, 1.25], rtol=0.15)


# ---------------------------------------------------------------------------
# Records and JSON scenarios


def test_truth_records_format():
    truth = generate_truth("scenario2", seed=0)
    lines = list(truth_records(truth))
    expected = sum(truth.cardinality(t) for t in range(truth.duration))
    assert len(lines) == expected
    first = lines[0].split(",")
    assert first[0] == "truth"
    assert len(first) == 3 + 4 + 4 + 1    # tag, step, id, state, extent, rate
    t, idx = int(first[1]), int(first[2])
    np.testing.assert_allclose([float(v) for v in first[3:7]],
                               truth.trajectories[idx].state_at(t))


def test_measurement_records_format():
    truth = generate_truth("scenario2", seed=0)
    scans, origins = generate_measurements(truth, seed=1, return_origins=True)
    lines = list(measurement_records(scans, origins))
    assert len(lines) == sum(len(scan) for scan in scans)
    for line in lines[:25]:
        tag, t, src, x, y = line.split(",")
        assert tag == "meas"
        assert 0 <= int(t) < truth.duration
        assert int(src) >= -1
        float(x), float(y)
    # Without origins every record is tagged as clutter.
    anon = next(iter(measurement_records(scans)))
    assert anon.split(",")[2] == "-1"


def test_scenario_json_roundtrip(tmp_path):
    raw = {
        "name": "custom",
        "duration": 12,
        "region": [-50.0, 50.0],
        "detection_prob": 0.8,
        "clutter_rate": 4.0,
        "meas_noise_var": 0.5,
        "typical_meas_rate": 6.0,
        "birth_sites": [[0.0, 0.0], [10.0, 10.0]],
        "birth_rate": 0.2,
        "birth_pos_std": 15.0,
        "targets": [{
            "birth_step": 1, "death_step": 9,
            "position": [2.0, 3.0], "velocity": [1.0, 0.0],
            "extent": [[2.0, 0.5], [0.5, 1.0]], "meas_rate": 7.0,
            "turn_rate": 0.1, "turn_start": 3, "turn_end": 6,
        }],
    }
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(raw))
    cfg = scenario_from_json(str(path))
    assert cfg.name == "custom" and cfg.duration == 12
    assert cfg.region == (-50.0, 50.0)
    assert cfg.birth_sites == ((0.0, 0.0), (10.0, 10.0))
    spec = cfg.targets[0]
    assert spec.birth_step == 1 and spec.death_step == 9
    assert spec.extent == ((2.0, 0.5), (0.5, 1.0))
    assert spec.turn_rate == 0.1 and spec.turn_end == 6
    truth = generate_truth(str(path))
    assert truth.duration == 12
    assert len(truth.trajectories) == 1


def test_scenario_json_defaults(tmp_path):
    path = tmp_path / "minimal.json"
    path.write_text(json.dumps({"duration": 5}))
    cfg = scenario_from_json(str(path))
    assert cfg.duration == 5
    assert cfg.region == (-200.0, 200.0)
    assert cfg.detection_prob == 0.9
    assert cfg.targets == ()


def test_sensor_config_matches_scenario():
    cfg = _bare_config(10, detection_prob=0.75, clutter_rate=30.0)
    sensor = sensor_config(cfg)
    assert sensor.detection_prob == 0.75
    assert sensor.clutter_rate == 30.0
    assert sensor.clutter_density == pytest.approx(1.0 / 400.0**2)
    np.testing.assert_allclose(sensor.meas_noise, 0.25 * np.eye(2))
