"""Scenario simulation: ground-truth trajectories and extended-target scans.

A scenario is described declaratively by :class:`ScenarioConfig` (either a
built-in preset or a JSON file) and materialized into a :class:`ScenarioTruth`
holding integrated trajectories.  Measurement generation draws, per step and
per alive target, a detection flag, a Poisson number of detections and
Gaussian returns spread by the target extent plus sensor noise, then adds
uniform clutter over the surveillance region.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ggiw import SensorConfig

__all__ = [
    "TargetSpec",
    "ScenarioConfig",
    "Trajectory",
    "ScenarioTruth",
    "PRESETS",
    "generate_truth",
    "generate_measurements",
    "truth_records",
    "measurement_records",
    "sensor_config",
    "scenario_from_json",
]


@dataclass(frozen=True)
class TargetSpec:
    """Declarative description of one target's life and motion.

    Motion is constant-velocity except during ``[turn_start, turn_end)`` where
    the velocity vector rotates by ``turn_rate`` radians per step.
    """

    birth_step: int
    death_step: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    extent: tuple[tuple[float, float], tuple[float, float]]
    meas_rate: float
    turn_rate: float = 0.0
    turn_start: int = 0
    turn_end: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    duration: int
    region: tuple[float, float]          # square surveillance region per axis
    detection_prob: float
    clutter_rate: float
    meas_noise_var: float = 0.25
    typical_meas_rate: float = 8.0       # prior guess used for birth models
    birth_sites: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    birth_rate: float = 0.3              # expected new targets per step
    birth_pos_std: float = 50.0
    targets: tuple[TargetSpec, ...] = ()

    @property
    def area(self) -> float:
        side = self.region[1] - self.region[0]
        return side * side


@dataclass(frozen=True)
class Trajectory:
    """One materialized target: states over its lifetime plus shape and rate.

    ``states[k]`` is the interleaved kinematic state [px, vx, py, vy] at
    absolute step ``birth_step + k``; the target is alive for steps
    ``birth_step <= t < death_step``.
    """

    birth_step: int
    death_step: int
    states: np.ndarray
    extent: np.ndarray
    meas_rate: float

    def alive_at(self, t: int) -> bool:
        return self.birth_step <= t < self.death_step

    def state_at(self, t: int) -> np.ndarray:
        if not self.alive_at(t):
            raise ValueError(f"target not alive at step {t}")
        return self.states[t - self.birth_step]

    def center_at(self, t: int) -> np.ndarray:
        return self.state_at(t)[[0, 2]]


@dataclass(frozen=True)
class ScenarioTruth:
    config: ScenarioConfig
    trajectories: tuple[Trajectory, ...] = field(default_factory=tuple)

    @property
    def duration(self) -> int:
        return self.config.duration

    def alive(self, t: int) -> list[Trajectory]:
        return [traj for traj in self.trajectories if traj.alive_at(t)]

    def truth_set(self, t: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """(center, extent) pairs of all alive targets, for metric evaluation."""
        return [(traj.center_at(t), traj.extent) for traj in self.alive(t)]

    def cardinality(self, t: int) -> int:
        return len(self.alive(t))


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _integrate(spec: TargetSpec) -> np.ndarray:
    n = spec.death_step - spec.birth_step
    if n <= 0:
        raise ValueError("target must die strictly after its birth step")
    states = np.empty((n, 4))
    pos = np.asarray(spec.position, dtype=float).copy()
    vel = np.asarray(spec.velocity, dtype=float).copy()
    turn = _rotation(spec.turn_rate)
    for k in range(n):
        states[k] = [pos[0], vel[0], pos[1], vel[1]]
        t = spec.birth_step + k
        if spec.turn_rate != 0.0 and spec.turn_start <= t < spec.turn_end:
            vel = turn @ vel
        pos = pos + vel
    return states


def _random_extent(rng: np.random.Generator,
                   axis_range: tuple[float, float] = (1.0, 3.0)) -> np.ndarray:
    """Random ellipse: uniform orientation, semi-axes uniform in axis_range."""
    axes = rng.uniform(*axis_range, size=2)
    rot = _rotation(rng.uniform(0.0, np.pi))
    return rot @ np.diag(axes**2) @ rot.T


def _preset_crossing_sites(rng: np.random.Generator) -> ScenarioConfig:
    """27 targets born near four corner sites, converging over 100 steps."""
    sites = ((-100.0, -100.0), (-100.0, 100.0), (100.0, -100.0), (100.0, 100.0))
    duration = 100
    targets = []
    for i in range(27):
        birth_step = int(rng.integers(0, 61))
        death_step = min(duration, birth_step + int(rng.integers(30, 61)))
        pos = np.asarray(sites[i % 4]) + rng.normal(0.0, 5.0, size=2)
        speed = rng.uniform(1.0, 3.0)
        inward = -pos / np.linalg.norm(pos)
        vel = speed * (_rotation(rng.normal(0.0, 0.3)) @ inward)
        targets.append(TargetSpec(birth_step, death_step, tuple(pos), tuple(vel),
                                  tuple(map(tuple, _random_extent(rng))),
                                  float(rng.choice([7.0, 8.0, 9.0]))))
    return ScenarioConfig(
        name="scenario1", duration=duration, region=(-200.0, 200.0),
        detection_prob=0.9, clutter_rate=60.0, typical_meas_rate=8.0,
        birth_sites=sites, birth_rate=0.3, birth_pos_std=20.0,
        targets=tuple(targets),
    )


def _preset_dense_birth(rng: np.random.Generator) -> ScenarioConfig:
    """Five closely spaced targets appearing at once in a short scene."""
    duration = 10
    targets = []
    for i in range(5):
        angle = 2.0 * np.pi * i / 5 + rng.normal(0.0, 0.1)
        pos = 8.0 * np.array([np.cos(angle), np.sin(angle)])
        vel = rng.uniform(1.0, 2.0) * pos / np.linalg.norm(pos) + rng.normal(0.0, 0.2, 2)
        targets.append(TargetSpec(0, duration, tuple(pos), tuple(vel),
                                  tuple(map(tuple, _random_extent(rng))), 10.0))
    return ScenarioConfig(
        name="scenario2", duration=duration, region=(-200.0, 200.0),
        detection_prob=0.9, clutter_rate=20.0, typical_meas_rate=10.0,
        birth_sites=((0.0, 0.0),), birth_rate=0.5, birth_pos_std=20.0,
        targets=tuple(targets),
    )


def _preset_merge_split(rng: np.random.Generator) -> ScenarioConfig:
    """Five targets converge to the origin mid-scene and separate again."""
    duration = 40
    targets = []
    for i in range(5):
        angle = 2.0 * np.pi * i / 5 + rng.normal(0.0, 0.05)
        radius = rng.uniform(55.0, 65.0)
        pos = radius * np.array([np.cos(angle), np.sin(angle)])
        aim = rng.normal(0.0, 3.0, size=2)
        vel = (aim - pos) / 20.0   # reach the aim point around step 20
        targets.append(TargetSpec(0, duration, tuple(pos), tuple(vel),
                                  tuple(map(tuple, _random_extent(rng))), 5.0))
    return ScenarioConfig(
        name="scenario3", duration=duration, region=(-200.0, 200.0),
        detection_prob=0.7, clutter_rate=10.0, typical_meas_rate=5.0,
        birth_sites=((0.0, 0.0),), birth_rate=0.3, birth_pos_std=70.0,
        targets=tuple(targets),
    )


def _preset_turning_pair(rng: np.random.Generator) -> ScenarioConfig:
    """Two long-lived targets that maneuver through half-turns in proximity."""
    duration = 300
    omega = np.pi / 100.0
    targets = []
    for sign, rate in ((-1.0, 10.0), (1.0, 20.0)):
        pos = (-150.0 + rng.normal(0.0, 1.0), sign * 5.0 + rng.normal(0.0, 0.5))
        vel = (rng.uniform(1.9, 2.1), 0.0)
        targets.append(TargetSpec(0, duration, pos, vel,
                                  tuple(map(tuple, _random_extent(rng))), rate,
                                  turn_rate=-sign * omega,
                                  turn_start=100, turn_end=200))
    return ScenarioConfig(
        name="scenario4", duration=duration, region=(-200.0, 200.0),
        detection_prob=0.98, clutter_rate=10.0, typical_meas_rate=15.0,
        birth_sites=((-150.0, 0.0),), birth_rate=0.1, birth_pos_std=20.0,
        targets=tuple(targets),
    )


PRESETS = {
    "scenario1": _preset_crossing_sites,
    "scenario2": _preset_dense_birth,
    "scenario3": _preset_merge_split,
    "scenario4": _preset_turning_pair,
}


def scenario_from_json(path: str) -> ScenarioConfig:
    """Load a scenario description from a JSON file (same fields as the dataclass)."""
    with open(path) as fh:
        raw = json.load(fh)
    targets = tuple(
        TargetSpec(
            birth_step=int(t["birth_step"]), death_step=int(t["death_step"]),
            position=tuple(t["position"]), velocity=tuple(t["velocity"]),
            extent=tuple(map(tuple, t["extent"])), meas_rate=float(t["meas_rate"]),
            turn_rate=float(t.get("turn_rate", 0.0)),
            turn_start=int(t.get("turn_start", 0)),
            turn_end=int(t.get("turn_end", 0)),
        )
        for t in raw.get("targets", ())
    )
    return ScenarioConfig(
        name=str(raw.get("name", "custom")),
        duration=int(raw["duration"]),
        region=tuple(raw.get("region", (-200.0, 200.0))),
        detection_prob=float(raw.get("detection_prob", 0.9)),
        clutter_rate=float(raw.get("clutter_rate", 10.0)),
        meas_noise_var=float(raw.get("meas_noise_var", 0.25)),
        typical_meas_rate=float(raw.get("typical_meas_rate", 8.0)),
        birth_sites=tuple(map(tuple, raw.get("birth_sites", ((0.0, 0.0),)))),
        birth_rate=float(raw.get("birth_rate", 0.3)),
        birth_pos_std=float(raw.get("birth_pos_std", 50.0)),
        targets=targets,
    )


def generate_truth(scenario, seed: int = 0) -> ScenarioTruth:
    """Materialize a scenario into trajectories.

    ``scenario`` may be a preset name, a path to a JSON scenario file, or a
    ready :class:`ScenarioConfig`.  The seed only matters for presets, whose
    target parameters are randomized; explicit configs are deterministic.
    """
    if isinstance(scenario, ScenarioConfig):
        cfg = scenario
    elif scenario in PRESETS:
        cfg = PRESETS[scenario](np.random.default_rng(seed))
    else:
        cfg = scenario_from_json(scenario)
    trajectories = tuple(
        Trajectory(spec.birth_step, spec.death_step, _integrate(spec),
                   np.asarray(spec.extent, dtype=float), spec.meas_rate)
        for spec in cfg.targets
    )
    return ScenarioTruth(cfg, trajectories)


def sensor_config(cfg: ScenarioConfig) -> SensorConfig:
    """Sensor model matching a scenario: uniform clutter over its region."""
    return SensorConfig(
        detection_prob=cfg.detection_prob,
        clutter_rate=cfg.clutter_rate,
        clutter_density=1.0 / cfg.area,
        meas_noise=cfg.meas_noise_var * np.eye(2),
    )


def generate_measurements(truth: ScenarioTruth, seed: int = 0, *,
                          sensor: SensorConfig | None = None,
                          return_origins: bool = False):
    """One measurement scan per step: target detections plus uniform clutter.

    ``sensor`` overrides the detection probability, clutter rate and noise
    implied by the scenario config.  With ``return_origins`` the function also
    returns, per scan, an int array giving each measurement's source: the index
    of the generating trajectory, or -1 for clutter.
    """
    cfg = truth.config
    if sensor is None:
        sensor = sensor_config(cfg)
    rng = np.random.default_rng(seed)
    noise = np.asarray(sensor.meas_noise, dtype=float)
    scans, origins = [], []
    for t in range(cfg.duration):
        points, sources = [], []
        for idx, traj in enumerate(truth.trajectories):
            if not traj.alive_at(t) or rng.random() >= sensor.detection_prob:
                continue
            count = rng.poisson(traj.meas_rate)
            if count > 0:
                points.append(rng.multivariate_normal(
                    traj.center_at(t), traj.extent + noise, size=count))
                sources.append(np.full(count, idx))
        n_clutter = rng.poisson(sensor.clutter_rate)
        if n_clutter > 0:
            points.append(rng.uniform(cfg.region[0], cfg.region[1], size=(n_clutter, 2)))
            sources.append(np.full(n_clutter, -1))
        if points:
            scan = np.concatenate(points, axis=0)
            perm = rng.permutation(len(scan))
            scans.append(scan[perm])
            origins.append(np.concatenate(sources)[perm])
        else:
            scans.append(np.empty((0, 2)))
            origins.append(np.empty(0, dtype=int))
    if return_origins:
        return scans, origins
    return scans


def truth_records(truth: ScenarioTruth):
    """Line-delimited truth export: step, target id, state, extent entries."""
    for t in range(truth.duration):
        for idx, traj in enumerate(truth.trajectories):
            if not traj.alive_at(t):
                continue
            vals = list(traj.state_at(t)) + list(traj.extent.ravel()) + [traj.meas_rate]
            yield ",".join(["truth", str(t), str(idx)] + [repr(float(v)) for v in vals])


def measurement_records(scans, origins=None):
    """Line-delimited measurement export: step, source id (-1 = clutter), z."""
    for t, scan in enumerate(scans):
        src = origins[t] if origins is not None else np.full(len(scan), -1)
        for z, s in zip(scan, src):
            yield ",".join(["meas", str(t), str(int(s))] + [repr(float(v)) for v in z])
