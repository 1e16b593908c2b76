"""Extended-target Poisson multi-Bernoulli (PMB) filter.

Recursion per scan: predict every Bernoulli and Poisson component through
the motion model and inject the birth intensity; partition the scan's
measurements with a DBSCAN sweep; build ranked association hypotheses over
(partitions x assignments); form the updated hypothesis Bernoullis
(missed-detection, detection, and new-track updates); reduce the resulting
multi-Bernoulli mixture back to a single PMB with the configured merging
strategy; recycle weak Bernoullis into the Poisson intensity and prune.

Per-step diagnostics (hypothesis counts and the merge report) are returned
by :func:`step_detailed` and also emitted on the ``etpmb.filtering`` logger.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .association import UpdateTables, all_partitions, build_hypotheses, partition_sweep
from .ggiw import (
    MotionConfig,
    SensorConfig,
    effective_miss_prob,
    ggiw_expected_value,
    ggiw_miss_update,
    ggiw_predict,
)
from .merging import MergeReport, merge_to_pmb
from .rfs import (
    BernoulliComponent,
    GlobalHypothesis,
    LocalHypothesis,
    PMBState,
    PoissonComponent,
    PoissonIntensity,
    prune_state,
    recycle,
)

__all__ = [
    "FilterConfig",
    "StepDiagnostics",
    "TargetEstimate",
    "PMBFilter",
    "predict",
    "update",
    "step",
    "step_detailed",
    "extract",
]

logger = logging.getLogger(__name__)

_DEFAULT_EPS = tuple(np.linspace(0.1, 5.0, 10))


@dataclass(frozen=True)
class FilterConfig:
    """Everything one PMB recursion needs besides the state itself."""

    motion: MotionConfig = MotionConfig()
    sensor: SensorConfig = SensorConfig()
    birth: PoissonIntensity = PoissonIntensity()
    eps_list: tuple[float, ...] = _DEFAULT_EPS
    merge_strategy: str = "TO"
    tau_r: float = 0.1                 # recycling threshold on existence
    bern_floor: float = 1e-3           # Bernoulli pruning threshold
    ppp_floor: float = 1e-4            # Poisson component pruning threshold
    max_ppp: int = 200
    tau_n: float = 15.0                # greedy new-track grouping gate (nats)
    tau_g: float | None = 20.0         # GGIW merge gate (nats); None disables
    vmb_tol: float = 1e-3
    vmb_max_iter: int = 20
    extract_threshold: float = 0.5
    murty_k: int | None = 20           # ranked assignments per partition; None = all
    hyp_weight_cum: float = 0.9999     # hypothesis truncation budget
    gate_prob: float | None = 0.999    # elliptical gate probability; None disables
    partition_mode: str = "dbscan"     # "dbscan" | "exhaustive" (oracle/testing)


@dataclass(frozen=True)
class StepDiagnostics:
    hyp_count: int
    merge: MergeReport
    expected_cardinality: float
    n_extracted: int


@dataclass(frozen=True)
class TargetEstimate:
    """Point estimate of one extracted target."""

    track_id: int
    meas_rate: float
    state: np.ndarray
    extent: np.ndarray


def predict(state: PMBState, cfg: FilterConfig) -> PMBState:
    """Survival-weighted prediction of all components plus birth injection."""
    ps = cfg.motion.survival_prob
    bernoullis = tuple(
        replace(b, existence=b.existence * ps, density=ggiw_predict(b.density, cfg.motion))
        for b in state.bernoullis
    )
    comps = [
        PoissonComponent(c.weight * ps, ggiw_predict(c.density, cfg.motion))
        for c in state.ppp.components
    ]
    comps.extend(cfg.birth.components)
    return PMBState(PoissonIntensity(tuple(comps)), bernoullis)


def update(state: PMBState, measurements, cfg: FilterConfig):
    """Measurement update of a predicted PMB state.

    Returns the missed-detection-updated Poisson intensity together with the
    weighted global hypotheses of the updated multi-Bernoulli mixture.
    """
    tracks = state.bernoullis
    pd = cfg.sensor.detection_prob
    z = np.asarray(measurements, dtype=float)
    if z.size == 0:
        z = z.reshape(0, 2)
    z = np.atleast_2d(z)
    m = z.shape[0]

    tables = UpdateTables(z, tracks, state.ppp, cfg.sensor, cfg.gate_prob)
    if cfg.partition_mode == "exhaustive":
        partitions = all_partitions(m)
    elif cfg.partition_mode == "dbscan":
        partitions = partition_sweep(z, cfg.eps_list) if m else ((),)
    else:
        raise ValueError(f"unknown partition mode {cfg.partition_mode!r}")

    assoc = build_hypotheses(z, partitions, tracks, state.ppp, cfg.sensor,
                             murty_k=cfg.murty_k, cum_weight=cfg.hyp_weight_cum,
                             gate_prob=cfg.gate_prob, tables=tables)

    ppp_updated = PoissonIntensity(tuple(
        PoissonComponent(
            c.weight * effective_miss_prob(c.density.meas_rate, pd),
            ggiw_miss_update(c.density, pd),
        )
        for c in state.ppp.components
    ))

    miss_cache: dict[int, LocalHypothesis] = {}
    det_cache: dict[tuple[int, tuple[int, ...]], LocalHypothesis] = {}
    new_cache: dict[tuple[int, ...], LocalHypothesis] = {}

    def miss_hyp(i: int) -> LocalHypothesis:
        lh = miss_cache.get(i)
        if lh is None:
            bern = tracks[i]
            q = float(tables.miss_probs[i])
            denom = 1.0 - bern.existence + bern.existence * q
            r_miss = bern.existence * q / denom if denom > 0.0 else 0.0
            lh = LocalHypothesis(
                i, None,
                BernoulliComponent(r_miss, ggiw_miss_update(bern.density, pd), bern.track_id),
                float(tables.miss_logs[i]),
            )
            miss_cache[i] = lh
        return lh

    def det_hyp(i: int, cell: tuple[int, ...]) -> LocalHypothesis:
        key = (i, cell)
        lh = det_cache.get(key)
        if lh is None:
            logs, posts = tables.detection(cell)
            lh = LocalHypothesis(
                i, cell,
                BernoulliComponent(1.0, posts[i], tracks[i].track_id),
                float(logs[i]),
            )
            det_cache[key] = lh
        return lh

    def new_hyp(cell: tuple[int, ...]) -> LocalHypothesis:
        lh = new_cache.get(cell)
        if lh is None:
            bg = tables.background(cell)
            density = tables.background_density(cell)
            lh = LocalHypothesis(-1, cell,
                                 BernoulliComponent(bg.existence, density, -1),
                                 bg.log_total)
            new_cache[cell] = lh
        return lh

    hyps = []
    for a in assoc:
        assigned = {t: cell for cell, t in zip(a.cells, a.cell_tracks) if t is not None}
        selections = tuple(
            det_hyp(i, assigned[i]) if i in assigned else miss_hyp(i)
            for i in range(len(tracks))
        )
        new_tracks = tuple(
            new_hyp(cell) for cell, t in zip(a.cells, a.cell_tracks) if t is None
        )
        log_w = math.log(max(a.weight, 1e-300))
        hyps.append(GlobalHypothesis(log_w, selections, new_tracks))
    return ppp_updated, hyps


def step_detailed(state: PMBState, measurements, cfg: FilterConfig):
    """One full filter cycle; returns the new state and its diagnostics."""
    predicted = predict(state, cfg)
    ppp_updated, hyps = update(predicted, measurements, cfg)
    merged, report = merge_to_pmb(ppp_updated, hyps, cfg.merge_strategy, cfg)
    out = prune_state(recycle(merged, cfg.tau_r), cfg.bern_floor, cfg.ppp_floor,
                      cfg.max_ppp)
    diag = StepDiagnostics(
        hyp_count=len(hyps),
        merge=report,
        expected_cardinality=float(sum(b.existence for b in out.bernoullis)),
        n_extracted=len(extract(out, cfg.extract_threshold)),
    )
    logger.debug(
        "step: hyps=%d cebv=%.4f ceav=%.4f iters=%d card=%.2f",
        diag.hyp_count, report.cebv, report.ceav, report.iterations,
        diag.expected_cardinality, extra={"diagnostics": diag},
    )
    return out, diag


def step(state: PMBState, measurements, cfg: FilterConfig) -> PMBState:
    """predict -> update -> merge -> recycle -> prune, as one transition."""
    return step_detailed(state, measurements, cfg)[0]


def extract(state: PMBState, threshold: float = 0.5) -> list[TargetEstimate]:
    """Expected-value estimates of every Bernoulli above the existence threshold."""
    out = []
    for bern in state.bernoullis:
        if bern.existence > threshold:
            rate, kin, ext = ggiw_expected_value(bern.density)
            out.append(TargetEstimate(bern.track_id, rate, kin, ext))
    return out


@dataclass
class PMBFilter:
    """Stateful convenience wrapper around the pure filter functions."""

    cfg: FilterConfig
    state: PMBState = field(default_factory=lambda: PMBState(PoissonIntensity(), ()))
    last_diagnostics: StepDiagnostics | None = None

    def step(self, measurements) -> PMBState:
        self.state, self.last_diagnostics = step_detailed(self.state, measurements, self.cfg)
        return self.state

    def extract(self) -> list[TargetEstimate]:
        return extract(self.state, self.cfg.extract_threshold)
