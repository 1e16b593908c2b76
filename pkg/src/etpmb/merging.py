"""Reduction of a multi-Bernoulli mixture (MBM) posterior to a single
multi-Bernoulli (MB).

The minimum-cross-entropy MB splits into two independent subproblems:

* existing tracks — every hypothesis carries exactly one Bernoulli per
  predicted track, so each track's across-hypothesis mixture can be reduced
  on its own (track-oriented, ``TO``), or the per-hypothesis pairing between
  Bernoullis and output tracks can itself be optimized variationally:
  ``MLA`` re-assigns whole hypotheses with a Hungarian step, ``EAFS`` pools
  the distinct single-target hypotheses and moves fractional association
  mass with a transportation-problem step.  Both descend an upper bound on
  the MBM-to-MB cross entropy and stop when the decrease falls under a
  tolerance.
* new tracks — Bernoullis born this scan are grouped across hypotheses
  either by identical measurement cell (``TO``) or greedily by symmetric KL
  below a threshold, with hypotheses lacking a group member contributing
  zero-existence mass.

All existence bookkeeping stays exact (hypothesis-weighted means); only the
density part of a reduction is optionally gated by ``tau_g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ggiw import _JITTER, _inv_small, _logdet_pd, ggiw_cross_entropy, ggiw_mixture_merge
from .special import log_multivariate_gamma
from .rfs import (
    BernoulliComponent,
    PMBState,
    PoissonIntensity,
    WeightedBernoulli,
    bernoulli_mixture_reduce,
)
from .transport import transport_plan

__all__ = [
    "MergeReport",
    "TransportPlan",
    "bernoulli_cross_entropy",
    "bernoulli_entropy",
    "bernoulli_kl",
    "bernoulli_skl",
    "ggiw_mixture_merge",
    "merge_existing_TO",
    "merge_new_TO",
    "merge_new_greedy",
    "ub_cross_entropy",
    "vmb_mla",
    "vmb_eafs",
    "merge_to_pmb",
]

_R_EPS = 1e-12

STRATEGIES = ("TO", "TON", "MLA", "EAFS")


def bernoulli_cross_entropy(f: BernoulliComponent, g: BernoulliComponent) -> float:
    """Cross entropy -integral f log g between two Bernoulli RFS densities.

    Closed form: the existence part is a binary cross entropy and the
    density part factors through the GGIW cross entropy.  Existences at the
    0/1 endpoints are clamped by 1e-12 so the expression stays finite.
    """
    rf = min(max(f.existence, _R_EPS), 1.0 - _R_EPS)
    rg = min(max(g.existence, _R_EPS), 1.0 - _R_EPS)
    return (
        -(1.0 - rf) * np.log1p(-rg)
        - rf * np.log(rg)
        + rf * ggiw_cross_entropy(f.density, g.density)
    )


def bernoulli_entropy(f: BernoulliComponent) -> float:
    return bernoulli_cross_entropy(f, f)


def bernoulli_kl(f: BernoulliComponent, g: BernoulliComponent) -> float:
    return max(0.0, bernoulli_cross_entropy(f, g) - bernoulli_entropy(f))


def bernoulli_skl(f: BernoulliComponent, g: BernoulliComponent) -> float:
    """Symmetrized KL divergence used for greedy new-track grouping."""
    return bernoulli_kl(f, g) + bernoulli_kl(g, f)


@dataclass(frozen=True)
class TransportPlan:
    """Fractional assignment of pooled single-target hypotheses to tracks.

    ``matrix[h, i]`` is the mass of pooled hypothesis h explained by output
    track i; row sums equal ``row_targets`` (the hypothesis marginal
    probabilities) and every column sums to one.
    """

    matrix: np.ndarray
    row_bernoullis: tuple[BernoulliComponent, ...]
    row_targets: np.ndarray


@dataclass(frozen=True)
class MergeReport:
    """Diagnostics of one MBM-to-MB merge.

    ``cebv``/``ceav`` are the cross-entropy upper bound before and after
    variational refinement (equal for the non-variational strategies);
    ``iterations`` counts refinement sweeps; ``refined`` records whether
    there was anything to refine (more than one hypothesis).
    """

    strategy: str
    cebv: float
    ceav: float
    iterations: int
    refined: bool
    objective_trace: tuple[float, ...] = ()
    plans: tuple[TransportPlan, ...] = ()


def _hypothesis_weights(hyps) -> np.ndarray:
    w = np.exp(np.array([h.log_weight for h in hyps]))
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise ValueError("hypothesis weights must be finite with positive sum")
    return w / total


def _zero_bernoulli(like: BernoulliComponent) -> BernoulliComponent:
    return BernoulliComponent(0.0, like.density, like.track_id)


def merge_existing_TO(hyps, tau_g: float | None = None) -> list[BernoulliComponent]:
    """Track-oriented reduction of the existing tracks: per predicted track,
    reduce the hypothesis-weighted Bernoulli mixture of its selections."""
    hyps = list(hyps)
    weights = _hypothesis_weights(hyps)
    n_tracks = len(hyps[0].selections)
    for hyp in hyps:
        if len(hyp.selections) != n_tracks:
            raise ValueError("hypotheses select differing numbers of existing tracks")
    out = []
    for idx in range(n_tracks):
        mix = [WeightedBernoulli(w, hyp.selections[idx].bernoulli)
               for w, hyp in zip(weights, hyps)]
        out.append(bernoulli_mixture_reduce(mix, tau_g))
    return out


def merge_new_TO(hyps, tau_g: float | None = None) -> list[BernoulliComponent]:
    """Merge new-track Bernoullis across hypotheses by identical cell.

    Hypotheses containing no Bernoulli for a cell contribute zero existence
    at their weight, so the merged existence is the probability-weighted
    frequency of the cell being explained by a new target.
    """
    hyps = list(hyps)
    weights = _hypothesis_weights(hyps)
    by_cell: dict = {}
    for j, hyp in enumerate(hyps):
        for lh in hyp.new_tracks:
            by_cell.setdefault(lh.cell, {})[j] = lh.bernoulli
    out = []
    for cell, members in by_cell.items():
        sample = next(iter(members.values()))
        mix = [
            WeightedBernoulli(w, members.get(j, _zero_bernoulli(sample)))
            for j, w in enumerate(weights)
        ]
        out.append(bernoulli_mixture_reduce(mix, tau_g))
    return out


def merge_new_greedy(hyps, tau_n: float, tau_g: float | None = None) -> list[BernoulliComponent]:
    """Greedy cross-hypothesis grouping of new-track Bernoullis.

    Hypotheses are visited in descending weight.  Each still-ungrouped
    Bernoulli seeds a group; every later hypothesis donates at most its one
    ungrouped new-track Bernoulli closest to the seed in symmetric KL,
    provided that distance is below ``tau_n``.  Groups are then reduced like
    in :func:`merge_new_TO` (absent hypotheses contribute zero existence).
    """
    hyps = list(hyps)
    weights = _hypothesis_weights(hyps)
    order = sorted(range(len(hyps)), key=lambda j: -weights[j])

    flat: list[BernoulliComponent] = []
    by_hyp: list[list[int]] = [[] for _ in hyps]
    for j, hyp in enumerate(hyps):
        for lh in hyp.new_tracks:
            by_hyp[j].append(len(flat))
            flat.append(lh.bernoulli)
    if not flat:
        return []

    # All pairwise symmetric KLs at once; entry [f, g] matches bernoulli_skl.
    ce = _CEKernel(flat).columns(flat)
    kl = np.maximum(ce - np.diag(ce)[:, None], 0.0)
    skl = kl + kl.T

    grouped = np.zeros(len(flat), dtype=bool)
    groups: list[dict[int, BernoulliComponent]] = []
    for pos, j in enumerate(order):
        for fi in by_hyp[j]:
            if grouped[fi]:
                continue
            grouped[fi] = True
            group = {j: flat[fi]}
            for j2 in order[pos + 1:]:
                cands = [f2 for f2 in by_hyp[j2] if not grouped[f2]]
                if not cands:
                    continue
                dists = skl[fi, cands]
                best = int(np.argmin(dists))
                if dists[best] < tau_n:
                    grouped[cands[best]] = True
                    group[j2] = flat[cands[best]]
            groups.append(group)

    out = []
    for group in groups:
        sample = next(iter(group.values()))
        mix = [
            WeightedBernoulli(w, group.get(j, _zero_bernoulli(sample)))
            for j, w in enumerate(weights)
        ]
        out.append(bernoulli_mixture_reduce(mix, tau_g))
    return out


def ub_cross_entropy(hyps, assign, approx) -> float:
    """Upper bound on the MBM-to-MB cross entropy for a given pairing.

    ``assign`` selects how hypothesis Bernoullis pair with the approximating
    Bernoullis ``approx``: None (identity order), one index tuple per
    hypothesis (``assign[j][i]`` = which selection of hypothesis j feeds
    output track i), or a :class:`TransportPlan` with fractional mass.
    """
    if isinstance(assign, TransportPlan):
        total = 0.0
        q = assign.matrix
        rows, cols = q.shape
        if cols != len(approx):
            raise ValueError("plan columns do not match the approximation size")
        for h in range(rows):
            for i in range(cols):
                if q[h, i] > 0.0:
                    total += q[h, i] * bernoulli_cross_entropy(assign.row_bernoullis[h], approx[i])
        return float(total)

    hyps = list(hyps)
    weights = _hypothesis_weights(hyps)
    n = len(approx)
    if assign is None:
        assign = [tuple(range(n))] * len(hyps)
    total = 0.0
    for w, hyp, perm in zip(weights, hyps, assign):
        for i in range(n):
            total += w * bernoulli_cross_entropy(hyp.selections[perm[i]].bernoulli, approx[i])
    return float(total)


def _trivial_report(strategy: str, value: float) -> MergeReport:
    return MergeReport(strategy, value, value, 1, False, (value,))


class _CEKernel:
    """Bernoulli cross entropies of many fixed left densities against one right.

    Precomputes the left-side sufficient statistics once so that evaluating a
    whole cost-matrix column is a handful of vectorized operations.  Matches
    :func:`bernoulli_cross_entropy` up to floating-point rounding (it uses the
    same jitter and small-matrix linear algebra as the scalar path).
    """

    def __init__(self, rows):
        rows = list(rows)
        dens = [b.density for b in rows]
        self.rf = np.clip(np.array([b.existence for b in rows]), _R_EPS, 1.0 - _R_EPS)
        self.k = dens[0].state_dim
        self.d = dens[0].extent_dim
        self.g_mean = np.array([p.meas_rate.mean for p in dens])
        self.g_mean_log = np.array([p.meas_rate.mean_log for p in dens])
        self.means = np.stack([p.kinematics.mean for p in dens])
        self.covs = np.stack([p.kinematics.cov for p in dens])
        eye_d = np.eye(self.d)
        self.iw_mean_logdet = np.array([p.extent.mean_logdet for p in dens])
        self.iw_mean_inv = np.stack([
            (p.extent.dof - self.d - 1.0) * _inv_small(p.extent.scale + _JITTER * eye_d)
            for p in dens
        ])

    def against(self, g: BernoulliComponent) -> np.ndarray:
        rg = min(max(g.existence, _R_EPS), 1.0 - _R_EPS)
        q = g.density
        gq = q.meas_rate
        gamma_e = gq.shape * math.log(gq.rate) - math.lgamma(gq.shape) \
            + (gq.shape - 1.0) * self.g_mean_log - gq.rate * self.g_mean

        q_cov = q.kinematics.cov + _JITTER * np.eye(self.k)
        q_inv = _inv_small(q_cov)
        diffs = self.means - q.kinematics.mean
        quad = np.einsum("rij,ij->r", self.covs, q_inv) \
            + np.einsum("ri,ij,rj->r", diffs, q_inv, diffs)
        gauss_e = -0.5 * (self.k * math.log(2.0 * math.pi) + _logdet_pd(q_cov) + quad)

        half_excess = 0.5 * (q.extent.dof - self.d - 1.0)
        iw_e = (
            -half_excess * self.d * math.log(2.0)
            + half_excess * _logdet_pd(q.extent.scale)
            - log_multivariate_gamma(self.d, half_excess)
            - 0.5 * q.extent.dof * self.iw_mean_logdet
            - 0.5 * np.einsum("rij,ij->r", self.iw_mean_inv, q.extent.scale)
        )
        density_ce = -(gamma_e + gauss_e + iw_e)
        return -(1.0 - self.rf) * math.log1p(-rg) - self.rf * math.log(rg) \
            + self.rf * density_ce

    def columns(self, approx) -> np.ndarray:
        """CE matrix with one column per approximating Bernoulli.

        Vectorizes over both sides: column-side statistics are stacked once
        and combined with the precomputed row statistics by tensor
        contractions.
        """
        cols = list(approx)
        rg = np.clip(np.array([b.existence for b in cols]), _R_EPS, 1.0 - _R_EPS)
        qdens = [b.density for b in cols]

        q_shape = np.array([q.meas_rate.shape for q in qdens])
        q_rate = np.array([q.meas_rate.rate for q in qdens])
        q_lgam = np.array([math.lgamma(s) for s in q_shape])
        gamma_e = (q_shape * np.log(q_rate) - q_lgam)[None, :] \
            + np.outer(self.g_mean_log, q_shape - 1.0) - np.outer(self.g_mean, q_rate)

        jit_k = _JITTER * np.eye(self.k)
        q_covs = np.stack([q.kinematics.cov + jit_k for q in qdens])
        q_invs = np.stack([_inv_small(c) for c in q_covs])
        q_logdets = np.array([_logdet_pd(c) for c in q_covs])
        q_means = np.stack([q.kinematics.mean for q in qdens])
        tr_term = np.einsum("rij,cij->rc", self.covs, q_invs)
        diffs = self.means[:, None, :] - q_means[None, :, :]
        quad = np.einsum("rci,cij,rcj->rc", diffs, q_invs, diffs)
        gauss_e = -0.5 * (self.k * math.log(2.0 * math.pi)
                          + q_logdets[None, :] + tr_term + quad)

        q_dofs = np.array([q.extent.dof for q in qdens])
        half_excess = 0.5 * (q_dofs - self.d - 1.0)
        q_scales = np.stack([q.extent.scale for q in qdens])
        q_slogdets = np.array([_logdet_pd(s) for s in q_scales])
        q_lmg = np.array([log_multivariate_gamma(self.d, h) for h in half_excess])
        iw_e = (-half_excess * self.d * math.log(2.0)
                + half_excess * q_slogdets - q_lmg)[None, :] \
            - 0.5 * np.outer(self.iw_mean_logdet, q_dofs) \
            - 0.5 * np.einsum("rij,cij->rc", self.iw_mean_inv, q_scales)

        density_ce = -(gamma_e + gauss_e + iw_e)
        return -np.outer(1.0 - self.rf, np.log1p(-rg)) \
            - np.outer(self.rf, np.log(rg)) + self.rf[:, None] * density_ce


def _pool_rows(hyps):
    """Deduplicate selection Bernoullis by identity across hypotheses.

    Returns the unique Bernoullis plus one index array per hypothesis mapping
    its selection slots into that pool (local hypotheses are shared between
    global hypotheses, so the pool is much smaller than the total).
    """
    index_of: dict[int, int] = {}
    rows: list[BernoulliComponent] = []
    idx = []
    for hyp in hyps:
        arr = np.empty(len(hyp.selections), dtype=int)
        for i, lh in enumerate(hyp.selections):
            key = id(lh.bernoulli)
            pos = index_of.get(key)
            if pos is None:
                pos = len(rows)
                index_of[key] = pos
                rows.append(lh.bernoulli)
            arr[i] = pos
        idx.append(arr)
    return rows, idx


def _ub_identity(hyps, approx) -> float:
    """Identity-pairing cross-entropy bound, evaluated with the fast kernel."""
    if not approx:
        return 0.0
    weights = _hypothesis_weights(hyps)
    rows, idx = _pool_rows(hyps)
    cols = _CEKernel(rows).columns(approx)
    ar = np.arange(len(approx))
    return float(sum(w * cols[ix, ar].sum() for w, ix in zip(weights, idx)))


def vmb_mla(hyps, init, tol: float = 1e-3, max_iter: int = 20,
            tau_g: float | None = None):
    """Variational MB refinement with per-hypothesis assignment moves.

    Alternates a Hungarian re-pairing of each hypothesis' Bernoullis to the
    current approximation (cost = Bernoulli cross entropy) with a
    track-oriented re-merge under the new pairing.  The objective is
    monotonically nonincreasing; iteration stops when the decrease drops
    below ``tol`` or after ``max_iter`` sweeps, returning the best iterate.
    """
    hyps = list(hyps)
    approx = list(init)
    n = len(approx)
    weights = _hypothesis_weights(hyps)
    if n == 0 or len(hyps) == 1:
        value = _ub_identity(hyps, approx) if n else 0.0
        return approx, _trivial_report("MLA", value)

    pool, idx = _pool_rows(hyps)
    kernel = _CEKernel(pool)
    ar = np.arange(n)

    def assigned_obj(ce_cols: np.ndarray, assigns) -> float:
        return float(sum(
            w * ce_cols[ix[list(perm)], ar].sum()
            for w, ix, perm in zip(weights, idx, assigns)
        ))

    ce_cols = kernel.columns(approx)
    obj = assigned_obj(ce_cols, [tuple(range(n))] * len(hyps))
    cebv = obj
    trace = [obj]
    best_obj, best_approx = obj, approx
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        new_assigns = []
        for ix in idx:
            cost = ce_cols[ix, :]          # (selection slot, output track)
            rows, cols = linear_sum_assignment(cost)
            perm = np.empty(n, dtype=int)
            perm[cols] = rows
            new_assigns.append(tuple(int(p) for p in perm))
        new_approx = [
            bernoulli_mixture_reduce(
                [WeightedBernoulli(w, hyp.selections[perm[i]].bernoulli)
                 for w, hyp, perm in zip(weights, hyps, new_assigns)],
                tau_g,
            )
            for i in range(n)
        ]
        ce_cols = kernel.columns(new_approx)
        new_obj = assigned_obj(ce_cols, new_assigns)
        trace.append(new_obj)
        if new_obj < best_obj:
            best_obj, best_approx = new_obj, new_approx
        decrease = obj - new_obj
        obj, approx = new_obj, new_approx
        if decrease < tol:
            break
    return best_approx, MergeReport("MLA", cebv, best_obj, iterations, True, tuple(trace))


def vmb_eafs(hyps, tol: float = 1e-3, max_iter: int = 20,
             tau_g: float | None = None):
    """Variational MB refinement over pooled single-target hypotheses.

    Distinct single-target hypotheses (identified by parent track and
    measurement cell) are pooled with marginal probabilities; the E-step
    redistributes their mass over output tracks by solving a transportation
    problem (rows constrained to the marginals, columns to one), the M-step
    re-merges each track from its fractional mixture.  Initialization uses
    the track-oriented marginals, so the first objective value equals the
    TO bound.
    """
    hyps = list(hyps)
    weights = _hypothesis_weights(hyps)
    n = len(hyps[0].selections) if hyps else 0
    if n == 0 or len(hyps) == 1:
        approx = [sel.bernoulli for sel in hyps[0].selections] if hyps else []
        value = _ub_identity(hyps, approx) if n else 0.0
        return approx, _trivial_report("EAFS", value)

    pool_index: dict = {}
    pool: list[BernoulliComponent] = []
    entries = []  # (hyp index, track index, pooled index)
    for j, hyp in enumerate(hyps):
        if len(hyp.selections) != n:
            raise ValueError("hypotheses select differing numbers of existing tracks")
        for i, lh in enumerate(hyp.selections):
            h = pool_index.setdefault(lh.origin, len(pool))
            if h == len(pool):
                pool.append(lh.bernoulli)
            entries.append((j, i, h))

    n_pool = len(pool)
    marginals = np.zeros(n_pool)
    plan = np.zeros((n_pool, n))
    for j, i, h in entries:
        marginals[h] += weights[j]
        plan[h, i] += weights[j]

    kernel = _CEKernel(pool)

    def m_step(q: np.ndarray):
        out = []
        for i in range(n):
            mix = [WeightedBernoulli(float(q[h, i]), pool[h])
                   for h in range(n_pool) if q[h, i] > 0.0]
            out.append(bernoulli_mixture_reduce(mix, tau_g))
        return out

    approx = m_step(plan)
    ce_cols = kernel.columns(approx)
    obj = float(np.sum(plan * ce_cols))
    cebv = obj
    trace = [obj]
    plans: list[TransportPlan] = []
    best_obj, best_approx = obj, approx
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        plan = transport_plan(ce_cols, marginals, np.ones(n))
        plans.append(TransportPlan(plan.copy(), tuple(pool), marginals.copy()))
        approx_new = m_step(plan)
        ce_cols = kernel.columns(approx_new)
        new_obj = float(np.sum(plan * ce_cols))
        trace.append(new_obj)
        if new_obj < best_obj:
            best_obj, best_approx = new_obj, approx_new
        decrease = obj - new_obj
        obj, approx = new_obj, approx_new
        if decrease < tol:
            break
    report = MergeReport("EAFS", cebv, best_obj, iterations, True, tuple(trace),
                         tuple(plans))
    return best_approx, report


def merge_to_pmb(ppp: PoissonIntensity, hyps, strategy: str, cfg):
    """Reduce an updated PMBM (PPP + hypothesis list) to a PMB state.

    ``strategy`` is one of TO, TON, MLA, EAFS.  ``cfg`` supplies ``tau_n``,
    ``tau_g``, ``vmb_tol`` and ``vmb_max_iter``.  New tracks receive fresh
    sequential ids above every id referenced by the hypotheses.
    """
    strategy = strategy.upper()
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown merge strategy {strategy!r}; expected one of {STRATEGIES}")
    hyps = list(hyps)
    if not hyps:
        return PMBState(ppp, ()), _trivial_report(strategy, 0.0)
    tau_g = getattr(cfg, "tau_g", None)
    tau_n = getattr(cfg, "tau_n", 15.0)
    tol = getattr(cfg, "vmb_tol", 1e-3)
    max_iter = getattr(cfg, "vmb_max_iter", 20)

    if len(hyps) == 1:
        existing = [sel.bernoulli for sel in hyps[0].selections]
        new = [lh.bernoulli for lh in hyps[0].new_tracks]
        value = _ub_identity(hyps, existing)
        report = _trivial_report(strategy, value)
    elif strategy == "TO":
        existing = merge_existing_TO(hyps, tau_g)
        value = _ub_identity(hyps, existing)
        report = MergeReport("TO", value, value, 1, True, (value,))
        new = merge_new_TO(hyps, tau_g)
    elif strategy == "TON":
        existing = merge_existing_TO(hyps, tau_g)
        value = _ub_identity(hyps, existing)
        report = MergeReport("TON", value, value, 1, True, (value,))
        new = merge_new_greedy(hyps, tau_n, tau_g)
    elif strategy == "MLA":
        init = merge_existing_TO(hyps, tau_g)
        existing, report = vmb_mla(hyps, init, tol, max_iter, tau_g=tau_g)
        new = merge_new_greedy(hyps, tau_n, tau_g)
    else:  # EAFS
        existing, report = vmb_eafs(hyps, tol, max_iter, tau_g=tau_g)
        new = merge_new_greedy(hyps, tau_n, tau_g)

    used_ids = [b.track_id for b in existing]
    for hyp in hyps:
        used_ids.extend(lh.bernoulli.track_id for lh in hyp.selections)
    next_id = max(used_ids, default=-1) + 1
    new = [replace(b, track_id=next_id + k) for k, b in enumerate(new)]
    return PMBState(ppp, tuple(existing) + tuple(new)), report
