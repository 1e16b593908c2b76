"""Measurement partitioning and extended-target data association.

A data-association hypothesis for one scan is (a) a partition of the
measurement indices into cells and (b) an injective partial assignment of
cells to predicted tracks; unassigned cells are explained by clutter and/or
newly detected targets, unassigned tracks are missed.  The association
likelihood factorizes over cells and tracks:

* assigned cell:    existence * detection-likelihood of the cell
* missed track:     1 - r + r * <f, miss probability>
* unassigned cell:  clutter intensity (singletons only) + new-target factor

Partitions come from a DBSCAN sweep over a ladder of eps values (min_pts = 1
makes every cell a connected component of the eps-neighborhood graph).
Ranked assignments per partition come from Murty's constraint-partitioning
scheme on top of a rectangular Hungarian solve; hypotheses are pooled across
partitions and truncated at a cumulative-weight budget.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp
from scipy.stats import chi2

from .ggiw import (
    GammaParams,
    GaussianKinematics,
    GGIWDensity,
    InverseWishartExtent,
    SensorConfig,
    effective_miss_prob,
    ggiw_cell_update,
    ggiw_mixture_merge,
    position_matrix,
)

__all__ = [
    "AssociationHypothesis",
    "InfeasibleAssignmentError",
    "UpdateTables",
    "dbscan_partition",
    "partition_sweep",
    "all_partitions",
    "association_log_likelihood",
    "enumerate_associations",
    "hungarian",
    "murty_k_best",
    "build_hypotheses",
]

Cell = tuple[int, ...]
Partition = tuple[Cell, ...]


@dataclass(frozen=True)
class AssociationHypothesis:
    """One association: the measurement cells, the track (or None) each cell
    is assigned to, and the tracks left undetected."""

    cells: Partition
    cell_tracks: tuple[int | None, ...]
    missed_tracks: tuple[int, ...]
    log_likelihood: float
    weight: float = float("nan")

    @property
    def key(self):
        """Canonical identity of the association structure."""
        return frozenset(zip(self.cells, self.cell_tracks))


class InfeasibleAssignmentError(ValueError):
    """Raised when a cost matrix admits no finite-cost complete assignment."""


# ---------------------------------------------------------------------------
# Partitioning


def dbscan_partition(measurements: np.ndarray, eps: float, min_pts: int = 1) -> Partition:
    """Partition measurement indices by density clustering at radius ``eps``.

    With ``min_pts = 1`` every point is a core point and the cells are
    exactly the connected components of the eps-neighborhood graph, so the
    result covers every index and has no noise class.  For larger
    ``min_pts`` (neighbor counts include the point itself), border points
    join the cluster of their lowest-index core neighbor and noise points
    become singleton cells, keeping the partition a cover.
    """
    pts = np.asarray(measurements, dtype=float)
    if pts.size == 0:
        return ()
    pts = np.atleast_2d(pts)
    n = pts.shape[0]
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")

    diff = pts[:, None, :] - pts[None, :, :]
    within = np.einsum("ijk,ijk->ij", diff, diff) <= eps * eps
    core = within.sum(axis=1) >= min_pts

    core_adj = within & core[:, None] & core[None, :]
    _, labels = connected_components(csr_matrix(core_adj), directed=False)

    cells: dict[int, list[int]] = {}
    leftover = []
    for i in range(n):
        if core[i]:
            cells.setdefault(labels[i], []).append(i)
        else:
            neighbors = np.flatnonzero(within[i] & core)
            if neighbors.size:
                cells.setdefault(labels[neighbors[0]], []).append(i)
            else:
                leftover.append(i)

    blocks = [tuple(sorted(members)) for members in cells.values()]
    blocks.extend((i,) for i in leftover)
    return tuple(sorted(blocks, key=lambda c: c[0]))


def partition_sweep(measurements: np.ndarray, eps_list, min_pts: int = 1) -> tuple[Partition, ...]:
    """Distinct partitions from a DBSCAN sweep, in increasing-eps order.

    Duplicates (identical cell sets at different radii) keep their first
    occurrence only.
    """
    eps_values = sorted(float(e) for e in eps_list)
    if not eps_values:
        raise ValueError("eps_list must contain at least one radius")
    seen = set()
    out = []
    for eps in eps_values:
        part = dbscan_partition(measurements, eps, min_pts)
        key = frozenset(part)
        if key not in seen:
            seen.add(key)
            out.append(part)
    return tuple(out)


def all_partitions(n: int) -> tuple[Partition, ...]:
    """Every set partition of indices 0..n-1, canonically ordered."""

    def rec(i: int):
        if i == n:
            yield ()
            return
        for rest in rec(i + 1):
            for j in range(len(rest)):
                yield rest[:j] + ((i,) + rest[j],) + rest[j + 1:]
            yield ((i,),) + rest

    out = []
    for part in rec(0):
        blocks = tuple(sorted((tuple(sorted(b)) for b in part), key=lambda c: c[0]))
        out.append(blocks)
    return tuple(dict.fromkeys(out))


# ---------------------------------------------------------------------------
# Likelihood tables


def _fallback_density(z_cell: np.ndarray, state_dim: int) -> GGIWDensity:
    """Placeholder posterior for a cell no Poisson component can explain."""
    n, d = z_cell.shape
    centroid = z_cell.mean(axis=0)
    dev = z_cell - centroid
    scatter = dev.T @ dev
    if state_dim == 2 * d:
        mean = np.zeros(state_dim)
        mean[0::2] = centroid
        cov = np.kron(np.eye(d), np.diag([100.0, 25.0]))
    else:
        mean = centroid.copy()
        cov = 100.0 * np.eye(d)
    dof = 2.0 * d + 4.0
    scale = (scatter + np.eye(d)) * (dof - 2.0 * d - 2.0)
    return GGIWDensity(GammaParams(1.0 + n, 1.0), GaussianKinematics(mean, cov),
                       InverseWishartExtent(dof, scale))


@dataclass(frozen=True)
class BackgroundCell:
    """Clutter/new-target explanation of one unassigned cell.

    The new-track density itself is produced separately by
    :meth:`UpdateTables.background_density`; most cells only ever need the
    likelihood factors below, and reducing the posterior mixture is the
    expensive part.
    """

    log_total: float      # log(kappa + <ppp, cell likelihood>) resp. log <ppp, ...>
    log_inner: float      # log <ppp, cell likelihood>
    log_kappa: float      # log clutter factor (singleton cells only)
    existence: float      # new-track existence probability


class UpdateTables:
    """Lazy per-scan cache of every association likelihood factor.

    Detection and background quantities are computed once per unique cell
    (cells repeat across the partitions of a sweep) and shared between the
    cost-matrix path and the direct likelihood evaluator.  ``gate_prob``
    controls an elliptical gate on the cell centroid (None disables gating;
    gated entries report -inf likelihood).
    """

    def __init__(self, measurements, tracks, ppp, sensor: SensorConfig,
                 gate_prob: float | None = 0.999):
        z = np.asarray(measurements, dtype=float)
        self.z = np.atleast_2d(z) if z.size else z.reshape(0, 2)
        self.tracks = list(tracks)
        self.ppp = ppp
        self.sensor = sensor

        self.miss_probs = np.array([
            effective_miss_prob(b.density.meas_rate, sensor.detection_prob)
            for b in self.tracks
        ])
        with np.errstate(divide="ignore"):
            self.miss_logs = np.log(np.array([
                1.0 - b.existence + b.existence * q
                for b, q in zip(self.tracks, self.miss_probs)
            ]))

        self._gate_prob = gate_prob
        self._gate_thresholds: dict[int, float] = {}
        self._track_gates = None
        self._ppp_gates = None
        if gate_prob is not None:
            self._track_gates = [self._gate_ellipse(b.density) for b in self.tracks]
            self._ppp_gates = [self._gate_ellipse(c.density) for c in ppp.components]
        self._det_cache: dict[Cell, tuple[np.ndarray, list]] = {}
        self._bg_cache: dict[Cell, BackgroundCell] = {}
        self._bg_mixtures: dict[Cell, list] = {}
        self._bg_density_cache: dict[Cell, GGIWDensity] = {}

    def _gate_ellipse(self, density: GGIWDensity):
        d = density.extent_dim
        h = position_matrix(d, density.state_dim)
        center = h @ density.kinematics.mean
        spread = h @ density.kinematics.cov @ h.T + density.extent.mean
        return center, np.linalg.inv(spread + 1e-10 * np.eye(d)), d

    def _gated(self, gates, idx: int, centroid: np.ndarray) -> bool:
        if gates is None:
            return False
        center, spread_inv, d = gates[idx]
        thr = self._gate_thresholds.get(d)
        if thr is None:
            thr = float(chi2.ppf(self._gate_prob, df=d))
            self._gate_thresholds[d] = thr
        diff = centroid - center
        return float(diff @ spread_inv @ diff) > thr

    def _cell_points(self, cell: Cell) -> np.ndarray:
        return self.z[list(cell)]

    def detection(self, cell: Cell):
        """(per-track detection log factors, per-track posterior densities)."""
        hit = self._det_cache.get(cell)
        if hit is not None:
            return hit
        pts = self._cell_points(cell)
        centroid = pts.mean(axis=0)
        logs = np.full(len(self.tracks), -math.inf)
        posts: list = [None] * len(self.tracks)
        for i, bern in enumerate(self.tracks):
            if bern.existence <= 0.0 or self._gated(self._track_gates, i, centroid):
                continue
            cu = ggiw_cell_update(bern.density, pts, self.sensor)
            logs[i] = math.log(bern.existence) + cu.log_lik
            posts[i] = cu.posterior
        self._det_cache[cell] = (logs, posts)
        return logs, posts

    def background(self, cell: Cell) -> BackgroundCell:
        hit = self._bg_cache.get(cell)
        if hit is not None:
            return hit
        pts = self._cell_points(cell)
        centroid = pts.mean(axis=0)
        log_terms = []
        posts = []
        for u, comp in enumerate(self.ppp.components):
            if comp.weight <= 0.0 or self._gated(self._ppp_gates, u, centroid):
                continue
            cu = ggiw_cell_update(comp.density, pts, self.sensor)
            log_terms.append(math.log(comp.weight) + cu.log_lik)
            posts.append(cu.posterior)
        log_inner = float(logsumexp(log_terms)) if log_terms else -math.inf

        kappa = self.sensor.clutter_intensity
        if len(cell) == 1:
            log_kappa = math.log(kappa) if kappa > 0.0 else -math.inf
            log_total = float(np.logaddexp(log_kappa, log_inner))
            existence = math.exp(log_inner - log_total) if log_total > -math.inf else 0.0
        else:
            log_kappa = -math.inf
            log_total = log_inner
            existence = 1.0

        if posts:
            rel = np.exp(np.array(log_terms) - log_inner)
            self._bg_mixtures[cell] = list(zip(rel, posts))
        else:
            self._bg_mixtures[cell] = []
        out = BackgroundCell(log_total, log_inner, log_kappa, existence)
        self._bg_cache[cell] = out
        return out

    def background_density(self, cell: Cell) -> GGIWDensity:
        """New-track density for a cell: the reduced Poisson posterior mixture."""
        density = self._bg_density_cache.get(cell)
        if density is not None:
            return density
        self.background(cell)
        mixture = self._bg_mixtures[cell]
        if mixture:
            density = ggiw_mixture_merge(mixture)
        else:
            pts = self._cell_points(cell)
            state_dim = (self.tracks[0].density.state_dim if self.tracks
                         else self.ppp.components[0].density.state_dim
                         if self.ppp.components else 2 * pts.shape[1])
            density = _fallback_density(pts, state_dim)
        self._bg_density_cache[cell] = density
        return density


# ---------------------------------------------------------------------------
# Direct likelihood evaluation and exhaustive enumeration (oracle path)


def association_log_likelihood(measurements, hyp: AssociationHypothesis, tracks, ppp,
                               sensor: SensorConfig, tables: UpdateTables | None = None) -> float:
    """Log likelihood of one association, evaluated factor by factor."""
    if tables is None:
        tables = UpdateTables(measurements, tracks, ppp, sensor, gate_prob=None)
    total = 0.0
    for cell, track in zip(hyp.cells, hyp.cell_tracks):
        if track is None:
            total += tables.background(cell).log_total
        else:
            total += float(tables.detection(cell)[0][track])
    for i in hyp.missed_tracks:
        total += float(tables.miss_logs[i])
    return total


def _injective_assignments(n_cells: int, n_tracks: int):
    """All ways to give each cell a distinct track or None, lexicographically."""

    def rec(ci: int, used: frozenset):
        if ci == n_cells:
            yield ()
            return
        options = [None] + [t for t in range(n_tracks) if t not in used]
        for opt in options:
            nxt = used if opt is None else used | {opt}
            for rest in rec(ci + 1, nxt):
                yield (opt,) + rest

    yield from rec(0, frozenset())


def enumerate_associations(measurements, tracks, ppp, sensor: SensorConfig,
                           max_meas: int = 6, max_tracks: int = 4) -> list[AssociationHypothesis]:
    """Exhaustive association enumeration with normalized weights.

    Guard-railed to small instances; intended as the ground-truth oracle for
    the ranked-assignment machinery.
    """
    z = np.asarray(measurements, dtype=float)
    m = 0 if z.size == 0 else np.atleast_2d(z).shape[0]
    tracks = list(tracks)
    if m > max_meas:
        raise ValueError(f"enumeration limited to {max_meas} measurements, got {m}")
    if len(tracks) > max_tracks:
        raise ValueError(f"enumeration limited to {max_tracks} tracks, got {len(tracks)}")

    tables = UpdateTables(measurements, tracks, ppp, sensor, gate_prob=None)
    track_ids = range(len(tracks))
    raw = []
    for cells in all_partitions(m):
        for assign in _injective_assignments(len(cells), len(tracks)):
            missed = tuple(t for t in track_ids if t not in assign)
            hyp = AssociationHypothesis(cells, assign, missed, 0.0)
            ll = association_log_likelihood(measurements, hyp, tracks, ppp, sensor, tables)
            raw.append((cells, assign, missed, ll))

    logs = np.array([r[3] for r in raw])
    weights = np.exp(logs - logsumexp(logs))
    return [
        AssociationHypothesis(cells, assign, missed, ll, float(w))
        for (cells, assign, missed, ll), w in zip(raw, weights)
    ]


# ---------------------------------------------------------------------------
# Ranked assignments


def hungarian(cost: np.ndarray):
    """Minimum-cost assignment of every row to a distinct column.

    Requires rows <= columns; ``inf`` entries are forbidden pairings.
    Returns (columns in row order, total cost).  Raises
    :class:`InfeasibleAssignmentError` when no finite assignment exists.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be two-dimensional")
    rows, cols = cost.shape
    if rows > cols:
        raise ValueError(f"cost matrix needs rows <= columns, got {rows}x{cols}")
    try:
        row_ind, col_ind = linear_sum_assignment(cost)
    except ValueError as exc:
        raise InfeasibleAssignmentError(str(exc)) from None
    total = float(cost[row_ind, col_ind].sum())
    return col_ind.copy(), total


class _MurtyNode:
    """One solved subproblem of Murty's partitioning.

    The matrix covers only this node's free rows/columns; assignments fixed
    by ancestors are folded into ``fixed_pairs``/``fixed_cost``.  ``row_ids``
    and ``col_ids`` map local indices back to the original matrix.
    """

    __slots__ = ("matrix", "row_ids", "col_ids", "fixed_pairs", "fixed_cost",
                 "local_cols", "total")

    def __init__(self, matrix, row_ids, col_ids, fixed_pairs, fixed_cost,
                 local_cols, total):
        self.matrix = matrix
        self.row_ids = row_ids
        self.col_ids = col_ids
        self.fixed_pairs = fixed_pairs
        self.fixed_cost = fixed_cost
        self.local_cols = local_cols
        self.total = total

    def assignment(self, n_rows: int) -> np.ndarray:
        cols = np.empty(n_rows, dtype=int)
        for r, c in self.fixed_pairs:
            cols[r] = c
        cols[self.row_ids] = self.col_ids[self.local_cols]
        return cols

    def child(self, t: int):
        """Subproblem fixing this node's first t free rows and forbidding the
        t-th pairing; rows/columns made constant are dropped from the matrix."""
        keep_cols = np.ones(self.col_ids.shape[0], dtype=bool)
        keep_cols[self.local_cols[:t]] = False
        sub = self.matrix[t:][:, keep_cols].copy()
        col_ids = self.col_ids[keep_cols]
        forbid = int(np.searchsorted(col_ids, self.col_ids[self.local_cols[t]]))
        sub[0, forbid] = np.inf
        fixed = self.fixed_pairs + [
            (int(self.row_ids[i]), int(self.col_ids[self.local_cols[i]]))
            for i in range(t)
        ]
        fixed_cost = self.fixed_cost + float(
            self.matrix[np.arange(t), self.local_cols[:t]].sum())
        try:
            local_cols, sub_total = hungarian(sub)
        except InfeasibleAssignmentError:
            return None
        return _MurtyNode(sub, self.row_ids[t:], col_ids, fixed, fixed_cost,
                          local_cols, fixed_cost + sub_total)


def murty_k_best(cost: np.ndarray, k: int):
    """The k cheapest row-to-column assignments in nondecreasing cost order.

    Murty's scheme: pop the best solution, then split its subspace into
    children that fix assignments of the first t rows and forbid the t-th
    assignment.  Children enter the heap as unsolved specs bounded by the
    parent's cost and are solved on pop against a reduced matrix with the
    fixed rows and columns removed.  Heap ties break on the assignment
    tuple, keeping the output deterministic.  Returns fewer than ``k``
    entries when the feasible set is exhausted, and an empty list for an
    infeasible root.
    """
    cost = np.asarray(cost, dtype=float)
    if k <= 0:
        return []
    try:
        cols, total = hungarian(cost)
    except InfeasibleAssignmentError:
        return []
    rows, n_cols = cost.shape
    root = _MurtyNode(cost, np.arange(rows), np.arange(n_cols), [], 0.0,
                      cols, total)
    counter = itertools.count()
    heap = [(total, tuple(int(c) for c in root.assignment(rows)),
             next(counter), root, None)]
    out = []
    while heap and len(out) < k:
        total, cols, _, node, split = heapq.heappop(heap)
        if split is not None:
            node = node.child(split)
            if node is None:
                continue
            heapq.heappush(heap, (node.total,
                                  tuple(int(c) for c in node.assignment(rows)),
                                  next(counter), node, None))
            continue
        out.append((np.array(cols, dtype=int), float(total)))
        for t in range(node.row_ids.shape[0]):
            heapq.heappush(heap, (total, cols, next(counter), node, t))
    return out


# ---------------------------------------------------------------------------
# Hypothesis building (cost-matrix path)


def build_hypotheses(measurements, partitions, tracks, ppp, sensor: SensorConfig,
                     murty_k: int | None = 20, cum_weight: float = 0.9999,
                     gate_prob: float | None = 0.999,
                     tables: UpdateTables | None = None) -> list[AssociationHypothesis]:
    """Ranked association hypotheses pooled over a set of partitions.

    Per partition, a cost matrix over (cells) x (tracks | per-cell
    background) is ranked by :func:`murty_k_best`; rows whose only finite
    column is their own background are folded into the partition constant
    first.  Partitions whose best assignment is below 1e-12 of the best
    partition's are not expanded at all (their entire ranked list would be
    dropped by any realistic truncation anyway).  Pooled hypotheses are
    weight-normalized, sorted, truncated at cumulative weight ``cum_weight``
    and renormalized.  ``murty_k=None`` ranks every feasible assignment and
    disables the partition skip (oracle mode).
    """
    tracks = list(tracks)
    n_tracks = len(tracks)
    if tables is None:
        tables = UpdateTables(measurements, tracks, ppp, sensor, gate_prob)
    miss_total = float(np.sum(tables.miss_logs)) if n_tracks else 0.0
    k = murty_k if murty_k is not None else 10 ** 9

    raw = []
    pending = []   # (cells, free_rows, base, matrix, best log-likelihood)
    for cells in partitions:
        if not cells:
            raw.append(((), (), miss_total))
            continue
        det_logs = [tables.detection(c)[0] for c in cells]
        bg_logs = [tables.background(c).log_total for c in cells]

        free_rows = []
        forced_total = 0.0
        infeasible = False
        for ci in range(len(cells)):
            if np.all(np.isinf(det_logs[ci])) and np.all(det_logs[ci] < 0):
                if bg_logs[ci] == -math.inf:
                    infeasible = True
                    break
                forced_total += bg_logs[ci]
            else:
                free_rows.append(ci)
        if infeasible:
            continue

        base = miss_total + forced_total
        if not free_rows:
            raw.append((cells, (None,) * len(cells), base))
            continue

        nf = len(free_rows)
        matrix = np.full((nf, n_tracks + nf), np.inf)
        for r, ci in enumerate(free_rows):
            matrix[r, :n_tracks] = -(det_logs[ci] - tables.miss_logs)
            matrix[r, n_tracks + r] = -bg_logs[ci]
        try:
            _, root_total = hungarian(matrix)
        except InfeasibleAssignmentError:
            continue
        pending.append((cells, free_rows, base, matrix, base - root_total))

    if pending:
        best_ll = max(entry[4] for entry in pending)
        skip_below = best_ll - math.log(1e12) if murty_k is not None else -math.inf
        for cells, free_rows, base, matrix, root_ll in pending:
            if root_ll < skip_below:
                continue
            for cols, total in murty_k_best(matrix, k):
                assign: list[int | None] = [None] * len(cells)
                for r, ci in enumerate(free_rows):
                    col = int(cols[r])
                    assign[ci] = col if col < n_tracks else None
                raw.append((cells, tuple(assign), base - total))

    if not raw:
        raise InfeasibleAssignmentError("no feasible association for any partition")

    logs = np.array([r[2] for r in raw])
    weights = np.exp(logs - logsumexp(logs))
    order = np.argsort(-weights, kind="stable")

    kept = []
    cum = 0.0
    for idx in order:
        kept.append(idx)
        cum += weights[idx]
        if cum >= cum_weight:
            break
    norm = weights[kept].sum()

    out = []
    for idx in kept:
        cells, assign, ll = raw[idx]
        missed = tuple(t for t in range(n_tracks) if t not in assign)
        out.append(AssociationHypothesis(cells, assign, missed, float(ll),
                                         float(weights[idx] / norm)))
    return out
