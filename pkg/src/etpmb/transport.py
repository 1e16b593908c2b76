"""Exact solver for the balanced transportation problem.

    minimize    sum_ij cost[i, j] * x[i, j]
    subject to  sum_j x[i, j] = supply[i],   sum_i x[i, j] = demand[j],   x >= 0

Implementation: northwest-corner initial basis, then the classical
network-simplex pivoting on the basis spanning tree (dual variables from the
tree, most-negative reduced cost entering with lowest-index tie-break, cycle
found through the tree, first minimum-flow arc leaving).  Degeneracy is
handled by an infinitesimal supply perturbation; the returned plan re-solves
the final basis tree against the exact right-hand sides, so marginals are
met to machine precision.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

__all__ = ["transport_plan"]


def _nw_corner(supply: np.ndarray, demand: np.ndarray):
    """Northwest-corner starting basis and flows for a balanced problem."""
    m, n = supply.shape[0], demand.shape[0]
    x = np.zeros((m, n))
    basis = []
    i = j = 0
    si, dj = supply[0], demand[0]
    while True:
        q = min(si, dj)
        x[i, j] = q
        basis.append((i, j))
        si -= q
        dj -= q
        if i == m - 1 and j == n - 1:
            break
        if si <= dj and i < m - 1:
            i += 1
            si = supply[i]
        elif j < n - 1:
            j += 1
            dj = demand[j]
        else:
            i += 1
            si = supply[i]
    return x, basis


def _duals(cost: np.ndarray, basis, m: int, n: int):
    """Node potentials u, v with u[i] + v[j] = cost[i, j] on basic arcs."""
    adj = defaultdict(list)
    for i, j in basis:
        adj[("r", i)].append(("c", j))
        adj[("c", j)].append(("r", i))
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    stack = [("r", 0)]
    while stack:
        kind, idx = stack.pop()
        for nkind, nidx in adj[(kind, idx)]:
            if nkind == "c" and np.isnan(v[nidx]):
                v[nidx] = cost[idx, nidx] - u[idx]
                stack.append((nkind, nidx))
            elif nkind == "r" and np.isnan(u[nidx]):
                u[nidx] = cost[nidx, idx] - v[idx]
                stack.append((nkind, nidx))
    return u, v


def _tree_path(basis, start, goal):
    """Vertex path from start to goal through the basis spanning tree."""
    adj = defaultdict(list)
    for i, j in basis:
        adj[("r", i)].append(("c", j))
        adj[("c", j)].append(("r", i))
    prev = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nxt in adj[node]:
            if nxt not in prev:
                prev[nxt] = node
                stack.append(nxt)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    path.reverse()
    return path


def _tree_solution(basis, supply: np.ndarray, demand: np.ndarray):
    """Basic flows for the given tree against exact right-hand sides."""
    m, n = supply.shape[0], demand.shape[0]
    rem = {("r", i): float(supply[i]) for i in range(m)}
    rem.update({("c", j): float(demand[j]) for j in range(n)})
    arcs = {("r", i): set() for i in range(m)}
    arcs.update({("c", j): set() for j in range(n)})
    for i, j in basis:
        arcs[("r", i)].add((i, j))
        arcs[("c", j)].add((i, j))

    x = np.zeros((m, n))
    leaves = [node for node, a in arcs.items() if len(a) == 1]
    while leaves:
        node = leaves.pop()
        if len(arcs[node]) != 1:
            continue
        (i, j) = next(iter(arcs[node]))
        flow = rem[node]
        x[i, j] = flow
        for end in (("r", i), ("c", j)):
            arcs[end].discard((i, j))
            rem[end] -= flow
            if len(arcs[end]) == 1:
                leaves.append(end)
    return x


def transport_plan(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray,
                   max_iter: int = 20000) -> np.ndarray:
    """Optimal transportation plan between supply and demand marginals.

    Requires nonnegative marginals balanced to ~1e-6 relative (demand is
    rescaled to balance exactly).  Returns an (m, n) plan whose row sums are
    the supplies and column sums the demands.
    """
    cost = np.asarray(cost, dtype=float)
    supply = np.asarray(supply, dtype=float).copy()
    demand = np.asarray(demand, dtype=float).copy()
    m, n = cost.shape
    if supply.shape != (m,) or demand.shape != (n,):
        raise ValueError("marginal shapes do not match the cost matrix")
    if np.any(supply < -1e-12) or np.any(demand < -1e-12):
        raise ValueError("marginals must be nonnegative")
    supply = np.maximum(supply, 0.0)
    demand = np.maximum(demand, 0.0)
    total_s, total_d = supply.sum(), demand.sum()
    if total_d <= 0.0 or total_s <= 0.0:
        if abs(total_s - total_d) > 1e-9:
            raise ValueError("marginals are not balanced")
        return np.zeros((m, n))
    if abs(total_s - total_d) > 1e-6 * max(1.0, total_s):
        raise ValueError(f"marginals are not balanced: {total_s} vs {total_d}")
    demand *= total_s / total_d

    # Perturb supplies to banish degenerate pivots; re-solve exactly at the end.
    eps = 1e-12 * max(1.0, float(supply.max()), float(demand.max()))
    s_pert = supply + eps
    d_pert = demand.copy()
    d_pert[-1] += m * eps

    x, basis = _nw_corner(s_pert, d_pert)
    basis_set = set(basis)
    tol = 1e-10 * max(1.0, float(np.max(np.abs(cost))))

    for _ in range(max_iter):
        u, v = _duals(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        entering = None
        best = -tol
        for i in range(m):
            row = reduced[i]
            for j in range(n):
                if (i, j) not in basis_set and row[j] < best:
                    best = row[j]
                    entering = (i, j)
        if entering is None:
            break

        path = _tree_path(basis, ("r", entering[0]), ("c", entering[1]))
        cycle = [entering]
        for a, b in zip(path, path[1:]):
            arc = (a[1], b[1]) if a[0] == "r" else (b[1], a[1])
            cycle.append(arc)

        minus = cycle[1::2]
        theta = min(x[i, j] for i, j in minus)
        leaving = next(arc for arc in minus if x[arc] == theta)
        for idx, arc in enumerate(cycle):
            x[arc] += theta if idx % 2 == 0 else -theta
        x[leaving] = 0.0
        basis.remove(leaving)
        basis.append(entering)
        basis_set.discard(leaving)
        basis_set.add(entering)
    else:
        raise RuntimeError("transportation simplex did not converge")

    plan = _tree_solution(basis, supply, demand)
    return np.maximum(plan, 0.0)
