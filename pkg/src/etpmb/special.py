"""Scalar special functions and the two root solvers used by the density code.

The solvers invert the moment maps that the mixture-merging code relies on:

* ``solve_gamma_shape`` inverts  a -> digamma(a) - log(a),  which is the
  gap between the log-mean and mean-log of a Gamma variate with shape ``a``.
* ``solve_iw_dof`` inverts the analogous gap for an inverse-Wishart matrix,
  i.e. the dof that reproduces a prescribed E[log det X^-1] once E[X^-1]
  is already matched.

Both maps are strictly increasing, so a Newton iteration with a bisection
safeguard converges quickly and verifiably.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

_QUARTER_LOG_PI = 0.25 * math.log(math.pi)

__all__ = [
    "digamma",
    "log_multivariate_gamma",
    "spd_sqrt",
    "solve_gamma_shape",
    "solve_iw_dof",
    "iw_logdet_gap",
]


def digamma(x: float) -> float:
    """Digamma function psi0(x) for scalar x > 0."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    return float(_sp.digamma(x))


def log_multivariate_gamma(d: int, x: float) -> float:
    """log Gamma_d(x), the log of the multivariate gamma function.

    Defined for x > (d - 1) / 2; raises ValueError outside that domain.
    """
    d = int(d)
    x = float(x)
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if not x > 0.5 * (d - 1):
        raise ValueError(f"log_multivariate_gamma requires x > (d-1)/2, got x={x}, d={d}")
    return d * (d - 1) * _QUARTER_LOG_PI + sum(
        math.lgamma(x - 0.5 * j) for j in range(d))


def spd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric positive-definite matrix square root.

    Closed forms for 1x1 and 2x2 matrices; eigendecomposition beyond that.
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    if sym.shape == (1, 1):
        if sym[0, 0] <= 0.0:
            raise ValueError(f"matrix is not positive definite (min eigenvalue {sym[0, 0]:g})")
        return np.sqrt(sym)
    if sym.shape == (2, 2):
        # sqrt(M) = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))
        det = sym[0, 0] * sym[1, 1] - sym[0, 1] * sym[1, 0]
        tr = sym[0, 0] + sym[1, 1]
        if det <= 0.0 or tr <= 0.0:
            raise ValueError("matrix is not positive definite")
        s = np.sqrt(det)
        return (sym + s * np.eye(2)) / np.sqrt(tr + 2.0 * s)
    w, q = np.linalg.eigh(sym)
    if w[0] <= 0.0:
        raise ValueError(f"matrix is not positive definite (min eigenvalue {w[0]:g})")
    return (q * np.sqrt(w)) @ q.T


def _newton_bisect(func, dfunc, lo: float, hi: float,
                   tol: float, max_iter: int = 100) -> float:
    """Safeguarded Newton root find for an increasing func with a sign change on [lo, hi]."""
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = func(x)
        if abs(fx) < tol:
            return x
        if fx > 0.0:
            hi = x
        else:
            lo = x
        dx = dfunc(x)
        step = x - fx / dx if dx > 0.0 else None
        if step is not None and lo < step < hi:
            x = step
        else:
            x = 0.5 * (lo + hi)
    raise RuntimeError(f"root solve did not converge (last x={x!r}, residual={func(x)!r})")


def solve_gamma_shape(c: float, tol: float = 1e-12) -> float:
    """Solve  digamma(a) - log(a) = c  for the Gamma shape a > 0.

    The left-hand side increases from -inf to 0 on a in (0, inf), so a
    solution exists iff c < 0.
    """
    c = float(c)
    if not c < 0.0:
        raise ValueError(f"solve_gamma_shape requires c < 0, got {c}")

    def f(a: float) -> float:
        return _sp.digamma(a) - np.log(a) - c

    def df(a: float) -> float:
        return _sp.polygamma(1, a) - 1.0 / a

    # Asymptotics: digamma(a) - log(a) ~ -1/(2a) for large a, ~ -1/a for tiny a.
    guess = max(-0.5 / c, 1e-12)
    lo = hi = guess
    while f(lo) > 0.0:
        lo *= 0.125
        if lo < 1e-300:
            raise RuntimeError("failed to bracket Gamma shape root from below")
    while f(hi) < 0.0:
        hi *= 8.0
        if hi > 1e300:
            raise RuntimeError("failed to bracket Gamma shape root from above")
    return _newton_bisect(f, df, lo, hi, tol)


def iw_logdet_gap(d: int, v: float) -> float:
    """Concentration gap  E[log det X^-1] - log det E[X^-1]  of an inverse Wishart.

    Depends only on the dimension and the dof v (> 2d); strictly increasing
    in v and approaching 0 from below as v -> inf.
    """
    js = np.arange(1, int(d) + 1)
    return float(np.sum(_sp.digamma((v - d - js) / 2.0))) + d * np.log(2.0) \
        - d * np.log(v - d - 1.0)


def solve_iw_dof(d: int, rhs: float, logdet_c1: float, tol: float = 1e-12) -> float:
    """Solve for the inverse-Wishart dof v matching a mean-log constraint.

    Finds v in (2d+2, 1e6) with

        sum_{j=1..d} digamma((v-d-j)/2) + d log 2 - d log(v-d-1) + logdet_c1 = rhs

    where ``logdet_c1`` is log det of the already-matched E[X^-1].  The
    left-hand side is strictly increasing in v and approaches
    ``logdet_c1`` from below as v -> inf, so the equation is solvable only
    for rhs < logdet_c1 and spread targets reachable above the dof floor.
    Raises RuntimeError when no root lies in the bracket.
    """
    d = int(d)
    target = float(rhs) - float(logdet_c1)

    def f(v: float) -> float:
        return iw_logdet_gap(d, v) - target

    def df(v: float) -> float:
        js = np.arange(1, d + 1)
        return 0.5 * float(np.sum(_sp.polygamma(1, (v - d - js) / 2.0))) - d / (v - d - 1.0)

    lo = 2.0 * d + 2.0
    hi = 1e6
    if not (f(lo) < 0.0 < f(hi)):
        raise RuntimeError(
            f"no inverse-Wishart dof root bracketed in ({lo:g}, {hi:g}) "
            f"for rhs-logdet_c1={target:g}"
        )
    return _newton_bisect(f, df, lo, hi, tol)
