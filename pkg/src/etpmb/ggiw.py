"""Gamma-Gaussian-inverse-Wishart (GGIW) single-extended-target model.

One extended target is described by three conditionally independent factors:

* a Gamma density over the expected number of measurements per scan,
* a Gaussian density over the kinematic state (positions first, one
  ``[position, velocity]`` pair per spatial axis for constant-velocity
  states, or position-only states of the same dimension as the extent),
* an inverse-Wishart density over the SPD extent matrix, parameterized so
  that the density carries ``det(X)^(-v/2)`` and the extent mean is
  ``V / (v - 2d - 2)``.

The module provides the conjugate prediction and update steps for that
triplet, closed-form cross entropies between two GGIW densities, and the
moment-matched reduction of a GGIW mixture to a single GGIW.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import digamma as _digamma_vec

from .special import (
    iw_logdet_gap,
    log_multivariate_gamma,
    solve_gamma_shape,
    solve_iw_dof,
    spd_sqrt,
)

__all__ = [
    "GammaParams",
    "GaussianKinematics",
    "InverseWishartExtent",
    "GGIWDensity",
    "MotionConfig",
    "SensorConfig",
    "CellUpdate",
    "ggiw_predict",
    "effective_miss_prob",
    "ggiw_miss_update",
    "ggiw_cell_update",
    "ggiw_expected_value",
    "ggiw_cross_entropy",
    "ggiw_kl",
    "gaussian_log_expectation",
    "gamma_log_expectation",
    "iw_log_expectation",
    "ggiw_mixture_merge",
    "position_matrix",
]

_JITTER = 1e-10  # added to covariances before inversion


def _logdet_pd(mat: np.ndarray) -> float:
    """log det of a positive-definite matrix; ValueError if not PD."""
    n = mat.shape[0]
    if n == 1:
        if mat[0, 0] <= 0.0:
            raise ValueError("matrix is not positive definite")
        return math.log(mat[0, 0])
    if n == 2:
        det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
        if det <= 0.0 or mat[0, 0] <= 0.0:
            raise ValueError("matrix is not positive definite")
        return math.log(det)
    sign, logdet = np.linalg.slogdet(mat)
    if sign <= 0:
        raise ValueError("matrix is not positive definite")
    return float(logdet)


def _inv_small(mat: np.ndarray) -> np.ndarray:
    """Matrix inverse with closed forms for the 1x1 and 2x2 cases."""
    n = mat.shape[0]
    if n == 1:
        return np.array([[1.0 / mat[0, 0]]])
    if n == 2:
        det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
        return np.array([[mat[1, 1], -mat[0, 1]],
                         [-mat[1, 0], mat[0, 0]]]) / det
    return np.linalg.inv(mat)


@dataclass(frozen=True)
class GammaParams:
    """Gamma density over the measurement rate, with shape/rate parameters."""

    shape: float
    rate: float

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @cached_property
    def mean_log(self) -> float:
        """E[log x] = digamma(shape) - log(rate) for x following this density."""
        return float(_digamma_vec(self.shape)) - math.log(self.rate)


@dataclass(frozen=True)
class GaussianKinematics:
    """Gaussian over the kinematic state vector."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(-1))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class InverseWishartExtent:
    """Inverse-Wishart density over the SPD extent matrix.

    ``dof`` must exceed ``2d + 2`` for the extent mean ``scale / (dof - 2d - 2)``
    to exist.
    """

    dof: float
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))

    @property
    def dim(self) -> int:
        return self.scale.shape[0]

    @cached_property
    def mean(self) -> np.ndarray:
        d = self.dim
        denom = self.dof - 2 * d - 2
        if denom <= 0.0:
            raise ValueError(f"extent mean undefined for dof {self.dof} at dimension {d}")
        return self.scale / denom

    @cached_property
    def mean_logdet(self) -> float:
        """E[log det X] for X following this density."""
        d = self.dim
        js = np.arange(1, d + 1)
        try:
            logdet = _logdet_pd(self.scale)
        except ValueError:
            raise ValueError("extent scale matrix is not positive definite") from None
        return float(logdet - d * math.log(2.0) - np.sum(_digamma_vec((self.dof - d - js) / 2.0)))


@dataclass(frozen=True)
class GGIWDensity:
    """Product of Gamma, Gaussian and inverse-Wishart factors for one target."""

    meas_rate: GammaParams
    kinematics: GaussianKinematics
    extent: InverseWishartExtent

    @property
    def extent_dim(self) -> int:
        return self.extent.dim

    @property
    def state_dim(self) -> int:
        return self.kinematics.dim


@dataclass(frozen=True)
class MotionConfig:
    """Constant-velocity motion model with extent and rate forgetting.

    ``extent_tau`` is the extent-agility time constant: one prediction
    multiplies the inverse-Wishart dof excess over the floor by
    ``exp(-dt / extent_tau)`` while preserving the extent mean.
    ``gamma_forget`` divides both Gamma parameters (1.0 = static rate).
    """

    dt: float = 1.0
    sigma_v: float = 0.5
    extent_tau: float = 100.0
    survival_prob: float = 0.99
    gamma_forget: float = 1.0


@dataclass(frozen=True)
class SensorConfig:
    """Detection, clutter and measurement-noise description for one sensor.

    ``clutter_density`` is the spatial density of a single clutter point
    (uniform: 1 / surveillance area); the clutter intensity at a point is
    ``clutter_rate * clutter_density``.
    """

    detection_prob: float = 0.9
    clutter_rate: float = 10.0
    clutter_density: float = 1.0 / 160000.0
    meas_noise: np.ndarray = None

    def __post_init__(self):
        noise = self.meas_noise
        if noise is None:
            noise = 0.25 * np.eye(2)
        object.__setattr__(self, "meas_noise", np.asarray(noise, dtype=float))

    @property
    def clutter_intensity(self) -> float:
        return self.clutter_rate * self.clutter_density


@lru_cache(maxsize=None)
def position_matrix(extent_dim: int, state_dim: int) -> np.ndarray:
    """Matrix picking the position components out of the kinematic state.

    Supports position-only states (state_dim == extent_dim) and interleaved
    constant-velocity states ``[p1, v1, p2, v2, ...]`` (state_dim == 2 * extent_dim).
    The returned array is cached and shared; treat it as read-only.
    """
    if state_dim == extent_dim:
        return np.eye(extent_dim)
    if state_dim == 2 * extent_dim:
        return np.kron(np.eye(extent_dim), np.array([[1.0, 0.0]]))
    raise ValueError(f"unsupported state dimension {state_dim} for extent dimension {extent_dim}")


def _cv_matrices(extent_dim: int, state_dim: int, dt: float, sigma_v: float):
    """Transition and process-noise matrices for the kinematic prediction."""
    if state_dim == 2 * extent_dim:
        f1 = np.array([[1.0, dt], [0.0, 1.0]])
        q1 = sigma_v ** 2 * np.array([[dt ** 4 / 4.0, dt ** 3 / 2.0],
                                      [dt ** 3 / 2.0, dt ** 2]])
        eye = np.eye(extent_dim)
        return np.kron(eye, f1), np.kron(eye, q1)
    if state_dim == extent_dim:
        eye = np.eye(extent_dim)
        return eye, sigma_v ** 2 * dt ** 2 * eye
    raise ValueError(f"unsupported state dimension {state_dim} for extent dimension {extent_dim}")


def ggiw_predict(prior: GGIWDensity, cfg: MotionConfig) -> GGIWDensity:
    """One constant-velocity prediction of all three GGIW factors."""
    d = prior.extent_dim
    trans, noise = _cv_matrices(d, prior.state_dim, cfg.dt, cfg.sigma_v)
    mean = trans @ prior.kinematics.mean
    cov = trans @ prior.kinematics.cov @ trans.T + noise

    eta = cfg.gamma_forget
    gamma = GammaParams(prior.meas_rate.shape / eta, prior.meas_rate.rate / eta)

    decay = math.exp(-cfg.dt / cfg.extent_tau)
    floor = 2.0 * d + 2.0
    dof = floor + decay * (prior.extent.dof - floor)
    scale = prior.extent.scale * decay  # keeps the extent mean unchanged

    return GGIWDensity(gamma, GaussianKinematics(mean, 0.5 * (cov + cov.T)),
                       InverseWishartExtent(dof, scale))


def effective_miss_prob(gamma: GammaParams, detection_prob: float) -> float:
    """Probability that a target yields no measurement at all.

    Marginalizes  1 - pd + pd * exp(-rate-variate)  over the Gamma density:
    ``1 - pd + pd * (b / (b + 1))^a``.
    """
    b = gamma.rate
    factor = math.exp(gamma.shape * (math.log(b) - math.log(b + 1.0)))
    return 1.0 - detection_prob + detection_prob * factor


def ggiw_miss_update(prior: GGIWDensity, detection_prob: float) -> GGIWDensity:
    """Posterior GGIW given that the target produced no measurements.

    The exact posterior rate factor is a two-component Gamma mixture
    (undetected, and detected-with-zero measurements); it is reduced back to
    a single Gamma by matching E[rate] and E[log rate].  Kinematics and
    extent are untouched.
    """
    a, b = prior.meas_rate.shape, prior.meas_rate.rate
    pd = detection_prob
    w_undetected = 1.0 - pd
    w_empty = pd * math.exp(a * (math.log(b) - math.log(b + 1.0)))
    total = w_undetected + w_empty
    if total <= 0.0:
        raise ValueError("miss update has zero probability (pd = 1 with degenerate rate)")
    w1 = w_undetected / total
    w2 = w_empty / total
    if w2 == 0.0:
        return prior
    if w1 == 0.0:
        return replace(prior, meas_rate=GammaParams(a, b + 1.0))

    mean = w1 * a / b + w2 * a / (b + 1.0)
    mean_log = w1 * (float(_digamma_vec(a)) - math.log(b)) \
        + w2 * (float(_digamma_vec(a)) - math.log(b + 1.0))
    gap = mean_log - math.log(mean)
    shape = solve_gamma_shape(gap)
    return replace(prior, meas_rate=GammaParams(shape, shape / mean))


@dataclass(frozen=True)
class CellUpdate:
    """Posterior GGIW and log marginal likelihood for one measurement cell."""

    posterior: GGIWDensity
    log_lik: float


def ggiw_cell_update(prior: GGIWDensity, cell: np.ndarray, sensor: SensorConfig) -> CellUpdate:
    """Condition a GGIW on a nonempty cell of measurements.

    ``cell`` is an (n, d) array of measurements attributed to the target.
    ``log_lik`` is log of ``pd`` times the closed-form marginal likelihood of
    the cell under the prior (the predicted-likelihood factor used in data
    association); the posterior is independent of ``pd``.
    """
    z = np.atleast_2d(np.asarray(cell, dtype=float))
    n, d = z.shape
    if n < 1:
        raise ValueError("cell update requires at least one measurement")
    if d != prior.extent_dim:
        raise ValueError(f"measurement dimension {d} != extent dimension {prior.extent_dim}")

    a, b = prior.meas_rate.shape, prior.meas_rate.rate
    m, p_cov = prior.kinematics.mean, prior.kinematics.cov
    v, v_scale = prior.extent.dof, prior.extent.scale

    centroid = z.mean(axis=0)
    dev = z - centroid
    scatter = dev.T @ dev

    h = position_matrix(d, prior.state_dim)
    x_hat = prior.extent.mean
    innov_cov = h @ p_cov @ h.T + x_hat / n
    innov_cov = 0.5 * (innov_cov + innov_cov.T) + _JITTER * np.eye(d)
    innov = centroid - h @ m

    s_inv = _inv_small(innov_cov)
    gain = p_cov @ h.T @ s_inv
    mean_post = m + gain @ innov
    cov_post = p_cov - gain @ innov_cov @ gain.T
    cov_post = 0.5 * (cov_post + cov_post.T)

    x_sqrt = spd_sqrt(x_hat)
    s_sqrt_inv = _inv_small(spd_sqrt(innov_cov))
    rotated = x_sqrt @ s_sqrt_inv @ np.outer(innov, innov) @ s_sqrt_inv.T @ x_sqrt.T
    dof_post = v + n
    scale_post = v_scale + scatter + rotated
    scale_post = 0.5 * (scale_post + scale_post.T)

    try:
        logdet_v = _logdet_pd(v_scale)
        logdet_vp = _logdet_pd(scale_post)
    except ValueError:
        raise ValueError("extent scale lost positive definiteness in cell update") from None
    logdet_x = _logdet_pd(x_hat)
    logdet_s = _logdet_pd(innov_cov)

    rate_term = math.lgamma(a + n) - math.lgamma(a) + a * math.log(b) \
        - (a + n) * math.log(b + 1.0)
    extent_term = -0.5 * d * (n * math.log(math.pi) + math.log(n)) \
        + 0.5 * (v - d - 1.0) * logdet_v - 0.5 * (dof_post - d - 1.0) * logdet_vp \
        + log_multivariate_gamma(d, 0.5 * (dof_post - d - 1.0)) \
        - log_multivariate_gamma(d, 0.5 * (v - d - 1.0)) \
        + 0.5 * (logdet_x - logdet_s)
    log_pd = math.log(sensor.detection_prob) if sensor.detection_prob > 0.0 else -math.inf
    log_lik = log_pd + rate_term + extent_term

    posterior = GGIWDensity(
        GammaParams(a + n, b + 1.0),
        GaussianKinematics(mean_post, cov_post),
        InverseWishartExtent(dof_post, scale_post),
    )
    return CellUpdate(posterior, float(log_lik))


def ggiw_expected_value(density: GGIWDensity):
    """(expected rate, expected kinematic state, expected extent matrix)."""
    return density.meas_rate.mean, density.kinematics.mean.copy(), density.extent.mean.copy()


def gaussian_log_expectation(p: GaussianKinematics, q: GaussianKinematics) -> float:
    """E_p[log q] for two Gaussians of equal dimension."""
    k = p.dim
    if q.dim != k:
        raise ValueError("Gaussian dimensions differ")
    q_cov = q.cov + _JITTER * np.eye(k)
    try:
        logdet = _logdet_pd(q_cov)
    except ValueError:
        raise ValueError("covariance is not positive definite") from None
    diff = p.mean - q.mean
    spread = p.cov + np.outer(diff, diff)
    quad = float(np.sum(np.linalg.inv(q_cov) * spread))   # Tr(Q^-1 spread)
    return -0.5 * (k * math.log(2.0 * math.pi) + logdet + quad)


def gamma_log_expectation(p: GammaParams, q: GammaParams) -> float:
    """E_p[log q] for two Gamma densities."""
    return q.shape * math.log(q.rate) - math.lgamma(q.shape) \
        + (q.shape - 1.0) * p.mean_log - q.rate * p.mean


def iw_log_expectation(p: InverseWishartExtent, q: InverseWishartExtent) -> float:
    """E_p[log q] for two inverse-Wishart densities of equal dimension."""
    d = p.dim
    if q.dim != d:
        raise ValueError("extent dimensions differ")
    half_excess_q = 0.5 * (q.dof - d - 1.0)
    try:
        logdet_q = _logdet_pd(q.scale)
    except ValueError:
        raise ValueError("scale matrix is not positive definite") from None
    p_scale = p.scale + _JITTER * np.eye(d)
    mean_inv_p = (p.dof - d - 1.0) * _inv_small(p_scale)
    return (
        -half_excess_q * d * math.log(2.0)
        + half_excess_q * logdet_q
        - log_multivariate_gamma(d, half_excess_q)
        - 0.5 * q.dof * p.mean_logdet
        - 0.5 * float(np.trace(mean_inv_p @ q.scale))
    )


def ggiw_cross_entropy(p: GGIWDensity, q: GGIWDensity) -> float:
    """Cross entropy -E_p[log q]; the three factors separate additively."""
    return -(
        gamma_log_expectation(p.meas_rate, q.meas_rate)
        + gaussian_log_expectation(p.kinematics, q.kinematics)
        + iw_log_expectation(p.extent, q.extent)
    )


def ggiw_kl(p: GGIWDensity, q: GGIWDensity) -> float:
    """KL divergence KL(p || q), clamped at zero against roundoff."""
    return max(0.0, ggiw_cross_entropy(p, q) - ggiw_cross_entropy(p, p))


def _ggiw_ce_batch(p: GGIWDensity, qdens) -> np.ndarray:
    """Cross entropies of ``p`` against many densities at once.

    Same quantity as :func:`ggiw_cross_entropy` per element, with the
    right-hand-side statistics stacked and contracted in one pass.
    """
    k, d = p.state_dim, p.extent_dim
    q_shape = np.array([q.meas_rate.shape for q in qdens])
    q_rate = np.array([q.meas_rate.rate for q in qdens])
    q_lgam = np.array([math.lgamma(s) for s in q_shape])
    gamma_e = q_shape * np.log(q_rate) - q_lgam \
        + (q_shape - 1.0) * p.meas_rate.mean_log - q_rate * p.meas_rate.mean

    jit_k = _JITTER * np.eye(k)
    q_covs = np.stack([q.kinematics.cov + jit_k for q in qdens])
    q_invs = np.stack([_inv_small(c) for c in q_covs])
    q_logdets = np.array([_logdet_pd(c) for c in q_covs])
    diffs = p.kinematics.mean[None, :] - np.stack([q.kinematics.mean for q in qdens])
    quad = np.einsum("cij,ij->c", q_invs, p.kinematics.cov) \
        + np.einsum("ci,cij,cj->c", diffs, q_invs, diffs)
    gauss_e = -0.5 * (k * math.log(2.0 * math.pi) + q_logdets + quad)

    q_dofs = np.array([q.extent.dof for q in qdens])
    half_excess = 0.5 * (q_dofs - d - 1.0)
    q_scales = np.stack([q.extent.scale for q in qdens])
    q_slogdets = np.array([_logdet_pd(s) for s in q_scales])
    q_lmg = np.array([log_multivariate_gamma(d, h) for h in half_excess])
    mean_inv_p = (p.extent.dof - d - 1.0) * _inv_small(p.extent.scale + _JITTER * np.eye(d))
    iw_e = -half_excess * d * math.log(2.0) + half_excess * q_slogdets - q_lmg \
        - 0.5 * q_dofs * p.extent.mean_logdet \
        - 0.5 * np.einsum("cij,ij->c", q_scales, mean_inv_p)
    return -(gamma_e + gauss_e + iw_e)


def ggiw_mixture_merge(mixture, gate_kl: float | None = None) -> GGIWDensity:
    """Reduce a weighted GGIW mixture to one GGIW by moment matching.

    ``mixture`` is a sequence of (weight, GGIWDensity) pairs; weights are
    normalized internally.  The Gaussian factor is moment-matched, the Gamma
    factor matches E[rate] and E[log rate], and the inverse-Wishart factor
    matches E[X^-1] and E[log det X^-1] (dof recovered by ``solve_iw_dof``;
    when a mixture is too diffuse for any valid dof the dof clamps to its
    floor, and near-degenerate mixtures clamp at the solver's upper bracket).

    With ``gate_kl`` set, components whose KL divergence from the
    highest-weight component is >= the gate are dropped (and the weights
    renormalized) before matching.
    """
    items = [(float(w), dens) for w, dens in mixture if w > 0.0]
    if not items:
        raise ValueError("cannot merge an empty or zero-weight mixture")
    if len(items) == 1:
        return items[0][1]

    if gate_kl is not None:
        anchor = max(range(len(items)), key=lambda i: items[i][0])
        ref = items[anchor][1]
        ces = _ggiw_ce_batch(ref, [dens for _, dens in items])
        kls = np.maximum(ces - ces[anchor], 0.0)   # ces[anchor] is ref's entropy
        items = [
            (w, dens) for i, (w, dens) in enumerate(items)
            if i == anchor or kls[i] < gate_kl
        ]
        if len(items) == 1:
            return items[0][1]

    weights = np.array([w for w, _ in items])
    weights = weights / weights.sum()
    densities = [dens for _, dens in items]

    d = densities[0].extent_dim
    k = densities[0].state_dim
    for dens in densities:
        if dens.extent_dim != d or dens.state_dim != k:
            raise ValueError("mixture components have mismatched dimensions")

    # Gaussian: plain moment matching.
    means = np.stack([dens.kinematics.mean for dens in densities])
    mean = weights @ means
    cov = np.zeros((k, k))
    for w, dens in zip(weights, densities):
        diff = dens.kinematics.mean - mean
        cov += w * (dens.kinematics.cov + np.outer(diff, diff))
    cov = 0.5 * (cov + cov.T)

    # Gamma: match mean and mean-log of the rate.
    rate_mean = float(sum(w * dens.meas_rate.mean for w, dens in zip(weights, densities)))
    rate_mean_log = float(sum(w * dens.meas_rate.mean_log for w, dens in zip(weights, densities)))
    gap = rate_mean_log - math.log(rate_mean)
    if gap >= 0.0:  # identical components up to roundoff
        shape = densities[0].meas_rate.shape
    else:
        shape = solve_gamma_shape(gap)
    gamma = GammaParams(shape, shape / rate_mean)

    # Inverse Wishart: match E[X^-1] and E[log det X^-1].
    mean_inv = np.zeros((d, d))
    mean_logdet_inv = 0.0
    for w, dens in zip(weights, densities):
        scale = dens.extent.scale + _JITTER * np.eye(d)
        mean_inv += w * (dens.extent.dof - d - 1.0) * _inv_small(scale)
        mean_logdet_inv += w * (-dens.extent.mean_logdet)
    mean_inv = 0.5 * (mean_inv + mean_inv.T)
    try:
        logdet_c = _logdet_pd(mean_inv)
    except ValueError:
        raise ValueError("mixture mean inverse extent is not positive definite") from None
    try:
        dof = solve_iw_dof(d, mean_logdet_inv, logdet_c)
    except RuntimeError:
        floor = 2.0 * d + 2.0 + 1e-6
        gap_target = mean_logdet_inv - logdet_c
        dof = floor if iw_logdet_gap(d, floor) >= gap_target else 1e6
    ext_scale = (dof - d - 1.0) * _inv_small(mean_inv)
    ext_scale = 0.5 * (ext_scale + ext_scale.T)

    return GGIWDensity(gamma, GaussianKinematics(mean, cov),
                       InverseWishartExtent(dof, ext_scale))
