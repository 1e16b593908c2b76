"""Monte Carlo reference estimators shared by the statistical tests.

These provide sampling-based alternatives to the closed-form quantities in
:mod:`etpmb` so that the implementation and the tests never share code paths:
everything here works from raw draws of the Gamma/Gaussian/inverse-Wishart
factors and explicit log-density formulas.
"""

import math

import numpy as np

from etpmb import position_matrix, log_multivariate_gamma

__all__ = [
    "sample_extents",
    "sample_ggiw",
    "ggiw_log_density",
    "cell_likelihood_estimate",
    "cross_entropy_estimate",
]


def sample_extents(rng, dof, scale, n):
    """Draw ``n`` inverse-Wishart extent matrices, shape (n, d, d).

    The parameterization matches the package's: density proportional to
    det(X)^(-dof/2) * exp(-tr(X^-1 scale)/2), with mean scale/(dof-2d-2).
    Sampling goes through the precision matrix: X^-1 is Wishart with
    ``dof - d - 1`` degrees of freedom and scale ``scale^-1`` (Bartlett
    decomposition, supported for d in {1, 2}).
    """
    d = scale.shape[0]
    nu = dof - d - 1.0
    if d == 1:
        chi = rng.chisquare(nu, size=n)
        return (scale[0, 0] / chi).reshape(n, 1, 1)
    if d != 2:
        raise ValueError("extent sampling implemented for d in {1, 2}")
    c1 = np.sqrt(rng.chisquare(nu, n))
    c2 = np.sqrt(rng.chisquare(nu - 1.0, n))
    z = rng.normal(size=n)
    bart = np.zeros((n, 2, 2))
    bart[:, 0, 0] = c1
    bart[:, 1, 0] = z
    bart[:, 1, 1] = c2
    chol = np.linalg.cholesky(np.linalg.inv(scale))
    factors = np.einsum('ij,njk->nik', chol, bart)
    prec = factors @ factors.transpose(0, 2, 1)
    det = prec[:, 0, 0] * prec[:, 1, 1] - prec[:, 0, 1] * prec[:, 1, 0]
    out = np.empty_like(prec)
    out[:, 0, 0] = prec[:, 1, 1]
    out[:, 1, 1] = prec[:, 0, 0]
    out[:, 0, 1] = -prec[:, 0, 1]
    out[:, 1, 0] = -prec[:, 1, 0]
    return out / det[:, None, None]


def sample_ggiw(rng, density, n):
    """Draw ``n`` joint samples (rates, states, extents) from a GGIW density."""
    rates = rng.gamma(density.meas_rate.shape, 1.0 / density.meas_rate.rate, n)
    states = rng.multivariate_normal(density.kinematics.mean,
                                     density.kinematics.cov, n)
    extents = sample_extents(rng, density.extent.dof, density.extent.scale, n)
    return rates, states, extents


def _batch_inverse(mats):
    """Inverses and determinants for a stack of 1x1 or 2x2 SPD matrices."""
    d = mats.shape[1]
    if d == 1:
        det = mats[:, 0, 0]
        return 1.0 / mats, det
    det = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
    inv = np.empty_like(mats)
    inv[:, 0, 0] = mats[:, 1, 1]
    inv[:, 1, 1] = mats[:, 0, 0]
    inv[:, 0, 1] = -mats[:, 0, 1]
    inv[:, 1, 0] = -mats[:, 1, 0]
    return inv / det[:, None, None], det


def ggiw_log_density(density, rates, states, extents):
    """Exact log density of joint samples under a GGIW density (vectorized)."""
    a = density.meas_rate.shape
    b = density.meas_rate.rate
    log_gamma = a * math.log(b) - math.lgamma(a) + (a - 1.0) * np.log(rates) \
        - b * rates
    mean = density.kinematics.mean
    cov = density.kinematics.cov
    k = mean.shape[0]
    diff = states - mean
    sign, logdet_p = np.linalg.slogdet(cov)
    sol = np.linalg.solve(cov, diff.T).T
    log_gauss = -0.5 * (k * math.log(2.0 * math.pi) + logdet_p
                        + np.einsum('ni,ni->n', diff, sol))
    v = density.extent.dof
    scale = density.extent.scale
    d = scale.shape[0]
    nu = 0.5 * (v - d - 1.0)
    _, logdet_v = np.linalg.slogdet(scale)
    inv, det_x = _batch_inverse(extents)
    trace = np.einsum('ij,nji->n', scale, inv)
    log_iw = (nu * logdet_v - nu * d * math.log(2.0)
              - log_multivariate_gamma(d, nu)
              - 0.5 * v * np.log(det_x) - 0.5 * trace)
    return log_gamma + log_gauss + log_iw


def cell_likelihood_estimate(rng, prior, cell, detection_prob, n_samples):
    """Plain Monte Carlo estimate of the detection likelihood of a cell.

    Averages ``pd * exp(-rate) * rate^|cell| * prod_z N(z; Hx, X)`` over joint
    prior samples.  Returns ``(log_estimate, relative_standard_error)``.
    """
    d = cell.shape[1]
    rates, states, extents = sample_ggiw(rng, prior, n_samples)
    proj = position_matrix(d, prior.state_dim)
    pos = states @ proj.T
    n_z = cell.shape[0]
    inv, det = _batch_inverse(extents)
    diffs = cell[None, :, :] - pos[:, None, :]
    quad = np.einsum('szi,sij,szj->s', diffs, inv, diffs)
    log_norm = -0.5 * (n_z * d * math.log(2.0 * math.pi)
                       + n_z * np.log(det) + quad)
    logs = math.log(detection_prob) - rates + n_z * np.log(rates) + log_norm
    shift = logs.max()
    vals = np.exp(logs - shift)
    mean = vals.mean()
    se = vals.std(ddof=1) / math.sqrt(n_samples)
    return shift + math.log(mean), se / mean


def cross_entropy_estimate(rng, p, q, n_samples):
    """Sampled cross entropy -E_p[log q] with its standard error."""
    rates, states, extents = sample_ggiw(rng, p, n_samples)
    logs = ggiw_log_density(q, rates, states, extents)
    return -logs.mean(), logs.std(ddof=1) / math.sqrt(n_samples)
