"""Tests for the scalar special functions and root solvers."""

import math

import numpy as np
import pytest
from scipy import special as sp

from etpmb import (
    digamma,
    log_multivariate_gamma,
    solve_gamma_shape,
    solve_iw_dof,
    spd_sqrt,
)
from etpmb.special import iw_logdet_gap


def test_digamma_matches_scipy():
    xs = [1e-3, 0.1, 0.5, 1.0, 2.5, 17.0, 1e4]
    for x in xs:
        assert digamma(x) == pytest.approx(float(sp.digamma(x)), abs=1e-13)


def test_digamma_recurrence():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = float(rng.uniform(0.05, 40.0))
        assert digamma(x + 1.0) == pytest.approx(digamma(x) + 1.0 / x, rel=1e-12)


def test_digamma_rejects_nonpositive():
    with pytest.raises(ValueError):
        digamma(0.0)
    with pytest.raises(ValueError):
        digamma(-1.5)


def test_log_multivariate_gamma_dimension_one_is_lgamma():
    for x in (0.3, 1.0, 4.5, 60.0):
        assert log_multivariate_gamma(1, x) == pytest.approx(math.lgamma(x), rel=1e-14)


def test_log_multivariate_gamma_matches_scipy():
    rng = np.random.default_rng(1)
    for d in (1, 2, 3, 4):
        for _ in range(20):
            x = 0.5 * (d - 1) + float(rng.uniform(0.05, 30.0))
            assert log_multivariate_gamma(d, x) == pytest.approx(
                float(sp.multigammaln(x, d)), rel=1e-12, abs=1e-12)


def test_log_multivariate_gamma_two_dim_recurrence():
    # Gamma_2(x) = sqrt(pi) * Gamma(x) * Gamma(x - 1/2)
    rng = np.random.default_rng(2)
    for _ in range(30):
        x = float(rng.uniform(0.6, 25.0))
        expect = 0.5 * math.log(math.pi) + math.lgamma(x) + math.lgamma(x - 0.5)
        assert log_multivariate_gamma(2, x) == pytest.approx(expect, rel=1e-12)


def test_log_multivariate_gamma_domain():
    with pytest.raises(ValueError):
        log_multivariate_gamma(0, 1.0)
    with pytest.raises(ValueError):
        log_multivariate_gamma(2, 0.5)  # requires x > 1/2
    with pytest.raises(ValueError):
        log_multivariate_gamma(1, 0.0)


def test_spd_sqrt_squares_back():
    rng = np.random.default_rng(3)
    for d in (1, 2, 3, 5):
        for _ in range(25):
            m = rng.normal(size=(d, d))
            mat = m @ m.T + 0.1 * np.eye(d)
            root = spd_sqrt(mat)
            np.testing.assert_allclose(root @ root, mat, rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(root, root.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(root) > 0.0)


def test_spd_sqrt_two_dim_matches_eigendecomposition():
    rng = np.random.default_rng(4)
    for _ in range(30):
        m = rng.normal(size=(2, 2))
        mat = m @ m.T + 0.05 * np.eye(2)
        w, q = np.linalg.eigh(mat)
        expect = (q * np.sqrt(w)) @ q.T
        np.testing.assert_allclose(spd_sqrt(mat), expect, rtol=1e-10, atol=1e-12)


def test_spd_sqrt_rejects_indefinite():
    with pytest.raises(ValueError):
        spd_sqrt(np.array([[-1.0]]))
    with pytest.raises(ValueError):
        spd_sqrt(np.array([[1.0, 2.0], [2.0, 1.0]]))  # det < 0
    with pytest.raises(ValueError):
        spd_sqrt(-np.eye(3))


def test_solve_gamma_shape_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(40):
        a = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e4))))
        c = float(sp.digamma(a)) - math.log(a)
        assert solve_gamma_shape(c) == pytest.approx(a, rel=1e-8)


def test_solve_gamma_shape_domain():
    with pytest.raises(ValueError):
        solve_gamma_shape(0.0)
    with pytest.raises(ValueError):
        solve_gamma_shape(0.3)


def test_iw_logdet_gap_increasing_and_negative():
    for d in (1, 2):
        vs = np.linspace(2 * d + 2 + 0.5, 500.0, 40)
        gaps = np.array([iw_logdet_gap(d, v) for v in vs])
        assert np.all(np.diff(gaps) > 0.0)
        assert np.all(gaps < 0.0)
        # approaches zero from below
        assert iw_logdet_gap(d, 1e6) > -1e-4


def test_solve_iw_dof_roundtrip():
    rng = np.random.default_rng(6)
    for d in (1, 2):
        for _ in range(30):
            v = 2 * d + 2 + float(np.exp(rng.uniform(np.log(0.1), np.log(1e3))))
            logdet_c1 = float(rng.uniform(-3.0, 3.0))
            rhs = iw_logdet_gap(d, v) + logdet_c1
            assert solve_iw_dof(d, rhs, logdet_c1) == pytest.approx(v, rel=1e-6)


def test_solve_iw_dof_unreachable_targets_raise():
    # rhs >= logdet_c1 would need dof beyond the bracket; rhs far below it
    # would need dof under the floor.
    with pytest.raises(RuntimeError):
        solve_iw_dof(2, 0.5, 0.0)
    with pytest.raises(RuntimeError):
        solve_iw_dof(2, iw_logdet_gap(2, 6.0) - 10.0, 0.0)
