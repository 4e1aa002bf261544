import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from relaymtl.linalg import (NotStabilizableError, care_residual, expm, max_singular_value, rk4_step,
                             solve_care, spectral_radius, sym_eig_extremes, zoh_discretize)
from relaymtl.sim import double_integrator_matrices

REFERENCE_P = np.array([[0.23, 0, 0.22, 0], [0, 0.23, 0, 0.22], [0.22, 0, 0.52, 0], [0, 0.22, 0, 0.52]])


def test_expm_examples():
    np.testing.assert_allclose(expm(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(expm(np.diag([1.0, 2.0])), np.diag([math.e, math.e ** 2]), rtol=1e-12)
    A, _, _ = double_integrator_matrices()
    np.testing.assert_allclose(expm(0.5 * A), np.eye(4) + 0.5 * A, atol=1e-15)
    with pytest.raises(ValueError):
        expm(np.zeros((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_expm_semigroup_and_reference(seed, s, t):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    M = rng.normal(size=(n, n))
    M -= (np.max(np.real(np.linalg.eigvals(M))) + 0.5) * np.eye(n)  # stable
    np.testing.assert_allclose(expm(M * (s + t)), expm(M * s) @ expm(M * t), atol=1e-8)
    ref = sla.expm(M * s)
    assert np.max(np.abs(expm(M * s) - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


def test_zoh_examples():
    Ad, Bd = zoh_discretize(np.zeros((2, 2)), np.eye(2), 0.5)
    np.testing.assert_allclose(Ad, np.eye(2))
    np.testing.assert_allclose(Bd, 0.5 * np.eye(2))
    A, B, _ = double_integrator_matrices()
    Ad, Bd = zoh_discretize(A, B, 0.5)
    np.testing.assert_allclose(Ad, [[1, 0, .5, 0], [0, 1, 0, .5], [0, 0, 1, 0], [0, 0, 0, 1]], atol=1e-15)
    np.testing.assert_allclose(Bd, [[.125, 0], [0, .125], [.5, 0], [0, .5]], atol=1e-15)
    Ad, Bd = zoh_discretize([[-1.0]], [[1.0]], 1.0)
    assert Ad[0, 0] == pytest.approx(math.exp(-1), abs=1e-14)
    assert Bd[0, 0] == pytest.approx(1 - math.exp(-1), abs=1e-14)
    with pytest.raises(ValueError):
        zoh_discretize(np.eye(2), np.ones((3, 1)), 0.5)


def test_zoh_matches_riemann_sum():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(3, 3)) - 2 * np.eye(3)
    B = rng.normal(size=(3, 2))
    Ts = 0.4
    Ad, Bd = zoh_discretize(A, B, Ts)
    # midpoint rule on a fine grid
    n = 20000
    taus = (np.arange(n) + 0.5) * Ts / n
    integral = sum(sla.expm(A * tau) for tau in taus) * (Ts / n)
    np.testing.assert_allclose(Ad, sla.expm(A * Ts), atol=1e-12)
    np.testing.assert_allclose(Bd, integral @ B, atol=1e-9)


def test_care_double_integrator_matches_reference_matrix():
    A, B, _ = double_integrator_matrices()
    P = solve_care(A, B, 0.1)
    assert np.max(np.abs(P - REFERENCE_P)) <= 0.01
    assert np.max(np.abs(care_residual(A, B, 0.1, P))) <= 1e-8
    np.testing.assert_allclose(P, P.T, atol=1e-12)
    lo, hi = sym_eig_extremes(P)
    assert lo > 0
    # the standard CARE with Q = kI and R = I/2 is the same equation
    ref = sla.solve_continuous_are(A, B, 0.1 * np.eye(4), 0.5 * np.eye(2))
    np.testing.assert_allclose(P, ref, atol=1e-9)


def test_care_scalar_and_lyapunov_cases():
    for k in (0.1, 1.0, 7.0):
        P = solve_care([[0.0]], [[1.0]], k)
        assert P[0, 0] == pytest.approx(math.sqrt(k / 2), rel=1e-10)
    P = solve_care(-np.eye(3), np.zeros((3, 1)), 0.4)
    np.testing.assert_allclose(P, 0.2 * np.eye(3), atol=1e-10)


def test_care_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_care(np.zeros((2, 2)), np.eye(2), 0.0)
    with pytest.raises(NotStabilizableError):
        solve_care(np.eye(2), np.zeros((2, 1)), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.05, 5.0))
def test_care_random_against_reference(seed, k):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 6)), int(rng.integers(1, 3))
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    P = solve_care(A, B, k)
    ref = sla.solve_continuous_are(A, B, k * np.eye(n), 0.5 * np.eye(m))
    assert np.max(np.abs(P - ref)) <= 1e-7 * max(1.0, np.max(np.abs(ref)))
    assert np.all(np.real(np.linalg.eigvals(A - B @ B.T @ P)) < 0)


def test_singular_value_examples():
    assert max_singular_value(np.diag([3.0, 1.0])) == pytest.approx(3.0, rel=1e-10)
    A, _, C = double_integrator_matrices()
    assert max_singular_value(A) == pytest.approx(1.0, rel=1e-10)
    assert max_singular_value(C) == pytest.approx(1.0, rel=1e-10)
    assert max_singular_value(np.zeros((2, 2))) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_singular_value_matches_eigen_extreme(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(int(rng.integers(1, 6)), int(rng.integers(1, 6))))
    _, hi = sym_eig_extremes(M.T @ M)
    assert max_singular_value(M) == pytest.approx(math.sqrt(hi), rel=1e-8, abs=1e-8)


def test_eig_extremes():
    assert sym_eig_extremes(np.eye(4)) == pytest.approx((1.0, 1.0))
    assert sym_eig_extremes(np.diag([-2.0, 5.0])) == pytest.approx((-2.0, 5.0))
    lo, hi = sym_eig_extremes(REFERENCE_P)
    ref = np.linalg.eigvalsh(REFERENCE_P)
    assert (lo, hi) == pytest.approx((ref[0], ref[-1]), abs=1e-12)
    assert lo == pytest.approx(0.111, abs=1e-3)
    assert hi == pytest.approx(0.639, abs=1e-3)
    with pytest.raises(ValueError):
        sym_eig_extremes(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_rk4():
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(rk4_step(lambda t, y: np.zeros(2), x, 0.0, 0.1), x)
    assert rk4_step(lambda t, y: y, np.array([1.0]), 0.0, 0.1)[0] == pytest.approx(math.exp(0.1), abs=1e-7)
    A, _, _ = double_integrator_matrices()
    x0 = np.array([1.0, -2.0, 0.5, 3.0])
    np.testing.assert_allclose(rk4_step(lambda t, y: A @ y, x0, 0.0, 0.7), (np.eye(4) + 0.7 * A) @ x0,
                               atol=1e-15)
    with pytest.raises(FloatingPointError):
        rk4_step(lambda t, y: y * np.nan, x, 0.0, 0.1)


def test_spectral_radius():
    M = np.array([[0.5, 10.0], [0.0, 0.25]])
    assert spectral_radius(M) == pytest.approx(0.5, rel=1e-6)
