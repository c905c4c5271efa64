import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfbalance.errors import ConvergenceError, DimensionError
from hopfbalance.numcore import (NewtonConfig, ThetaSeries, as_cmatrix, central_derivative, eig,
                                 fd_weights, newton_polish, newton_solve, series_mul)


def test_eig_rotation_generator():
    vals = sorted((p[0] for p in eig([[0, 1], [-1, 0]])), key=lambda z: z.imag)
    assert np.allclose(vals, [-1j, 1j])


def test_eig_identity_multiplicity():
    pairs = eig(np.eye(3))
    assert len(pairs) == 3
    assert all(abs(p[0] - 1) < 1e-14 for p in pairs)


def test_eig_vectors_unit_norm():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    for val, vec in eig(A):
        assert np.isclose(np.linalg.norm(vec), 1.0)
        assert np.allclose(A @ vec, val * vec)


def test_as_cmatrix_rejects_bad_input():
    with pytest.raises(DimensionError):
        as_cmatrix([1, 2, 3])
    with pytest.raises(DimensionError):
        as_cmatrix([[np.nan, 0], [0, 1]])


def test_newton_scalar_quadratic():
    x = newton_solve(lambda x: x ** 2 - 4, [1.0])
    assert abs(x[0] - 2) < 1e-10


def test_newton_linear_system():
    x = newton_solve(lambda x: np.array([x[0] + x[1] - 1, x[0] - x[1]]), [0.0, 0.0])
    assert np.allclose(x, [0.5, 0.5], atol=1e-12)


def test_newton_failure_reports_residual():
    with pytest.raises(ConvergenceError) as info:
        newton_solve(lambda x: x ** 2 + 1, [1.0], NewtonConfig(max_iter=10))
    assert info.value.residual > 0


def test_newton_polish_never_worsens():
    f = lambda x: np.array([np.cos(x[0]) - x[0]])
    x0 = newton_solve(f, [1.0])
    x1 = newton_polish(f, x0)
    assert abs(f(x1)[0]) <= abs(f(x0)[0])


def test_fd_weights_match_derivatives():
    w = fd_weights(1, [-2, -1, 0, 1, 2])
    assert np.allclose(w, [1 / 12, -2 / 3, 0, 2 / 3, -1 / 12])
    d = central_derivative(np.sin, 0.3, 1e-3)
    assert abs(d - np.cos(0.3)) < 1e-10


def test_series_examples():
    th = ThetaSeries.monomial(4, 1, [1.0])
    assert np.allclose((th * th).coeffs[:, 0], [0, 0, 1, 0, 0])
    a = ThetaSeries(np.array([[1.0], [0], [1.0]]))
    b = ThetaSeries(np.array([[1.0], [0], [-1.0]]))
    assert np.allclose((a * b).coeffs[:, 0], [1, 0, 0])
    v = np.array([1, -1j]) / np.sqrt(2)
    p = series_mul(ThetaSeries.monomial(2, 1, v), ThetaSeries.monomial(2, 1, v.conj()))
    assert np.allclose(p.coeffs[2], [0.5, 0.5])


coef = st.floats(-3, 3, allow_nan=False)


def series(order=3, dim=2):
    return st.lists(coef, min_size=2 * (order + 1) * dim, max_size=2 * (order + 1) * dim).map(
        lambda xs: ThetaSeries((np.array(xs[::2]) + 1j * np.array(xs[1::2])).reshape(order + 1, dim)))


@settings(max_examples=60, deadline=None)
@given(series(), series(), series())
def test_ring_axioms(a, b, c):
    assert np.allclose((a * b).coeffs, (b * a).coeffs)
    assert np.allclose(((a * b) * c).coeffs, (a * (b * c)).coeffs, atol=1e-9)
    assert np.allclose((a * (b + c)).coeffs, (a * b + a * c).coeffs, atol=1e-9)
    one = ThetaSeries.monomial(3, 0, np.ones(2))
    assert np.allclose((a * one).coeffs, a.coeffs)


@settings(max_examples=40, deadline=None)
@given(series(), st.floats(-0.5, 0.5))
def test_evaluation_is_multiplicative_up_to_truncation(a, theta):
    full = np.polynomial.polynomial.polyval(theta, a.coeffs)
    assert np.allclose(a(theta), full)
