import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cubic_observer import example, numerics
from cubic_observer.exceptions import DimensionError, InfeasibleDesignError, InvalidInputError

from conftest import kron_lyap, taylor_expm

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def penrose_residuals(M, X):
    return (
        np.linalg.norm(M @ X @ M - M),
        np.linalg.norm(X @ M @ X - X),
        np.linalg.norm((M @ X).T - M @ X),
        np.linalg.norm((X @ M).T - X @ M),
    )


def test_pinv_identity_and_zero():
    assert np.array_equal(numerics.pinv(np.eye(3)), np.eye(3))
    Z = numerics.pinv(np.zeros((2, 3)))
    assert Z.shape == (3, 2) and not Z.any()


def test_pinv_penrose_random_tall():
    M = np.random.default_rng(1).standard_normal((4, 2))
    assert max(penrose_residuals(M, numerics.pinv(M))) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10**6))
def test_pinv_penrose_property(m, n, seed):
    rng = np.random.default_rng(seed)
    r = rng.integers(1, min(m, n) + 1)
    M = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    X = numerics.pinv(M)
    scale = max(1.0, np.linalg.norm(M) * np.linalg.norm(X)) ** 2
    assert max(penrose_residuals(M, X)) <= 1e-10 * scale


def test_numerical_rank():
    assert numerics.numerical_rank(np.zeros((2, 2))) == 0
    assert numerics.numerical_rank(np.outer([1, 2, 3], [1, 1])) == 1
    assert numerics.numerical_rank(np.diag([1.0, 1e-10])) == 1
    assert numerics.numerical_rank(np.diag([1.0, 1e-8])) == 2


def test_expm_closed_forms():
    assert np.array_equal(numerics.expm(np.zeros((4, 4))), np.eye(4))
    np.testing.assert_allclose(numerics.expm(np.diag([1.0, -2.0])), np.diag([np.e, np.exp(-2.0)]), rtol=1e-14)


def test_expm_matches_series_oracle_on_example():
    M = -2.0 * example.A
    ref = taylor_expm(M)
    got = numerics.expm(M)
    assert np.abs(got - ref).max() <= 1e-8 * np.abs(ref).max()


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-3, 3, allow_nan=False, allow_infinity=False)))
def test_expm_series_property(M):
    ref = taylor_expm(M)
    assert np.abs(numerics.expm(M) - ref).max() <= 1e-8 * max(1.0, np.abs(ref).max())


def test_lyap_closed_form():
    P = numerics.lyap_solve(-2.0 * np.eye(3), np.eye(3))
    np.testing.assert_allclose(P, 0.25 * np.eye(3), atol=1e-15)


def test_lyap_matches_kronecker_oracle():
    G = np.array([[-1.0, 0.0], [1.0, -2.0]])
    P = numerics.lyap_solve(G, np.eye(2))
    assert np.array_equal(P, P.T)
    assert np.linalg.eigvalsh(P).min() > 0
    assert np.linalg.norm(G.T @ P + P @ G + np.eye(2)) <= 1e-9
    np.testing.assert_allclose(P, kron_lyap(G, np.eye(2)), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10**6))
def test_lyap_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    G -= (np.max(np.linalg.eigvals(G).real) + 0.1) * np.eye(n)
    B = rng.standard_normal((n, n))
    Q = B @ B.T + np.eye(n)
    P = numerics.lyap_solve(G, Q)
    assert np.linalg.norm(G.T @ P + P @ G + Q) <= 1e-9 * max(1.0, np.linalg.norm(P) * np.linalg.norm(G))
    np.testing.assert_allclose(P, kron_lyap(G, Q), rtol=1e-7, atol=1e-9)


def test_lyap_rejects_unstable():
    with pytest.raises(InfeasibleDesignError):
        numerics.lyap_solve(np.array([[1.0]]), np.array([[1.0]]))


def test_eig_examples():
    assert numerics.match_spectra(numerics.eig(example.A), example.PLANT_EIGENVALUES) <= 1e-8
    np.testing.assert_allclose(numerics.eig(np.eye(3)), [1, 1, 1])
    np.testing.assert_allclose(numerics.eig(np.array([[0.0, 1.0], [-1.0, 0.0]])), [-1j, 1j], atol=1e-15)


def test_match_spectra_length_mismatch():
    with pytest.raises(DimensionError):
        numerics.match_spectra([1, 2], [1])


def test_place_scalar():
    L = numerics.place_poles(np.array([[-1.0]]), np.array([[1.0]]), [-5.0])
    np.testing.assert_allclose(L, [[4.0]], atol=1e-12)


def test_place_double_integrator():
    # det(sI - A + LC) = s^2 + l1 s + l2 = (s+1)(s+2)
    L = numerics.place_poles(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[1.0, 0.0]]), [-1.0, -2.0])
    np.testing.assert_allclose(L, [[3.0], [2.0]], atol=1e-10)


def test_place_example_with_computed_cbar():
    from cubic_observer import compute_cbar
    Cb = compute_cbar(example.A, [(example.C1, 0.0), (example.C2, 2.0)])
    L = numerics.place_poles(example.A, Cb, example.POLES)
    assert numerics.match_spectra(numerics.eig(example.A - L @ Cb), example.POLES) <= 1e-6


def test_place_complex_pairs():
    rng = np.random.default_rng(3)
    A, C = rng.standard_normal((4, 4)), rng.standard_normal((2, 4))
    want = [-1 + 2j, -1 - 2j, -3.0, -4.0]
    L = numerics.place_poles(A, C, want)
    assert np.isrealobj(L)
    assert numerics.match_spectra(numerics.eig(A - L @ C), want) <= 1e-6


def test_place_missing_conjugate():
    with pytest.raises(InvalidInputError):
        numerics.place_poles(np.eye(2), np.eye(2), [-1 + 1j, -2.0])


def test_place_repeated_poles_perturbed():
    A, C = np.array([[0.0, 1.0], [-2.0, -3.0]]), np.array([[1.0, 0.0]])
    L, info = numerics.place_poles(A, C, [-3.0, -3.0], return_info=True)
    assert info["perturbed"]
    assert numerics.match_spectra(numerics.eig(A - L @ C), [-3.0, -3.0]) <= 2e-6


def test_place_repeated_poles_not_perturbed_when_rank_allows():
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    L, info = numerics.place_poles(A, np.eye(2), [-3.0, -3.0], return_info=True)
    assert info["perturbed"] == []
    assert numerics.match_spectra(numerics.eig(A - L), [-3.0, -3.0]) <= 1e-6


def test_place_unobservable():
    with pytest.raises(InfeasibleDesignError, match="observable"):
        numerics.place_poles(-2.0 * np.eye(2), np.array([[1.0, 0.0]]), [-1.0, -2.0])


def test_place_wrong_count():
    with pytest.raises(DimensionError):
        numerics.place_poles(np.eye(2), np.eye(2), [-1.0])


def test_obsv_shape_and_hurwitz():
    assert numerics.obsv(np.eye(3), np.ones((2, 3))).shape == (6, 3)
    assert numerics.is_hurwitz(-np.eye(2))
    assert not numerics.is_hurwitz(np.zeros((2, 2)))
