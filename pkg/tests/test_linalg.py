import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nflsynth import NonFinite, ShapeMismatch, Singular
from nflsynth.linalg import (
    as_matrix,
    as_vector,
    block_diag,
    check_finite,
    check_symmetric,
    diag_repeat,
    hstack,
    inv,
    kron,
    max_eig,
    min_eig,
    selector,
    solve_linear,
    sym_sqrt,
    unit_vector,
    vstack,
)

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


def small(rows, cols):
    return arrays(np.float64, (rows, cols), elements=finite)


def test_as_matrix_promotes_vectors_to_rows():
    m = as_matrix([1.0, 2.0])
    assert m.shape == (1, 2)


def test_as_matrix_enforces_shape():
    with pytest.raises(ShapeMismatch):
        as_matrix(np.eye(2), rows=3)
    with pytest.raises(ShapeMismatch):
        as_matrix(np.eye(2), cols=3)


def test_as_vector_flattens_and_checks_length():
    assert as_vector(np.ones((2, 2))).shape == (4,)
    with pytest.raises(ShapeMismatch):
        as_vector(np.ones(3), 2)


def test_check_finite_raises():
    with pytest.raises(NonFinite):
        check_finite(np.array([1.0, np.nan]))
    with pytest.raises(NonFinite):
        check_finite(np.array([np.inf]))


def test_check_symmetric_raises_on_skew():
    with pytest.raises(ShapeMismatch):
        check_symmetric(np.array([[0.0, 1.0], [-1.0, 0.0]]))


@given(small(2, 3), small(3, 2))
@settings(max_examples=30, deadline=None)
def test_kron_matches_numpy(a, b):
    np.testing.assert_array_equal(kron(a, b), np.kron(a, b))


@given(small(2, 2), small(3, 1))
@settings(max_examples=30, deadline=None)
def test_block_diag_matches_scipy(a, b):
    np.testing.assert_array_equal(block_diag([a, b]), scipy.linalg.block_diag(a, b))


def test_block_diag_empty():
    assert block_diag([]).shape == (0, 0)


def test_diag_repeat():
    a = np.array([[1.0, 2.0]])
    out = diag_repeat(a, 3)
    np.testing.assert_array_equal(out, scipy.linalg.block_diag(a, a, a))


def test_stacks_match_numpy(rng):
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((4, 3))
    np.testing.assert_array_equal(vstack([a, b]), np.vstack([a, b]))
    np.testing.assert_array_equal(hstack([a.T, b.T]), np.hstack([a.T, b.T]))
    with pytest.raises(ShapeMismatch):
        vstack([a, b.T])
    with pytest.raises(ShapeMismatch):
        hstack([a, b])


def test_eig_bounds_match_eigvalsh(rng):
    for _ in range(20):
        x = rng.standard_normal((4, 4))
        s = x + x.T
        w = np.linalg.eigvalsh(s)
        assert min_eig(s) == pytest.approx(w[0], abs=1e-12)
        assert max_eig(s) == pytest.approx(w[-1], abs=1e-12)


def test_solve_linear_matches_numpy(rng):
    a = rng.standard_normal((5, 5)) + 5.0 * np.eye(5)
    b = rng.standard_normal((5, 2))
    np.testing.assert_allclose(solve_linear(a, b), np.linalg.solve(a, b), atol=1e-12)


def test_solve_linear_rejects_singular():
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(Singular):
        solve_linear(a, np.eye(2))


def test_solve_linear_rejects_ill_conditioned():
    a = np.diag([1.0, 1e-14])
    with pytest.raises(Singular):
        solve_linear(a, np.eye(2))


def test_inv_roundtrip(rng):
    a = rng.standard_normal((4, 4)) + 4.0 * np.eye(4)
    np.testing.assert_allclose(inv(a) @ a, np.eye(4), atol=1e-10)


def test_unit_vector_and_selector():
    e = unit_vector(1, 3)
    assert e.shape == (3, 1)
    np.testing.assert_array_equal(e[:, 0], [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(selector(2, 3), np.diag([0.0, 0.0, 1.0]))


def test_sym_sqrt_squares_back(rng):
    x = rng.standard_normal((4, 4))
    p = x @ x.T + 0.1 * np.eye(4)
    h = sym_sqrt(p)
    np.testing.assert_allclose(h @ h, p, atol=1e-10)
    np.testing.assert_allclose(h, h.T, atol=1e-12)
