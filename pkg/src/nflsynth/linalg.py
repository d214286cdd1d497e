"""Dense real-matrix utilities shared by every module.

Matrices are numpy float64 arrays in row-major (C) order. A "Mat" is any
2-d array; a "SymMat" is a square Mat that passes `check_symmetric`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import NonFinite, ShapeMismatch, Singular

# Condition-number threshold above which solves are reported as singular.
COND_LIMIT = 1e12

# Relative asymmetry tolerated in symmetric matrices.
SYM_RTOL = 1e-12


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a float64 2-d array and optionally enforce its shape."""
    m = np.ascontiguousarray(np.atleast_2d(np.asarray(a, dtype=float)))
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ShapeMismatch(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeMismatch(f"expected {cols} columns, got {m.shape[1]}")
    return m


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Coerce to a float64 1-d array and optionally enforce its length."""
    x = np.ascontiguousarray(np.asarray(v, dtype=float)).reshape(-1)
    if dim is not None and x.shape[0] != dim:
        raise ShapeMismatch(f"expected a vector of length {dim}, got {x.shape[0]}")
    return x


def check_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{what} has non-finite entries")
    return a


def check_symmetric(a, what: str = "matrix") -> np.ndarray:
    """Validate symmetry to the SYM_RTOL relative tolerance and return the
    symmetrized matrix (S + S^T)/2."""
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"{what} must be square, got {m.shape}")
    scale = 1.0 + np.max(np.abs(m)) if m.size else 1.0
    if m.size and np.max(np.abs(m - m.T)) > SYM_RTOL * scale:
        raise ShapeMismatch(f"{what} is not symmetric within tolerance")
    return 0.5 * (m + m.T)


def kron(a, b) -> np.ndarray:
    """Kronecker product."""
    return np.kron(as_matrix(a), as_matrix(b))


def block_diag(blocks: Sequence) -> np.ndarray:
    """Block-diagonal assembly; blocks may be rectangular."""
    mats = [as_matrix(b) for b in blocks]
    if not mats:
        return np.zeros((0, 0))
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r : r + m.shape[0], c : c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def diag_repeat(a, n: int) -> np.ndarray:
    """n copies of `a` on the block diagonal (diag_n(A))."""
    return block_diag([a] * n)


def vstack(blocks: Sequence) -> np.ndarray:
    """Vertical concatenation vec[A_1, ..., A_n]."""
    mats = [as_matrix(b) for b in blocks]
    if not mats:
        return np.zeros((0, 0))
    cols = mats[0].shape[1]
    for m in mats[1:]:
        if m.shape[1] != cols:
            raise ShapeMismatch(
                f"vstack blocks must share column count, got {cols} and {m.shape[1]}"
            )
    return np.vstack(mats)


def hstack(blocks: Sequence) -> np.ndarray:
    """Horizontal concatenation [A_1 ... A_n]."""
    mats = [as_matrix(b) for b in blocks]
    if not mats:
        return np.zeros((0, 0))
    rows = mats[0].shape[0]
    for m in mats[1:]:
        if m.shape[0] != rows:
            raise ShapeMismatch(
                f"hstack blocks must share row count, got {rows} and {m.shape[0]}"
            )
    return np.hstack(mats)


def min_eig(s) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    m = as_matrix(s)
    check_finite(m, "min_eig input")
    m = check_symmetric(m, "min_eig input")
    if m.shape[0] == 0:
        return np.inf
    return float(np.linalg.eigvalsh(m)[0])


def max_eig(s) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    m = as_matrix(s)
    check_finite(m, "max_eig input")
    m = check_symmetric(m, "max_eig input")
    if m.shape[0] == 0:
        return -np.inf
    return float(np.linalg.eigvalsh(m)[-1])


def solve_linear(a, b) -> np.ndarray:
    """Solve a @ x = b for square a; Singular above the condition threshold."""
    am = as_matrix(a)
    bm = as_matrix(b)
    if am.shape[0] != am.shape[1]:
        raise ShapeMismatch(f"solve_linear needs a square matrix, got {am.shape}")
    if am.shape[0] != bm.shape[0]:
        raise ShapeMismatch(
            f"solve_linear rhs has {bm.shape[0]} rows, expected {am.shape[0]}"
        )
    check_finite(am, "solve_linear lhs")
    check_finite(bm, "solve_linear rhs")
    if am.shape[0] == 0:
        return np.zeros_like(bm)
    cond = np.linalg.cond(am)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise Singular(f"condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")
    return np.linalg.solve(am, bm)


def inv(a) -> np.ndarray:
    """Matrix inverse via solve_linear (same Singular contract)."""
    am = as_matrix(a)
    return solve_linear(am, np.eye(am.shape[0]))


def unit_vector(i: int, n: int) -> np.ndarray:
    """Standard basis column e_i (0-indexed), shape (n, 1)."""
    e = np.zeros((n, 1))
    e[i, 0] = 1.0
    return e


def selector(i: int, n: int) -> np.ndarray:
    """E_i = e_i e_i^T, the (n, n) coordinate selector."""
    E = np.zeros((n, n))
    E[i, i] = 1.0
    return E


def sym_sqrt(s) -> np.ndarray:
    """Symmetric positive-semidefinite square root via eigendecomposition."""
    m = check_symmetric(s, "sym_sqrt input")
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T
