"""Multiplier blocks for the four uncertainty channels.

Channel order everywhere: (w_u, w_psi, s_phi, s_psi) against
(u, s_psi, v_phi, v_psi). The bilinear channels get region-shaped Kronecker
blocks scaled by PSD multipliers; the network channels get slope-restriction
blocks scaled by positive diagonal multipliers. The inverses are closed-form
per channel, and the cross block factors as S_tilde = S_L S_R with S_R fixed
by region and slope data alone (no decision variables), which is what lets
the synthesis problem stay affine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, UnsupportedSlopeBounds
from .lfr import LfrDims
from .linalg import as_matrix, as_vector, block_diag, check_symmetric, inv, kron, min_eig
from .system import RegionZ

# PSD tolerance on supplied multiplier matrices.
PSD_TOL = 1e-12
# Strict-positivity floor used when validating recovered multipliers.
POSITIVITY_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class MultiplierVars:
    """Numeric multiplier set: one PSD matrix per bilinear channel, one
    positive diagonal (stored as a vector) per network channel."""

    Lambda_m: np.ndarray
    Lambda_kpsi: np.ndarray
    T_kphi: np.ndarray
    T_lkpsi: np.ndarray

    def __post_init__(self):
        Lm = check_symmetric(as_matrix(self.Lambda_m), "Lambda_m")
        Lk = check_symmetric(as_matrix(self.Lambda_kpsi), "Lambda_kpsi")
        for name, mat in (("Lambda_m", Lm), ("Lambda_kpsi", Lk)):
            if mat.shape[0] and min_eig(mat) < -PSD_TOL:
                raise ShapeMismatch(f"{name} must be PSD (min eig {min_eig(mat):.3e})")
        tp = as_vector(self.T_kphi)
        tl = as_vector(self.T_lkpsi)
        for name, vec in (("T_kphi", tp), ("T_lkpsi", tl)):
            if vec.size and np.min(vec) <= 0.0:
                raise ShapeMismatch(f"{name} entries must be positive")
        object.__setattr__(self, "Lambda_m", Lm)
        object.__setattr__(self, "Lambda_kpsi", Lk)
        object.__setattr__(self, "T_kphi", tp)
        object.__setattr__(self, "T_lkpsi", tl)


@dataclass(frozen=True, eq=False)
class CombinedMultiplier:
    """Forward blocks (Q, S, R), their closed-form inverses, and the
    S_tilde = S_L S_R factorization."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    Q_tilde: np.ndarray
    S_tilde: np.ndarray
    R_tilde: np.ndarray
    S_L: np.ndarray
    S_R: np.ndarray


def delta_qc_blocks(T, alpha: float, beta: float) -> np.ndarray:
    """Incremental slope-restriction constraint matrix on (output, input)
    increment pairs: [[-2T, (a+b)T], [(a+b)T, -2ab*T]]."""
    t = np.asarray(T, dtype=float)
    Tm = np.diag(t) if t.ndim == 1 else as_matrix(t)
    if np.min(np.diag(Tm)) <= 0.0 or np.any(Tm != np.diag(np.diag(Tm))):
        raise ShapeMismatch("T must be diagonal with positive entries")
    # fmt: off
    return np.block([
        [-2.0 * Tm,                (alpha + beta) * Tm],
        [(alpha + beta) * Tm,      -2.0 * alpha * beta * Tm],
    ])
    # fmt: on


def bilinear_qc_blocks(region: RegionZ, Lambda, m: int) -> np.ndarray:
    """Region-shaped constraint matrix for one bilinear channel of width m."""
    L = check_symmetric(as_matrix(Lambda, rows=m, cols=m), "Lambda")
    if m and min_eig(L) < -PSD_TOL:
        raise ShapeMismatch(f"Lambda must be PSD (min eig {min_eig(L):.3e})")
    # fmt: off
    return np.block([
        [kron(region.Q_z, L),   kron(region.S_z, L)],
        [kron(region.S_z.T, L), region.R_z * L],
    ])
    # fmt: on


def _nn_scales(alpha: float, beta: float, has_nn: bool) -> tuple[float, float, float]:
    """(Q, S, R) scalar factors of the inverted network-channel blocks."""
    if not has_nn:
        return (0.0, 0.0, 0.0)
    if alpha == beta:
        raise UnsupportedSlopeBounds(
            f"slope bounds must differ for network channels, got alpha = beta = {alpha}"
        )
    d2 = (alpha - beta) ** 2
    return (2.0 * alpha * beta / d2, (alpha + beta) / d2, 2.0 / d2)


def _diag_l(block: np.ndarray, l: int) -> np.ndarray:
    return kron(np.eye(l), block)


def assemble_combined(
    vars: MultiplierVars, region: RegionZ, dims: LfrDims, alpha: float, beta: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward multiplier blocks (Q, S, R) in channel order."""
    _check_var_dims(vars, dims)
    l = dims.l
    Qz, Sz, Rz = region.Q_z, region.S_z, region.R_z
    Tp = np.diag(vars.T_kphi)
    Tl = np.diag(vars.T_lkpsi)
    Q = block_diag([
        kron(Qz, vars.Lambda_m),
        _diag_l(kron(Qz, vars.Lambda_kpsi), l),
        -2.0 * Tp,
        -2.0 * Tl,
    ])
    S = block_diag([
        kron(Sz, vars.Lambda_m),
        _diag_l(kron(Sz, vars.Lambda_kpsi), l),
        (alpha + beta) * Tp,
        (alpha + beta) * Tl,
    ])
    R = block_diag([
        Rz * vars.Lambda_m,
        _diag_l(Rz * vars.Lambda_kpsi, l),
        -2.0 * alpha * beta * Tp,
        -2.0 * alpha * beta * Tl,
    ])
    return Q, S, R


def invert_combined(
    vars: MultiplierVars, region: RegionZ, dims: LfrDims, alpha: float, beta: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form inverse blocks (Q~, S~, R~).

    Bilinear channels invert through the (l+1) region form and the Kronecker
    identity; network channels invert through the scalar 2x2 formula.
    """
    _check_var_dims(vars, dims)
    return combined_from_tilde(
        inv(vars.Lambda_m),
        inv(vars.Lambda_kpsi),
        1.0 / vars.T_kphi if vars.T_kphi.size else np.zeros(0),
        1.0 / vars.T_lkpsi if vars.T_lkpsi.size else np.zeros(0),
        region, dims, alpha, beta,
    )


def combined_from_tilde(
    Lambda_m_t: np.ndarray,
    Lambda_kpsi_t: np.ndarray,
    T_kphi_t: np.ndarray,
    T_lkpsi_t: np.ndarray,
    region: RegionZ,
    dims: LfrDims,
    alpha: float,
    beta: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Q~, S~, R~) assembled directly from inverse-side multiplier values
    (T blocks given as diagonal-entry vectors). Used by verification, where
    the solver returns the inverse side and a round trip through the forward
    side would lose precision."""
    l = dims.l
    Qt_z, St_z, Rt_z = _region_inverse(region)
    Tp_t = np.diag(as_vector(T_kphi_t))
    Tl_t = np.diag(as_vector(T_lkpsi_t))
    has_nn = dims.k_phi + dims.lkpsi > 0
    q_s, s_s, r_s = _nn_scales(alpha, beta, has_nn)
    Q_t = block_diag([
        kron(Qt_z, Lambda_m_t),
        _diag_l(kron(Qt_z, Lambda_kpsi_t), l),
        q_s * Tp_t,
        q_s * Tl_t,
    ])
    S_t = block_diag([
        kron(St_z, Lambda_m_t),
        _diag_l(kron(St_z, Lambda_kpsi_t), l),
        s_s * Tp_t,
        s_s * Tl_t,
    ])
    R_t = block_diag([
        Rt_z * Lambda_m_t,
        _diag_l(Rt_z * Lambda_kpsi_t, l),
        r_s * Tp_t,
        r_s * Tl_t,
    ])
    return Q_t, S_t, R_t


def factor_s_tilde(
    tilde_blocks: tuple[np.ndarray, np.ndarray, np.ndarray],
    vars: MultiplierVars,
    region: RegionZ,
    dims: LfrDims,
    alpha: float,
    beta: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Split S~ into S_L (decision-variable part) times S_R (fixed part)."""
    del tilde_blocks  # the factorization is rebuilt from its closed forms
    l = dims.l
    Qt_z, _, _ = _region_inverse(region)
    Lm_t = inv(vars.Lambda_m)
    Lk_t = inv(vars.Lambda_kpsi)
    Tp_t = np.diag(1.0 / vars.T_kphi) if vars.T_kphi.size else np.zeros((0, 0))
    Tl_t = np.diag(1.0 / vars.T_lkpsi) if vars.T_lkpsi.size else np.zeros((0, 0))
    S_L = block_diag([
        kron(Qt_z, Lm_t),
        _diag_l(kron(Qt_z, Lk_t), l),
        Tp_t,
        Tl_t,
    ])
    S_R = fixed_right_factor(region, dims, alpha, beta)
    return S_L, S_R


def fixed_right_factor(region: RegionZ, dims: LfrDims, alpha: float, beta: float) -> np.ndarray:
    """S_R: depends only on the region and the slope bounds, never on the
    multiplier variables. m_c x n_c."""
    l = dims.l
    Qt_z, St_z, _ = _region_inverse(region)
    S_hat = inv(Qt_z) @ St_z
    has_nn = dims.k_phi + dims.lkpsi > 0
    _, s_s, _ = _nn_scales(alpha, beta, has_nn)
    return block_diag([
        kron(S_hat, np.eye(dims.m)),
        _diag_l(kron(S_hat, np.eye(dims.k_psi)), l),
        s_s * np.eye(dims.k_phi),
        s_s * np.eye(dims.lkpsi),
    ])


def combined_multiplier(
    vars: MultiplierVars, region: RegionZ, dims: LfrDims, alpha: float, beta: float
) -> CombinedMultiplier:
    Q, S, R = assemble_combined(vars, region, dims, alpha, beta)
    Q_t, S_t, R_t = invert_combined(vars, region, dims, alpha, beta)
    S_L, S_R = factor_s_tilde((Q_t, S_t, R_t), vars, region, dims, alpha, beta)
    return CombinedMultiplier(
        Q=Q, S=S, R=R, Q_tilde=Q_t, S_tilde=S_t, R_tilde=R_t, S_L=S_L, S_R=S_R
    )


def sample_delta_qc(activation, alpha: float, beta: float, n: int = 10_000, seed: int = 0) -> float:
    """Smallest sampled value of the scalar increment constraint
    -2 dw^2 + 2(alpha+beta) dw dv - 2 alpha beta dv^2 over random input
    pairs; nonnegative iff the declared slope bounds hold on the samples."""
    rng = np.random.default_rng(seed)
    x1 = rng.normal(0.0, 2.0, size=n)
    x2 = rng.normal(0.0, 2.0, size=n)
    dv = x1 - x2
    dw = np.asarray(activation(x1), dtype=float) - np.asarray(activation(x2), dtype=float)
    form = -2.0 * dw**2 + 2.0 * (alpha + beta) * dw * dv - 2.0 * alpha * beta * dv**2
    return float(np.min(form))


def _region_inverse(region: RegionZ) -> tuple[np.ndarray, np.ndarray, float]:
    """Inverse of the (l+1)-dim region form, split back into blocks."""
    l = region.dim
    # fmt: off
    full = np.block([
        [region.Q_z,   region.S_z],
        [region.S_z.T, np.array([[region.R_z]])],
    ])
    # fmt: on
    full_inv = inv(full)
    return full_inv[:l, :l], full_inv[:l, l:], float(full_inv[l, l])


def _check_var_dims(vars: MultiplierVars, dims: LfrDims) -> None:
    if vars.Lambda_m.shape != (dims.m, dims.m):
        raise ShapeMismatch(
            f"Lambda_m must be {dims.m}x{dims.m}, got {vars.Lambda_m.shape}"
        )
    if vars.Lambda_kpsi.shape != (dims.k_psi, dims.k_psi):
        raise ShapeMismatch(
            f"Lambda_kpsi must be {dims.k_psi}x{dims.k_psi}, got {vars.Lambda_kpsi.shape}"
        )
    if vars.T_kphi.shape != (dims.k_phi,):
        raise ShapeMismatch(f"T_kphi must have {dims.k_phi} entries")
    if vars.T_lkpsi.shape != (dims.lkpsi,):
        raise ShapeMismatch(f"T_lkpsi must have {dims.lkpsi} entries")
