"""Controller synthesis via semidefinite programming.

The design inequality is assembled in the inverse-multiplier variables so
that every block is affine: a Lyapunov matrix P, channel gain surrogates
L_*, inverse multipliers, and a scalar region-coupling variable. Three
channel regimes exist:

    full      both slope bounds nonzero with opposite signs
    reduced   lower slope bound exactly zero: the network part of the
              inverted channel constraint degenerates, so its rows and
              columns are removed from the main inequality (not zeroed)
    bilinear  no network channels at all

The same assembly code runs in two modes via the `stacker` argument: "cvxpy"
builds the optimization problem, "numpy" re-evaluates the blocks on numeric
values for residual reporting. A separate primal cross-check rebuilds the
certified inequality from the recovered gains and closed-loop matrices,
independent of the L_* parametrization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .backend import SdpBackend, select_backend
from .errors import (
    ContainmentViolation,
    Infeasible,
    NumericalFailure,
    ShapeMismatch,
    Singular,
    UnsupportedSlopeBounds,
)
from .lfr import LfrDims, ShiftedLfr, shift_lfr
from .linalg import min_eig, max_eig, solve_linear, sym_sqrt
from .multiplier import _region_inverse, combined_from_tilde, fixed_right_factor
from .system import BilinearNfl, RegionZ

# Default strictness margin for the main inequality.
EPS_DEFAULT = 1e-7
# Floors keeping recovered multipliers invertible.
FLOOR = 1e-9
# Post-solve acceptance gates on the certificate.
RIGHT_RESIDUAL_TOL = 1e-8
GAIN_RESIDUAL_TOL = 1e-9
ROA_CONTAINMENT_TOL = 1e-8


@dataclass(frozen=True)
class SynthesisOptions:
    eps: float = EPS_DEFAULT
    objective: str = "trace-p"  # or "feasibility"
    multiplier_class: str = "diagonal"  # or "scalar"
    backend: SdpBackend | None = None

    def __post_init__(self):
        if self.objective not in ("trace-p", "feasibility"):
            raise ShapeMismatch(f"unknown objective {self.objective!r}")
        if self.multiplier_class not in ("diagonal", "scalar"):
            raise ShapeMismatch(f"unknown multiplier class {self.multiplier_class!r}")
        if self.eps <= 0.0:
            raise ShapeMismatch("eps must be positive")


@dataclass(eq=False)
class DecisionVars:
    """Decision-variable handles: cvxpy objects during assembly, numpy
    arrays after extraction. Zero-width channels hold numpy zeros in both
    modes. T blocks are diagonal-entry vectors."""

    P: Any
    L_z: Any
    L_u: Any
    L_wpsi: Any
    L_phi: Any
    L_psi: Any
    Lambda_m_t: Any
    Lambda_kpsi_t: Any
    T_kphi_t: Any
    T_lkpsi_t: Any
    nu: Any


@dataclass(frozen=True, eq=False)
class XMatrices:
    X_AP: Any
    X_CP: Any
    X_BL: Any
    X_DL: Any
    X_BQ: Any
    X_DQ: Any


def _mode_of(lfr: ShiftedLfr) -> str:
    d = lfr.dims
    if d.k_phi + d.lkpsi == 0:
        return "bilinear"
    alpha, beta = lfr.activation.alpha, lfr.activation.beta
    if alpha == 0.0:
        return "reduced"
    if alpha * beta < 0.0:
        return "full"
    raise UnsupportedSlopeBounds(
        f"synthesis needs slope bounds with alpha = 0 or alpha*beta < 0, "
        f"got ({alpha}, {beta})"
    )


class _Stack:
    """Thin dispatch over the two assembly backends (see module docstring)."""

    def __init__(self, kind: str):
        if kind == "numpy":
            self.hstack = lambda bs: np.hstack(bs)
            self.vstack = lambda bs: np.vstack(bs)
            self.kron = np.kron
            self.diag = np.diag
        elif kind == "cvxpy":
            import cvxpy as cp

            self.hstack = lambda bs: cp.hstack(bs) if len(bs) > 1 else bs[0]
            self.vstack = lambda bs: cp.vstack(bs) if len(bs) > 1 else bs[0]
            self.kron = cp.kron
            self.diag = cp.diag
        else:
            raise ShapeMismatch(f"unknown stacker {kind!r}")
        self.kind = kind

    def hcat(self, blocks):
        bs = [b for b in blocks if b.shape[1] > 0]
        if not bs or blocks[0].shape[0] == 0:
            width = sum(b.shape[1] for b in blocks)
            return np.zeros((blocks[0].shape[0], width))
        return self.hstack(bs)

    def vcat(self, blocks):
        bs = [b for b in blocks if b.shape[0] > 0]
        if not bs or blocks[0].shape[1] == 0:
            height = sum(b.shape[0] for b in blocks)
            return np.zeros((height, blocks[0].shape[1]))
        return self.vstack(bs)

    def grid(self, rows):
        return self.vcat([self.hcat(row) for row in rows])

    def blkdiag(self, blocks):
        n = len(blocks)
        rows = []
        for i, b in enumerate(blocks):
            row = []
            for j in range(n):
                if i == j:
                    row.append(b)
                else:
                    row.append(np.zeros((b.shape[0], blocks[j].shape[1])))
            rows.append(row)
        return self.grid(rows)

    def diag_mat(self, t_vec):
        if isinstance(t_vec, np.ndarray) and t_vec.size == 0:
            return np.zeros((0, 0))
        return self.diag(t_vec)

    def kron_lift(self, const_left, expr):
        if expr.shape[0] == 0 or const_left.shape[0] == 0:
            return np.zeros((const_left.shape[0] * expr.shape[0],
                             const_left.shape[1] * expr.shape[1]))
        if self.kind == "numpy":
            return np.kron(const_left, expr)
        return self.kron(const_left, expr)


def _mm(const: np.ndarray, expr):
    """const @ expr, tolerating the zero-size constants cvxpy rejects."""
    if const.shape[0] == 0 or const.shape[1] == 0:
        return np.zeros((const.shape[0], expr.shape[1]))
    return const @ expr


def assemble_x_matrices(
    lfr: ShiftedLfr,
    region: RegionZ,
    dv: DecisionVars,
    stacker: str = "numpy",
    reduced: bool | None = None,
) -> XMatrices:
    """The six affine design blocks.

    X_BQ/X_DQ apply the fixed right scaling of the inverted channel
    constraint; in reduced mode their network columns are removed entirely.
    """
    stk = _Stack(stacker)
    d = lfr.dims
    mode = _mode_of(lfr) if reduced is None else ("reduced" if reduced else "full")
    alpha, beta = lfr.activation.alpha, lfr.activation.beta
    Qt_z, _, _ = _region_inverse(region)

    T_phi = stk.diag_mat(dv.T_kphi_t)
    T_psi = stk.diag_mat(dv.T_lkpsi_t)
    SL_wu = stk.kron_lift(Qt_z, dv.Lambda_m_t)
    SL_wpsi = stk.kron_lift(np.eye(d.l), stk.kron_lift(Qt_z, dv.Lambda_kpsi_t))

    X_AP = lfr.A @ dv.P + lfr.B @ dv.L_z
    X_CP = stk.vcat([
        dv.L_z,
        np.zeros((d.lkpsi, d.l)),
        _mm(lfr.G_phi, dv.L_z),
        _mm(lfr.G_psi, dv.L_z),
    ])

    bl = [
        lfr.B_wu @ SL_wu + lfr.B @ dv.L_u,
        lfr.B_wpsi @ SL_wpsi + lfr.B @ dv.L_wpsi,
        lfr.B_sphi @ T_phi + lfr.B @ dv.L_phi,
        lfr.B_spsi @ T_psi + lfr.B @ dv.L_psi,
    ]
    X_BL = stk.hcat(bl)

    zero_u = np.zeros((d.lkpsi, d.lm))
    zero_w = np.zeros((d.lkpsi, d.l2kpsi))
    zero_p = np.zeros((d.lkpsi, d.k_phi))
    dl = [
        [dv.L_u, dv.L_wpsi, dv.L_phi, dv.L_psi],
        [zero_u, zero_w, zero_p, T_psi],
        [_mm(lfr.G_phi, dv.L_u), _mm(lfr.G_phi, dv.L_wpsi),
         _mm(lfr.G_phi, dv.L_phi) + _mm(lfr.F_phi, T_phi), _mm(lfr.G_phi, dv.L_psi)],
        [_mm(lfr.G_psi, dv.L_u), _mm(lfr.G_psi, dv.L_wpsi),
         _mm(lfr.G_psi, dv.L_phi), _mm(lfr.G_psi, dv.L_psi) + _mm(lfr.F_psi, T_psi)],
    ]
    X_DL = stk.grid(dl)

    if mode == "full":
        q_s = 2.0 * alpha * beta / (alpha - beta) ** 2
        X_BQ = stk.hcat([bl[0], bl[1], q_s * bl[2], q_s * bl[3]])
        X_DQ = stk.grid([
            [row[0], row[1], q_s * row[2], q_s * row[3]] for row in dl
        ])
    else:
        # Network columns are dropped, not zeroed.
        X_BQ = stk.hcat([bl[0], bl[1]])
        X_DQ = stk.grid([[row[0], row[1]] for row in dl])

    return XMatrices(X_AP=X_AP, X_CP=X_CP, X_BL=X_BL, X_DL=X_DL, X_BQ=X_BQ, X_DQ=X_DQ)


def _r_tilde_expr(stk: _Stack, lfr: ShiftedLfr, region: RegionZ, dv: DecisionVars):
    d = lfr.dims
    alpha, beta = lfr.activation.alpha, lfr.activation.beta
    _, _, Rt_z = _region_inverse(region)
    blocks = [Rt_z * dv.Lambda_m_t]
    if d.lkpsi > 0:
        blocks.append(stk.kron_lift(np.eye(d.l), Rt_z * dv.Lambda_kpsi_t))
    r_s = 2.0 / (alpha - beta) ** 2 if d.k_phi + d.lkpsi > 0 else 0.0
    if d.k_phi > 0:
        blocks.append(r_s * stk.diag_mat(dv.T_kphi_t))
    if d.lkpsi > 0:
        blocks.append(r_s * stk.diag_mat(dv.T_lkpsi_t))
    return stk.blkdiag(blocks)


def _neg_q_tilde_expr(stk: _Stack, lfr: ShiftedLfr, region: RegionZ, dv: DecisionVars, mode: str):
    d = lfr.dims
    alpha, beta = lfr.activation.alpha, lfr.activation.beta
    Qt_z, _, _ = _region_inverse(region)
    blocks = [stk.kron_lift(-Qt_z, dv.Lambda_m_t)]
    if d.lkpsi > 0:
        blocks.append(stk.kron_lift(np.eye(d.l), stk.kron_lift(-Qt_z, dv.Lambda_kpsi_t)))
    if mode == "full":
        q_s = 2.0 * alpha * beta / (alpha - beta) ** 2
        if d.k_phi > 0:
            blocks.append(-q_s * stk.diag_mat(dv.T_kphi_t))
        if d.lkpsi > 0:
            blocks.append(-q_s * stk.diag_mat(dv.T_lkpsi_t))
    return stk.blkdiag(blocks)


def build_lmi_matrices(
    lfr: ShiftedLfr, region: RegionZ, dv: DecisionVars, stacker: str = "numpy"
):
    """(main_block, region_block) of the design inequalities, affine in dv."""
    stk = _Stack(stacker)
    d = lfr.dims
    mode = _mode_of(lfr)
    alpha, beta = lfr.activation.alpha, lfr.activation.beta
    Qt_z, St_z, Rt_z = _region_inverse(region)
    S_R = fixed_right_factor(region, d, alpha, beta)
    x = assemble_x_matrices(lfr, region, dv, stacker=stacker)

    XBS = x.X_BL @ S_R
    XDS = x.X_DL @ S_R
    R_t = _r_tilde_expr(stk, lfr, region, dv)
    q_int = stk.grid([
        [dv.P, -XBS],
        [-XBS.T, R_t - XDS - XDS.T],
    ])
    cross = stk.grid([
        [x.X_AP, x.X_BQ],
        [x.X_CP, x.X_DQ],
    ])
    neg_Qt = _neg_q_tilde_expr(stk, lfr, region, dv, mode)
    corner = stk.blkdiag([dv.P, neg_Qt])
    main = stk.grid([
        [q_int, cross],
        [cross.T, corner],
    ])

    one = np.array([[1.0]])
    region_block = stk.grid([
        [dv.P + dv.nu * Qt_z, -dv.nu * St_z],
        [-dv.nu * St_z.T, dv.nu * Rt_z * one - one],
    ])
    return main, region_block


@dataclass(eq=False)
class LmiProblem:
    """Assembled optimization problem plus everything needed to interpret
    its solution."""

    problem: Any
    dvars: DecisionVars
    constraints: list
    dims: LfrDims
    mode: str
    lfr: ShiftedLfr
    region: RegionZ
    opts: SynthesisOptions
    main_dim: int
    side_dim: int


def assemble_lmis(lfr: ShiftedLfr, region: RegionZ, opts: SynthesisOptions | None = None) -> LmiProblem:
    import cvxpy as cp

    opts = opts or SynthesisOptions()
    d = lfr.dims
    mode = _mode_of(lfr)

    def mat_var(rows, cols):
        if rows == 0 or cols == 0:
            return np.zeros((rows, cols))
        return cp.Variable((rows, cols))

    def t_var(n):
        if n == 0:
            return np.zeros(0)
        if opts.multiplier_class == "scalar":
            return cp.Variable() * np.ones(n)
        return cp.Variable(n)

    P = cp.Variable((d.l, d.l), symmetric=True)
    dv = DecisionVars(
        P=P,
        L_z=mat_var(d.m, d.l),
        L_u=mat_var(d.m, d.lm),
        L_wpsi=mat_var(d.m, d.l2kpsi),
        L_phi=mat_var(d.m, d.k_phi),
        L_psi=mat_var(d.m, d.lkpsi),
        Lambda_m_t=cp.Variable((d.m, d.m), symmetric=True),
        Lambda_kpsi_t=(cp.Variable((d.k_psi, d.k_psi), symmetric=True)
                       if d.k_psi > 0 else np.zeros((0, 0))),
        T_kphi_t=t_var(d.k_phi),
        T_lkpsi_t=t_var(d.lkpsi),
        nu=cp.Variable(),
    )

    main, region_block = build_lmi_matrices(lfr, region, dv, stacker="cvxpy")
    n_main = main.shape[0]
    constraints = [
        main >> opts.eps * np.eye(n_main),
        region_block << 0,
        dv.Lambda_m_t >> FLOOR * np.eye(d.m),
        dv.nu >= FLOOR,
    ]
    if d.k_psi > 0:
        constraints.append(dv.Lambda_kpsi_t >> FLOOR * np.eye(d.k_psi))
    if d.k_phi > 0:
        constraints.append(dv.T_kphi_t >= FLOOR)
    if d.lkpsi > 0:
        constraints.append(dv.T_lkpsi_t >= FLOOR)

    if opts.objective == "trace-p":
        objective = cp.Maximize(cp.trace(P))
    else:
        objective = cp.Minimize(0)
    problem = cp.Problem(objective, constraints)
    return LmiProblem(
        problem=problem, dvars=dv, constraints=constraints, dims=d, mode=mode,
        lfr=lfr, region=region, opts=opts,
        main_dim=n_main, side_dim=region_block.shape[0],
    )


@dataclass(eq=False)
class RawSolution:
    status: str
    values: DecisionVars
    objective_value: float
    backend: SdpBackend
    solve_seconds: float


def _value_of(handle) -> np.ndarray:
    if isinstance(handle, np.ndarray):
        return handle
    val = handle.value
    if val is None:
        raise NumericalFailure("solver returned no value for a decision variable")
    return np.atleast_1d(np.asarray(val, dtype=float))


def solve(problem: LmiProblem, backend: SdpBackend | None = None) -> RawSolution:
    backend = backend or problem.opts.backend or select_backend()
    t0 = time.perf_counter()
    status = backend.run(problem.problem)
    elapsed = time.perf_counter() - t0
    if status in ("infeasible", "infeasible_inaccurate"):
        raise Infeasible(f"synthesis inequalities are infeasible ({status})", status=status)
    if status not in ("optimal", "optimal_inaccurate"):
        raise NumericalFailure(f"solver ended with status {status!r}", status=status)

    dv = problem.dvars
    P = _value_of(dv.P)
    P = 0.5 * (P + P.T)
    Lm = _value_of(dv.Lambda_m_t)
    Lm = 0.5 * (Lm + Lm.T)
    Lk = _value_of(dv.Lambda_kpsi_t)
    if Lk.size:
        Lk = 0.5 * (Lk + Lk.T)
    else:
        Lk = np.zeros((0, 0))
    d = problem.dims
    values = DecisionVars(
        P=P,
        L_z=_shape2(_value_of(dv.L_z), d.m, d.l),
        L_u=_shape2(_value_of(dv.L_u), d.m, d.lm),
        L_wpsi=_shape2(_value_of(dv.L_wpsi), d.m, d.l2kpsi),
        L_phi=_shape2(_value_of(dv.L_phi), d.m, d.k_phi),
        L_psi=_shape2(_value_of(dv.L_psi), d.m, d.lkpsi),
        Lambda_m_t=Lm,
        Lambda_kpsi_t=Lk,
        T_kphi_t=_value_of(dv.T_kphi_t).ravel(),
        T_lkpsi_t=_value_of(dv.T_lkpsi_t).ravel(),
        nu=float(_value_of(dv.nu)[0]),
    )
    obj = float(np.trace(P)) if problem.opts.objective == "trace-p" else 0.0
    return RawSolution(
        status=status, values=values, objective_value=obj,
        backend=backend, solve_seconds=elapsed,
    )


def _shape2(a: np.ndarray, rows: int, cols: int) -> np.ndarray:
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols))
    return a.reshape(rows, cols)


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    """Certificate: Lyapunov matrix, controller gains, inverse multipliers,
    and the residuals that back the certificate claims."""

    P: np.ndarray
    K_z: np.ndarray
    K_u: np.ndarray
    K_wpsi: np.ndarray
    K_phi: np.ndarray
    K_psi: np.ndarray
    Lambda_m_t: np.ndarray
    Lambda_kpsi_t: np.ndarray
    T_kphi_t: np.ndarray
    T_lkpsi_t: np.ndarray
    nu: float
    solver_status: str
    left_min_eig: float
    right_max_eig: float
    gain_residual: float
    trace_P: float
    mode: str
    eps: float
    objective: str
    multiplier_class: str
    backend_name: str
    dims: LfrDims
    alpha: float
    beta: float
    wall_time_s: float = 0.0
    primal_min_eig: float | None = None


def recover_gains(solution: RawSolution, problem: LmiProblem) -> SynthesisResult:
    """Undo the variable substitutions: each gain is its surrogate times the
    inverse of the corresponding left-factor block."""
    d = problem.dims
    v = solution.values
    region = problem.region
    lfr = problem.lfr
    alpha, beta = lfr.activation.alpha, lfr.activation.beta

    if min_eig(v.P) <= FLOOR:
        raise Singular(f"P is not invertible enough (min eig {min_eig(v.P):.3e})")
    if min_eig(v.Lambda_m_t) <= FLOOR / 2:
        raise Singular("Lambda_m inverse block lost positivity")
    if v.Lambda_kpsi_t.size and min_eig(v.Lambda_kpsi_t) <= FLOOR / 2:
        raise Singular("Lambda_kpsi inverse block lost positivity")
    for name, t in (("T_kphi", v.T_kphi_t), ("T_lkpsi", v.T_lkpsi_t)):
        if t.size and np.min(t) <= FLOOR / 2:
            raise Singular(f"{name} inverse block lost positivity")

    Qt_z, _, _ = _region_inverse(region)
    K_z = solve_linear(v.P, v.L_z.T).T
    SL_wu = np.kron(Qt_z, v.Lambda_m_t)
    K_u = solve_linear(SL_wu, v.L_u.T).T
    if d.lkpsi > 0:
        SL_wpsi = np.kron(np.eye(d.l), np.kron(Qt_z, v.Lambda_kpsi_t))
        K_wpsi = solve_linear(SL_wpsi, v.L_wpsi.T).T
        K_psi = v.L_psi / v.T_lkpsi_t[np.newaxis, :]
    else:
        K_wpsi = np.zeros((d.m, 0))
        K_psi = np.zeros((d.m, 0))
    if d.k_phi > 0:
        K_phi = v.L_phi / v.T_kphi_t[np.newaxis, :]
    else:
        K_phi = np.zeros((d.m, 0))

    gain_res = max(
        _rel_residual(K_z @ v.P, v.L_z),
        _rel_residual(K_u @ SL_wu, v.L_u),
        _rel_residual(K_wpsi @ np.kron(np.eye(d.l), np.kron(Qt_z, v.Lambda_kpsi_t)), v.L_wpsi) if d.lkpsi else 0.0,
        _rel_residual(K_phi * v.T_kphi_t[np.newaxis, :], v.L_phi) if d.k_phi else 0.0,
        _rel_residual(K_psi * v.T_lkpsi_t[np.newaxis, :], v.L_psi) if d.lkpsi else 0.0,
    )

    main, region_block = build_lmi_matrices(lfr, region, v, stacker="numpy")
    left_res = min_eig(main)
    right_res = max_eig(region_block)
    if left_res < problem.opts.eps / 2:
        raise NumericalFailure(
            f"main inequality margin {left_res:.3e} fell below eps/2"
        )
    if right_res > RIGHT_RESIDUAL_TOL:
        raise NumericalFailure(
            f"region-coupling inequality violated by {right_res:.3e}"
        )

    return SynthesisResult(
        P=v.P, K_z=K_z, K_u=K_u, K_wpsi=K_wpsi, K_phi=K_phi, K_psi=K_psi,
        Lambda_m_t=v.Lambda_m_t, Lambda_kpsi_t=v.Lambda_kpsi_t,
        T_kphi_t=v.T_kphi_t, T_lkpsi_t=v.T_lkpsi_t, nu=float(v.nu),
        solver_status=solution.status,
        left_min_eig=left_res, right_max_eig=right_res,
        gain_residual=gain_res, trace_P=float(np.trace(v.P)),
        mode=problem.mode, eps=problem.opts.eps,
        objective=problem.opts.objective,
        multiplier_class=problem.opts.multiplier_class,
        backend_name=solution.backend.name,
        dims=d, alpha=alpha, beta=beta,
        wall_time_s=solution.solve_seconds,
    )


def _rel_residual(lhs: np.ndarray, rhs: np.ndarray) -> float:
    if lhs.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(rhs))))
    return float(np.max(np.abs(lhs - rhs))) / scale


def decision_vars_from_result(result: SynthesisResult, region: RegionZ) -> DecisionVars:
    """Refold recovered gains into the affine surrogates (the inverse of
    recover_gains), so a stored certificate can be re-checked through the
    same inequality assembly the solver used."""
    d = result.dims
    Qt_z, _, _ = _region_inverse(region)
    L_z = result.K_z @ result.P
    L_u = result.K_u @ np.kron(Qt_z, result.Lambda_m_t)
    if d.lkpsi > 0:
        L_wpsi = result.K_wpsi @ np.kron(
            np.eye(d.l), np.kron(Qt_z, result.Lambda_kpsi_t)
        )
        L_psi = result.K_psi * result.T_lkpsi_t[np.newaxis, :]
    else:
        L_wpsi = np.zeros((d.m, 0))
        L_psi = np.zeros((d.m, 0))
    if d.k_phi > 0:
        L_phi = result.K_phi * result.T_kphi_t[np.newaxis, :]
    else:
        L_phi = np.zeros((d.m, 0))
    return DecisionVars(
        P=result.P, L_z=L_z, L_u=L_u, L_wpsi=L_wpsi, L_phi=L_phi, L_psi=L_psi,
        Lambda_m_t=result.Lambda_m_t, Lambda_kpsi_t=result.Lambda_kpsi_t,
        T_kphi_t=result.T_kphi_t, T_lkpsi_t=result.T_lkpsi_t,
        nu=result.nu,
    )


def closed_loop_matrices(result: SynthesisResult, lfr: ShiftedLfr):
    """State-space blocks of the interconnection of shifted plant and
    controller, channels kept explicit."""
    d = lfr.dims
    A_cl = lfr.A + lfr.B @ result.K_z
    B_cl = np.hstack([
        lfr.B_wu + lfr.B @ result.K_u,
        lfr.B_wpsi + lfr.B @ result.K_wpsi,
        lfr.B_sphi + lfr.B @ result.K_phi,
        lfr.B_spsi + lfr.B @ result.K_psi,
    ])
    C_cl = np.vstack([
        result.K_z,
        np.zeros((d.lkpsi, d.l)),
        lfr.G_phi @ result.K_z,
        lfr.G_psi @ result.K_z,
    ])
    K_row = np.hstack([result.K_u, result.K_wpsi, result.K_phi, result.K_psi])
    D_cl = np.vstack([
        K_row,
        np.hstack([
            np.zeros((d.lkpsi, d.lm + d.l2kpsi + d.k_phi)), np.eye(d.lkpsi),
        ]),
        np.hstack([
            lfr.G_phi @ result.K_u, lfr.G_phi @ result.K_wpsi,
            lfr.F_phi + lfr.G_phi @ result.K_phi, lfr.G_phi @ result.K_psi,
        ]),
        np.hstack([
            lfr.G_psi @ result.K_u, lfr.G_psi @ result.K_wpsi,
            lfr.G_psi @ result.K_phi, lfr.F_psi + lfr.G_psi @ result.K_psi,
        ]),
    ])
    return A_cl, B_cl, C_cl, D_cl


def cross_check_primal(result: SynthesisResult, lfr: ShiftedLfr, region: RegionZ) -> float:
    """Rebuild the stability inequality from the recovered gains (not from
    the solver's affine blocks) and return its smallest eigenvalue. Positive
    means the certificate survives the independent route."""
    d = lfr.dims
    Q_t, S_t, R_t = combined_from_tilde(
        result.Lambda_m_t, result.Lambda_kpsi_t,
        result.T_kphi_t, result.T_lkpsi_t,
        region, d, result.alpha, result.beta,
    )
    A_cl, B_cl, C_cl, D_cl = closed_loop_matrices(result, lfr)
    P = result.P
    upper_left = P - A_cl @ P @ A_cl.T + B_cl @ Q_t @ B_cl.T
    upper_right = -A_cl @ P @ C_cl.T + B_cl @ Q_t @ D_cl.T - B_cl @ S_t
    lower_right = (
        -C_cl @ P @ C_cl.T + D_cl @ Q_t @ D_cl.T
        - D_cl @ S_t - S_t.T @ D_cl.T + R_t
    )
    # fmt: off
    M = np.block([
        [upper_left,    upper_right],
        [upper_right.T, lower_right],
    ])
    # fmt: on
    return min_eig(M)


@dataclass(frozen=True, eq=False)
class RoaCertificate:
    P: np.ndarray
    center: np.ndarray
    containment_margin: float
    right_max_eig: float
    n_samples: int


def roa(
    result: SynthesisResult,
    region: RegionZ,
    center=None,
    n_samples: int = 1000,
    seed: int = 42,
) -> RoaCertificate:
    """Certified attraction ellipsoid {z: (z-c)' P^{-1} (z-c) <= 1} plus a
    sampled containment check of its boundary inside the region."""
    if result.right_max_eig > ROA_CONTAINMENT_TOL:
        raise ContainmentViolation(
            f"region-coupling residual {result.right_max_eig:.3e} exceeds "
            f"{ROA_CONTAINMENT_TOL:.0e}"
        )
    c = np.asarray(center, dtype=float) if center is not None else region.center
    half = sym_sqrt(result.P)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, result.P.shape[0]))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    boundary = c + x @ half.T
    margin = np.inf
    for z in boundary:
        diff = z - region.center
        val = float(diff @ region.Q_z @ diff + 2.0 * diff @ region.S_z[:, 0] + region.R_z)
        margin = min(margin, val)
    if margin < -ROA_CONTAINMENT_TOL:
        raise ContainmentViolation(
            f"attraction ellipsoid leaves the region (worst margin {margin:.3e})"
        )
    return RoaCertificate(
        P=result.P, center=c, containment_margin=float(margin),
        right_max_eig=result.right_max_eig, n_samples=n_samples,
    )


def synthesize(
    sys: BilinearNfl,
    opts: SynthesisOptions | None = None,
    backend: SdpBackend | None = None,
) -> SynthesisResult:
    """Full pipeline: shift, assemble, solve, recover, cross-check."""
    opts = opts or SynthesisOptions()
    t0 = time.perf_counter()
    lfr = shift_lfr(sys)
    problem = assemble_lmis(lfr, sys.region, opts)
    solution = solve(problem, backend)
    result = recover_gains(solution, problem)
    primal = cross_check_primal(result, lfr, sys.region)
    wall = time.perf_counter() - t0
    return replace(result, primal_min_eig=float(primal), wall_time_s=wall)
