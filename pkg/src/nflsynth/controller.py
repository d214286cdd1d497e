"""Online evaluation of the synthesized implicit controller.

The control law is defined only implicitly: the input appears inside the
bilinear selectors and drives two internal network states, which in turn
feed back into the input. Evaluation solves the coupled fixed point over the
stacked unknown (u, s_phi, s_psi) in shifted coordinates by damped iteration,
with a quasi-Newton fallback if the iteration stalls. Well-posedness is
guaranteed by the synthesis certificate only inside the certified set;
outside it the solve is best effort.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, ShapeMismatch
from .lfr import LfrDims, ShiftedLfr, bilinear_selector, psi_selector
from .linalg import as_matrix, as_vector
from .neural import Activation
from .synthesis import SynthesisResult

TOL_DEFAULT = 1e-10
MAX_ITER_DEFAULT = 10_000
DAMPING_DEFAULT = 0.5
# Iterations without a new best residual before the quasi-Newton fallback.
STALL_WINDOW = 100


@dataclass(frozen=True, eq=False)
class ImplicitController:
    """Gains, network blocks, and shift data of the implicit control law."""

    K_z: np.ndarray
    K_u: np.ndarray
    K_wpsi: np.ndarray
    K_phi: np.ndarray
    K_psi: np.ndarray
    F_phi: np.ndarray
    G_phi: np.ndarray
    F_psi: np.ndarray
    G_psi: np.ndarray
    activation: Activation
    z_star: np.ndarray
    u_star: np.ndarray
    v_phi_star: np.ndarray
    v_psi_star: np.ndarray
    dims: LfrDims
    tol: float = TOL_DEFAULT
    max_iter: int = MAX_ITER_DEFAULT
    damping: float = DAMPING_DEFAULT

    def __post_init__(self):
        d = self.dims
        if self.tol <= 0.0:
            raise ShapeMismatch("tolerance must be positive")
        object.__setattr__(self, "K_z", as_matrix(self.K_z, d.m, d.l))
        object.__setattr__(self, "K_u", as_matrix(self.K_u, d.m, d.lm))
        object.__setattr__(self, "K_wpsi", as_matrix(self.K_wpsi, d.m, d.l2kpsi))
        object.__setattr__(self, "K_phi", as_matrix(self.K_phi, d.m, d.k_phi))
        object.__setattr__(self, "K_psi", as_matrix(self.K_psi, d.m, d.lkpsi))
        object.__setattr__(self, "F_phi", as_matrix(self.F_phi, d.k_phi, d.k_phi))
        object.__setattr__(self, "G_phi", as_matrix(self.G_phi, d.k_phi, d.m))
        object.__setattr__(self, "F_psi", as_matrix(self.F_psi, d.lkpsi, d.lkpsi))
        object.__setattr__(self, "G_psi", as_matrix(self.G_psi, d.lkpsi, d.m))
        object.__setattr__(self, "z_star", as_vector(self.z_star, d.l))
        object.__setattr__(self, "u_star", as_vector(self.u_star, d.m))
        object.__setattr__(self, "v_phi_star", as_vector(self.v_phi_star, d.k_phi))
        object.__setattr__(self, "v_psi_star", as_vector(self.v_psi_star, d.lkpsi))


def from_synthesis(result: SynthesisResult, lfr: ShiftedLfr, **solve_opts) -> ImplicitController:
    return ImplicitController(
        K_z=result.K_z, K_u=result.K_u, K_wpsi=result.K_wpsi,
        K_phi=result.K_phi, K_psi=result.K_psi,
        F_phi=lfr.F_phi, G_phi=lfr.G_phi, F_psi=lfr.F_psi, G_psi=lfr.G_psi,
        activation=lfr.activation,
        z_star=lfr.z_star, u_star=lfr.u_star,
        v_phi_star=lfr.v_phi_star, v_psi_star=lfr.v_psi_star,
        dims=lfr.dims, **solve_opts,
    )


def _fixed_point_map(ctrl: ImplicitController, z_t: np.ndarray):
    """Returns T(x) for x = (u_t, s_phi, s_psi) stacked; the state-dependent
    selectors are folded into the gains once per call."""
    d = ctrl.dims
    K_u_eff = ctrl.K_u @ bilinear_selector(z_t, d.m)
    K_wpsi_eff = ctrl.K_wpsi @ psi_selector(z_t, d.l, d.k_psi)
    bias = ctrl.K_z @ z_t
    beta_phi = ctrl.activation.shifted(ctrl.v_phi_star)
    beta_psi = ctrl.activation.shifted(ctrl.v_psi_star)
    m, kp = d.m, d.k_phi

    def step(x: np.ndarray) -> np.ndarray:
        u_t = x[:m]
        s_phi = x[m : m + kp]
        s_psi = x[m + kp :]
        u_next = (
            bias + K_u_eff @ u_t + (K_wpsi_eff + ctrl.K_psi) @ s_psi
            + ctrl.K_phi @ s_phi
        )
        s_phi_next = beta_phi(ctrl.F_phi @ s_phi + ctrl.G_phi @ u_t) if kp else s_phi
        s_psi_next = (
            beta_psi(ctrl.F_psi @ s_psi + ctrl.G_psi @ u_t) if s_psi.size else s_psi
        )
        return np.concatenate([u_next, s_phi_next, s_psi_next])

    return step


def evaluate(
    ctrl: ImplicitController, z, warm: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Solve the implicit control law at state z (plant coordinates).

    Returns (u, s_phi, s_psi, iterations) with u unshifted and the internal
    states in shifted coordinates. `warm` is a previous stacked solution,
    caller-owned (one slot per trajectory).
    """
    d = ctrl.dims
    z_t = as_vector(z, d.l) - ctrl.z_star
    step = _fixed_point_map(ctrl, z_t)
    n = d.m + d.k_phi + d.lkpsi
    x = np.zeros(n) if warm is None else np.asarray(warm, dtype=float).copy()
    if x.shape != (n,):
        raise ShapeMismatch(f"warm start must have length {n}")

    best = np.inf
    stall = 0
    it = 0
    while it < ctrl.max_iter:
        it += 1
        tx = step(x)
        if not np.all(np.isfinite(tx)):
            raise NoConvergence(
                "controller fixed point iteration diverged",
                residual=best, iterations=it,
            )
        res = float(np.max(np.abs(tx - x)))
        if res <= ctrl.tol:
            # The post-map iterate is the better estimate for a contraction.
            return _unpack(ctrl, tx, it)
        if res < best:
            best = res
            stall = 0
        else:
            stall += 1
            if stall >= STALL_WINDOW:
                x, extra = _quasi_newton(step, x, ctrl.tol, ctrl.max_iter - it)
                return _unpack(ctrl, x, it + extra)
        x = (1.0 - ctrl.damping) * x + ctrl.damping * tx
    raise NoConvergence(
        f"controller fixed point not within tolerance (best residual {best:.3e})",
        residual=best,
        iterations=ctrl.max_iter,
    )


def _unpack(ctrl, x, iterations):
    d = ctrl.dims
    u = x[: d.m] + ctrl.u_star
    return u, x[d.m : d.m + d.k_phi].copy(), x[d.m + d.k_phi :].copy(), iterations


def _quasi_newton(step, x0, tol, budget):
    """Rank-one secant iteration on g(x) = T(x) - x, started where damped
    iteration stalled. The inverse-Jacobian estimate starts at -I, which
    reproduces undamped iteration on the first step."""
    x = x0.copy()
    g = step(x) - x
    n = x.shape[0]
    B = -np.eye(n)
    for it in range(max(budget, 1)):
        res = float(np.max(np.abs(g)))
        if res <= tol:
            return x, it
        dx = -B @ g
        x_new = x + dx
        g_new = step(x_new) - x_new
        if not np.all(np.isfinite(g_new)):
            raise NoConvergence(
                "quasi-newton fallback diverged", residual=res, iterations=it,
            )
        dg = g_new - g
        Bdg = B @ dg
        denom = float(dx @ Bdg)
        if abs(denom) > 1e-14:
            B += np.outer(dx - Bdg, dx @ B) / denom
        x, g = x_new, g_new
    raise NoConvergence(
        f"quasi-newton fallback did not converge (residual {float(np.max(np.abs(g))):.3e})",
        residual=float(np.max(np.abs(g))),
        iterations=budget,
    )


def residual(ctrl: ImplicitController, z, u, s_phi, s_psi) -> float:
    """Largest defining-equation violation of a candidate solution; u in
    plant coordinates, internal states shifted."""
    d = ctrl.dims
    z_t = as_vector(z, d.l) - ctrl.z_star
    u_t = as_vector(u, d.m) - ctrl.u_star
    sp = as_vector(s_phi, d.k_phi)
    ss = as_vector(s_psi, d.lkpsi)
    step = _fixed_point_map(ctrl, z_t)
    x = np.concatenate([u_t, sp, ss])
    return float(np.max(np.abs(step(x) - x)))
