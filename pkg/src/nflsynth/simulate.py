"""Closed-loop rollout and certificate checking on trajectories.

A rollout drives the true plant (networks evaluated directly, no relaxation)
with the implicit controller, recording states, inputs, the Lyapunov value
of each state, region membership, and per-step controller iteration counts.
The verifier then checks what the synthesis certificate promises: monotone
Lyapunov decrease away from the equilibrium and no excursion from the
operating region, plus an empirical decay-rate fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import ImplicitController, evaluate
from .errors import NoConvergence, ShapeMismatch
from .linalg import as_matrix, as_vector, check_symmetric, inv, sym_sqrt
from .system import BilinearNfl, RegionZ, region_contains, step_direct

HORIZON_DEFAULT = 200
# Lyapunov decrease may be violated by at most this much per step.
V_SLACK = 1e-10
# Below this state deviation the trajectory counts as converged and the
# decrease check is waived.
CONVERGED_TOL = 1e-8
# Steps discarded before fitting the decay rate.
TRANSIENT_STEPS = 5


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Closed-loop run: T steps give T+1 states and T inputs."""

    states: np.ndarray
    inputs: np.ndarray
    lyapunov: np.ndarray
    in_region: np.ndarray
    controller_iterations: np.ndarray
    z_star: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        steps = states.shape[0] - 1
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim != 2:
            inputs = inputs.reshape(steps, -1) if steps else inputs.reshape(0, 0)
        if inputs.shape[0] != steps:
            raise ShapeMismatch(
                f"{steps + 1} states need {steps} inputs, got {inputs.shape[0]}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "lyapunov", as_vector(self.lyapunov, steps + 1))
        object.__setattr__(
            self, "in_region", np.asarray(self.in_region, dtype=bool).reshape(steps + 1)
        )
        object.__setattr__(
            self,
            "controller_iterations",
            np.asarray(self.controller_iterations, dtype=int).reshape(steps),
        )
        object.__setattr__(self, "z_star", as_vector(self.z_star, states.shape[1]))

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1


def rollout(
    sys: BilinearNfl,
    ctrl: ImplicitController,
    z0,
    horizon: int = HORIZON_DEFAULT,
    P: np.ndarray | None = None,
) -> Trajectory:
    """Run the true plant under the implicit controller for `horizon` steps.

    P is the certificate shape matrix; the recorded Lyapunov value is the
    P-inverse quadratic form of the state deviation (NaN when P is absent).
    The controller solve is warm-started from the previous step; a failed
    solve raises with the offending time step in the message.
    """
    if horizon < 1:
        raise ShapeMismatch(f"horizon must be at least 1, got {horizon}")
    l, m = sys.l, sys.m
    P_inv = None
    if P is not None:
        P_inv = inv(check_symmetric(as_matrix(P, l, l), "P"))

    states = np.zeros((horizon + 1, l))
    inputs = np.zeros((horizon, m))
    lyap = np.full(horizon + 1, np.nan)
    member = np.zeros(horizon + 1, dtype=bool)
    iters = np.zeros(horizon, dtype=int)

    def v_of(z):
        if P_inv is None:
            return np.nan
        d = z - ctrl.z_star
        return float(d @ P_inv @ d)

    z = as_vector(z0, l)
    states[0] = z
    lyap[0] = v_of(z)
    member[0] = region_contains(sys.region, z)
    warm = None
    # Divergence surfaces as overflow on huge states; the controller's own
    # finiteness guard turns it into NoConvergence, so silence the warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(horizon):
            try:
                u, s_phi, s_psi, n_it = evaluate(ctrl, z, warm)
            except NoConvergence as exc:
                raise NoConvergence(
                    f"controller solve failed at step {t}: {exc}",
                    residual=exc.residual,
                    iterations=exc.iterations,
                ) from exc
            warm = np.concatenate([u - ctrl.u_star, s_phi, s_psi])
            inputs[t] = u
            iters[t] = n_it
            z = step_direct(sys, z, u)
            states[t + 1] = z
            lyap[t + 1] = v_of(z)
            member[t + 1] = region_contains(sys.region, z)
    return Trajectory(
        states=states,
        inputs=inputs,
        lyapunov=lyap,
        in_region=member,
        controller_iterations=iters,
        z_star=ctrl.z_star,
    )


def rollout_baseline(
    sys: BilinearNfl,
    baseline_ctrl: ImplicitController,
    z0,
    horizon: int = HORIZON_DEFAULT,
    P: np.ndarray | None = None,
) -> Trajectory:
    """Run the FULL plant under a controller designed without the networks.

    The baseline controller comes from a synthesis on the stripped plant
    (see system.strip_networks); applying it to the true dynamics shows what
    ignoring the nonlinearities costs. P should be the baseline design's
    shape matrix so the Lyapunov column reflects that certificate.
    """
    return rollout(sys, baseline_ctrl, z0, horizon=horizon, P=P)


@dataclass(frozen=True)
class RunReport:
    """Certificate check of one trajectory."""

    decrease_violations: tuple[int, ...]
    region_exits: tuple[int, ...]
    max_controller_iterations: int
    decay_rate: float
    converged: bool


def verify_run(traj: Trajectory, region: RegionZ) -> RunReport:
    """Check a rollout against the certificate's promises.

    A decrease violation is a step whose Lyapunov value grows by more than
    the slack while the state deviation is still above the convergence
    threshold. Region membership is recomputed against the given region.
    The decay rate is the slope fit of the log deviation norm after the
    transient; trajectories that hit numerical zero report 0.0.
    """
    dev = traj.states - traj.z_star
    inf_norms = np.max(np.abs(dev), axis=1) if dev.size else np.zeros(traj.steps + 1)

    violations = []
    for t in range(traj.steps):
        dv = traj.lyapunov[t + 1] - traj.lyapunov[t]
        if np.isfinite(dv) and dv > V_SLACK and inf_norms[t] > CONVERGED_TOL:
            violations.append(t)

    exits = [
        t for t in range(traj.steps + 1)
        if not region_contains(region, traj.states[t])
    ]

    two_norms = np.linalg.norm(dev, axis=1)
    ts = [t for t in range(TRANSIENT_STEPS, traj.steps + 1) if two_norms[t] > 1e-14]
    if len(ts) >= 2:
        slope = np.polyfit(ts, np.log(two_norms[ts]), 1)[0]
        decay = float(np.exp(slope))
    else:
        decay = 0.0

    max_it = int(traj.controller_iterations.max()) if traj.steps else 0
    return RunReport(
        decrease_violations=tuple(violations),
        region_exits=tuple(exits),
        max_controller_iterations=max_it,
        decay_rate=decay,
        converged=bool(inf_norms[-1] <= CONVERGED_TOL),
    )


def sample_lyapunov_set(
    P: np.ndarray, center, rng: np.random.Generator, n: int, surface: bool = False
) -> np.ndarray:
    """Rows are points of the certified sublevel set {(z-c)' P^{-1} (z-c) <= 1}."""
    c = as_vector(center)
    l = c.shape[0]
    S = sym_sqrt(check_symmetric(as_matrix(P, l, l), "P"))
    x = rng.standard_normal((n, l))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    if not surface:
        x *= rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / l)
    return c + x @ S.T
