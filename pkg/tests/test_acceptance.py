"""Acceptance gate: one test per shipped guarantee, each printing a single
[PASS]/[FAIL] line with the measured quantities so the suite output reads as
a certification report.

Every check runs the real pipeline against an independent route: closed-form
oracles, inline samplers, or hand-built comparisons that do not share code
with the implementation under test.
"""

import time

import numpy as np
import pytest

from conftest import random_plant
from nflsynth import (
    Activation,
    Infeasible,
    Mlp,
    NoConvergence,
    build_lfr,
    close_shifted,
    close_unshifted,
    dumps_canonical,
    evaluate_inn,
    evaluate_mlp,
    mlp_to_inn,
    plant_to_obj,
    result_to_obj,
    rollout,
    rollout_baseline,
    sample_lyapunov_set,
    save_json,
    shift_lfr,
    step_direct,
    strip_networks,
    synthesize,
    verify_run,
)
from nflsynth.controller import from_synthesis
from nflsynth.fixtures import (
    bilinear_system,
    example_system,
    linear_system,
    mixed_system,
    relu_system,
    stress_system,
    tanh_system,
    unstabilizable_system,
)
from nflsynth.lfr import LfrDims
from nflsynth.multiplier import (
    MultiplierVars,
    assemble_combined,
    bilinear_qc_blocks,
    delta_qc_blocks,
    factor_s_tilde,
    invert_combined,
)
from nflsynth.synthesis import roa
from nflsynth.system import RegionZ


def _report(capsys, ok: bool, label: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}")
    assert ok, label


DESK_SYSTEMS = (
    ("linear", linear_system),
    ("bilinear", bilinear_system),
    ("mixed", mixed_system),
    ("relu", relu_system),
    ("tanh", tanh_system),
    ("stress", stress_system),
)


@pytest.fixture(scope="module")
def desk_runs():
    """Fresh timed syntheses of the desk-scale fixture family."""
    t0 = time.perf_counter()
    runs = {}
    for name, ctor in DESK_SYSTEMS:
        sys_ = ctor()
        runs[name] = (sys_, shift_lfr(sys_), synthesize(sys_))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def flagship_run():
    """Timed synthesis of the flagship four-state example."""
    sys_ = example_system()
    t0 = time.perf_counter()
    result = synthesize(sys_)
    return sys_, shift_lfr(sys_), result, time.perf_counter() - t0


def test_criterion_01_network_conversion(capsys):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(100):
        act = Activation.relu() if trial % 2 == 0 else Activation.tanh()
        n_hidden = int(rng.integers(1, 4))
        widths = [int(rng.integers(1, 9)) for _ in range(n_hidden + 2)]
        layers = tuple(
            (rng.normal(size=(widths[i + 1], widths[i])), rng.normal(size=widths[i + 1]))
            for i in range(len(widths) - 1)
        )
        mlp = Mlp(layers=layers, activation=act)
        inn = mlp_to_inn(mlp)
        for x in rng.normal(size=(100, widths[0])):
            dev = np.abs(evaluate_inn(inn, x)[0] - evaluate_mlp(mlp, x)).max()
            worst = max(worst, float(dev))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 10.0
    _report(
        capsys, ok,
        f"criterion 1: feedforward-to-implicit conversion, 100 nets x 100 inputs "
        f"(max deviation {worst:.2e} <= 1e-10, {dt:.1f}s < 10s)",
    )


def test_criterion_02_lfr_exactness(capsys):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst_step = 0.0
    worst_fix = 0.0
    for trial in range(50):
        sys_ = random_plant(
            rng,
            l=int(rng.integers(1, 4)),
            m=int(rng.integers(1, 3)),
            k_phi=int(rng.integers(0, 7)),
            k_psi=int(rng.integers(0, 7)),
            star=bool(trial % 2),
        )
        lfr = build_lfr(sys_)
        for _ in range(10):
            z = sys_.z_star + rng.uniform(-1.0, 1.0, sys_.l)
            u = sys_.u_star + rng.uniform(-1.0, 1.0, sys_.m)
            err = np.abs(close_unshifted(lfr, z, u) - step_direct(sys_, z, u)).max()
            worst_step = max(worst_step, float(err))
        shifted = shift_lfr(sys_)
        fix = np.abs(close_shifted(shifted, sys_.z_star, sys_.u_star)).max()
        worst_fix = max(worst_fix, float(fix))
    dt = time.perf_counter() - t0
    ok = worst_step <= 1e-9 and worst_fix <= 1e-9 and dt < 30.0
    _report(
        capsys, ok,
        f"criterion 2: closed reformulation equals the direct step on 50 random "
        f"plants (step {worst_step:.2e} <= 1e-9, equilibrium fixed point "
        f"{worst_fix:.2e} <= 1e-9, {dt:.1f}s < 30s)",
    )


def test_criterion_03_slope_increment_constraint(capsys):
    rng = np.random.default_rng(303)
    cases = [
        ("relu", lambda x: np.maximum(x, 0.0), 0.0, 1.0),
        ("tanh", np.tanh, 0.0, 1.0),
        ("sigmoid", lambda x: 1.0 / (1.0 + np.exp(-x)), 0.0, 0.25),
    ]
    mins = {}
    for name, fn, a, b in cases:
        Q2 = delta_qc_blocks(np.array([1.0]), a, b)
        x1 = rng.uniform(-8.0, 8.0, 10_000)
        dv = np.where(
            rng.uniform(size=10_000) < 0.5,
            rng.uniform(-4.0, 4.0, 10_000),
            rng.normal(0.0, 1e-3, 10_000),
        )
        dw = fn(x1 + dv) - fn(x1)
        pairs = np.stack([dw, dv], axis=1)
        vals = np.einsum("ni,ij,nj->n", pairs, Q2, pairs)
        mins[name] = float(vals.min())
    ok = all(v >= -1e-12 for v in mins.values())
    detail = ", ".join(f"{k} {v:.2e}" for k, v in mins.items())
    _report(
        capsys, ok,
        f"criterion 3: slope increment constraint nonnegative on 10^4 sampled "
        f"pairs per activation ({detail}, all >= -1e-12)",
    )


def test_criterion_04_bilinear_channel_membership(capsys):
    rng = np.random.default_rng(404)
    m = 2
    region = RegionZ.ball(np.array([0.15, -0.3]), 0.8)
    worst_inside = np.inf
    for _ in range(1000):
        x = rng.standard_normal((m, m))
        Lam = x @ x.T
        d = rng.standard_normal(2)
        d *= 0.8 * rng.uniform() ** 0.5 / np.linalg.norm(d)
        sel = np.vstack([np.kron(d[:, None], np.eye(m)), np.eye(m)])
        M = sel.T @ bilinear_qc_blocks(region, Lam, m) @ sel
        worst_inside = min(worst_inside, float(np.linalg.eigvalsh(M).min()))
    n_violated = 0
    for _ in range(100):
        d = rng.standard_normal(2)
        d *= 0.8 * rng.uniform(1.01, 3.0) / np.linalg.norm(d)
        sel = np.vstack([np.kron(d[:, None], np.eye(m)), np.eye(m)])
        M = sel.T @ bilinear_qc_blocks(region, np.eye(m), m) @ sel
        n_violated += np.linalg.eigvalsh(M).min() < 0.0
    ok = worst_inside >= -1e-10 and n_violated == 100
    _report(
        capsys, ok,
        f"criterion 4: region-shaped channel constraint holds inside the ball "
        f"(min eig {worst_inside:.2e} >= -1e-10 over 10^3 points) and fails "
        f"outside ({n_violated}/100 violations with identity weighting)",
    )


def test_criterion_05_multiplier_inversion(capsys):
    rng = np.random.default_rng(505)
    slope_pairs = [(0.0, 1.0), (-0.7, 1.3), (0.0, 0.25)]
    worst_inv = 0.0
    worst_fact = 0.0
    for trial in range(50):
        l = int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        dims = LfrDims(l=l, m=m, k_phi=int(rng.integers(0, 4)),
                       k_psi=int(rng.integers(0, 3)))
        a, b = slope_pairs[trial % 3]
        region = RegionZ.ball(0.3 * rng.standard_normal(l), float(rng.uniform(0.4, 1.5)))
        x_m = rng.standard_normal((m, m))
        x_k = rng.standard_normal((dims.k_psi, dims.k_psi))
        mv = MultiplierVars(
            Lambda_m=x_m @ x_m.T + 0.5 * np.eye(m),
            Lambda_kpsi=x_k @ x_k.T + 0.5 * np.eye(dims.k_psi),
            T_kphi=rng.uniform(0.2, 2.0, dims.k_phi),
            T_lkpsi=rng.uniform(0.2, 2.0, dims.lkpsi),
        )
        Q, S, R = assemble_combined(mv, region, dims, a, b)
        Qt, St, Rt = invert_combined(mv, region, dims, a, b)
        fwd = np.block([[Q, S], [S.T, R]])
        bwd = np.block([[Qt, St], [St.T, Rt]])
        worst_inv = max(worst_inv, float(np.abs(fwd @ bwd - np.eye(fwd.shape[0])).max()))
        S_L, S_R = factor_s_tilde((Qt, St, Rt), mv, region, dims, a, b)
        worst_fact = max(worst_fact, float(np.abs(S_L @ S_R - St).max()))

    # Scalar network channel against the hand-inverted 2x2.
    t = 1.7
    dims1 = LfrDims(l=1, m=1, k_phi=1, k_psi=0)
    reg1 = RegionZ.ball(np.zeros(1), 1.0)
    mv1 = MultiplierVars(
        Lambda_m=np.eye(1), Lambda_kpsi=np.zeros((0, 0)),
        T_kphi=np.array([t]), T_lkpsi=np.zeros(0),
    )
    Qt, St, Rt = invert_combined(mv1, reg1, dims1, 0.0, 1.0)
    hand = np.array([[0.0, 1.0 / t], [1.0 / t, 2.0 / t]])
    got = np.array([[Qt[1, 1], St[1, 1]], [St[1, 1], Rt[1, 1]]])
    scalar_err = float(np.abs(got - hand).max())

    ok = worst_inv <= 1e-8 and scalar_err <= 1e-12 and worst_fact <= 1e-10
    _report(
        capsys, ok,
        f"criterion 5: closed-form multiplier inverses on 50 random sets "
        f"(product vs identity {worst_inv:.2e} <= 1e-8, scalar channel vs hand "
        f"inverse {scalar_err:.2e} <= 1e-12, coupling factorization "
        f"{worst_fact:.2e} <= 1e-10)",
    )


def test_criterion_06_synthesis_soundness(capsys, desk_runs):
    runs, elapsed = desk_runs
    checks = []
    for name, (sys_, lfr, result) in runs.items():
        checks.append(
            result.solver_status == "optimal"
            and result.left_min_eig >= result.eps / 2
            and result.right_max_eig <= 1e-8
            and result.gain_residual <= 1e-9
            and result.primal_min_eig is not None
            and result.primal_min_eig > 0.0
        )
    modes = {result.mode for _, _, result in runs.values()}
    ok = all(checks) and len(runs) >= 5 and elapsed < 300.0
    _report(
        capsys, ok,
        f"criterion 6: synthesis sound on {sum(checks)}/{len(runs)} desk plants, "
        f"modes {sorted(modes)} (margins >= eps/2, coupling <= 1e-8, gain "
        f"relations <= 1e-9, primal certificate positive, {elapsed:.1f}s < 300s)",
    )


def test_criterion_07_closed_loop_certification(capsys, desk_runs):
    runs, _ = desk_runs
    rng = np.random.default_rng(707)
    total = 0
    bad_viol = 0
    bad_exit = 0
    bad_decay = 0
    for name, (sys_, lfr, result) in runs.items():
        ctrl = from_synthesis(result, lfr)
        starts = sample_lyapunov_set(result.P, sys_.z_star, rng, 100)
        for z0 in starts:
            traj = rollout(sys_, ctrl, z0, horizon=200, P=result.P)
            rep = verify_run(traj, sys_.region)
            total += 1
            bad_viol += bool(rep.decrease_violations)
            bad_exit += bool(rep.region_exits)
            bad_decay += not (rep.decay_rate < 1.0)
    ok = total == 600 and bad_viol == 0 and bad_exit == 0 and bad_decay == 0
    _report(
        capsys, ok,
        f"criterion 7: {total} certified rollouts, horizon 200 "
        f"({bad_viol} decrease violations, {bad_exit} region exits, "
        f"{bad_decay} trajectories with decay rate >= 1)",
    )


def test_criterion_08_flagship_reproduction(capsys, flagship_run):
    sys_, lfr, result, synth_s = flagship_run
    t0 = time.perf_counter()
    cert = roa(result, sys_.region)

    ctrl = from_synthesis(result, lfr)
    rng = np.random.default_rng(808)
    starts = sample_lyapunov_set(result.P, sys_.z_star, rng, 12)
    n_converged = 0
    peaks, decays = [], []
    for z0 in starts:
        traj = rollout(sys_, ctrl, z0, horizon=200, P=result.P)
        rep = verify_run(traj, sys_.region)
        n_converged += rep.converged
        peaks.append(float(np.abs(traj.states - ctrl.z_star).max()))
        decays.append(rep.decay_rate)

    base_sys = strip_networks(sys_)
    base_result = synthesize(base_sys)
    base_ctrl = from_synthesis(base_result, shift_lfr(base_sys))
    worse = 0
    for i, z0 in enumerate(starts):
        try:
            btraj = rollout_baseline(sys_, base_ctrl, z0, horizon=200, P=result.P)
        except NoConvergence:
            worse += 1
            continue
        brep = verify_run(btraj, sys_.region)
        bpeak = float(np.abs(btraj.states - ctrl.z_star).max())
        worse += bpeak > peaks[i] + 1e-9 or brep.decay_rate > decays[i] + 1e-9
    elapsed = synth_s + (time.perf_counter() - t0)
    ok = (
        result.solver_status == "optimal"
        and cert.containment_margin >= 0.0
        and n_converged >= 10
        and worse >= 1
        and elapsed < 600.0
    )
    _report(
        capsys, ok,
        f"criterion 8: flagship example feasible (trace {result.trace_P:.4g}), "
        f"{n_converged}/12 sampled starts converge, network-ignoring baseline "
        f"worse on {worse}/12 starts, {elapsed:.0f}s < 600s",
    )


def test_criterion_09_infeasibility_honesty(capsys, tmp_path):
    from nflsynth.cli import EXIT_INFEASIBLE, main

    sys_ = unstabilizable_system()
    with pytest.raises(Infeasible):
        synthesize(sys_)
    save_json(plant_to_obj(sys_), tmp_path / "plant.json")
    save_json({"kind": "config", "plant": "plant.json"}, tmp_path / "config.json")
    code = main(["synthesize", "--config", str(tmp_path / "config.json"),
                 "--out", str(tmp_path)])
    ok = code == EXIT_INFEASIBLE and not (tmp_path / "result.json").exists()
    _report(
        capsys, ok,
        f"criterion 9: unstabilizable plant reports infeasible "
        f"(raises and exits {code} = 3, no certificate written)",
    )


def test_criterion_10_determinism(capsys, desk_runs, flagship_run):
    def masked(result, lfr, region):
        obj = result_to_obj(result, lfr, region)
        obj.pop("wall_time_s")
        return dumps_canonical(obj)

    runs, _ = desk_runs
    identical = []
    for name, (sys_, lfr, result) in runs.items():
        again = synthesize(sys_)
        identical.append(masked(result, lfr, sys_.region) == masked(again, lfr, sys_.region))

    sys_, lfr, result, _ = flagship_run
    again = synthesize(sys_)
    flagship_same = masked(result, lfr, sys_.region) == masked(again, lfr, sys_.region)

    ok = all(identical) and flagship_same
    _report(
        capsys, ok,
        f"criterion 10: repeated synthesis byte-identical on "
        f"{sum(identical)}/{len(identical)} desk plants and the flagship "
        f"({'yes' if flagship_same else 'NO'}), timing field masked",
    )
