"""Command-line entry point.

Subcommands: convert (feedforward weights to implicit form), synthesize
(solve the design problem for a configured plant), simulate (closed-loop
rollouts from sampled initial conditions), verify (independent re-check of a
result file), example (the built-in flagship fixture).

Exit codes: 0 success, 2 input error, 3 infeasible design, 4 numerical
failure or failed verification.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .backend import select_backend
from .errors import (
    ContainmentViolation,
    Infeasible,
    MixedActivation,
    NflsynthError,
    NoConvergence,
    NonFinite,
    NumericalFailure,
    ParseError,
    ShapeMismatch,
    Singular,
    UnsupportedSlopeBounds,
)
from .lfr import shift_lfr
from .linalg import max_eig, min_eig
from .multiplier import sample_delta_qc
from .neural import mlp_to_inn, zero_inn
from .serialize import (
    controller_from_result,
    inn_to_obj,
    load_json,
    load_network,
    load_result,
    mlp_to_obj,
    obj_to_inn,
    obj_to_mlp,
    obj_to_region,
    plant_to_obj,
    result_to_obj,
    save_json,
    save_trajectory_csv,
)
from .simulate import HORIZON_DEFAULT, rollout, rollout_baseline, sample_lyapunov_set, verify_run
from .synthesis import (
    SynthesisOptions,
    SynthesisResult,
    build_lmi_matrices,
    cross_check_primal,
    decision_vars_from_result,
    roa,
    synthesize,
)
from .system import BilinearNfl, RegionZ, region_contains, strip_networks

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

SEED_DEFAULT = 42


@dataclass(frozen=True)
class ProjectConfig:
    """Everything a run needs: where the model lives and how to solve it."""

    plant_path: Path
    phi_path: Path | None = None
    psi_paths: tuple[Path, ...] | None = None
    region: RegionZ | None = None
    z_star: np.ndarray | None = None
    u_star: np.ndarray | None = None
    eps: float = 1e-7
    objective: str = "trace-p"
    multiplier_class: str = "diagonal"
    backend_name: str | None = None
    horizon: int = HORIZON_DEFAULT
    n_initial: int = 20
    seed: int = SEED_DEFAULT


def load_config(path) -> ProjectConfig:
    p = Path(path)
    obj = load_json(p)
    if not isinstance(obj, dict) or obj.get("kind") != "config":
        raise ParseError(f"{p}: config file must have kind 'config'")
    base = p.parent

    def resolve(rel):
        q = Path(rel)
        return q if q.is_absolute() else base / q

    plant = obj.get("plant")
    if not plant:
        raise ParseError(f"{p}: config needs a 'plant' entry")
    phi = obj.get("phi")
    psi = obj.get("psi")
    region = obj.get("region")
    eq = obj.get("equilibrium") or {}
    syn = obj.get("synthesis") or {}
    sim = obj.get("simulation") or {}
    cfg = ProjectConfig(
        plant_path=resolve(plant),
        phi_path=resolve(phi) if phi else None,
        psi_paths=tuple(resolve(q) for q in psi) if psi else None,
        region=obj_to_region(region) if region else None,
        z_star=np.asarray(eq["z_star"], dtype=float) if "z_star" in eq else None,
        u_star=np.asarray(eq["u_star"], dtype=float) if "u_star" in eq else None,
        eps=float(syn.get("eps", 1e-7)),
        objective=str(syn.get("objective", "trace-p")),
        multiplier_class=str(syn.get("multiplier", "diagonal")),
        backend_name=syn.get("backend"),
        horizon=int(sim.get("horizon", HORIZON_DEFAULT)),
        n_initial=int(sim.get("n_initial", 20)),
        seed=int(sim.get("seed", SEED_DEFAULT)),
    )
    if not cfg.plant_path.exists():
        raise ParseError(f"plant file does not exist: {cfg.plant_path}")
    return cfg


def build_plant(cfg: ProjectConfig) -> BilinearNfl:
    """Assemble the plant: the plant file provides the matrices; networks,
    region, and equilibrium may come inline or from the config."""
    obj = load_json(cfg.plant_path)
    if not isinstance(obj, dict) or obj.get("kind") != "plant":
        raise ParseError(f"{cfg.plant_path}: plant file must have kind 'plant'")
    try:
        l = int(obj["l"])
        m = int(obj["m"])
        A0 = np.asarray(obj["A0"], dtype=float).reshape(l, l)
        B0 = np.asarray(obj["B0"], dtype=float).reshape(l, m)
        D = np.asarray(obj["D_tilde"], dtype=float).reshape(l, l * m)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{cfg.plant_path}: bad plant matrices ({exc})") from exc

    if cfg.phi_path is not None:
        phi = load_network(cfg.phi_path)
    elif "phi" in obj and obj["phi"] is not None:
        phi = obj_to_inn(obj["phi"])
    else:
        phi = zero_inn(l, m)

    if cfg.psi_paths is not None:
        psi = tuple(load_network(q) for q in cfg.psi_paths)
    elif "psi_cols" in obj and obj["psi_cols"] is not None:
        psi = tuple(obj_to_inn(o) for o in obj["psi_cols"])
    else:
        psi = tuple(zero_inn(l, m) for _ in range(l))

    if cfg.region is not None:
        region = cfg.region
    elif "region" in obj and obj["region"] is not None:
        region = obj_to_region(obj["region"])
    else:
        raise ParseError("no region given in config or plant file")

    z_star = cfg.z_star if cfg.z_star is not None else np.asarray(
        obj.get("z_star", np.zeros(l)), dtype=float)
    u_star = cfg.u_star if cfg.u_star is not None else np.asarray(
        obj.get("u_star", np.zeros(m)), dtype=float)
    return BilinearNfl(
        A0=A0, B0=B0, D_tilde=D, phi=phi, psi_cols=psi,
        z_star=z_star, u_star=u_star, region=region,
    )


def _apply_overrides(cfg: ProjectConfig, args) -> ProjectConfig:
    fields = {}
    if getattr(args, "eps", None) is not None:
        fields["eps"] = args.eps
    if getattr(args, "multiplier", None) is not None:
        fields["multiplier_class"] = args.multiplier
    if getattr(args, "objective", None) is not None:
        fields["objective"] = args.objective
    if getattr(args, "seed", None) is not None:
        fields["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        fields["horizon"] = args.horizon
    return replace(cfg, **fields) if fields else cfg


def _synthesis_options(cfg: ProjectConfig) -> SynthesisOptions:
    backend = select_backend(cfg.backend_name) if cfg.backend_name else None
    return SynthesisOptions(
        eps=cfg.eps, objective=cfg.objective,
        multiplier_class=cfg.multiplier_class, backend=backend,
    )


def cmd_convert(args) -> int:
    mlp = obj_to_mlp(load_json(args.weights_in))
    inn = mlp_to_inn(mlp)
    save_json(inn_to_obj(inn), args.inn_out)
    triangular = bool(np.all(np.tril(inn.F) == 0.0))
    print(f"wrote {args.inn_out}")
    print(
        f"state dim k = {inn.state_dim}, input dim m = {inn.input_dim}, "
        f"output dim p = {inn.output_dim}"
    )
    print(f"F strictly upper triangular: {'yes' if triangular else 'NO'}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    plant = build_plant(cfg)
    opts = _synthesis_options(cfg)
    result = synthesize(plant, opts)
    lfr = shift_lfr(plant)
    out_dir = Path(args.out) if args.out else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "result.json"
    save_json(result_to_obj(result, lfr, plant.region), out_path)
    print(f"wrote {out_path}")
    print(f"status: {result.solver_status} (mode {result.mode}, backend {result.backend_name})")
    print(f"trace(P) = {result.trace_P:.6g}, nu = {result.nu:.6g}")
    print(
        f"margins: main {result.left_min_eig:.3e}, region {result.right_max_eig:.3e}, "
        f"gains {result.gain_residual:.3e}, primal {result.primal_min_eig:.3e}"
    )
    return EXIT_OK


def _simulate_one(plant, ctrl, z0, horizon, P, runner):
    try:
        traj = runner(plant, ctrl, z0, horizon=horizon, P=P)
        return traj, None
    except NoConvergence as exc:
        return None, str(exc)


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    plant = build_plant(cfg)
    res_obj = load_result(args.result)
    ctrl = controller_from_result(res_obj)
    P = res_obj["P"]
    out_dir = Path(args.out) if args.out else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(cfg.seed)
    z0s = sample_lyapunov_set(P, ctrl.z_star, rng, cfg.n_initial)

    baseline_ctrl = None
    baseline_note = None
    baseline_P = None
    if args.baseline:
        stripped = strip_networks(plant)
        try:
            base_result = synthesize(stripped, _synthesis_options(cfg))
            base_lfr = shift_lfr(stripped)
            from .controller import from_synthesis

            baseline_ctrl = from_synthesis(base_result, base_lfr)
            baseline_P = base_result.P
        except (Infeasible, NumericalFailure) as exc:
            baseline_note = f"baseline synthesis failed: {exc}"

    records = []
    base_records = []
    for i, z0 in enumerate(z0s):
        rec = {"index": i, "z0": z0, "file": None, "solver_failed": False, "error": None,
               "start_in_region": region_contains(plant.region, z0)}
        traj, err = _simulate_one(plant, ctrl, z0, cfg.horizon, P, rollout)
        if traj is None:
            rec["solver_failed"] = True
            rec["error"] = err
        else:
            fname = f"traj_{i:03d}.csv"
            save_trajectory_csv(traj, out_dir / fname)
            report = verify_run(traj, plant.region)
            rec.update({
                "file": fname,
                "converged": report.converged,
                "decrease_violations": list(report.decrease_violations),
                "region_exits": list(report.region_exits),
                "max_controller_iterations": report.max_controller_iterations,
                "decay_rate": report.decay_rate,
                "peak_deviation": float(np.max(np.abs(traj.states - ctrl.z_star))),
            })
        records.append(rec)

        if baseline_ctrl is not None:
            brec = {"index": i, "file": None, "solver_failed": False, "error": None}
            btraj, berr = _simulate_one(
                plant, baseline_ctrl, z0, cfg.horizon, baseline_P, rollout_baseline
            )
            if btraj is None:
                brec["solver_failed"] = True
                brec["error"] = berr
            else:
                bname = f"baseline_{i:03d}.csv"
                save_trajectory_csv(btraj, out_dir / bname)
                breport = verify_run(btraj, plant.region)
                brec.update({
                    "file": bname,
                    "converged": breport.converged,
                    "region_exits": list(breport.region_exits),
                    "decay_rate": breport.decay_rate,
                    "peak_deviation": float(np.max(np.abs(btraj.states - ctrl.z_star))),
                })
            base_records.append(brec)

    ok = [r for r in records if not r["solver_failed"]]
    report_obj = {
        "kind": "simulation_report",
        "n_trajectories": len(records),
        "horizon": cfg.horizon,
        "seed": cfg.seed,
        "trajectories": records,
        "total_decrease_violations": sum(len(r.get("decrease_violations", [])) for r in ok),
        "total_region_exits": sum(len(r.get("region_exits", [])) for r in ok),
        "solver_failures": sum(1 for r in records if r["solver_failed"]),
    }
    if args.baseline:
        report_obj["baseline"] = {
            "note": baseline_note,
            "trajectories": base_records,
        }
    save_json(report_obj, out_dir / "report.json")
    print(f"wrote {len(ok)} trajectories and report.json to {out_dir}")
    if report_obj["solver_failures"]:
        print(f"{report_obj['solver_failures']} controller solves failed (see report)")
    print(
        f"decrease violations: {report_obj['total_decrease_violations']}, "
        f"region exits: {report_obj['total_region_exits']}"
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    plant = build_plant(cfg)
    res_obj = load_result(args.result)
    region = res_obj["region"]
    d = res_obj["dims"]
    g = res_obj["gains"]
    mu = res_obj["multipliers"]
    r = res_obj["residuals"]
    result = SynthesisResult(
        P=res_obj["P"],
        K_z=g["K_z"].reshape(d.m, d.l),
        K_u=g["K_u"].reshape(d.m, d.lm),
        K_wpsi=g["K_wpsi"].reshape(d.m, d.l2kpsi),
        K_phi=g["K_phi"].reshape(d.m, d.k_phi),
        K_psi=g["K_psi"].reshape(d.m, d.lkpsi),
        Lambda_m_t=mu["Lambda_m_tilde"].reshape(d.m, d.m),
        Lambda_kpsi_t=mu["Lambda_kpsi_tilde"].reshape(d.k_psi, d.k_psi),
        T_kphi_t=mu["T_kphi_tilde"].reshape(d.k_phi),
        T_lkpsi_t=mu["T_lkpsi_tilde"].reshape(d.lkpsi),
        nu=res_obj["nu"],
        solver_status=res_obj["solver_status"],
        left_min_eig=r["left_min_eig"],
        right_max_eig=r["right_max_eig"],
        gain_residual=r["gain_residual"],
        trace_P=res_obj["trace_P"],
        mode=res_obj["mode"],
        eps=res_obj["eps"],
        objective=res_obj["objective"],
        multiplier_class=res_obj["multiplier_class"],
        backend_name=res_obj["backend"],
        dims=d,
        alpha=res_obj["alpha"],
        beta=res_obj["beta"],
        wall_time_s=res_obj["wall_time_s"],
        primal_min_eig=r.get("primal_min_eig"),
    )
    lfr = shift_lfr(plant)
    if lfr.dims != d:
        raise ParseError(
            f"result dims {d} do not match the configured plant {lfr.dims}"
        )

    checks = []
    dv = decision_vars_from_result(result, region)
    main, region_block = build_lmi_matrices(lfr, region, dv, stacker="numpy")
    left = min_eig(main)
    right = max_eig(region_block)
    checks.append(("main inequality margin >= eps/2", left >= result.eps / 2, left))
    checks.append(("region coupling <= 1e-8", right <= 1e-8, right))

    primal = cross_check_primal(result, lfr, region)
    checks.append(("primal certificate positive", primal > 0.0, primal))

    try:
        cert = roa(result, region, n_samples=1000, seed=cfg.seed)
        checks.append(("attraction set inside region", True, cert.containment_margin))
    except ContainmentViolation as exc:
        checks.append(("attraction set inside region", False, str(exc)))

    if d.k_phi + d.lkpsi > 0:
        qc_min = sample_delta_qc(
            lfr.activation, result.alpha, result.beta, n=10_000, seed=cfg.seed
        )
        checks.append(("sampled slope constraint valid", qc_min >= -1e-12, qc_min))

    all_ok = True
    for name, ok, value in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name} ({value})")
        all_ok = all_ok and ok
    return EXIT_OK if all_ok else EXIT_NUMERICAL


def cmd_example(args) -> int:
    from .fixtures import build_networks, example_matrices, example_system

    plant = example_system()
    lfr_dims = shift_lfr(plant).dims
    print("flagship example: 4 states, 2 inputs")
    print(
        f"network channels: k_phi = {plant.k_phi}, k_psi = {plant.k_psi} "
        f"(stacked psi state {lfr_dims.lkpsi})"
    )
    print(f"channel widths: m_c = {lfr_dims.m_c}, n_c = {lfr_dims.n_c}")
    print(f"operating region: ball of radius {np.sqrt(plant.region.R_z):.4g}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_json(plant_to_obj(plant), out_dir / "example_plant.json")
        for i, mlp in enumerate(build_networks()):
            save_json(mlp_to_obj(mlp), out_dir / f"example_psi_{i}.json")
        config = {
            "kind": "config",
            "plant": "example_plant.json",
            "synthesis": {"eps": 1e-7, "objective": "trace-p", "multiplier": "diagonal"},
            "simulation": {"horizon": 200, "n_initial": 20, "seed": SEED_DEFAULT},
        }
        save_json(config, out_dir / "example_config.json")
        save_json(dict(example_matrices()), out_dir / "example_matrices.json")
        print(f"wrote example files to {out_dir}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nflsynth",
        description="Controller synthesis for bilinear systems with neural "
        "networks in the loop",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="feedforward weight file -> implicit network file")
    p.add_argument("weights_in")
    p.add_argument("inn_out")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synthesize", help="solve the design problem for a configured plant")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--multiplier", choices=["scalar", "diagonal"], default=None)
    p.add_argument("--objective", choices=["trace-p", "feasibility"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="closed-loop rollouts from sampled starts")
    p.add_argument("--config", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="re-check a result file against its plant")
    p.add_argument("--config", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("example", help="inspect or export the built-in fixture")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_example)

    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ShapeMismatch, MixedActivation, UnsupportedSlopeBounds,
            FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalFailure, Singular, NonFinite, NoConvergence,
            ContainmentViolation) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NflsynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
