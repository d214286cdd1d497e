"""File formats: canonical JSON for models and results, delimited text for
trajectories.

Every format is plain structured text with explicit dimension fields and
row-major matrices. Floats are written with 17 significant digits, so a
write/read cycle reproduces every value bit for bit and repeated runs can be
compared as text.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import NonFinite, ParseError
from .lfr import LfrDims, ShiftedLfr
from .neural import Activation, Inn, Mlp
from .simulate import Trajectory
from .synthesis import SynthesisResult
from .system import BilinearNfl, RegionZ

FLOAT_FMT = ".17g"


def _fmt_float(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise NonFinite(f"cannot serialize non-finite value {x}")
    if x == 0.0 and np.signbit(x):
        # %g writes "-0", which JSON readers parse as integer zero.
        return "-0.0"
    return format(x, FLOAT_FMT)


def dumps_canonical(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, fixed separators, 17-digit floats.

    Lists of plain numbers stay on one line so matrices read row by row.
    """
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps_canonical(obj.tolist(), indent)
    if isinstance(obj, (list, tuple)):
        items = list(obj)
        if not items:
            return "[]"
        if all(isinstance(v, (int, float, bool, np.integer, np.floating)) for v in items):
            return "[" + ", ".join(dumps_canonical(v) for v in items) + "]"
        body = ",\n".join(inner + dumps_canonical(v, indent + 1) for v in items)
        return "[\n" + body + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(
            f"{inner}{json.dumps(str(k))}: {dumps_canonical(v, indent + 1)}"
            for k, v in sorted(obj.items())
        )
        return "{\n" + body + "\n" + pad + "}"
    raise ParseError(f"cannot serialize object of type {type(obj).__name__}")


def save_json(obj, path) -> None:
    Path(path).write_text(dumps_canonical(obj) + "\n")


def load_json(path):
    p = Path(path)
    if not p.exists():
        raise ParseError(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {p}: {exc}") from exc


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}: missing key {key!r}")
    return obj[key]


def _as_array(obj, where: str) -> np.ndarray:
    try:
        return np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: expected a numeric array") from exc


# -- activations -------------------------------------------------------------

def activation_to_obj(act: Activation):
    if act.kind == "custom":
        return {"kind": "custom", "name": act.name, "alpha": act.alpha, "beta": act.beta}
    return act.kind


def obj_to_activation(obj) -> Activation:
    if isinstance(obj, str):
        try:
            return {"relu": Activation.relu, "tanh": Activation.tanh,
                    "sigmoid": Activation.sigmoid}[obj]()
        except KeyError:
            raise ParseError(f"unknown activation {obj!r}") from None
    if isinstance(obj, dict) and obj.get("kind") == "custom":
        name = _require(obj, "name", "activation")
        try:
            return Activation.custom(name, _require(obj, "alpha", "activation"),
                                     _require(obj, "beta", "activation"))
        except ValueError as exc:
            raise ParseError(
                f"custom activation {name!r} must be registered before loading "
                f"(register_custom_activation): {exc}"
            ) from exc
    raise ParseError(f"malformed activation spec: {obj!r}")


# -- networks ----------------------------------------------------------------

def mlp_to_obj(mlp: Mlp) -> dict:
    return {
        "kind": "mlp",
        "activation": activation_to_obj(mlp.activation),
        "input_dim": mlp.input_dim,
        "output_dim": mlp.output_dim,
        "hidden_widths": list(mlp.hidden_widths),
        "layers": [{"W": W, "b": b} for W, b in mlp.layers],
    }


def obj_to_mlp(obj) -> Mlp:
    if not isinstance(obj, dict) or obj.get("kind") != "mlp":
        raise ParseError("weight file must have kind 'mlp'")
    layers = _require(obj, "layers", "mlp")
    if not isinstance(layers, list) or not layers:
        raise ParseError("mlp: 'layers' must be a non-empty list")
    pairs = tuple(
        (_as_array(_require(lay, "W", f"mlp layer {i}"), f"mlp layer {i} W"),
         _as_array(_require(lay, "b", f"mlp layer {i}"), f"mlp layer {i} b"))
        for i, lay in enumerate(layers)
    )
    mlp = Mlp(layers=pairs, activation=obj_to_activation(_require(obj, "activation", "mlp")))
    for key, got in (("input_dim", mlp.input_dim), ("output_dim", mlp.output_dim)):
        if key in obj and obj[key] != got:
            raise ParseError(f"mlp: declared {key}={obj[key]} but layers give {got}")
    return mlp


def inn_to_obj(inn: Inn) -> dict:
    return {
        "kind": "inn",
        "activation": activation_to_obj(inn.activation),
        "state_dim": inn.state_dim,
        "input_dim": inn.input_dim,
        "output_dim": inn.output_dim,
        "F": inn.F, "G": inn.G, "H": inn.H, "J": inn.J,
        "b_x": inn.b_x, "b_y": inn.b_y,
        "wellposed_by_structure": inn.wellposed_by_structure,
        "block_dims": None if inn.block_dims is None else list(inn.block_dims),
    }


def obj_to_inn(obj) -> Inn:
    if not isinstance(obj, dict) or obj.get("kind") != "inn":
        raise ParseError("network file must have kind 'inn'")
    k = int(_require(obj, "state_dim", "inn"))
    m = int(_require(obj, "input_dim", "inn"))
    p = int(_require(obj, "output_dim", "inn"))
    bd = obj.get("block_dims")
    return Inn(
        F=_as_array(_require(obj, "F", "inn"), "inn F").reshape(k, k),
        G=_as_array(_require(obj, "G", "inn"), "inn G").reshape(k, m),
        H=_as_array(_require(obj, "H", "inn"), "inn H").reshape(p, k),
        J=_as_array(_require(obj, "J", "inn"), "inn J").reshape(p, m),
        b_x=_as_array(_require(obj, "b_x", "inn"), "inn b_x").reshape(k),
        b_y=_as_array(_require(obj, "b_y", "inn"), "inn b_y").reshape(p),
        activation=obj_to_activation(_require(obj, "activation", "inn")),
        wellposed_by_structure=bool(obj.get("wellposed_by_structure", False)),
        block_dims=None if bd is None else tuple(int(v) for v in bd),
    )


def load_network(path) -> Inn:
    """Load an INN file, converting transparently when given MLP weights."""
    from .neural import mlp_to_inn

    obj = load_json(path)
    kind = obj.get("kind") if isinstance(obj, dict) else None
    if kind == "inn":
        return obj_to_inn(obj)
    if kind == "mlp":
        return mlp_to_inn(obj_to_mlp(obj))
    raise ParseError(f"{path}: expected kind 'mlp' or 'inn', got {kind!r}")


# -- regions and plants ------------------------------------------------------

def region_to_obj(region: RegionZ) -> dict:
    return {"Q_z": region.Q_z, "S_z": region.S_z, "R_z": region.R_z,
            "center": region.center}


def obj_to_region(obj) -> RegionZ:
    if not isinstance(obj, dict):
        raise ParseError("region spec must be a mapping")
    center = _as_array(_require(obj, "center", "region"), "region center")
    if "radius" in obj:
        return RegionZ.ball(center, float(obj["radius"]))
    if "shape" in obj:
        return RegionZ.ellipsoid(center, _as_array(obj["shape"], "region shape"))
    return RegionZ(
        Q_z=_as_array(_require(obj, "Q_z", "region"), "region Q_z"),
        S_z=_as_array(_require(obj, "S_z", "region"), "region S_z"),
        R_z=float(_require(obj, "R_z", "region")),
        center=center,
    )


def plant_to_obj(sys: BilinearNfl) -> dict:
    """Self-contained plant file: matrices, networks inline, region, shift."""
    return {
        "kind": "plant",
        "l": sys.l,
        "m": sys.m,
        "A0": sys.A0,
        "B0": sys.B0,
        "D_tilde": sys.D_tilde,
        "phi": inn_to_obj(sys.phi),
        "psi_cols": [inn_to_obj(net) for net in sys.psi_cols],
        "z_star": sys.z_star,
        "u_star": sys.u_star,
        "region": region_to_obj(sys.region),
    }


def obj_to_plant(obj) -> BilinearNfl:
    if not isinstance(obj, dict) or obj.get("kind") != "plant":
        raise ParseError("plant file must have kind 'plant'")
    l = int(_require(obj, "l", "plant"))
    m = int(_require(obj, "m", "plant"))
    psi = _require(obj, "psi_cols", "plant")
    if not isinstance(psi, list) or len(psi) != l:
        raise ParseError(f"plant: psi_cols must list {l} networks")
    return BilinearNfl(
        A0=_as_array(_require(obj, "A0", "plant"), "plant A0").reshape(l, l),
        B0=_as_array(_require(obj, "B0", "plant"), "plant B0").reshape(l, m),
        D_tilde=_as_array(_require(obj, "D_tilde", "plant"), "plant D_tilde").reshape(l, l * m),
        phi=obj_to_inn(_require(obj, "phi", "plant")),
        psi_cols=tuple(obj_to_inn(net) for net in psi),
        z_star=_as_array(_require(obj, "z_star", "plant"), "plant z_star").reshape(l),
        u_star=_as_array(_require(obj, "u_star", "plant"), "plant u_star").reshape(m),
        region=obj_to_region(_require(obj, "region", "plant")),
    )


# -- synthesis results -------------------------------------------------------

def result_to_obj(result: SynthesisResult, lfr: ShiftedLfr, region: RegionZ) -> dict:
    """Result file: certificate, gains, multipliers, and everything needed to
    rebuild the controller (network blocks and shift data). wall_time_s is the
    single run-dependent key."""
    d = result.dims
    return {
        "kind": "result",
        "dims": {"l": d.l, "m": d.m, "k_phi": d.k_phi, "k_psi": d.k_psi},
        "activation": activation_to_obj(lfr.activation),
        "alpha": result.alpha,
        "beta": result.beta,
        "mode": result.mode,
        "eps": result.eps,
        "objective": result.objective,
        "multiplier_class": result.multiplier_class,
        "backend": result.backend_name,
        "solver_status": result.solver_status,
        "P": result.P,
        "nu": result.nu,
        "trace_P": result.trace_P,
        "gains": {
            "K_z": result.K_z, "K_u": result.K_u, "K_wpsi": result.K_wpsi,
            "K_phi": result.K_phi, "K_psi": result.K_psi,
        },
        "multipliers": {
            "Lambda_m_tilde": result.Lambda_m_t,
            "Lambda_kpsi_tilde": result.Lambda_kpsi_t,
            "T_kphi_tilde": result.T_kphi_t,
            "T_lkpsi_tilde": result.T_lkpsi_t,
        },
        "residuals": {
            "left_min_eig": result.left_min_eig,
            "right_max_eig": result.right_max_eig,
            "gain_residual": result.gain_residual,
            "primal_min_eig": result.primal_min_eig,
        },
        "controller": {
            "F_phi": lfr.F_phi, "G_phi": lfr.G_phi,
            "F_psi": lfr.F_psi, "G_psi": lfr.G_psi,
            "z_star": lfr.z_star, "u_star": lfr.u_star,
            "v_phi_star": lfr.v_phi_star, "v_psi_star": lfr.v_psi_star,
        },
        "region": region_to_obj(region),
        "wall_time_s": result.wall_time_s,
    }


def load_result(path) -> dict:
    """Result file as a dict with arrays restored; see controller_from_result."""
    obj = load_json(path)
    if not isinstance(obj, dict) or obj.get("kind") != "result":
        raise ParseError("result file must have kind 'result'")
    dims_obj = _require(obj, "dims", "result")
    dims = LfrDims(
        l=int(_require(dims_obj, "l", "result dims")),
        m=int(_require(dims_obj, "m", "result dims")),
        k_phi=int(_require(dims_obj, "k_phi", "result dims")),
        k_psi=int(_require(dims_obj, "k_psi", "result dims")),
    )
    g = _require(obj, "gains", "result")
    c = _require(obj, "controller", "result")
    r = _require(obj, "residuals", "result")
    mu = _require(obj, "multipliers", "result")
    out = {
        "dims": dims,
        "activation": obj_to_activation(_require(obj, "activation", "result")),
        "alpha": float(_require(obj, "alpha", "result")),
        "beta": float(_require(obj, "beta", "result")),
        "mode": str(_require(obj, "mode", "result")),
        "eps": float(_require(obj, "eps", "result")),
        "objective": str(_require(obj, "objective", "result")),
        "multiplier_class": str(_require(obj, "multiplier_class", "result")),
        "backend": str(_require(obj, "backend", "result")),
        "solver_status": str(_require(obj, "solver_status", "result")),
        "P": _as_array(_require(obj, "P", "result"), "result P").reshape(dims.l, dims.l),
        "nu": float(_require(obj, "nu", "result")),
        "trace_P": float(_require(obj, "trace_P", "result")),
        "region": obj_to_region(_require(obj, "region", "result")),
        "wall_time_s": float(_require(obj, "wall_time_s", "result")),
        "gains": {k: _as_array(v, f"result gains {k}") for k, v in g.items()},
        "multipliers": {k: _as_array(v, f"result multipliers {k}") for k, v in mu.items()},
        "residuals": {
            k: (None if v is None else float(v)) for k, v in r.items()
        },
        "controller": {k: _as_array(v, f"result controller {k}") for k, v in c.items()},
    }
    return out


def controller_from_result(obj: dict, **solve_opts):
    """Rebuild the implicit controller from a loaded result dict."""
    from .controller import ImplicitController

    d: LfrDims = obj["dims"]
    g = obj["gains"]
    c = obj["controller"]
    return ImplicitController(
        K_z=g["K_z"].reshape(d.m, d.l),
        K_u=g["K_u"].reshape(d.m, d.lm),
        K_wpsi=g["K_wpsi"].reshape(d.m, d.l2kpsi),
        K_phi=g["K_phi"].reshape(d.m, d.k_phi),
        K_psi=g["K_psi"].reshape(d.m, d.lkpsi),
        F_phi=c["F_phi"].reshape(d.k_phi, d.k_phi),
        G_phi=c["G_phi"].reshape(d.k_phi, d.m),
        F_psi=c["F_psi"].reshape(d.lkpsi, d.lkpsi),
        G_psi=c["G_psi"].reshape(d.lkpsi, d.m),
        activation=obj["activation"],
        z_star=c["z_star"].reshape(d.l),
        u_star=c["u_star"].reshape(d.m),
        v_phi_star=c["v_phi_star"].reshape(d.k_phi),
        v_psi_star=c["v_psi_star"].reshape(d.lkpsi),
        dims=d,
        **solve_opts,
    )


# -- trajectories ------------------------------------------------------------

def save_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per recorded state; input and iteration columns hold nan/0 on
    the final row, which has no step after it."""
    l = traj.states.shape[1]
    m = traj.inputs.shape[1]
    cols = (["t"] + [f"z{i}" for i in range(l)] + [f"u{j}" for j in range(m)]
            + ["V", "in_region", "iterations"])
    lines = [",".join(cols)]
    for t in range(traj.steps + 1):
        row = [str(t)]
        row += [format(v, FLOAT_FMT) for v in traj.states[t]]
        if t < traj.steps:
            row += [format(v, FLOAT_FMT) for v in traj.inputs[t]]
        else:
            row += ["nan"] * m
        row.append(format(traj.lyapunov[t], FLOAT_FMT))
        row.append("1" if traj.in_region[t] else "0")
        row.append(str(int(traj.controller_iterations[t])) if t < traj.steps else "0")
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory_csv(path, z_star=None) -> Trajectory:
    p = Path(path)
    if not p.exists():
        raise ParseError(f"no such file: {p}")
    lines = [ln for ln in p.read_text().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ParseError(f"{p}: trajectory file needs a header and rows")
    header = lines[0].split(",")
    l = sum(1 for h in header if h.startswith("z"))
    m = sum(1 for h in header if h.startswith("u"))
    if header != (["t"] + [f"z{i}" for i in range(l)] + [f"u{j}" for j in range(m)]
                  + ["V", "in_region", "iterations"]):
        raise ParseError(f"{p}: unexpected trajectory header")
    rows = [ln.split(",") for ln in lines[1:]]
    steps = len(rows) - 1
    states = np.array([[float(v) for v in r[1 : 1 + l]] for r in rows])
    inputs = np.array([[float(v) for v in r[1 + l : 1 + l + m]] for r in rows[:steps]])
    lyap = np.array([float(r[1 + l + m]) for r in rows])
    member = np.array([r[2 + l + m] == "1" for r in rows])
    iters = np.array([int(r[3 + l + m]) for r in rows[:steps]], dtype=int)
    return Trajectory(
        states=states,
        inputs=inputs.reshape(steps, m),
        lyapunov=lyap,
        in_region=member,
        controller_iterations=iters,
        z_star=np.zeros(l) if z_star is None else z_star,
    )
