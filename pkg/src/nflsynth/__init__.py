"""Controller synthesis for discrete-time bilinear systems with neural
networks in the loop.

Pipeline: feedforward networks are converted to implicit form, the plant is
rewritten as a linear-fractional interconnection whose channels carry the
bilinear and network nonlinearities, quadratic constraints bound those
channels over an operating region, and a semidefinite program produces a
Lyapunov certificate plus the gains of an implicit nonlinear controller.
"""

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
from .neural import (
    Activation,
    Inn,
    Mlp,
    evaluate_inn,
    evaluate_mlp,
    internal_state_at,
    mlp_to_inn,
    register_custom_activation,
    zero_inn,
)
from .system import (
    BilinearNfl,
    RegionZ,
    check_equilibrium,
    region_contains,
    region_sample,
    step_direct,
    strip_networks,
)
from .lfr import (
    LfrDims,
    ShiftedLfr,
    StackedPsi,
    UnshiftedLfr,
    build_lfr,
    close_shifted,
    close_unshifted,
    shift_lfr,
    stack_psi,
)
from .multiplier import (
    CombinedMultiplier,
    MultiplierVars,
    assemble_combined,
    bilinear_qc_blocks,
    combined_multiplier,
    delta_qc_blocks,
    factor_s_tilde,
    invert_combined,
    sample_delta_qc,
)
from .backend import SdpBackend, select_backend
from .synthesis import (
    LmiProblem,
    RoaCertificate,
    SynthesisOptions,
    SynthesisResult,
    assemble_lmis,
    assemble_x_matrices,
    build_lmi_matrices,
    cross_check_primal,
    recover_gains,
    roa,
    solve,
    synthesize,
)
from .controller import ImplicitController, evaluate, from_synthesis, residual
from .simulate import (
    RunReport,
    Trajectory,
    rollout,
    rollout_baseline,
    sample_lyapunov_set,
    verify_run,
)
from .serialize import (
    controller_from_result,
    dumps_canonical,
    inn_to_obj,
    load_json,
    load_network,
    load_result,
    load_trajectory_csv,
    mlp_to_obj,
    obj_to_inn,
    obj_to_mlp,
    obj_to_plant,
    obj_to_region,
    plant_to_obj,
    region_to_obj,
    result_to_obj,
    save_json,
    save_trajectory_csv,
)

__version__ = "0.1.0"

__all__ = [
    "Activation", "BilinearNfl", "CombinedMultiplier", "ContainmentViolation",
    "ImplicitController", "Infeasible", "Inn", "LfrDims", "LmiProblem",
    "MixedActivation", "Mlp", "MultiplierVars", "NflsynthError",
    "NoConvergence", "NonFinite", "NumericalFailure", "ParseError",
    "RegionZ", "RoaCertificate", "RunReport", "SdpBackend", "ShapeMismatch",
    "ShiftedLfr", "Singular", "StackedPsi", "SynthesisOptions",
    "SynthesisResult", "Trajectory", "UnshiftedLfr", "UnsupportedSlopeBounds",
    "assemble_combined", "assemble_lmis", "assemble_x_matrices",
    "bilinear_qc_blocks", "build_lfr", "build_lmi_matrices",
    "check_equilibrium", "close_shifted", "close_unshifted",
    "combined_multiplier", "controller_from_result", "cross_check_primal",
    "delta_qc_blocks", "dumps_canonical", "evaluate", "evaluate_inn",
    "evaluate_mlp", "factor_s_tilde", "from_synthesis", "inn_to_obj",
    "internal_state_at", "invert_combined", "load_json", "load_network",
    "load_result", "load_trajectory_csv", "mlp_to_inn", "mlp_to_obj",
    "obj_to_inn", "obj_to_mlp", "obj_to_plant", "obj_to_region",
    "plant_to_obj", "recover_gains", "region_contains", "region_sample",
    "region_to_obj", "register_custom_activation", "residual", "result_to_obj",
    "roa", "rollout", "rollout_baseline", "sample_delta_qc",
    "sample_lyapunov_set", "save_json", "save_trajectory_csv",
    "select_backend", "shift_lfr", "solve", "stack_psi", "step_direct",
    "strip_networks", "synthesize", "verify_run", "zero_inn",
]
