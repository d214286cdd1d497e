"""Built-in plants: the four-state flagship example, small synthesis test
systems, and deliberately defective systems for error-path coverage.

The flagship example has two scalar input nonlinearities multiplying fixed
direction matrices. The checked-in networks are exact piecewise-linear ReLU
interpolants of those nonlinearities (knot spacing 0.15 around the origin),
shaped [10, 10] with an identity second hidden layer, so the plant is an
exact network-in-the-loop system by definition, not a trained approximation.
Weights live in data/example_fixture.json; build_networks() regenerates them
deterministically.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .neural import Activation, Mlp, evaluate_mlp, mlp_to_inn, register_custom_activation, zero_inn
from .serialize import load_json, obj_to_mlp
from .system import BilinearNfl, RegionZ

CUSTOM_ACT_NAME = "sine-blend"
EXAMPLE_RADIUS = 0.08
# Piecewise-linear knots: three units cover t >= 0, two cover t < 0.
_POS_KNOTS = (0.0, 0.15, 0.3)
_NEG_KNOTS = (0.0, -0.15)


def _sine_blend(x):
    return np.sin(x) + 0.3 * x


# Slope range of sin(x) + 0.3 x is [-0.7, 1.3]: a sign-indefinite interval,
# exercising the full (non-reduced) synthesis path.
register_custom_activation(CUSTOM_ACT_NAME, _sine_blend)


def sine_blend_activation() -> Activation:
    return Activation.custom(CUSTOM_ACT_NAME, -0.7, 1.3)


def g1(t):
    """First reference nonlinearity, exp(t) - 1."""
    return np.exp(t) - 1.0


def g2(t):
    """Second reference nonlinearity, t^3 / (1 + t^2)."""
    t = np.asarray(t, dtype=float)
    return t**3 / (1.0 + t**2)


def example_matrices() -> dict[str, np.ndarray]:
    """The flagship example's coefficient matrices."""
    A = np.array([
        [1.0, 0.3, 0.4, 0.1],
        [1.0, -0.2, 0.0, 0.05],
        [0.0, 1.2, -0.5, 0.02],
        [0.0, 0.0, 0.0, 0.2],
    ])
    B1 = np.zeros((4, 4))
    B1[3, 3] = -0.5
    B2 = np.array([
        [-0.3, 0.0, 0.0, 0.0],
        [0.3, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    B0 = np.array([
        [1.0, 0.0],
        [0.0, 1.0],
        [0.0, 1.0],
        [-1.0, 0.0],
    ])
    C1 = -np.array([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.6, 0.3, 0.3, 1.2],
    ])
    C2 = np.array([
        [-0.3, 0.0, 0.0, 0.0],
        [0.3, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, -0.15, 0.0],
    ])
    return {"A": A, "B0": B0, "B1": B1, "B2": B2, "C1": C1, "C2": C2}


def bilinear_from_input_matrices(B_list) -> np.ndarray:
    """Fold per-input state matrices into the kron-acting coefficient block:
    sum_j u_j B_j z = D (z kron u) with D[:, i*m + j] = B_j[:, i]."""
    B_list = [np.asarray(B, dtype=float) for B in B_list]
    l = B_list[0].shape[0]
    m = len(B_list)
    D = np.zeros((l, l * m))
    for j, Bj in enumerate(B_list):
        for i in range(l):
            D[:, i * m + j] = Bj[:, i]
    return D


def pwl_unit_grid() -> list[tuple[float, float]]:
    """(sign, knot) per ReLU unit: the unit computes relu(sign*t - sign*knot)."""
    return [(1.0, k) for k in _POS_KNOTS] + [(-1.0, k) for k in _NEG_KNOTS]


def pwl_weights(g) -> np.ndarray:
    """Combination weights making the unit grid interpolate g at the knots
    (g(0) = 0 assumed); the last positive unit pins the value at 0.45."""
    v1 = g(0.15) / 0.15
    v2 = (g(0.3) - 0.3 * v1) / 0.15
    v3 = (g(0.45) - 0.45 * v1 - 0.3 * v2) / 0.15
    w1 = g(-0.15) / 0.15
    w2 = (g(-0.3) - 0.3 * w1) / 0.15
    return np.array([v1, v2, v3, w1, w2])


def pwl_eval(g, t):
    """The interpolant itself, for oracle comparisons."""
    t = np.asarray(t, dtype=float)
    w = pwl_weights(g)
    units = pwl_unit_grid()
    acc = np.zeros_like(t)
    for wa, (sign, knot) in zip(w, units):
        acc = acc + wa * np.maximum(sign * t - sign * knot, 0.0)
    return acc


def build_networks() -> list[Mlp]:
    """The four state-multiplying networks of the flagship example.

    Column i realizes C1[:, i] * gh1(u1) + C2[:, i] * gh2(u2) with gh the
    piecewise-linear interpolants: layer 0 holds the knot units for both
    scalars, layer 1 is the identity (exact on nonnegative inputs), and the
    output layer mixes each scalar's units through the direction columns.
    The output bias cancels the value at u = 0 exactly.
    """
    mats = example_matrices()
    C1, C2 = mats["C1"], mats["C2"]
    units = pwl_unit_grid()
    n_units = len(units)
    W0 = np.zeros((10, 2))
    b0 = np.zeros(10)
    for a, (sign, knot) in enumerate(units):
        W0[a, 0] = sign
        b0[a] = -sign * knot
        W0[n_units + a, 1] = sign
        b0[n_units + a] = -sign * knot
    w_g1 = pwl_weights(g1)
    w_g2 = pwl_weights(g2)

    nets = []
    # Hidden state at u = 0: both ReLU layers pass relu(b0) through unchanged.
    s0 = np.maximum(b0, 0.0)
    for i in range(4):
        W2 = np.hstack([np.outer(C1[:, i], w_g1), np.outer(C2[:, i], w_g2)])
        b2 = -W2 @ s0
        layers = (
            (W0, b0),
            (np.eye(10), np.zeros(10)),
            (W2, b2),
        )
        nets.append(Mlp(layers=layers, activation=Activation.relu()))
    return nets


def _fixture_data() -> dict:
    path = resources.files("nflsynth").joinpath("data/example_fixture.json")
    with resources.as_file(path) as p:
        return load_json(p)


def example_system() -> BilinearNfl:
    """The flagship four-state, two-input plant with checked-in networks."""
    obj = _fixture_data()
    A = np.asarray(obj["A"], dtype=float)
    B0 = np.asarray(obj["B0"], dtype=float)
    B1 = np.asarray(obj["B1"], dtype=float)
    B2 = np.asarray(obj["B2"], dtype=float)
    psi_cols = tuple(mlp_to_inn(obj_to_mlp(o)) for o in obj["psi_mlps"])
    return BilinearNfl(
        A0=A,
        B0=B0,
        D_tilde=bilinear_from_input_matrices([B1, B2]),
        phi=zero_inn(4, 2),
        psi_cols=psi_cols,
        z_star=np.zeros(4),
        u_star=np.zeros(2),
        region=RegionZ.ball(np.zeros(4), float(obj["radius"])),
    )


def _pin_output_zero(layers, act: Activation) -> Mlp:
    """Adjust the output bias so the network value at 0 is exactly zero."""
    probe = Mlp(layers=tuple(layers), activation=act)
    y0 = evaluate_mlp(probe, np.zeros(probe.input_dim))
    W_last, b_last = layers[-1]
    fixed = tuple(layers[:-1]) + ((W_last, np.asarray(b_last, dtype=float) - y0),)
    return Mlp(layers=fixed, activation=act)


def _zero_psi(l: int, m: int) -> tuple:
    return tuple(zero_inn(l, m) for _ in range(l))


def linear_system(radius: float = 1.0) -> BilinearNfl:
    """Purely linear, open-loop unstable, trivially stabilizable."""
    return BilinearNfl(
        A0=np.array([[1.05, 0.3], [0.0, 0.85]]),
        B0=np.array([[1.0], [0.4]]),
        D_tilde=np.zeros((2, 2)),
        phi=zero_inn(2, 1),
        psi_cols=_zero_psi(2, 1),
        z_star=np.zeros(2),
        u_star=np.zeros(1),
        region=RegionZ.ball(np.zeros(2), radius),
    )


def bilinear_system(radius: float = 0.5) -> BilinearNfl:
    """Bilinear coupling, no networks."""
    return BilinearNfl(
        A0=np.array([[1.05, 0.2], [0.1, 0.9]]),
        B0=np.array([[1.0], [0.5]]),
        D_tilde=np.array([[0.15, -0.1], [0.05, 0.2]]),
        phi=zero_inn(2, 1),
        psi_cols=_zero_psi(2, 1),
        z_star=np.zeros(2),
        u_star=np.zeros(1),
        region=RegionZ.ball(np.zeros(2), radius),
    )


def mixed_system(radius: float = 0.4) -> BilinearNfl:
    """Both network channels active under the sign-indefinite custom
    activation, driving the full (non-reduced) synthesis path."""
    act = sine_blend_activation()
    phi = _pin_output_zero(
        (
            (np.array([[0.4], [-0.3]]), np.array([0.1, -0.2])),
            (np.array([[0.12, -0.08], [0.05, 0.1]]), np.zeros(2)),
        ),
        act,
    )
    psi_cols = []
    for W0, b0, W1 in (
        (np.array([[0.5]]), np.array([0.0]), np.array([[0.08], [-0.06]])),
        (np.array([[-0.4]]), np.array([0.2]), np.array([[0.03], [0.07]])),
    ):
        psi_cols.append(mlp_to_inn(_pin_output_zero(((W0, b0), (W1, np.zeros(2))), act)))
    return BilinearNfl(
        A0=np.array([[0.95, 0.2], [0.0, 0.9]]),
        B0=np.array([[1.0], [0.6]]),
        D_tilde=np.array([[0.05, 0.02], [0.0, 0.04]]),
        phi=mlp_to_inn(phi),
        psi_cols=tuple(psi_cols),
        z_star=np.zeros(2),
        u_star=np.zeros(1),
        region=RegionZ.ball(np.zeros(2), radius),
    )


def relu_system(radius: float = 0.5) -> BilinearNfl:
    """ReLU networks on both channels; slope bounds (0, 1) take the reduced
    synthesis path."""
    act = Activation.relu()
    phi = _pin_output_zero(
        (
            (np.array([[0.6], [-0.5]]), np.array([0.2, 0.3])),
            (np.array([[0.1, -0.07], [0.04, 0.09]]), np.zeros(2)),
        ),
        act,
    )
    psi_cols = []
    for W0, b0, W1 in (
        (np.array([[0.7]]), np.array([0.1]), np.array([[0.06], [-0.04]])),
        (np.array([[-0.5]]), np.array([0.3]), np.array([[0.02], [0.05]])),
    ):
        psi_cols.append(mlp_to_inn(_pin_output_zero(((W0, b0), (W1, np.zeros(2))), act)))
    return BilinearNfl(
        A0=np.array([[1.0, 0.25], [0.05, 0.9]]),
        B0=np.array([[1.0], [0.5]]),
        D_tilde=np.array([[0.1, 0.0], [0.02, 0.08]]),
        phi=mlp_to_inn(phi),
        psi_cols=tuple(psi_cols),
        z_star=np.zeros(2),
        u_star=np.zeros(1),
        region=RegionZ.ball(np.zeros(2), radius),
    )


def tanh_system(radius: float = 0.5) -> BilinearNfl:
    """tanh input nonlinearity only (no state-multiplying networks), also on
    the reduced path."""
    act = Activation.tanh()
    phi = _pin_output_zero(
        (
            (np.array([[0.8], [0.5]]), np.array([0.1, -0.1])),
            (np.array([[0.15, 0.05], [-0.06, 0.12]]), np.zeros(2)),
        ),
        act,
    )
    return BilinearNfl(
        A0=np.array([[1.02, 0.3], [0.0, 0.88]]),
        B0=np.array([[1.0], [0.45]]),
        D_tilde=np.array([[0.08, -0.03], [0.0, 0.05]]),
        phi=mlp_to_inn(phi),
        psi_cols=_zero_psi(2, 1),
        z_star=np.zeros(2),
        u_star=np.zeros(1),
        region=RegionZ.ball(np.zeros(2), radius),
    )


def unstabilizable_system(radius: float = 0.3) -> BilinearNfl:
    """The unstable mode at 2.0 is unreachable from the input, so no
    certificate exists."""
    return BilinearNfl(
        A0=np.array([[2.0, 0.0], [0.0, 0.5]]),
        B0=np.array([[0.0], [1.0]]),
        D_tilde=np.zeros((2, 2)),
        phi=zero_inn(2, 1),
        psi_cols=_zero_psi(2, 1),
        z_star=np.zeros(2),
        u_star=np.zeros(1),
        region=RegionZ.ball(np.zeros(2), radius),
    )


def stress_system(radius: float = 0.5) -> BilinearNfl:
    """Networks with constant offsets dominate the dynamics: the nominal
    state matrix is stable but the network contribution at zero input pushes
    the true linearization unstable. A design that ignores the networks
    stabilizes the wrong plant."""
    act = Activation.relu()
    psi_cols = []
    # psi_1(0) = (0.5, 0), psi_2(0) = (0, 0.3): the offsets add
    # diag(0.5, 0.3) to the effective state matrix at the origin.
    for W0, b0, W1, b1 in (
        (np.array([[1.0]]), np.array([0.5]), np.array([[0.2], [0.0]]), np.array([0.4, 0.0])),
        (np.array([[1.0]]), np.array([0.5]), np.array([[0.0], [0.1]]), np.array([0.0, 0.25])),
    ):
        psi_cols.append(mlp_to_inn(Mlp(layers=((W0, b0), (W1, b1)), activation=act)))
    return BilinearNfl(
        A0=np.array([[0.65, 0.0], [0.0, 0.6]]),
        B0=np.array([[1.0], [1.0]]),
        D_tilde=np.zeros((2, 2)),
        phi=zero_inn(2, 1),
        psi_cols=tuple(psi_cols),
        z_star=np.zeros(2),
        u_star=np.zeros(1),
        region=RegionZ.ball(np.zeros(2), radius),
    )
