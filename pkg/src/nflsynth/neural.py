"""Feedforward networks, their implicit-form equivalents, and evaluation.

An implicit network computes y = H s + J u + b_y where the internal state s
solves s = xi(F s + G u + b_x) elementwise. Every feedforward net admits such
a form with strictly upper-triangular F, in which case s is obtained by exact
back-substitution; general F falls back to damped fixed-point iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergence, ShapeMismatch
from .linalg import as_matrix, as_vector, check_finite

# Fixed-point solve contract for non-triangular implicit states.
FP_TOL = 1e-10
FP_MAX_ITER = 10_000
FP_DAMPING = 0.5

# Registry for custom scalar activations (name -> vectorized evaluator).
_CUSTOM: dict[str, Callable[[np.ndarray], np.ndarray]] = {}


def register_custom_activation(name: str, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    _CUSTOM[name] = fn


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class Activation:
    """Elementwise slope-restricted nonlinearity with declared bounds.

    kind is one of relu, tanh, sigmoid, custom. Built-in kinds carry fixed
    slope bounds; custom ones must declare (alpha, beta) explicitly and be
    registered under `name`; slope bounds are never inferred.
    """

    kind: str
    alpha: float
    beta: float
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("relu", "tanh", "sigmoid", "custom"):
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if not self.alpha <= self.beta:
            raise ValueError(f"alpha={self.alpha} must be <= beta={self.beta}")
        fixed = {"relu": (0.0, 1.0), "tanh": (0.0, 1.0), "sigmoid": (0.0, 0.25)}
        if self.kind in fixed and (self.alpha, self.beta) != fixed[self.kind]:
            raise ValueError(f"{self.kind} slope bounds are fixed at {fixed[self.kind]}")
        if self.kind == "custom" and self.name not in _CUSTOM:
            raise ValueError(f"custom activation {self.name!r} is not registered")

    @classmethod
    def relu(cls) -> "Activation":
        return cls("relu", 0.0, 1.0)

    @classmethod
    def tanh(cls) -> "Activation":
        return cls("tanh", 0.0, 1.0)

    @classmethod
    def sigmoid(cls) -> "Activation":
        return cls("sigmoid", 0.0, 0.25)

    @classmethod
    def custom(cls, name: str, alpha: float, beta: float) -> "Activation":
        return cls("custom", float(alpha), float(beta), name)

    def __call__(self, x) -> np.ndarray:
        v = np.asarray(x, dtype=float)
        if self.kind == "relu":
            return np.maximum(v, 0.0)
        if self.kind == "tanh":
            return np.tanh(v)
        if self.kind == "sigmoid":
            return _sigmoid(v)
        return np.asarray(_CUSTOM[self.name](v), dtype=float)

    def shifted(self, v_star: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """x -> xi(x + v*) - xi(v*); slope-restricted on the same [alpha, beta]
        and zero at zero."""
        v_star = np.asarray(v_star, dtype=float)
        offset = self(v_star)
        return lambda x: self(np.asarray(x, dtype=float) + v_star) - offset


@dataclass(frozen=True, eq=False)
class Mlp:
    """Feedforward network: x_{i+1} = xi(W_i x_i + b_i), y = W_L x_L + b_L.

    layers holds (W_0, b_0), ..., (W_L, b_L); the final pair is the affine
    output with no activation.
    """

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    activation: Activation

    def __post_init__(self):
        if not self.layers:
            raise ShapeMismatch("Mlp needs at least the affine output layer")
        fixed = []
        prev = None
        for i, (W, b) in enumerate(self.layers):
            Wm = as_matrix(W)
            bv = as_vector(b, Wm.shape[0])
            check_finite(Wm, f"layer {i} weight")
            check_finite(bv, f"layer {i} bias")
            if prev is not None and Wm.shape[1] != prev:
                raise ShapeMismatch(
                    f"layer {i} expects {Wm.shape[1]} inputs but layer {i-1} "
                    f"produces {prev}"
                )
            prev = Wm.shape[0]
            fixed.append((Wm, bv))
        object.__setattr__(self, "layers", tuple(fixed))

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(W.shape[0] for W, _ in self.layers[:-1])


@dataclass(frozen=True, eq=False)
class Inn:
    """Implicit network y = H s + J u + b_y with s = xi(F s + G u + b_x)."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray
    b_x: np.ndarray
    b_y: np.ndarray
    activation: Activation
    wellposed_by_structure: bool = False
    # Internal-state block sizes when derived from a feedforward net
    # (enables exact block back-substitution); None for general INNs.
    block_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        F = as_matrix(self.F)
        k = F.shape[0]
        if F.shape[1] != k:
            raise ShapeMismatch(f"F must be square, got {F.shape}")
        G = as_matrix(self.G, rows=k)
        m = G.shape[1]
        H = as_matrix(self.H, cols=k)
        p = H.shape[0]
        J = as_matrix(self.J, rows=p, cols=m)
        b_x = as_vector(self.b_x, k)
        b_y = as_vector(self.b_y, p)
        for name, arr in (("F", F), ("G", G), ("H", H), ("J", J), ("b_x", b_x), ("b_y", b_y)):
            check_finite(arr, name)
        if self.block_dims is not None and sum(self.block_dims) != k:
            raise ShapeMismatch("block_dims must sum to the state dimension")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "b_x", b_x)
        object.__setattr__(self, "b_y", b_y)

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]

    @property
    def input_dim(self) -> int:
        return self.G.shape[1]

    @property
    def output_dim(self) -> int:
        return self.H.shape[0]


def zero_inn(output_dim: int, input_dim: int, activation: Activation | None = None) -> Inn:
    """The identically-zero network (empty internal state); stands in for an
    absent nonlinearity."""
    act = activation if activation is not None else Activation.relu()
    return Inn(
        F=np.zeros((0, 0)),
        G=np.zeros((0, input_dim)),
        H=np.zeros((output_dim, 0)),
        J=np.zeros((output_dim, input_dim)),
        b_x=np.zeros(0),
        b_y=np.zeros(output_dim),
        activation=act,
        wellposed_by_structure=True,
        block_dims=(),
    )


def evaluate_mlp(mlp: Mlp, u) -> np.ndarray:
    """Layer-by-layer forward pass."""
    x = as_vector(u, mlp.input_dim)
    for W, b in mlp.layers[:-1]:
        x = mlp.activation(W @ x + b)
    W, b = mlp.layers[-1]
    return W @ x + b


def mlp_to_inn(mlp: Mlp) -> Inn:
    """Exact implicit form of a feedforward net.

    The internal state stacks the hidden layers in reverse order,
    s = vec[x_L, x_{L-1}, ..., x_1], which makes F strictly block upper
    triangular with the layer weights on the superdiagonal.
    """
    if len(mlp.layers) < 2:
        raise ShapeMismatch("conversion needs at least one hidden layer")
    Ws = [W for W, _ in mlp.layers]
    bs = [b for _, b in mlp.layers]
    L = len(mlp.layers) - 1  # number of hidden layers
    widths = mlp.hidden_widths  # (n_1, ..., n_L)
    rev = widths[::-1]  # block sizes of s: (n_L, ..., n_1)
    k = sum(widths)
    m = mlp.input_dim
    p = mlp.output_dim

    F = np.zeros((k, k))
    offsets = np.concatenate([[0], np.cumsum(rev)]).astype(int)
    # block i holds x_{L-i}; its equation reads x_{L-i} = xi(W_{L-i-1} x_{L-i-1} + b_{L-i-1})
    for i in range(L - 1):
        r0, r1 = offsets[i], offsets[i + 1]
        c0, c1 = offsets[i + 1], offsets[i + 2]
        F[r0:r1, c0:c1] = Ws[L - 1 - i]
    G = np.zeros((k, m))
    G[offsets[L - 1] :, :] = Ws[0]
    b_x = np.concatenate([bs[L - 1 - i] for i in range(L)]) if L else np.zeros(0)
    H = np.zeros((p, k))
    H[:, : rev[0]] = Ws[L]
    return Inn(
        F=F,
        G=G,
        H=H,
        J=np.zeros((p, m)),
        b_x=b_x,
        b_y=bs[L],
        activation=mlp.activation,
        wellposed_by_structure=True,
        block_dims=tuple(rev),
    )


def _is_strictly_upper(F: np.ndarray) -> bool:
    return bool(np.all(np.tril(F) == 0.0))


def solve_implicit_state(
    F: np.ndarray,
    c: np.ndarray,
    act: Callable[[np.ndarray], np.ndarray],
    block_dims: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Solve s = act(F s + c) for the internal state.

    Exact back-substitution when F is strictly (block) upper triangular (the
    last component depends on nothing); damped fixed-point iteration
    otherwise.
    """
    k = F.shape[0]
    if k == 0:
        return np.zeros(0)
    if block_dims:
        # Block back-substitution, last block first.
        s = np.zeros(k)
        offsets = np.concatenate([[0], np.cumsum(block_dims)]).astype(int)
        for i in reversed(range(len(block_dims))):
            r0, r1 = offsets[i], offsets[i + 1]
            s[r0:r1] = act(F[r0:r1, r1:] @ s[r1:] + c[r0:r1])
        return s
    if _is_strictly_upper(F):
        s = np.zeros(k)
        for i in reversed(range(k)):
            s[i] = float(act(F[i, i + 1 :] @ s[i + 1 :] + c[i]))
        return s
    s = np.zeros(k)
    res = np.inf
    # Divergence shows up as overflow first; detect it rather than warn.
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(FP_MAX_ITER):
            t = act(F @ s + c)
            if not np.all(np.isfinite(t)):
                raise NoConvergence(
                    "implicit state iteration diverged", residual=res, iterations=it,
                )
            res = float(np.max(np.abs(t - s)))
            s = (1.0 - FP_DAMPING) * s + FP_DAMPING * t
            if res <= FP_TOL:
                return s
    raise NoConvergence(
        f"implicit state did not converge within {FP_MAX_ITER} iterations",
        residual=res,
        iterations=FP_MAX_ITER,
    )


def _solve_state(inn: Inn, c: np.ndarray) -> np.ndarray:
    return solve_implicit_state(inn.F, c, inn.activation, inn.block_dims)


def evaluate_inn(inn: Inn, u) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the implicit network; returns (y, s)."""
    uv = as_vector(u, inn.input_dim)
    s = _solve_state(inn, inn.G @ uv + inn.b_x)
    y = inn.H @ s + inn.J @ uv + inn.b_y
    return y, s


def internal_state_at(inn: Inn, u_star) -> tuple[np.ndarray, np.ndarray]:
    """Internal fixed point (s*, v*) at a fixed input: v* = F s* + G u* + b_x,
    s* = xi(v*)."""
    uv = as_vector(u_star, inn.input_dim)
    c = inn.G @ uv + inn.b_x
    s = _solve_state(inn, c)
    v = inn.F @ s + c
    return s, v
