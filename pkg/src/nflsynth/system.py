"""Plant model: bilinear dynamics with neural networks in the loop.

The state update is

    z+ = A0 z + B0 u + D (z kron u) + phi(u) + Psi(u) z

where phi and the columns of Psi are implicit networks of the control input.
The bilinear coefficient matrix D acts on kron(z, u), state index varying
slowest: column (i*m + j) multiplies z_i * u_j.

Stability certificates are local to an ellipsoidal operating region around
the equilibrium, described by a quadratic form with negative-definite
curvature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MixedActivation, ShapeMismatch
from .linalg import as_matrix, as_vector, check_symmetric, inv, max_eig, sym_sqrt
from .neural import Inn, evaluate_inn, zero_inn

# Negative-definiteness margin for the region curvature matrix.
CURVATURE_TOL = 1e-9
# Membership slack: the shifted quadratic form may dip this far below zero.
CONTAINS_TOL = 1e-12
# Equilibrium residual beyond which construction warns.
EQUILIBRIUM_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RegionZ:
    """Operating region: center + {d : d'Q_z d + 2 d'S_z + R_z >= 0}.

    Q_z must be negative definite and R_z positive, so the set is a bounded
    ellipsoid containing the center.
    """

    Q_z: np.ndarray
    S_z: np.ndarray
    R_z: float
    center: np.ndarray

    def __post_init__(self):
        Q = check_symmetric(as_matrix(self.Q_z), "Q_z")
        l = Q.shape[0]
        S = as_matrix(self.S_z, rows=l, cols=1)
        R = float(self.R_z)
        c = as_vector(self.center, l)
        if max_eig(Q) > -CURVATURE_TOL:
            raise ShapeMismatch(
                f"region curvature must be negative definite "
                f"(max eigenvalue {max_eig(Q):.3e})"
            )
        if R <= 0.0:
            raise ShapeMismatch(f"region offset R_z must be positive, got {R}")
        object.__setattr__(self, "Q_z", Q)
        object.__setattr__(self, "S_z", S)
        object.__setattr__(self, "R_z", R)
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return self.Q_z.shape[0]

    @classmethod
    def ball(cls, center, radius: float) -> "RegionZ":
        c = as_vector(center)
        if radius <= 0.0:
            raise ShapeMismatch(f"ball radius must be positive, got {radius}")
        l = c.shape[0]
        return cls(Q_z=-np.eye(l), S_z=np.zeros((l, 1)), R_z=float(radius) ** 2, center=c)

    @classmethod
    def ellipsoid(cls, center, shape) -> "RegionZ":
        """Set {z : (z - center)' shape (z - center) <= 1}, shape PD."""
        c = as_vector(center)
        E = check_symmetric(as_matrix(shape, rows=c.shape[0], cols=c.shape[0]), "shape")
        return cls(Q_z=-E, S_z=np.zeros((c.shape[0], 1)), R_z=1.0, center=c)


def region_contains(region: RegionZ, z) -> bool:
    d = as_vector(z, region.dim) - region.center
    val = float(d @ region.Q_z @ d + 2.0 * d @ region.S_z[:, 0] + region.R_z)
    return val >= -CONTAINS_TOL


def region_sample(region: RegionZ, rng: np.random.Generator, n: int, surface: bool = False) -> np.ndarray:
    """Sample n points of the region, rows in plant coordinates.

    Completing the square turns the quadratic-form set into an ellipsoid
    around center - Q_z^{-1} S_z; surface=True restricts to its boundary.
    """
    l = region.dim
    Qi_S = inv(region.Q_z) @ region.S_z[:, 0]
    mid = region.center - Qi_S
    rhs = region.R_z - float(region.S_z[:, 0] @ Qi_S)
    T = sym_sqrt(inv(-region.Q_z)) * np.sqrt(rhs)
    x = rng.standard_normal((n, l))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    if not surface:
        x *= rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / l)
    return mid + x @ T.T


@dataclass(frozen=True, eq=False)
class BilinearNfl:
    """Bilinear plant with network nonlinearities entering through the input.

    psi_cols holds one network per state component; Psi(u) is assembled
    columnwise, so Psi(u) z = sum_i psi_i(u) z_i. All psi columns must share
    activation and internal dimension, and phi must match them whenever both
    carry internal state.
    """

    A0: np.ndarray
    B0: np.ndarray
    D_tilde: np.ndarray
    phi: Inn
    psi_cols: tuple[Inn, ...]
    z_star: np.ndarray
    u_star: np.ndarray
    region: RegionZ

    def __post_init__(self):
        A0 = as_matrix(self.A0)
        l = A0.shape[0]
        if A0.shape[1] != l:
            raise ShapeMismatch(f"state matrix must be square, got {A0.shape}")
        B0 = as_matrix(self.B0, rows=l)
        m = B0.shape[1]
        D = as_matrix(self.D_tilde, rows=l, cols=l * m)
        if self.phi.input_dim != m or self.phi.output_dim != l:
            raise ShapeMismatch(
                f"phi must map R^{m} -> R^{l}, got "
                f"R^{self.phi.input_dim} -> R^{self.phi.output_dim}"
            )
        cols = tuple(self.psi_cols)
        if len(cols) != l:
            raise ShapeMismatch(f"need {l} psi columns, got {len(cols)}")
        k_psi = cols[0].state_dim
        act = cols[0].activation
        for i, net in enumerate(cols):
            if net.input_dim != m or net.output_dim != l:
                raise ShapeMismatch(
                    f"psi column {i} must map R^{m} -> R^{l}, got "
                    f"R^{net.input_dim} -> R^{net.output_dim}"
                )
            if net.state_dim != k_psi:
                raise MixedActivation(
                    f"psi columns must share internal dimension: column {i} "
                    f"has {net.state_dim}, column 0 has {k_psi}"
                )
            if net.state_dim > 0 and net.activation != act:
                raise MixedActivation("psi columns must share one activation")
        if self.phi.state_dim > 0 and k_psi > 0 and self.phi.activation != act:
            raise MixedActivation("phi and psi must share one activation")
        z_star = as_vector(self.z_star, l)
        u_star = as_vector(self.u_star, m)
        if self.region.dim != l:
            raise ShapeMismatch(
                f"region dimension {self.region.dim} does not match state dimension {l}"
            )
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "B0", B0)
        object.__setattr__(self, "D_tilde", D)
        object.__setattr__(self, "psi_cols", cols)
        object.__setattr__(self, "z_star", z_star)
        object.__setattr__(self, "u_star", u_star)
        res = check_equilibrium(self)
        if res > EQUILIBRIUM_TOL:
            warnings.warn(
                f"equilibrium residual {res:.3e} exceeds {EQUILIBRIUM_TOL:.0e}; "
                "the shifted model will not be exact",
                stacklevel=2,
            )

    @property
    def l(self) -> int:
        return self.A0.shape[0]

    @property
    def m(self) -> int:
        return self.B0.shape[1]

    @property
    def k_phi(self) -> int:
        return self.phi.state_dim

    @property
    def k_psi(self) -> int:
        return self.psi_cols[0].state_dim

    @property
    def activation(self):
        if self.k_psi > 0:
            return self.psi_cols[0].activation
        return self.phi.activation


def step_direct(sys: BilinearNfl, z, u) -> np.ndarray:
    """One step of the plant, networks evaluated directly."""
    zv = as_vector(z, sys.l)
    uv = as_vector(u, sys.m)
    phi_u, _ = evaluate_inn(sys.phi, uv)
    out = sys.A0 @ zv + sys.B0 @ uv + sys.D_tilde @ np.kron(zv, uv) + phi_u
    for i, net in enumerate(sys.psi_cols):
        yi, _ = evaluate_inn(net, uv)
        out += yi * zv[i]
    return out


def check_equilibrium(sys: BilinearNfl) -> float:
    """Infinity-norm residual of the declared equilibrium."""
    z_plus = step_direct(sys, sys.z_star, sys.u_star)
    return float(np.max(np.abs(z_plus - sys.z_star)))


def strip_networks(sys: BilinearNfl) -> BilinearNfl:
    """Copy of the plant with both network nonlinearities removed.

    Designs built on the stripped plant serve as the purely bilinear
    baseline; the dropped terms may shift the true equilibrium, so the
    construction-time residual warning is suppressed here.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return BilinearNfl(
            A0=sys.A0,
            B0=sys.B0,
            D_tilde=sys.D_tilde,
            phi=zero_inn(sys.l, sys.m),
            psi_cols=tuple(zero_inn(sys.l, sys.m) for _ in range(sys.l)),
            z_star=sys.z_star,
            u_star=sys.u_star,
            region=sys.region,
        )
