"""Linear-fractional reformulation of the plant.

The bilinear and network terms are pulled out of the dynamics into four
uncertainty/nonlinearity channels, in fixed order

    q = (w_u, w_psi, s_phi, s_psi)    channel inputs, total m_c
    p = (u,   s_psi, v_phi, v_psi)    channel outputs, total n_c

with w_u = (z kron I_m) u and w_psi = diag_l(z kron I_k) s_psi closing the
bilinear channels, and s = xi(v) closing the network channels. The unshifted
form keeps a bias column and is used for equivalence testing only; synthesis
consumes the equilibrium-shifted form, whose channels all vanish at the
equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MixedActivation, ShapeMismatch
from .linalg import as_matrix, as_vector, block_diag, hstack, vstack
from .neural import Activation, Inn, internal_state_at
from .system import BilinearNfl


@dataclass(frozen=True)
class LfrDims:
    """Dimension bookkeeping for the channel structure."""

    l: int
    m: int
    k_phi: int
    k_psi: int

    @property
    def lm(self) -> int:
        return self.l * self.m

    @property
    def lkpsi(self) -> int:
        return self.l * self.k_psi

    @property
    def l2kpsi(self) -> int:
        return self.l * self.l * self.k_psi

    @property
    def m_c(self) -> int:
        return self.lm + self.l2kpsi + self.k_phi + self.lkpsi

    @property
    def n_c(self) -> int:
        return self.m + 2 * self.lkpsi + self.k_phi

    @property
    def q_blocks(self) -> tuple[int, int, int, int]:
        return (self.lm, self.l2kpsi, self.k_phi, self.lkpsi)

    @property
    def p_blocks(self) -> tuple[int, int, int, int]:
        return (self.m, self.lkpsi, self.k_phi, self.lkpsi)


def bilinear_selector(z: np.ndarray, m: int) -> np.ndarray:
    """(z kron I_m), the lm-by-m selector closing the w_u channel."""
    return np.kron(as_vector(z).reshape(-1, 1), np.eye(m))


def psi_selector(z: np.ndarray, l: int, k_psi: int) -> np.ndarray:
    """diag_l(z kron I_k), the l^2 k-by-lk selector closing the w_psi channel."""
    return np.kron(np.eye(l), bilinear_selector(z, k_psi))


@dataclass(frozen=True, eq=False)
class StackedPsi:
    """All state-multiplying networks stacked into one channel.

    F_psi/G_psi/b_x_psi stack the internal dynamics blockwise; B_y_psi holds
    the output biases columnwise; H_psi spreads each column's output map onto
    its own slot of the w_psi channel; J_psi concatenates the feedthroughs.
    """

    F_psi: np.ndarray
    G_psi: np.ndarray
    H_psi: np.ndarray
    J_psi: np.ndarray
    B_y_psi: np.ndarray
    b_x_psi: np.ndarray
    psi_cols: tuple[Inn, ...]
    activation: Activation

    @property
    def l(self) -> int:
        return len(self.psi_cols)

    @property
    def k_psi(self) -> int:
        return self.psi_cols[0].state_dim


def stack_psi(psi_cols) -> StackedPsi:
    cols = tuple(psi_cols)
    if not cols:
        raise ShapeMismatch("need at least one psi column")
    l = cols[0].output_dim
    m = cols[0].input_dim
    k = cols[0].state_dim
    act = cols[0].activation
    for i, net in enumerate(cols):
        if (net.output_dim, net.input_dim, net.state_dim) != (l, m, k):
            raise ShapeMismatch(f"psi column {i} dimensions disagree with column 0")
        if k > 0 and net.activation != act:
            raise MixedActivation("psi columns must share one activation")
    F = block_diag([net.F for net in cols])
    G = vstack([net.G for net in cols])
    b_x = np.concatenate([net.b_x for net in cols])
    J = hstack([net.J for net in cols])
    B_y = np.column_stack([net.b_y for net in cols])
    # Column i's output map lands in slot i of macro-block i: the channel
    # input w_psi stacks l copies of (z kron I_k) s_i, and slot (i, i)
    # carries z_i s_i.
    H = np.zeros((l, l * l * k))
    for i, net in enumerate(cols):
        H[:, i * l * k + i * k : i * l * k + (i + 1) * k] = net.H
    return StackedPsi(
        F_psi=F, G_psi=G, H_psi=H, J_psi=J, B_y_psi=B_y, b_x_psi=b_x,
        psi_cols=cols, activation=act,
    )


def psi_product(sp: StackedPsi, u, z) -> np.ndarray:
    """Psi(u) z through the stacked matrices (channel route)."""
    zv = as_vector(z, sp.l)
    uv = as_vector(u)
    s_parts = [internal_state_at(net, uv)[0] for net in sp.psi_cols]
    s_psi = np.concatenate(s_parts) if s_parts else np.zeros(0)
    w_psi = psi_selector(zv, sp.l, sp.k_psi) @ s_psi
    return sp.H_psi @ w_psi + sp.J_psi @ bilinear_selector(zv, uv.shape[0]) @ uv + sp.B_y_psi @ zv


@dataclass(frozen=True, eq=False)
class UnshiftedLfr:
    """Plant rewritten as one affine block map with a bias column.

    Rows produce (z+, u, s_psi, v_phi, v_psi); columns consume
    (z, u, w_u, w_psi, s_phi, s_psi).
    """

    M: np.ndarray
    bias: np.ndarray
    dims: LfrDims
    phi: Inn
    stacked: StackedPsi

    @property
    def row_blocks(self) -> tuple[int, ...]:
        d = self.dims
        return (d.l, d.m, d.lkpsi, d.k_phi, d.lkpsi)

    @property
    def col_blocks(self) -> tuple[int, ...]:
        d = self.dims
        return (d.l, d.m, d.lm, d.l2kpsi, d.k_phi, d.lkpsi)


def build_lfr(sys: BilinearNfl) -> UnshiftedLfr:
    """Pull the bilinear and network terms into channels (bias retained)."""
    sp = stack_psi(sys.psi_cols)
    d = LfrDims(l=sys.l, m=sys.m, k_phi=sys.k_phi, k_psi=sys.k_psi)
    phi = sys.phi
    l, m = d.l, d.m
    z_u = np.zeros
    # fmt: off
    M = np.block([
        [sys.A0 + sp.B_y_psi, sys.B0 + phi.J,  sys.D_tilde + sp.J_psi, sp.H_psi,              phi.H,                 z_u((l, d.lkpsi))],
        [z_u((m, l)),         np.eye(m),       z_u((m, d.lm)),         z_u((m, d.l2kpsi)),    z_u((m, d.k_phi)),     z_u((m, d.lkpsi))],
        [z_u((d.lkpsi, l)),   z_u((d.lkpsi, m)), z_u((d.lkpsi, d.lm)), z_u((d.lkpsi, d.l2kpsi)), z_u((d.lkpsi, d.k_phi)), np.eye(d.lkpsi)],
        [z_u((d.k_phi, l)),   phi.G,           z_u((d.k_phi, d.lm)),   z_u((d.k_phi, d.l2kpsi)), phi.F,              z_u((d.k_phi, d.lkpsi))],
        [z_u((d.lkpsi, l)),   sp.G_psi,        z_u((d.lkpsi, d.lm)),   z_u((d.lkpsi, d.l2kpsi)), z_u((d.lkpsi, d.k_phi)), sp.F_psi],
    ])
    # fmt: on
    bias = np.concatenate([
        phi.b_y, np.zeros(m), np.zeros(d.lkpsi), phi.b_x, sp.b_x_psi,
    ])
    return UnshiftedLfr(M=M, bias=bias, dims=d, phi=phi, stacked=sp)


def close_unshifted(lfr: UnshiftedLfr, z, u) -> np.ndarray:
    """One plant step through the channel form (for equivalence checks)."""
    d = lfr.dims
    zv = as_vector(z, d.l)
    uv = as_vector(u, d.m)
    s_phi, _ = internal_state_at(lfr.phi, uv)
    s_parts = [internal_state_at(net, uv)[0] for net in lfr.stacked.psi_cols]
    s_psi = np.concatenate(s_parts) if s_parts else np.zeros(0)
    w_u = bilinear_selector(zv, d.m) @ uv
    w_psi = psi_selector(zv, d.l, d.k_psi) @ s_psi
    stacked_in = np.concatenate([zv, uv, w_u, w_psi, s_phi, s_psi])
    out = lfr.M @ stacked_in + lfr.bias
    return out[: d.l]


@dataclass(frozen=True, eq=False)
class ShiftedLfr:
    """Channel form in equilibrium-relative coordinates, bias-free.

    A and B absorb the equilibrium corrections; B_spsi is the extra channel
    gain produced by freezing the state at the equilibrium inside the w_psi
    selector. The network channels use the shifted nonlinearity
    x -> xi(x + v_star) - xi(v_star), which vanishes at zero.
    """

    dims: LfrDims
    A: np.ndarray
    B: np.ndarray
    B_wu: np.ndarray
    B_wpsi: np.ndarray
    B_sphi: np.ndarray
    B_spsi: np.ndarray
    F_phi: np.ndarray
    G_phi: np.ndarray
    F_psi: np.ndarray
    G_psi: np.ndarray
    activation: Activation
    z_star: np.ndarray
    u_star: np.ndarray
    s_phi_star: np.ndarray
    v_phi_star: np.ndarray
    s_psi_star: np.ndarray
    v_psi_star: np.ndarray
    phi: Inn
    psi_cols: tuple[Inn, ...]

    def channel_gains(self) -> np.ndarray:
        """Top-row channel block [B_wu, B_wpsi, B_sphi, B_spsi] (l x m_c)."""
        return hstack([self.B_wu, self.B_wpsi, self.B_sphi, self.B_spsi])

    def full_matrix(self) -> np.ndarray:
        """The complete (l + n_c) x (l + m + m_c) block map, for tests."""
        d = self.dims
        z = np.zeros
        # fmt: off
        return np.block([
            [self.A,            self.B,            self.B_wu,          self.B_wpsi,           self.B_sphi,           self.B_spsi],
            [z((d.m, d.l)),     np.eye(d.m),       z((d.m, d.lm)),     z((d.m, d.l2kpsi)),    z((d.m, d.k_phi)),     z((d.m, d.lkpsi))],
            [z((d.lkpsi, d.l)), z((d.lkpsi, d.m)), z((d.lkpsi, d.lm)), z((d.lkpsi, d.l2kpsi)), z((d.lkpsi, d.k_phi)), np.eye(d.lkpsi)],
            [z((d.k_phi, d.l)), self.G_phi,        z((d.k_phi, d.lm)), z((d.k_phi, d.l2kpsi)), self.F_phi,           z((d.k_phi, d.lkpsi))],
            [z((d.lkpsi, d.l)), self.G_psi,        z((d.lkpsi, d.lm)), z((d.lkpsi, d.l2kpsi)), z((d.lkpsi, d.k_phi)), self.F_psi],
        ])
        # fmt: on


def shift_lfr(sys: BilinearNfl) -> ShiftedLfr:
    """Recenter the channel form at the equilibrium.

    The equilibrium values of the network states are solved once here; the
    returned form has no bias column, and every channel signal is zero at
    the equilibrium.
    """
    sp = stack_psi(sys.psi_cols)
    d = LfrDims(l=sys.l, m=sys.m, k_phi=sys.k_phi, k_psi=sys.k_psi)
    u_star = sys.u_star
    z_star = sys.z_star
    s_phi_star, v_phi_star = internal_state_at(sys.phi, u_star)
    psi_states = [internal_state_at(net, u_star) for net in sp.psi_cols]
    s_psi_star = np.concatenate([s for s, _ in psi_states]) if psi_states else np.zeros(0)
    v_psi_star = np.concatenate([v for _, v in psi_states]) if psi_states else np.zeros(0)

    B_wu = sys.D_tilde + sp.J_psi
    B_wpsi = sp.H_psi
    B_sphi = sys.phi.H
    B_spsi = sp.H_psi @ psi_selector(z_star, d.l, d.k_psi)

    # Equilibrium corrections to the state matrix, one column per state
    # component: freezing u (resp. s_psi) at its equilibrium value inside the
    # bilinear selectors leaves a term linear in the shifted state.
    A_u = np.zeros((d.l, d.l))
    A_sp = np.zeros((d.l, d.l))
    k = d.k_psi
    for i in range(d.l):
        A_u[:, i] = B_wu[:, i * d.m : (i + 1) * d.m] @ u_star
        if k > 0:
            A_sp[:, i] = sp.psi_cols[i].H @ s_psi_star[i * k : (i + 1) * k]
    A = sys.A0 + sp.B_y_psi + A_u + A_sp
    B = sys.B0 + sys.phi.J + B_wu @ bilinear_selector(z_star, d.m)

    return ShiftedLfr(
        dims=d, A=A, B=B, B_wu=B_wu, B_wpsi=B_wpsi, B_sphi=B_sphi, B_spsi=B_spsi,
        F_phi=sys.phi.F, G_phi=sys.phi.G, F_psi=sp.F_psi, G_psi=sp.G_psi,
        activation=sys.activation, z_star=z_star, u_star=u_star,
        s_phi_star=s_phi_star, v_phi_star=v_phi_star,
        s_psi_star=s_psi_star, v_psi_star=v_psi_star,
        phi=sys.phi, psi_cols=sp.psi_cols,
    )


def close_shifted(lfr: ShiftedLfr, z, u) -> np.ndarray:
    """One step through the shifted channel form; returns the next shifted
    state. Network states are recovered from the unshifted nets and
    recentered, which is exact."""
    d = lfr.dims
    z_t = as_vector(z, d.l) - lfr.z_star
    u_in = as_vector(u, d.m)
    u_t = u_in - lfr.u_star
    s_phi = internal_state_at(lfr.phi, u_in)[0] - lfr.s_phi_star
    parts = [internal_state_at(net, u_in)[0] for net in lfr.psi_cols]
    s_psi = (np.concatenate(parts) if parts else np.zeros(0)) - lfr.s_psi_star
    w_u = bilinear_selector(z_t, d.m) @ u_t
    w_psi = psi_selector(z_t, d.l, d.k_psi) @ s_psi
    return (
        lfr.A @ z_t + lfr.B @ u_t + lfr.B_wu @ w_u + lfr.B_wpsi @ w_psi
        + lfr.B_sphi @ s_phi + lfr.B_spsi @ s_psi
    )
