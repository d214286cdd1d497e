import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nflsynth import (
    Activation,
    build_lfr,
    close_shifted,
    close_unshifted,
    evaluate_inn,
    internal_state_at,
    shift_lfr,
    stack_psi,
    step_direct,
)
from nflsynth.lfr import LfrDims, bilinear_selector, psi_selector, psi_product
from conftest import random_plant


def test_dims_arithmetic():
    d = LfrDims(l=3, m=2, k_phi=4, k_psi=5)
    assert d.lm == 6
    assert d.lkpsi == 15
    assert d.l2kpsi == 45
    assert d.m_c == 6 + 45 + 4 + 15
    assert d.n_c == 2 + 15 + 4 + 15
    assert sum(d.q_blocks) == d.m_c
    assert sum(d.p_blocks) == d.n_c


# -- selector identities -------------------------------------------------


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_bilinear_selector_factors_kron(seed):
    rng = np.random.default_rng(seed)
    l, m = rng.integers(1, 5), rng.integers(1, 4)
    z = rng.standard_normal(l)
    u = rng.standard_normal(m)
    sel = bilinear_selector(z, m)
    assert sel.shape == (l * m, m)
    assert np.abs(sel @ u - np.kron(z, u)).max() <= 1e-12


def test_psi_selector_routes_stacked_states(rng):
    l, k = 3, 2
    z = rng.standard_normal(l)
    s = rng.standard_normal(l * k)
    sel = psi_selector(z, l, k)
    assert sel.shape == (l * l * k, l * k)
    out = sel @ s
    # Block i of the output is z (outer) the i-th per-state slice.
    for i in range(l):
        np.testing.assert_allclose(
            out[i * l * k : (i + 1) * l * k], np.kron(z, s[i * k : (i + 1) * k]),
            atol=1e-12,
        )


def test_stacked_psi_matches_columnwise_products(rng):
    sys_ = random_plant(rng, l=3, m=2, k_phi=0, k_psi=3)
    stacked = stack_psi(sys_.psi_cols)
    u = rng.standard_normal(2)
    z = rng.standard_normal(3)
    got = psi_product(stacked, u, z)
    want = np.zeros(3)
    for i, net in enumerate(sys_.psi_cols):
        want = want + evaluate_inn(net, u)[0] * z[i]
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_stacked_psi_output_map_is_block_embedded(rng):
    sys_ = random_plant(rng, l=2, m=2, k_phi=0, k_psi=2)
    stacked = stack_psi(sys_.psi_cols)
    l, k = 2, 2
    for i, net in enumerate(sys_.psi_cols):
        block = stacked.H_psi[:, i * l * k + i * k : i * l * k + (i + 1) * k]
        np.testing.assert_array_equal(block, net.H)


# -- unshifted channel form ----------------------------------------------


@pytest.mark.parametrize("k_phi,k_psi", [(3, 2), (0, 2), (3, 0), (0, 0)])
def test_unshifted_one_step_equivalence(rng, k_phi, k_psi):
    for _ in range(5):
        sys_ = random_plant(rng, l=2, m=2, k_phi=k_phi, k_psi=k_psi)
        lfr = build_lfr(sys_)
        for _ in range(4):
            z = rng.standard_normal(2)
            u = rng.standard_normal(2)
            err = np.abs(close_unshifted(lfr, z, u) - step_direct(sys_, z, u)).max()
            assert err <= 1e-9


def test_unshifted_block_shapes(rng):
    sys_ = random_plant(rng, l=2, m=2, k_phi=3, k_psi=2)
    lfr = build_lfr(sys_)
    d = lfr.dims
    assert lfr.M.shape == (d.l + d.n_c, d.l + d.m + d.m_c)
    assert lfr.bias.shape == (d.l + d.n_c,)


# -- shifted channel form ------------------------------------------------


@pytest.mark.parametrize("star", [False, True])
@pytest.mark.parametrize("k_phi,k_psi", [(3, 2), (0, 2), (3, 0), (0, 0)])
def test_shifted_fixed_point_at_origin(rng, star, k_phi, k_psi):
    sys_ = random_plant(rng, l=3, m=2, k_phi=k_phi, k_psi=k_psi, star=star)
    lfr = shift_lfr(sys_)
    out = close_shifted(lfr, sys_.z_star, sys_.u_star)
    assert np.abs(out).max() <= 1e-9


@pytest.mark.parametrize("star", [False, True])
def test_shifted_step_matches_direct(rng, star):
    for _ in range(10):
        sys_ = random_plant(rng, l=2, m=2, k_phi=2, k_psi=2, star=star)
        lfr = shift_lfr(sys_)
        z = sys_.z_star + 0.3 * rng.standard_normal(2)
        u = sys_.u_star + 0.3 * rng.standard_normal(2)
        want = step_direct(sys_, z, u) - sys_.z_star
        got = close_shifted(lfr, z, u)
        assert np.abs(got - want).max() <= 1e-9


def test_shifted_star_states_match_network_internals(rng):
    sys_ = random_plant(rng, l=2, m=2, k_phi=3, k_psi=2, star=True)
    lfr = shift_lfr(sys_)
    s_phi, v_phi = internal_state_at(sys_.phi, sys_.u_star)
    np.testing.assert_allclose(lfr.s_phi_star, s_phi, atol=1e-12)
    np.testing.assert_allclose(lfr.v_phi_star, v_phi, atol=1e-12)
    parts_s = [internal_state_at(n, sys_.u_star)[0] for n in sys_.psi_cols]
    np.testing.assert_allclose(lfr.s_psi_star, np.concatenate(parts_s), atol=1e-12)


def test_channel_gain_widths(rng):
    sys_ = random_plant(rng, l=2, m=2, k_phi=3, k_psi=2)
    lfr = shift_lfr(sys_)
    d = lfr.dims
    gains = lfr.channel_gains()
    assert gains.shape == (d.l, d.m_c)
    np.testing.assert_array_equal(
        gains,
        np.hstack([lfr.B_wu, lfr.B_wpsi, lfr.B_sphi, lfr.B_spsi]),
    )


def test_shifted_linearization_absorbs_star_offsets(rng):
    # With a nonzero operating point the effective state matrix picks up the
    # bilinear and network sensitivities; spot check against a finite
    # difference of the true step map.
    sys_ = random_plant(rng, l=2, m=2, k_phi=2, k_psi=2, star=True)
    lfr = shift_lfr(sys_)
    h = 1e-6
    for i in range(2):
        dz = np.zeros(2)
        dz[i] = h
        fd = (step_direct(sys_, sys_.z_star + dz, sys_.u_star)
              - step_direct(sys_, sys_.z_star, sys_.u_star)) / h
        np.testing.assert_allclose(lfr.A[:, i], fd, atol=1e-5)
