"""Shared fixtures. Synthesis runs are session scoped so every suite can
inspect the same certificates without re-solving."""

import numpy as np
import pytest

from nflsynth import SynthesisOptions, shift_lfr, synthesize
from nflsynth.fixtures import (
    bilinear_system,
    linear_system,
    mixed_system,
    relu_system,
    stress_system,
    tanh_system,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def linear_solved():
    sys_ = linear_system()
    return sys_, shift_lfr(sys_), synthesize(sys_)


@pytest.fixture(scope="session")
def bilinear_solved():
    sys_ = bilinear_system()
    return sys_, shift_lfr(sys_), synthesize(sys_)


@pytest.fixture(scope="session")
def mixed_solved():
    sys_ = mixed_system()
    return sys_, shift_lfr(sys_), synthesize(sys_)


@pytest.fixture(scope="session")
def relu_solved():
    sys_ = relu_system()
    return sys_, shift_lfr(sys_), synthesize(sys_)


@pytest.fixture(scope="session")
def tanh_solved():
    sys_ = tanh_system()
    return sys_, shift_lfr(sys_), synthesize(sys_)


@pytest.fixture(scope="session")
def stress_solved():
    sys_ = stress_system()
    return sys_, shift_lfr(sys_), synthesize(sys_)


def random_plant(rng, l=2, m=2, k_phi=3, k_psi=2, radius=0.5, scale=0.3,
                 activation=None, star=False):
    """Small random plant with one hidden layer per network. Weights are kept
    modest so the internal fixed points stay contractive. The equilibrium
    residual is absorbed into the input-network output bias, so
    (z_star, u_star) is exact even when star=True draws a nonzero point."""
    import warnings
    from dataclasses import replace

    from nflsynth import Activation, BilinearNfl, Mlp, RegionZ, mlp_to_inn, zero_inn
    from nflsynth.system import step_direct

    act = activation or Activation.tanh()

    def net(width):
        if width == 0:
            return zero_inn(l, m, act)
        layers = [
            (scale * rng.standard_normal((width, m)),
             scale * rng.standard_normal(width)),
            (scale * rng.standard_normal((l, width)),
             scale * rng.standard_normal(l)),
        ]
        return mlp_to_inn(Mlp(layers, act))

    A0 = 0.4 * rng.standard_normal((l, l))
    B0 = rng.standard_normal((l, m))
    D = scale * rng.standard_normal((l, l * m))
    phi = net(k_phi)
    psi_cols = [net(k_psi) for _ in range(l)]
    z_star = 0.2 * rng.standard_normal(l) if star else np.zeros(l)
    u_star = 0.2 * rng.standard_normal(m) if star else np.zeros(m)
    region = RegionZ.ball(z_star, radius)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sys_ = BilinearNfl(A0=A0, B0=B0, D_tilde=D, phi=phi, psi_cols=psi_cols,
                           z_star=z_star, u_star=u_star, region=region)
    resid = step_direct(sys_, z_star, u_star) - z_star
    phi = replace(phi, b_y=phi.b_y - resid)
    return BilinearNfl(A0=A0, B0=B0, D_tilde=D, phi=phi, psi_cols=psi_cols,
                       z_star=z_star, u_star=u_star, region=region)
