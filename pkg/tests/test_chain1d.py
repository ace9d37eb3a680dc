"""1D chain operators and forces: patch tests, oracles, blend identities."""

import numpy as np
import pytest
import scipy.optimize

from bqcf.blending import CUBIC, QUINTIC, BlendProfile1D
from bqcf.chain1d import (
    DIRICHLET,
    PERIODIC,
    Chain1D,
    assemble_La_1d,
    assemble_Lbqcf_1d,
    assemble_Lqcl_1d,
    diff,
    force_a_1d,
    force_bqcf_1d,
    force_qcl_1d,
    norms,
)
from bqcf.linalg import is_positive_definite, min_eig_sym
from bqcf.potential import PairPotential
from bqcf.stability import critical_strain_linear

POT = PairPotential(4.0)


def _rand_periodic_state(chain, rng, scale=1e-3):
    u = rng.standard_normal(chain.n_sites) * scale
    u -= u.mean()
    return chain.y_uniform() + u


@pytest.mark.parametrize("boundary", [PERIODIC, DIRICHLET])
@pytest.mark.parametrize("kind", [CUBIC, QUINTIC])
def test_patch_test_uniform_forces_vanish(boundary, kind):
    chain = Chain1D(64, boundary, F=1.07)
    profile = BlendProfile1D(8, 64, kind)
    y = chain.y_uniform()
    scale = POT.dphi(chain.F) / chain.epsilon
    for force in (force_a_1d, force_qcl_1d):
        assert np.max(np.abs(force(chain, POT, y))) <= 1e-12 * abs(scale)
    fb = force_bqcf_1d(chain, POT, profile, y)
    assert np.max(np.abs(fb)) <= 1e-12 * abs(scale)


def test_row_blend_identity():
    # L^bqcf rows are the pointwise blend of L^a and L^qcl rows
    chain = Chain1D(32, PERIODIC, F=1.05)
    profile = BlendProfile1D(6, 32, QUINTIC)
    beta = profile.values
    La = assemble_La_1d(chain, POT).matrix.toarray()
    Lq = assemble_Lqcl_1d(chain, POT).matrix.toarray()
    Lb = assemble_Lbqcf_1d(chain, POT, profile).matrix.toarray()
    expect = beta[:, None] * La + (1.0 - beta)[:, None] * Lq
    assert np.allclose(Lb, expect, rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("boundary", [PERIODIC, DIRICHLET])
def test_linearization_matches_force_jacobian(boundary):
    chain = Chain1D(16, boundary, F=1.04)
    profile = BlendProfile1D(4, 16, CUBIC)
    y0 = chain.y_uniform()
    free = chain.free_mask()
    h = 1e-6
    n = chain.n_sites
    J = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        fp = force_bqcf_1d(chain, POT, profile, y0 + e)
        fm = force_bqcf_1d(chain, POT, profile, y0 - e)
        J[:, j] = (fp - fm) / (2 * h)
    keep = np.flatnonzero(free)
    Jff = J[np.ix_(keep, keep)] if boundary == DIRICHLET else J
    L = assemble_Lbqcf_1d(chain, POT, profile).matrix.toarray()
    assert np.max(np.abs(L + Jff)) <= 1e-5 * max(1.0, np.max(np.abs(L)))


def test_periodic_translation_invariance():
    chain = Chain1D(24, PERIODIC, F=1.03)
    rng = np.random.default_rng(0)
    y = _rand_periodic_state(chain, rng)
    f1 = force_a_1d(chain, POT, y)
    f2 = force_a_1d(chain, POT, y + 0.37)
    assert np.allclose(f1, f2, atol=1e-9)


def test_atomistic_fourier_oracle():
    # periodic uniform chain: eigenvalues are exactly the symbol
    # (4/eps^2)[phi''(F) sin^2(k/2) + phi''(2F) sin^2(k)]
    chain = Chain1D(32, PERIODIC, F=1.08)
    op = assemble_La_1d(chain, POT)
    n = chain.n_sites
    k = 2 * np.pi * np.arange(1, n) / n  # excludes the translation k=0
    sym = (4.0 / chain.epsilon**2) * (
        POT.ddphi(chain.F) * np.sin(k / 2) ** 2
        + POT.ddphi(2 * chain.F) * np.sin(k) ** 2
    )
    lam, _ = min_eig_sym(op)
    assert lam == pytest.approx(sym.min(), rel=1e-10)


def test_qcl_critical_strain_matches_analytic_root():
    # qcl loses coercivity exactly where phi''(F) + 4 phi''(2F) = 0
    root = scipy.optimize.brentq(
        lambda F: POT.ddphi(F) + 4.0 * POT.ddphi(2.0 * F), 1.0, 1.5
    )
    N = 256
    res = critical_strain_linear(
        lambda g: assemble_Lqcl_1d(Chain1D(N, PERIODIC, 1.0 + g), POT),
        dgamma=1e-8,
    )
    assert res.converged
    assert res.gamma + 1.0 == pytest.approx(root, abs=1e-7)


def test_atomistic_near_qcl_critical_strain():
    # long-wavelength instability: atomistic and qcl critical strains agree
    # up to O(eps^2)
    N = 64

    def crit(assemble):
        res = critical_strain_linear(
            lambda g: assemble(Chain1D(N, PERIODIC, 1.0 + g), POT),
            dgamma=1e-7,
        )
        assert res.converged
        return res.gamma

    ga = crit(assemble_La_1d)
    gq = crit(assemble_Lqcl_1d)
    assert abs(ga - gq) < 5.0 / N**2


@pytest.mark.parametrize("boundary", [PERIODIC, DIRICHLET])
def test_stable_at_ground_strain(boundary):
    chain = Chain1D(48, boundary, F=1.0)
    for assemble in (assemble_La_1d, assemble_Lqcl_1d):
        assert is_positive_definite(assemble(chain, POT))


def test_diff_and_norms():
    chain = Chain1D(16, PERIODIC)
    u = np.sin(2 * np.pi * np.arange(chain.n_sites) / chain.n_sites)
    d1 = diff(chain, u, 1)
    assert d1.shape == u.shape
    l2, linf, h1 = norms(chain, u)
    assert l2 > 0 and linf <= 1.0 and h1 > 0
    # second difference telescopes: sum of D2 over the period is zero
    assert abs(diff(chain, u, 2).sum()) < 1e-8


def test_validation():
    with pytest.raises(ValueError):
        Chain1D(2, PERIODIC)
    with pytest.raises(ValueError):
        Chain1D(16, "mixed")
    with pytest.raises(ValueError):
        Chain1D(16, PERIODIC, F=-1.0)
    chain = Chain1D(16, PERIODIC)
    with pytest.raises(ValueError):
        force_a_1d(chain, POT, np.full(chain.n_sites, np.nan))
