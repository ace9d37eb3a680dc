"""Critical-strain searches: bisection, regions, nonlinear continuation."""

import numpy as np
import pytest
import scipy.sparse as sp

from bqcf.blending import QUINTIC, RadialBlend2D
from bqcf.lattice2d import Domain2D, hexagonal_domain_for
from bqcf.linalg import AssembledOperator
from bqcf.operators2d import (
    HomogeneousFamily,
    blend_field,
    uniform_deformation,
)
from bqcf.potential import PairPotential
from bqcf.stability import (
    critical_eigenmode,
    critical_strain_linear,
    critical_strain_nonlinear,
    newton_solve,
    stability_region,
)

POT = PairPotential(4.0)


def _scalar_op(value):
    return AssembledOperator(matrix=sp.csr_matrix(np.array([[value]])),
                            model="test")


def test_linear_bisection_hits_analytic_root():
    # family lambda(g) = 0.35 - g: critical strain exactly 0.35
    res = critical_strain_linear(lambda g: _scalar_op(0.35 - g), dgamma=1e-9)
    assert res.converged
    assert res.gamma == pytest.approx(0.35, abs=2e-9)
    assert res.gamma <= 0.35  # last stable strain, never past the root


def test_linear_unstable_at_zero():
    res = critical_strain_linear(lambda g: _scalar_op(-1.0), dgamma=1e-6)
    assert not res.converged
    assert res.gamma == 0.0


def test_linear_stable_to_cap():
    res = critical_strain_linear(lambda g: _scalar_op(1.0), dgamma=1e-6,
                                 gamma_max=0.2)
    assert not res.converged
    assert res.metadata["reason"] == "stable up to gamma_max"


def test_linear_rejects_bad_increment():
    with pytest.raises(ValueError):
        critical_strain_linear(lambda g: _scalar_op(1.0), dgamma=0.0)


def test_stability_region_matches_predicate():
    s = np.linspace(-1, 1, 7)
    r = np.linspace(-1, 1, 5)

    def op(a, b):
        return _scalar_op(0.5 - a * a - b * b)

    grid = stability_region(op, s, r)
    expect = (s[:, None] ** 2 + r[None, :] ** 2) < 0.5
    assert np.array_equal(grid, expect)


@pytest.fixture(scope="module")
def small_domain():
    return hexagonal_domain_for(16)


def test_newton_converges_at_mild_strain(small_domain):
    dom = small_domain
    beta = np.ones(dom.n_sites)
    B = np.array([[1.0, 0.0], [0.0, 1.01]])
    y0 = uniform_deformation(dom, B)
    y, rep = newton_solve(dom, POT, beta, y0)
    assert rep.converged
    assert rep.residual < 1e-5
    # pinned sites never move
    pinned = ~dom.free
    assert np.array_equal(y[pinned], y0[pinned])


def test_nonlinear_matches_linear_without_defect(small_domain):
    # defect-free lattice: the nonlinear equilibrium at y = Bx is exact, so
    # the nonlinear critical strain tracks the linear one
    dom = small_domain
    ones = np.ones(dom.n_sites)
    B_of = lambda g: np.array([[1.0, 0.0], [g, 1.0]])
    fam = HomogeneousFamily(dom, POT, ones, np.zeros(dom.n_sites), "a")
    lin = critical_strain_linear(lambda g: fam.operator(B_of(g)), dgamma=1e-4)
    nl = critical_strain_nonlinear(dom, POT, ones, B_of, dgamma=1e-4)
    assert lin.converged and nl.converged
    assert nl.gamma == pytest.approx(lin.gamma, abs=3e-4)


def test_nonlinear_blended_close_to_atomistic(small_domain):
    dom = small_domain
    beta = blend_field(dom, RadialBlend2D(4, 7, QUINTIC))
    B_of = lambda g: np.array([[1.0, 0.0], [0.0, 1.0 + g]])
    res_a = critical_strain_nonlinear(dom, POT, np.ones(dom.n_sites), B_of,
                                      dgamma=1e-4)
    res_b = critical_strain_nonlinear(dom, POT, beta, B_of, dgamma=1e-4)
    assert res_a.converged and res_b.converged
    assert abs(res_a.gamma - res_b.gamma) / res_a.gamma < 0.05


def test_critical_eigenmode_shape(small_domain):
    dom = small_domain
    ones = np.ones(dom.n_sites)
    fam = HomogeneousFamily(dom, POT, ones, np.zeros(dom.n_sites), "a")
    lam, mode = critical_eigenmode(fam.operator(np.eye(2)))
    assert mode.shape == (dom.n_free, 2)
    assert lam > 0.0  # reference lattice is stable


def test_deterministic_critical_strain(small_domain):
    dom = small_domain
    ones = np.ones(dom.n_sites)
    fam = HomogeneousFamily(dom, POT, ones, np.zeros(dom.n_sites), "a")
    B_of = lambda g: (1.0 + g) * np.eye(2)
    r1 = critical_strain_linear(lambda g: fam.operator(B_of(g)), dgamma=1e-5)
    r2 = critical_strain_linear(lambda g: fam.operator(B_of(g)), dgamma=1e-5)
    assert r1.gamma == r2.gamma
    assert r1.n_evals == r2.n_evals
