"""2D operators: patch tests, Cauchy-Born calculus, linearization oracles."""

import numpy as np
import pytest

from bqcf.blending import CUBIC, INDICATOR, QUINTIC, RadialBlend2D
from bqcf.lattice2d import (
    Domain2D,
    TriangularLattice,
    VacancySet,
    hexagonal_domain_for,
)
from bqcf.operators2d import (
    OMEGA0,
    assemble_La_2d,
    assemble_Lbqcf_2d,
    assemble_Lc_2d,
    assemble_Ltilde_2d,
    atomistic_energy_total,
    blend_field,
    bqcf_family,
    canonical_triangles,
    cb_energy_density,
    cb_energy_total,
    cb_stress,
    cb_tangent,
    force_a_2d,
    force_bqcf_2d,
    force_c_2d,
    hessian_bqcf_2d,
    uniform_deformation,
)
from bqcf.potential import PairPotential

POT = PairPotential(4.0)
B0 = np.array([[1.02, 0.015], [-0.01, 0.98]])


@pytest.fixture(scope="module")
def hex_domain():
    return Domain2D.hexagonal(8, epsilon=0.125)


def _force_scale(domain, B):
    return max(1.0, float(POT.dphi(np.linalg.norm(B))) / domain.epsilon)


@pytest.mark.parametrize("kind", [CUBIC, QUINTIC, INDICATOR])
def test_patch_test_blended_force_vanishes(hex_domain, kind):
    dom = hex_domain
    y = uniform_deformation(dom, B0)
    blend = RadialBlend2D(3.0, 6.0, kind)
    beta = blend_field(dom, blend)
    f = force_bqcf_2d(dom, POT, beta, y)[dom.free_ids]
    assert np.max(np.abs(f)) <= 1e-12 * _force_scale(dom, B0)


def test_component_forces_vanish_at_uniform(hex_domain):
    dom = hex_domain
    y = uniform_deformation(dom, B0)
    for force in (force_a_2d, force_c_2d):
        f = force(dom, POT, y)[dom.free_ids]
        assert np.max(np.abs(f)) <= 1e-12 * _force_scale(dom, B0)


def test_cb_stress_matches_energy_gradient():
    G = np.array([[1.04, 0.05], [0.02, 0.97]])
    h = 1e-6
    P = cb_stress(POT, G)
    for k in range(2):
        for m in range(2):
            E = np.zeros((2, 2))
            E[k, m] = h
            fd = (cb_energy_density(POT, G + E) - cb_energy_density(POT, G - E)) / (2 * h)
            assert P[k, m] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_cb_tangent_matches_stress_gradient():
    G = np.array([[1.03, -0.02], [0.04, 1.01]])
    h = 1e-6
    C = cb_tangent(POT, G)
    for l in range(2):
        for n in range(2):
            E = np.zeros((2, 2))
            E[l, n] = h
            fd = (cb_stress(POT, G + E) - cb_stress(POT, G - E)) / (2 * h)
            assert np.allclose(C[:, :, l, n], fd, rtol=1e-5, atol=1e-7)
    # major symmetry
    assert np.allclose(C, np.transpose(C, (2, 3, 0, 1)), atol=1e-12)


def test_cb_energy_total_matches_density_at_uniform(hex_domain):
    dom = hex_domain
    y = uniform_deformation(dom, B0)
    tris = canonical_triangles(dom)
    n_tri = sum(t.shape[0] for t in tris.values())
    expect = dom.epsilon**2 * (OMEGA0 / 2.0) * n_tri * cb_energy_density(POT, B0)
    assert cb_energy_total(dom, POT, y) == pytest.approx(expect, rel=1e-12)


def test_energies_decrease_with_forces(hex_domain):
    # forces are the negative scaled gradients of the energies
    dom = hex_domain
    rng = np.random.default_rng(1)
    y = uniform_deformation(dom, B0)
    y[dom.free_ids] += 1e-3 * rng.standard_normal((dom.n_free, 2))
    h = 1e-6
    eps2 = dom.epsilon**2
    for energy, force in ((atomistic_energy_total, force_a_2d),
                          (cb_energy_total, force_c_2d)):
        f = force(dom, POT, y)
        for site in dom.free_ids[:5]:
            for k in range(2):
                e = np.zeros_like(y)
                e[site, k] = h
                fd = (energy(dom, POT, y + e) - energy(dom, POT, y - e)) / (2 * h)
                assert -fd / eps2 == pytest.approx(f[site, k], rel=2e-5, abs=1e-6)


def test_translation_invariance_of_forces(hex_domain):
    dom = hex_domain
    rng = np.random.default_rng(2)
    y = uniform_deformation(dom, B0)
    y[dom.free_ids] += 1e-3 * rng.standard_normal((dom.n_free, 2))
    shift = np.array([0.3, -0.8])
    for force in (force_a_2d, force_c_2d):
        f1 = force(dom, POT, y)[dom.free_ids]
        f2 = force(dom, POT, y + shift)[dom.free_ids]
        assert np.allclose(f1, f2, atol=1e-9)


def test_family_matches_state_hessian_at_uniform(hex_domain):
    dom = hex_domain
    blend = RadialBlend2D(3.0, 6.0, CUBIC)
    beta = blend_field(dom, blend)
    y = uniform_deformation(dom, B0)
    L_family = assemble_Lbqcf_2d(dom, POT, blend, B0).matrix
    L_state = hessian_bqcf_2d(dom, POT, beta, y).matrix
    diff = abs(L_family - L_state).max()
    assert diff <= 1e-9 * abs(L_family).max()


def test_hessian_is_negative_force_jacobian():
    dom = Domain2D.hexagonal(4, epsilon=0.25)
    blend = RadialBlend2D(1.5, 3.5, QUINTIC)
    beta = blend_field(dom, blend)
    rng = np.random.default_rng(3)
    y = uniform_deformation(dom, B0)
    y[dom.free_ids] += 1e-3 * rng.standard_normal((dom.n_free, 2))
    L = hessian_bqcf_2d(dom, POT, beta, y).matrix.toarray()
    h = 1e-6
    nf = dom.n_free
    J = np.zeros((2 * nf, 2 * nf))
    for col, site in enumerate(dom.free_ids):
        for k in range(2):
            e = np.zeros_like(y)
            e[site, k] = h
            fp = force_bqcf_2d(dom, POT, beta, y + e)[dom.free_ids].ravel()
            fm = force_bqcf_2d(dom, POT, beta, y - e)[dom.free_ids].ravel()
            J[:, 2 * col + k] = (fp - fm) / (2 * h)
    assert np.max(np.abs(L + J)) <= 1e-5 * max(1.0, np.max(np.abs(L)))


def test_row_blend_identity_2d():
    dom = Domain2D.hexagonal(4, epsilon=0.25)
    blend = RadialBlend2D(1.5, 3.5, CUBIC)
    beta = blend_field(dom, blend)[dom.free_ids]
    La = assemble_La_2d(dom, POT, B0).matrix.toarray()
    Lc = assemble_Lc_2d(dom, POT, B0).matrix.toarray()
    Lb = assemble_Lbqcf_2d(dom, POT, RadialBlend2D(1.5, 3.5, CUBIC), B0)
    w = np.repeat(beta, 2)
    expect = w[:, None] * La + (1.0 - w)[:, None] * Lc
    assert np.allclose(Lb.matrix.toarray(), expect, rtol=1e-12, atol=1e-9)


def test_atomistic_operator_symmetric(hex_domain):
    op = assemble_La_2d(hex_domain, POT, B0)
    assert op.is_symmetric(tol=1e-12)


def test_periodic_assembly_translation_modes():
    lat = TriangularLattice(8)
    dom = Domain2D.periodic(lat)
    op = assemble_La_2d(dom, POT, np.eye(2) * 1.05)
    assert op.n_translations == 2
    # rigid translations are exact null vectors
    v = np.zeros(2 * dom.n_free)
    v[0::2] = 1.0
    assert np.max(np.abs(op.matrix @ v)) <= 1e-10 * abs(op.matrix).max()


def test_ltilde_reduces_to_continuum_without_blend():
    dom = Domain2D.hexagonal(5, epsilon=0.2)
    zero_blend = lambda pos: np.zeros(pos.shape[0])
    Lt = assemble_Ltilde_2d(dom, POT, zero_blend, B0).matrix
    Lc = assemble_Lc_2d(dom, POT, B0).matrix
    assert abs(Lt - Lc).max() <= 1e-10 * abs(Lc).max()


def test_vacancy_rows_are_inert():
    dom = Domain2D.hexagonal(6, epsilon=1.0, vacancies=VacancySet.divacancy())
    y = uniform_deformation(dom, np.eye(2))
    f = force_a_2d(dom, POT, y)
    missing = np.flatnonzero(~dom.present)
    assert np.allclose(f[missing], 0.0)
    # far field forces stay tiny at uniform strain despite the defect rows
    r = np.linalg.norm(dom.positions(), axis=1)
    far = dom.free & (r > 4.5)
    assert np.max(np.abs(f[far])) <= 1e-12


def test_blend_field_validation(hex_domain):
    with pytest.raises(ValueError):
        blend_field(hex_domain, lambda pos: np.full(pos.shape[0], 1.5))
    with pytest.raises(ValueError):
        blend_field(hex_domain, lambda pos: np.zeros(3))


def test_uniform_deformation_scaling():
    dom = hexagonal_domain_for(16)
    y = uniform_deformation(dom, B0)
    assert np.allclose(y, dom.epsilon * dom.positions() @ B0.T)
