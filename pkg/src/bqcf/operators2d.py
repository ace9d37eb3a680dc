"""2D operators on the triangular lattice: atomistic, Cauchy-Born continuum,
force-blended combinations, and their linearizations.

Scaling conventions (matching the 1D chain module):

* geometry is unscaled (nearest-neighbor spacing 1); the potential is always
  evaluated at deformed unscaled bonds, e.g. phi(|B a_i|) with |a_i| = 1;
* assembled operators carry an overall 1/eps^2 so the model quadratic form
  is eps^2 u^T L u, and positive definiteness of the matrix and of the form
  coincide;
* nodal forces carry an overall 1/eps: F = -(1/eps^2) dE/dy for the scaled
  energy E = eps^2 * (energy per site / per unit area).

The continuum model is the Cauchy-Born P1 finite element model on the
canonical triangulation of the lattice (each cell split into an up triangle
(m, m+e1, m+e2) and a down triangle (m+e1, m+e1+e2, m+e2)).  The blended
force operator weights rows: F = diag(beta) F^a + diag(1-beta) F^c, so its
linearization is generally nonsymmetric; stability always refers to the
symmetric part.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .lattice2d import (
    ALL_OFFSETS,
    CELL_VOLUME,
    PLUS_OFFSETS,
    Domain2D,
    offset_position,
)
from .linalg import AssembledOperator
from .potential import PairPotential, VectorPairPotential

OMEGA0 = CELL_VOLUME

# the six bonds counted once per site: three first neighbors (length 1)
# and three second neighbors (length sqrt(3))
_BOND_VECS = np.array([offset_position(o) for o in PLUS_OFFSETS])

_TRI_OFFSETS = {
    "up": ((0, 0), (1, 0), (0, 1)),
    "down": ((1, 0), (1, 1), (0, 1)),
}


def _type_gradients() -> dict:
    """P1 shape-function gradients (3, 2) per triangle type, unscaled."""
    out = {}
    for name, offs in _TRI_OFFSETS.items():
        pts = np.array([offset_position(o) for o in offs])
        J = np.column_stack([pts[1] - pts[0], pts[2] - pts[0]])
        Jinv = np.linalg.inv(J)
        g = np.empty((3, 2))
        g[1] = Jinv[0]
        g[2] = Jinv[1]
        g[0] = -g[1] - g[2]
        out[name] = (g, Jinv)
    return out

_TRI_GRADS = _type_gradients()


def uniform_deformation(domain: Domain2D, B: np.ndarray) -> np.ndarray:
    """y = B x on the scaled positions x = eps * (lattice position)."""
    return domain.epsilon * domain.positions() @ np.asarray(B, dtype=float).T


def blend_field(domain: Domain2D, blend) -> np.ndarray:
    """Per-site atomistic weight beta, from any callable on unscaled positions."""
    beta = np.asarray(blend(domain.positions()), dtype=float)
    if beta.shape != (domain.n_sites,):
        raise ValueError("blend must return one weight per site")
    if np.any(beta < 0.0) or np.any(beta > 1.0):
        raise ValueError("blend weights must lie in [0, 1]")
    return beta


# -- Cauchy-Born energy density ---------------------------------------------

def cb_energy_density(potential: PairPotential, G: np.ndarray) -> float:
    """W(G) = (1/Omega0) sum over the six bonds of phi(|G r|)."""
    G = np.asarray(G, dtype=float)
    vb = _BOND_VECS @ G.T
    return float(np.sum(potential.phi(np.linalg.norm(vb, axis=1)))) / OMEGA0


def cb_stress(potential: PairPotential, G: np.ndarray) -> np.ndarray:
    """First Piola stress dW/dG, a 2x2 matrix."""
    vpot = VectorPairPotential(potential)
    G = np.asarray(G, dtype=float)
    vb = _BOND_VECS @ G.T  # (6, 2) deformed bonds
    grads = vpot.grad(vb)  # (6, 2)
    return np.einsum("bk,bm->km", grads, _BOND_VECS) / OMEGA0


def cb_tangent(potential: PairPotential, G: np.ndarray) -> np.ndarray:
    """Elasticity tensor C[k,m,l,n] = d^2 W / dG_km dG_ln, shape (2,2,2,2)."""
    vpot = VectorPairPotential(potential)
    G = np.asarray(G, dtype=float)
    vb = _BOND_VECS @ G.T
    H = vpot.hess(vb)  # (6, 2, 2)
    return np.einsum("bkl,bm,bn->kmln", H, _BOND_VECS, _BOND_VECS) / OMEGA0


# -- triangulation ------------------------------------------------------------

def canonical_triangles(domain: Domain2D) -> dict:
    """Site-id triples of the canonical triangulation, keyed by type.

    A cell is included when all four corner sites are explicit; vacancies do
    not remove triangles (the continuum model is blind to point defects).
    """
    i10, i01, i11 = domain.nbr[(1, 0)], domain.nbr[(0, 1)], domain.nbr[(1, 1)]
    ok = (i10 >= 0) & (i01 >= 0) & (i11 >= 0)
    base = np.flatnonzero(ok)
    return {
        "up": np.column_stack([base, i10[base], i01[base]]),
        "down": np.column_stack([i10[base], i11[base], i01[base]]),
    }


def _atom_bonds(domain: Domain2D) -> dict:
    """Present first/second neighbor bonds (i, j), one entry per offset."""
    out = {}
    pres = domain.present
    for off in PLUS_OFFSETS:
        j = domain.nbr[off]
        valid = (j >= 0) & pres & pres[np.clip(j, 0, None)]
        i = np.flatnonzero(valid)
        out[off] = (i, j[i])
    return out


# -- forces -------------------------------------------------------------------

def force_a_2d(domain: Domain2D, potential: PairPotential, y: np.ndarray) -> np.ndarray:
    """Atomistic nodal forces, (n_sites, 2); only free rows are meaningful
    on Dirichlet domains (halo sites miss bonds) and vacancy rows are zero."""
    vpot = VectorPairPotential(potential)
    eps = domain.epsilon
    F = np.zeros((domain.n_sites, 2))
    pres = domain.present
    for off in ALL_OFFSETS:
        j = domain.nbr[off]
        valid = (j >= 0) & pres & pres[np.clip(j, 0, None)]
        i = np.flatnonzero(valid)
        w = (y[j[i]] - y[i]) / eps
        F[i] += vpot.grad(w)
    return F / eps


def _tri_gradients_G(domain, y, tri, Jinv):
    d1 = y[tri[:, 1]] - y[tri[:, 0]]
    d2 = y[tri[:, 2]] - y[tri[:, 0]]
    D = np.stack([d1, d2], axis=-1)  # (m, 2, 2), columns are edge vectors
    return D @ Jinv / domain.epsilon


def force_c_2d(domain: Domain2D, potential: PairPotential, y: np.ndarray) -> np.ndarray:
    """Cauchy-Born finite element nodal forces, (n_sites, 2)."""
    vpot = VectorPairPotential(potential)
    eps = domain.epsilon
    F = np.zeros((domain.n_sites, 2))
    tris = canonical_triangles(domain)
    for name, tri in tris.items():
        g, Jinv = _TRI_GRADS[name]
        G = _tri_gradients_G(domain, y, tri, Jinv)  # (m, 2, 2)
        vb = np.einsum("mkl,bl->mbk", G, _BOND_VECS)  # (m, 6, 2)
        grads = vpot.grad(vb)  # (m, 6, 2)
        P = np.einsum("mbk,bl->mkl", grads, _BOND_VECS) / OMEGA0  # dW(G)
        for i in range(3):
            np.add.at(F, tri[:, i], -(OMEGA0 / (2.0 * eps)) * (P @ g[i]))
    return F


def force_bqcf_2d(
    domain: Domain2D, potential: PairPotential, beta: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """Row-blended force beta F^a + (1 - beta) F^c."""
    if not np.any(beta != 1.0):
        return force_a_2d(domain, potential, y)
    if not np.any(beta != 0.0):
        return force_c_2d(domain, potential, y)
    fa = force_a_2d(domain, potential, y)
    fc = force_c_2d(domain, potential, y)
    return beta[:, None] * fa + (1.0 - beta)[:, None] * fc


def cb_energy_total(domain: Domain2D, potential: PairPotential, y: np.ndarray) -> float:
    """Scaled Cauchy-Born energy eps^2 (Omega0/2) sum_T W(G_T)."""
    eps = domain.epsilon
    total = 0.0
    for name, tri in canonical_triangles(domain).items():
        _, Jinv = _TRI_GRADS[name]
        G = _tri_gradients_G(domain, y, tri, Jinv)
        vb = np.einsum("mkl,bl->mbk", G, _BOND_VECS)
        phis = potential.phi(np.linalg.norm(vb, axis=-1))  # (m, 6)
        total += float(np.sum(phis)) / OMEGA0
    return eps * eps * (OMEGA0 / 2.0) * total


def atomistic_energy_total(domain: Domain2D, potential: PairPotential, y: np.ndarray) -> float:
    """Scaled atomistic energy eps^2 sum over present bonds of phi (each once)."""
    eps = domain.epsilon
    total = 0.0
    for (i, j) in _atom_bonds(domain).values():
        r = np.linalg.norm(y[j] - y[i], axis=-1) / eps
        total += float(np.sum(potential.phi(r)))
    return eps * eps * total


# -- linearizations -----------------------------------------------------------

class _BlockBuilder:
    """Accumulates 2x2 blocks into a COO matrix over stacked dofs."""

    def __init__(self, n_free: int):
        self.n = 2 * n_free
        self.rows: list = []
        self.cols: list = []
        self.vals: list = []

    def add(self, rows_f, cols_f, blocks):
        # rows_f/cols_f: free indices (m,), blocks (m, 2, 2) or (2, 2)
        blocks = np.broadcast_to(np.asarray(blocks, dtype=float), (rows_f.size, 2, 2))
        r2 = (2 * rows_f).astype(np.int32)
        c2 = (2 * cols_f).astype(np.int32)
        for k in range(2):
            for l in range(2):
                self.rows.append(r2 + k)
                self.cols.append(c2 + l)
                self.vals.append(blocks[:, k, l])

    def tocsr(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        return sp.coo_matrix((v, (r, c)), shape=(self.n, self.n)).tocsr()


def _fe_pair_coeffs(name: str) -> np.ndarray:
    """coef[i, j, b] = (g_i . r_b)(g_j . r_b) for local nodes i,j and bond b."""
    g, _ = _TRI_GRADS[name]
    gr = g @ _BOND_VECS.T  # (3, 6)
    return np.einsum("ib,jb->ijb", gr, gr)


class HomogeneousFamily:
    """Linearized blended operator at uniform strain, with cached sparsity.

    The free-free matrix of diag(w_a) L^a(B) + diag(w_c) L^c(B) decomposes
    into a fixed set of scalar incidence patterns kron'd with strain
    dependent 2x2 bond blocks, so re-assembly along a strain path is cheap.
    """

    def __init__(
        self,
        domain: Domain2D,
        potential: PairPotential,
        atom_weights: np.ndarray,
        cont_weights: np.ndarray,
        model: str = "bqcf",
    ):
        self.domain = domain
        self.potential = potential
        self.vpot = VectorPairPotential(potential)
        self.model = model
        self._atom_patterns = None
        self._fe_patterns = None
        if np.any(atom_weights != 0.0):
            self._atom_patterns = self._build_atom_patterns(atom_weights)
        if np.any(cont_weights != 0.0):
            self._fe_patterns = self._build_fe_patterns(cont_weights)

    def _build_atom_patterns(self, w):
        dom = self.domain
        nf = dom.n_free
        fidx = dom.free_index
        patterns = []
        for off in PLUS_OFFSETS:
            rows, cols, vals = [], [], []
            i, j = _atom_bonds(dom)[off]
            for (a, b) in ((i, j), (j, i)):
                fa, fb = fidx[a], fidx[b]
                ra = fa >= 0
                # diagonal: stiffness from the bond even if the other end is pinned
                rows.append(fa[ra]); cols.append(fa[ra]); vals.append(w[a[ra]])
                rb = ra & (fb >= 0)
                rows.append(fa[rb]); cols.append(fb[rb]); vals.append(-w[a[rb]])
            P = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(nf, nf),
            ).tocsr()
            patterns.append(P)
        return patterns

    def _build_fe_patterns(self, w):
        dom = self.domain
        nf = dom.n_free
        fidx = dom.free_index
        tris = canonical_triangles(dom)
        patterns = {}
        for name, tri in tris.items():
            for i in range(3):
                fi = fidx[tri[:, i]]
                for j in range(3):
                    fj = fidx[tri[:, j]]
                    keep = (fi >= 0) & (fj >= 0)
                    patterns[(name, i, j)] = sp.coo_matrix(
                        (w[tri[keep, i]], (fi[keep], fj[keep])), shape=(nf, nf)
                    ).tocsr()
        return patterns

    def operator(self, B: np.ndarray) -> AssembledOperator:
        dom = self.domain
        B = np.asarray(B, dtype=float)
        eps2 = dom.epsilon**2
        vb = _BOND_VECS @ B.T
        H = self.vpot.hess(vb)  # (6, 2, 2)
        n2 = 2 * dom.n_free
        mat = sp.csr_matrix((n2, n2))
        if self._atom_patterns is not None:
            for P, h in zip(self._atom_patterns, H):
                mat = mat + sp.kron(P, h, format="csr")
        if self._fe_patterns is not None:
            for name in _TRI_OFFSETS:
                coef = _fe_pair_coeffs(name)  # (3, 3, 6)
                M = 0.5 * np.einsum("ijb,bkl->ijkl", coef, H)
                for i in range(3):
                    for j in range(3):
                        mat = mat + sp.kron(
                            self._fe_patterns[(name, i, j)], M[i, j], format="csr"
                        )
        return AssembledOperator(
            matrix=mat / eps2,
            model=self.model,
            boundary=dom.kind,
            n_translations=dom.n_translations,
            metadata={"B": B.copy()},
        )


def assemble_La_2d(domain: Domain2D, potential: PairPotential, B) -> AssembledOperator:
    ones = np.ones(domain.n_sites)
    return HomogeneousFamily(domain, potential, ones, np.zeros_like(ones), "a").operator(B)


def assemble_Lc_2d(domain: Domain2D, potential: PairPotential, B) -> AssembledOperator:
    ones = np.ones(domain.n_sites)
    return HomogeneousFamily(domain, potential, np.zeros_like(ones), ones, "c").operator(B)


def assemble_Lbqcf_2d(
    domain: Domain2D, potential: PairPotential, blend, B
) -> AssembledOperator:
    beta = blend_field(domain, blend)
    fam = HomogeneousFamily(domain, potential, beta, 1.0 - beta, "bqcf")
    return fam.operator(B)


def bqcf_family(domain: Domain2D, potential: PairPotential, blend) -> HomogeneousFamily:
    beta = blend_field(domain, blend)
    return HomogeneousFamily(domain, potential, beta, 1.0 - beta, "bqcf")


# -- stability comparison operator -------------------------------------------

def _abs_spd(h: np.ndarray) -> np.ndarray:
    """Spectral absolute value of a symmetric 2x2 matrix."""
    w, V = np.linalg.eigh(h)
    return (V * np.abs(w)) @ V.T


class LtildeFamily:
    """Symmetric comparison operator L~ = L^c - blended second-neighbor
    coupling correction.

    For each lattice cell and each second-neighbor direction b_i = a_i +
    a_{i+1}, the correction subtracts beta-weighted quadratic terms
    (D2 u)^T |phi''(B b_i)| (D2 u) / eps^2 built from the raw four-point
    stencil D2 u = u(p+b_i) - u(p+a_i) - u(p+a_{i+1}) + u(p).  Its lowest
    eigenvalue tracks the blended operator's stability from below, giving a
    computable certificate for the stability-region comparisons.
    """

    _DIR_TRIPLES = (
        ((1, 0), (0, 1), (1, 1)),
        ((0, 1), (-1, 1), (-1, 2)),
        ((-1, 1), (-1, 0), (-2, 1)),
    )

    def __init__(self, domain: Domain2D, potential: PairPotential, blend):
        self.domain = domain
        self.potential = potential
        self.vpot = VectorPairPotential(potential)
        beta = blend_field(domain, blend)
        ones = np.ones(domain.n_sites)
        self._lc = HomogeneousFamily(domain, potential, np.zeros_like(ones), ones, "c")
        self._corr_patterns = self._build_patterns(beta)

    def _build_patterns(self, beta):
        dom = self.domain
        nf = dom.n_free
        fidx = dom.free_index
        pres = dom.present
        a1 = dom.nbr[(1, 0)]
        coeffs = np.array([1.0, -1.0, -1.0, 1.0])
        patterns = []
        for (oa, ob, oc) in self._DIR_TRIPLES:
            n1, n2, n3 = dom.nbr[ob], dom.nbr[oa], dom.nbr[oc]
            # stencil nodes: p, p + a_i, p + a_{i+1}, p + b_i
            nodes = np.column_stack([np.arange(dom.n_sites), n2, n1, n3])
            ok = np.all(nodes >= 0, axis=1) & (a1 >= 0)
            ok &= np.all(pres[np.clip(nodes, 0, None)], axis=1)
            nodes = nodes[ok]
            w = beta[a1[ok]]
            rows, cols, vals = [], [], []
            for s in range(4):
                fs = fidx[nodes[:, s]]
                for t in range(4):
                    ft = fidx[nodes[:, t]]
                    keep = (fs >= 0) & (ft >= 0)
                    rows.append(fs[keep])
                    cols.append(ft[keep])
                    vals.append(coeffs[s] * coeffs[t] * w[keep])
            patterns.append(
                sp.coo_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(nf, nf),
                ).tocsr()
            )
        return patterns

    def operator(self, B: np.ndarray) -> AssembledOperator:
        dom = self.domain
        B = np.asarray(B, dtype=float)
        op = self._lc.operator(B)
        mat = op.matrix
        eps2 = dom.epsilon**2
        bvecs = [offset_position(tr[2]) for tr in self._DIR_TRIPLES]
        for R, bv in zip(self._corr_patterns, bvecs):
            h = _abs_spd(self.vpot.hess(B @ bv))
            mat = mat - sp.kron(R, h, format="csr") / eps2
        return AssembledOperator(
            matrix=mat,
            model="tilde",
            boundary=dom.kind,
            n_translations=dom.n_translations,
            metadata={"B": B.copy()},
        )


def assemble_Ltilde_2d(domain, potential, blend, B) -> AssembledOperator:
    return LtildeFamily(domain, potential, blend).operator(B)


# -- state-dependent linearization (Newton matrix) ----------------------------

def hessian_bqcf_2d(
    domain: Domain2D, potential: PairPotential, beta: np.ndarray, y: np.ndarray
) -> AssembledOperator:
    """L(y) = -dF^bqcf/dy on the free dofs, at an arbitrary deformation y.

    At y = B x this coincides with the pattern-based homogeneous assembly.
    """
    vpot = VectorPairPotential(potential)
    dom = domain
    eps = dom.epsilon
    fidx = dom.free_index
    builder = _BlockBuilder(dom.n_free)

    wa = beta
    if not np.any(wa != 0.0):
        wa = None
    for off, (i, j) in (_atom_bonds(dom).items() if wa is not None else ()):
        h = vpot.hess((y[j] - y[i]) / eps)  # (m, 2, 2)
        for (a, b, hh) in ((i, j, h), (j, i, h)):
            fa, fb = fidx[a], fidx[b]
            ra = fa >= 0
            builder.add(fa[ra], fa[ra], wa[a[ra], None, None] * hh[ra])
            rb = ra & (fb >= 0)
            builder.add(fa[rb], fb[rb], -wa[a[rb], None, None] * hh[rb])

    wc = 1.0 - beta
    if not np.any(wc != 0.0):
        wc = None
    for name, tri in (canonical_triangles(dom).items() if wc is not None else ()):
        g, Jinv = _TRI_GRADS[name]
        G = _tri_gradients_G(dom, y, tri, Jinv)
        vb = np.einsum("mkl,bl->mbk", G, _BOND_VECS)
        H = vpot.hess(vb)  # (m, 6, 2, 2)
        coef = _fe_pair_coeffs(name)  # (3, 3, 6)
        M = 0.5 * np.einsum("ijb,mbkl->mijkl", coef, H)
        for i in range(3):
            fi = fidx[tri[:, i]]
            ri = fi >= 0
            for j in range(3):
                fj = fidx[tri[:, j]]
                keep = ri & (fj >= 0)
                builder.add(
                    fi[keep], fj[keep], wc[tri[keep, i], None, None] * M[keep, i, j]
                )

    return AssembledOperator(
        matrix=builder.tocsr() / eps**2,
        model="bqcf",
        boundary=dom.kind,
        n_translations=dom.n_translations,
        metadata={"state": "nonlinear"},
    )
