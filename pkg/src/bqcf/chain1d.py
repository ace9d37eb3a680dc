"""1D second-neighbor chain: difference operators, norms, operators, forces.

The chain occupies sites l = -N+1, ..., N (2N sites) with lattice spacing
eps = 1/N, deformed by a uniform strain F so that the reference deformation
is y_F(l) = F eps l.  Boundary handling:

* periodic: displacements wrap with period 2N (zero-mean admissible space);
* dirichlet: u_{-N+1} = u_N = 0, realized by deleting the rows and columns
  of the two constrained atoms; nonlinear forces see the uniform extension
  y_F beyond the computational cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .blending import BlendProfile1D
from .linalg import AssembledOperator
from .potential import PairPotential

PERIODIC = "periodic"
DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Chain1D:
    N: int
    boundary: str = PERIODIC
    F: float = 1.0

    def __post_init__(self):
        if self.N < 4:
            raise ValueError("need N >= 4")
        if self.boundary not in (PERIODIC, DIRICHLET):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if not self.F > 0:
            raise ValueError("strain F must be positive")

    @property
    def epsilon(self) -> float:
        return 1.0 / self.N

    @property
    def n_sites(self) -> int:
        return 2 * self.N

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.N + 1, self.N + 1)

    def y_uniform(self, F: float | None = None) -> np.ndarray:
        F = self.F if F is None else F
        return F * self.epsilon * self.indices

    def free_mask(self) -> np.ndarray:
        m = np.ones(self.n_sites, dtype=bool)
        if self.boundary == DIRICHLET:
            m[0] = m[-1] = False
        return m


def diff(chain: Chain1D, u: np.ndarray, order: int = 1) -> np.ndarray:
    """Discrete derivatives with periodic wrap.

    order 1: (u_l - u_{l-1})/eps;  order 2: (Du_{l+1} - Du_l)/eps;
    order 3: (D2u_l - D2u_{l-1})/eps.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    eps = chain.epsilon
    d1 = (u - np.roll(u, 1)) / eps
    if order == 1:
        return d1
    d2 = (np.roll(d1, -1) - d1) / eps
    if order == 2:
        return d2
    return (d2 - np.roll(d2, 1)) / eps


def norms(chain: Chain1D, u: np.ndarray) -> tuple[float, float, float]:
    """(l2_eps, l_inf, |Du|_{l2_eps})."""
    eps = chain.epsilon
    l2 = float(np.sqrt(eps * np.sum(u**2)))
    linf = float(np.max(np.abs(u))) if u.size else 0.0
    du = diff(chain, u, 1)
    h1 = float(np.sqrt(eps * np.sum(du**2)))
    return l2, linf, h1


def _second_difference(n: int, k: int) -> sp.csr_matrix:
    """Periodic matrix of v -> (2 v_l - v_{l+k} - v_{l-k})."""
    idx = np.arange(n)
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([idx, (idx + k) % n, (idx - k) % n])
    vals = np.concatenate([np.full(n, 2.0), np.full(n, -1.0), np.full(n, -1.0)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _restrict(mat: sp.spmatrix, chain: Chain1D) -> sp.csr_matrix:
    if chain.boundary == PERIODIC:
        return mat.tocsr()
    keep = np.flatnonzero(chain.free_mask())
    return mat.tocsr()[keep][:, keep]


def _wrap_operator(chain: Chain1D, mat: sp.spmatrix, model: str, F: float) -> AssembledOperator:
    return AssembledOperator(
        matrix=_restrict(mat, chain),
        model=model,
        boundary=chain.boundary,
        n_translations=1 if chain.boundary == PERIODIC else 0,
        metadata={"N": chain.N, "F": F},
    )


def assemble_La_1d(chain: Chain1D, potential: PairPotential) -> AssembledOperator:
    """(L^a v)_l = phi''(F)(2v_l - v_{l+1} - v_{l-1})/eps^2 + phi''(2F)(...)/eps^2."""
    n = chain.n_sites
    eps2 = chain.epsilon**2
    F = chain.F
    mat = (
        potential.ddphi(F) * _second_difference(n, 1)
        + potential.ddphi(2 * F) * _second_difference(n, 2)
    ) / eps2
    return _wrap_operator(chain, mat, "a", F)


def assemble_Lqcl_1d(chain: Chain1D, potential: PairPotential) -> AssembledOperator:
    n = chain.n_sites
    eps2 = chain.epsilon**2
    F = chain.F
    coeff = potential.ddphi(F) + 4.0 * potential.ddphi(2 * F)
    mat = coeff * _second_difference(n, 1) / eps2
    return _wrap_operator(chain, mat, "qcl", F)


def blend_values(chain: Chain1D, profile: BlendProfile1D) -> np.ndarray:
    if profile.N != chain.N:
        raise ValueError("blend profile and chain have mismatched half-period")
    return profile.values


def assemble_Lbqcf_1d(
    chain: Chain1D, potential: PairPotential, profile: BlendProfile1D
) -> AssembledOperator:
    """Row blend diag(beta) L^a + diag(1-beta) L^qcl."""
    beta = blend_values(chain, profile)
    la = assemble_La_1d(chain, potential).matrix
    lq = assemble_Lqcl_1d(chain, potential).matrix
    if chain.boundary == DIRICHLET:
        beta = beta[chain.free_mask()]
    mat = sp.diags(beta) @ la + sp.diags(1.0 - beta) @ lq
    op = AssembledOperator(
        matrix=mat,
        model="bqcf",
        boundary=chain.boundary,
        n_translations=1 if chain.boundary == PERIODIC else 0,
        metadata={"N": chain.N, "F": chain.F, "K": profile.K, "blend": profile.kind},
    )
    return op


def _strains(chain: Chain1D, y: np.ndarray) -> np.ndarray:
    """y'_l for l = -N..N+2: yp[l + N] = y'_l.

    Periodic: wraps y as y_F + periodic displacement.  Dirichlet: extends y
    by the uniform deformation beyond the cell.
    """
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite deformation")
    eps = chain.epsilon
    F = chain.F
    yF = chain.y_uniform()
    u = y - yF
    if chain.boundary == PERIODIC:
        u_ext = np.concatenate([u[-2:], u, u[:2]])  # u_l for l = -N-1 .. N+2
    else:
        u_ext = np.concatenate([[0.0, 0.0], u, [0.0, 0.0]])
    return F + np.diff(u_ext) / eps  # y'_l, l = -N .. N+2


def force_a_1d(chain: Chain1D, potential: PairPotential, y: np.ndarray) -> np.ndarray:
    """Atomistic force (1/eps) stencil of phi' at first and second neighbors."""
    dp = potential.dphi
    yp = _strains(chain, y)  # yp[l + N] = y'_l
    j = np.arange(chain.n_sites) + 1  # site l = j - N
    t1 = dp(yp[j + 1]) + dp(yp[j + 2] + yp[j + 1])
    t0 = dp(yp[j]) + dp(yp[j] + yp[j - 1])
    return (t1 - t0) / chain.epsilon


def force_qcl_1d(chain: Chain1D, potential: PairPotential, y: np.ndarray) -> np.ndarray:
    dp = potential.dphi
    yp = _strains(chain, y)
    j = np.arange(chain.n_sites) + 1
    t1 = dp(yp[j + 1]) + 2.0 * dp(2.0 * yp[j + 1])
    t0 = dp(yp[j]) + 2.0 * dp(2.0 * yp[j])
    return (t1 - t0) / chain.epsilon


def force_bqcf_1d(
    chain: Chain1D,
    potential: PairPotential,
    profile: BlendProfile1D,
    y: np.ndarray,
) -> np.ndarray:
    beta = blend_values(chain, profile)
    fa = force_a_1d(chain, potential, y)
    fq = force_qcl_1d(chain, potential, y)
    return beta * fa + (1.0 - beta) * fq
