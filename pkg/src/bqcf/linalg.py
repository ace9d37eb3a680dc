"""Assembled-operator container and sparse symmetric eigen/definiteness kernels.

Stability tests boil down to the sign of the smallest eigenvalue of the
symmetric part S of an assembled operator, restricted to the admissible
subspace (mean-zero for periodic boundary conditions, everything for
Dirichlet).  Three paths, fastest first:

* banded Cholesky (1D chains: S is pentadiagonal after the Dirichlet rows
  are deleted) -- definiteness only;
* LDL^T inertia via SuperLU with diagonal pivoting (2D stencil operators)
  -- counts eigenvalues below a shift, which also gives a bisection bracket
  for the smallest eigenvalue;
* dense LAPACK for small dimensions, and as the fallback when the sparse
  paths cannot be trusted.

For periodic operators the rigid translations are exact null vectors of S;
they are excluded by requiring exactly ``n_translations`` eigenvalues below
the (negative) test shift rather than zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_DIM_MAX = 4096
_BAND_MAX = 8


class EigenSolveError(RuntimeError):
    """Eigensolver did not converge and no fallback applied."""


@dataclass
class AssembledOperator:
    """Sparse linear operator with model bookkeeping.

    ``matrix`` acts on the stacked free degrees of freedom; the quadratic
    form of the underlying model is eps^d * u^T A u, so positive
    definiteness of the form and of ``matrix`` coincide.
    """

    matrix: sp.spmatrix
    model: str
    boundary: str = "dirichlet"
    n_translations: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ValueError("operator must be square")
        self.matrix = m.tocsr()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def sym(self) -> sp.csr_matrix:
        m = self.matrix
        return ((m + m.T) * 0.5).tocsr()

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        d = self.matrix - self.matrix.T
        scale = max(1.0, abs(self.matrix).max())
        return abs(d).max() <= tol * scale if d.nnz else True

    def row_sum_scale(self) -> float:
        s = self.sym()
        return float(np.max(np.abs(s).sum(axis=1))) if s.nnz else 0.0

    def stability_threshold(self) -> float:
        # relative threshold: stable <=> lambda_min(sym) > eta
        return 1e-10 * self.row_sum_scale()


def _translation_basis(n: int, n_translations: int) -> np.ndarray:
    """Orthonormal rigid-translation vectors for stacked dof layouts."""
    if n_translations == 0:
        return np.zeros((n, 0))
    if n_translations == 1:
        return np.full((n, 1), 1.0 / np.sqrt(n))
    if n_translations == 2:
        v = np.zeros((n, 2))
        v[0::2, 0] = 1.0
        v[1::2, 1] = 1.0
        return v / np.sqrt(n // 2)
    raise ValueError("n_translations must be 0, 1 or 2")


def _extract_banded(S: sp.spmatrix, max_band: int = _BAND_MAX) -> Optional[np.ndarray]:
    """Lower 'ab' banded storage of a symmetric sparse matrix, or None."""
    c = S.tocoo()
    if c.nnz == 0:
        return np.zeros((1, S.shape[0]))
    bw = int(np.max(np.abs(c.row - c.col)))
    if bw > max_band:
        return None
    n = S.shape[0]
    ab = np.zeros((bw + 1, n))
    lower = c.row >= c.col
    np.add.at(ab, (c.row[lower] - c.col[lower], c.col[lower]), c.data[lower])
    return ab


def _banded_is_posdef(ab: np.ndarray, shift: float) -> bool:
    try:
        abs_ = ab.copy()
        abs_[0, :] -= shift
        sla.cholesky_banded(abs_, lower=True)
        return True
    except sla.LinAlgError:
        return False


def _ldl_inertia(S: sp.csc_matrix, shift: float) -> Optional[int]:
    """Number of eigenvalues of S below `shift`, via diagonal-pivot LU.

    Returns None when SuperLU had to abandon diagonal pivoting, in which
    case the inertia read off diag(U) is unreliable.
    """
    n = S.shape[0]
    A = (S - shift * sp.identity(n, format="csc")).tocsc()
    try:
        lu = spla.splu(
            A,
            diag_pivot_thresh=0.0,
            permc_spec="MMD_AT_PLUS_A",
            options=dict(SymmetricMode=True),
        )
    except RuntimeError:
        # exactly singular pivot: treat as "not strictly above the shift"
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    d = lu.U.diagonal()
    if np.any(d == 0.0):
        return None
    return int(np.count_nonzero(d < 0.0))


def _dense_min_eig(S: np.ndarray, n_translations: int) -> tuple[float, np.ndarray]:
    n = S.shape[0]
    if n_translations:
        V = _translation_basis(n, n_translations)
        c = 10.0 * max(1.0, float(np.max(np.abs(S))) * n)
        S = S + c * (V @ V.T)
    w, v = sla.eigh(S, subset_by_index=(0, 0))
    return float(w[0]), v[:, 0]


def is_positive_definite(op: AssembledOperator, eta: Optional[float] = None) -> bool:
    """Positive definiteness of sym(op) on the admissible subspace.

    Stable <=> lambda_min(sym) > eta, with the relative threshold
    eta = 1e-10 * max row sum unless overridden.
    """
    if eta is None:
        eta = op.stability_threshold()
    S = op.sym()
    n = S.shape[0]
    ntr = op.n_translations

    if ntr == 0:
        ab = _extract_banded(S)
        if ab is not None:
            return _banded_is_posdef(ab, eta)

    count = _ldl_inertia(S.tocsc(), eta)
    if count is not None:
        return count == ntr
    # pivoting failure: a (near-)singular leading block at this shift
    if n <= 4 * DENSE_DIM_MAX:
        lam, _ = _dense_min_eig(S.toarray(), ntr)
        return lam > eta
    return False


def min_eig_sym(op: AssembledOperator, tol: float = 1e-10) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of the symmetric part on the admissible subspace.

    The eigenvector is returned with unit 2-norm.  Raises EigenSolveError
    only if every path fails.
    """
    S = op.sym()
    n = S.shape[0]
    ntr = op.n_translations

    if n <= DENSE_DIM_MAX:
        lam, vec = _dense_min_eig(S.toarray(), ntr)
        return lam, vec

    if ntr == 0:
        ab = _extract_banded(S)
        if ab is not None:
            w, v = sla.eig_banded(
                ab, lower=True, select="i", select_range=(0, 0)
            )
            return float(w[0]), v[:, 0]

    return _sparse_min_eig(S, ntr, tol)


def _sparse_min_eig(S: sp.csr_matrix, ntr: int, tol: float) -> tuple[float, np.ndarray]:
    """Inertia bisection to bracket lambda_min, then shift-invert Lanczos."""
    scale = float(np.max(np.abs(S).sum(axis=1)))
    lo, hi = -1.05 * scale, float(S.diagonal().min()) + 1e-30
    # lo is a Gershgorin lower bound minus margin: inertia(lo) == 0 certain
    Scsc = S.tocsc()
    target = ntr
    # shrink [lo, hi] until hi has at least target+1 eigenvalues below it
    # and lo has exactly target, with a modest relative gap
    cnt_hi = _ldl_inertia(Scsc, hi)
    tries = 0
    while cnt_hi is not None and cnt_hi <= target and tries < 60:
        hi += max(1e-12 * scale, abs(hi)) * 0.5
        cnt_hi = _ldl_inertia(Scsc, hi)
        tries += 1
    for _ in range(40):
        if hi - lo <= 1e-3 * max(1e-14 * scale, abs(lo) + abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        cnt = _ldl_inertia(Scsc, mid)
        if cnt is None:
            mid += 1e-10 * scale
            cnt = _ldl_inertia(Scsc, mid)
            if cnt is None:
                break
        if cnt <= target:
            lo = mid
        else:
            hi = mid
    sigma = lo
    v0 = _start_vector(S.shape[0], ntr)
    try:
        w, v = spla.eigsh(S, k=1 + ntr, sigma=sigma, which="LM", v0=v0, tol=tol)
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        if S.shape[0] <= 4 * DENSE_DIM_MAX:
            return _dense_min_eig(S.toarray(), ntr)
        raise EigenSolveError(str(exc)) from exc
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    if ntr:
        V = _translation_basis(S.shape[0], ntr)
        keep = [i for i in range(len(w)) if np.linalg.norm(V.T @ v[:, i]) < 0.5]
        if not keep:
            raise EigenSolveError("all computed eigenvectors are translations")
        i = keep[0]
        return float(w[i]), v[:, i]
    return float(w[0]), v[:, 0]


def _start_vector(n: int, ntr: int) -> np.ndarray:
    """Fixed deterministic start vector: alternating signs, deflated."""
    v = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    if ntr:
        V = _translation_basis(n, ntr)
        v = v - V @ (V.T @ v)
    return v / np.linalg.norm(v)
