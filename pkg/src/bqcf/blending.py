"""Blending functions: cubic/quintic splines, 1D index profiles, 2D radial blends.

The 1D profile places the continuum region at indices -N+1..0, the blending
ramp at 1..K-1 and the atomistic region at K..N.  Discrete derivative sup
norms use the same forward/backward difference stencils as the chain
operators, without periodic wrap (the profile jumps from 1 back to 0 across
the periodic seam, which is not part of the blend).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CUBIC = "cubic"
QUINTIC = "quintic"
INDICATOR = "indicator"  # sharp QCF limit, beta in {0, 1}

_KINDS = (CUBIC, QUINTIC, INDICATOR)


def spline_eval(kind: str, x):
    """Evaluate the transition spline: 0 for x<0, 1 for x>1, polynomial between."""
    if kind not in _KINDS:
        raise ValueError(f"unknown blend kind {kind!r}")
    x = np.asarray(x, dtype=float)
    if kind == INDICATOR:
        return (x > 0.0).astype(float)
    t = np.clip(x, 0.0, 1.0)
    if kind == CUBIC:
        core = t * t * (3.0 - 2.0 * t)
    else:
        core = t**3 * (10.0 + t * (-15.0 + 6.0 * t))
    return core


@dataclass(frozen=True)
class BlendProfile1D:
    """beta_l = B(l / K) sampled on the chain indices l = -N+1 .. N."""

    K: int
    N: int
    kind: str = QUINTIC

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("blend width K must be >= 1")
        if self.N < self.K + 2:
            raise ValueError("chain half-period N too small for blend width K")

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.N + 1, self.N + 1)

    @property
    def values(self) -> np.ndarray:
        return spline_eval(self.kind, self.indices / self.K)

    def support_set(self) -> np.ndarray:
        """Indices l such that 0 < beta_{l+j} < 1 for some |j| <= 2."""
        beta = self.values
        frac = (beta > 0.0) & (beta < 1.0)
        hit = np.zeros_like(frac)
        for j in range(-2, 3):
            # shifted view, out-of-range samples treated via clamped extension
            shifted = np.roll(frac, -j)
            if j > 0:
                shifted[-j:] = False
            elif j < 0:
                shifted[:-j] = False
            hit |= shifted
        return self.indices[hit]

    def support_width(self) -> int:
        return int(self.support_set().size)

    def derivative_sup_norms(self, epsilon: float) -> tuple[float, float, float]:
        """Sup norms of the discrete derivatives D, D2, D3 applied to beta."""
        beta = self.values
        d1 = np.diff(beta) / epsilon
        d2 = np.diff(d1) / epsilon
        d3 = np.diff(d2) / epsilon
        sup = lambda a: float(np.max(np.abs(a))) if a.size else 0.0
        return sup(d1), sup(d2), sup(d3)


def support_width_of(beta: np.ndarray) -> int:
    """Support cardinality for an arbitrary sampled profile."""
    frac = (beta > 0.0) & (beta < 1.0)
    hit = np.zeros_like(frac)
    for j in range(-2, 3):
        shifted = np.roll(frac, -j)
        if j > 0:
            shifted[-j:] = False
        elif j < 0:
            shifted[:-j] = False
        hit |= shifted
    return int(np.count_nonzero(hit))


@dataclass(frozen=True)
class RadialBlend2D:
    """Radial blend beta(x) = B((Rb - |x|) / (Rb - Ra)) in lattice units.

    beta == 1 on |x| <= Ra (atomistic weight) and beta == 0 for |x| >= Rb.
    With kind=INDICATOR the blend degenerates to the sharp QCF interface
    beta = 1 on |x| <= Ra.
    """

    R_a: float
    R_b: float
    kind: str = CUBIC

    def __post_init__(self):
        if self.kind != INDICATOR and not self.R_a < self.R_b:
            raise ValueError("need R_a < R_b")

    def __call__(self, pos: np.ndarray) -> np.ndarray:
        """Evaluate at positions, shape (..., 2), unscaled lattice units."""
        pos = np.asarray(pos, dtype=float)
        r = np.linalg.norm(pos, axis=-1)
        if self.kind == INDICATOR:
            return (r <= self.R_a).astype(float)
        return spline_eval(self.kind, (self.R_b - r) / (self.R_b - self.R_a))
