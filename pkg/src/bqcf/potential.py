"""Morse pair potential with exact derivatives, in scalar and 2D-vector-bond form.

All bond lengths are measured in unscaled lattice units (nearest-neighbor
spacing 1), so the potential minimum sits at r = 1.  Interactions are cut
off structurally by only ever enumerating first- and second-neighbor bonds;
the potential itself is left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PairPotential:
    """Morse potential phi(r) = [1 - exp(-alpha (r - 1))]^2."""

    alpha: float
    neighbor_cutoff: int = 2

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise ValueError("bond length must be positive")
        e = np.exp(-self.alpha * (r - 1.0))
        return (1.0 - e) ** 2

    def dphi(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise ValueError("bond length must be positive")
        e = np.exp(-self.alpha * (r - 1.0))
        return 2.0 * self.alpha * e * (1.0 - e)

    def ddphi(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise ValueError("bond length must be positive")
        e = np.exp(-self.alpha * (r - 1.0))
        return 2.0 * self.alpha**2 * e * (2.0 * e - 1.0)


@dataclass(frozen=True)
class VectorPairPotential:
    """phi(r) = phi1(|r|) for a 2-vector bond r, with gradient and hessian.

    grad(r) = phi1'(|r|) rhat and
    hess(r) = phi1''(|r|) rhat x rhat + (phi1'(|r|)/|r|) (Id - rhat x rhat),
    which is symmetric for every r != 0.
    """

    scalar: PairPotential

    def value(self, r):
        return self.scalar.phi(_norm(r))

    def grad(self, r):
        r = np.asarray(r, dtype=float)
        n = _norm(r)
        return (self.scalar.dphi(n) / n)[..., None] * r

    def hess(self, r):
        r = np.asarray(r, dtype=float)
        n = _norm(r)
        rhat = r / n[..., None]
        proj = rhat[..., :, None] * rhat[..., None, :]
        eye = np.eye(2)
        dp = self.scalar.dphi(n)[..., None, None]
        ddp = self.scalar.ddphi(n)[..., None, None]
        return ddp * proj + dp / n[..., None, None] * (eye - proj)


def _norm(r):
    r = np.asarray(r, dtype=float)
    n = np.linalg.norm(r, axis=-1)
    if np.any(n == 0.0):
        raise ValueError("zero-length bond")
    return n
