"""Critical strains and stability regions.

A model state is called stable when the smallest eigenvalue of the symmetric
part of its linearized operator, restricted to the admissible subspace,
exceeds the relative threshold eta = 1e-10 * max row sum.  Critical strains
are resolved to a prescribed increment dgamma:

* linear path: bisection on a bracket found by coarse marching, using
  boolean definiteness tests only, followed by a short forward scan that
  verifies the instability persists past the reported strain;
* nonlinear path: arc continuation of the force equilibrium with
  warm-started Newton iterations and tenfold step refinement; a step is
  accepted only if Newton converges, the state stays close to the warm
  start, and the state linearization remains positive definite.

The reported critical strain is always the last stable strain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .lattice2d import Domain2D
from .linalg import AssembledOperator, is_positive_definite, min_eig_sym
from .operators2d import force_bqcf_2d, hessian_bqcf_2d, uniform_deformation
from .potential import PairPotential


@dataclass
class CriticalStrainResult:
    gamma: float              # last stable strain
    dgamma: float             # resolution of the search
    converged: bool           # bracket found and verification scan passed
    n_evals: int
    min_eig: Optional[float] = None
    metadata: dict = field(default_factory=dict)


def critical_strain_linear(
    operator_of: Callable[[float], AssembledOperator],
    dgamma: float,
    gamma_max: float = 1.0,
    initial_step: float = 0.01,
    eta: Optional[float] = None,
    verify_points: int = 8,
    compute_eig: bool = False,
) -> CriticalStrainResult:
    """Critical strain of a one-parameter operator family by bisection."""
    if dgamma <= 0:
        raise ValueError("dgamma must be positive")
    n_evals = 0

    def stable(g: float) -> bool:
        nonlocal n_evals
        n_evals += 1
        return is_positive_definite(operator_of(g), eta=eta)

    if not stable(0.0):
        return CriticalStrainResult(0.0, dgamma, False, n_evals,
                                    metadata={"reason": "unstable at zero strain"})

    # coarse march to bracket the instability
    lo, hi = 0.0, None
    g, step = 0.0, max(initial_step, dgamma)
    while g < gamma_max:
        g = min(g + step, gamma_max)
        if stable(g):
            lo = g
        else:
            hi = g
            break
    if hi is None:
        return CriticalStrainResult(lo, dgamma, False, n_evals,
                                    metadata={"reason": "stable up to gamma_max"})

    while hi - lo > dgamma * (1.0 + 1e-9):
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid

    verified = all(not stable(lo + k * dgamma) for k in range(1, verify_points + 1))
    lam = None
    if compute_eig:
        lam, _ = min_eig_sym(operator_of(lo))
    return CriticalStrainResult(lo, dgamma, verified, n_evals, min_eig=lam)


def stability_region(
    operator_of: Callable[[float, float], AssembledOperator],
    s_values: np.ndarray,
    r_values: np.ndarray,
    eta: Optional[float] = None,
) -> np.ndarray:
    """Boolean stability map over a strain grid; entry [i, j] is (s_i, r_j)."""
    out = np.zeros((len(s_values), len(r_values)), dtype=bool)
    for i, s in enumerate(s_values):
        for j, r in enumerate(r_values):
            out[i, j] = is_positive_definite(operator_of(s, r), eta=eta)
    return out


# -- nonlinear equilibria ------------------------------------------------------

@dataclass
class NewtonReport:
    converged: bool
    n_iter: int
    residual: float
    update_norm: float


def newton_solve(
    domain: Domain2D,
    potential: PairPotential,
    beta: np.ndarray,
    y0: np.ndarray,
    tol: float = 1e-5,
    max_iter: int = 30,
    residual_guard: float = 100.0,
) -> tuple[np.ndarray, NewtonReport]:
    """Solve F^bqcf(y) = 0 for the free sites; pinned values of y0 are kept.

    Convergence is declared on the sup norm of the Newton update.  Steps
    that increase the residual are halved (overshoot into the stiff Morse
    core explodes the forces); the residual guard aborts runs that wander
    off entirely, and is relative to the starting residual, whose natural
    scale is 1/eps.
    """
    y = y0.copy()
    free = domain.free_ids
    update_norm = np.inf
    resid = np.inf
    guard = residual_guard
    for it in range(1, max_iter + 1):
        F = force_bqcf_2d(domain, potential, beta, y)[free].ravel()
        resid = float(np.max(np.abs(F))) if F.size else 0.0
        if it == 1:
            guard = residual_guard * max(1.0, resid)
        if not np.isfinite(resid) or resid > guard:
            return y, NewtonReport(False, it, resid, update_norm)
        L = hessian_bqcf_2d(domain, potential, beta, y)
        try:
            # structurally symmetric Newton matrix: symmetric fill-in ordering
            delta = spla.splu(
                L.matrix.tocsc(), permc_spec="MMD_AT_PLUS_A"
            ).solve(F)
        except RuntimeError:
            return y, NewtonReport(False, it, resid, update_norm)
        if not np.all(np.isfinite(delta)):
            return y, NewtonReport(False, it, resid, update_norm)
        update_norm = float(np.max(np.abs(delta))) if delta.size else 0.0
        if update_norm <= tol:
            y[free] += delta.reshape(-1, 2)
            F = force_bqcf_2d(domain, potential, beta, y)[free].ravel()
            resid = float(np.max(np.abs(F))) if F.size else 0.0
            return y, NewtonReport(True, it, resid, update_norm)
        r2 = float(np.linalg.norm(F))
        s, accepted = 1.0, False
        for _ in range(9):
            y_trial = y.copy()
            y_trial[free] += s * delta.reshape(-1, 2)
            F_trial = force_bqcf_2d(domain, potential, beta, y_trial)[free].ravel()
            r2_trial = float(np.linalg.norm(F_trial))
            if np.isfinite(r2_trial) and r2_trial < r2:
                y = y_trial
                accepted = True
                break
            s *= 0.5
        if not accepted:
            return y, NewtonReport(False, it, resid, update_norm)
    return y, NewtonReport(False, max_iter, resid, update_norm)


def critical_strain_nonlinear(
    domain: Domain2D,
    potential: PairPotential,
    beta: np.ndarray,
    B_of: Callable[[float], np.ndarray],
    dgamma: float,
    gamma_max: float = 1.0,
    initial_step: float = 0.01,
    newton_tol: float = 1e-5,
    jump_guard: Optional[float] = None,
    eta: Optional[float] = None,
) -> CriticalStrainResult:
    """Critical strain along a nonlinear loading path B_of(gamma).

    Continuation from gamma = 0 with warm-started Newton solves.  Failed
    steps trigger tenfold refinement down to dgamma; the strain reported is
    the largest accepted stable strain.
    """
    if jump_guard is None:
        jump_guard = 50.0 * domain.epsilon
    n_evals = 0

    def try_state(y_start, gamma):
        nonlocal n_evals
        n_evals += 1
        y, rep = newton_solve(domain, potential, beta, y_start,
                              tol=newton_tol)
        if not rep.converged:
            return None
        drift = float(np.max(np.abs(y[domain.free_ids] - y_start[domain.free_ids])))
        if drift > jump_guard:
            return None
        L = hessian_bqcf_2d(domain, potential, beta, y)
        if not is_positive_definite(L, eta=eta):
            return None
        return y

    y = try_state(uniform_deformation(domain, B_of(0.0)), 0.0)
    if y is None:
        return CriticalStrainResult(0.0, dgamma, False, n_evals,
                                    metadata={"reason": "unstable at zero strain"})
    gamma = 0.0
    step = max(initial_step, dgamma)
    hit_cap = False
    while True:
        if gamma >= gamma_max:
            hit_cap = True
            break
        trial = min(gamma + step, gamma_max)
        shift = uniform_deformation(domain, B_of(trial) - B_of(gamma))
        y_trial = try_state(y + shift, trial)
        if y_trial is not None:
            gamma, y = trial, y_trial
            continue
        if step <= dgamma * (1.0 + 1e-9):
            break
        step = max(step / 10.0, dgamma)
    return CriticalStrainResult(
        gamma, dgamma, not hit_cap, n_evals,
        metadata={} if not hit_cap else {"reason": "stable up to gamma_max"},
    )


def critical_eigenmode(op: AssembledOperator) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of the symmetric part, eigenvector as (n, 2) field."""
    lam, vec = min_eig_sym(op)
    return lam, vec.reshape(-1, 2)
