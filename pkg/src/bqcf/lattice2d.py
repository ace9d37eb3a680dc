"""Triangular lattice geometry: periodic cells, hexagonal Dirichlet domains,
region decomposition, vacancies and 2D difference operators.

All geometry is kept in unscaled lattice units (nearest-neighbor spacing 1,
integer coordinates (m1, m2) with positions m1*(1,0) + m2*(1/2, sqrt(3)/2));
the scaling eps = 1/N enters only in difference quotients and norms.

Two site universes are supported:

* the periodic parallelogram cell A6 (-N/2, N/2]^2 with N^2 sites and exact
  modular wrap (used for the periodic operators and oracles);
* finite hexagonal Dirichlet domains Hex(R): free sites fill Hex(R-1), the
  boundary ring Hex(R) plus one halo ring are clamped to the homogeneous
  deformation B x, which realizes the far-field condition y ~ B x since no
  second-neighbor bond from a free site reaches past the halo.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

SQRT3 = np.sqrt(3.0)
POS_MAT = np.array([[1.0, 0.5], [0.0, SQRT3 / 2.0]])
CELL_VOLUME = SQRT3 / 2.0  # primitive-cell area, unscaled units

# integer-coordinate neighbor offsets; a3 = -a1 + a2, b_i = a_i + a_{i+1}
A_OFFSETS = ((1, 0), (0, 1), (-1, 1))
B_OFFSETS = ((1, 1), (-1, 2), (-2, 1))
PLUS_OFFSETS = A_OFFSETS + B_OFFSETS
ALL_OFFSETS = PLUS_OFFSETS + tuple((-p, -q) for p, q in PLUS_OFFSETS)


def offset_position(offset) -> np.ndarray:
    """Unscaled bond vector of an integer-coordinate offset."""
    return POS_MAT @ np.asarray(offset, dtype=float)


def hexrad(m1, m2):
    """Hexagonal radius: Hex(R) = {max(|m1|, |m2|, |m1+m2|) <= R}."""
    return np.maximum(np.maximum(np.abs(m1), np.abs(m2)), np.abs(m1 + m2))


def hex_contains(R: int, m1, m2):
    return hexrad(m1, m2) <= R


def hex_site_count(R: int) -> int:
    return 3 * R * R + 3 * R + 1


def hex_coords(R: int) -> np.ndarray:
    """Integer coordinates of all sites in Hex(R), lexicographically ordered."""
    rng = np.arange(-R, R + 1)
    m1, m2 = np.meshgrid(rng, rng, indexing="ij")
    m1, m2 = m1.ravel(), m2.ravel()
    keep = hex_contains(R, m1, m2)
    return np.column_stack([m1[keep], m2[keep]])


@dataclass(frozen=True)
class VacancySet:
    """Removed lattice sites, by integer coordinate."""

    coords: tuple[tuple[int, int], ...] = ()

    @staticmethod
    def none() -> "VacancySet":
        return VacancySet(())

    @staticmethod
    def microcrack(n_atoms: int) -> "VacancySet":
        """n_atoms collinear sites along e1, centered at the origin."""
        if n_atoms % 2 == 0:
            raise ValueError("micro-crack length must be odd")
        k = n_atoms // 2
        return VacancySet(tuple((j, 0) for j in range(-k, k + 1)))

    @staticmethod
    def divacancy() -> "VacancySet":
        return VacancySet(((0, 0), (1, 0)))

    def __len__(self):
        return len(self.coords)

    def max_hexrad(self) -> int:
        if not self.coords:
            return -1
        arr = np.array(self.coords)
        return int(np.max(hexrad(arr[:, 0], arr[:, 1])))


class TriangularLattice:
    """Periodic parallelogram cell with N^2 sites, N even."""

    def __init__(self, N: int):
        if N < 4 or N % 2:
            raise ValueError("need even N >= 4")
        self.N = N
        self.epsilon = 1.0 / N
        self.lo = -N // 2 + 1
        rng = np.arange(self.lo, self.lo + N)
        m1, m2 = np.meshgrid(rng, rng, indexing="ij")
        self.coords = np.column_stack([m1.ravel(), m2.ravel()])

    @property
    def n_sites(self) -> int:
        return self.N * self.N

    def site_id(self, m1, m2):
        """Integer coordinates -> site id, with periodic wrap."""
        N = self.N
        return ((np.asarray(m1) - self.lo) % N) * N + ((np.asarray(m2) - self.lo) % N)

    def positions(self) -> np.ndarray:
        return self.coords.astype(float) @ POS_MAT.T

    def neighbor_ids(self, offset) -> np.ndarray:
        p, q = offset
        return self.site_id(self.coords[:, 0] + p, self.coords[:, 1] + q)


@dataclass(frozen=True)
class RegionDecomposition:
    """Atomistic/blending/continuum partition of a periodic cell."""

    R_a: int
    R_b: int
    atomistic: np.ndarray
    blending: np.ndarray
    continuum: np.ndarray

    @property
    def K(self) -> int:
        return self.R_b - self.R_a


def classify_sites(lattice: TriangularLattice, R_a: int, R_b: int) -> RegionDecomposition:
    if not 0 <= R_a < R_b < lattice.N / 2:
        raise ValueError("need 0 <= R_a < R_b < N/2")
    r = hexrad(lattice.coords[:, 0], lattice.coords[:, 1])
    ids = np.arange(lattice.n_sites)
    return RegionDecomposition(
        R_a=R_a,
        R_b=R_b,
        atomistic=ids[r <= R_a],
        blending=ids[(r > R_a) & (r <= R_b)],
        continuum=ids[r > R_b],
    )


class Domain2D:
    """Common site universe for 2D operator assembly and forces.

    Attributes:
      coords:   (n, 2) integer coordinates
      free:     (n,) mask of unknown sites (rows/cols of assembled operators)
      present:  (n,) mask of actual atoms (False exactly on vacancies)
      nbr:      dict offset -> (n,) neighbor ids, -1 where the neighbor is
                not an explicit site (never happens for free sites)
    """

    def __init__(self, kind, coords, free, present, nbr, epsilon, n_translations):
        self.kind = kind
        self.coords = coords
        self.free = free
        self.present = present
        self.nbr = nbr
        self.epsilon = epsilon
        self.n_translations = n_translations
        self.free_ids = np.flatnonzero(free)
        self.n_free = int(self.free_ids.size)
        # position of each site id in the free numbering, -1 if pinned
        self.free_index = np.full(coords.shape[0], -1, dtype=np.int64)
        self.free_index[self.free_ids] = np.arange(self.n_free)
        self._cache: dict = {}

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    def positions(self) -> np.ndarray:
        return self.coords.astype(float) @ POS_MAT.T

    @staticmethod
    def periodic(lattice: TriangularLattice, vacancies: VacancySet = VacancySet.none()) -> "Domain2D":
        n = lattice.n_sites
        present = np.ones(n, dtype=bool)
        for (p, q) in vacancies.coords:
            present[int(lattice.site_id(p, q))] = False
        free = present.copy()
        nbr = {off: lattice.neighbor_ids(off) for off in ALL_OFFSETS}
        return Domain2D(
            "periodic", lattice.coords, free, present, nbr,
            lattice.epsilon, n_translations=2,
        )

    @staticmethod
    def hexagonal(R_dom: int, epsilon: float, vacancies: VacancySet = VacancySet.none()) -> "Domain2D":
        """Dirichlet hexagon: free sites Hex(R_dom - 1), clamped halo to Hex(R_dom + 1)."""
        if R_dom < 3:
            raise ValueError("hexagonal domain radius too small")
        if vacancies.coords and vacancies.max_hexrad() >= R_dom - 1:
            raise ValueError("vacancies must lie strictly inside the domain")
        coords = hex_coords(R_dom + 1)
        n = coords.shape[0]
        key = _encode(coords[:, 0], coords[:, 1])
        order = np.argsort(key)
        key_sorted = key[order]

        def lookup(m1, m2):
            k = _encode(m1, m2)
            pos = np.searchsorted(key_sorted, k)
            pos = np.clip(pos, 0, n - 1)
            ids = order[pos]
            ok = key_sorted[np.clip(pos, 0, n - 1)] == k
            return np.where(ok, ids, -1)

        present = np.ones(n, dtype=bool)
        for (p, q) in vacancies.coords:
            sid = lookup(np.array([p]), np.array([q]))[0]
            present[sid] = False
        r = hexrad(coords[:, 0], coords[:, 1])
        free = (r <= R_dom - 1) & present
        nbr = {
            off: lookup(coords[:, 0] + off[0], coords[:, 1] + off[1])
            for off in ALL_OFFSETS
        }
        dom = Domain2D("dirichlet", coords, free, present, nbr, epsilon, 0)
        dom.R_dom = R_dom
        dom._lookup = lookup
        return dom

    def site_id_of(self, m1, m2):
        if self.kind == "dirichlet":
            return self._lookup(np.asarray(m1), np.asarray(m2))
        raise NotImplementedError

    def neighbors(self, site: int) -> list[tuple[tuple[int, int], Optional[int]]]:
        """The 12 neighbor bonds of a site; None marks a removed/missing bond."""
        if not self.present[site]:
            raise ValueError("site is a vacancy")
        out = []
        for off in ALL_OFFSETS:
            j = int(self.nbr[off][site])
            if j < 0 or not self.present[j]:
                out.append((off, None))
            else:
                out.append((off, j))
        return out


def _encode(m1, m2) -> np.ndarray:
    return np.asarray(m1, dtype=np.int64) * 2**20 + np.asarray(m2, dtype=np.int64)


def hexagonal_domain_for(N: int, vacancies: VacancySet = VacancySet.none()) -> Domain2D:
    """Dirichlet domain conventional for cell parameter N: Hex(N//2 - 1)."""
    return Domain2D.hexagonal(N // 2 - 1, 1.0 / N, vacancies)


def diff2d(domain: Domain2D, u: np.ndarray, offset) -> np.ndarray:
    """D_r u = (u(x + r) - u(x)) / eps, periodic domains only."""
    ids = domain.nbr[tuple(offset)]
    if np.any(ids < 0):
        raise ValueError("difference leaves the domain")
    return (u[ids] - u) / domain.epsilon


def diff2d2(domain: Domain2D, u: np.ndarray, offset_r, offset_s) -> np.ndarray:
    """Composed difference D_r D_s u."""
    return diff2d(domain, diff2d(domain, u, offset_s), offset_r)
