"""Benchmark command line driver.

Subcommands emit deterministic CSV (fixed headers, 17 significant digits):

* expansion1d -- 1D uniform expansion, atomistic vs B-QCF critical strains;
* expansion2d -- 2D uniform expansion on a hexagonal Dirichlet domain;
* shear2d     -- y-directional shear, relative critical strain errors;
* stabregion  -- boolean stability maps over a grid of homogeneous strains;
* microcrack  -- nonlinear critical strains of a stretched micro-crack;
* accuracy    -- energy-norm error vs degrees of freedom for the coarse
                 benchmark cases.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .blending import CUBIC, INDICATOR, QUINTIC, BlendProfile1D, RadialBlend2D
from .chain1d import DIRICHLET, Chain1D, assemble_La_1d, assemble_Lbqcf_1d
from .coarse import BENCHMARK_CASES, run_benchmark
from .lattice2d import VacancySet, hexagonal_domain_for
from .linalg import EigenSolveError
from .operators2d import HomogeneousFamily, blend_field, bqcf_family
from .potential import PairPotential
from .stability import (
    critical_strain_linear,
    critical_strain_nonlinear,
    stability_region,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    """Invalid command line configuration."""


class SolverError(RuntimeError):
    """A solve did not converge or a critical strain was not bracketed."""


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Optional[str], header: str, rows: list[tuple]) -> None:
    lines = [header] + [",".join(_fmt(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


# -- parameter rules ----------------------------------------------------------

def parse_int_list(text: str, name: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name}: expected comma-separated integers") from exc
    if not values:
        raise ConfigError(f"{name} must be nonempty")
    if any(v <= 0 for v in values):
        raise ConfigError(f"{name} entries must be positive")
    return values


def parse_ra_rule(text: str) -> Callable[[int, int], int]:
    """Atomistic-core radius rule: R_a as a function of (K, N).

    Accepted forms: ``fixed:<v>``, ``pow53`` (K^(5/3)), ``sqrtN``,
    ``maxK2`` (max(K^2, 6)); all values floored to integers.
    """
    text = text.strip()
    if text.startswith("fixed:"):
        try:
            v = int(text.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError("fixed R_a rule needs an integer value") from exc
        if v <= 0:
            raise ConfigError("fixed R_a must be positive")
        return lambda K, N: v
    if text == "pow53":
        return lambda K, N: int(np.floor(K ** (5.0 / 3.0)))
    if text == "sqrtN":
        return lambda K, N: int(np.floor(np.sqrt(N)))
    if text == "maxK2":
        return lambda K, N: max(K * K, 6)
    raise ConfigError(f"unknown R_a rule {text!r}")


def _blend_kind(name: str) -> str:
    if name not in (CUBIC, QUINTIC):
        raise ConfigError(f"blend must be {CUBIC!r} or {QUINTIC!r}")
    return name


@dataclass
class ExperimentConfig:
    subcommand: str
    n_list: list[int]
    alpha: float
    blend: str
    k_list: list[int]
    dgamma: Optional[float]
    ra_rule: Callable[[int, int], int]
    out: Optional[str]
    threads: int

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.dgamma is not None and self.dgamma <= 0:
            raise ConfigError("dgamma must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not self.n_list or any(n <= 0 for n in self.n_list):
            raise ConfigError("N values must be positive")
        if not self.k_list:
            raise ConfigError("K list must be nonempty")


def _config_from_args(args, default_rule: str) -> ExperimentConfig:
    return ExperimentConfig(
        subcommand=args.command,
        n_list=parse_int_list(args.n, "--n"),
        alpha=args.alpha,
        blend=_blend_kind(args.blend),
        k_list=parse_int_list(args.k_list, "--k-list"),
        dgamma=args.dgamma,
        ra_rule=parse_ra_rule(args.ra_rule or default_rule),
        out=args.out,
        threads=args.threads,
    )


def _require(result, what: str):
    if not result.converged:
        reason = result.metadata.get("reason", "no bracket")
        raise SolverError(f"{what}: {reason}")
    return result.gamma


# -- 1D expansion -------------------------------------------------------------

class _NearestNeighborOnly(PairPotential):
    """Debug potential: second-neighbor bonds (r > 1.5) contribute nothing."""

    def _mask(self, r, vals):
        return np.where(np.asarray(r, dtype=float) < 1.5, vals, 0.0)

    def phi(self, r):
        return self._mask(r, super().phi(r))

    def dphi(self, r):
        return self._mask(r, super().dphi(r))

    def ddphi(self, r):
        return self._mask(r, super().ddphi(r))


def cmd_expansion1d(cfg: ExperimentConfig, nn_only: bool = False) -> list[tuple]:
    """Critical expansion strains of Dirichlet chains, atomistic vs B-QCF."""
    N = cfg.n_list[0]
    dgamma = cfg.dgamma if cfg.dgamma is not None else 1.0 / N**2
    cls = _NearestNeighborOnly if nn_only else PairPotential
    pot = cls(cfg.alpha)

    def op_atomistic(g):
        return assemble_La_1d(Chain1D(N, DIRICHLET, 1.0 + g), pot)

    gamma_a = _require(
        critical_strain_linear(op_atomistic, dgamma),
        "1D atomistic expansion",
    )
    rows = []
    for K in cfg.k_list:
        profile = BlendProfile1D(K, N, cfg.blend)

        def op_bqcf(g):
            return assemble_Lbqcf_1d(Chain1D(N, DIRICHLET, 1.0 + g), pot, profile)

        gamma_b = _require(
            critical_strain_linear(op_bqcf, dgamma),
            f"1D B-QCF expansion, K={K}",
        )
        rows.append((K, cfg.alpha, cfg.blend, gamma_a, gamma_b,
                     abs(gamma_a - gamma_b)))
    return rows


# -- 2D linear stability paths -------------------------------------------------

def _critical_strain_family(family, B_of, dgamma) -> float:
    res = critical_strain_linear(lambda g: family.operator(B_of(g)), dgamma)
    return _require(res, f"2D {family.model} critical strain")


def _expansion_B(g):
    return (1.0 + g) * np.eye(2)


def _shear_B(g):
    return np.array([[1.0, 0.0], [g, 1.0]])


def cmd_expansion2d(cfg: ExperimentConfig, beta_one: bool = False) -> list[tuple]:
    """2D uniform expansion on a hexagonal Dirichlet domain."""
    N = cfg.n_list[0]
    dgamma = cfg.dgamma if cfg.dgamma is not None else 1e-8
    pot = PairPotential(cfg.alpha)
    domain = hexagonal_domain_for(N)
    ones = np.ones(domain.n_sites)
    atom = HomogeneousFamily(domain, pot, ones, np.zeros_like(ones), "a")
    gamma_a = _critical_strain_family(atom, _expansion_B, dgamma)
    rows = []
    for K in cfg.k_list:
        R_a = cfg.ra_rule(K, N)
        if beta_one:
            family = atom
        else:
            blend = RadialBlend2D(R_a, R_a + K, cfg.blend)
            family = bqcf_family(domain, pot, blend)
        gamma_b = _critical_strain_family(family, _expansion_B, dgamma)
        rows.append((K, R_a, cfg.alpha, cfg.blend, gamma_a, gamma_b,
                     abs(gamma_a - gamma_b)))
    return rows


def cmd_shear2d(cfg: ExperimentConfig, k_fixed: bool) -> list[tuple]:
    """y-directional shear; relative critical strain errors per (N, K)."""
    dgamma = cfg.dgamma if cfg.dgamma is not None else 1e-8
    pot = PairPotential(cfg.alpha)
    rows = []
    for N in cfg.n_list:
        domain = hexagonal_domain_for(N)
        ones = np.ones(domain.n_sites)
        atom = HomogeneousFamily(domain, pot, ones, np.zeros_like(ones), "a")
        gamma_a = _critical_strain_family(atom, _shear_B, dgamma)
        k_values = cfg.k_list if k_fixed else [int(np.floor(N ** 0.3))]
        for K in k_values:
            R_a = cfg.ra_rule(K, N)
            blend = RadialBlend2D(R_a, R_a + K, cfg.blend)
            family = bqcf_family(domain, pot, blend)
            gamma_b = _critical_strain_family(family, _shear_B, dgamma)
            rows.append((N, R_a, K, gamma_a, gamma_b,
                         abs(gamma_a - gamma_b) / gamma_a))
    return rows


def cmd_stabregion(cfg: ExperimentConfig) -> list[tuple]:
    """Stability maps of atm, qcl, qcf and B-QCF over a 41x41 strain grid."""
    N = cfg.n_list[0]
    pot = PairPotential(cfg.alpha)
    domain = hexagonal_domain_for(N)
    ones = np.ones(domain.n_sites)
    zeros = np.zeros(domain.n_sites)
    R_a = cfg.ra_rule(cfg.k_list[0], N)
    models = [
        ("atm", HomogeneousFamily(domain, pot, ones, zeros, "a")),
        ("qcl", HomogeneousFamily(domain, pot, zeros, ones, "c")),
        ("qcf", bqcf_family(domain, pot, RadialBlend2D(R_a, R_a + 1, INDICATOR))),
    ]
    for K in cfg.k_list:
        blend = RadialBlend2D(R_a, R_a + K, cfg.blend)
        models.append((f"bqcf_k{K}", bqcf_family(domain, pot, blend)))

    grid = np.linspace(-0.1, 0.1, 41)
    rows = []
    for name, family in models:
        def op(s, r):
            B = np.array([[1.0 + s, 0.1], [0.0, 1.0 + r]])
            return family.operator(B)

        stable = stability_region(op, grid, grid)
        for i, s in enumerate(grid):
            for j, r in enumerate(grid):
                rows.append((name, s, r, int(stable[i, j])))
    return rows


# -- nonlinear micro-crack ------------------------------------------------------

def _stretch_B(g):
    return np.array([[1.0, 0.0], [0.0, 1.0 + g]])


def cmd_microcrack(cfg: ExperimentConfig, crack_length: int = 5) -> list[tuple]:
    """Nonlinear critical strains of a vertically stretched micro-crack."""
    dgamma = cfg.dgamma if cfg.dgamma is not None else 1e-8
    pot = PairPotential(cfg.alpha)
    vac = (VacancySet.microcrack(crack_length) if crack_length > 0
           else VacancySet.none())
    rows = []
    for N in cfg.n_list:
        domain = hexagonal_domain_for(N, vac)
        gamma_a = _require(
            critical_strain_nonlinear(
                domain, pot, np.ones(domain.n_sites), _stretch_B, dgamma),
            f"atomistic micro-crack, N={N}",
        )
        for K in cfg.k_list:
            R_a = cfg.ra_rule(K, N)
            beta = blend_field(domain, RadialBlend2D(R_a, R_a + K, cfg.blend))
            gamma_b = _require(
                critical_strain_nonlinear(domain, pot, beta, _stretch_B, dgamma),
                f"B-QCF micro-crack, N={N}, K={K}",
            )
            rows.append((K, R_a, N, gamma_a, gamma_b,
                         abs(gamma_a - gamma_b) / gamma_a))
    return rows


# -- coarse accuracy benchmark ---------------------------------------------------

def cmd_accuracy(cfg: ExperimentConfig, case: str, methods: list[str],
                 ra_list: list[int], n_ref: Optional[int]) -> list[tuple]:
    if case not in BENCHMARK_CASES:
        raise ConfigError(f"unknown case {case!r}")
    known = {"atm", "qcf", "bqcf"}
    if not methods:
        raise ConfigError("method list must be nonempty")
    if not set(methods) <= known:
        raise ConfigError(f"methods must be a subset of {sorted(known)}")
    pot = PairPotential(cfg.alpha)
    try:
        records, _ = run_benchmark(case, methods, ra_list, potential=pot,
                                   n_ref=n_ref, threads=cfg.threads)
    except RuntimeError as exc:
        raise SolverError(str(exc)) from exc
    return [(r.method, r.case, r.R_a, r.K, r.N, r.dof, r.error)
            for r in records]


# -- argument parsing ------------------------------------------------------------

HEADERS = {
    "expansion1d": "K,alpha,blend,gamma_a,gamma_bqcf,abs_err",
    "expansion2d": "K,Ra,alpha,blend,gamma_a,gamma_bqcf,abs_err",
    "shear2d": "N,Ra,K,gamma_a,gamma_bqcf,rel_err",
    "stabregion": "model,s,r,stable",
    "microcrack": "K,Ra,N,gamma_a,gamma_bqcf,rel_err",
    "accuracy": "method,case,Ra,K,N,dof,err",
}

_DEFAULTS = {
    # (n, blend, k_list, default ra rule)
    "expansion1d": ("40000", QUINTIC, "4,8,16,32,64", "fixed:1"),
    "expansion2d": ("100", QUINTIC, "2,3,4,5,6", "pow53"),
    "shear2d": ("100", QUINTIC, "2,4,8", "sqrtN"),
    "stabregion": ("50", CUBIC, "2,4", "fixed:10"),
    "microcrack": ("100", QUINTIC, "2,4", "sqrtN"),
    "accuracy": ("100", CUBIC, "2", "fixed:1"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bqcf-bench",
        description="Blended force-based atomistic/continuum benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HEADERS:
        n0, blend0, klist0, _ = _DEFAULTS[name]
        p = sub.add_parser(name)
        p.add_argument("--n", default=n0,
                       help="domain size parameter(s), comma separated")
        p.add_argument("--alpha", type=float,
                       default=3.0 if name == "expansion1d" else 4.0)
        p.add_argument("--blend", default=blend0, choices=[CUBIC, QUINTIC])
        p.add_argument("--k-list", default=klist0)
        p.add_argument("--dgamma", type=float, default=None)
        p.add_argument("--ra-rule", default=None,
                       help="fixed:<v> | pow53 | sqrtN | maxK2")
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
    sub.choices["expansion1d"].add_argument(
        "--nn-only", action="store_true",
        help="debug: drop second-neighbor bonds (models coincide)")
    sub.choices["expansion2d"].add_argument(
        "--beta-one", action="store_true",
        help="debug: run the blended column with beta = 1 (atomistic)")
    sub.choices["shear2d"].add_argument(
        "--k-from-n", action="store_true",
        help="ignore --k-list and use K = floor(N^(3/10)) per N")
    sub.choices["microcrack"].add_argument(
        "--crack-length", type=int, default=5,
        help="number of removed atoms; 0 for the defect-free debug case")
    acc = sub.choices["accuracy"]
    acc.add_argument("--case", default="divacancy",
                     choices=sorted(BENCHMARK_CASES))
    acc.add_argument("--methods", default="atm,qcf,bqcf")
    acc.add_argument("--ra-list", default="6,10,16,24")
    acc.add_argument("--n-ref", type=int, default=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args, _DEFAULTS[args.command][3])
        if args.command == "expansion1d":
            rows = cmd_expansion1d(cfg, nn_only=args.nn_only)
        elif args.command == "expansion2d":
            rows = cmd_expansion2d(cfg, beta_one=args.beta_one)
        elif args.command == "shear2d":
            rows = cmd_shear2d(cfg, k_fixed=not args.k_from_n)
        elif args.command == "stabregion":
            rows = cmd_stabregion(cfg)
        elif args.command == "microcrack":
            if args.crack_length < 0:
                raise ConfigError("crack length must be nonnegative")
            rows = cmd_microcrack(cfg, crack_length=args.crack_length)
        else:
            methods = [m for m in args.methods.split(",") if m.strip()]
            ra_list = parse_int_list(args.ra_list, "--ra-list")
            rows = cmd_accuracy(cfg, args.case, methods, ra_list, args.n_ref)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, EigenSolveError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_csv(cfg.out, HEADERS[args.command], rows)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
