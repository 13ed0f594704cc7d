"""Auxiliary iterative schemes for d*d source and eigenvalue problems.

Source problem ``(A + c M) u = f``: solve the Laplace-like system
``(A + B^T U B + c M) w = f`` instead, then recover
``u = w + M^-1 B^T U B w / c``.

Eigenvalue problem ``A u = lam M u``: compute eigenpairs of
``(A + B^T U B) u = lam M u`` and sort them by the recomputed quotient
``u^T A u / u^T M u`` into harmonic (type 0), curl/div-type (type 1),
auxiliary (type 2) and mixed (type 3) pairs.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .fem import ComplexOperators, build_auxiliary_matrix
from .krylov import EigenReport, SolveReport, cg, lobpcg
from .precond import (
    PRECONDITIONERS,
    ILU0Preconditioner,
    MGPreconditioner,
    MgHierarchy,
    SAITPreconditioner,
    mg_solve,
)

__all__ = [
    "SolverConfig",
    "SourceSolution",
    "EigenType",
    "ClassifiedEigenpair",
    "EigenSolution",
    "make_preconditioner",
    "solve_source",
    "residual_propagation_check",
    "spectral_radius_bound",
    "error_bound",
    "classify_eigenpair",
    "solve_eigen",
]

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    solver: str = "cg"  # cg | mg (stand-alone V-cycles)
    precond: str = "none"  # none | ilu0 | sait | mg
    tol: float = 1e-8
    mass_tol: float | None = None  # default 1e-4 * tol
    mass_precond: str = "none"  # none | ilu0
    maxit: int = 5000
    nu: int = 5
    sait_tau: float = 0.05
    sait_m: int = 10
    precond_c: float = 1.0  # shift of the preconditioned operator in eigen solves
    nev: int = 20
    block: int = 25
    eig_maxit: int = 1000
    seed: int = 0
    tol_zero: float | None = None
    tol_eq: float = 1e-6

    def __post_init__(self):
        if self.solver not in ("cg", "mg"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.precond not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.precond!r}")
        if self.mass_precond not in ("none", "ilu0"):
            raise ValueError(f"unknown mass preconditioner {self.mass_precond!r}")

    @property
    def effective_mass_tol(self) -> float:
        return 1e-4 * self.tol if self.mass_tol is None else self.mass_tol


def make_preconditioner(kind: str, matrix, ops: ComplexOperators | None = None,
                        cfg: SolverConfig | None = None, c: float | None = None):
    """Preconditioner operator for ``matrix`` (None for ``kind='none'``).

    Multigrid needs ``ops`` to rebuild the coarse levels; the finest level
    reuses ``matrix``.
    """
    cfg = cfg or SolverConfig()
    if kind == "none":
        return None
    if kind == "ilu0":
        return ILU0Preconditioner(matrix).as_operator()
    if kind == "sait":
        return SAITPreconditioner(matrix, tau=cfg.sait_tau, m=cfg.sait_m).as_operator()
    if kind == "mg":
        if ops is None:
            raise ValueError("multigrid preconditioner needs the complex operators")
        c = ops.c if c is None else c
        h = MgHierarchy.build(ops.mesh.domain, ops.mesh.level, ops.k, c=c,
                              u_spec=ops.u_spec, nu=cfg.nu, finest_matrix=matrix)
        return MGPreconditioner(h).as_operator()
    raise ValueError(f"unknown preconditioner {kind!r}")


@dataclass
class SourceSolution:
    u: np.ndarray = field(repr=False)
    u_aux: np.ndarray = field(repr=False)
    v_mass: np.ndarray = field(repr=False)
    aux_report: SolveReport
    mass_report: SolveReport
    residual_original: float
    e_aux: np.ndarray = field(repr=False, default=None)
    e_mass: np.ndarray = field(repr=False, default=None)


class SolveError(RuntimeError):
    def __init__(self, stage: str, report: SolveReport):
        super().__init__(f"{stage} solve did not converge ({report.status}, "
                         f"{report.iterations} iterations, residual {report.final_relative_residual:.3e})")
        self.stage = stage
        self.report = report


def solve_source(ops: ComplexOperators, f, cfg: SolverConfig | None = None,
                 raise_on_failure: bool = True) -> SourceSolution:
    """Auxiliary solve, mass solve and recovery of ``(A + c M) u = f``."""
    cfg = cfg or SolverConfig()
    c = ops.c
    if c <= 0:
        raise ValueError("the recovery step needs c > 0")
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (ops.n,):
        raise ValueError(f"load vector has shape {f.shape}, expected ({ops.n},)")
    S = build_auxiliary_matrix(ops)

    if cfg.solver == "mg":
        h = MgHierarchy.build(ops.mesh.domain, ops.mesh.level, ops.k, c=c,
                              u_spec=ops.u_spec, nu=cfg.nu, finest_matrix=S)
        u_aux, aux_report = mg_solve(h, f, tol=cfg.tol, maxit=cfg.maxit)
    else:
        T = make_preconditioner(cfg.precond, S, ops, cfg)
        # SAIT is not symmetric; the Polak-Ribiere update keeps CG from stalling
        u_aux, aux_report = cg(S, f, precond=T, tol=cfg.tol, maxit=cfg.maxit,
                               flexible=cfg.precond == "sait")
    if raise_on_failure and not aux_report.converged:
        raise SolveError("auxiliary", aux_report)

    rhs = ops.apply_BtUB(u_aux)
    Tm = make_preconditioner(cfg.mass_precond, ops.Mk, ops, cfg)
    v, mass_report = cg(ops.Mk, rhs, precond=Tm, tol=cfg.effective_mass_tol, maxit=cfg.maxit)
    if raise_on_failure and not mass_report.converged:
        raise SolveError("mass", mass_report)

    u = u_aux + v / c
    e_aux = f - S @ u_aux
    e_mass = rhs - ops.Mk @ v
    e_orig = f - (ops.A @ u + c * (ops.Mk @ u))
    res = float(np.linalg.norm(e_orig) / np.linalg.norm(f))
    return SourceSolution(u=u, u_aux=u_aux, v_mass=v, aux_report=aux_report,
                          mass_report=mass_report, residual_original=res,
                          e_aux=e_aux, e_mass=e_mass)


def _mass_solver(ops: ComplexOperators):
    lu = spla.splu(ops.Mk.tocsc())
    return lu.solve


def residual_propagation_check(ops: ComplexOperators, u_aux, e_aux, e_mass, mass_solve=None):
    """Original-system residual predicted from the two stage residuals.

    ``e_orig = e_aux + (A M^-1 / c + I) e_mass``; it does not depend on
    ``u_aux`` itself, which is taken only to check sizes.
    """
    e_aux = np.asarray(e_aux, dtype=np.float64)
    e_mass = np.asarray(e_mass, dtype=np.float64)
    for name, v in (("u_aux", u_aux), ("e_aux", e_aux), ("e_mass", e_mass)):
        if np.shape(v) != (ops.n,):
            raise ValueError(f"{name} has shape {np.shape(v)}, expected ({ops.n},)")
    mass_solve = mass_solve or _mass_solver(ops)
    return e_aux + ops.A @ mass_solve(e_mass) / ops.c + e_mass


def spectral_radius_bound(ops: ComplexOperators, tol: float = 1e-4, maxit: int = 5000,
                          seed: int = 0) -> float:
    """Power iteration for rho(M^-1 A); raises if it stalls."""
    return _power_iteration(ops.A, ops.Mk, tol=tol, maxit=maxit, seed=seed)


def _power_iteration(A, M, tol=1e-4, maxit=5000, seed=0):
    solve = spla.splu(M.tocsc()).solve
    x = np.random.default_rng(seed).standard_normal(A.shape[0])
    rho = 0.0
    for _ in range(maxit):
        y = solve(A @ x)
        norm = np.sqrt(y @ (M @ y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        new = float(x @ (A @ x))  # Rayleigh quotient with x^T M x = 1
        if rho > 0 and abs(new - rho) <= tol * abs(new):
            return new
        rho = new
    raise RuntimeError(f"power iteration did not converge in {maxit} steps")


def error_bound(e_aux, e_mass, rho: float, c: float) -> float:
    """||e_aux|| + (rho / c + 1) ||e_mass||."""
    return float(np.linalg.norm(e_aux) + (rho / c + 1.0) * np.linalg.norm(e_mass))


class EigenType(enum.IntEnum):
    HARMONIC = 0  # lambda = 0
    ORIGINAL = 1  # eigenpair of A u = lam M u
    AUXILIARY = 2  # eigenpair of B^T U B u = lam M u
    MIXED = 3  # both parts share the eigenvalue


@dataclass
class ClassifiedEigenpair:
    lambda_h: float
    vector: np.ndarray = field(repr=False)
    lambda_tilde: float
    lambda_aux: float
    kind: EigenType
    split: tuple | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"lambda": self.lambda_h, "lambda_tilde": self.lambda_tilde,
                "lambda_aux": self.lambda_aux, "type": int(self.kind)}


def classify_eigenpair(ops: ComplexOperators, lambda_h: float, u, tol_zero: float = 1e-6,
                       tol_eq: float = 1e-6, mass_solve=None) -> ClassifiedEigenpair:
    u = np.asarray(u, dtype=np.float64)
    u = u / np.sqrt(u @ (ops.Mk @ u))
    Au = ops.A @ u
    lam_t = float(u @ Au)
    lam_a = float(u @ ops.apply_BtUB(u))
    lambda_h = float(lambda_h)
    split = None
    if lambda_h <= tol_zero:
        kind = EigenType.HARMONIC
    elif abs(lam_t - lambda_h) <= tol_eq * lambda_h:
        kind = EigenType.ORIGINAL
    elif lam_t <= tol_eq * lambda_h:
        kind = EigenType.AUXILIARY
    else:
        kind = EigenType.MIXED
        if mass_solve is None:
            u1, _ = cg(ops.Mk, Au, tol=1e-12, maxit=5000)
        else:
            u1 = mass_solve(Au)
        u1 = u1 / lambda_h
        split = (u1, u - u1)
    return ClassifiedEigenpair(lambda_h=lambda_h, vector=u, lambda_tilde=lam_t,
                               lambda_aux=lam_a, kind=kind, split=split)


@dataclass
class EigenSolution:
    pairs: list
    report: EigenReport

    def type_counts(self) -> dict:
        counts = {int(t): 0 for t in EigenType}
        for p in self.pairs:
            counts[int(p.kind)] += 1
        return counts


def solve_eigen(ops: ComplexOperators, nev: int | None = None,
                cfg: SolverConfig | None = None) -> EigenSolution:
    """LOBPCG on (A + B^T U B) u = lam M u, then classify each returned pair.

    ``nev`` overrides ``cfg.nev``; the block grows to at least ``nev``.
    """
    if isinstance(nev, SolverConfig):
        raise TypeError("solve_eigen takes nev second; pass the config as cfg=")
    cfg = cfg or SolverConfig()
    if nev is not None:
        cfg = dataclasses.replace(cfg, nev=nev, block=max(cfg.block, nev))
    if cfg.solver != "cg":
        raise ValueError("eigenvalue problems are solved with LOBPCG only")
    nev, block = cfg.nev, max(cfg.block, cfg.nev)
    T = None
    if cfg.precond == "none" or cfg.precond_c == 0.0:
        S0 = build_auxiliary_matrix(ops, c=0.0)
        if cfg.precond != "none":
            T = make_preconditioner(cfg.precond, S0, ops, cfg, c=0.0)
    else:
        # one stored matrix serves both: the operator is S1 - c Mk
        c1 = cfg.precond_c
        S1 = build_auxiliary_matrix(ops, c=c1)
        T = make_preconditioner(cfg.precond, S1, ops, cfg, c=c1)
        Mk = ops.Mk
        S0 = spla.LinearOperator(S1.shape, dtype=np.float64,
                                 matvec=lambda x: S1 @ x - c1 * (Mk @ x),
                                 matmat=lambda X: S1 @ X - c1 * (Mk @ X))
    report = lobpcg(S0, ops.Mk, nev=nev, block=block, precond=T, tol=cfg.tol,
                    maxit=cfg.eig_maxit, seed=cfg.seed)
    tol_zero = cfg.tol_zero
    if tol_zero is None:
        tol_zero = 1e-6 * max(1.0, float(np.max(report.eigenvalues)))
    pairs = [classify_eigenpair(ops, lam, vec, tol_zero=tol_zero, tol_eq=cfg.tol_eq)
             for lam, vec in report.pairs]
    return EigenSolution(pairs=pairs, report=report)
