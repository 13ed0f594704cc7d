"""ILU(0), SAIT and geometric multigrid preconditioners.

Each preconditioner is a callable ``b -> x`` that accepts a vector or a
block of column vectors, plus ``as_operator()`` for the Krylov solvers.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator

from . import _kernels
from .fem import USpec, build_auxiliary_matrix, build_operators
from .krylov import SolveReport
from .mesh import StructuredMesh, build_mesh, coarse_fine_map
from .sparse import TriangularFactorPair, as_csr, ilu0, sait_thr

__all__ = [
    "PRECONDITIONERS",
    "apply_ilu0",
    "apply_sait",
    "gauss_seidel_sym",
    "ILU0Preconditioner",
    "SAITPreconditioner",
    "MgLevel",
    "MgHierarchy",
    "mg_vcycle",
    "mg_solve",
    "MGPreconditioner",
]

PRECONDITIONERS = ("none", "ilu0", "sait", "mg")


class _Preconditioner:
    n: int

    def __call__(self, b):
        raise NotImplementedError

    def as_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self, matmat=self, dtype=np.float64)


def apply_ilu0(factors: TriangularFactorPair, b):
    """x = U \\ (L \\ b)."""
    return factors.solve(b)


def apply_sait(ML, MU, b):
    """Approximate U^-1 L^-1 b with two products, M_U (M_L b)."""
    return MU @ (ML @ b)


class ILU0Preconditioner(_Preconditioner):
    def __init__(self, A):
        self.factors = ilu0(A)
        self.n = A.shape[0]

    def __call__(self, b):
        return apply_ilu0(self.factors, np.asarray(b, dtype=np.float64))


class SAITPreconditioner(_Preconditioner):
    """Approximate inverses of the ILU(0) factors, SAIT_Thr(tau, m)."""

    def __init__(self, A=None, tau: float = 0.05, m: int = 10, factors: TriangularFactorPair = None):
        factors = factors if factors is not None else ilu0(A)
        self.tau, self.m = tau, m
        self.ML = sait_thr(factors.L, tau, m)
        self.MU = sait_thr(factors.U, tau, m)
        self.n = self.ML.shape[0]

    def __call__(self, b):
        return apply_sait(self.ML, self.MU, np.asarray(b, dtype=np.float64))


def gauss_seidel_sym(A, f, u, sweeps: int = 1, diag=None):
    """``sweeps`` symmetric (forward then backward) Gauss-Seidel sweeps on ``u`` in place."""
    A = as_csr(A)
    d = A.diagonal() if diag is None else diag
    if np.any(d == 0.0):
        raise ZeroDivisionError(f"zero diagonal in row {int(np.flatnonzero(d == 0.0)[0])}")
    f2 = np.ascontiguousarray(f, dtype=np.float64).reshape(f.shape[0], -1)
    if not (u.flags.c_contiguous and u.dtype == np.float64):
        raise ValueError("u must be a C-contiguous float64 array")
    u2 = u.reshape(u.shape[0], -1)
    _kernels.symmetric_gauss_seidel(A.indptr, A.indices, A.data, d, f2, u2, int(sweeps))
    return u


@dataclass(eq=False)
class MgLevel:
    mesh: StructuredMesh
    A: object  # csr system matrix
    P: object = None  # prolongation from the next coarser level
    diag: np.ndarray = field(default=None, repr=False)


@dataclass(eq=False)
class MgHierarchy:
    """Rediscretized V-cycle hierarchy, coarsest level first."""

    levels: list
    k: int
    c: float
    nu: int = 5
    coarse_factor: tuple = field(default=None, repr=False)

    def __post_init__(self):
        for lev in self.levels:
            if lev.diag is None:
                lev.diag = lev.A.diagonal()
        if self.coarse_factor is None:
            dense = self.levels[0].A.toarray()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(dense, check_finite=True)
            if np.any(np.abs(np.diag(lu)) <= 1e-14 * np.abs(dense).max()):
                raise np.linalg.LinAlgError("coarse-level matrix is singular")
            self.coarse_factor = (lu, piv)

    @property
    def n(self) -> int:
        return self.levels[-1].A.shape[0]

    @classmethod
    def build(cls, domain, level: int, k: int, c: float = 1.0, u_spec: USpec | None = None,
              nu: int = 5, finest_matrix=None) -> "MgHierarchy":
        """Assemble A + B^T U B + c M on every level 1..level of ``domain``."""
        u_spec = u_spec or USpec()
        meshes = [build_mesh(domain, l) for l in range(1, level + 1)]
        levels = []
        for i, mesh in enumerate(meshes):
            if i == len(meshes) - 1 and finest_matrix is not None:
                A = as_csr(finest_matrix)
            else:
                A = build_auxiliary_matrix(build_operators(mesh, k, c=c, u_spec=u_spec), c=c)
            P = coarse_fine_map(meshes[i - 1], mesh, k) if i > 0 else None
            levels.append(MgLevel(mesh=mesh, A=A, P=P))
        return cls(levels=levels, k=k, c=c, nu=nu)


def _vcycle(h: MgHierarchy, idx: int, f, u):
    lev = h.levels[idx]
    if idx == 0:
        return sla.lu_solve(h.coarse_factor, f)
    u = gauss_seidel_sym(lev.A, f, u, h.nu, lev.diag)
    r = f - lev.A @ u
    rc = lev.P.T @ r
    ec = _vcycle(h, idx - 1, np.ascontiguousarray(rc), np.zeros_like(rc))
    u += lev.P @ ec
    return gauss_seidel_sym(lev.A, f, u, h.nu, lev.diag)


def mg_vcycle(h: MgHierarchy, f, u0=None):
    """One V-cycle on the finest level of ``h``; ``f`` may be a block."""
    f = np.ascontiguousarray(f, dtype=np.float64)
    u = np.zeros_like(f) if u0 is None else np.array(u0, dtype=np.float64, order="C")
    return _vcycle(h, len(h.levels) - 1, f, u)


def mg_solve(h: MgHierarchy, f, tol: float = 1e-8, maxit: int = 200, u0=None):
    """Stand-alone multigrid: repeat V-cycles until ||f - A u|| / ||f|| <= tol."""
    f = np.asarray(f, dtype=np.float64)
    A = h.levels[-1].A
    u = np.zeros_like(f) if u0 is None else np.array(u0, dtype=np.float64)
    fnorm = np.linalg.norm(f)
    rel = np.linalg.norm(f - A @ u) / fnorm
    history = [float(rel)]
    it = 0
    while rel > tol and it < maxit:
        u = mg_vcycle(h, f, u)
        it += 1
        rel = np.linalg.norm(f - A @ u) / fnorm
        history.append(float(rel))
        if not np.isfinite(rel):
            break
    ok = rel <= tol
    return u, SolveReport(it, history, bool(ok), float(rel), "converged" if ok else "maxit")


class MGPreconditioner(_Preconditioner):
    """One V-cycle from a zero initial guess."""

    def __init__(self, hierarchy: MgHierarchy):
        self.hierarchy = hierarchy
        self.n = hierarchy.n

    def __call__(self, b):
        return mg_vcycle(self.hierarchy, b)
