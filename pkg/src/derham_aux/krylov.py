"""Preconditioned conjugate gradients and LOBPCG.

Stopping rules:

* linear systems: ``||f - A u|| / ||f|| <= tol`` (Euclidean norms);
* eigenpairs: ``||A u - lam M u||_M / ||u||_M <= tol`` with
  ``||v||_M = sqrt(v^T M v)``, checked on the first ``nev`` Ritz pairs
  while ``block`` pairs are iterated.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, aslinearoperator

__all__ = [
    "LinearOperator",
    "as_operator",
    "SolveReport",
    "EigenReport",
    "cg",
    "lobpcg",
]

log = logging.getLogger(__name__)


def as_operator(op, n: int | None = None) -> LinearOperator:
    """Wrap a matrix, LinearOperator or vector->vector callable."""
    if op is None:
        return None
    if isinstance(op, LinearOperator):
        return op
    if callable(op) and not hasattr(op, "shape"):
        if n is None:
            raise ValueError("dimension needed to wrap a callable")
        return LinearOperator((n, n), matvec=op, matmat=op, dtype=np.float64)
    return aslinearoperator(op)


def _apply(op, X):
    if X.ndim == 1:
        return op.matvec(X)
    return op.matmat(X)


@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    converged: bool
    final_relative_residual: float
    status: str = "converged"  # converged | maxit | breakdown

    def to_dict(self) -> dict:
        return asdict(self)


def cg(A, b, precond=None, tol: float = 1e-8, maxit: int = 5000, x0=None,
       flexible: bool = False):
    """Solve ``A x = b`` by (preconditioned) conjugate gradients.

    ``flexible=True`` uses the Polak-Ribiere update
    ``beta = r_new^T (z_new - z_old) / r_old^T z_old``, which tolerates a
    slightly nonsymmetric preconditioner such as SAIT.
    Returns ``(x, SolveReport)``.  A non-positive curvature ``p^T A p`` or
    preconditioned inner product ``r^T z`` stops the iteration with
    ``status='breakdown'``; running out of iterations gives ``'maxit'``.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    A = as_operator(A, n)
    T = as_operator(precond, n)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A.matvec(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, [0.0], True, 0.0)
    rel = np.linalg.norm(r) / bnorm
    history = [float(rel)]
    if rel <= tol:
        return x, SolveReport(0, history, True, float(rel))
    z = r if T is None else T.matvec(r)
    rz = float(r @ z)
    p = z.copy()
    status = "maxit"
    it = 0
    while it < maxit:
        if not np.isfinite(rz) or rz <= 0.0:
            status = "breakdown"
            break
        Ap = A.matvec(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0.0:
            status = "breakdown"
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rel = np.linalg.norm(r) / bnorm
        history.append(float(rel))
        if rel <= tol:
            status = "converged"
            break
        if not np.isfinite(rel):
            status = "breakdown"
            break
        z_old = z
        z = r if T is None else T.matvec(r)
        rz_new = float(r @ z)
        num = rz_new - float(r @ z_old) if flexible else rz_new
        p = z + (num / rz) * p
        rz = rz_new
    report = SolveReport(it, history, status == "converged", float(history[-1]), status)
    return x, report


@dataclass
class EigenReport:
    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)
    residuals: np.ndarray
    block_size: int
    converged_count: int
    iterations: int
    converged: bool
    seed: int
    ritz_history: list = field(default_factory=list, repr=False)
    residual_history: list = field(default_factory=list, repr=False)

    @property
    def pairs(self):
        return [(float(lam), self.vectors[:, i]) for i, lam in enumerate(self.eigenvalues)]

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residuals": [float(v) for v in self.residuals],
            "block_size": self.block_size,
            "converged_count": self.converged_count,
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "residual_history": [[float(v) for v in row] for row in self.residual_history],
        }


def _svqb(U, MU, drop: float = 1e-12):
    """M-orthonormalize the columns of U, dropping numerically dependent ones."""
    G = U.T @ MU
    G = 0.5 * (G + G.T)
    d = np.sqrt(np.abs(np.diag(G)))
    d[d == 0.0] = 1.0
    G = G / np.outer(d, d)
    theta, V = np.linalg.eigh(G)
    keep = theta > drop * max(theta.max(), 1.0)
    V = V[:, keep] / np.sqrt(theta[keep])
    V = V / d[:, None]
    return U @ V, MU @ V


def _project_out(Q, MQ, X, MX):
    coef = MX.T @ Q
    return Q - X @ coef, MQ - MX @ coef


def lobpcg(A, M, nev: int, block: int | None = None, precond=None, tol: float = 1e-8,
           maxit: int = 1000, seed: int = 0, X0=None, keep_history: bool = True) -> EigenReport:
    """Smallest eigenpairs of ``A x = lam M x`` (A symmetric PSD, M SPD)."""
    A = as_operator(A)
    M = as_operator(M)
    n = A.shape[0]
    block = nev if block is None else block
    if block < nev:
        raise ValueError("block size must be >= nev")
    if block > n:
        raise ValueError("block size exceeds problem dimension")
    T = as_operator(precond, n)

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block)) if X0 is None else np.array(X0, dtype=np.float64)
    X, MX = _svqb(X, _apply(M, X))
    if X.shape[1] < block:
        raise np.linalg.LinAlgError("initial block is rank deficient")
    AX = _apply(A, X)
    theta, C = sla.eigh(0.5 * (X.T @ AX + (X.T @ AX).T))
    X, AX, MX = X @ C, AX @ C, MX @ C
    lam = theta
    P = None
    ritz_history, res_history = [], []
    it = 0
    converged = False
    while True:
        R = AX - MX * lam
        MR = _apply(M, R)
        res = np.sqrt(np.maximum(np.einsum("ij,ij->j", R, MR), 0.0))
        res /= np.sqrt(np.einsum("ij,ij->j", X, MX))
        if keep_history:
            ritz_history.append(lam.copy())
            res_history.append(res.copy())
        if np.all(res[:nev] <= tol):
            converged = True
            break
        if it >= maxit:
            break
        it += 1
        active = res > tol
        W = R[:, active]
        W = W if T is None else _apply(T, W)
        if W.ndim == 1:
            W = W[:, None]
        Q = W if P is None else np.hstack([W, P])
        MQ = _apply(M, Q)
        for _ in range(2):
            Q, MQ = _project_out(Q, MQ, X, MX)
        Q, MQ = _svqb(Q, MQ)
        Q, MQ = _project_out(Q, MQ, X, MX)
        Q, MQ = _svqb(Q, MQ)
        AQ = _apply(A, Q)
        # Gram matrices of [X, Q] block by block; stacking the three
        # n x (block + q) arrays would double the memory of large runs
        XAQ = X.T @ AQ
        XMQ = X.T @ MQ
        GA = np.block([[X.T @ AX, XAQ], [XAQ.T, Q.T @ AQ]])
        GM = np.block([[X.T @ MX, XMQ], [XMQ.T, Q.T @ MQ]])
        GA = 0.5 * (GA + GA.T)
        GM = 0.5 * (GM + GM.T)
        try:
            theta, C = sla.eigh(GA, GM)
        except np.linalg.LinAlgError:
            # lost M-orthogonality: restart the search space from X alone
            log.warning("LOBPCG Gram matrix not positive definite at iteration %d", it)
            X, MX = _svqb(X, MX)
            AX = _apply(A, X)
            P = None
            theta, C = sla.eigh(0.5 * (X.T @ AX + (X.T @ AX).T))
            X, AX, MX, lam = X @ C, AX @ C, MX @ C, theta
            continue
        C = C[:, :block]
        lam = theta[:block]
        Cx, Cq = C[:block, :], C[block:, :]
        P = Q @ Cq
        X = X @ Cx + P
        AX = AX @ Cx + AQ @ Cq
        MX = MX @ Cx + MQ @ Cq
    # eigh returns ascending Ritz values; the first nev are reported
    conv_count = int(np.sum(res[:nev] <= tol))
    return EigenReport(
        eigenvalues=lam[:nev].copy(),
        vectors=X[:, :nev].copy(),
        residuals=res[:nev].copy(),
        block_size=block,
        converged_count=conv_count,
        iterations=it,
        converged=converged,
        seed=seed,
        ritz_history=ritz_history,
        residual_history=res_history,
    )
