"""Lowest-order tensor-product finite elements on the cubic mesh.

One space per form degree: trilinear nodal functions (0), first-kind
Nedelec edge functions (1), Raviart-Thomas face functions (2) and cell
constants (3).  Basis functions have unit mean along their entity (value
1 at a node, mean tangential component 1 on an edge, ...), so every mass
matrix scales like h^3.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import SPANS, StructuredMesh, differential
from .sparse import add_into, add_scaled, as_csr

__all__ = [
    "USpec",
    "ComplexOperators",
    "local_basis",
    "assemble_mass",
    "assemble_stiffness_elementwise",
    "build_operators",
    "build_auxiliary_matrix",
]

_GAUSS_PTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])


def _quadrature():
    pts = np.array(list(itertools.product(_GAUSS_PTS, repeat=3)))
    wts = np.array([np.prod(w) for w in itertools.product(_GAUSS_W, repeat=3)])
    return pts, wts


def _local_entities(degree: int):
    """(type, offset) pairs of the entities of one cell, in a fixed order."""
    out = []
    for t, span in enumerate(SPANS[degree]):
        free = [a for a in range(3) if not span[a]]
        for bits in itertools.product((0, 1), repeat=len(free)):
            off = [0, 0, 0]
            for a, b in zip(free, bits):
                off[a] = b
            out.append((t, tuple(off)))
    return out


def local_basis(degree: int, pts: np.ndarray):
    """Reference-cell basis values and exterior derivatives at ``pts``.

    Returns ``(values, derivs)`` with shapes ``(nloc, npts, cv)`` and
    ``(nloc, npts, cd)`` where ``cv``/``cd`` are 1 for scalars, 3 for vectors.
    Derivatives are with respect to reference coordinates.
    """
    npts = len(pts)
    ents = _local_entities(degree)
    cv = 1 if degree in (0, 3) else 3
    cd = {0: 3, 1: 3, 2: 1, 3: 0}[degree]
    vals = np.zeros((len(ents), npts, cv))
    ders = np.zeros((len(ents), npts, max(cd, 1)))
    for e, (t, off) in enumerate(ents):
        span = SPANS[degree][t]
        free = [a for a in range(3) if not span[a]]
        # scalar factor: product of 1D hats over the non-spanned axes
        hat = [(1.0 - pts[:, a]) if off[a] == 0 else pts[:, a] for a in range(3)]
        dhat = [(-1.0 if off[a] == 0 else 1.0) for a in range(3)]
        f = np.ones(npts)
        for a in free:
            f = f * hat[a]
        grad = np.zeros((npts, 3))
        for a in free:
            g = np.full(npts, dhat[a])
            for b in free:
                if b != a:
                    g = g * hat[b]
            grad[:, a] = g
        if degree == 0:
            vals[e, :, 0] = f
            ders[e] = grad
        elif degree == 1:
            a = span.index(1)
            vals[e, :, a] = f
            # curl(f e_a) = grad f x e_a
            ea = np.zeros(3)
            ea[a] = 1.0
            ders[e] = np.cross(grad, ea)
        elif degree == 2:
            a = span.index(0)
            vals[e, :, a] = f
            ders[e, :, 0] = grad[:, a]
        else:
            vals[e, :, 0] = 1.0
    return vals, ders


def _cell_dofs(mesh: StructuredMesh, degree: int) -> np.ndarray:
    """Global ids of each kept cell's local entities, shape (ncells, nloc)."""
    cells = mesh.entities(3).corners
    lookup = mesh.entities(degree).lookup
    cols = []
    for t, off in _local_entities(degree):
        q = cells + np.asarray(off)
        cols.append(lookup[q[:, 0], q[:, 1], q[:, 2], t])
    ids = np.stack(cols, axis=1)
    if np.any(ids < 0):
        raise RuntimeError("cell references a missing entity")
    return ids


def _scatter(ids: np.ndarray, local: np.ndarray, size: int) -> sp.csr_matrix:
    nloc = ids.shape[1]
    rows = np.repeat(ids, nloc, axis=1).ravel()
    cols = np.tile(ids, (1, nloc)).ravel()
    data = np.tile(local.ravel(), len(ids))
    return as_csr(sp.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr())


def _symmetrize(M) -> sp.csr_matrix:
    """Average with the transpose so symmetry holds bit for bit."""
    return as_csr(0.5 * (M + M.T))


def _element_gram(a: np.ndarray, b: np.ndarray, wts: np.ndarray) -> np.ndarray:
    return np.einsum("iqc,jqc,q->ij", a, b, wts)


def assemble_mass(mesh: StructuredMesh, degree: int) -> sp.csr_matrix:
    """Gram matrix of the degree-``degree`` basis (exact 2x2x2 Gauss)."""
    if degree not in (0, 1, 2, 3):
        raise ValueError(f"mass degree must be in 0..3, got {degree}")
    pts, wts = _quadrature()
    vals, _ = local_basis(degree, pts)
    local = mesh.h**3 * _element_gram(vals, vals, wts)
    return _symmetrize(_scatter(_cell_dofs(mesh, degree), local, mesh.count(degree)))


def assemble_stiffness_elementwise(mesh: StructuredMesh, degree: int) -> sp.csr_matrix:
    """<d v_i, d v_j> by an element loop; kept as an independent check."""
    if degree not in (0, 1, 2):
        raise ValueError(f"stiffness degree must be in 0..2, got {degree}")
    pts, wts = _quadrature()
    _, ders = local_basis(degree, pts)
    local = mesh.h * _element_gram(ders, ders, wts)  # h^3 volume, 1/h per derivative
    return _scatter(_cell_dofs(mesh, degree), local, mesh.count(degree))


@dataclass(frozen=True)
class USpec:
    """Diagonal replacement for the inverse lower-degree mass matrix.

    The diagonal value is ``factor / h**power``.
    """

    factor: float = 5.0
    power: float = 3.0

    def value(self, h: float) -> float:
        return self.factor / h**self.power

    def matrix(self, mesh: StructuredMesh, size: int) -> sp.csr_matrix:
        return as_csr(sp.identity(size, format="csr") * self.value(mesh.h))


@dataclass(eq=False)
class ComplexOperators:
    """Matrices of the complex segment V^{k-1} -> V^k -> V^{k+1}.

    ``B`` maps V^k coefficients to V^{k-1}: ``B = Dkm1^T Mk``, so the
    auxiliary term is ``B^T U B``.
    """

    mesh: StructuredMesh
    k: int
    A: sp.csr_matrix
    B: sp.csr_matrix
    Mk: sp.csr_matrix
    Mkm1: sp.csr_matrix
    Mkp1: sp.csr_matrix
    U: sp.csr_matrix
    Dk: sp.csr_matrix
    Dkm1: sp.csr_matrix
    c: float = 1.0
    u_spec: USpec = field(default_factory=USpec)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def BtUB(self) -> sp.csr_matrix:
        return self.auxiliary_term()

    def auxiliary_term(self) -> sp.csr_matrix:
        """Fresh copy of B^T U B (not cached).

        U is a multiple of the identity, so the product is formed as
        u * X X^T with X = B^T, which is symmetric to the last bit.
        """
        X = as_csr(self.B.T)
        G = as_csr(X @ X.T)
        G.data *= self.u_spec.value(self.mesh.h)
        return G

    def apply_BtUB(self, x):
        """B^T U B x without assembling the product."""
        return self.B.T @ (self.U @ (self.B @ x))

    def original_matrix(self, c: float | None = None) -> sp.csr_matrix:
        c = self.c if c is None else c
        return add_scaled(self.A, self.Mk, 1.0, c)


def build_operators(mesh: StructuredMesh, k: int, c: float = 1.0,
                    u_spec: USpec | None = None) -> ComplexOperators:
    if k not in (1, 2):
        raise ValueError(f"form degree k must be 1 or 2, got {k}")
    if c < 0:
        raise ValueError("shift c must be non-negative")
    u_spec = u_spec or USpec()
    Dk = differential(mesh, k)
    Dkm1 = differential(mesh, k - 1)
    Mk = assemble_mass(mesh, k)
    Mkm1 = assemble_mass(mesh, k - 1)
    Mkp1 = assemble_mass(mesh, k + 1)
    A = _symmetrize(Dk.T @ Mkp1 @ Dk)
    B = as_csr(Dkm1.T @ Mk)
    U = u_spec.matrix(mesh, Mkm1.shape[0])
    return ComplexOperators(mesh=mesh, k=k, A=A, B=B, Mk=Mk, Mkm1=Mkm1, Mkp1=Mkp1,
                            U=U, Dk=Dk, Dkm1=Dkm1, c=float(c), u_spec=u_spec)


def build_auxiliary_matrix(ops: ComplexOperators, c: float | None = None) -> sp.csr_matrix:
    """Explicit A + B^T U B + c Mk (c defaults to ops.c; c=0 gives the eigen operator)."""
    c = ops.c if c is None else c
    if ops.u_spec.value(ops.mesh.h) == 0.0:
        return add_scaled(ops.A, ops.Mk, 1.0, c)
    # A and Mk couple entities that share a cell, which B^T U B already does,
    # so both are added in place instead of merging patterns into new copies
    S = ops.BtUB.copy() if "BtUB" in ops.__dict__ else ops.auxiliary_term()
    add_into(S, ops.A, 1.0)
    if c != 0.0:
        add_into(S, ops.Mk, c)
    return S
