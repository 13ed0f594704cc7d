"""Structured cubic meshes of [0, pi]^3 and their discrete de Rham complex.

Every entity is described by a lower corner ``(i, j, k)`` on the node lattice
and a *span*: the set of axes along which it extends.  Nodes span nothing,
an x-edge spans ``{x}``, the face with normal +x spans ``{y, z}`` and a cell
spans all three axes.  Entities are numbered lexicographically by
``(z, y, x)`` of their corner and then by axis, so ids are deterministic.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DomainKind",
    "StructuredMesh",
    "SignedIncidence",
    "build_mesh",
    "grid_mesh",
    "incidence",
    "differential",
    "coarse_fine_map",
    "SPANS",
]

# span masks per form degree, ordered by axis (edge along x/y/z, face normal x/y/z)
SPANS = {
    0: ((0, 0, 0),),
    1: ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    2: ((0, 1, 1), (1, 0, 1), (1, 1, 0)),
    3: ((1, 1, 1),),
}

# Faces carry the +normal orientation. For the y-normal face that is z^x,
# the opposite of the axis-ordered x^z used by the generic boundary formula.
_ORIENT = {(0, 1, 1): 1, (1, 0, 1): -1, (1, 1, 0): 1}


class DomainKind(str, enum.Enum):
    CUBE = "cube"
    CUBE_WITH_HOLE = "hole"

    @classmethod
    def parse(cls, value) -> "DomainKind":
        if isinstance(value, cls):
            return value
        aliases = {"cube": cls.CUBE, "domain1": cls.CUBE, "1": cls.CUBE,
                   "hole": cls.CUBE_WITH_HOLE, "cube-with-hole": cls.CUBE_WITH_HOLE,
                   "cubewithhole": cls.CUBE_WITH_HOLE, "domain2": cls.CUBE_WITH_HOLE,
                   "2": cls.CUBE_WITH_HOLE}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown domain {value!r}") from None

    @property
    def volume(self) -> float:
        if self is DomainKind.CUBE:
            return np.pi**3
        return 0.75 * np.pi**3


@dataclass(frozen=True)
class _Entities:
    corners: np.ndarray  # (m, 3) lower corner (i, j, k)
    kinds: np.ndarray  # (m,) index into SPANS[degree]
    lookup: np.ndarray  # (n+1, n+1, n+1, len(SPANS[degree])) -> id or -1


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    """Uniform cubic grid with ``n = 2**(level+1)`` cells per axis."""

    level: int
    domain: DomainKind
    n: int
    h: float
    cell_mask: np.ndarray = field(repr=False)
    _entities: tuple = field(repr=False)

    def entities(self, degree: int) -> _Entities:
        return self._entities[degree]

    def count(self, degree: int) -> int:
        return len(self._entities[degree].kinds)

    @property
    def n_nodes(self) -> int:
        return self.count(0)

    @property
    def n_edges(self) -> int:
        return self.count(1)

    @property
    def n_faces(self) -> int:
        return self.count(2)

    @property
    def n_cells(self) -> int:
        return self.count(3)

    @property
    def euler_characteristic(self) -> int:
        return self.n_nodes - self.n_edges + self.n_faces - self.n_cells

    def spans(self, degree: int) -> np.ndarray:
        """(m, 3) 0/1 span mask of every entity of the given degree."""
        ent = self._entities[degree]
        return np.asarray(SPANS[degree], dtype=np.int64)[ent.kinds]

    def centers(self, degree: int) -> np.ndarray:
        """Barycenters of the entities, shape (m, 3)."""
        ent = self._entities[degree]
        return (ent.corners + 0.5 * self.spans(degree)) * self.h

    def summary(self) -> dict:
        return {
            "domain": self.domain.value,
            "level": self.level,
            "n": self.n,
            "h": self.h,
            "nodes": self.n_nodes,
            "edges": self.n_edges,
            "faces": self.n_faces,
            "cells": self.n_cells,
            "chi": self.euler_characteristic,
        }


def _cell_mask(domain: DomainKind, n: int) -> np.ndarray:
    mask = np.ones((n, n, n), dtype=bool)  # indexed [i, j, k]
    if domain is DomainKind.CUBE_WITH_HOLE:
        # hole [pi/4, 3pi/4]^2 x [0, pi] sits on grid planes at every level
        lo, hi = n // 4, 3 * n // 4
        mask[lo:hi, lo:hi, :] = False
    return mask


def _enumerate(degree: int, n: int, cell_mask: np.ndarray) -> _Entities:
    spans = np.asarray(SPANS[degree], dtype=np.int64)
    ntypes = len(spans)
    # C-order over (k, j, i, type) gives the (z, y, x, axis) numbering
    K, J, I, T = np.indices((n + 1, n + 1, n + 1, ntypes)).reshape(4, -1)
    corners = np.stack([I, J, K], axis=1)
    span = spans[T]
    valid = np.all(corners + span <= n, axis=1)
    corners, T, span = corners[valid], T[valid], span[valid]

    # keep an entity iff it touches a remaining cell
    padded = np.zeros((n + 2,) * 3, dtype=bool)
    padded[1:-1, 1:-1, 1:-1] = cell_mask
    keep = np.zeros(len(T), dtype=bool)
    for shift in itertools.product((0, 1), repeat=3):
        shift = np.asarray(shift)
        # nodal axes look at both neighbouring cells, spanned axes only the own one
        use = np.all((shift == 0) | (span == 0), axis=1)
        q = corners + 1 - shift
        keep |= use & padded[q[:, 0], q[:, 1], q[:, 2]]
    corners, T = corners[keep], T[keep]

    lookup = np.full((n + 1, n + 1, n + 1, ntypes), -1, dtype=np.int64)
    lookup[corners[:, 0], corners[:, 1], corners[:, 2], T] = np.arange(len(T))
    return _Entities(corners=corners, kinds=T, lookup=lookup)


def build_mesh(domain, level: int) -> StructuredMesh:
    """Uniform mesh of ``domain`` with h = pi / 2**(level+1)."""
    domain = DomainKind.parse(domain)
    level = int(level)
    if level < 1:
        raise ValueError(f"mesh level must be >= 1, got {level}")
    return grid_mesh(domain, 2 ** (level + 1), level=level)


def grid_mesh(domain, n: int, level: int = 0) -> StructuredMesh:
    """Mesh with ``n`` cells per axis; ``build_mesh`` is the level-indexed form."""
    domain = DomainKind.parse(domain)
    if n < 1:
        raise ValueError("need at least one cell per axis")
    if domain is DomainKind.CUBE_WITH_HOLE and n % 4:
        raise ValueError("the hole needs a multiple of 4 cells per axis")
    mask = _cell_mask(domain, n)
    ents = tuple(_enumerate(d, n, mask) for d in range(4))
    return StructuredMesh(level=level, domain=domain, n=n, h=np.pi / n,
                          cell_mask=mask, _entities=ents)


@dataclass(frozen=True)
class SignedIncidence:
    matrix: sp.csr_matrix
    domain_degree: int
    codomain_degree: int

    @property
    def shape(self):
        return self.matrix.shape


def _boundary_entries(mesh: StructuredMesh, degree: int):
    """COO triplets of the incidence from degree-forms to (degree+1)-forms."""
    hi = mesh.entities(degree + 1)
    lo = mesh.entities(degree)
    lo_types = {s: t for t, s in enumerate(SPANS[degree])}
    rows, cols, vals = [], [], []
    for t, span in enumerate(SPANS[degree + 1]):
        sel = np.flatnonzero(hi.kinds == t)
        p = hi.corners[sel]
        axes = [a for a in range(3) if span[a]]
        for pos, a in enumerate(axes):
            face = tuple(s if b != a else 0 for b, s in enumerate(span))
            sign = (-1) ** pos * _ORIENT.get(span, 1) * _ORIENT.get(face, 1)
            ft = lo_types[face]
            for offset, s in ((1, sign), (0, -sign)):
                q = p.copy()
                q[:, a] += offset
                ids = lo.lookup[q[:, 0], q[:, 1], q[:, 2], ft]
                rows.append(sel)
                cols.append(ids)
                vals.append(np.full(len(sel), s, dtype=np.float64))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    if np.any(cols < 0):
        raise RuntimeError("boundary entity missing from the mesh")
    return rows, cols, np.concatenate(vals)


def incidence(mesh: StructuredMesh, degree: int) -> SignedIncidence:
    """Signed incidence: grad (k=0, edges x nodes), curl (k=1), div (k=2)."""
    if degree not in (0, 1, 2):
        raise ValueError(f"incidence degree must be 0, 1 or 2, got {degree}")
    rows, cols, vals = _boundary_entries(mesh, degree)
    shape = (mesh.count(degree + 1), mesh.count(degree))
    mat = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    mat.sort_indices()
    return SignedIncidence(matrix=mat, domain_degree=degree, codomain_degree=degree + 1)


def differential(mesh: StructuredMesh, degree: int) -> sp.csr_matrix:
    """Exterior derivative in coefficient space of the mean-value basis.

    With DOFs taken as averages over entities, every incidence picks up the
    same factor 1/h on a uniform grid.
    """
    return (incidence(mesh, degree).matrix / mesh.h).tocsr()


def _prolong_1d(fine_idx: np.ndarray, spanned: bool):
    """Coarse indices and weights (two candidates each) along one axis."""
    if spanned:
        c = fine_idx // 2
        return (c, c), (np.ones(len(c)), np.zeros(len(c)))
    even = fine_idx % 2 == 0
    left = np.where(even, fine_idx // 2, (fine_idx - 1) // 2)
    right = np.where(even, fine_idx // 2, (fine_idx + 1) // 2)
    w = np.where(even, 1.0, 0.5)
    return (left, right), (w, np.where(even, 0.0, 0.5))


def coarse_fine_map(coarse: StructuredMesh, fine: StructuredMesh, degree: int) -> sp.csr_matrix:
    """Prolongation of degree-``degree`` coefficients from ``coarse`` to ``fine``.

    Column j holds the fine DOFs (entity averages) of coarse basis function j;
    restriction is the transpose.
    """
    if coarse.domain is not fine.domain:
        raise ValueError("coarse and fine meshes cover different domains")
    if fine.level != coarse.level + 1:
        raise ValueError(f"levels {coarse.level} -> {fine.level} are not adjacent")
    if degree not in (0, 1, 2, 3):
        raise ValueError(f"degree must be in 0..3, got {degree}")
    fe = fine.entities(degree)
    ce = coarse.entities(degree)
    spans = np.asarray(SPANS[degree])[fe.kinds]
    per_axis = [_prolong_1d(fe.corners[:, a], False) for a in range(3)]
    per_axis_s = [_prolong_1d(fe.corners[:, a], True) for a in range(3)]
    rows, cols, vals = [], [], []
    m = len(fe.kinds)
    for choice in itertools.product((0, 1), repeat=3):
        idx = np.empty((m, 3), dtype=np.int64)
        w = np.ones(m)
        for a in range(3):
            (cands, weights) = per_axis[a]
            (cands_s, weights_s) = per_axis_s[a]
            spanned = spans[:, a] == 1
            idx[:, a] = np.where(spanned, cands_s[choice[a]], cands[choice[a]])
            w *= np.where(spanned, weights_s[choice[a]], weights[choice[a]])
        nz = w != 0.0
        ids = ce.lookup[idx[nz, 0], idx[nz, 1], idx[nz, 2], fe.kinds[nz]]
        if np.any(ids < 0):
            raise RuntimeError("fine entity interpolates from a missing coarse entity")
        rows.append(np.flatnonzero(nz))
        cols.append(ids)
        vals.append(w[nz])
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(fine.count(degree), coarse.count(degree)))
    P.sort_indices()
    return P
