"""Bilinear finite elements for the straightened waveguide form.

The shear ``xi2 = x2 - P(x1)`` maps the wiggled segment onto the rectangle
``(0, L) x (0, pi)`` and turns the Dirichlet form into::

    a(u, u) = || d1 u - P' d2 u ||^2 + || d2 u ||^2

with Dirichlet conditions on ``xi2 in {0, pi}`` and natural (Neumann) ends.
On a tensor grid with bilinear elements every term factors into 1-D matrices::

    K = A1 (x) M2 - (C - C^T) (x) D + (E + M1) (x) K2,     M = M1 (x) M2

where ``C_ik = int P' phi_i' phi_k``, ``E_ik = int P'^2 phi_i phi_k`` (two-point
Gauss per element) and ``D_jl = int psi_j psi_l'``.  ``C - C^T`` and ``D`` are
both exactly antisymmetric, so ``K`` is bitwise symmetric without any
post-hoc symmetrization.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import PreconditionError

__all__ = [
    "DiscreteOperator",
    "Grid",
    "assemble",
    "assemble_segment",
    "element_mass",
    "export_matrix_market",
    "grid_for",
]

_GAUSS_X = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_GAUSS_W = np.array([1.0, 1.0])


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on ``(0, L) x (0, pi)``; ``n1``, ``n2`` count all nodes."""

    n1: int
    n2: int
    L: float

    def __post_init__(self):
        if self.n1 < 8 or self.n2 < 8:
            raise PreconditionError(f"grid needs n1, n2 >= 8, got {self.n1}x{self.n2}")

    @property
    def h1(self):
        return self.L / (self.n1 - 1)

    @property
    def h2(self):
        return np.pi / (self.n2 - 1)

    @property
    def xi1(self):
        return np.linspace(0.0, self.L, self.n1)

    @property
    def xi2(self):
        return np.linspace(0.0, np.pi, self.n2)

    def refined(self):
        """Nested refinement ``h -> h/2`` in both directions."""
        return Grid(2 * self.n1 - 1, 2 * self.n2 - 1, self.L)

    def label(self):
        return f"{self.n1}x{self.n2}"


def grid_for(spec, per_cell=16, n2=17):
    """Grid with ``per_cell`` elements per cell along ``xi1``."""
    return Grid(per_cell * spec.N + 1, n2, spec.L)


def _check_aligned(grid, spec):
    if abs(grid.L - spec.L) > 1e-12 * spec.L:
        raise PreconditionError(f"grid length {grid.L} != segment length {spec.L}")
    if (grid.n1 - 1) % spec.N:
        raise PreconditionError(
            f"grid nodes not aligned to cell boundaries: n1-1={grid.n1 - 1}, N={spec.N}")


def _p1_1d(n, h):
    """Stiffness and consistent mass of 1-D P1 elements on ``n`` uniform nodes."""
    main = np.full(n, 2.0)
    main[[0, -1]] = 1.0
    off = np.ones(n - 1)
    A = sp.diags([-off / h, main / h, -off / h], [-1, 0, 1], format="csr")
    M = sp.diags([off * h / 6, main * h / 3, off * h / 6], [-1, 0, 1], format="csr")
    return A, M


def _coefficient_1d(dprofile, x0, n, h):
    """``C`` and ``E`` for the variable coefficient ``P'`` on ``n`` nodes from ``x0``."""
    ne = n - 1
    left = x0 + h * np.arange(ne)
    xq = left[:, None] + 0.5 * h * (1.0 + _GAUSS_X[None, :])  # (ne, 2)
    wq = 0.5 * h * _GAUSS_W
    pq = dprofile(xq)
    # local shape values at the Gauss points: phi_left, phi_right
    s = 0.5 * (1.0 + _GAUSS_X)
    phi = np.stack([1.0 - s, s])  # (2 local, 2 q)
    dphi = np.array([-1.0, 1.0]) / h
    # C_loc[e, a, b] = sum_q w P'(x_q) dphi_a phi_b(x_q)
    wp = pq * wq[None, :]
    c_loc = dphi[None, :, None] * np.einsum("eq,bq->eb", wp, phi)[:, None, :]
    e_loc = np.einsum("eq,aq,bq->eab", pq * wp, phi, phi)
    rows = np.arange(ne)[:, None, None] + np.array([0, 1])[None, :, None]
    cols = np.arange(ne)[:, None, None] + np.array([0, 1])[None, None, :]
    rows = np.broadcast_to(rows, (ne, 2, 2)).ravel()
    cols = np.broadcast_to(cols, (ne, 2, 2)).ravel()
    C = sp.coo_matrix((c_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    E = sp.coo_matrix((e_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return C, E


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Symmetric pencil ``(K, M)`` of the transformed form on one segment.

    Unknowns are ordered ``xi1``-major over the interior ``xi2`` nodes:
    index ``i * (n2 - 2) + j`` refers to node ``(xi1_i, xi2_{j+1})``.
    The 1-D factor matrices are kept for fast structured products.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    grid: Grid
    spec: object
    x0: float
    factors: dict

    @property
    def shape2d(self):
        return (self.grid.n1, self.grid.n2 - 2)

    @property
    def size(self):
        return self.K.shape[0]

    def nodes(self):
        """Coordinates ``(xi1, xi2)`` of the unknowns, each of shape ``(size,)``."""
        x1 = self.x0 + self.grid.xi1
        x2 = self.grid.xi2[1:-1]
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        return X1.ravel(), X2.ravel()


def _assemble_rect(dprofile, x0, n1, n2, L_seg):
    h1 = L_seg / (n1 - 1)
    h2 = np.pi / (n2 - 1)
    A1, M1 = _p1_1d(n1, h1)
    A2, M2 = _p1_1d(n2, h2)
    inner = slice(1, n2 - 1)
    K2 = A2[inner][:, inner].tocsr()
    M2 = M2[inner][:, inner].tocsr()
    m = n2 - 2
    off = np.full(m - 1, 0.5)
    D = sp.diags([-off, off], [-1, 1], format="csr")
    C, E = _coefficient_1d(dprofile, x0, n1, h1)
    K = (sp.kron(A1, M2, format="csr")
         - sp.kron(C - C.T, D, format="csr")
         + sp.kron(E + M1, K2, format="csr"))
    M = sp.kron(M1, M2, format="csr")
    K.sort_indices()
    M.sort_indices()
    factors = {"A1": A1, "M1": M1, "K2": K2, "M2": M2, "C": C, "E": E, "D": D}
    return K, M, factors


def assemble_segment(spec, grid, j, Kcells):
    """Operator on the sub-segment of cells ``j .. j+Kcells-1`` (Neumann cuts).

    ``grid`` is the grid of the full segment; the sub-grid reuses its nodes.
    """
    _check_aligned(grid, spec)
    if j < 0 or Kcells < 1 or j + Kcells > spec.N:
        raise PreconditionError(f"segment cells [{j}, {j + Kcells}) outside [0, {spec.N})")
    per_cell = (grid.n1 - 1) // spec.N
    n1 = per_cell * Kcells + 1
    x0 = j * spec.l
    L_seg = Kcells * spec.l
    K, M, factors = _assemble_rect(lambda x: spec.profile(x, 1), x0, n1, grid.n2, L_seg)
    sub = Grid(n1, grid.n2, L_seg)
    return DiscreteOperator(K=K, M=M, grid=sub, spec=spec, x0=x0, factors=factors)


def assemble(spec, grid):
    """Stiffness/mass pencil of the full segment ``(0, L) x (0, pi)``."""
    return assemble_segment(spec, grid, 0, spec.N)


def element_mass(op, x_lo, x_hi):
    """Mass matrix restricted to the elements lying in the strip ``x_lo <= xi1 <= x_hi``.

    This is the Gram matrix of the multiplication by the strip indicator, so
    ``0 <= element_mass <= M`` in the form sense.
    """
    g = op.grid
    h1 = g.h1
    left = op.x0 + h1 * np.arange(g.n1 - 1)
    tol = 1e-9 * h1
    keep = (left >= x_lo - tol) & (left + h1 <= x_hi + tol)
    w = keep.astype(float)
    # 1-D mass with per-element weights
    n = g.n1
    main = np.zeros(n)
    main[:-1] += w * h1 / 3
    main[1:] += w * h1 / 3
    M1w = sp.diags([w * h1 / 6, main, w * h1 / 6], [-1, 0, 1], format="csr")
    return sp.kron(M1w, op.factors["M2"], format="csr")


def export_matrix_market(op, directory, stem="operator"):
    """Write ``K`` and ``M`` as MatrixMarket coordinate files; returns the paths."""
    from scipy.io import mmwrite

    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, mat in (("K", op.K), ("M", op.M)):
        path = os.path.join(directory, f"{stem}_{name}.mtx")
        mmwrite(path, mat, symmetry="symmetric")
        paths.append(path)
    return paths
