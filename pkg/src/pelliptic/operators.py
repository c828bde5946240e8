"""Grids, boundary masks, and assembly of the sesquilinear form

    a(u, v) = int <A grad u, grad v> + V u conj(v)

by per-cell quadrature: bilinear nodal elements with a 2^d-point Gauss rule
on uniform 1D/2D grids.  In 1D this reproduces the textbook flux stencil
(1/h^2)[-1, 2, -1] exactly; in 2D it handles full complex matrices A and
keeps the discrete energy bounded below by lambda(A) * ||grad_h u||^2 at
the quadrature points.  Dirichlet nodes are eliminated; Neumann boundaries
get the natural zero-flux closure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .ellipticity import MatrixField, as_field, sector_angle
from .potentials import Potential


class Grid:
    """Uniform tensor grid on a box, dimension 1 or 2, >= 3 nodes per axis."""

    def __init__(self, shape, extents=None):
        shape = tuple(int(n) for n in np.atleast_1d(shape))
        if len(shape) not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if any(n < 3 for n in shape):
            raise ValueError("need at least 3 nodes per axis")
        if extents is None:
            extents = tuple((0.0, 1.0) for _ in shape)
        self.shape = shape
        self.extents = tuple((float(a), float(b)) for a, b in extents)
        self.dim = len(shape)
        self.h = tuple((b - a) / (n - 1) for (a, b), n in zip(self.extents, shape))
        axes = [np.linspace(a, b, n) for (a, b), n in zip(self.extents, shape)]
        self.axes = axes
        mesh = np.meshgrid(*axes, indexing="ij")
        self.coords = np.stack([m.ravel() for m in mesh], axis=1)   # (nnodes, dim)

    @property
    def nnodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cells_shape(self):
        return tuple(n - 1 for n in self.shape)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.cells_shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def node_volume(self) -> float:
        """Lumped volume weight per node (uniform h^d)."""
        return float(np.prod(self.h))

    def node_index(self, multi) -> int:
        return int(np.ravel_multi_index(multi, self.shape))

    def boundary_nodes(self) -> np.ndarray:
        """Boolean mask of boundary nodes."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask.ravel()

    def cell_corners(self) -> np.ndarray:
        """Node indices of each cell's corners, shape (ncells, 2^dim).

        Corner order matches the reference basis: 1D (left, right);
        2D (ll, lr, ul, ur) with x fastest in the reference square.
        """
        if self.dim == 1:
            i = np.arange(self.shape[0] - 1)
            return np.stack([i, i + 1], axis=1)
        nx, ny = self.shape
        i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
        ll = (i * ny + j).ravel()
        return np.stack([ll, ll + ny, ll + 1, ll + ny + 1], axis=1)

    def reference_rule(self):
        """(weights, basis values N[g,a], basis gradients B[g,a,dim]) of the
        2^dim-point Gauss rule on one physical cell."""
        g1 = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
        if self.dim == 1:
            h = self.h[0]
            N = np.stack([1.0 - g1, g1], axis=1)
            B = np.broadcast_to(np.array([[-1.0 / h], [1.0 / h]]), (2, 2, 1)).copy()
            w = np.full(2, h / 2.0)
            return w, N, B
        hx, hy = self.h
        gx, gy = np.meshgrid(g1, g1, indexing="ij")
        gx, gy = gx.ravel(), gy.ravel()
        # basis order: (0,0), (1,0), (0,1), (1,1) in (x, y)
        N = np.stack([(1 - gx) * (1 - gy), gx * (1 - gy), (1 - gx) * gy, gx * gy], axis=1)
        B = np.empty((4, 4, 2))
        B[:, 0, 0] = -(1 - gy) / hx
        B[:, 1, 0] = (1 - gy) / hx
        B[:, 2, 0] = -gy / hx
        B[:, 3, 0] = gy / hx
        B[:, 0, 1] = -(1 - gx) / hy
        B[:, 1, 1] = -gx / hy
        B[:, 2, 1] = (1 - gx) / hy
        B[:, 3, 1] = gx / hy
        w = np.full(4, hx * hy / 4.0)
        return w, N, B


@dataclass
class BoundaryCondition:
    """Dirichlet node mask: empty -> Neumann, full boundary -> Dirichlet,
    partial -> mixed."""
    dirichlet_mask: np.ndarray
    name: str = "custom"

    @staticmethod
    def dirichlet(grid: Grid) -> "BoundaryCondition":
        return BoundaryCondition(grid.boundary_nodes(), name="dirichlet")

    @staticmethod
    def neumann(grid: Grid) -> "BoundaryCondition":
        return BoundaryCondition(np.zeros(grid.nnodes, dtype=bool), name="neumann")

    @staticmethod
    def mixed_left_edge(grid: Grid) -> "BoundaryCondition":
        mask = np.zeros(grid.shape, dtype=bool)
        mask[0] = True
        return BoundaryCondition(mask.ravel(), name="mixed-left-edge")

    @staticmethod
    def by_name(name: str, grid: Grid) -> "BoundaryCondition":
        table = {
            "dirichlet": BoundaryCondition.dirichlet,
            "neumann": BoundaryCondition.neumann,
            "mixed-left-edge": BoundaryCondition.mixed_left_edge,
        }
        if name not in table:
            raise ValueError(f"unknown boundary preset {name!r}")
        return table[name](grid)

    def validate(self, grid: Grid):
        mask = np.asarray(self.dirichlet_mask, dtype=bool).ravel()
        if mask.size != grid.nnodes:
            raise ValueError("mask size does not match grid")
        if np.any(mask & ~grid.boundary_nodes()):
            raise ValueError("dirichlet mask must be a subset of the boundary nodes")
        return mask


def stiffness_matrix(grid: Grid, A: MatrixField) -> sp.csr_matrix:
    """Form matrix F with a(u, v) = v^H F u for the full node set (no bc)."""
    w, _, B = grid.reference_rule()
    corners = grid.cell_corners()
    ncells = grid.ncells
    Avals = A.values
    if Avals.shape[0] == 1:
        Avals = np.broadcast_to(Avals, (ncells, grid.dim, grid.dim))
    elif Avals.shape[0] != ncells:
        raise ValueError(f"matrix field has {Avals.shape[0]} cells, grid has {ncells}")
    if A.d != grid.dim:
        raise ValueError(f"matrix dimension {A.d} does not match grid dimension {grid.dim}")

    # F_loc[c,a,b] = sum_g w_g (A_c B[g,b,:]) . B[g,a,:]
    loc = np.einsum("g,ckl,gbl,gak->cab", w, Avals, B, B, optimize=True)
    m = corners.shape[1]
    rows = np.repeat(corners, m, axis=1).ravel()
    cols = np.tile(corners, (1, m)).ravel()
    F = sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(grid.nnodes, grid.nnodes))
    return F.tocsr()


class DiscreteOperator:
    """Assembled L = -div_h(A grad_h) + V on the free (non-Dirichlet) nodes.

    ``stiffness`` is operator-scaled (the form carries the extra h^d volume
    weight), so e^{-tL} is computed directly from stiffness + diag(V).
    """

    def __init__(self, grid: Grid, A: MatrixField, V: Potential, bc: BoundaryCondition):
        self.grid = grid
        self.A = A
        self.V = V
        self.bc = bc
        mask = bc.validate(grid)
        self.dirichlet_mask = mask
        self.free = np.flatnonzero(~mask)
        self.nfree = self.free.size

        F = stiffness_matrix(grid, A)
        vol = grid.node_volume
        self.stiffness = (F[np.ix_(self.free, self.free)] / vol).tocsr()
        vdiag_full = V.values if V is not None else np.zeros(grid.nnodes)
        self.vdiag = vdiag_full[self.free]
        self.accretive_flag = A.lam > 0
        # subcritical metadata (alpha, beta); set from a certificate when known
        self.alpha = 0.0
        self.beta = 0.0
        self._dense = None
        self._theta0 = None

    # -- basic algebra ----------------------------------------------------

    def matrix(self) -> sp.csr_matrix:
        return (self.stiffness + sp.diags(self.vdiag)).tocsr()

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.matrix().toarray()
        return self._dense

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.stiffness @ u + self.vdiag * u

    def embed(self, u_free: np.ndarray) -> np.ndarray:
        full = np.zeros(self.grid.nnodes, dtype=complex)
        full[self.free] = u_free
        return full

    def restrict(self, u_full: np.ndarray) -> np.ndarray:
        return np.asarray(u_full, dtype=complex).ravel()[self.free]

    def form(self, u: np.ndarray, v: np.ndarray) -> complex:
        """a_h(u, v) for free-node vectors (volume-weighted)."""
        vol = self.grid.node_volume
        return complex(vol * np.vdot(v, self.apply(u)))

    # -- geometry-aware norms ---------------------------------------------

    def lp_norm(self, u: np.ndarray, p: float) -> float:
        vol = self.grid.node_volume
        if math.isinf(p):
            return float(np.max(np.abs(u)))
        return float((vol * np.sum(np.abs(u) ** p)) ** (1.0 / p))

    def grad_quadrature(self, u_free: np.ndarray):
        """(weights, gradients) of the (c, g)-indexed Gauss-point gradients."""
        w, _, B = self.grid.reference_rule()
        full = self.embed(u_free)
        uc = full[self.grid.cell_corners()]                     # (ncells, m)
        grads = np.einsum("ca,gad->cgd", uc, B)                 # (ncells, g, dim)
        return w, grads

    def values_quadrature(self, u_free: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of u at the Gauss points, shape (ncells, g)."""
        _, N, _ = self.grid.reference_rule()
        full = self.embed(u_free)
        uc = full[self.grid.cell_corners()]
        return np.einsum("ca,ga->cg", uc, N)

    def grad_norm_sq(self, u_free: np.ndarray) -> float:
        w, grads = self.grad_quadrature(u_free)
        return float(np.einsum("g,cgd->", w, np.abs(grads) ** 2))

    @property
    def theta0(self) -> float:
        """Sector angle from the ellipticity constants and the alpha shift."""
        if self._theta0 is None:
            self._theta0 = sector_angle(self.A, self.alpha)
        return self._theta0

    def garding_constant(self) -> float:
        """Largest c with Re a(u,u) >= c(||grad_h u||^2 + ||V_+^{1/2}u||^2)."""
        M = self.dense() * self.grid.node_volume
        H = 0.5 * (M + M.conj().T).real
        KI = stiffness_matrix(self.grid, MatrixField(np.eye(self.grid.dim)))
        G = KI[np.ix_(self.free, self.free)].toarray().real
        vplus = self.V.v_plus[self.free] if self.V is not None else np.zeros(self.nfree)
        G = G + np.diag(vplus * self.grid.node_volume)
        return float(_pencil_min(H, G))


def assemble(grid: Grid, A, V=None, bc=None) -> DiscreteOperator:
    """Assemble the discrete operator; flags (not errors) non-accretive A."""
    A = as_field(A, grid=grid)
    if V is None:
        V = Potential.zero(grid)
    if bc is None:
        bc = BoundaryCondition.dirichlet(grid)
    if isinstance(bc, str):
        bc = BoundaryCondition.by_name(bc, grid)
    return DiscreteOperator(grid, A, V, bc)


def _pencil_min(H: np.ndarray, G: np.ndarray) -> float:
    """min of u^H H u / u^H G u over the positive subspace of G."""
    evals, evecs = np.linalg.eigh(G)
    keep = evals > 1e-12 * max(evals[-1], 1e-300)
    W = evecs[:, keep] / np.sqrt(evals[keep])
    Hr = W.T @ H @ W
    return float(np.linalg.eigvalsh(Hr)[0])


def _pencil_absmax(S: np.ndarray, H: np.ndarray) -> float:
    evals, evecs = np.linalg.eigh(H)
    keep = evals > 1e-12 * max(evals[-1], 1e-300)
    W = evecs[:, keep] / np.sqrt(evals[keep])
    Sr = W.T @ S @ W
    ev = np.linalg.eigvalsh(Sr)
    return float(max(abs(ev[0]), abs(ev[-1])))


def numerical_range_angle(L: DiscreteOperator, alpha: float = 0.0,
                          n_samples: int = 64, seed: int = 0) -> float:
    """max |arg a_h(u, u)| over the form's numerical range.

    Random unit samples give the floor; the exact ascent limit is the top
    |eigenvalue| of the Hermitian pencil Im(M) v = t Re(M) v.
    """
    M = L.dense() * L.grid.node_volume
    H = 0.5 * (M + M.conj().T)
    S = (M - M.conj().T) / 2j
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_samples):
        u = rng.standard_normal(L.nfree) + 1j * rng.standard_normal(L.nfree)
        f = complex(np.vdot(u, M @ u))
        if f != 0:
            best = max(best, abs(math.atan2(f.imag, f.real)))
    Hr = H.real if np.allclose(H.imag, 0, atol=1e-14) else H
    evmin = np.linalg.eigvalsh(Hr)[0]
    if evmin < -1e-10 * max(abs(np.linalg.eigvalsh(Hr)[-1]), 1e-300):
        raise ValueError("form is not accretive; numerical-range angle undefined")
    t = _pencil_absmax(np.asarray(S, dtype=complex), np.asarray(Hr, dtype=complex))
    return max(best, math.atan(t))


def lp_dissipativity(L: DiscreteOperator, p: float, u: np.ndarray) -> float:
    """Re a_h(u, |u|^{p-2} u): the discrete L^p-dissipativity integrand."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    u = np.asarray(u, dtype=complex)
    if p == 2.0:
        w = u
    else:
        au = np.abs(u)
        au_s = np.where(au == 0, 1.0, au)
        w = np.where(au == 0, 0.0, au_s ** (p - 2.0) * u)
    return float(L.form(u, w).real)
