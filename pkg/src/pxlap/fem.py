"""Continuous P1 finite elements on the unit interval and unit square.

Gradients of P1 functions are constant per element, so the only
quadrature error in the energy comes from p(x) and from the nonlinearity.
The exponent is sampled at quadrature points and never interpolated.

All assembly routines return vectors and matrices over the *free*
(non-Dirichlet) nodes; boundary values are eliminated, not penalized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidSize, MeshMismatch

if TYPE_CHECKING:  # pragma: no cover
    from .varexp import ExponentField

__all__ = [
    "Mesh", "FeFunction", "AssemblyResult", "EnergyFunctional", "NoLoad",
    "interval_mesh", "unit_square_mesh", "mesh_from_spec",
    "assemble_energy", "assemble_gradient", "assemble_hessian",
    "stiffness_matrix", "mass_matrix", "p_laplacian_action",
    "write_function_csv", "format_float",
]

_GAUSS3_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GAUSS3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

_EDGE_MIDPOINT_BARY = np.array([[0.5, 0.5, 0.0],
                                [0.0, 0.5, 0.5],
                                [0.5, 0.0, 0.5]])


@dataclass(eq=False)
class Mesh:
    """Simplicial mesh with P1 basis data and per-element quadrature.

    Attributes
    ----------
    dim : int
        1 (segments) or 2 (triangles).
    vertices : ndarray, shape (nv, dim)
    elements : ndarray of int, shape (ne, dim + 1)
    boundary_nodes : ndarray of int
        Sorted indices of the Dirichlet nodes.
    qbary : ndarray, shape (nq, dim + 1)
        Basis function values at the reference quadrature points.
    qref_weights : ndarray, shape (nq,)
        Reference weights summing to one.
    inward : ndarray of int, shape (nb, 2)
        Pairs ``(boundary node, inward neighbour)`` used for one-sided
        normal derivatives; corners of the square are omitted.
    inward_distance : ndarray, shape (nb,)
    """

    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    qbary: np.ndarray
    qref_weights: np.ndarray
    inward: np.ndarray
    inward_distance: np.ndarray
    kind: str = ""
    n: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, self.dim)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.boundary_nodes = np.unique(np.asarray(self.boundary_nodes, dtype=np.int64))
        if np.any(self.measures <= 0):
            raise InvalidSize("mesh has elements with non-positive measure")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def free_nodes(self) -> np.ndarray:
        mask = np.ones(self.num_vertices, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def num_free(self) -> int:
        return len(self.free_nodes)

    @cached_property
    def free_index(self) -> np.ndarray:
        """Map from vertex index to free-node index (-1 on the boundary)."""
        idx = np.full(self.num_vertices, -1, dtype=np.int64)
        idx[self.free_nodes] = np.arange(self.num_free)
        return idx

    @cached_property
    def _jacobians(self):
        x = self.vertices[self.elements]           # (ne, dim+1, dim)
        return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))  # (ne, dim, dim)

    @cached_property
    def measures(self) -> np.ndarray:
        det = np.linalg.det(self._jacobians) if self.dim > 1 else self._jacobians[:, 0, 0]
        return np.abs(det) / (1.0 if self.dim == 1 else 2.0)

    @cached_property
    def grads(self) -> np.ndarray:
        """Constant basis gradients, shape (ne, dim + 1, dim)."""
        inv = np.linalg.inv(self._jacobians)       # rows: d(bary_k)/dx for k >= 1
        g_rest = inv                                # (ne, dim, dim)
        g0 = -g_rest.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g_rest], axis=1)

    @cached_property
    def qweights(self) -> np.ndarray:
        """Physical quadrature weights, shape (ne, nq)."""
        return self.measures[:, None] * self.qref_weights[None, :]

    @cached_property
    def qpoints(self) -> np.ndarray:
        """Physical quadrature points, shape (ne, nq, dim)."""
        return np.einsum("qk,ekd->eqd", self.qbary, self.vertices[self.elements])

    @property
    def area(self) -> float:
        return float(self.measures.sum())

    @cached_property
    def _free_pairs(self):
        k = self.dim + 1
        rows = np.repeat(self.elements, k, axis=1).reshape(-1, k, k)
        cols = np.tile(self.elements, (1, k)).reshape(-1, k, k)
        fr, fc = self.free_index[rows], self.free_index[cols]
        keep = (fr >= 0) & (fc >= 0)
        return fr[keep], fc[keep], keep

    def assemble_local_matrices(self, local: np.ndarray) -> sp.csr_matrix:
        """Sum element matrices of shape (ne, k, k) into a free-node CSR matrix."""
        rows, cols, keep = self._free_pairs
        m = sp.coo_matrix((local[keep], (rows, cols)), shape=(self.num_free, self.num_free))
        return m.tocsr()

    def assemble_local_vectors(self, local: np.ndarray) -> np.ndarray:
        """Sum element vectors of shape (ne, k) into a full nodal vector."""
        return np.bincount(self.elements.ravel(), weights=local.ravel(),
                           minlength=self.num_vertices)

    def expand(self, free_values: np.ndarray) -> np.ndarray:
        full = np.zeros(self.num_vertices)
        full[self.free_nodes] = free_values
        return full

    def describe(self) -> str:
        return f"{self.kind}:{self.n}" if self.kind else f"mesh(dim={self.dim})"


def interval_mesh(n: int) -> Mesh:
    """Uniform mesh of (0, 1) with `n` segments and 3-point Gauss quadrature."""
    if int(n) != n or n < 2:
        raise InvalidSize(f"interval mesh needs n >= 2 elements, got {n!r}")
    n = int(n)
    x = np.linspace(0.0, 1.0, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    qbary = np.column_stack([1.0 - _GAUSS3_POINTS, _GAUSS3_POINTS])
    h = 1.0 / n
    return Mesh(
        dim=1, vertices=x[:, None], elements=elements, boundary_nodes=[0, n],
        qbary=qbary, qref_weights=_GAUSS3_WEIGHTS.copy(),
        inward=np.array([[0, 1], [n, n - 1]]), inward_distance=np.array([h, h]),
        kind="interval", n=n,
    )


def unit_square_mesh(n: int) -> Mesh:
    """Structured n-by-n grid of the unit square, two triangles per cell."""
    if int(n) != n or n < 2:
        raise InvalidSize(f"square mesh needs n >= 2 cells per side, got {n!r}")
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)                   # node (i, j) -> j*(n+1) + i
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def node(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)
    elements = np.concatenate([np.column_stack([v00, v10, v11]),
                               np.column_stack([v00, v11, v01])])

    on_edge = (np.isin(X.ravel(), (0.0, 1.0))) | (np.isin(Y.ravel(), (0.0, 1.0)))
    boundary = np.flatnonzero(on_edge)

    side = np.arange(1, n)
    inward = np.concatenate([
        np.column_stack([node(0, side), node(1, side)]),
        np.column_stack([node(n, side), node(n - 1, side)]),
        np.column_stack([node(side, 0), node(side, 1)]),
        np.column_stack([node(side, n), node(side, n - 1)]),
    ])
    return Mesh(
        dim=2, vertices=vertices, elements=elements, boundary_nodes=boundary,
        qbary=_EDGE_MIDPOINT_BARY.copy(), qref_weights=np.full(3, 1.0 / 3.0),
        inward=inward, inward_distance=np.full(len(inward), 1.0 / n),
        kind="square", n=n,
    )


def mesh_from_spec(text: str) -> Mesh:
    """Build a mesh from ``"interval:N"`` or ``"square:N"``."""
    kind, _, num = text.partition(":")
    try:
        n = int(num)
    except ValueError:
        raise InvalidSize(f"bad mesh size in {text!r}") from None
    if kind == "interval":
        return interval_mesh(n)
    if kind == "square":
        return unit_square_mesh(n)
    raise InvalidSize(f"unknown mesh kind {kind!r} (expected interval or square)")


@dataclass(eq=False)
class FeFunction:
    """P1 function given by its nodal values on `mesh`."""

    nodal: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        self.nodal = np.asarray(self.nodal, dtype=float)
        if self.nodal.shape != (self.mesh.num_vertices,):
            raise MeshMismatch(
                f"expected {self.mesh.num_vertices} nodal values, got shape {self.nodal.shape}")

    @classmethod
    def zeros(cls, mesh: Mesh) -> "FeFunction":
        return cls(np.zeros(mesh.num_vertices), mesh)

    @classmethod
    def interpolate(cls, mesh: Mesh, fn: Callable) -> "FeFunction":
        """Nodal interpolant of ``fn(x)`` (1D) or ``fn(x, y)`` (2D)."""
        coords = [mesh.vertices[:, d] for d in range(mesh.dim)]
        vals = np.broadcast_to(np.asarray(fn(*coords), dtype=float), (mesh.num_vertices,))
        return cls(vals.copy(), mesh)

    @classmethod
    def from_free(cls, mesh: Mesh, free_values: np.ndarray) -> "FeFunction":
        return cls(mesh.expand(free_values), mesh)

    @property
    def free(self) -> np.ndarray:
        return self.nodal[self.mesh.free_nodes]

    def at_quadrature(self) -> np.ndarray:
        """Linear interpolation to quadrature points, shape (ne, nq)."""
        return self.nodal[self.mesh.elements] @ self.mesh.qbary.T

    def gradient(self) -> np.ndarray:
        """Element-wise constant gradient, shape (ne, dim)."""
        return np.einsum("ekd,ek->ed", self.mesh.grads, self.nodal[self.mesh.elements])

    def boundary_max(self) -> float:
        b = self.nodal[self.mesh.boundary_nodes]
        return float(np.max(np.abs(b))) if b.size else 0.0

    def __mul__(self, alpha):
        return FeFunction(self.nodal * float(alpha), self.mesh)

    __rmul__ = __mul__

    def __truediv__(self, alpha):
        return FeFunction(self.nodal / float(alpha), self.mesh)

    def __add__(self, other: "FeFunction"):
        _same_mesh(self.mesh, other.mesh)
        return FeFunction(self.nodal + other.nodal, self.mesh)

    def __sub__(self, other: "FeFunction"):
        _same_mesh(self.mesh, other.mesh)
        return FeFunction(self.nodal - other.nodal, self.mesh)

    def __neg__(self):
        return FeFunction(-self.nodal, self.mesh)


def _same_mesh(*meshes):
    first = meshes[0]
    for m in meshes[1:]:
        if m is not first:
            raise MeshMismatch("objects live on different meshes")


class NoLoad:
    """Zero right-hand side: the energy reduces to the p(x)-Dirichlet integral."""

    def f_lambda(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    F_lambda = f_lambda
    df_lambda = f_lambda


@dataclass
class AssemblyResult:
    energy: float
    gradient: np.ndarray
    hessian: Optional[sp.csr_matrix] = None


@dataclass(eq=False)
class EnergyFunctional:
    """E(u) = ∫ |∇u|^p / p - ∫ F(u) on free nodal coordinates.

    `load` is any object with vectorized ``f_lambda``, ``F_lambda`` and
    ``df_lambda`` methods (e.g. a :class:`~pxlap.semipositone.TruncatedProblem`).
    """

    mesh: Mesh
    p: "ExponentField"
    load: object = field(default_factory=NoLoad)

    def __post_init__(self):
        _same_mesh(self.mesh, self.p.mesh)

    # internal helpers work on full nodal vectors
    def _grad_sq(self, nodal):
        g = np.einsum("ekd,ek->ed", self.mesh.grads, nodal[self.mesh.elements])
        return g, np.einsum("ed,ed->e", g, g)

    def _uq(self, nodal):
        return nodal[self.mesh.elements] @ self.mesh.qbary.T

    def energy(self, x: np.ndarray) -> float:
        nodal = self.mesh.expand(x)
        _, gsq = self._grad_sq(nodal)
        pv = self.p.values
        dens = np.power(gsq[:, None], pv / 2.0) / pv - self.load.F_lambda(self._uq(nodal))
        return float(np.sum(self.mesh.qweights * dens))

    def dirichlet_energy(self, x: np.ndarray) -> float:
        """∫ |∇u|^p / p, the convex part of the energy."""
        _, gsq = self._grad_sq(self.mesh.expand(x))
        pv = self.p.values
        return float(np.sum(self.mesh.qweights * np.power(gsq[:, None], pv / 2.0) / pv))

    def flux_vector(self, nodal: np.ndarray) -> np.ndarray:
        """Full nodal vector of ∫ |∇u|^(p-2) ∇u · ∇φ_i."""
        g, gsq = self._grad_sq(nodal)
        pv = self.p.values
        with np.errstate(divide="ignore"):
            coef = np.where(gsq[:, None] > 0.0,
                            np.power(np.where(gsq > 0, gsq, 1.0)[:, None], (pv - 2.0) / 2.0), 0.0)
        A = np.sum(self.mesh.qweights * coef, axis=1)
        local = A[:, None] * np.einsum("ekd,ed->ek", self.mesh.grads, g)
        return self.mesh.assemble_local_vectors(local)

    def load_vector(self, nodal: np.ndarray) -> np.ndarray:
        """Full nodal vector of ∫ f(u) φ_i."""
        fq = self.mesh.qweights * self.load.f_lambda(self._uq(nodal))
        return self.mesh.assemble_local_vectors(fq @ self.mesh.qbary)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        nodal = self.mesh.expand(x)
        r = self.flux_vector(nodal) - self.load_vector(nodal)
        return r[self.mesh.free_nodes]

    def hessian(self, x: np.ndarray, eps: float = 1e-10) -> sp.csr_matrix:
        if not eps > 0:
            raise ValueError("eps must be positive")
        mesh = self.mesh
        nodal = mesh.expand(x)
        g, gsq = self._grad_sq(nodal)
        pv = self.p.values
        reg = gsq[:, None] + eps
        a = np.power(reg, (pv - 2.0) / 2.0)
        b = a * (pv - 2.0) / reg
        A = np.sum(mesh.qweights * a, axis=1)
        B = np.sum(mesh.qweights * b, axis=1)
        G = mesh.grads
        Gg = np.einsum("ekd,ed->ek", G, g)
        local = (A[:, None, None] * np.einsum("ekd,eld->ekl", G, G)
                 + B[:, None, None] * Gg[:, :, None] * Gg[:, None, :])
        c = mesh.qweights * self.load.df_lambda(self._uq(nodal))
        local -= np.einsum("eq,qk,ql->ekl", c, mesh.qbary, mesh.qbary)
        H = mesh.assemble_local_matrices(local)
        return ((H + H.T) * 0.5).tocsr()


def _functional(u: FeFunction, p, prob) -> EnergyFunctional:
    _same_mesh(u.mesh, p.mesh)
    return EnergyFunctional(u.mesh, p, NoLoad() if prob is None else prob)


def assemble_energy(u: FeFunction, p: "ExponentField", prob=None) -> float:
    """Quadrature value of E(u); `prob` supplies F_λ (None means F = 0)."""
    return _functional(u, p, prob).energy(u.free)


def assemble_gradient(u: FeFunction, p: "ExponentField", prob=None) -> AssemblyResult:
    fn = _functional(u, p, prob)
    x = u.free
    return AssemblyResult(fn.energy(x), fn.gradient(x))


def assemble_hessian(u: FeFunction, p: "ExponentField", prob=None, eps: float = 1e-10) -> AssemblyResult:
    fn = _functional(u, p, prob)
    x = u.free
    return AssemblyResult(fn.energy(x), fn.gradient(x), fn.hessian(x, eps))


def p_laplacian_action(u: FeFunction, p: "ExponentField") -> np.ndarray:
    """Full nodal vector ∫ |∇u|^(p-2) ∇u·∇φ_i over all hat functions φ_i."""
    return _functional(u, p, None).flux_vector(u.nodal)


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Free-node Dirichlet Laplacian ∫ ∇φ_i·∇φ_j."""
    local = mesh.measures[:, None, None] * np.einsum("ekd,eld->ekl", mesh.grads, mesh.grads)
    return mesh.assemble_local_matrices(local)


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Free-node mass matrix ∫ φ_i φ_j (exact for P1 with both rules)."""
    local = np.einsum("eq,qk,ql->ekl", mesh.qweights, mesh.qbary, mesh.qbary)
    return mesh.assemble_local_matrices(local)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_function_csv(u: FeFunction, path) -> Path:
    """Write ``x[,y],u`` rows, one per vertex, with 17 significant digits."""
    path = Path(path)
    header = ["x", "y"][: u.mesh.dim] + ["u"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for coords, val in zip(u.mesh.vertices, u.nodal):
            w.writerow([format_float(c) for c in coords] + [format_float(val)])
    return path
