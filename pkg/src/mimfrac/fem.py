"""Structured P1 finite elements on a rectangle.

Mesh construction, sparse assembly of mass/stiffness/reaction matrices with
one-point centroid quadrature for the coefficients, frame-shaped observation
masks, Dirichlet handling by reduction to interior unknowns, and CSV field
persistence.

Fields are plain numpy arrays holding one value per node, in node index
order; observation masks are boolean arrays with one flag per element.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Mesh",
    "Coefficients",
    "AssembledSystem",
    "SolverError",
    "ParseError",
    "build_mesh",
    "assemble",
    "mask_from_frame",
    "l2_inner",
    "project_function",
    "zero_boundary",
    "factorize",
    "solve_spd",
    "save_field",
    "load_field",
]

# contract for every linear solve in the package
REL_RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """A linear solve failed or missed the residual tolerance."""


class ParseError(ValueError):
    """A field file could not be parsed; message carries the line number."""


@dataclass(frozen=True)
class Mesh:
    """Uniform triangulation of [x0,x1] x [y0,y1] with nx x ny cells.

    Nodes are ordered lexicographically (x fastest): node(ix,iy) has index
    iy*(nx+1)+ix.  Every cell is split along its lower-left to upper-right
    diagonal, for determinism: 2*nx*ny triangles, all positively oriented.
    """

    nx: int
    ny: int
    domain: tuple[float, float, float, float]
    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]


@dataclass(frozen=True)
class Coefficients:
    """Diffusion tensor A(x,y) (2x2 SPD) and reaction c(x,y) >= 0.

    Both callables are evaluated at element centroids during assembly.
    """

    A: object
    c: object

    @classmethod
    def laplace(cls) -> "Coefficients":
        """A = identity, c = 0: the plain Dirichlet Laplacian."""
        return cls(A=lambda x, y: np.eye(2), c=lambda x, y: 0.0)


@dataclass(frozen=True)
class AssembledSystem:
    """Assembled weak-form matrices plus the Dirichlet interior index.

    M: mass; K: stiffness + reaction; M_omega: mass restricted to the
    observation elements (None when no mask was supplied); interior: indices
    of the non-boundary nodes, mapping free unknowns to node numbers; mask:
    the element flags that produced M_omega, kept for downstream consumers.
    """

    M: sp.csr_matrix
    K: sp.csr_matrix
    M_omega: sp.csr_matrix | None
    interior: np.ndarray
    mesh: Mesh
    mask: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)


def build_mesh(nx: int, ny: int, domain=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Build the structured triangulation.

    Parameters
    ----------
    nx, ny : cell counts per axis, both >= 2.
    domain : rectangle (x0, x1, y0, y1).
    """
    if nx < 2 or ny < 2:
        raise ValueError(f"need at least 2 cells per axis, got nx={nx}, ny={ny}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {domain}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            p00 = j * (nx + 1) + i
            p10 = p00 + 1
            p01 = p00 + (nx + 1)
            p11 = p01 + 1
            tris[k] = (p00, p10, p11)
            tris[k + 1] = (p00, p11, p01)
            k += 2

    ix = np.tile(np.arange(nx + 1), ny + 1)
    iy = np.repeat(np.arange(ny + 1), nx + 1)
    boundary = (ix == 0) | (ix == nx) | (iy == 0) | (iy == ny)
    return Mesh(nx, ny, (x0, x1, y0, y1), nodes, tris, boundary)


def _tri_geometry(pts: np.ndarray) -> tuple[float, np.ndarray]:
    """Signed area and barycentric gradients of one triangle."""
    (x0, y0), (x1, y1), (x2, y2) = pts
    area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
    grads = np.array(
        [
            [y1 - y2, x2 - x1],
            [y2 - y0, x0 - x2],
            [y0 - y1, x1 - x0],
        ]
    ) / (2.0 * area)
    return area, grads


# exact P1 mass integration: int phi_i phi_j = area/12 * (1 + delta_ij)
_MASS_LOCAL = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble(mesh: Mesh, coeffs: Coefficients, mask: np.ndarray | None = None) -> AssembledSystem:
    """Assemble M, K (= diffusion + reaction) and optionally M_omega.

    Coefficients are sampled at element centroids (exact for the constant
    coefficients of all reproduced experiments, O(h^2) otherwise); the
    polynomial parts are integrated exactly.  Local matrices are built
    symmetrically entry by entry, so M and K come out exactly symmetric.
    """
    if mask is not None and mask.shape != (mesh.n_elements,):
        raise ValueError("observation mask does not match the mesh")
    rows, cols = [], []
    m_vals, k_vals, mo_vals = [], [], []
    for e, tri in enumerate(mesh.triangles):
        pts = mesh.nodes[tri]
        area, grads = _tri_geometry(pts)
        cx, cy = pts.mean(axis=0)
        amat = np.asarray(coeffs.A(cx, cy), dtype=float)
        if amat.shape != (2, 2) or abs(amat[0, 1] - amat[1, 0]) > 1e-12 * (
            1.0 + np.abs(amat).max()
        ):
            raise ValueError(f"diffusion tensor not symmetric at ({cx}, {cy})")
        if amat[0, 0] <= 0.0 or np.linalg.det(amat) <= 0.0:
            raise ValueError(f"diffusion tensor not positive definite at ({cx}, {cy})")
        cval = float(coeffs.c(cx, cy))
        if cval < 0.0:
            raise ValueError(f"reaction coefficient negative at ({cx}, {cy})")
        in_omega = bool(mask[e]) if mask is not None else False
        for i in range(3):
            for j in range(i, 3):
                m_ij = area * _MASS_LOCAL[i, j]
                k_ij = area * float(grads[i] @ amat @ grads[j]) + cval * m_ij
                pairs = [(tri[i], tri[j])] if i == j else [
                    (tri[i], tri[j]),
                    (tri[j], tri[i]),
                ]
                for r, c in pairs:
                    rows.append(r)
                    cols.append(c)
                    m_vals.append(m_ij)
                    k_vals.append(k_ij)
                    mo_vals.append(m_ij if in_omega else 0.0)

    n = mesh.n_nodes
    shape = (n, n)
    M = sp.coo_matrix((m_vals, (rows, cols)), shape=shape).tocsr()
    K = sp.coo_matrix((k_vals, (rows, cols)), shape=shape).tocsr()
    M_omega = (
        sp.coo_matrix((mo_vals, (rows, cols)), shape=shape).tocsr()
        if mask is not None
        else None
    )
    interior = np.flatnonzero(~mesh.boundary)
    kept = None if mask is None else np.asarray(mask, dtype=bool).copy()
    return AssembledSystem(M, K, M_omega, interior, mesh, kept)


def mask_from_frame(mesh: Mesh, inner: tuple[float, float]) -> np.ndarray:
    """Flag the elements of the frame omega = Omega \\ [a,b]^2.

    An element belongs to omega when its centroid falls outside the inner
    square; [a,b]^2 must lie strictly inside the domain (a == b collapses the
    square to a point and flags everything).
    """
    a, b = map(float, inner)
    x0, x1, y0, y1 = mesh.domain
    if not (x0 < a <= b < x1 and y0 < a <= b < y1):
        raise ValueError(f"inner square [{a},{b}]^2 is not strictly inside the domain")
    centroids = mesh.nodes[mesh.triangles].mean(axis=1)
    cx, cy = centroids[:, 0], centroids[:, 1]
    flags = ~((cx >= a) & (cx <= b) & (cy >= a) & (cy <= b))
    if not flags.any():
        raise ValueError("observation region is empty at this resolution")
    return flags


def l2_inner(f: np.ndarray, g: np.ndarray, matrix: sp.spmatrix) -> float:
    """Discrete L2 pairing f' * matrix * g with M or M_omega."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = matrix.shape[0]
    if f.shape != (n,) or g.shape != (n,):
        raise ValueError("fields do not match the matrix dimension")
    return float(f @ (matrix @ g))


def project_function(mesh: Mesh, f) -> np.ndarray:
    """Nodal interpolation (not an L2 projection): value at node = f(node)."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    try:
        values = np.asarray(f(x, y), dtype=float)
        if values.shape != x.shape:
            raise TypeError
    except TypeError:
        values = np.array([float(f(xi, yi)) for xi, yi in mesh.nodes])
    return values


def zero_boundary(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Copy of a field with the boundary nodal values set to exact zeros.

    Interpolants of functions that vanish on the boundary only analytically
    (e.g. sin(pi x)) carry O(1e-16) residues there; this makes them
    Dirichlet-constrained in the strict nodal sense.
    """
    out = np.asarray(values, dtype=float).copy()
    out[mesh.boundary] = 0.0
    return out


def factorize(lhs: sp.spmatrix):
    """Sparse LU factorization, reusable across identical time steps."""
    try:
        return spla.splu(sp.csc_matrix(lhs))
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc


def solve_spd(lhs: sp.spmatrix, rhs: np.ndarray, factor=None) -> np.ndarray:
    """Direct solve with an enforced relative residual <= 1e-10.

    Pass ``factor=factorize(lhs)`` to reuse one factorization across many
    right-hand sides.
    """
    rhs = np.asarray(rhs, dtype=float)
    lu = factor if factor is not None else factorize(lhs)
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced nonfinite values")
    resid = np.linalg.norm(rhs - lhs @ x)
    scale = np.linalg.norm(rhs)
    rel = resid / scale if scale > 0.0 else resid
    if rel > REL_RESIDUAL_TOL:
        raise SolverError(f"relative residual {rel:.3e} above {REL_RESIDUAL_TOL:.0e}")
    return x


def save_field(path, mesh: Mesh, values: np.ndarray) -> None:
    """Write a field as CSV rows x,y,value in node index order.

    Values are written with 17 significant digits so the read-back is
    bit-for-bit identical.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_nodes,):
        raise ValueError(f"expected {mesh.n_nodes} values, got {values.shape}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("x,y,value\n")
        for (x, y), v in zip(mesh.nodes, values):
            fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


def load_field(path, mesh: Mesh | None = None) -> np.ndarray:
    """Read a field CSV written by save_field; returns the value column."""
    path = Path(path)
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "x,y,value":
        raise ParseError(f"{path}: line 1: expected header 'x,y,value'")
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"{path}: line {lineno}: expected 3 columns, got {len(parts)}")
        try:
            values.append(float(parts[2]))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: bad value {parts[2]!r}") from exc
    out = np.array(values)
    if mesh is not None and out.shape != (mesh.n_nodes,):
        raise ParseError(f"{path}: {out.size} rows do not match {mesh.n_nodes} nodes")
    return out
