"""Implicit time stepping for the two-scale diffusion model.

The equation carries a first-order derivative plus q times a Caputo
derivative of order alpha.  Discretization: backward differences for the
first-order part, the L1 table for the fractional part, P1 elements in space,
homogeneous Dirichlet boundary enforced by reduction to interior unknowns.
At every step the same matrix ((1 + q c_nn)/tau M + K) appears on the left,
so its factorization is built once and reused; the memory term is a weighted
sum over all previous increments, recomputed per step (O(N^2) total).

The adjoint problem (terminal condition, backward fractional operator) is
solved by the substitution s = T - t, which turns it into the forward scheme
on the reversed load sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import AssembledSystem, Mesh, factorize, load_field, save_field, solve_spd
from .fractime import TimeGrid, TimeSeries, l1_weights

__all__ = [
    "ModelProblem",
    "solve_forward",
    "solve_forward_general",
    "solve_adjoint",
    "backward_euler_heat",
    "ConvergenceRow",
    "manufactured_case",
    "convergence_study",
    "save_space_time",
    "load_space_time",
]


@dataclass(frozen=True)
class ModelProblem:
    """Everything needed for one forward solve.

    rho holds the temporal source factor sampled on the grid, g and a the
    nodal spatial source and initial value.  The initial value must vanish on
    boundary nodes (Dirichlet-compatible interpolant).
    """

    mesh: Mesh
    grid: TimeGrid
    system: AssembledSystem
    alpha: float
    q: float
    rho: TimeSeries
    g: np.ndarray
    a: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"fractional order must lie in (0,1), got {self.alpha}")
        if self.q < 0.0:
            raise ValueError(f"coupling coefficient must be nonnegative, got {self.q}")
        if self.rho.grid != self.grid:
            raise ValueError("rho is sampled on a different time grid")
        n = self.mesh.n_nodes
        for name in ("g", "a"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must hold one value per node")
            object.__setattr__(self, name, arr)
        bdy = np.abs(self.a[self.mesh.boundary])
        if bdy.size and bdy.max() > 1e-12 * (1.0 + np.abs(self.a).max()):
            raise ValueError("initial value must vanish on boundary nodes")


class _Stepper:
    """Reduced matrices, L1 weights and the reusable LU for one configuration."""

    def __init__(self, system: AssembledSystem, grid: TimeGrid, alpha: float, q: float):
        idx = system.interior
        self.system = system
        self.grid = grid
        self.q = q
        self.idx = idx
        self.weights = l1_weights(alpha, grid)
        self.M_rows = system.M[idx]  # interior rows, all columns (for loads)
        self.M_ii = self.M_rows[:, idx].tocsr()
        self.K_ii = system.K[idx][:, idx].tocsr()
        self.c_nn = self.weights.table[1, 1]
        self.scale = (1.0 + q * self.c_nn) / grid.tau
        self.lhs = (self.scale * self.M_ii + self.K_ii).tocsr()
        self.lu = factorize(self.lhs)

    def run(self, a_full: np.ndarray, loads: np.ndarray, assembled: bool) -> np.ndarray:
        grid, q, idx = self.grid, self.q, self.idx
        n_nodes = self.system.mesh.n_nodes
        frames = np.zeros((grid.N + 1, n_nodes))
        frames[0] = a_full
        u_prev = a_full[idx].copy()
        du = np.zeros((grid.N, idx.size))
        for n in range(1, grid.N + 1):
            accum = self.scale * u_prev
            if q > 0.0 and n > 1:
                hist = self.weights.table[n, 1:n] @ du[: n - 1]
                accum -= (q / grid.tau) * hist
            rhs = self.M_ii @ accum
            if assembled:
                rhs = rhs + loads[n][idx]
            else:
                rhs = rhs + self.M_rows @ loads[n]
            u_n = solve_spd(self.lhs, rhs, factor=self.lu)
            du[n - 1] = u_n - u_prev
            u_prev = u_n
            frames[n, idx] = u_n
        return frames


def _stepper_for(system: AssembledSystem, grid: TimeGrid, alpha: float, q: float) -> _Stepper:
    key = ("stepper", grid.T, grid.N, alpha, q)
    stepper = system._cache.get(key)
    if stepper is None:
        stepper = _Stepper(system, grid, alpha, q)
        system._cache[key] = stepper
    return stepper


def solve_forward_general(
    problem: ModelProblem, loads: np.ndarray, assembled: bool = False
) -> np.ndarray:
    """March the scheme with an arbitrary per-step load.

    loads[n] is the nodal source F(., t_n) (multiplied by M internally), or,
    with assembled=True, an already-assembled weak-form load vector such as
    M_omega @ r.  loads[0] is ignored (frame 0 is the initial value).
    """
    loads = np.asarray(loads, dtype=float)
    expect = (problem.grid.N + 1, problem.mesh.n_nodes)
    if loads.shape != expect:
        raise ValueError(f"loads must have shape {expect}, got {loads.shape}")
    stepper = _stepper_for(problem.system, problem.grid, problem.alpha, problem.q)
    return stepper.run(problem.a, loads, assembled)


def solve_forward(problem: ModelProblem) -> np.ndarray:
    """Forward solve with the separable source F(x, t_n) = rho(t_n) g(x)."""
    loads = problem.rho.values[:, None] * problem.g[None, :]
    return solve_forward_general(problem, loads)


def solve_adjoint(
    system: AssembledSystem,
    q: float,
    alpha: float,
    grid: TimeGrid,
    residual: np.ndarray,
) -> np.ndarray:
    """Solve the terminal-value adjoint problem driven by observation residuals.

    residual[n] must be the assembled load 1_omega (u - u_d) at t_n, i.e.
    M_omega @ (u_n - u_d_n).  Substituting s = T - t turns the backward
    fractional operator into the forward one (Caputo, since w(0) = 0), so the
    forward stepper runs on the reversed loads and the frames are reversed
    back; the returned terminal frame is exactly zero.
    """
    residual = np.asarray(residual, dtype=float)
    expect = (grid.N + 1, system.mesh.n_nodes)
    if residual.shape != expect:
        raise ValueError(f"residual must have shape {expect}, got {residual.shape}")
    stepper = _stepper_for(system, grid, alpha, q)
    w = stepper.run(np.zeros(system.mesh.n_nodes), residual[::-1], assembled=True)
    return w[::-1].copy()


def backward_euler_heat(
    system: AssembledSystem, grid: TimeGrid, a: np.ndarray, loads: np.ndarray
) -> np.ndarray:
    """Plain backward-Euler heat march, deliberately independent of the
    L1 machinery; reference path for the q = 0 limit."""
    idx = system.interior
    M_rows = system.M[idx]
    M_ii = M_rows[:, idx].tocsr()
    K_ii = system.K[idx][:, idx].tocsr()
    lhs = ((1.0 / grid.tau) * M_ii + K_ii).tocsr()
    lu = factorize(lhs)
    frames = np.zeros((grid.N + 1, system.mesh.n_nodes))
    frames[0] = a
    u_prev = a[idx].copy()
    for n in range(1, grid.N + 1):
        rhs = M_ii @ ((1.0 / grid.tau) * u_prev) + M_rows @ loads[n]
        u_prev = solve_spd(lhs, rhs, factor=lu)
        frames[n, idx] = u_prev
    return frames


@dataclass(frozen=True)
class ConvergenceRow:
    nx: int
    N: int
    error: float
    order: float | None


def manufactured_case(q: float = 1.0, alpha: float = 0.5):
    """Exact solution u* = t^2 sin(pi x) sin(pi y) and its matching source.

    The Caputo derivative of t^2 is 2 t^{2-alpha}/Gamma(3-alpha) and the
    Laplacian contributes 2 pi^2 u*, so
      F = (2t + 2q t^{2-alpha}/Gamma(3-alpha) + 2 pi^2 t^2) sin(pi x) sin(pi y).
    """
    import math

    def exact(x, y, t):
        return t**2 * np.sin(np.pi * x) * np.sin(np.pi * y)

    def source(x, y, t):
        temporal = (
            2.0 * t
            + q * 2.0 * t ** (2.0 - alpha) / math.gamma(3.0 - alpha)
            + 2.0 * np.pi**2 * t**2
        )
        return temporal * np.sin(np.pi * x) * np.sin(np.pi * y)

    return exact, source


def convergence_study(
    levels, alpha: float = 0.5, q: float = 1.0, T: float = 1.0
) -> list[ConvergenceRow]:
    """Max-in-time L2 errors of the manufactured solution across levels.

    levels is a list of (nx, N) pairs; the order column is the log2 ratio of
    successive errors (None on the first row).
    """
    from .fem import Coefficients, assemble, build_mesh, l2_inner, project_function

    exact, source = manufactured_case(q=q, alpha=alpha)
    rows: list[ConvergenceRow] = []
    prev_err = None
    for nx, N in levels:
        mesh = build_mesh(nx, nx)
        system = assemble(mesh, Coefficients.laplace())
        grid = TimeGrid(T=T, N=N)
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        loads = np.stack([source(x, y, t) for t in grid.nodes])
        problem = ModelProblem(
            mesh,
            grid,
            system,
            alpha,
            q,
            TimeSeries(grid, np.zeros(N + 1)),
            np.zeros(mesh.n_nodes),
            np.zeros(mesh.n_nodes),
        )
        u = solve_forward_general(problem, loads)
        err = 0.0
        for n, t in enumerate(grid.nodes):
            diff = u[n] - exact(x, y, t)
            err = max(err, np.sqrt(l2_inner(diff, diff, system.M)))
        order = None if prev_err is None else float(np.log2(prev_err / err))
        rows.append(ConvergenceRow(nx, N, float(err), order))
        prev_err = err
    return rows


def save_space_time(
    directory,
    frames: np.ndarray,
    mesh: Mesh,
    grid: TimeGrid,
    alpha: float,
    q: float,
    extra: dict | None = None,
) -> None:
    """Persist frames as frame_0000.csv .. frame_NNNN.csv plus a manifest.

    The manifest is key=value text recording T, N, nx, ny, alpha, q (plus any
    extra entries), so a frames directory is self-describing.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frames = np.asarray(frames, dtype=float)
    if frames.shape != (grid.N + 1, mesh.n_nodes):
        raise ValueError("frames do not match grid and mesh")
    for n in range(grid.N + 1):
        save_field(directory / f"frame_{n:04d}.csv", mesh, frames[n])
    entries = {
        "T": f"{grid.T:.17g}",
        "N": str(grid.N),
        "nx": str(mesh.nx),
        "ny": str(mesh.ny),
        "alpha": f"{alpha:.17g}",
        "q": f"{q:.17g}",
    }
    if extra:
        for key, val in extra.items():
            entries.setdefault(key, str(val))
    with open(directory / "manifest.txt", "w", encoding="ascii") as fh:
        for key, val in entries.items():
            fh.write(f"{key}={val}\n")


def load_space_time(directory, mesh: Mesh | None = None):
    """Read back a frames directory; returns (frames, manifest dict)."""
    directory = Path(directory)
    manifest = {}
    for line in (directory / "manifest.txt").read_text(encoding="ascii").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, val = line.partition("=")
            manifest[key.strip()] = val.strip()
    N = int(manifest["N"])
    frames = [
        load_field(directory / f"frame_{n:04d}.csv", mesh) for n in range(N + 1)
    ]
    return np.stack(frames), manifest
