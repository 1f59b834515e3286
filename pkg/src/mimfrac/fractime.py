"""Fractional time calculus on uniform grids.

L1 weights for the Caputo derivative, product-integration quadrature for the
Riemann-Liouville integral J^{1-alpha}, a second-kind Volterra solver for the
memory kernel mu, and trapezoid time convolution.  Everything here is pure and
immutable after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TimeGrid",
    "TimeSeries",
    "L1Weights",
    "l1_weights",
    "caputo_l1",
    "rl_integral",
    "solve_volterra_mu",
    "convolve",
    "trapezoid_weights",
    "simpson_weights",
]


def _check_alpha(alpha: float) -> None:
    # alpha = 1 exactly is rejected; the closed forms below are continuous on (0,1)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"fractional order must lie in (0,1), got {alpha}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform division of [0, T] into N steps of size tau = T/N."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if not self.T > 0.0:
            raise ValueError(f"final time must be positive, got {self.T}")
        if self.N < 1:
            raise ValueError(f"need at least one step, got N={self.N}")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        """t_n = n*tau for n = 0..N."""
        return self.tau * np.arange(self.N + 1)


@dataclass(frozen=True)
class TimeSeries:
    """Scalar samples at the nodes of a TimeGrid (length N+1)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.N + 1,):
            raise ValueError(
                f"expected {self.grid.N + 1} samples, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: TimeGrid, f) -> "TimeSeries":
        t = grid.nodes
        return cls(grid, np.array([float(f(tn)) for tn in t]))


@dataclass(frozen=True)
class L1Weights:
    """Triangular L1 table c_{n,k} = [(t_n-t_{k-1})^{1-a} - (t_n-t_k)^{1-a}]/Gamma(2-a).

    Row n of ``table`` holds c_{n,k} in columns k = 1..n; on a uniform grid
    c_{n,k} depends on n-k only, but the full table is stored so the history
    sums can index rows directly.
    """

    alpha: float
    grid: TimeGrid
    table: np.ndarray


def l1_weights(alpha: float, grid: TimeGrid) -> L1Weights:
    """Build the L1 weight table for the Caputo derivative of order alpha.

    Parameters
    ----------
    alpha : fractional order in (0,1).
    grid : uniform TimeGrid.

    Returns
    -------
    L1Weights with c_{n,k} > 0, increasing in k for fixed n, and
    sum_k c_{n,k} = t_n^{1-alpha}/Gamma(2-alpha) (telescoping).
    """
    _check_alpha(alpha)
    p = 1.0 - alpha
    N = grid.N
    # c_{n,k} = jumps[n-k] with jumps[j] = tau^p ((j+1)^p - j^p)/Gamma(2-a)
    j = np.arange(N + 1, dtype=float)
    jumps = grid.tau**p * np.diff(j**p) / math.gamma(2.0 - alpha)
    table = np.zeros((N + 1, N + 1))
    for n in range(1, N + 1):
        table[n, 1 : n + 1] = jumps[n - 1 :: -1]
    return L1Weights(alpha, grid, table)


def caputo_l1(u_history, weights: L1Weights, n: int):
    """L1 approximation of the Caputo derivative at t_n.

    ``u_history`` needs entries for levels 0..n (extra trailing entries are
    ignored); entries may be scalars or arrays sharing a trailing shape.
    """
    grid = weights.grid
    if not 1 <= n <= grid.N:
        raise IndexError(f"time index must lie in 1..{grid.N}, got {n}")
    u = np.asarray(u_history, dtype=float)
    if u.shape[0] < n + 1:
        raise IndexError(f"history holds {u.shape[0]} levels, need {n + 1}")
    du = np.diff(u[: n + 1], axis=0)
    c = weights.table[n, 1 : n + 1]
    out = np.tensordot(c, du, axes=(0, 0)) / grid.tau
    return float(out) if out.ndim == 0 else out


def _pi_weights(alpha: float, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Product-integration weights for J^{1-alpha} with piecewise-linear density.

    For the target node t_n the quadrature reads
        (J f)_n = sum_{m=0}^{n-1} left[m]*f_{n-1-m} + right[m]*f_{n-m}
    with the kernel (t_n - s)^{-alpha}/Gamma(1-alpha) integrated exactly
    against the linear interpolant of f on each step.
    """
    g1 = 1.0 - alpha  # kernel order
    N, tau = grid.N, grid.tau
    m = np.arange(N + 1, dtype=float)
    # exact moments over [m*tau, (m+1)*tau]:
    #   i0[m] = int k(u) du,   i1[m] = int u k(u) du / tau
    i0 = tau**g1 * np.diff(m**g1) / math.gamma(g1 + 1.0)
    i1 = tau**g1 * np.diff(m ** (g1 + 1.0)) / ((g1 + 1.0) * math.gamma(g1))
    idx = np.arange(N, dtype=float)
    left = i1 - idx * i0
    right = (idx + 1.0) * i0 - i1
    return left, right


def rl_integral(f: TimeSeries, alpha: float) -> TimeSeries:
    """Riemann-Liouville integral J^{1-alpha} f at every grid node.

    Product integration: f is reconstructed piecewise-linearly and the weakly
    singular kernel is integrated exactly, so linear f is reproduced exactly.
    """
    _check_alpha(alpha)
    grid = f.grid
    left, right = _pi_weights(alpha, grid)
    vals = f.values
    out = np.zeros(grid.N + 1)
    for n in range(1, grid.N + 1):
        out[n] = np.dot(left[:n], vals[n - 1 :: -1]) + np.dot(
            right[:n], vals[n:0:-1]
        )
    return TimeSeries(grid, out)


def solve_volterra_mu(rho: TimeSeries, q: float, alpha: float) -> TimeSeries:
    """Solve mu + q * J^{1-alpha} mu = rho by forward substitution.

    The discrete system uses the same product-integration weights as
    rl_integral, so substituting the result back reproduces rho exactly up to
    roundoff.  The diagonal 1 + q*right[0] is strictly positive for q >= 0.
    """
    if q < 0:
        raise ValueError(f"coupling coefficient must be nonnegative, got {q}")
    _check_alpha(alpha)
    grid = rho.grid
    left, right = _pi_weights(alpha, grid)
    r = rho.values
    mu = np.zeros(grid.N + 1)
    mu[0] = r[0]
    diag = 1.0 + q * right[0]
    for n in range(1, grid.N + 1):
        hist = np.dot(left[:n], mu[n - 1 :: -1])
        if n > 1:
            hist += np.dot(right[1:n], mu[n - 1 : 0 : -1])
        mu[n] = (r[n] - q * hist) / diag
    return TimeSeries(grid, mu)


def trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    """Composite trapezoid weights on the grid: tau/2 at the ends, tau inside."""
    w = np.full(grid.N + 1, grid.tau)
    w[0] = w[-1] = 0.5 * grid.tau
    return w


def simpson_weights(grid: TimeGrid) -> np.ndarray:
    """Composite Simpson weights on the grid, exact for cubics.

    Even step counts use the standard 1-4-2-...-4-1 pattern.  Odd counts
    close the last three panels with the 3/8 rule; N = 1 has too few panels
    for any Simpson variant and falls back to the trapezoid weights.
    """
    N, tau = grid.N, grid.tau
    if N == 1:
        return trapezoid_weights(grid)
    w = np.zeros(N + 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0
        w[1:N:2] = 4.0
        w[2:N:2] = 2.0
        w *= tau / 3.0
    else:
        m = N - 3
        if m > 0:
            w[0] = w[m] = 1.0
            w[1:m:2] = 4.0
            w[2:m:2] = 2.0
            w[: m + 1] *= tau / 3.0
        w[m:] += np.array([1.0, 3.0, 3.0, 1.0]) * (3.0 * tau / 8.0)
    return w


def convolve(mu: TimeSeries, v):
    """Trapezoid time convolution (mu * v)(t_n), applied nodewise in space.

    ``v`` is either a TimeSeries or an array of frames with shape
    (N+1, ...); the grids must match.
    """
    grid = mu.grid
    if isinstance(v, TimeSeries):
        if v.grid != grid:
            raise ValueError("convolve: time grids do not match")
        return TimeSeries(grid, convolve(mu, v.values[:, None])[:, 0])
    frames = np.asarray(v, dtype=float)
    if frames.shape[0] != grid.N + 1:
        raise ValueError(
            f"convolve: expected {grid.N + 1} frames, got {frames.shape[0]}"
        )
    w = mu.values
    out = np.zeros_like(frames)
    for n in range(1, grid.N + 1):
        coeff = w[: n + 1].copy()
        coeff[0] *= 0.5
        coeff[n] *= 0.5
        out[n] = grid.tau * np.tensordot(coeff, frames[n::-1], axes=(0, 0))
    return out
