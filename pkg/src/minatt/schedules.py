"""Time-grid representations of the feedback gain K(t) and feedforward v(t)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfHorizonError

_T_SLACK = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of N intervals over [0, T]; nodes t_i = i T / N."""

    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.N < 2:
            raise ValueError("need at least 2 intervals")

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class ControlLaw:
    """Sampled schedules (K_i, v_i) at the grid nodes; u = K(t) x + v(t)."""

    grid: TimeGrid
    K: np.ndarray  # (N+1, m, n)
    v: np.ndarray  # (N+1, m)

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        n_nodes = self.grid.N + 1
        if self.K.shape[0] != n_nodes or self.v.shape[0] != n_nodes:
            raise ValueError("schedule length must be N+1")
        if self.K.shape[1] != self.v.shape[1]:
            raise ValueError("K and v disagree on control dimension")
        if not (np.all(np.isfinite(self.K)) and np.all(np.isfinite(self.v))):
            raise ValueError("schedule entries must be finite")

    @property
    def m(self) -> int:
        return self.K.shape[1]

    @property
    def n(self) -> int:
        return self.K.shape[2]

    def copy(self) -> "ControlLaw":
        return ControlLaw(self.grid, self.K.copy(), self.v.copy())


def interp_schedule(values: np.ndarray, grid: TimeGrid, t: float) -> np.ndarray:
    """Linear interpolation of node values at time t (no range check)."""
    a = t / grid.h
    i = min(max(int(a), 0), grid.N - 1)
    w = a - i
    return (1.0 - w) * values[i] + w * values[i + 1]


def eval_control(law: ControlLaw, x, t: float):
    """u = K(t) x + v(t) with K, v linearly interpolated between nodes.

    ``x`` may carry leading batch dimensions.
    """
    if t < -_T_SLACK or t > law.grid.T + _T_SLACK:
        raise OutOfHorizonError(f"t={t} outside [0, {law.grid.T}]")
    Kt = interp_schedule(law.K, law.grid, t)
    vt = interp_schedule(law.v, law.grid, t)
    x = np.asarray(x, dtype=float)
    return x @ Kt.T + vt


def grid_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Nodewise time derivative: centered in the interior, one-sided first
    order at the two endpoints."""
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2 * h)
    d[0] = (values[1] - values[0]) / h
    d[-1] = (values[-1] - values[-2]) / h
    return d


@dataclass
class ScheduleDerivatives:
    Kdot: np.ndarray
    Kddot: np.ndarray
    vdot: np.ndarray
    vddot: np.ndarray


def time_derivatives(law: ControlLaw) -> ScheduleDerivatives:
    """First and second time derivatives of K and v at the nodes.

    Second derivatives re-apply the first-derivative stencil to the
    first-derivative sequence (stencil of stencil).
    """
    h = law.grid.h
    Kdot = grid_derivative(law.K, h)
    vdot = grid_derivative(law.v, h)
    return ScheduleDerivatives(
        Kdot=Kdot,
        Kddot=grid_derivative(Kdot, h),
        vdot=vdot,
        vddot=grid_derivative(vdot, h),
    )


# -- CSV round trip ---------------------------------------------------------

def law_header(m: int, n: int) -> list[str]:
    cols = ["t"]
    cols += [f"K{i + 1}{j + 1}" for i in range(m) for j in range(n)]
    cols += [f"v{i + 1}" for i in range(m)]
    return cols


def law_to_rows(law: ControlLaw) -> np.ndarray:
    """One row per node: t, K row-major, v."""
    n_nodes = law.grid.N + 1
    flat = np.empty((n_nodes, 1 + law.m * law.n + law.m))
    flat[:, 0] = law.grid.nodes
    flat[:, 1 : 1 + law.m * law.n] = law.K.reshape(n_nodes, -1)
    flat[:, 1 + law.m * law.n :] = law.v
    return flat


def law_from_rows(rows: np.ndarray, m: int, n: int) -> ControlLaw:
    rows = np.asarray(rows, dtype=float)
    t = rows[:, 0]
    N = rows.shape[0] - 1
    grid = TimeGrid(T=float(t[-1]), N=N)
    K = rows[:, 1 : 1 + m * n].reshape(N + 1, m, n)
    v = rows[:, 1 + m * n :]
    return ControlLaw(grid, K, v)
