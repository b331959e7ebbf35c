"""Closed-loop integration of dx/dt = f(x, K(t) x + v(t)) on the time grid.

The integrator is the classical 4th-order one-step method with a fixed
number of substeps per grid interval.  Substep counts may vary by interval:
terminal-weighted gain schedules carry fast closed-loop modes near t = T
and need finer stepping there (see ``stable_substeps``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .schedules import ControlLaw, TimeGrid, eval_control, interp_schedule

DEFAULT_SUBSTEPS = 4
DEFAULT_BOUND = 1e6


@dataclass
class Trajectory:
    """States and controls at the grid nodes; Phi(T, t_i) when propagated."""

    grid: TimeGrid
    states: np.ndarray  # (N+1, n)
    controls: np.ndarray  # (N+1, m)
    sensitivities: np.ndarray | None = None  # (N+1, n, n)


def _normalize_substeps(grid: TimeGrid, substeps) -> np.ndarray:
    if np.isscalar(substeps):
        return np.full(grid.N, int(substeps), dtype=int)
    substeps = np.asarray(substeps, dtype=int)
    if substeps.shape != (grid.N,):
        raise ValueError("per-interval substeps must have length N")
    return substeps


def _rk4_step(deriv, y, t, dt):
    k1 = deriv(y, t)
    k2 = deriv(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = deriv(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = deriv(y + dt * k3, t + dt)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_closed_loop(
    system,
    law: ControlLaw,
    x0,
    substeps=DEFAULT_SUBSTEPS,
    magnitude_bound: float = DEFAULT_BOUND,
) -> Trajectory:
    """Roll the closed-loop system from x0 over the full horizon.

    Raises DivergenceError if any state component leaves
    [-magnitude_bound, magnitude_bound] (unstable gains).
    """
    grid = law.grid
    subs = _normalize_substeps(grid, substeps)
    nodes = grid.nodes

    def deriv(x, t):
        return system.f(x, eval_control(law, x, t))

    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((grid.N + 1, system.n))
    controls = np.empty((grid.N + 1, system.m))
    states[0] = x
    controls[0] = eval_control(law, x, 0.0)
    for i in range(grid.N):
        dt = grid.h / subs[i]
        t = nodes[i]
        for _ in range(subs[i]):
            x = _rk4_step(deriv, x, t, dt)
            t += dt
            if not np.all(np.isfinite(x)) or np.abs(x).max() > magnitude_bound:
                raise DivergenceError(f"state exceeded {magnitude_bound:g} at t={t:.5g}")
        states[i + 1] = x
        controls[i + 1] = eval_control(law, x, nodes[i + 1])
    return Trajectory(grid, states, controls)


def integrate_nodes_batch(system, law: ControlLaw, X0, substeps) -> np.ndarray:
    """Batched rollout recording states at nodes, shape (N+1, B, n).

    Non-finite rows (numerically exploded samples) are left non-finite;
    callers treat them as having exited the domain.  No divergence error is
    raised here.
    """
    grid = law.grid
    subs = _normalize_substeps(grid, substeps)
    nodes = grid.nodes
    X = np.array(X0, dtype=float)
    out = np.empty((grid.N + 1,) + X.shape)
    out[0] = X

    def deriv(x, t):
        return system.f(x, eval_control(law, x, t))

    with np.errstate(all="ignore"):
        for i in range(grid.N):
            dt = grid.h / subs[i]
            t = nodes[i]
            for _ in range(subs[i]):
                X = _rk4_step(deriv, X, t, dt)
                t += dt
            out[i + 1] = X
    return out


def propagate_sensitivity(system, law: ControlLaw, traj: Trajectory, substeps=DEFAULT_SUBSTEPS) -> Trajectory:
    """Fill Phi(T, t_i): the linearized map from state perturbations at t_i
    to perturbations at T under the closed loop.

    Integrates d(Phi)/dt = (A + B K) Phi jointly with the state over each
    interval (starting from the stored node states), then composes the
    per-interval transition matrices backward from Phi(T, T) = I.
    """
    grid = law.grid
    subs = _normalize_substeps(grid, substeps)
    nodes = grid.nodes
    n = system.n

    def deriv(y, t):
        x, Phi = y
        Kt = interp_schedule(law.K, grid, t)
        u = x @ Kt.T + interp_schedule(law.v, grid, t)
        A, B = system.jacobians(x, u)
        return _Pair(system.f(x, u), (A + B @ Kt) @ Phi)

    steps = []
    for i in range(grid.N):
        y = _Pair(traj.states[i].copy(), np.eye(n))
        dt = grid.h / subs[i]
        t = nodes[i]
        for _ in range(subs[i]):
            y = _rk4_step(deriv, y, t, dt)
            t += dt
        if not np.all(np.isfinite(y.b)):
            raise DivergenceError(f"sensitivity propagation diverged on interval {i}")
        steps.append(y.b)

    sens = np.empty((grid.N + 1, n, n))
    acc = np.eye(n)
    sens[grid.N] = acc
    for i in range(grid.N - 1, -1, -1):
        acc = acc @ steps[i]
        sens[i] = acc
    return Trajectory(grid, traj.states, traj.controls, sensitivities=sens)


class _Pair:
    """Minimal vector-space pair so the RK4 stepper can advance (x, Phi) jointly."""

    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def __add__(self, other):
        return _Pair(self.a + other.a, self.b + other.b)

    def __rmul__(self, s):
        return _Pair(s * self.a, s * self.b)

    def __mul__(self, s):
        return _Pair(self.a * s, self.b * s)

    def __iter__(self):
        yield self.a
        yield self.b


def stable_substeps(system, law: ControlLaw, states=None, base=DEFAULT_SUBSTEPS, target=1.2) -> np.ndarray:
    """Per-interval substep counts keeping h_sub * |lambda_max(A + B K)| <= target.

    The spectral estimate uses the interval's endpoint nodes, evaluated
    along ``states`` when given (otherwise at the origin).  Deterministic
    for a given law, so re-rolls reproduce identical step sequences.
    """
    grid = law.grid
    subs = np.full(grid.N, int(base), dtype=int)
    x_default = np.zeros(system.n)
    lam_nodes = np.empty(grid.N + 1)
    for j in range(grid.N + 1):
        x = states[j] if states is not None else x_default
        u = x @ law.K[j].T + law.v[j]
        A, B = system.jacobians(x, u)
        lam_nodes[j] = np.abs(np.linalg.eigvals(A + B @ law.K[j])).max()
    for i in range(grid.N):
        lam = max(lam_nodes[i], lam_nodes[i + 1])
        need = int(np.ceil(grid.h * lam / target))
        subs[i] = max(base, need)
    return subs


def trajectory_rows(traj: Trajectory) -> np.ndarray:
    """One row per node: t, states, controls."""
    return np.hstack(
        [traj.grid.nodes[:, None], traj.states, traj.controls]
    )
