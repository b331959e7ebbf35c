"""Lagrange multiplier along closed-loop characteristics.

The multiplier is constant along solutions of the state equation, so its
value anywhere on a trajectory equals its terminal value, and its state
gradient transports backward through the transpose of the state-transition
matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityField, SmoothedDelta, density_at
from .rollout import Trajectory
from .schedules import TimeGrid


@dataclass
class EndpointTarget:
    """lambda(x, T) = gamma * ||phi(x) - phi_f||^2 (output-space endpoint)."""

    gamma: float
    phi_f: np.ndarray

    def terminal_value(self, system, x_T) -> float:
        d = system.output(x_T) - self.phi_f
        return float(self.gamma * np.dot(d, d))

    def terminal_gradient(self, system, x_T) -> np.ndarray:
        d = system.output(x_T) - self.phi_f
        return 2.0 * self.gamma * system.output_jacobian(x_T).T @ d


@dataclass
class DensityMismatchTarget:
    """lambda(x, T) = rho(x, T) - psi(x), differenced over neighbor cells."""

    field: DensityField
    psi: SmoothedDelta

    def terminal_value(self, system, x_T) -> float:
        node = self.field.grid.N
        return density_at(self.field, x_T, node) - self.psi.value_at(x_T)

    def terminal_gradient(self, system, x_T) -> np.ndarray:
        # cell-centered central differences, one-sided where a neighbor cell
        # is empty on the rho side
        x_T = np.asarray(x_T, dtype=float)
        box = self.field.box
        hw = box.cell_width
        g = np.zeros(box.dim)
        for d in range(box.dim):
            e = np.zeros(box.dim)
            e[d] = hw[d]
            vp = self.terminal_value(None, x_T + e)
            vm = self.terminal_value(None, x_T - e)
            occ_p = _occupied(self.field, x_T + e)
            occ_m = _occupied(self.field, x_T - e)
            v0 = self.terminal_value(None, x_T)
            if occ_p and occ_m:
                g[d] = (vp - vm) / (2 * hw[d])
            elif occ_p:
                g[d] = (vp - v0) / hw[d]
            elif occ_m:
                g[d] = (v0 - vm) / hw[d]
            else:
                g[d] = 0.0
        return g


def _occupied(field: DensityField, x) -> bool:
    if not bool(field.box.contains(x)):
        return False
    key = int(field.box.flat_index(field.box.cell_index(np.asarray(x))[None])[0])
    return key in field.data[field.grid.N]


@dataclass
class AdjointSchedule:
    """Multiplier value (constant over nodes) and its state gradient per node."""

    grid: TimeGrid
    lam: np.ndarray  # (N+1,)
    grad: np.ndarray  # (N+1, n)


def terminal_lambda(system, x_T, target) -> float:
    """Multiplier boundary value at t = T for either target type."""
    return target.terminal_value(system, x_T)


def lambda_schedule(system, traj: Trajectory, target) -> AdjointSchedule:
    """Constant multiplier plus grad_i = Phi(T, t_i)' grad_T.

    Requires ``traj.sensitivities``.
    """
    if traj.sensitivities is None:
        raise ValueError("trajectory lacks sensitivities; run propagate_sensitivity first")
    x_T = traj.states[-1]
    lam_T = target.terminal_value(system, x_T)
    g_T = np.asarray(target.terminal_gradient(system, x_T), dtype=float)
    n_nodes = traj.grid.N + 1
    lam = np.full(n_nodes, lam_T)
    grad = np.empty((n_nodes, g_T.shape[0]))
    for i in range(n_nodes):
        grad[i] = traj.sensitivities[i].T @ g_T
    return AdjointSchedule(traj.grid, lam, grad)


def adjoint_rows(adj: AdjointSchedule) -> np.ndarray:
    """Diagnostic export: t, lambda, gradient components."""
    return np.hstack([adj.grid.nodes[:, None], adj.lam[:, None], adj.grad])
