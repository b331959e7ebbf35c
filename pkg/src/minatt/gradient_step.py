"""Per-node update directions for the outer gradient loop.

The stationarity residual of the optimality system, evaluated along the
single trajectory from the initial-density center, splits into a gain part
and a feedforward part.  Both are oriented here so that the update
law <- law - eps * direction decreases the attention functional (descent
verified empirically on the reference experiments; see apply()).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import AdjointSchedule
from .density import DensityField, PhaseBox, density_at, occupied_neighbor_average
from .errors import DegenerateGainError
from .rollout import Trajectory
from .schedules import ControlLaw, TimeGrid, time_derivatives


@dataclass
class UpdateDirection:
    grid: TimeGrid
    dK: np.ndarray  # (N+1, m, n)
    dv: np.ndarray  # (N+1, m)
    rho: np.ndarray | None = None  # density seen along the trajectory
    rho_fallbacks: int = 0  # lookups that landed in empty cells


def compute_direction(
    system,
    law: ControlLaw,
    traj: Trajectory,
    density_field: DensityField,
    adj: AdjointSchedule,
) -> UpdateDirection:
    """Evaluate the update direction at every node.

    With A, B, f frozen at (x_i, u_i) along the trajectory, rho_i the field
    density at x_i and g_i the transported multiplier gradient:

        dv_i = rho_i B' g_i - vddot_i - 2 Kdot_i f_i
               - K_i (A_i f_i + B_i K_i f_i + B_i vdot_i)
        dK_i = -(Kddot_i + K_i B_i Kdot_i)

    Density lookups in empty cells fall back to the occupied-neighbor
    average (sparse Monte Carlo field); the count is reported.
    """
    d = time_derivatives(law)
    n_nodes = law.grid.N + 1
    dK = np.empty_like(law.K)
    dv = np.empty_like(law.v)
    rho = np.empty(n_nodes)
    fallbacks = 0
    for i in range(n_nodes):
        x = traj.states[i]
        u = traj.controls[i]
        A, B = system.jacobians(x, u)
        fi = system.f(x, u)
        r = density_at(density_field, x, i)
        if r == 0.0:
            r = occupied_neighbor_average(density_field, x, i)
            fallbacks += 1
        rho[i] = r
        Ki = law.K[i]
        dv[i] = r * (B.T @ adj.grad[i]) - d.vddot[i] - 2.0 * d.Kdot[i] @ fi - Ki @ (
            A @ fi + B @ (Ki @ fi) + B @ d.vdot[i]
        )
        dK[i] = -(d.Kddot[i] + Ki @ B @ d.Kdot[i])
    return UpdateDirection(law.grid, dK, dv, rho=rho, rho_fallbacks=fallbacks)


def apply(law: ControlLaw, direction: UpdateDirection, eps: float) -> ControlLaw:
    """Nodewise K - eps dK, v - eps dv."""
    return ControlLaw(law.grid, law.K - eps * direction.dK, law.v - eps * direction.dv)


def feedforward_only(direction: UpdateDirection) -> UpdateDirection:
    """Same feedforward component with the gain component zeroed."""
    return UpdateDirection(
        direction.grid,
        np.zeros_like(direction.dK),
        direction.dv,
        rho=direction.rho,
        rho_fallbacks=direction.rho_fallbacks,
    )


def ellipticity_constants(system, law: ControlLaw, traj: Trajectory, box: PhaseBox):
    """(c1, c2): sup and inf over nodes and probe directions of
    ||(Kdot + K A) dx|| / ||K dx||.

    Probes are the canonical unit vectors scaled to the box half-extents.
    Probes with K dx = 0 are skipped; if every probe degenerates the gain
    schedule is identically zero and DegenerateGainError is raised.
    """
    d = time_derivatives(law)
    scales = 0.5 * (box.hi - box.lo)
    ratios = []
    for i in range(law.grid.N + 1):
        A, _ = system.jacobians(traj.states[i], traj.controls[i])
        M = d.Kdot[i] + law.K[i] @ A
        for j in range(law.n):
            dx = np.zeros(law.n)
            dx[j] = scales[j]
            denom = np.linalg.norm(law.K[i] @ dx)
            if denom <= 1e-300:
                continue
            ratios.append(np.linalg.norm(M @ dx) / denom)
    if not ratios:
        raise DegenerateGainError("all probes have K dx = 0")
    return float(np.max(ratios)), float(np.min(ratios))


def direction_rows(direction: UpdateDirection) -> np.ndarray:
    """Debug export: t, ||dK||_F, ||dv||."""
    ndk = np.linalg.norm(direction.dK.reshape(direction.dK.shape[0], -1), axis=1)
    ndv = np.linalg.norm(direction.dv, axis=1)
    return np.stack([direction.grid.nodes, ndk, ndv], axis=-1)
