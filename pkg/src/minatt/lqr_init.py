"""Initial (K, v) schedules from a reference trajectory and a backward
matrix Riccati solve:

    -Pdot = P A + A' P - P B R^-1 B' P,   P(T) = P_f
    K0 = -R^-1 B' P,   v0 = u* + R^-1 B' P x*

The Riccati flow develops a sharp boundary layer at t = T whenever P_f sits
far above the equation's slow-manifold scale, so the backward integration
uses the RK4 one-step formula with step-doubling error control instead of a
fixed substep count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RiccatiBlowUpError
from .rollout import DEFAULT_SUBSTEPS, Trajectory, integrate_closed_loop, stable_substeps
from .schedules import ControlLaw, TimeGrid

_MIN_STEP_FRACTION = 1e-13


@dataclass
class RiccatiSolution:
    grid: TimeGrid
    P: np.ndarray  # (N+1, n, n), symmetric


@dataclass
class Reference:
    """Initialization trajectory (x*, u*) at the grid nodes."""

    grid: TimeGrid
    states: np.ndarray
    controls: np.ndarray


def _interp_pair(A_sched, B_sched, i0, i1, w):
    A = (1.0 - w) * A_sched[i0] + w * A_sched[i1]
    B = (1.0 - w) * B_sched[i0] + w * B_sched[i1]
    return A, B


def solve_riccati_backward(
    A_sched: np.ndarray,
    B_sched: np.ndarray,
    R: np.ndarray,
    P_f: np.ndarray,
    grid: TimeGrid,
    rtol: float = 1e-8,
    norm_bound: float = 1e12,
) -> RiccatiSolution:
    """Integrate the Riccati equation backward from P(T) = P_f.

    A_sched, B_sched hold the Jacobians at the nodes and are linearly
    interpolated inside intervals.  Each accepted step is symmetrized.
    Raises RiccatiBlowUpError when ||P|| exceeds ``norm_bound`` or the
    error-controlled step underflows.
    """
    R = np.asarray(R, dtype=float)
    Rinv = np.linalg.inv(R)
    P = 0.5 * (np.asarray(P_f, dtype=float) + np.asarray(P_f, dtype=float).T)
    nodes = grid.nodes
    out = np.empty((grid.N + 1,) + P.shape)
    out[grid.N] = P

    def rhs(P, A, B):
        S = B @ Rinv @ B.T
        return -(P @ A + A.T @ P - P @ S @ P)

    def rk4(P, hs, A, B):
        k1 = rhs(P, A, B)
        k2 = rhs(P + 0.5 * hs * k1, A, B)
        k3 = rhs(P + 0.5 * hs * k2, A, B)
        k4 = rhs(P + hs * k3, A, B)
        return P + (hs / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    with np.errstate(all="ignore"):
        for i in range(grid.N, 0, -1):
            t1, t0 = nodes[i], nodes[i - 1]
            span = t1 - t0
            tcur = t1
            hs = span / DEFAULT_SUBSTEPS
            while tcur - t0 > _MIN_STEP_FRACTION * span:
                hs = min(hs, tcur - t0)

                def AB_at(t):
                    w = (t - t0) / span
                    return _interp_pair(A_sched, B_sched, i - 1, i, w)

                full = rk4(P, -hs, *AB_at(tcur - 0.5 * hs))
                half = rk4(P, -0.5 * hs, *AB_at(tcur - 0.25 * hs))
                half = rk4(half, -0.5 * hs, *AB_at(tcur - 0.75 * hs))
                err = np.max(np.abs(full - half))
                scale = np.max(np.abs(half)) + 1.0
                if not np.isfinite(err) or err > rtol * scale:
                    hs *= 0.5
                    if hs < _MIN_STEP_FRACTION * span:
                        raise RiccatiBlowUpError("Riccati step size underflow (weights too stiff)")
                    continue
                P = 0.5 * (half + half.T)
                tcur -= hs
                if np.max(np.abs(P)) > norm_bound:
                    raise RiccatiBlowUpError(f"||P|| exceeded {norm_bound:g}")
                if err < 0.02 * rtol * scale:
                    hs *= 2.0
            out[i - 1] = P
    return RiccatiSolution(grid, out)


def jacobian_schedules(system, states, controls):
    """A(t_i), B(t_i) frozen at the given node states and controls."""
    n_nodes = states.shape[0]
    A = np.empty((n_nodes, system.n, system.n))
    B = np.empty((n_nodes, system.n, system.m))
    for i in range(n_nodes):
        A[i], B[i] = system.jacobians(states[i], controls[i])
    return A, B


def make_reference(system, x_init, target, grid: TimeGrid, R, P_f, substeps=DEFAULT_SUBSTEPS) -> Reference:
    """Reference (x*, u*): linearize about x_init, solve the finite-horizon
    LQR toward the joint-space goal for the target output, roll the policy
    through the full nonlinear dynamics.

    The result is not required to reach the target.
    """
    x_init = np.asarray(x_init, dtype=float)
    x_goal = system.goal_state(target)

    u_lin = system.holding_control(x_init)
    A0, B0 = system.jacobians(x_init, u_lin)
    A_sched = np.repeat(A0[None], grid.N + 1, axis=0)
    B_sched = np.repeat(B0[None], grid.N + 1, axis=0)
    ric = solve_riccati_backward(A_sched, B_sched, R, P_f, grid)

    Rinv = np.linalg.inv(np.asarray(R, dtype=float))
    # policy u = u_lin - R^-1 B' P(t) (x - x_goal), expressed as a law
    K = -np.einsum("ij,jk,nkl->nil", Rinv, B0.T, ric.P)
    v = u_lin - np.einsum("nij,j->ni", K, x_goal)
    law = ControlLaw(grid, K, v)
    subs = stable_substeps(system, law, base=substeps)
    traj = integrate_closed_loop(system, law, x_init, substeps=subs)
    return Reference(grid, traj.states, traj.controls)


def initial_law(reference: Reference, riccati: RiccatiSolution, R, B_sched: np.ndarray) -> ControlLaw:
    """K0 = -R^-1 B' P and v0 = u* + R^-1 B' P x* at every node."""
    Rinv = np.linalg.inv(np.asarray(R, dtype=float))
    K = -np.einsum("ij,njk,nkl->nil", Rinv, np.transpose(B_sched, (0, 2, 1)), riccati.P)
    v = reference.controls + np.einsum("nij,nj->ni", -K, reference.states)
    return ControlLaw(reference.grid, K, v)


def initialize(system, x_init, target, grid: TimeGrid, R, P_f, substeps=DEFAULT_SUBSTEPS):
    """Full initialization pipeline.

    Returns (law, reference, riccati).  The second Riccati pass freezes the
    Jacobian schedules along the reference trajectory, node by node.
    """
    ref = make_reference(system, x_init, target, grid, R, P_f, substeps=substeps)
    A_sched, B_sched = jacobian_schedules(system, ref.states, ref.controls)
    ric = solve_riccati_backward(A_sched, B_sched, R, P_f, grid)
    law = initial_law(ref, ric, R, B_sched)
    return law, ref, ric
