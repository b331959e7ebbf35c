"""Two-link planar arm dynamics behind a pluggable system interface.

State convention for the arm: x = (q1, q2, dq1, dq2), control u = (u1, u2)
joint torques.  All operations broadcast over leading batch dimensions, so
the same code serves single-point evaluation and vectorized Monte Carlo
rollouts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMassError, UnreachableTargetError

_DET_RTOL = 1e-12


class System:
    """Continuous-time control system ``dx/dt = f(x, u)``.

    Subclasses set ``n`` (state dim) and ``m`` (control dim) and implement
    ``f``.  Jacobians default to central finite differences; systems with
    closed forms should override.  ``output`` maps states to the objective
    space (identity by default) and ``goal_state`` inverts a target output
    to a state for reference generation.
    """

    n: int
    m: int

    def f(self, x, u):
        raise NotImplementedError

    def jacobians(self, x, u):
        return finite_difference_jacobians(self, x, u)

    def output(self, x):
        return np.asarray(x, dtype=float)

    def output_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        h = 1e-6
        cols = []
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = h
            cols.append((self.output(x + e) - self.output(x - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def goal_state(self, target):
        return np.asarray(target, dtype=float)

    def holding_control(self, x):
        """Control keeping the pose near equilibrium; zero unless overridden."""
        return np.zeros(self.m)


def finite_difference_jacobians(system, x, u, h=1e-6):
    """Central-difference A = df/dx, B = df/du at a single point."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    A = np.empty((system.n, system.n))
    B = np.empty((system.n, system.m))
    for i in range(system.n):
        e = np.zeros(system.n)
        e[i] = h
        A[:, i] = (system.f(x + e, u) - system.f(x - e, u)) / (2 * h)
    for i in range(system.m):
        e = np.zeros(system.m)
        e[i] = h
        B[:, i] = (system.f(x, u + e) - system.f(x, u - e)) / (2 * h)
    return A, B


@dataclass(frozen=True)
class ArmParams:
    """Kinematic and dynamic constants of the two-link arm.

    Lengths in m, masses in kg, inertias in kg m^2, viscosities in N m s.
    ``g`` is the gravitational acceleration; the planar reference
    experiments run gravity-free (g = 0).
    """

    L1: float = 0.30
    L2: float = 0.33
    M1: float = 1.4
    M2: float = 1.0
    S1: float = 0.11
    S2: float = 0.16
    I1: float = 0.025
    I2: float = 0.045
    B11: float = 0.05
    B12: float = 0.025
    B21: float = 0.025
    B22: float = 0.05
    g: float = 0.0

    def __post_init__(self):
        for name in ("L1", "L2", "M1", "M2", "S1", "S2", "I1", "I2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"ArmParams.{name} must be positive")
        if self.S1 > self.L1 or self.S2 > self.L2:
            raise ValueError("center of mass must lie on the link (S_i <= L_i)")


class TwoLinkArm(System):
    """Planar two-link arm: tau = M(q) qdd + b(q, qd), integrated in state space."""

    n = 4
    m = 2

    def __init__(self, params: ArmParams | None = None):
        self.params = params or ArmParams()

    # -- rigid body terms ------------------------------------------------

    def mass_matrix(self, q):
        """Symmetric positive-definite M(q), shape (..., 2, 2)."""
        p = self.params
        c2 = np.cos(np.asarray(q, dtype=float)[..., 1])
        C = p.M2 * p.L1 * p.S2
        m11 = p.I1 + p.I2 + 2 * C * c2 + p.M2 * p.L1**2
        m12 = p.I2 + C * c2
        m22 = np.full_like(m11, p.I2)
        row1 = np.stack([m11, m12], axis=-1)
        row2 = np.stack([m12, m22], axis=-1)
        return np.stack([row1, row2], axis=-2)

    def bias(self, q, dq):
        """Coriolis, viscous and gravity torques b(q, qd), shape (..., 2)."""
        p = self.params
        q = np.asarray(q, dtype=float)
        dq = np.asarray(dq, dtype=float)
        s1 = np.sin(q[..., 0])
        s2 = np.sin(q[..., 1])
        s12 = np.sin(q[..., 0] + q[..., 1])
        C = p.M2 * p.L1 * p.S2
        b1 = (
            -C * (2 * dq[..., 0] + dq[..., 1]) * dq[..., 1] * s2
            + p.B11 * dq[..., 0]
            + p.B12 * dq[..., 1]
            + p.g * ((p.M1 * p.S1 + p.M2 * p.L1) * s1 + p.M2 * p.S2 * s12)
        )
        b2 = (
            C * dq[..., 0] ** 2 * s2
            + p.B22 * dq[..., 1]
            + p.B21 * dq[..., 0]
            + p.g * p.M2 * p.S2 * s12
        )
        return np.stack([b1, b2], axis=-1)

    def _mass_inverse(self, q):
        M = self.mass_matrix(q)
        a = M[..., 0, 0]
        b = M[..., 0, 1]
        d = M[..., 1, 1]
        det = a * d - b * b
        if np.any(np.abs(det) <= _DET_RTOL * np.abs(a * d)):
            raise SingularMassError("mass matrix numerically singular")
        inv = np.empty_like(M)
        inv[..., 0, 0] = d / det
        inv[..., 0, 1] = -b / det
        inv[..., 1, 0] = -b / det
        inv[..., 1, 1] = a / det
        return inv

    # -- system interface ------------------------------------------------

    def f(self, x, u):
        """State derivative (dq, M^-1 (u - b)), shape (..., 4)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        q, dq = x[..., :2], x[..., 2:]
        Minv = self._mass_inverse(q)
        acc = np.einsum("...ij,...j->...i", Minv, u - self.bias(q, dq))
        return np.concatenate([dq, acc], axis=-1)

    def jacobians(self, x, u):
        """Closed-form A = df/dx (..., 4, 4) and B = df/du (..., 4, 2)."""
        p = self.params
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        q, dq = x[..., :2], x[..., 2:]
        c1 = np.cos(q[..., 0])
        s2, c2 = np.sin(q[..., 1]), np.cos(q[..., 1])
        c12 = np.cos(q[..., 0] + q[..., 1])
        dq1, dq2 = dq[..., 0], dq[..., 1]
        C = p.M2 * p.L1 * p.S2

        Minv = self._mass_inverse(q)
        acc = np.einsum("...ij,...j->...i", Minv, u - self.bias(q, dq))

        zero = np.zeros_like(c2)
        # db/dq and db/ddq, each (..., 2, 2) with columns indexing the state
        db_dq = np.stack(
            [
                np.stack(
                    [
                        p.g * ((p.M1 * p.S1 + p.M2 * p.L1) * c1 + p.M2 * p.S2 * c12),
                        -C * (2 * dq1 + dq2) * dq2 * c2 + p.g * p.M2 * p.S2 * c12,
                    ],
                    axis=-1,
                ),
                np.stack(
                    [
                        p.g * p.M2 * p.S2 * c12,
                        C * dq1**2 * c2 + p.g * p.M2 * p.S2 * c12,
                    ],
                    axis=-1,
                ),
            ],
            axis=-2,
        )
        db_ddq = np.stack(
            [
                np.stack([-2 * C * dq2 * s2 + p.B11, -C * (2 * dq1 + 2 * dq2) * s2 + p.B12], axis=-1),
                np.stack([2 * C * dq1 * s2 + p.B21, np.full_like(zero, p.B22)], axis=-1),
            ],
            axis=-2,
        )
        # dM/dq2 contracted with acc
        dM = np.stack(
            [
                np.stack([-2 * C * s2, -C * s2], axis=-1),
                np.stack([-C * s2, zero], axis=-1),
            ],
            axis=-2,
        )
        dM_acc = np.einsum("...ij,...j->...i", dM, acc)

        dacc_dq = -np.einsum("...ij,...jk->...ik", Minv, db_dq)
        dacc_dq[..., :, 1] -= np.einsum("...ij,...j->...i", Minv, dM_acc)
        dacc_ddq = -np.einsum("...ij,...jk->...ik", Minv, db_ddq)

        batch = c2.shape
        A = np.zeros(batch + (4, 4))
        A[..., 0, 2] = 1.0
        A[..., 1, 3] = 1.0
        A[..., 2:, :2] = dacc_dq
        A[..., 2:, 2:] = dacc_ddq
        B = np.zeros(batch + (4, 2))
        B[..., 2:, :] = Minv
        return A, B

    # -- kinematics --------------------------------------------------------

    def forward_kinematics(self, x):
        """End-effector (X, Y, Xd, Yd) for state(s) x, shape (..., 4)."""
        p = self.params
        x = np.asarray(x, dtype=float)
        q1, q2 = x[..., 0], x[..., 1]
        dq1, dq2 = x[..., 2], x[..., 3]
        s1, c1 = np.sin(q1), np.cos(q1)
        s12, c12 = np.sin(q1 + q2), np.cos(q1 + q2)
        X = p.L1 * c1 + p.L2 * c12
        Y = p.L1 * s1 + p.L2 * s12
        Xd = -p.L1 * dq1 * s1 - p.L2 * (dq1 + dq2) * s12
        Yd = p.L1 * dq1 * c1 + p.L2 * (dq1 + dq2) * c12
        return np.stack([X, Y, Xd, Yd], axis=-1)

    def fk_jacobian(self, x):
        """d(forward_kinematics)/dx, shape (..., 4, 4)."""
        p = self.params
        x = np.asarray(x, dtype=float)
        q1, q2 = x[..., 0], x[..., 1]
        dq1, dq2 = x[..., 2], x[..., 3]
        s1, c1 = np.sin(q1), np.cos(q1)
        s12, c12 = np.sin(q1 + q2), np.cos(q1 + q2)
        J = np.zeros(q1.shape + (4, 4))
        J[..., 0, 0] = -p.L1 * s1 - p.L2 * s12
        J[..., 0, 1] = -p.L2 * s12
        J[..., 1, 0] = p.L1 * c1 + p.L2 * c12
        J[..., 1, 1] = p.L2 * c12
        J[..., 2, 0] = -p.L1 * dq1 * c1 - p.L2 * (dq1 + dq2) * c12
        J[..., 2, 1] = -p.L2 * (dq1 + dq2) * c12
        J[..., 2, 2] = -p.L1 * s1 - p.L2 * s12
        J[..., 2, 3] = -p.L2 * s12
        J[..., 3, 0] = -p.L1 * dq1 * s1 - p.L2 * (dq1 + dq2) * s12
        J[..., 3, 1] = -p.L2 * (dq1 + dq2) * s12
        J[..., 3, 2] = p.L1 * c1 + p.L2 * c12
        J[..., 3, 3] = p.L2 * c12
        return J

    def inverse_kinematics(self, px, py):
        """Joint angles reaching (px, py), elbow-down branch (q2 >= 0).

        Raises UnreachableTargetError when the point lies outside the
        workspace disc.  At the outer boundary the straight-arm solution
        q2 = 0 is returned.
        """
        p = self.params
        r2 = px * px + py * py
        reach = p.L1 + p.L2
        if r2 > reach * reach * (1 + 1e-12):
            raise UnreachableTargetError(
                f"target ({px:.4g}, {py:.4g}) outside workspace radius {reach:.4g}"
            )
        c2 = (r2 - p.L1**2 - p.L2**2) / (2 * p.L1 * p.L2)
        q2 = np.arccos(np.clip(c2, -1.0, 1.0))
        q1 = np.arctan2(py, px) - np.arctan2(p.L2 * np.sin(q2), p.L1 + p.L2 * np.cos(q2))
        return np.array([q1, q2])

    def output(self, x):
        return self.forward_kinematics(x)

    def output_jacobian(self, x):
        return self.fk_jacobian(x)

    def holding_control(self, x):
        """Bias-compensating torque: f(x, u) = (dq, 0) at zero velocity."""
        x = np.asarray(x, dtype=float)
        return self.bias(x[:2], x[2:])

    def goal_state(self, target):
        """Joint state whose end-effector pose matches a (X, Y, Xd, Yd) target."""
        target = np.asarray(target, dtype=float)
        q = self.inverse_kinematics(target[0], target[1])
        Jp = self.fk_jacobian(np.concatenate([q, [0.0, 0.0]]))[:2, :2]
        det = Jp[0, 0] * Jp[1, 1] - Jp[0, 1] * Jp[1, 0]
        if abs(det) > 1e-9 * (np.abs(Jp).max() ** 2 + 1e-30):
            dq = np.linalg.solve(Jp, target[2:])
        else:
            dq = np.zeros(2)  # singular pose; only the zero-velocity target is exact
        return np.concatenate([q, dq])
