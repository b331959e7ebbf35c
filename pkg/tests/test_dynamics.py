import numpy as np
import pytest

from minatt.dynamics import ArmParams, TwoLinkArm, finite_difference_jacobians
from minatt.errors import SingularMassError, UnreachableTargetError


def test_mass_matrix_zero_pose_coupling(arm):
    p = arm.params
    M = arm.mass_matrix(np.array([0.0, 0.0]))
    assert M[0, 1] == pytest.approx(p.I2 + p.M2 * p.L1 * p.S2)
    assert M[1, 0] == M[0, 1]


def test_mass_matrix_right_angle_elbow(arm):
    p = arm.params
    M = arm.mass_matrix(np.array([0.3, np.pi / 2]))
    assert M[0, 0] == pytest.approx(p.I1 + p.I2 + p.M2 * p.L1**2)
    assert M[0, 1] == pytest.approx(p.I2)


def test_mass_matrix_hand_value():
    # defaults at q2 = 0: 0.025 + 0.045 + 2*1.0*0.30*0.16 + 1.0*0.09
    arm = TwoLinkArm()
    M = arm.mass_matrix(np.array([1.1, 0.0]))
    assert M[0, 0] == pytest.approx(0.256, abs=1e-12)


def test_mass_matrix_symmetric_and_positive_definite(arm):
    for q2 in np.linspace(-np.pi, np.pi, 41):
        M = arm.mass_matrix(np.array([0.7, q2]))
        assert M[0, 1] == M[1, 0]
        assert np.linalg.eigvalsh(M).min() > 0


def test_bias_vanishes_at_rest(arm):
    assert np.allclose(arm.bias(np.zeros(2), np.zeros(2)), 0.0)
    heavy = TwoLinkArm(ArmParams(g=9.81))
    # sin 0 = 0 kills the gravity terms at the straight-down pose
    assert np.allclose(heavy.bias(np.zeros(2), np.zeros(2)), 0.0)


def test_bias_hand_value(arm):
    p = arm.params
    b = arm.bias(np.array([0.0, np.pi / 2]), np.array([1.0, 0.0]))
    assert b[0] == pytest.approx(p.B11)
    assert b[1] == pytest.approx(p.M2 * p.L1 * p.S2 + p.B21)


def test_f_torque_cancels_bias(arm, rng):
    for _ in range(5):
        q = rng.uniform(-2, 2, size=2)
        x = np.concatenate([q, np.zeros(2)])
        u = arm.bias(q, np.zeros(2))
        assert np.allclose(arm.f(x, u), 0.0, atol=1e-14)


def test_f_velocity_passthrough(arm, rng):
    for _ in range(10):
        x = rng.uniform(-3, 3, size=4)
        u = rng.uniform(-5, 5, size=2)
        assert np.array_equal(arm.f(x, u)[:2], x[2:])


def test_f_hand_solved_acceleration(arm):
    # x = 0, u = (1, 0): solve the 2x2 system with the q2 = 0 mass matrix
    M = arm.mass_matrix(np.zeros(2))
    det = M[0, 0] * M[1, 1] - M[0, 1] ** 2
    expected = np.array([M[1, 1] / det, -M[1, 0] / det])
    out = arm.f(np.zeros(4), np.array([1.0, 0.0]))
    assert np.allclose(out[2:], expected, rtol=1e-12)


def test_f_batched_matches_loop(arm, rng):
    X = rng.uniform(-2, 2, size=(7, 4))
    U = rng.uniform(-3, 3, size=(7, 2))
    batched = arm.f(X, U)
    for k in range(7):
        assert np.allclose(batched[k], arm.f(X[k], U[k]))


def test_jacobian_structure(arm, rng):
    x = rng.uniform(-1, 1, size=4)
    u = rng.uniform(-1, 1, size=2)
    A, B = arm.jacobians(x, u)
    assert np.allclose(A[:2, :2], 0.0)
    assert np.allclose(A[:2, 2:], np.eye(2))
    assert np.allclose(B[:2], 0.0)


def test_jacobian_b_block_is_mass_inverse(arm):
    _, B = arm.jacobians(np.zeros(4), np.zeros(2))
    M = arm.mass_matrix(np.zeros(2))
    det = M[0, 0] * M[1, 1] - M[0, 1] ** 2
    Minv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / det
    assert np.allclose(B[2:], Minv, rtol=1e-12)


def test_jacobians_match_central_differences(arm, rng):
    worst = 0.0
    for _ in range(100):
        x = rng.uniform([-2.5, -2.5, -20, -20], [2.5, 2.5, 20, 20])
        u = rng.uniform(-5, 5, size=2)
        A, B = arm.jacobians(x, u)
        A_fd, B_fd = finite_difference_jacobians(arm, x, u)
        scale = max(np.abs(A_fd).max(), np.abs(B_fd).max(), 1.0)
        worst = max(worst, np.abs(A - A_fd).max() / scale, np.abs(B - B_fd).max() / scale)
    assert worst <= 1e-5


def test_forward_kinematics_straight_arm(arm):
    p = arm.params
    assert np.allclose(arm.forward_kinematics(np.zeros(4)), [p.L1 + p.L2, 0, 0, 0])
    up = arm.forward_kinematics(np.array([np.pi / 2, 0.0, 0.0, 0.0]))
    assert np.allclose(up, [0, p.L1 + p.L2, 0, 0], atol=1e-15)


def test_forward_kinematics_velocity_is_position_rate(arm, rng):
    # finite-difference oracle along free motion under fixed torque
    from minatt.rollout import integrate_closed_loop
    from minatt.schedules import ControlLaw, TimeGrid

    grid = TimeGrid(0.2, 10)
    law = ControlLaw(grid, np.zeros((11, 2, 4)), np.tile([0.4, -0.2], (11, 1)))
    traj = integrate_closed_loop(arm, law, np.array([0.3, -0.4, 0.5, 0.2]), substeps=8)
    h = 1e-6
    for k in (2, 5, 8):
        x = traj.states[k]
        dx = arm.f(x, traj.controls[k])
        fk_rate = (arm.forward_kinematics(x + h * dx) - arm.forward_kinematics(x - h * dx)) / (2 * h)
        vel = arm.forward_kinematics(x)[2:]
        assert np.allclose(vel, fk_rate[:2], rtol=1e-6, atol=1e-9)


def test_fk_jacobian_velocity_independence(arm, rng):
    x = rng.uniform(-1, 1, size=4)
    J = arm.fk_jacobian(x)
    assert np.allclose(J[:2, 2:], 0.0)
    # chain-rule symmetry: velocity rows are linear in dq with position-row slopes
    assert np.allclose(J[2:, 2:], J[:2, :2])


def test_fk_jacobian_matches_central_differences(arm, rng):
    h = 1e-6
    for _ in range(10):
        x = rng.uniform(-2, 2, size=4)
        J = arm.fk_jacobian(x)
        J_fd = np.stack(
            [(arm.forward_kinematics(x + h * e) - arm.forward_kinematics(x - h * e)) / (2 * h) for e in np.eye(4)],
            axis=-1,
        )
        assert np.allclose(J, J_fd, rtol=1e-5, atol=1e-8)


def test_fk_position_only_depends_on_angles(arm, rng):
    q = rng.uniform(-2, 2, size=2)
    a = arm.forward_kinematics(np.concatenate([q, [0.0, 0.0]]))
    b = arm.forward_kinematics(np.concatenate([q, [3.0, -7.0]]))
    assert np.array_equal(a[:2], b[:2])
    # velocity rows linear in dq
    c = arm.forward_kinematics(np.concatenate([q, [6.0, -14.0]]))
    assert np.allclose(c[2:], 2 * b[2:], rtol=1e-12)


def test_inverse_kinematics_round_trip(arm, rng):
    for _ in range(10):
        q = np.array([rng.uniform(-np.pi, np.pi), rng.uniform(0.1, 2.8)])
        pos = arm.forward_kinematics(np.concatenate([q, [0, 0]]))[:2]
        q_ik = arm.inverse_kinematics(pos[0], pos[1])
        pos_back = arm.forward_kinematics(np.concatenate([q_ik, [0, 0]]))[:2]
        assert np.allclose(pos, pos_back, atol=1e-12)
        assert q_ik[1] >= 0  # elbow-down branch


def test_inverse_kinematics_boundary_and_error(arm):
    p = arm.params
    q = arm.inverse_kinematics(p.L1 + p.L2, 0.0)
    assert q[1] == 0.0
    with pytest.raises(UnreachableTargetError):
        arm.inverse_kinematics(p.L1 + p.L2 + 0.01, 0.0)


def test_arm_params_invariants():
    with pytest.raises(ValueError):
        ArmParams(L1=-0.1)
    with pytest.raises(ValueError):
        ArmParams(S2=0.5, L2=0.33)


def test_singular_mass_error():
    class Degenerate(TwoLinkArm):
        def mass_matrix(self, q):
            M = super().mass_matrix(q)
            M[..., 1, 1] = M[..., 0, 1] ** 2 / M[..., 0, 0]  # rank one
            return M

    with pytest.raises(SingularMassError):
        Degenerate().f(np.zeros(4), np.zeros(2))
