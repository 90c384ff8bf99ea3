"""Rigid-body model tests: quaternion algebra, rotor allocation, integration."""

import numpy as np
import pytest

from bimodal_nav import quat
from bimodal_nav.dynamics import (
    AERIAL,
    TERRESTRIAL,
    ControlInput,
    FullState,
    GroundContact,
    InvalidStateError,
    PhysicalParams,
    RotorThrusts,
    allocate_from_rotors,
    allocation_matrix,
    continuous_dynamics,
    input_bounds,
    integrate_rk4,
    rotors_from_input,
)

from conftest import random_unit_quaternion


class TestQuaternions:
    def test_rotation_matrix_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            q = random_unit_quaternion(rng)
            R = quat.to_rotation_matrix(q)
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
            q2 = quat.from_rotation_matrix(R)
            assert min(np.linalg.norm(q2 - q), np.linalg.norm(q2 + q)) < 1e-9

    def test_rotate_matches_matrix(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            q = random_unit_quaternion(rng)
            v = rng.normal(size=3)
            np.testing.assert_allclose(
                quat.rotate(q, v), quat.to_rotation_matrix(q) @ v, atol=1e-12
            )
            np.testing.assert_allclose(
                quat.rotate_inverse(q, quat.rotate(q, v)), v, atol=1e-12
            )

    def test_multiply_composes_rotations(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            q1 = random_unit_quaternion(rng)
            q2 = random_unit_quaternion(rng)
            v = rng.normal(size=3)
            np.testing.assert_allclose(
                quat.rotate(quat.multiply(q1, q2), v),
                quat.rotate(q1, quat.rotate(q2, v)),
                atol=1e-12,
            )

    def test_yaw_pitch_charts(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            psi = rng.uniform(-np.pi, np.pi)
            theta = rng.uniform(-1.2, 1.2)
            q = quat.from_yaw_pitch(np.asarray(psi), np.asarray(theta))
            assert float(quat.yaw(q)) == pytest.approx(psi, abs=1e-12)
            # zero roll: the body y axis stays horizontal
            y_b = quat.rotate(q, np.array([0.0, 1.0, 0.0]))
            assert abs(y_b[2]) < 1e-12
            cz, sz = np.cos(psi), np.sin(psi)
            cy, sy = np.cos(theta), np.sin(theta)
            Rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
            Ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
            np.testing.assert_allclose(quat.to_rotation_matrix(q), Rz @ Ry, atol=1e-12)

    def test_derivative_against_exact_propagation(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            q0 = random_unit_quaternion(rng)
            w = rng.normal(0.0, 2.0, 3)

            def propagate(t):
                ang = np.linalg.norm(w) * t
                axis = w / max(np.linalg.norm(w), 1e-300)
                dq = np.concatenate([[np.cos(ang / 2)], np.sin(ang / 2) * axis])
                return quat.multiply(q0, dq)

            h = 1e-6
            fd = (propagate(h) - propagate(-h)) / (2 * h)
            np.testing.assert_allclose(quat.derivative(q0, w), fd, atol=1e-7)

    def test_log_map(self):
        # pure yaw: rotation vector is psi * e3
        np.testing.assert_allclose(
            quat.log_map(quat.from_yaw(0.3)), [0.0, 0.0, 0.3], atol=1e-12
        )
        np.testing.assert_allclose(quat.log_map(np.array([1.0, 0, 0, 0])), np.zeros(3))
        # sign-flipped quaternion is the same rotation
        q = quat.from_pitch(0.5)
        np.testing.assert_allclose(quat.log_map(-q), quat.log_map(q), atol=1e-12)


class TestAllocation:
    def test_round_trip(self, params):
        rng = np.random.default_rng(8)
        for _ in range(30):
            t = RotorThrusts(rng.uniform(params.t_min + 0.1, params.t_max - 0.1, 4))
            u = allocate_from_rotors(t, params)
            t2, saturated = rotors_from_input(u, params)
            assert not saturated
            np.testing.assert_allclose(t2.t, t.t, atol=1e-12)

    def test_hover_split(self, params):
        u = ControlInput(T=params.hover_thrust, tau=np.zeros(3))
        t, saturated = rotors_from_input(u, params)
        assert not saturated
        np.testing.assert_allclose(t.t, params.hover_thrust / 4.0, atol=1e-12)

    def test_saturation_flag(self, params):
        _, u_max = input_bounds(params)
        u = ControlInput(T=params.hover_thrust, tau=np.array([2.0 * u_max[1], 0, 0]))
        t, saturated = rotors_from_input(u, params)
        assert saturated
        assert np.all(t.t >= params.t_min - 1e-12)
        assert np.all(t.t <= params.t_max + 1e-12)

    def test_torque_bounds_match_allocation(self, params):
        # each torque axis cap at the mid thrust stays within rotor limits
        u_min, u_max = input_bounds(params)
        T_mid = 2.0 * (params.t_min + params.t_max)
        for axis in range(3):
            tau = np.zeros(3)
            tau[axis] = u_max[axis + 1]
            _, saturated = rotors_from_input(ControlInput(T=T_mid, tau=tau), params)
            assert not saturated

    def test_params_validation(self):
        with pytest.raises(ValueError):
            PhysicalParams(m=-1.0)
        with pytest.raises(ValueError):
            PhysicalParams(inertia_diag=(1e-3, -1e-3, 1e-3))
        with pytest.raises(ValueError):
            PhysicalParams(t_min=5.0, t_max=4.5)

    def test_params_json_round_trip(self, params, tmp_path):
        params.to_json(tmp_path / "params.json")
        assert PhysicalParams.from_json(tmp_path / "params.json") == params


class TestContinuousDynamics:
    def test_free_fall(self, params):
        x = FullState.rest(p=(0, 0, 5.0))
        u = ControlInput(T=0.0, tau=np.zeros(3))
        xdot, contact, liftoff = continuous_dynamics(
            x, u, GroundContact(mu_g=AERIAL), params
        )
        np.testing.assert_allclose(xdot[7:10], [0, 0, -params.g], atol=1e-12)
        assert not liftoff

    def test_hover_equilibrium(self, params):
        x = FullState.rest(p=(0, 0, 1.0))
        u = ControlInput(T=params.hover_thrust, tau=np.zeros(3))
        xdot, _, _ = continuous_dynamics(x, u, GroundContact(mu_g=AERIAL), params)
        np.testing.assert_allclose(xdot, np.zeros(13), atol=1e-12)

    def test_ground_normal_force(self, params):
        x = FullState.rest()
        u = ControlInput(T=0.3 * params.hover_thrust, tau=np.zeros(3))
        xdot, contact, liftoff = continuous_dynamics(
            x, u, GroundContact(mu_g=TERRESTRIAL), params
        )
        assert contact.f_n == pytest.approx(0.7 * params.hover_thrust, rel=1e-12)
        assert not liftoff
        np.testing.assert_allclose(xdot[7:10], np.zeros(3), atol=1e-12)

    def test_liftoff_flag(self, params):
        x = FullState.rest()
        u = ControlInput(T=1.01 * params.hover_thrust, tau=np.zeros(3))
        _, contact, liftoff = continuous_dynamics(
            x, u, GroundContact(mu_g=TERRESTRIAL), params
        )
        assert liftoff
        assert contact.f_n == 0.0

    def test_disturbance_enters_linearly(self, params):
        rng = np.random.default_rng(9)
        x = FullState(
            p=rng.normal(size=3),
            q=random_unit_quaternion(rng),
            v=rng.normal(size=3),
            w=rng.normal(size=3),
        )
        u = ControlInput(T=params.hover_thrust, tau=rng.normal(0, 0.01, 3))
        f_e = np.array([0.2, -0.1, 0.05])
        tau_e = np.array([0.01, 0.02, -0.01])
        d0, _, _ = continuous_dynamics(x, u, GroundContact(mu_g=AERIAL), params)
        d1, _, _ = continuous_dynamics(
            x, u, GroundContact(mu_g=AERIAL), params,
            disturbance=np.concatenate([f_e, tau_e]),
        )
        np.testing.assert_allclose(d1[7:10] - d0[7:10], f_e / params.m, atol=1e-12)
        np.testing.assert_allclose(
            d1[10:13] - d0[10:13], tau_e / np.asarray(params.inertia_diag), atol=1e-12
        )

    def test_invalid_state_rejected(self, params):
        x = FullState(p=np.zeros(3), q=np.array([1.0, 0, 0, 0.1]), v=np.zeros(3), w=np.zeros(3))
        with pytest.raises(InvalidStateError):
            continuous_dynamics(
                x, ControlInput(T=0.0, tau=np.zeros(3)), GroundContact(mu_g=AERIAL), params
            )

    def test_contact_validation(self):
        with pytest.raises(ValueError):
            GroundContact(mu_g=2)
        with pytest.raises(ValueError):
            GroundContact(mu_g=AERIAL, f_n=1.0)
        with pytest.raises(ValueError):
            GroundContact(mu_g=TERRESTRIAL, f_n=-1.0)


class TestIntegration:
    def test_rk4_order(self, params):
        # halving dt should cut the error by about 2^4
        x0 = FullState(
            p=np.zeros(3),
            q=quat.from_yaw(0.3),
            v=np.array([1.0, 0.5, 0.2]),
            w=np.array([0.4, -0.3, 0.2]),
        )
        u = ControlInput(T=1.1 * params.hover_thrust, tau=np.array([1e-3, -2e-3, 5e-4]))

        def integrate(dt, n):
            x, contact = x0, GroundContact(mu_g=AERIAL)
            for _ in range(n):
                x, contact, _ = integrate_rk4(x, u, contact, dt, params)
            return x.as_vector()

        ref = integrate(1.25e-4, 1600)
        err_coarse = np.linalg.norm(integrate(2e-3, 100) - ref)
        err_fine = np.linalg.norm(integrate(1e-3, 200) - ref)
        assert err_fine < err_coarse / 8.0

    def test_quaternion_norm_preserved(self, params):
        x = FullState.rest(p=(0, 0, 2.0))
        u = ControlInput(T=params.hover_thrust, tau=np.array([2e-3, 1e-3, -1e-3]))
        contact = GroundContact(mu_g=AERIAL)
        for _ in range(2000):
            x, contact, _ = integrate_rk4(x, u, contact, 1e-3, params)
        assert abs(np.linalg.norm(x.q) - 1.0) < 1e-12

    def test_torque_free_momentum_conserved(self, params):
        # inertial angular momentum R(q) M w is invariant without torque
        rng = np.random.default_rng(10)
        x = FullState(
            p=np.zeros(3),
            q=random_unit_quaternion(rng),
            v=np.zeros(3),
            w=rng.normal(0.0, 3.0, 3),
        )
        u = ControlInput(T=0.0, tau=np.zeros(3))
        J = np.asarray(params.inertia_diag)
        L0 = quat.rotate(x.q, J * x.w)
        contact = GroundContact(mu_g=AERIAL)
        for _ in range(1000):
            x, contact, _ = integrate_rk4(x, u, contact, 1e-3, params)
        L1 = quat.rotate(x.q, J * x.w)
        np.testing.assert_allclose(L1, L0, atol=1e-6)

    def test_terrestrial_projection(self, params):
        # ground steps keep z = 0 and kill lateral slip
        x = FullState(
            p=np.array([0.0, 0.0, 0.0]),
            q=quat.from_yaw(0.5),
            v=1.0 * np.array([np.cos(0.5), np.sin(0.5), 0.0]),
            w=np.array([0.0, 0.0, 0.3]),
        )
        u = ControlInput(T=0.4 * params.hover_thrust, tau=np.array([0, 0, 1e-3]))
        contact = GroundContact(mu_g=TERRESTRIAL)
        for _ in range(200):
            x, contact, _ = integrate_rk4(x, u, contact, 1e-3, params)
        assert abs(x.p[2]) < 1e-12
        assert abs(x.v[2]) < 1e-12
        lateral = quat.rotate_inverse(x.q, x.v)[1]
        assert abs(lateral) < 1e-9

    def test_dt_must_be_positive(self, params):
        with pytest.raises(ValueError):
            integrate_rk4(
                FullState.rest(), ControlInput(T=0.0, tau=np.zeros(3)),
                GroundContact(mu_g=TERRESTRIAL), 0.0, params,
            )
