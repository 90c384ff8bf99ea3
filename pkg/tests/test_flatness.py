"""Flat-output recovery tests: both mode maps, guards, sequences, round trips."""

import numpy as np
import pytest

from bimodal_nav import quat
from bimodal_nav.dynamics import AERIAL, TERRESTRIAL
from bimodal_nav.flatness import (
    FlatSample,
    InfeasiblePitchError,
    ReferenceSequence,
    SingularThrustError,
    YawUndefinedError,
    flat_to_state,
    flatness_roundtrip_check,
    recover_references,
    yaw_from_velocity,
    yaw_rate_from_velocity,
)

E3 = np.array([0.0, 0.0, 1.0])


def circle_flat(radius, speed, z=1.0, mode=AERIAL):
    """Constant-speed circle; closed-form derivatives of every order."""
    w = speed / radius

    def fn(t):
        c, s = np.cos(w * t), np.sin(w * t)
        return FlatSample(
            p=np.array([radius * c, radius * s, z]),
            v=radius * w * np.array([-s, c, 0.0]),
            a=radius * w**2 * np.array([-c, -s, 0.0]),
            j=radius * w**3 * np.array([s, -c, 0.0]),
            mode=mode,
        )

    return fn


class TestYawFromVelocity:
    def test_direction(self):
        assert yaw_from_velocity(np.array([1.0, 1.0, 0.0])) == pytest.approx(np.pi / 4)
        assert yaw_from_velocity(np.array([1.0, 1.0, 0.0]), eta=-1) == pytest.approx(
            np.pi / 4 - np.pi
        )

    def test_undefined_at_rest(self):
        with pytest.raises(YawUndefinedError):
            yaw_from_velocity(np.array([0.0, 0.0, 1.0]))

    def test_rate_matches_finite_difference(self):
        fn = circle_flat(2.0, 1.5)
        h = 1e-6
        for t in (0.0, 0.7, 2.1):
            psi_p = yaw_from_velocity(fn(t + h).v)
            psi_m = yaw_from_velocity(fn(t - h).v)
            fd = np.remainder(psi_p - psi_m + np.pi, 2 * np.pi) - np.pi
            s = fn(t)
            assert yaw_rate_from_velocity(s.v, s.a) == pytest.approx(
                fd / (2 * h), abs=1e-6
            )


class TestAerialMap:
    def test_thrust_vector(self, params):
        fn = circle_flat(2.0, 1.5)
        for t in (0.0, 0.9, 1.7):
            s = fn(t)
            pt = flat_to_state(s, params, T_ref=0.0)
            f = params.m * (s.a + params.g * E3)
            z_b = quat.rotate(pt.x_ref.q, E3)
            np.testing.assert_allclose(pt.u_ref.T * z_b, f, atol=1e-12)
            np.testing.assert_allclose(pt.x_ref.v, s.v, atol=1e-15)
            assert float(quat.yaw(pt.x_ref.q)) == pytest.approx(
                yaw_from_velocity(s.v), abs=1e-12
            )
            assert pt.contact.mu_g == AERIAL

    def test_body_rates_match_attitude_derivative(self, params):
        # q_dot from the recovered omega vs finite difference of recovered q
        fn = circle_flat(2.0, 1.5)
        h = 1e-6
        for t in (0.4, 1.2):
            q_p = flat_to_state(fn(t + h), params, 0.0).x_ref.q
            q_m = flat_to_state(fn(t - h), params, 0.0).x_ref.q
            if q_p @ q_m < 0:
                q_p = -q_p
            pt = flat_to_state(fn(t), params, 0.0)
            np.testing.assert_allclose(
                quat.derivative(pt.x_ref.q, pt.x_ref.w),
                (q_p - q_m) / (2 * h),
                atol=2e-5,
            )

    def test_explicit_yaw_override(self, params):
        # psi defines the intermediate heading x_C; the exact invariants are
        # y_B perpendicular to x_C and x_B on its positive side
        s = circle_flat(2.0, 1.5)(0.3)
        s.psi = 1.1
        pt = flat_to_state(s, params, 0.0)
        x_c = np.array([np.cos(1.1), np.sin(1.1), 0.0])
        R = quat.to_rotation_matrix(pt.x_ref.q)
        assert abs(R[:, 1] @ x_c) < 1e-12
        assert R[:, 0] @ x_c > 0.9

    def test_singular_thrust(self, params):
        s = FlatSample(p=np.zeros(3), v=np.array([1.0, 0, 0]),
                       a=-params.g * E3, j=np.zeros(3))
        with pytest.raises(SingularThrustError):
            flat_to_state(s, params, 0.0)

    def test_fallback_yaw_used_at_rest(self, params):
        s = FlatSample(p=np.zeros(3), v=np.zeros(3), a=np.zeros(3), j=np.zeros(3))
        with pytest.raises(YawUndefinedError):
            flat_to_state(s, params, 0.0)
        pt = flat_to_state(s, params, 0.0, fallback_yaw=0.7)
        assert float(quat.yaw(pt.x_ref.q)) == pytest.approx(0.7)
        assert pt.u_ref.T == pytest.approx(params.hover_thrust)


class TestTerrestrialMap:
    def test_pitch_carries_longitudinal_accel(self, params):
        T_ref = 0.45 * params.hover_thrust
        v = np.array([1.2, 0.9, 0.0])
        sp = np.hypot(v[0], v[1])
        a = 0.8 * v / sp  # purely longitudinal
        s = FlatSample(p=np.zeros(3), v=v, a=a, j=np.zeros(3), mode=TERRESTRIAL)
        pt = flat_to_state(s, params, T_ref)
        theta = np.arcsin(params.m * 0.8 / T_ref)
        x_b = quat.rotate(pt.x_ref.q, np.array([1.0, 0, 0]))
        assert x_b[2] == pytest.approx(-np.sin(theta), abs=1e-12)
        # thrust along body z pushes the wheels forward by T sin(theta)
        assert pt.u_ref.T * np.sin(theta) == pytest.approx(params.m * 0.8, rel=1e-12)
        assert pt.contact.mu_g == TERRESTRIAL
        assert pt.contact.f_n == pytest.approx(
            params.m * params.g - T_ref * np.cos(theta), rel=1e-12
        )

    def test_zero_roll(self, params):
        fn = circle_flat(3.0, 1.0, z=0.0, mode=TERRESTRIAL)
        for t in (0.0, 1.3, 2.9):
            pt = flat_to_state(fn(t), params, 0.45 * params.hover_thrust)
            y_b = quat.rotate(pt.x_ref.q, np.array([0.0, 1.0, 0.0]))
            assert abs(y_b[2]) < 1e-12
            # no slip: velocity has no lateral body component
            assert abs(y_b @ pt.x_ref.v) < 1e-12

    def test_infeasible_pitch(self, params):
        T_ref = 0.45 * params.hover_thrust
        a_l = 1.1 * T_ref / params.m
        s = FlatSample(
            p=np.zeros(3), v=np.array([1.0, 0, 0]), a=np.array([a_l, 0, 0]),
            j=np.zeros(3), mode=TERRESTRIAL,
        )
        with pytest.raises(InfeasiblePitchError):
            flat_to_state(s, params, T_ref)


class TestSequences:
    def test_recover_references_consistency(self, params):
        fn = circle_flat(2.0, 1.5)
        dt = 5e-3
        samples = [fn(k * dt) for k in range(400)]
        refs = recover_references(samples, dt, params)
        assert len(refs) == 400
        # quaternion sign continuity
        dots = np.sum(refs.X[1:, 3:7] * refs.X[:-1, 3:7], axis=1)
        assert np.all(dots > 0.0)
        # torque consistent with the logged rate sequence
        J = np.asarray(params.inertia_diag)
        W = refs.X[:, 10:13]
        Wdot = np.gradient(W, dt, axis=0)
        np.testing.assert_allclose(
            refs.U[:, 1:4], J * Wdot + np.cross(W, J * W), atol=1e-12
        )
        assert np.all(refs.mode == AERIAL)

    def test_csv_round_trip(self, params, tmp_path):
        fn = circle_flat(2.0, 1.5)
        refs = recover_references([fn(k * 0.01) for k in range(50)], 0.01, params)
        refs.to_csv(tmp_path / "refs.csv")
        back = ReferenceSequence.from_csv(tmp_path / "refs.csv")
        np.testing.assert_allclose(back.X, refs.X, atol=1e-12)
        np.testing.assert_allclose(back.U, refs.U, atol=1e-12)
        assert np.array_equal(back.mode, refs.mode)

    def test_window_clamps(self, params):
        fn = circle_flat(2.0, 1.5)
        refs = recover_references([fn(k * 0.01) for k in range(20)], 0.01, params)
        X, U, mode = refs.window(15, 10, stride=2)
        assert X.shape == (10, 13)
        np.testing.assert_allclose(X[-1], refs.X[-1])

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            ReferenceSequence(
                t=np.zeros(3), X=np.zeros((3, 13)), U=np.zeros((2, 4)),
                mode=np.zeros(3, dtype=int),
            )


class TestRoundTrip:
    def test_aerial_circle(self, params):
        err = flatness_roundtrip_check(circle_flat(2.0, 1.5), 2.0, 1e-3, params)
        assert err < 1e-3

    def test_terrestrial_circle(self, params):
        fn = circle_flat(3.0, 1.0, z=0.0, mode=TERRESTRIAL)
        err = flatness_roundtrip_check(fn, 2.0, 1e-3, params)
        assert err < 1e-3
