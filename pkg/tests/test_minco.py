"""Piecewise-quintic trajectory map: interpolation, continuity, gradients."""

import numpy as np
import pytest

from bimodal_nav import minco
from bimodal_nav.minco import (
    Boundary,
    MincoTrajectory,
    backprop_gradients,
    beta,
    beta_batch,
    solve_coefficients,
)


def random_problem(rng, M, ndim=3):
    q = rng.uniform(-4.0, 4.0, (max(M - 1, 0), ndim))
    T = rng.uniform(0.6, 2.0, M)
    start = Boundary(
        p=rng.uniform(-4, 4, ndim), v=rng.normal(0, 1, ndim), a=rng.normal(0, 1, ndim)
    )
    end = Boundary(
        p=rng.uniform(-4, 4, ndim), v=rng.normal(0, 1, ndim), a=rng.normal(0, 1, ndim)
    )
    return q, T, start, end


class TestBasis:
    def test_beta_values(self):
        b = beta(2.0, 0)
        np.testing.assert_allclose(b, [1, 2, 4, 8, 16, 32])

    def test_beta_derivative_chain(self):
        # beta(, k+1) is the tau-derivative of beta(, k)
        h = 1e-7
        for order in range(4):
            for tau in (0.3, 1.7):
                fd = (beta(tau + h, order) - beta(tau - h, order)) / (2 * h)
                np.testing.assert_allclose(beta(tau, order + 1), fd, atol=1e-5)

    def test_beta_batch_matches_scalar(self):
        taus = np.array([0.0, 0.4, 1.1, 2.5])
        for order in range(5):
            got = beta_batch(taus, order)
            want = np.stack([beta(t, order) for t in taus])
            np.testing.assert_allclose(got, want)


class TestSolveCoefficients:
    def test_boundary_conditions(self):
        rng = np.random.default_rng(20)
        for M in (1, 2, 5):
            q, T, start, end = random_problem(rng, M)
            traj = solve_coefficients(q, T, start, end)
            t0 = np.array([0.0])
            t1 = np.array([traj.total_time])
            np.testing.assert_allclose(traj.eval(t0, 0)[0], start.p, atol=1e-9)
            np.testing.assert_allclose(traj.eval(t0, 1)[0], start.v, atol=1e-9)
            np.testing.assert_allclose(traj.eval(t0, 2)[0], start.a, atol=1e-9)
            np.testing.assert_allclose(traj.eval(t1, 0)[0], end.p, atol=1e-9)
            np.testing.assert_allclose(traj.eval(t1, 1)[0], end.v, atol=1e-9)
            np.testing.assert_allclose(traj.eval(t1, 2)[0], end.a, atol=1e-9)

    def test_waypoint_passage(self):
        rng = np.random.default_rng(21)
        q, T, start, end = random_problem(rng, 4)
        traj = solve_coefficients(q, T, start, end)
        knots = np.cumsum(T)[:-1]
        np.testing.assert_allclose(traj.eval(knots, 0), q, atol=1e-9)

    def test_junction_continuity_up_to_snap(self):
        # the linear map enforces continuity of derivatives 0..4 at junctions
        rng = np.random.default_rng(22)
        q, T, start, end = random_problem(rng, 4)
        traj = solve_coefficients(q, T, start, end)
        for i in range(3):
            for order in range(5):
                left = traj.eval_piece(i, np.array([T[i]]), order)[0]
                right = traj.eval_piece(i + 1, np.array([0.0]), order)[0]
                np.testing.assert_allclose(left, right, atol=1e-7)

    def test_single_piece_matches_closed_form(self):
        # rest-to-rest single piece is the classic smoothstep quintic
        p0 = np.array([1.0, -2.0, 0.5])
        p1 = np.array([4.0, 0.0, 2.5])
        T = 3.0
        traj = solve_coefficients(
            np.zeros((0, 3)), np.array([T]),
            Boundary(p=p0, v=np.zeros(3), a=np.zeros(3)),
            Boundary(p=p1, v=np.zeros(3), a=np.zeros(3)),
        )
        t = np.linspace(0, T, 40)
        s = t / T
        want = p0[None] + (p1 - p0)[None] * (10 * s**3 - 15 * s**4 + 6 * s**5)[:, None]
        np.testing.assert_allclose(traj.eval(t, 0), want, atol=1e-9)

    def test_junction_derivatives_minimize_jerk(self):
        """The solved junction velocity/acceleration must beat any perturbed
        choice: split a two-piece problem at the knot, re-solve each half with
        perturbed junction derivatives, and compare total jerk energy."""
        rng = np.random.default_rng(23)
        q, T, start, end = random_problem(rng, 2)
        traj = solve_coefficients(q, T, start, end)

        def jerk_energy(tr):
            total = 0.0
            for i in range(tr.n_pieces):
                tau = np.linspace(0, tr.T[i], 2001)
                j = tr.eval_piece(i, tau, 3)
                total += np.trapezoid(np.sum(j * j, axis=1), tau)
            return total

        knot = np.array([T[0]])
        vj = traj.eval(knot, 1)[0]
        aj = traj.eval(knot, 2)[0]

        def split_energy(dv, da):
            mid = Boundary(p=q[0], v=vj + dv, a=aj + da)
            left = solve_coefficients(np.zeros((0, 3)), T[:1], start, mid)
            right = solve_coefficients(np.zeros((0, 3)), T[1:], mid, end)
            return jerk_energy(left) + jerk_energy(right)

        base = split_energy(np.zeros(3), np.zeros(3))
        assert base == pytest.approx(jerk_energy(traj), rel=1e-6)
        for _ in range(6):
            dv = rng.normal(0, 0.05, 3)
            da = rng.normal(0, 0.05, 3)
            assert split_energy(dv, da) > base

    def test_duration_validation(self):
        for bad in (np.array([1.0, -0.5]), np.array([0.0]), np.array([np.inf])):
            with pytest.raises(ValueError):
                solve_coefficients(
                    np.zeros((len(bad) - 1, 3)), bad,
                    Boundary.resting(np.zeros(3)), Boundary.resting(np.ones(3)),
                )


class TestEvaluation:
    def test_piece_of_boundaries(self):
        rng = np.random.default_rng(24)
        q, T, start, end = random_problem(rng, 3)
        traj = solve_coefficients(q, T, start, end)
        idx, tau = traj.piece_of(np.array([0.0, T[0], traj.total_time]))
        assert idx[0] == 0
        assert idx[1] == 1  # knots belong to the right piece
        assert idx[2] == 2  # except the final endpoint
        assert tau[2] == pytest.approx(T[2])

    def test_eval_flagged(self):
        rng = np.random.default_rng(25)
        q, T, start, end = random_problem(rng, 2)
        traj = solve_coefficients(q, T, start, end)
        vals, clamped = traj.eval_flagged(np.array([-0.5, 0.5, traj.total_time + 1.0]), 0)
        assert list(clamped) == [True, False, True]
        # clamped samples evaluate at the nearest endpoint
        np.testing.assert_allclose(vals[0], traj.eval(np.array([0.0]), 0)[0])
        np.testing.assert_allclose(
            vals[2], traj.eval(np.array([traj.total_time]), 0)[0]
        )

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(26)
        q, T, start, end = random_problem(rng, 3)
        traj = solve_coefficients(q, T, start, end)
        traj.to_json(tmp_path / "traj.json")
        back = MincoTrajectory.from_json(tmp_path / "traj.json")
        t = np.linspace(0, traj.total_time, 50)
        np.testing.assert_allclose(back.eval(t, 0), traj.eval(t, 0), atol=1e-12)
        np.testing.assert_allclose(back.T, traj.T)


class TestGradients:
    def test_backprop_matches_finite_difference(self):
        """Pull a random quadratic functional of the coefficients back to the
        waypoint/duration parameterization and compare against central FD."""
        rng = np.random.default_rng(27)
        for trial in range(5):
            M = int(rng.integers(2, 5))
            q, T, start, end = random_problem(rng, M)
            W = rng.normal(size=(M, minco.NCOEF, 3))

            def value_and_grads(qq, TT):
                traj = solve_coefficients(qq, TT, start, end)
                J = float(np.sum(W * traj.coeffs**2))
                dC = 2.0 * W * traj.coeffs
                dq, dT = backprop_gradients(traj, dC, np.zeros(M))
                return J, dq, dT

            J0, dq, dT = value_and_grads(q, T)
            h = 1e-6
            for i in range(M - 1):
                for d in range(3):
                    qp = q.copy(); qp[i, d] += h
                    qm = q.copy(); qm[i, d] -= h
                    fd = (value_and_grads(qp, T)[0] - value_and_grads(qm, T)[0]) / (2 * h)
                    assert dq[i, d] == pytest.approx(fd, rel=2e-4, abs=1e-6)
            for i in range(M):
                Tp = T.copy(); Tp[i] += h
                Tm = T.copy(); Tm[i] -= h
                fd = (value_and_grads(q, Tp)[0] - value_and_grads(q, Tm)[0]) / (2 * h)
                assert dT[i] == pytest.approx(fd, rel=2e-4, abs=1e-6)
