"""Trajectory optimization: penalty hinge, cost terms, gradients, descent."""

import numpy as np
import pytest

from bimodal_nav import minco
from bimodal_nav.dynamics import AERIAL, TERRESTRIAL, PhysicalParams
from bimodal_nav.minco import Boundary, solve_coefficients
from bimodal_nav.trajopt import (
    OptimizerConfig,
    cost_collision,
    cost_nonholonomic,
    cost_state_limits,
    cost_total_time,
    evaluate_costs,
    load_trajectory,
    optimize,
    sample_references,
    save_trajectory,
    smooth_max0,
)
from bimodal_nav.worlds import make_empty_world, make_fence_world, make_forest_world


def line_trajectory(p0, p1, T_total, n_pieces=2):
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    fr = np.arange(1, n_pieces)[:, None] / n_pieces
    q = p0[None] + fr * (p1 - p0)[None]
    T = np.full(n_pieces, T_total / n_pieces)
    return solve_coefficients(q, T, Boundary.resting(p0), Boundary.resting(p1))


class TestSmoothMax0:
    def test_exact_regions(self):
        eps = 1e-2
        x = np.array([-3.0, -eps, 0.0, eps, 0.5, 7.0])
        f, df = smooth_max0(x, eps)
        np.testing.assert_allclose(f[:3], 0.0)
        np.testing.assert_allclose(df[:3], 0.0)
        np.testing.assert_allclose(f[3:], x[3:])
        np.testing.assert_allclose(df[3:], 1.0)

    def test_derivative_matches_fd(self):
        eps = 1e-2
        x = np.linspace(-0.5 * eps, 1.5 * eps, 101)
        h = 1e-9
        _, df = smooth_max0(x, eps)
        fp, _ = smooth_max0(x + h, eps)
        fm, _ = smooth_max0(x - h, eps)
        np.testing.assert_allclose(df, (fp - fm) / (2 * h), atol=1e-5)

    def test_blend_is_monotone_and_bounded(self):
        eps = 0.3
        x = np.linspace(0.0, eps, 200)
        f, df = smooth_max0(x, eps)
        assert np.all(np.diff(f) >= 0)
        assert np.all(f <= x + 1e-12)
        assert np.all(df >= 0)


class TestCostTerms:
    config = OptimizerConfig(v_max=3.0, a_max=2.5)

    def test_total_time(self):
        traj = line_trajectory([0, 0, 0], [4, 0, 0], 5.0, 3)
        J, dT = cost_total_time(traj)
        assert J == pytest.approx(5.0)
        np.testing.assert_allclose(dT, 1.0)

    def test_slow_straight_ground_line_is_penalty_free(self):
        traj = line_trajectory([1, 1, 0], [7, 1, 0], 8.0)
        modes = np.array([TERRESTRIAL, TERRESTRIAL])
        world = make_empty_world()
        rep = evaluate_costs(traj, modes, self.config, world.ground_esdf, world.air_esdf)
        np.testing.assert_allclose(rep.J[1:], 0.0, atol=1e-12)

    def test_speed_limit_activates(self):
        # 8 m in 2 s peaks near 7.5 m/s with a rest-to-rest quintic
        traj = line_trajectory([0, 0, 0], [8, 0, 0], 2.0)
        J, _, _ = cost_state_limits(traj, np.array([AERIAL, AERIAL]), self.config)
        assert J > 1.0

    def test_ground_adherence_penalizes_terrestrial_altitude(self):
        q = np.array([[2.0, 0.0, 0.6]])
        T = np.array([3.0, 3.0])
        traj = solve_coefficients(
            q, T, Boundary.resting([0, 0, 0]), Boundary.resting([4, 0, 0])
        )
        J_t, _, _ = cost_state_limits(traj, np.array([TERRESTRIAL] * 2), self.config)
        J_a, _, _ = cost_state_limits(traj, np.array([AERIAL] * 2), self.config)
        assert J_a == pytest.approx(0.0, abs=1e-12)
        assert J_t > 1.0  # ground_weight * z^2 samples

    def test_collision_activates_near_obstacle(self):
        world = make_forest_world(extent_xy=(10.0, 10.0), n_obstacles=0, seed=1)
        # one known cylinder in the middle
        from bimodal_nav.worlds import CylinderObstacle, _rasterize

        g, a = _rasterize((10.0, 10.0), 4.0, 0.15, 0.4,
                          [CylinderObstacle(x=5.0, y=5.0, radius=0.6, height=3.0)])
        from bimodal_nav.worlds import World

        world = World(ground=g, air=a)
        cfg = self.config
        through = line_trajectory([1, 5, 0], [9, 5, 0], 10.0)
        past = line_trajectory([1, 1, 0], [9, 1, 0], 10.0)
        m = np.array([TERRESTRIAL, TERRESTRIAL])
        J_hit, _, _ = cost_collision(through, m, cfg, world.ground_esdf, world.air_esdf)
        J_far, _, _ = cost_collision(past, m, cfg, world.ground_esdf, world.air_esdf)
        assert J_hit > 0.1
        assert J_far == pytest.approx(0.0, abs=1e-12)

    def test_nonholonomic_turn_rate(self):
        # a U-turn driven fast needs a yaw rate above omega_max; the same
        # geometry flown as an aerial piece is exempt
        q = np.array([[1.5, 1.5, 0.0]])
        T = np.array([1.2, 1.2])
        traj = solve_coefficients(
            q, T,
            Boundary(p=np.zeros(3), v=np.array([2.0, 0, 0]), a=np.zeros(3)),
            Boundary(p=np.array([0.0, 3.0, 0.0]), v=np.array([-2.0, 0, 0]), a=np.zeros(3)),
        )
        cfg = OptimizerConfig(omega_max=1.0)
        J_t, _, _ = cost_nonholonomic(traj, np.array([TERRESTRIAL] * 2), cfg)
        J_a, _, _ = cost_nonholonomic(traj, np.array([AERIAL] * 2), cfg)
        assert J_t > 0.1
        assert J_a == 0.0

    def test_straight_line_has_no_turn_penalty(self):
        traj = line_trajectory([0, 0, 0], [6, 0, 0], 4.0)
        J, _, _ = cost_nonholonomic(traj, np.array([TERRESTRIAL] * 2), self.config)
        assert J == pytest.approx(0.0, abs=1e-12)

    def test_collision_requires_field(self):
        from bimodal_nav.trajopt import OptimizationError

        traj = line_trajectory([0, 0, 0], [6, 0, 0], 4.0)
        with pytest.raises(OptimizationError):
            evaluate_costs(traj, np.array([TERRESTRIAL] * 2), self.config,
                           None, None, which=(False, False, True, False))


class TestGradientOracle:
    def total_objective(self, world, modes, start, end, config):
        """Reduced-variable objective identical to the optimizer's: free
        waypoint coordinates plus log durations."""
        from bimodal_nav.trajopt import _variable_layout

        modes = np.asarray(modes, int)
        M = len(modes)
        free = _variable_layout(modes, M - 1)
        lam = np.asarray(config.lam)

        def build(x, q0):
            q = q0.copy()
            q[free] = x[: free.sum()]
            T = np.exp(x[free.sum():])
            return q, T

        def f_and_g(x, q0):
            q, T = build(x, q0)
            traj = solve_coefficients(q, T, start, end)
            rep = evaluate_costs(traj, modes, config, world.ground_esdf, world.air_esdf)
            total = float(lam @ rep.J)
            dC = sum(lam[c] * rep.dC[c] for c in range(4))
            dTdir = sum(lam[c] * rep.dT_direct[c] for c in range(4))
            dq, dT = minco.backprop_gradients(traj, dC, dTdir)
            g = np.concatenate([dq[free], dT * T])
            return total, g

        return free, build, f_and_g

    def test_gradient_matches_central_differences(self):
        world = make_forest_world(
            extent_xy=(14.0, 14.0), n_obstacles=10, seed=3,
            keep_clear=[(2.0, 2.0, 1.2), (12.0, 12.0, 1.2)],
        )
        config = OptimizerConfig(v_max=2.5, a_max=2.0, omega_max=2.0)
        rng = np.random.default_rng(9)
        for trial in range(4):
            modes = rng.choice([TERRESTRIAL, AERIAL], size=3)
            start = Boundary.resting(np.array([2.0, 2.0, 0.0]))
            end = Boundary.resting(np.array([12.0, 12.0, 0.0]))
            q0 = np.array([[5.0, 4.0, 0.8], [9.0, 9.0, 0.8]])
            q0[:, :2] += rng.normal(0, 0.4, (2, 2))
            free, build, f_and_g = self.total_objective(world, modes, start, end, config)
            q_init = q0.copy()
            q_init[~free] = 0.0
            x = np.concatenate([q_init[free], np.log(rng.uniform(1.5, 3.0, 3))])
            f0, g = f_and_g(x, q_init)
            h = 1e-6
            fd = np.empty_like(x)
            for i in range(len(x)):
                xp = x.copy(); xp[i] += h
                xm = x.copy(); xm[i] -= h
                fd[i] = (f_and_g(xp, q_init)[0] - f_and_g(xm, q_init)[0]) / (2 * h)
            denom = max(np.linalg.norm(fd), 1e-9)
            rel = np.linalg.norm(g - fd) / denom
            assert rel <= 1e-4, f"trial {trial}: rel grad error {rel:.3e}"


class TestOptimize:
    def test_straight_ground_leg(self):
        world = make_empty_world()
        config = OptimizerConfig(v_max=2.0, a_max=1.5, maxiter=120)
        wp = np.array([[2.0, 5.0, 0.0], [6.0, 5.0, 0.0], [10.0, 5.0, 0.0]])
        res = optimize(
            wp, np.array([3.0, 3.0]), np.array([TERRESTRIAL] * 2),
            Boundary.resting(wp[0]), Boundary.resting(wp[-1]),
            config, world.ground_esdf, world.air_esdf,
        )
        assert res.success
        assert np.all(res.cost[1:] < 1e-3)
        t = np.linspace(0, res.traj.total_time, 200)
        v = np.linalg.norm(res.traj.eval(t, 1), axis=1)
        assert v.max() <= config.v_max + 0.05
        # time term pushes against the speed wall: a rest-to-rest quintic over
        # 8 m peaks at 1.875 d/T, so the optimum sits near T = 7.5 s
        assert 2.2 < res.traj.total_time < 8.0
        assert v.max() > 0.9 * config.v_max

    def test_fence_hop_clears_wall(self):
        world = make_fence_world(fence_x=10.0, fence_height=1.2)
        config = OptimizerConfig(v_max=2.5, a_max=2.0, maxiter=200)
        wp = np.array([
            [6.0, 5.0, 0.0], [8.5, 5.0, 1.0], [11.5, 5.0, 1.0], [14.0, 5.0, 0.0]
        ])
        res = optimize(
            wp, np.array([1.8, 1.8, 1.8]), np.array([AERIAL] * 3),
            Boundary.resting(wp[0]), Boundary.resting(wp[-1]),
            config, world.ground_esdf, world.air_esdf,
        )
        assert res.cost[2] < 1e-3  # collision penalty cleared
        t = np.linspace(0, res.traj.total_time, 400)
        p = res.traj.eval(t, 0)
        dist, _, _ = world.air_esdf.query(p)
        assert dist.min() > 0.05

    def test_terrestrial_junction_z_pinned(self):
        world = make_empty_world()
        config = OptimizerConfig(maxiter=60)
        wp = np.array([
            [2.0, 5.0, 0.0], [5.0, 5.0, 0.0], [8.0, 5.0, 0.7], [11.0, 5.0, 0.0]
        ])
        modes = np.array([TERRESTRIAL, AERIAL, TERRESTRIAL])
        res = optimize(
            wp, np.array([2.5, 2.5, 2.5]), modes,
            Boundary.resting(wp[0]), Boundary.resting(wp[-1]),
            config, world.ground_esdf, world.air_esdf,
        )
        np.testing.assert_allclose(res.traj.q[:, 2], 0.0, atol=1e-12)

    def test_shape_validation(self):
        config = OptimizerConfig()
        with pytest.raises(ValueError):
            optimize(
                np.zeros((2, 3)), np.array([1.0, 1.0]), np.array([AERIAL] * 2),
                Boundary.resting(np.zeros(3)), Boundary.resting(np.ones(3)), config,
            )

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig(kappa=2)
        with pytest.raises(ValueError):
            OptimizerConfig(v_max=-1.0)

    def test_save_load_round_trip(self, tmp_path):
        traj = line_trajectory([0, 0, 0], [5, 1, 0], 4.0, 3)
        modes = np.array([TERRESTRIAL, AERIAL, TERRESTRIAL])
        save_trajectory(tmp_path / "t.json", traj, modes)
        back, back_modes = load_trajectory(tmp_path / "t.json")
        np.testing.assert_array_equal(back_modes, modes)
        t = np.linspace(0, traj.total_time, 60)
        np.testing.assert_allclose(back.eval(t, 0), traj.eval(t, 0), atol=1e-12)


class TestSampleReferences:
    def test_terrestrial_samples_stay_on_ground(self):
        params = PhysicalParams()
        q = np.array([[2.0, 0.5, 0.0]])
        traj = solve_coefficients(
            q, np.array([2.5, 2.5]),
            Boundary.resting([0, 0, 0]), Boundary.resting([4, 0, 0]),
        )
        refs = sample_references(traj, np.array([TERRESTRIAL] * 2), 0.01, params)
        assert len(refs) == int(np.ceil(traj.total_time / 0.01)) + 1
        np.testing.assert_allclose(refs.X[:, 3 - 1], 0.0, atol=1e-12)  # pz
        np.testing.assert_allclose(refs.X[:, 9], 0.0, atol=1e-12)  # vz
        assert np.all(refs.mode == TERRESTRIAL)
        assert refs.dt == pytest.approx(0.01)

    def test_mode_labels_follow_pieces(self):
        params = PhysicalParams()
        q = np.array([[2.0, 0.0, 0.0]])
        traj = solve_coefficients(
            q, np.array([2.0, 2.0]),
            Boundary.resting([0, 0, 0]), Boundary.resting([4, 0, 0]),
        )
        modes = np.array([TERRESTRIAL, AERIAL])
        refs = sample_references(traj, modes, 0.05, params)
        switch = np.nonzero(np.diff(refs.mode))[0]
        assert len(switch) == 1
        assert refs.t[switch[0] + 1] == pytest.approx(2.0, abs=0.05 + 1e-9)
