"""Distance-field tests: exactness against brute force, gradients, file I/O."""

import numpy as np
import pytest

from bimodal_nav.esdf import (
    EsdfGrid,
    MapError,
    OccupancyGrid,
    brute_force_esdf,
    build_esdf,
)


def random_grid(rng, shape, density, resolution=0.25, origin=None):
    occ = rng.random(shape) < density
    if origin is None:
        origin = np.zeros(len(shape))
    return OccupancyGrid(resolution=resolution,
                         origin=np.asarray(origin, dtype=float), cells=occ)


class TestDistances:
    def test_matches_brute_force_2d(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            grid = random_grid(rng, (32, 32), 0.08)
            fast = build_esdf(grid)
            slow = brute_force_esdf(grid)
            np.testing.assert_allclose(fast.dist, slow.dist, atol=1e-9)

    def test_matches_brute_force_3d(self):
        rng = np.random.default_rng(12)
        grid = random_grid(rng, (16, 16, 8), 0.05)
        np.testing.assert_allclose(
            build_esdf(grid).dist, brute_force_esdf(grid).dist, atol=1e-9
        )

    def test_occupied_cells_are_zero(self):
        rng = np.random.default_rng(13)
        grid = random_grid(rng, (24, 24), 0.1)
        esdf = build_esdf(grid)
        assert np.all(esdf.dist[grid.cells] == 0.0)
        assert np.all(esdf.dist >= 0.0)

    def test_single_obstacle_distances(self):
        occ = np.zeros((21, 21), dtype=bool)
        occ[10, 10] = True
        grid = OccupancyGrid(resolution=0.5, origin=np.zeros(2), cells=occ)
        esdf = build_esdf(grid)
        # distance at (0, 10) is 10 cells * 0.5 m
        assert esdf.dist[0, 10] == pytest.approx(5.0)
        assert esdf.dist[10, 0] == pytest.approx(5.0)
        assert esdf.dist[0, 0] == pytest.approx(np.hypot(5.0, 5.0))

    def test_empty_grid_sentinel(self):
        grid = OccupancyGrid(
            resolution=0.5, origin=np.zeros(2),
            cells=np.zeros((10, 20), dtype=bool),
        )
        esdf = build_esdf(grid)
        diag = np.linalg.norm(grid.extent[:, 1] - grid.extent[:, 0])
        assert np.all(esdf.dist == pytest.approx(diag))


class TestQueries:
    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(14)
        grid = random_grid(rng, (32, 32), 0.08)
        esdf = build_esdf(grid)
        # probe strictly inside cells so the interpolant is smooth locally
        idx = rng.integers(2, 29, size=(40, 2))
        pts = (idx + np.array([0.4, 0.6])) * grid.resolution
        h = 1e-7
        for p in pts:
            d, g, inside = esdf.query_one(p)
            assert inside
            for axis in range(2):
                dp = np.zeros(2)
                dp[axis] = h
                fd = (esdf.query_one(p + dp)[0] - esdf.query_one(p - dp)[0]) / (2 * h)
                assert g[axis] == pytest.approx(fd, abs=1e-6)

    def test_outside_flag(self):
        grid = OccupancyGrid(
            resolution=0.5, origin=np.zeros(2),
            cells=np.zeros((10, 10), dtype=bool),
        )
        esdf = build_esdf(grid)
        _, _, inside = esdf.query_one(np.array([-3.0, 2.0]))
        assert not inside
        _, _, inside = esdf.query_one(np.array([2.0, 2.0]))
        assert inside

    def test_batch_matches_single(self):
        rng = np.random.default_rng(15)
        grid = random_grid(rng, (20, 20), 0.1)
        esdf = build_esdf(grid)
        pts = rng.uniform(0.5, 4.5, (25, 2))
        D, G, I = esdf.query(pts)
        for k, p in enumerate(pts):
            d, g, inside = esdf.query_one(p)
            assert D[k] == pytest.approx(d, abs=1e-15)
            np.testing.assert_allclose(G[k], g, atol=1e-15)
            assert I[k] == inside


class TestOccupancyGridIO:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(16)
        for shape, origin in (((12, 9), (0.0, -1.5)), ((8, 7, 5), (2.0, 0.25, 0.0))):
            grid = random_grid(rng, shape, 0.2, resolution=0.15, origin=origin)
            path = tmp_path / f"grid{len(shape)}.grid"
            grid.save(path)
            back = OccupancyGrid.load(path)
            assert back.resolution == grid.resolution
            np.testing.assert_array_equal(back.origin, grid.origin)
            np.testing.assert_array_equal(back.cells, grid.cells)

    def test_world_cell_round_trip(self):
        grid = OccupancyGrid(
            resolution=0.3, origin=np.array([1.0, -2.0]),
            cells=np.zeros((10, 12), dtype=bool),
        )
        idx = np.array([4, 7])
        center = grid.cell_center(idx)
        np.testing.assert_array_equal(grid.world_to_cell(center), idx)

    def test_is_occupied(self):
        occ = np.zeros((5, 5), dtype=bool)
        occ[2, 3] = True
        grid = OccupancyGrid(resolution=1.0, origin=np.zeros(2), cells=occ)
        assert grid.is_occupied(np.array([2.5, 3.5]))
        assert not grid.is_occupied(np.array([0.5, 0.5]))
        assert not grid.is_occupied(np.array([50.0, 50.0]))  # out of bounds

    def test_load_rejects_malformed(self, tmp_path):
        bad = tmp_path / "bad.grid"
        bad.write_text("not a grid header\n")
        with pytest.raises(MapError):
            OccupancyGrid.load(bad)
