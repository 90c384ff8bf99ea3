"""Shared fixtures: vehicle constants and a reusable small obstacle world."""

import numpy as np
import pytest

from bimodal_nav.dynamics import PhysicalParams
from bimodal_nav.worlds import make_forest_world


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def small_forest():
    # 20 x 20 m, sparse, with clear pads at the usual start/goal corners
    return make_forest_world(
        extent_xy=(20.0, 20.0),
        n_obstacles=14,
        seed=7,
        keep_clear=[(2.0, 2.0, 1.5), (18.0, 18.0, 1.5)],
    )


def random_unit_quaternion(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)
