import os

import numpy as np
import pytest

from planecal import PlaneParams, chain_from_dict, fileio, load_chain

FIXTURES = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURES, name)


@pytest.fixture(scope="session")
def chain_6r():
    return load_chain(fixture_path("chain_6r.json"))


@pytest.fixture(scope="session")
def chain_15j():
    return load_chain(fixture_path("chain_15j.json"))


@pytest.fixture(scope="session")
def plane_6r():
    return PlaneParams(0.09, 0.0, 0.0, 0.35, 0.0, 0.0)


@pytest.fixture(scope="session")
def plane_15j():
    return PlaneParams(0.08, 0.0, 0.0, 0.72, 0.0, 0.0)


@pytest.fixture(scope="session")
def pool300():
    """Shipped 300-posture pool for the 6R fixture: (ids, target_ids, postures)."""
    return fileio.read_pool_csv(fixture_path("pool300.csv"))


@pytest.fixture(scope="session")
def chain_single():
    """One z-axis joint, flange lever along x: residuals computable by hand."""
    return chain_from_dict(
        {
            "name": "single-j",
            "base_placement": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            "joints": [
                {
                    "kind": "revolute",
                    "axis": [0.0, 0.0, 1.0],
                    "placement": [0.0, 0.0, 0.5, 0.0, 0.0, 0.0],
                    "limits": [-3.1, 3.1],
                }
            ],
            "flange_placement": [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        }
    )


@pytest.fixture(scope="session")
def chain_colinear():
    """Two revolute joints about collinear x axes, separated along x.

    Rotating either placement about x moves the tool identically, so the two
    angular offsets (plus the base one) span a single identifiable direction.
    """
    return chain_from_dict(
        {
            "name": "colinear-2j",
            "base_placement": [0.0, 0.0, 0.3, 0.0, 0.0, 0.0],
            "joints": [
                {
                    "kind": "revolute",
                    "axis": [1.0, 0.0, 0.0],
                    "placement": [0.1, 0.0, 0.0, 0.0, 0.0, 0.0],
                    "limits": [-2.8, 2.8],
                },
                {
                    "kind": "revolute",
                    "axis": [1.0, 0.0, 0.0],
                    "placement": [0.25, 0.0, 0.0, 0.0, 0.0, 0.0],
                    "limits": [-2.8, 2.8],
                },
            ],
            "flange_placement": [0.1, 0.05, 0.15, 0.0, 0.0, 0.0],
        }
    )


def random_postures(chain, n, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(chain.lower_limits(), chain.upper_limits(), (n, chain.n_joints))
