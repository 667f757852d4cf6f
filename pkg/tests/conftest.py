import json
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = os.path.join(os.path.dirname(__file__), "data", "oracle_values.json")


@pytest.fixture(scope="session")
def oracle():
    with open(DATA) as fh:
        return json.load(fh)


def free_permutation(space, free_coords):
    """Package velocity dof index for each oracle free dof given as (x, y, component)."""
    index = {tuple(np.round(c, 9)): k for k, c in enumerate(space.node_coords)}
    return np.array([2 * index[(round(x, 9), round(y, 9))] + c for x, y, c in free_coords])


def node_permutation(space, coords):
    """Package vector-dof order of an oracle all-node layout ((node, c) interleaved)."""
    index = {tuple(np.round(c, 9)): k for k, c in enumerate(space.node_coords)}
    nodes = [index[(round(x, 9), round(y, 9))] for x, y in coords]
    return np.array([2 * k + c for k in nodes for c in range(2)])


def vertex_permutation(space, coords):
    """Package pressure dof index for each oracle vertex."""
    index = {tuple(np.round(c, 9)): k for k, c in enumerate(space.mesh.vertices)}
    return np.array([index[(round(x, 9), round(y, 9))] for x, y in coords])


def rng_for(seed):
    return np.random.default_rng(seed)
