"""Shared fixtures: the three shipped configurations and an assembly cache.

Assembled operators at desk scale are expensive (up to ~80 s at N=12), so
they are built once per session and shared across test modules.
"""

from __future__ import annotations

import numpy as np
import pytest

import polykin as pk

DESK_SPECIES = [
    {"name": "light", "mass": 1.0, "levels": [0.0, 1.0], "weights": [1.0, 1.0],
     "density": 1.0},
    {"name": "heavy", "mass": 2.0, "levels": [0.0, 0.5], "weights": [1.0, 2.0],
     "density": 1.0},
]

EQM_SPECIES = [
    {"name": "iso_a", "mass": 1.5, "levels": [0.0, 0.6], "weights": [1.0, 1.0],
     "density": 1.0},
    {"name": "iso_b", "mass": 1.5, "levels": [0.0], "weights": [1.0],
     "density": 0.8},
]

MONO_SPECIES = [
    {"name": "argonlike", "mass": 1.0, "levels": [0.0], "weights": [1.0],
     "density": 1.0},
]


@pytest.fixture(scope="session")
def mono():
    return pk.build_mixture({"species": MONO_SPECIES})


@pytest.fixture(scope="session")
def desk():
    return pk.build_mixture({"species": DESK_SPECIES})


@pytest.fixture(scope="session")
def eqm():
    return pk.build_mixture({"species": EQM_SPECIES})


@pytest.fixture(scope="session")
def hs_mono():
    return pk.hard_sphere(1.0, s=1)


@pytest.fixture(scope="session")
def hs_desk():
    return pk.hard_sphere(np.array([[1.0, 0.8], [0.8, 1.2]]))


@pytest.fixture(scope="session")
def hs_eqm():
    return pk.hard_sphere(np.array([[1.0, 0.9], [0.9, 1.1]]))


@pytest.fixture(scope="session")
def gb_model():
    return pk.grad_bounded(0.8, 0.5)


class OperatorCache:
    """Assemble-once cache keyed by (config name, N)."""

    def __init__(self):
        self._store = {}
        self._mixtures = {
            "mono": (pk.build_mixture({"species": MONO_SPECIES}),
                     pk.hard_sphere(1.0, s=1)),
            "desk": (pk.build_mixture({"species": DESK_SPECIES}),
                     pk.hard_sphere(np.array([[1.0, 0.8], [0.8, 1.2]]))),
            "eqm": (pk.build_mixture({"species": EQM_SPECIES}),
                    pk.hard_sphere(np.array([[1.0, 0.9], [0.9, 1.1]]))),
        }

    def mixture(self, name):
        return self._mixtures[name][0]

    def model(self, name):
        return self._mixtures[name][1]

    def grid(self, name, N):
        return self.get(name, N)[1]

    def get(self, name, N):
        key = (name, N)
        if key not in self._store:
            mix, model = self._mixtures[name]
            grid = pk.build_velocity_grid(5.5, N)
            ops = pk.assemble(mix, model, grid)
            self._store[key] = (mix, grid, ops)
        return self._store[key]


@pytest.fixture(scope="session")
def op_cache():
    return OperatorCache()
