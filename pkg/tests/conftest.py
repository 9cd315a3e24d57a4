"""Shared builders for the test suite."""

import numpy as np
import pytest

from agsim import (
    AircraftState,
    LmpConfig,
    SystemParams,
    gs_antenna_position,
    make_world,
    sample_lmp_reflectors,
    sample_reflector_map,
    sample_scenario,
    SCENARIOS,
)


@pytest.fixture
def params():
    return SystemParams()


def empty_map(rng=None):
    rng = rng or np.random.default_rng(0)
    return sample_reflector_map(0.0, rng)


def los_only_world(params, states):
    """World with no ground reflections and no lateral reflectors."""
    return make_world(params, states, empty_map(), [])


def sampled_world(scenario_name, k, seed, params=None, coverage=0.5,
                  lmp: LmpConfig | None = None):
    """Full default world drawn like one harness trial."""
    params = params or SystemParams()
    rng = np.random.default_rng(seed)
    refl_map = sample_reflector_map(coverage, rng)
    states = sample_scenario(SCENARIOS[scenario_name], k, rng)
    reflectors = sample_lmp_reflectors(SCENARIOS[scenario_name],
                                       lmp or LmpConfig(), rng)
    return make_world(params, states, refl_map, reflectors)


def static_state(position, aircraft_id=0):
    return AircraftState(np.asarray(position, dtype=float), np.zeros(3), aircraft_id)


def gs_position():
    return gs_antenna_position()
