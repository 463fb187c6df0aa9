import numpy as np
import pytest

from ris_hst_sim.channel import (
    ScenarioParams,
    draw_drop,
    geometric_angles,
    stochastic_angles,
)
from ris_hst_sim.numerics import RngStream


def small_scenario(**overrides):
    """Fast scenario for unit tests: small RIS, short frame."""
    defaults = dict(ris_side=2, num_tx=2, num_slots=4, num_sinusoids=8)
    defaults.update(overrides)
    return ScenarioParams(**defaults)


def random_realization(seed, k=1, kappa=3.0, angle_seed=None, **overrides):
    """One slot of a randomly drawn drop with stochastic angles."""
    params = small_scenario(rician_k=kappa, angle_mode="stochastic", **overrides)
    angles = stochastic_angles(RngStream(angle_seed if angle_seed is not None else seed, 999))
    drop = draw_drop(params, angles, RngStream(seed, 0))
    return drop.realization(k), params


@pytest.fixture
def table_scenario():
    """Full default scenario (all physical constants at their table values)."""
    return ScenarioParams()


@pytest.fixture
def table_angles(table_scenario):
    return geometric_angles(table_scenario)
