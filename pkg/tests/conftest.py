import os

import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from src.models.snapshot import WeightMatrix
from src.schemas.flow import FlowParams
from src.services import flow_model

hypothesis.settings.register_profile("default", max_examples=25, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


def ones(n: int) -> WeightMatrix:
    return WeightMatrix(np.zeros((n, n)))


def random_matrix(n: int, seed: int, low: float = 0.1, high: float = 1.0) -> WeightMatrix:
    rng = np.random.default_rng(seed)
    return WeightMatrix.from_entries(rng.uniform(low, high, size=(n, n)))


def weight_matrices(min_n: int = 2, max_n: int = 5, low: float = 0.1, high: float = 1.0):
    """Estrategia de matrices de pesos estrictamente positivas."""
    return st.integers(min_n, max_n).flatmap(
        lambda n: st.lists(
            st.floats(low, high, allow_nan=False, allow_infinity=False), min_size=n * n, max_size=n * n
        ).map(lambda values: WeightMatrix.from_entries(np.reshape(values, (n, n))))
    )


@pytest.fixture
def all_ones():
    return ones


@pytest.fixture
def random_weights():
    return random_matrix


@pytest.fixture
def diffusive_snapshots():
    """Par sintético pequeño de difusión pura (kappa = 1, S = 0)."""
    return flow_model.generate_snapshots(6, FlowParams(S=0.0, kappa=1.0), seed=11)
