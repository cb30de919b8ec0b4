"""
Shared fixtures for the PABF test suite.
"""

import pytest

from pabf.models import RunSpec, SystemKind, SystemSpec
from pabf.rcgrid import RCGrid


@pytest.fixture
def grid():
    return RCGrid(n1=16, n2=16)


@pytest.fixture
def cosine_spec():
    """Toy system with W(z) = 1 - cos(2 pi z) and no spectator potential."""
    return SystemSpec(kind=SystemKind.TOY, toy_b=0.0, toy_u_amplitude=0.0)


@pytest.fixture
def trimer_spec():
    return SystemSpec(kind=SystemKind.TRIMER)


@pytest.fixture
def small_run_spec():
    """A toy run that finishes in well under a second."""
    return RunSpec.model_validate(
        {
            "grid": {"n1": 16, "n2": 16},
            "dynamics": {"dt": 1e-3, "n_sweeps": 20, "k_sub": 5, "M": 8},
            "estimator": {"n_min": 5},
            "snapshots": {"times": [0.01, 0.05]},
            "seed": 7,
        }
    )
