import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sdelab import SolverConfig, ZeroDrift, LinearDrift, identity_diffusion, simulate


@pytest.fixture(scope="session")
def brownian_ensemble():
    cfg = SolverConfig(T=1.0, n_steps=200, n_paths=4000, master_seed=7)
    return simulate(identity_diffusion(2), ZeroDrift(), cfg)


@pytest.fixture(scope="session")
def ou_ensemble():
    cfg = SolverConfig(T=1.0, n_steps=500, n_paths=8000, master_seed=11)
    return simulate(identity_diffusion(2), LinearDrift(1.0), cfg)
