import json
import os
import sys

# Keep runtime settings deterministic regardless of a developer's .env
os.environ.setdefault("LAB_LOG_LEVEL", "WARNING")
os.environ.setdefault("LAB_THREADS", "1")

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from equivalence_lab import LabSetup
from geometry import make_grid
from multipliers import make_profile
from spectral_models import build_operator
from squarefns import make_ladder


@pytest.fixture(scope="session")
def torus_grid():
    return make_grid("line-periodic", 16, period=16.0)


@pytest.fixture(scope="session")
def torus_model(torus_grid):
    return build_operator(torus_grid, "laplacian")


@pytest.fixture(scope="session")
def halfline_grid():
    return make_grid("halfline", 32, right_endpoint=8.0, bessel_lambda=0.5)


@pytest.fixture(scope="session")
def bessel_model(halfline_grid):
    return build_operator(halfline_grid, "bessel")


@pytest.fixture(scope="session")
def lp_heat():
    return make_profile("lp-heat")


@pytest.fixture(scope="session")
def heat():
    return make_profile("heat")


@pytest.fixture(scope="session")
def small_ladder():
    return make_ladder(-3, 5, 2)


@pytest.fixture(scope="session")
def torus_setup(torus_model, lp_heat, small_ladder):
    return LabSetup(models=(torus_model, torus_model), profiles=(lp_heat, lp_heat), ladder=small_ladder)


@pytest.fixture
def minimal_config(tmp_path):
    """Write a small identities-only config and return its path."""
    def write(**sections):
        payload = {
            "schema_version": 1,
            "models": [{"model": "laplacian", "size": 16, "period": 16.0},
                       {"model": "laplacian", "size": 16, "period": 16.0}],
            "profiles": {"primary": ["lp-heat", "lp-heat"]},
            "ladder": {"j_min": -3, "j_max": 5, "samples_per_octave": 2},
            "corpus": {"families": ["single-modes", "band-limited"], "count": 2, "seed": 5},
            "checks": {"identities": True},
            "output": {"dir": str(tmp_path / "out"), "formats": ["json", "csv"]},
        }
        payload.update(sections)
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path
    return write
