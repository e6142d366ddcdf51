"""Configuration and constants for the square-function laboratory.

Runtime settings come from ``.env`` and only affect logging and worker
counts. Everything that changes a number in a report lives in the JSON
experiment config; the constants below are its defaults.
"""

import os
from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("LAB_LOG_LEVEL", "INFO").upper()

threads_str = os.getenv("LAB_THREADS", "1").strip()
DEFAULT_THREADS = int(threads_str) if threads_str.isdigit() and int(threads_str) > 0 else 1

VERSION = "1.0.0"
SCHEMA_VERSION = 1
PRECISION = "float64"

# Exit codes
EXIT_OK, EXIT_CONFIG_ERROR, EXIT_HARD_FAILURE = range(3)

# ── Geometry ──────────────────────────────────────────────
DEFAULT_PERIOD = 32.0
MIN_GRID_SIZE = 8
# Smallest half-line cell as a fraction of the right endpoint.
HALFLINE_GRADING = 1e-3
# Decay checks keep radii below this fraction of T (torus) or R (half-line).
RADIUS_CAP_FRACTION = 0.25

# ── Spectral models ───────────────────────────────────────
MAX_DENSE_SIZE = 2048
SYMMETRY_TOL = 1e-8
NEGATIVE_EIGEN_TOL = 1e-10
ZERO_MODE_TOL = 1e-10

# ── Multipliers ───────────────────────────────────────────
EVEN_TOL = 1e-12
MAX_CERTIFIED_ORDER = 6
TAIL_SEMINORM_LIMIT = 1e6
PARTITION_TOL = 1e-8
INTERPOLATION_BUDGET = 1e-9

# ── Scale ladder ──────────────────────────────────────────
DEFAULT_J_MIN = -4
DEFAULT_J_MAX = 8
DEFAULT_SAMPLES_PER_OCTAVE = 4
TAIL_ENERGY_BUDGET = 1e-3

# ── Weights ───────────────────────────────────────────────
DIVERGENCE_GROWTH = 1.5
CRITICAL_INDEX_RESOLUTION = 0.05
DEFAULT_P_GRID = [1.05, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0]

# ── Equivalence lab ───────────────────────────────────────
DEFAULT_P_SET = [0.5, 1.0, 2.0, 4.0]
SUBMEAN_X_POINTS = 8
SUBMEAN_T_SAMPLES = 2
SUBMEAN_J_PAIRS = [(0, 0), (1, 0), (1, 2)]
POINTWISE_SLACK = 1e-9
SPREAD_LIMIT = 10.0
DRIFT_LIMIT = 0.20

# Closed-form check tolerances
G_IDENTITY_TOL = 0.02
S_IDENTITY_TOL = 0.02
GSTAR_IDENTITY_TOL = 0.03
