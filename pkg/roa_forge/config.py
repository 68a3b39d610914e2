import os
from dotenv import load_dotenv

load_dotenv()


def _int_env(name, default):
    raw = os.environ.get(name)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


class Config:
    THREADS = _int_env('ROA_FORGE_THREADS', 1)
    SOLVER = os.environ.get('ROA_FORGE_SOLVER') or 'CLARABEL'
    LOG_LEVEL = os.environ.get('ROA_FORGE_LOG_LEVEL') or 'WARNING'

    # LMI stage
    LAMBDA_GRID = (0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0)
    MARGIN_TOL = 1e-7
    VERIFY_TOL = 1e-9
    ITERATION_CAP = 5000
    SECONDARY_TRACE_CAP = 100.0  # trace(P_j) <= cap * n for j >= 2

    # TS model
    RESIDUAL_SAMPLES = 1000
    RESIDUAL_TOL = 1e-9
    PREMISE_GRID = 64

    # Level sets
    LEVEL_SAMPLES = 200_000

    # Simulation
    DT = 1e-3
    HORIZON = 50.0
    CONV_RADIUS = 1e-4
    DIVERGENCE_RADIUS = 1e6
    VALIDATION_SAMPLES = 500

    # Outputs
    AREA_SAMPLES = 1_000_000
    RENDER_RAYS = 512
    SEED = 0
