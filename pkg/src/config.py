# src/config.py

import logging
import os

import numpy as np
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# Cargar variables de entorno (solo se usa FLOWMATCH_THREADS)
load_dotenv()


def _read_default_threads() -> int:
    """Lee el número de hilos por defecto desde el entorno."""
    raw = os.getenv("FLOWMATCH_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        logger.warning("FLOWMATCH_THREADS=%r no es un entero; se usa 1", raw)
        return 1
    if threads < 1:
        logger.warning("FLOWMATCH_THREADS=%r debe ser >= 1; se usa 1", raw)
        return 1
    return threads


DEFAULT_THREADS = _read_default_threads()

# === MODELO DE FLUJO ===
S_SERIES_THRESHOLD = 1e-6  # por debajo se usa la serie de sigma^2 en S
DEFAULT_BOX_SCALE = 1.0

# === ORÁCULOS EXACTOS ===
RYSER_MAX_N = 24
MARGINALS_MAX_N = 12
LOOP_SERIES_MAX_N = 4
BRUTEFORCE_MAX_N = 8
RYSER_LOW_BITS = 12  # columnas enumeradas en tabla; el resto con código Gray

# === BP ===
BP_DAMPING = 0.45
BP_TOL = 1e-10
BP_MAX_ITERS = 100_000
BELIEF_FLOOR = 1e-15
BP_ANDERSON_MEMORY = 8
BP_STATIONARITY_FACTOR = 10  # residuo de estacionariedad admitido: factor · tol
VERTEX_TOL = 1e-6
INIT_MAX_SWEEPS = 200
INIT_NEWTON_SWITCH = 1e-3
INIT_MAX_NEWTON = 100

# === PUNTO DE SILLA ===
POLARIZATION_EPS = 0.01
SADDLE_TOL = 1e-10
SADDLE_DAMPING = 0.5
SADDLE_NEWTON_SWITCH = 1e-3
SADDLE_MAX_FIXED_POINT_ITERS = 2_000
SADDLE_MAX_NEWTON_ITERS = 200
SADDLE_DIVERGENCE_LIMIT = 1e8
EXHAUSTIVE_MAX_VARS = 12

# === MCMC ===
MCMC_TEMPS = 100
MCMC_SWEEPS = 50
MCMC_CHAINS = 16

# === APRENDIZAJE ===
KAPPA_GRID = tuple(float(v) for v in np.geomspace(0.25, 4.0, 13))
S_GRID = tuple(float(v) for v in np.linspace(-2.0, 0.0, 21))

# === SALIDA ===
FLOAT_FORMAT = ".17g"
