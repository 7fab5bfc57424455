# src/services/flow_model.py

import logging
from typing import NamedTuple

import numpy as np

from src import config
from src.exceptions import FlowModelError
from src.models.snapshot import SnapshotPair, WeightMatrix
from src.schemas.flow import FlowParams, SnapshotTruth

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


class PairWeight(NamedTuple):
    value: float
    log_value: float


def transition_variance(params: FlowParams) -> float:
    """
    Varianza por eje del propagador: σ² = κ(e^{2S} - 1)/(2S).

    Para |S| < 1e-6 se usa la serie κ(1 + S + 2S²/3), cuyo límite en S = 0 es κ.
    """
    S = params.S
    if abs(S) < config.S_SERIES_THRESHOLD:
        return params.kappa * (1.0 + S + (2.0 / 3.0) * S * S)
    return params.kappa * float(np.expm1(2.0 * S)) / (2.0 * S)


def _log_density(diff: np.ndarray, variance: float) -> np.ndarray:
    """Log-densidad gaussiana sumada sobre el último eje (producto de pesos 1-D)."""
    d = diff.shape[-1]
    return -np.sum(diff * diff, axis=-1) / (2.0 * variance) - 0.5 * d * (LOG_2PI + np.log(variance))


def pairwise_weight(x, y, params: FlowParams) -> PairWeight:
    """
    Peso de transición entre una partícula en x (fotograma 0) y otra en y (fotograma 1).

    Gaussiana por eje con media e^S·x y varianza σ²; en d dimensiones es el
    producto de los pesos 1-D. Retorna la forma lineal y la logarítmica.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise FlowModelError(f"Dimensiones incompatibles: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FlowModelError("Las posiciones deben ser finitas")
    variance = transition_variance(params)
    if not np.isfinite(variance) or variance <= 0:
        raise FlowModelError(f"Varianza de transición inválida: {variance}")
    log_value = float(_log_density(y - np.exp(params.S) * x, variance))
    return PairWeight(value=float(np.exp(log_value)), log_value=log_value)


def build_weight_matrix(snap: SnapshotPair, params: FlowParams) -> WeightMatrix:
    """Construye p_i^j = peso(x_i, y^j) directamente en espacio logarítmico."""
    if snap.dims != params.dims:
        raise FlowModelError(
            f"La instantánea tiene {snap.dims} dimensiones y los parámetros {params.dims}"
        )
    variance = transition_variance(params)
    diff = snap.y[None, :, :] - np.exp(params.S) * snap.x[:, None, :]
    log_entries = _log_density(diff, variance)
    if not np.all(np.isfinite(log_entries)):
        raise FlowModelError("Log-pesos no finitos; revise las posiciones y los parámetros")
    return WeightMatrix(log_entries)


def generate_snapshots(
    n: int,
    params: FlowParams,
    box_scale: float = config.DEFAULT_BOX_SCALE,
    seed: int = 0,
) -> SnapshotPair:
    """
    Genera un par sintético de fotogramas.

    x_i ~ U[0, box_scale·n^{1/d})^d, y = e^S x + ruido gaussiano de varianza σ²,
    y luego se baraja y. truth.perm[i] es el índice en y de la pareja de x_i.
    """
    if n < 1:
        raise FlowModelError("n debe ser >= 1")
    if box_scale <= 0:
        raise FlowModelError("box_scale debe ser positivo")
    rng = np.random.default_rng(seed)
    d = params.dims
    side = box_scale * n ** (1.0 / d)
    x = rng.uniform(0.0, side, size=(n, d))
    sigma = np.sqrt(transition_variance(params))
    y_paired = np.exp(params.S) * x + rng.normal(0.0, sigma, size=(n, d))
    order = rng.permutation(n)
    y = y_paired[order]
    perm = np.argsort(order)
    logger.debug("Generadas %d partículas (S=%g, kappa=%g, d=%d)", n, params.S, params.kappa, d)
    truth = SnapshotTruth(S=params.S, kappa=params.kappa, dims=d, perm=[int(k) for k in perm])
    return SnapshotPair(x=x, y=y, truth=truth)
