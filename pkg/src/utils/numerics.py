# src/utils/numerics.py

from typing import Tuple

import numpy as np
from scipy.special import gammaln, logsumexp


def log_factorial(n: int) -> float:
    return float(gammaln(n + 1))


def signed_logsumexp(log_abs: np.ndarray, signs: np.ndarray) -> Tuple[float, float]:
    """Devuelve (ln|Σ s·e^a|, signo) sin salir del espacio logarítmico."""
    log_abs = np.asarray(log_abs, dtype=float)
    if log_abs.size == 0:
        return -np.inf, 0.0
    value, sign = logsumexp(log_abs, b=np.asarray(signs, dtype=float), return_sign=True)
    return float(value), float(sign)


def sinkhorn_log_scaling(
    log_entries: np.ndarray, max_iters: int = 1_000, tol: float = 1e-12
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Escalado de Sinkhorn en espacio logarítmico.

    Retorna (log_r, log_c) tales que exp(log_entries + log_r[:, None] + log_c[None, :])
    es (aproximadamente) doblemente estocástica.
    """
    n = log_entries.shape[0]
    log_r = np.zeros(n)
    log_c = np.zeros(n)
    for _ in range(max_iters):
        log_r = -logsumexp(log_entries + log_c[None, :], axis=1)
        log_c = -logsumexp(log_entries + log_r[:, None], axis=0)
        row_sums = np.exp(logsumexp(log_entries + log_r[:, None] + log_c[None, :], axis=1))
        if np.max(np.abs(row_sums - 1.0)) < tol:
            break
    return log_r, log_c


def excluded_sums(beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Σ_{k≠j} β_ik y Σ_{k≠i} β_kj para cada entrada.

    Para la entrada dominante (> 1/2) se suman las demás en vez de restar,
    así el complemento conserva precisión relativa cuando β → 1.
    """
    dominant = beta > 0.5
    rest = np.where(dominant, 0.0, beta)
    row_rest = np.where(dominant, rest.sum(axis=1, keepdims=True), beta.sum(axis=1, keepdims=True) - beta)
    col_rest = np.where(dominant, rest.sum(axis=0, keepdims=True), beta.sum(axis=0, keepdims=True) - beta)
    return row_rest, col_rest
