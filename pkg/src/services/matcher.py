# src/services/matcher.py

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.models.matching import MatchResult
from src.models.snapshot import WeightMatrix

logger = logging.getLogger(__name__)

TIE_RTOL = 1e-12


def _finite_scores(log_entries: np.ndarray) -> np.ndarray:
    """Sustituye -inf por una penalización finita mayor que cualquier diferencia posible."""
    finite = log_entries[np.isfinite(log_entries)]
    if finite.size == 0:
        return np.zeros_like(log_entries)
    spread = float(finite.max() - finite.min()) + 1.0
    floor = float(finite.min()) - spread * (log_entries.shape[0] + 1)
    return np.where(np.isfinite(log_entries), log_entries, floor)


def _assignment_value(scores: np.ndarray) -> float:
    if scores.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(scores, maximize=True)
    return float(scores[rows, cols].sum())


def _is_tie(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(1.0, abs(a), abs(b))


def _has_alternative_optimum(scores: np.ndarray, perm: np.ndarray, best: float, penalty: float) -> bool:
    """¿Sigue existiendo un óptimo si se prohíbe alguna arista de la asignación?"""
    for i, j in enumerate(perm):
        forbidden = scores.copy()
        forbidden[i, j] = penalty
        if _is_tie(_assignment_value(forbidden), best):
            return True
    return False


def _lexicographic(scores: np.ndarray, best: float) -> np.ndarray:
    """Fija fila a fila la menor columna compatible con el valor óptimo."""
    n = scores.shape[0]
    perm = np.empty(n, dtype=int)
    free_cols = list(range(n))
    fixed = 0.0
    for i in range(n):
        for j in free_cols:
            rest_cols = [c for c in free_cols if c != j]
            rest = _assignment_value(scores[np.ix_(range(i + 1, n), rest_cols)])
            if _is_tie(fixed + scores[i, j] + rest, best):
                perm[i] = j
                fixed += scores[i, j]
                free_cols.remove(j)
                break
        else:
            raise RuntimeError("No se encontró una columna compatible con el óptimo")
    return perm


def max_weight_matching(w: WeightMatrix) -> MatchResult:
    """
    Permutación que maximiza Σ_i ln p_{i,π(i)} (asignación exacta de SciPy).

    Si hay empates se devuelve la permutación lexicográficamente menor.
    """
    scores = _finite_scores(w.log_entries)
    rows, cols = linear_sum_assignment(scores, maximize=True)
    perm = cols[np.argsort(rows)]
    best = float(scores[np.arange(w.n), perm].sum())
    tie_broken = False
    if w.n > 1:
        penalty = float(scores.min()) - (float(scores.max() - scores.min()) + 1.0) * (w.n + 1)
        if _has_alternative_optimum(scores, perm, best, penalty):
            perm = _lexicographic(scores, best)
            tie_broken = True
            logger.debug("Empate en la asignación óptima; se usa el orden lexicográfico")
    log_weight = float(w.log_entries[np.arange(w.n), perm].sum())
    return MatchResult(perm=perm, log_weight=log_weight, tie_broken=tie_broken)


def pair_distances(x: np.ndarray, y: np.ndarray, perm: Sequence[int], drift: Optional[float] = None) -> np.ndarray:
    """Distancia euclídea entre y_{π(i)} y x_i (o e^S·x_i si se da el factor de deriva)."""
    scale = 1.0 if drift is None else drift
    return np.linalg.norm(y[np.asarray(perm)] - scale * x, axis=1)
