# src/models/beliefs.py

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src import config
from src.models.snapshot import WeightMatrix
from src.utils.numerics import excluded_sums


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Punto fijo de BP: creencias β, potenciales químicos (en log) y F_BP."""

    beta: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray
    f_bp: float
    residual: float
    iterations: int
    clamped: bool = False
    energy_trace: Tuple[float, ...] = ()

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    @property
    def u(self) -> np.ndarray:
        return np.exp(self.log_u)

    @property
    def v(self) -> np.ndarray:
        return np.exp(self.log_v)

    @property
    def ln_z_bp(self) -> float:
        return -self.f_bp

    @property
    def is_vertex(self) -> bool:
        """Creencias exactamente 0/1: emparejamiento perfecto."""
        return bool(np.all((self.beta == 0.0) | (self.beta == 1.0)))

    def clipped_beta(self) -> np.ndarray:
        return np.clip(self.beta, config.BELIEF_FLOOR, 1.0 - config.BELIEF_FLOOR)

    def log_gamma(self) -> np.ndarray:
        """ln γ con γ = β/(1-β)."""
        beta = self.clipped_beta()
        # 1 - β como suma del resto de la fila y la columna cuando β > 1/2
        row_rest, col_rest = excluded_sums(self.beta)
        complement = np.where(self.beta > 0.5, 0.5 * (row_rest + col_rest), 1.0 - beta)
        complement = np.clip(complement, config.BELIEF_FLOOR, 1.0)
        return np.log(beta) - np.log(complement)


@dataclass(frozen=True, eq=False)
class PrunedProblem:
    """Problema reducido tras comprometer las aristas polarizadas."""

    reduced: Optional[WeightMatrix]
    committed: Tuple[Tuple[int, int], ...]
    row_index: np.ndarray
    col_index: np.ndarray
    committed_log_weight: float

    @property
    def is_empty(self) -> bool:
        return self.reduced is None
