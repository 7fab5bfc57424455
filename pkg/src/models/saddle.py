# src/models/saddle.py

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.models.beliefs import PrunedProblem


@dataclass(frozen=True, eq=False)
class SaddleSolution:
    signs: np.ndarray
    rho: np.ndarray
    log_gamma: np.ndarray
    g_value: float
    logdet_hessian: float
    converged: bool
    residual: float
    iterations: int
    g_sp: float = float("nan")
    g4: float = float("nan")
    ratio: float = float("nan")

    @property
    def n(self) -> int:
        return self.log_gamma.shape[0]

    @property
    def parity(self) -> int:
        """Orientación del contorno: (-1)^(número de componentes negativas)."""
        return -1 if int(np.sum(self.signs < 0)) % 2 else 1


@dataclass(frozen=True, eq=False)
class OrthantTerm:
    signs: np.ndarray
    solution: Optional[SaddleSolution]
    error: Optional[str] = None

    @property
    def converged(self) -> bool:
        return self.solution is not None

    @property
    def parity(self) -> int:
        return -1 if int(np.sum(self.signs < 0)) % 2 else 1

    @property
    def log_contribution(self) -> float:
        """ln de |exp(-G_sp)| del orthante; nan si no tiene máximo interior."""
        return -self.solution.g_sp if self.solution is not None else float("nan")


@dataclass(frozen=True)
class ExhaustiveSummary:
    ln_abs_sum: float
    sign: float
    gap_rest: float
    gap_all_minus: float
    n_solved: int
    n_skipped: int


@dataclass(frozen=True, eq=False)
class CorrectedEstimate:
    ln_z_bp: float
    ln_z_sp: float
    ln_z_sp4: float
    dominant: Optional[SaddleSolution]
    pruned: PrunedProblem
    alternates: Tuple[OrthantTerm, ...] = ()
    exhaustive: Optional[ExhaustiveSummary] = None
    warnings: Tuple[str, ...] = ()

    @property
    def g_sp(self) -> float:
        return self.dominant.g_sp if self.dominant is not None else 0.0

    @property
    def g4(self) -> float:
        return self.dominant.g4 if self.dominant is not None else 0.0

    @property
    def ratio(self) -> float:
        return self.dominant.ratio if self.dominant is not None else 0.0
