# src/models/matching.py

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class MatchResult:
    perm: np.ndarray
    log_weight: float
    tie_broken: bool = False
