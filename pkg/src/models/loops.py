# src/models/loops.py

from dataclasses import dataclass
from typing import FrozenSet, Tuple


@dataclass(frozen=True)
class GeneralizedLoop:
    """Subgrafo de K_{N,N} con todos sus vértices de grado >= 2."""

    edges: FrozenSet[Tuple[int, int]]
    left_degrees: Tuple[int, ...]
    right_degrees: Tuple[int, ...]
    r: float


@dataclass(frozen=True)
class LoopSeries:
    z: float
    loops: Tuple[GeneralizedLoop, ...]


@dataclass(frozen=True)
class BoundViolation:
    """Nodo (fila o columna) cuyo factor |ψ| supera (q-1)^(1-q/2)."""

    side: str
    node: int
    degree: int
    psi: float
    bound: float
