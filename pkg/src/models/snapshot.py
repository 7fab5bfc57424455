# src/models/snapshot.py

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.exceptions import FlowModelError
from src.schemas.flow import SnapshotTruth


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SnapshotPair:
    """Posiciones de N partículas en dos fotogramas (N×d cada uno)."""

    x: np.ndarray
    y: np.ndarray
    truth: Optional[SnapshotTruth] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 2 or x.shape != y.shape:
            raise FlowModelError(f"Los fotogramas no coinciden: {x.shape} vs {y.shape}")
        if x.shape[0] < 1:
            raise FlowModelError("Se necesita al menos una partícula")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise FlowModelError("Todas las coordenadas deben ser finitas")
        if self.truth is not None and self.truth.perm is not None and len(self.truth.perm) != x.shape[0]:
            raise FlowModelError("La permutación verdadera no tiene longitud N")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dims(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """
    Matriz N×N de pesos p_i^j guardada en espacio logarítmico.

    `entries` puede tener ceros por underflow; `log_entries` es la fuente de verdad.
    Se permite -inf solo para matrices leídas de archivo (aristas prohibidas).
    """

    log_entries: np.ndarray
    entries: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        log_entries = np.array(self.log_entries, dtype=float)
        if log_entries.ndim != 2 or log_entries.shape[0] != log_entries.shape[1]:
            raise FlowModelError(f"La matriz de pesos debe ser cuadrada, forma {log_entries.shape}")
        if log_entries.shape[0] < 1:
            raise FlowModelError("La matriz de pesos está vacía")
        if np.any(np.isnan(log_entries)) or np.any(np.isposinf(log_entries)):
            raise FlowModelError("Los log-pesos no pueden ser NaN ni +inf")
        object.__setattr__(self, "log_entries", _frozen(log_entries))
        object.__setattr__(self, "entries", _frozen(np.exp(log_entries)))

    @classmethod
    def from_entries(cls, entries) -> "WeightMatrix":
        entries = np.asarray(entries, dtype=float)
        if np.any(entries < 0):
            raise FlowModelError("Los pesos deben ser no negativos")
        with np.errstate(divide="ignore"):
            return cls(np.log(entries))

    @property
    def n(self) -> int:
        return self.log_entries.shape[0]

    @property
    def is_strictly_positive(self) -> bool:
        return bool(np.all(np.isfinite(self.log_entries)))

    def permuted(self, row_perm, col_perm) -> "WeightMatrix":
        """Reetiqueta filas y columnas: nueva[a, b] = vieja[row_perm[a], col_perm[b]]."""
        return WeightMatrix(self.log_entries[np.ix_(row_perm, col_perm)])

    def submatrix(self, rows, cols) -> "WeightMatrix":
        return WeightMatrix(self.log_entries[np.ix_(rows, cols)])
