# src/schemas/flow.py

import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


# === PARÁMETROS DEL FLUJO ===
class FlowParams(BaseModel):
    """Gradiente de velocidad S y difusividad kappa (U = 0, Δ = 1)."""

    model_config = ConfigDict(frozen=True)

    S: float = Field(0.0, description="Gradiente de velocidad (adimensional tras Δ=1)")
    kappa: float = Field(..., gt=0, description="Difusividad, debe ser positiva")
    dims: int = Field(1, ge=1, le=3, description="Dimensión espacial")

    @field_validator("S", "kappa")
    @classmethod
    def validate_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("Los parámetros del flujo deben ser finitos")
        return v


# === ARCHIVO DE VERDAD (sidecar JSON) ===
class SnapshotTruth(BaseModel):
    S: float
    kappa: float = Field(..., gt=0)
    dims: int = Field(1, ge=1, le=3)
    perm: Optional[List[int]] = Field(None, description="perm[i] = índice en y de la pareja de x_i")

    @field_validator("perm")
    @classmethod
    def validate_perm(cls, v):
        if v is not None and sorted(v) != list(range(len(v))):
            raise ValueError("perm debe ser una permutación de 0..N-1")
        return v

    def params(self) -> FlowParams:
        return FlowParams(S=self.S, kappa=self.kappa, dims=self.dims)
