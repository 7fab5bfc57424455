# src/schemas/learning.py

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from src.schemas.bp import BpConfig
from src.schemas.flow import FlowParams
from src.schemas.mcmc import McmcConfig
from src.schemas.saddle import SaddleConfig


# === ENUMS ===
class SweepParameter(str, Enum):
    kappa = "kappa"
    S = "S"


class Method(str, Enum):
    bp = "bp"
    bp_sp = "bp_sp"
    bp_sp4 = "bp_sp4"
    mcmc = "mcmc"
    exact = "exact"


# === ESPECIFICACIÓN DEL BARRIDO ===
class SweepSpec(BaseModel):
    parameter: SweepParameter
    grid: List[float] = Field(..., min_length=1, description="Valores estrictamente crecientes")
    fixed: float = Field(..., description="Valor del otro parámetro")
    dims: int = Field(1, ge=1, le=3)
    methods: List[Method] = Field(
        default_factory=lambda: [Method.bp, Method.bp_sp, Method.bp_sp4]
    )
    bp: BpConfig = Field(default_factory=BpConfig)
    saddle: SaddleConfig = Field(default_factory=SaddleConfig)
    mcmc: McmcConfig = Field(default_factory=McmcConfig)
    threads: int = Field(1, ge=1)

    @field_validator("grid")
    @classmethod
    def validate_grid(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("La malla debe ser estrictamente creciente")
        return v

    @field_validator("methods")
    @classmethod
    def validate_methods(cls, v):
        if not v:
            raise ValueError("Se necesita al menos un método")
        # sin duplicados, conservando el orden
        return list(dict.fromkeys(v))

    @model_validator(mode="after")
    def validate_positive_kappa(self):
        if self.parameter == SweepParameter.kappa and self.grid[0] <= 0:
            raise ValueError("La malla de kappa debe ser positiva")
        if self.parameter == SweepParameter.S and self.fixed <= 0:
            raise ValueError("kappa fijo debe ser positivo")
        return self

    def params_at(self, value: float) -> FlowParams:
        if self.parameter == SweepParameter.kappa:
            return FlowParams(S=self.fixed, kappa=value, dims=self.dims)
        return FlowParams(S=value, kappa=self.fixed, dims=self.dims)


# === RESULTADOS ===
class SweepRow(BaseModel):
    index: int
    param: float
    ln_z_per_particle: Dict[Method, Optional[float]] = Field(default_factory=dict)
    ratio_g4: Optional[float] = None
    bp_residual: Optional[float] = None
    bp_iterations: Optional[int] = None
    seconds: Dict[str, float] = Field(default_factory=dict)
    errors: Dict[str, str] = Field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return all(v is None for v in self.ln_z_per_particle.values())


class ArgmaxResult(BaseModel):
    method: Method
    index: int
    grid_value: float
    refined: float


class SweepResult(BaseModel):
    parameter: SweepParameter
    rows: List[SweepRow]
    argmax: Dict[Method, ArgmaxResult] = Field(default_factory=dict)
