# src/schemas/saddle.py

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from src import config


class PolarizationMode(str, Enum):
    committed = "committed"  # β > 1 - ε
    literal = "literal"  # β > ε


class G4Terms(str, Enum):
    full = "full"  # cuártico + pares de terceras derivadas
    quartic = "quartic"


class SaddleConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(config.SADDLE_TOL, gt=0)
    damping: float = Field(config.SADDLE_DAMPING, gt=0, le=1)
    newton_switch: float = Field(config.SADDLE_NEWTON_SWITCH, gt=0)
    max_fixed_point_iters: int = Field(config.SADDLE_MAX_FIXED_POINT_ITERS, ge=0)
    max_newton_iters: int = Field(config.SADDLE_MAX_NEWTON_ITERS, ge=1)
    polarization_eps: float = Field(config.POLARIZATION_EPS, gt=0, lt=0.5)
    polarization_mode: PolarizationMode = PolarizationMode.committed
    g4_terms: G4Terms = G4Terms.full
    exhaustive: bool = False
    # Orthantes adicionales a comparar con el todo-+: siempre el todo-−, luego
    # los de 1..compare_flips signos invertidos y compare_orthants aleatorios distintos
    compare_orthants: int = Field(0, ge=0, description="Número de orthantes aleatorios a evaluar")
    compare_flips: int = Field(0, ge=0, description="Máximo de signos invertidos a enumerar")
    compare_seed: int = 0
    threads: int = Field(1, ge=1)
