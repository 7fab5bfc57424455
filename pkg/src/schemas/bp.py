# src/schemas/bp.py

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from src import config


class InitMode(str, Enum):
    convexified = "convexified"
    sinkhorn = "sinkhorn"


class BpConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    damping: float = Field(config.BP_DAMPING, ge=0, lt=1, description="λ de amortiguamiento")
    tol: float = Field(config.BP_TOL, gt=0, description="Tolerancia en max |Δβ|")
    max_iters: int = Field(config.BP_MAX_ITERS, ge=1)
    init_mode: InitMode = InitMode.convexified
    # Diagnóstico: perturba la inicialización para buscar otros mínimos de Bethe
    restart_seed: Optional[int] = None
    track_energy: bool = False
    # 0 desactiva la extrapolación de Anderson (iteración simple)
    anderson_memory: int = Field(config.BP_ANDERSON_MEMORY, ge=0)
