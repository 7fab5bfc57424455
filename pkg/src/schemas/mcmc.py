# src/schemas/mcmc.py

from enum import Enum
from typing import List

from pydantic import BaseModel, ConfigDict, Field

from src import config


class MoveKind(str, Enum):
    transposition = "transposition"
    three_cycle = "three-cycle"


class LadderKind(str, Enum):
    geometric = "geometric"
    linear = "linear"


class McmcConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_temps: int = Field(config.MCMC_TEMPS, ge=2, description="Temperaturas incluyendo t=0 y t=1")
    sweeps_per_temp: int = Field(config.MCMC_SWEEPS, ge=1)
    n_chains: int = Field(config.MCMC_CHAINS, ge=1)
    seed: int = 0
    move: MoveKind = MoveKind.transposition
    ladder: LadderKind = LadderKind.geometric
    threads: int = Field(1, ge=1)


class McmcResult(BaseModel):
    ln_z_mean: float
    ln_z_stderr: float = Field(..., ge=0)
    acceptance_rates: List[float] = Field(..., description="Tasa de aceptación por temperatura")
    ess_estimate: float = Field(..., ge=0)
    chain_log_weights: List[float] = Field(default_factory=list)
    seconds: float = 0.0
