# src/schemas/cli.py

from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field

from src import config


class OutputFormat(str, Enum):
    csv = "csv"
    json = "json"


class CliSettings(BaseModel):
    """Opciones globales compartidas por todos los subcomandos."""

    seed: int = 0
    threads: int = Field(config.DEFAULT_THREADS, ge=1)
    tol: Optional[float] = Field(None, gt=0)
    format: Optional[OutputFormat] = None
    verbose: int = Field(0, ge=0)
