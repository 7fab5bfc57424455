# src/routes/common.py

from pathlib import Path
from typing import Optional

import typer

from src.exceptions import InputFormatError
from src.models.snapshot import SnapshotPair, WeightMatrix
from src.schemas.cli import CliSettings, OutputFormat
from src.schemas.flow import FlowParams
from src.services import flow_model
from src.utils import io


def settings(ctx: typer.Context) -> CliSettings:
    return ctx.obj if isinstance(ctx.obj, CliSettings) else CliSettings()


def output_format(ctx: typer.Context, default: OutputFormat) -> OutputFormat:
    return settings(ctx).format or default


def emit(text: str, out: Optional[Path]) -> None:
    """Escribe en el archivo indicado o en la salida estándar."""
    if out is None:
        typer.echo(text, nl=False)
    else:
        out.write_text(text, encoding="utf-8")


def load_snapshots(path: Path, truth: Optional[Path] = None) -> SnapshotPair:
    truth_model = io.read_truth(truth) if truth is not None else None
    with open(path, encoding="utf-8", newline="") as handle:
        return io.read_snapshots(handle, truth_model)


def load_weights(path: Path, kappa: Optional[float], S: Optional[float], dims: Optional[int] = None) -> WeightMatrix:
    """Lee un archivo de matriz, o construye la matriz desde un CSV de instantáneas."""
    if io.is_snapshot_file(path):
        if kappa is None:
            raise InputFormatError("Un CSV de instantáneas requiere --kappa (y --S)", field="kappa")
        snap = load_snapshots(path)
        params = FlowParams(S=S or 0.0, kappa=kappa, dims=dims or snap.dims)
        return flow_model.build_weight_matrix(snap, params)
    with open(path, encoding="utf-8") as handle:
        return io.read_matrix(handle)
