# src/routes/snapshots.py

import io as text_io
from pathlib import Path
from typing import Optional

import typer

from src import config
from src.routes.common import emit, load_snapshots, settings
from src.schemas.flow import FlowParams
from src.services import flow_model
from src.utils import io

# Router de instantáneas y matrices de pesos
snapshot_router = typer.Typer()


# === GENERAR INSTANTÁNEAS SINTÉTICAS ===
@snapshot_router.command("generate")
def generate(
    ctx: typer.Context,
    n: int = typer.Option(..., "-n", "--n", min=1, help="Número de partículas"),
    kappa: float = typer.Option(1.0, "--kappa", help="Difusividad (> 0)"),
    S: float = typer.Option(0.0, "--S", help="Gradiente de velocidad"),
    dims: int = typer.Option(1, "--dims", min=1, max=3),
    box_scale: float = typer.Option(config.DEFAULT_BOX_SCALE, "--box-scale"),
    out: Path = typer.Option(Path("snapshots.csv"), "--out", help="CSV de salida"),
    truth: Optional[Path] = typer.Option(None, "--truth", help="JSON con la verdad (por defecto <out>.truth.json)"),
):
    """Genera un par de fotogramas sintéticos y su archivo de verdad."""
    params = FlowParams(S=S, kappa=kappa, dims=dims)
    snap = flow_model.generate_snapshots(n, params, box_scale=box_scale, seed=settings(ctx).seed)
    with open(out, "w", encoding="utf-8", newline="") as handle:
        io.write_snapshots(snap, handle)
    truth_path = truth or out.with_suffix(".truth.json")
    with open(truth_path, "w", encoding="utf-8") as handle:
        io.write_truth(snap.truth, handle)


# === MATRIZ DE PESOS ===
@snapshot_router.command("weights")
def weights(
    snapshots: Path = typer.Argument(..., exists=True, dir_okay=False, help="CSV de instantáneas"),
    kappa: float = typer.Option(..., "--kappa"),
    S: float = typer.Option(0.0, "--S"),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """Escribe la matriz de log-pesos (cabecera n y n filas)."""
    snap = load_snapshots(snapshots)
    w = flow_model.build_weight_matrix(snap, FlowParams(S=S, kappa=kappa, dims=snap.dims))
    buffer = text_io.StringIO()
    io.write_matrix(w, buffer)
    emit(buffer.getvalue(), out)
