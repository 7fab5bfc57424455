# src/routes/experiments.py

import io as text_io
import logging
import math
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from src import config
from src.exceptions import FlowMatchError
from src.routes.common import emit, load_snapshots, load_weights, output_format, settings
from src.routes.estimation import bp_config, render_rows
from src.schemas.cli import OutputFormat
from src.schemas.learning import Method, SweepParameter, SweepSpec
from src.schemas.mcmc import McmcConfig
from src.schemas.saddle import SaddleConfig
from src.services import bp_solver, learning, mcmc_estimator, oracle, saddle_corrector
from src.utils import io

logger = logging.getLogger(__name__)

# Router de experimentos: barridos de aprendizaje y comparación de estimadores
experiment_router = typer.Typer()


def parse_grid(text: Optional[str], parameter: SweepParameter) -> List[float]:
    if not text:
        return learning.default_grid(parameter)
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise typer.BadParameter(f"Malla inválida: {text}", param_hint="--grid") from exc


def parse_methods(text: str) -> List[Method]:
    try:
        return [Method(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        valid = ", ".join(m.value for m in Method)
        raise typer.BadParameter(f"Métodos válidos: {valid}", param_hint="--methods") from exc


# === BARRIDO DE PARÁMETROS ===
@experiment_router.command("sweep")
def sweep(
    ctx: typer.Context,
    snapshots: Path = typer.Argument(..., exists=True, dir_okay=False, help="CSV de instantáneas"),
    param: SweepParameter = typer.Option(SweepParameter.kappa, "--param"),
    grid: Optional[str] = typer.Option(None, "--grid", help="Valores separados por comas"),
    fixed: Optional[float] = typer.Option(None, "--fixed", help="Valor del otro parámetro"),
    methods: str = typer.Option("bp,bp_sp,bp_sp4", "--methods"),
    chains: int = typer.Option(config.MCMC_CHAINS, "--chains", min=1),
    temps: int = typer.Option(config.MCMC_TEMPS, "--temps", min=2),
    exact_optimum: bool = typer.Option(False, "--exact-optimum/--no-exact-optimum"),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """Barre kappa o S y localiza el máximo de ln Z por partícula de cada método."""
    snap = load_snapshots(snapshots)
    cli = settings(ctx)
    values = parse_grid(grid, param)
    if fixed is None:
        fixed = 0.0 if param == SweepParameter.kappa else 1.0
    spec = SweepSpec(
        parameter=param,
        grid=values,
        fixed=fixed,
        dims=snap.dims,
        methods=parse_methods(methods),
        bp=bp_config(ctx),
        saddle=SaddleConfig(compare_seed=cli.seed),
        mcmc=McmcConfig(n_temps=temps, n_chains=chains, seed=cli.seed),
        threads=cli.threads,
    )
    result = learning.run_sweep(snap, spec)
    for method, best in result.argmax.items():
        logger.info("%s: máximo en %s=%g (refinado %g)", method.value, param.value, best.grid_value, best.refined)

    optimum = None
    if exact_optimum:
        optimum = learning.exact_likelihood_optimum(snap, param, (values[0], values[-1]), fixed)

    if output_format(ctx, OutputFormat.csv) == OutputFormat.json:
        report = result.model_dump(mode="json")
        if optimum is not None:
            report["exact_optimum"] = optimum
        emit(io.dumps_json(report), out)
        return
    if optimum is not None:
        logger.warning("Óptimo exacto de %s: %s", param.value, io.format_float(optimum))
    buffer = text_io.StringIO()
    io.write_sweep_csv(result, buffer)
    emit(buffer.getvalue(), out)


# === COMPARACIÓN DE ESTIMADORES ===
def compare_report(ctx: typer.Context, input: Path, kappa, S, with_mcmc: bool) -> Dict[str, Any]:
    w = load_weights(input, kappa, S)
    cli = settings(ctx)
    report: Dict[str, Any] = {"n": w.n}
    seconds: Dict[str, float] = {}

    started = time.perf_counter()
    beliefs = bp_solver.solve(w, bp_config(ctx))
    seconds["bp"] = time.perf_counter() - started
    report["lnZ_bp"] = beliefs.ln_z_bp

    started = time.perf_counter()
    estimate = saddle_corrector.corrected_estimate(beliefs, w, SaddleConfig(threads=cli.threads), bp_config(ctx))
    seconds["sp"] = time.perf_counter() - started
    report["lnZ_sp"] = estimate.ln_z_sp
    report["lnZ_sp4"] = estimate.ln_z_sp4
    report["ratio_g4"] = estimate.ratio

    if with_mcmc:
        result = mcmc_estimator.estimate(w, McmcConfig(seed=cli.seed, threads=cli.threads))
        seconds["mcmc"] = result.seconds
        report["lnZ_mcmc"] = result.ln_z_mean
        report["lnZ_mcmc_stderr"] = result.ln_z_stderr

    if w.n <= config.RYSER_MAX_N:
        started = time.perf_counter()
        try:
            report["lnZ_exact"] = oracle.permanent_exact(w, threads=cli.threads)
        except FlowMatchError as exc:
            logger.warning("Permanente exacto no disponible: %s", exc)
        seconds["exact"] = time.perf_counter() - started

    report["node_bound_violations"] = len(oracle.node_bound_violations(beliefs))
    if w.n <= config.LOOP_SERIES_MAX_N:
        series = oracle.loop_series_exact(beliefs)
        report["loop_z"] = series.z
        report["loop_bound_violations"] = len(oracle.loop_bound_violations(beliefs, series))
    for name, value in seconds.items():
        report[f"seconds_{name}"] = value
    return report


@experiment_router.command("compare")
def compare(
    ctx: typer.Context,
    input: Path = typer.Argument(..., exists=True, dir_okay=False),
    kappa: Optional[float] = typer.Option(None, "--kappa"),
    S: Optional[float] = typer.Option(None, "--S"),
    with_mcmc: bool = typer.Option(True, "--mcmc/--no-mcmc"),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """Compara BP, BP+SP, BP+SP+G4, MCMC y el valor exacto en una instancia."""
    report = compare_report(ctx, input, kappa, S, with_mcmc)
    fmt = settings(ctx).format
    if fmt == OutputFormat.json:
        emit(io.dumps_json(report), out)
        return
    if fmt == OutputFormat.csv or out is not None:
        emit(render_rows([report]), out)
        return
    table = Table(title=f"Estimadores de ln Z (n={report['n']})")
    table.add_column("Magnitud")
    table.add_column("Valor", justify="right")
    for key, value in report.items():
        if isinstance(value, float):
            shown = "nan" if math.isnan(value) else f"{value:.10g}"
        else:
            shown = str(value)
        table.add_row(key, shown)
    Console().print(table)
