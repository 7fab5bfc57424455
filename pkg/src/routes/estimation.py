# src/routes/estimation.py

import csv
import io as text_io
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer

from src.models.saddle import CorrectedEstimate, SaddleSolution
from src.routes.common import emit, load_snapshots, load_weights, output_format, settings
from src.schemas.bp import BpConfig, InitMode
from src.schemas.cli import OutputFormat
from src.schemas.mcmc import McmcConfig, MoveKind
from src.schemas.saddle import G4Terms, PolarizationMode, SaddleConfig
from src.services import bp_solver, matcher, mcmc_estimator, oracle, saddle_corrector
from src.utils import io

# Router de estimadores sobre una sola instancia
estimation_router = typer.Typer()


def render_rows(rows: List[Dict[str, Any]]) -> str:
    """CSV con las claves de la primera fila como cabecera."""
    buffer = text_io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if rows:
        writer.writerow(list(rows[0]))
        for row in rows:
            writer.writerow(
                [io.format_float(v) if isinstance(v, float) else ("" if v is None else v) for v in row.values()]
            )
    return buffer.getvalue()


def render(ctx: typer.Context, report: Dict[str, Any], rows: Optional[List[Dict[str, Any]]] = None) -> str:
    if output_format(ctx, OutputFormat.json) == OutputFormat.csv:
        scalars = {k: v for k, v in report.items() if isinstance(v, (int, float, str, bool)) or v is None}
        return render_rows(rows if rows is not None else [scalars])
    return io.dumps_json(report)


def bp_config(ctx: typer.Context, damping: Optional[float] = None, init: Optional[InitMode] = None) -> BpConfig:
    values: Dict[str, Any] = {}
    if settings(ctx).tol is not None:
        values["tol"] = settings(ctx).tol
    if damping is not None:
        values["damping"] = damping
    if init is not None:
        values["init_mode"] = init
    return BpConfig(**values)


def _solution_report(sol: Optional[SaddleSolution]) -> Optional[Dict[str, Any]]:
    if sol is None:
        return None
    return {
        "signs": sol.signs,
        "rho": sol.rho,
        "g_value": sol.g_value,
        "logdet_hessian": sol.logdet_hessian,
        "g_sp": sol.g_sp,
        "g4": sol.g4,
        "ratio": sol.ratio,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
    }


def corrected_report(estimate: CorrectedEstimate) -> Dict[str, Any]:
    report: Dict[str, Any] = {
        "ln_z_bp": estimate.ln_z_bp,
        "ln_z_sp": estimate.ln_z_sp,
        "ln_z_sp4": estimate.ln_z_sp4,
        "g_sp": estimate.g_sp,
        "g4": estimate.g4,
        "ratio": estimate.ratio,
        "committed": [list(edge) for edge in estimate.pruned.committed],
        "reduced_n": 0 if estimate.pruned.is_empty else estimate.pruned.reduced.n,
        "dominant": _solution_report(estimate.dominant),
        "warnings": list(estimate.warnings),
    }
    if estimate.alternates:
        report["alternates"] = [
            {
                "signs": term.signs,
                "parity": term.parity,
                "log_contribution": term.log_contribution,
                "g4": term.solution.g4 if term.solution is not None else math.nan,
                "converged": term.converged,
                "error": term.error,
            }
            for term in estimate.alternates
        ]
    if estimate.exhaustive is not None:
        summary = estimate.exhaustive
        report["orthant_sum"] = {
            "ln_abs_sum": summary.ln_abs_sum,
            "sign": summary.sign,
            "gap_rest": summary.gap_rest,
            "gap_all_minus": summary.gap_all_minus,
            "n_solved": summary.n_solved,
            "n_skipped": summary.n_skipped,
        }
    return report


# === BP ===
@estimation_router.command("bp")
def bp(
    ctx: typer.Context,
    input: Path = typer.Argument(..., exists=True, dir_okay=False, help="Matriz o CSV de instantáneas"),
    kappa: Optional[float] = typer.Option(None, "--kappa"),
    S: Optional[float] = typer.Option(None, "--S"),
    damping: Optional[float] = typer.Option(None, "--damping"),
    init: Optional[InitMode] = typer.Option(None, "--init"),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """Resuelve BP y escribe las creencias."""
    w = load_weights(input, kappa, S)
    state = bp_solver.solve(w, bp_config(ctx, damping, init))
    report = io.belief_to_dict(state)
    rows = [{f"j{j}": float(v) for j, v in enumerate(row)} for row in state.beta]
    emit(render(ctx, report, rows), out)


# === CORRECCIÓN DE PUNTO DE SILLA ===
@estimation_router.command("correct")
def correct(
    ctx: typer.Context,
    beliefs: Path = typer.Option(..., "--beliefs", exists=True, dir_okay=False, help="JSON de creencias"),
    matrix: Path = typer.Option(..., "--matrix", exists=True, dir_okay=False),
    kappa: Optional[float] = typer.Option(None, "--kappa"),
    S: Optional[float] = typer.Option(None, "--S"),
    eps: float = typer.Option(0.01, "--eps", help="Umbral de polarización"),
    polarization: PolarizationMode = typer.Option(PolarizationMode.committed, "--polarization"),
    g4_terms: G4Terms = typer.Option(G4Terms.full, "--g4-terms"),
    exhaustive: bool = typer.Option(False, "--exhaustive/--no-exhaustive"),
    compare_orthants: int = typer.Option(0, "--compare-orthants", min=0),
    compare_flips: int = typer.Option(0, "--compare-flips", min=0),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """Aplica la corrección de punto de silla a unas creencias de BP."""
    state = io.read_beliefs(beliefs)
    w = load_weights(matrix, kappa, S)
    cli = settings(ctx)
    cfg_values: Dict[str, Any] = dict(
        polarization_eps=eps,
        polarization_mode=polarization,
        g4_terms=g4_terms,
        exhaustive=exhaustive,
        compare_orthants=compare_orthants,
        compare_flips=compare_flips,
        compare_seed=cli.seed,
        threads=cli.threads,
    )
    estimate = saddle_corrector.corrected_estimate(state, w, SaddleConfig(**cfg_values), bp_config(ctx))
    emit(render(ctx, corrected_report(estimate)), out)


# === MCMC ===
@estimation_router.command("mcmc")
def mcmc(
    ctx: typer.Context,
    input: Path = typer.Argument(..., exists=True, dir_okay=False),
    kappa: Optional[float] = typer.Option(None, "--kappa"),
    S: Optional[float] = typer.Option(None, "--S"),
    temps: int = typer.Option(100, "--temps", min=2),
    sweeps: int = typer.Option(50, "--sweeps", min=1),
    chains: int = typer.Option(16, "--chains", min=1),
    move: MoveKind = typer.Option(MoveKind.transposition, "--move"),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """Estimación de referencia de ln Z por recocido sobre permutaciones."""
    w = load_weights(input, kappa, S)
    cli = settings(ctx)
    cfg = McmcConfig(
        n_temps=temps, sweeps_per_temp=sweeps, n_chains=chains, seed=cli.seed, move=move, threads=cli.threads
    )
    result = mcmc_estimator.estimate(w, cfg)
    emit(render(ctx, result.model_dump(mode="json")), out)


# === PERMANENTE EXACTO ===
@estimation_router.command("exact")
def exact(
    ctx: typer.Context,
    input: Path = typer.Argument(..., exists=True, dir_okay=False),
    kappa: Optional[float] = typer.Option(None, "--kappa"),
    S: Optional[float] = typer.Option(None, "--S"),
    marginals: bool = typer.Option(False, "--marginals/--no-marginals"),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """ln per(p̂) por Ryser (n <= 24) y, opcionalmente, las marginales exactas (n <= 12)."""
    w = load_weights(input, kappa, S)
    report: Dict[str, Any] = {"n": w.n, "ln_per": oracle.permanent_exact(w, threads=settings(ctx).threads)}
    if marginals:
        report["marginals"] = oracle.marginals_exact(w)
    emit(render(ctx, report), out)


# === EMPAREJAMIENTO DE MÁXIMA VEROSIMILITUD ===
@estimation_router.command("match")
def match(
    ctx: typer.Context,
    input: Path = typer.Argument(..., exists=True, dir_okay=False),
    kappa: Optional[float] = typer.Option(None, "--kappa"),
    S: Optional[float] = typer.Option(None, "--S"),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """Permutación de máximo peso y distancias por pareja."""
    w = load_weights(input, kappa, S)
    result = matcher.max_weight_matching(w)
    report: Dict[str, Any] = {
        "perm": result.perm,
        "log_weight": result.log_weight,
        "tie_broken": result.tie_broken,
    }
    distances = None
    if io.is_snapshot_file(input):
        snap = load_snapshots(input)
        distances = matcher.pair_distances(snap.x, snap.y, result.perm)
        report["distances"] = distances
    rows = [
        {"i": i, "j": int(j), "distance": float(distances[i]) if distances is not None else None}
        for i, j in enumerate(result.perm)
    ]
    emit(render(ctx, report, rows), out)
