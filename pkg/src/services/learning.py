# src/services/learning.py

import logging
import math
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from src import config
from src.exceptions import FlowMatchError, LearningError
from src.models.snapshot import SnapshotPair
from src.schemas.flow import FlowParams
from src.schemas.learning import ArgmaxResult, Method, SweepParameter, SweepResult, SweepRow, SweepSpec
from src.services import bp_solver, flow_model, mcmc_estimator, oracle, saddle_corrector
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)


def default_grid(parameter: SweepParameter) -> List[float]:
    if parameter == SweepParameter.kappa:
        return list(config.KAPPA_GRID)
    return list(config.S_GRID)


def refine_argmax(grid, values) -> Tuple[int, float]:
    """
    Índice del máximo en la malla y vértice de la parábola que pasa por él y sus
    dos vecinos (recortado al intervalo entre vecinos).
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    if not np.any(finite):
        raise LearningError("No hay valores finitos para localizar el máximo")
    k = int(np.nanargmax(np.where(finite, values, np.nan)))
    if k == 0 or k == len(grid) - 1 or not (finite[k - 1] and finite[k + 1]):
        return k, float(grid[k])
    a, b, _ = np.polyfit(grid[k - 1 : k + 2], values[k - 1 : k + 2], 2)
    if a >= 0:
        return k, float(grid[k])
    vertex = -b / (2.0 * a)
    return k, float(np.clip(vertex, grid[k - 1], grid[k + 1]))


class LearningService:

    @staticmethod
    def evaluate_point(snap: SnapshotPair, spec: SweepSpec, index: int) -> SweepRow:
        """
        Evalúa todos los métodos pedidos en un punto de la malla.

        Los fallos de cada método se guardan en la fila y no detienen el barrido.
        """
        value = spec.grid[index]
        row = SweepRow(index=index, param=value)
        n = snap.n
        try:
            w = flow_model.build_weight_matrix(snap, spec.params_at(value))
        except FlowMatchError as exc:
            row.errors["weights"] = str(exc)
            row.ln_z_per_particle = {m: None for m in spec.methods}
            return row

        values: Dict[Method, Optional[float]] = {m: None for m in spec.methods}
        wants_bp = any(m in spec.methods for m in (Method.bp, Method.bp_sp, Method.bp_sp4))
        if wants_bp:
            started = time.perf_counter()
            try:
                beliefs = bp_solver.solve(w, spec.bp)
                row.bp_residual = beliefs.residual
                row.bp_iterations = beliefs.iterations
                if Method.bp in values:
                    values[Method.bp] = beliefs.ln_z_bp / n
                row.seconds["bp"] = time.perf_counter() - started
                if Method.bp_sp in values or Method.bp_sp4 in values:
                    started = time.perf_counter()
                    estimate = saddle_corrector.corrected_estimate(beliefs, w, spec.saddle, spec.bp)
                    row.ratio_g4 = estimate.ratio
                    if Method.bp_sp in values:
                        values[Method.bp_sp] = estimate.ln_z_sp / n
                    if Method.bp_sp4 in values:
                        values[Method.bp_sp4] = estimate.ln_z_sp4 / n
                    row.seconds["sp"] = time.perf_counter() - started
            except FlowMatchError as exc:
                row.errors["bp"] = str(exc)
                logger.warning("Punto %d (%s=%g): BP/silla falló: %s", index, spec.parameter.value, value, exc)

        if Method.mcmc in values:
            try:
                result = mcmc_estimator.estimate(w, spec.mcmc)
                values[Method.mcmc] = result.ln_z_mean / n
                row.seconds["mcmc"] = result.seconds
            except (FlowMatchError, ValueError) as exc:
                row.errors["mcmc"] = str(exc)

        if Method.exact in values:
            started = time.perf_counter()
            try:
                values[Method.exact] = oracle.permanent_exact(w) / n
                row.seconds["exact"] = time.perf_counter() - started
            except FlowMatchError as exc:
                row.errors["exact"] = str(exc)

        row.ln_z_per_particle = values
        if values.get(Method.exact) is not None and values.get(Method.bp) is not None:
            if values[Method.bp] > values[Method.exact] + 1e-12:
                logger.warning("Punto %d: ln Z_BP supera ln Z exacto", index)
        return row

    @staticmethod
    def run_sweep(snap: SnapshotPair, spec: SweepSpec) -> SweepResult:
        """Barre la malla (en paralelo, salida ordenada por índice) y localiza los máximos."""
        rows = ordered_map(
            lambda k: LearningService.evaluate_point(snap, spec, k), range(len(spec.grid)), spec.threads
        )
        for row in rows:
            logger.info("Punto %d/%d (%s=%g) listo", row.index + 1, len(rows), spec.parameter.value, row.param)
        if all(row.failed for row in rows):
            raise LearningError("Todos los puntos del barrido fallaron")
        argmax = {}
        for method in spec.methods:
            values = [row.ln_z_per_particle.get(method) for row in rows]
            values = [math.nan if v is None else v for v in values]
            if not any(math.isfinite(v) for v in values):
                continue
            k, refined = refine_argmax(spec.grid, values)
            argmax[method] = ArgmaxResult(method=method, index=k, grid_value=spec.grid[k], refined=refined)
        return SweepResult(parameter=spec.parameter, rows=rows, argmax=argmax)


def run_sweep(snap: SnapshotPair, spec: SweepSpec) -> SweepResult:
    return LearningService.run_sweep(snap, spec)


def exact_likelihood_optimum(
    snap: SnapshotPair,
    parameter: SweepParameter,
    bounds: Tuple[float, float],
    fixed: float,
    xatol: float = 1e-6,
) -> float:
    """Maximiza ln per(p̂) en un parámetro por optimización escalar acotada (Ryser)."""

    def negative_log_likelihood(value: float) -> float:
        if parameter == SweepParameter.kappa:
            params = FlowParams(S=fixed, kappa=value, dims=snap.dims)
        else:
            params = FlowParams(S=value, kappa=fixed, dims=snap.dims)
        return -oracle.permanent_exact(flow_model.build_weight_matrix(snap, params))

    result = minimize_scalar(negative_log_likelihood, bounds=bounds, method="bounded", options={"xatol": xatol})
    return float(result.x)
