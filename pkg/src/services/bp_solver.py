# src/services/bp_solver.py

import logging
import math
from collections import deque
from typing import Deque, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import linear_sum_assignment
from scipy.special import expit, logit, logsumexp, xlogy

from src import config
from src.exceptions import BpConvergenceError, BpInitError, FlowModelError
from src.models.beliefs import BeliefState, PrunedProblem
from src.models.snapshot import WeightMatrix
from src.schemas.bp import BpConfig, InitMode
from src.schemas.saddle import PolarizationMode
from src.utils.numerics import excluded_sums, sinkhorn_log_scaling

logger = logging.getLogger(__name__)

_ROOT_ITERS = 100
_TINY = np.finfo(float).tiny


def _require_positive(w: WeightMatrix) -> None:
    if not w.is_strictly_positive:
        raise FlowModelError("BP requiere todos los pesos estrictamente positivos")


def bethe_free_energy(beta: np.ndarray, w: WeightMatrix) -> float:
    """F_BP = Σ [β ln(β/p) - (1-β) ln(1-β)], con 0·ln 0 = 0 en la frontera."""
    beta = np.asarray(beta, dtype=float)
    energy = xlogy(beta, beta) - np.where(beta > 0, beta * w.log_entries, 0.0) - xlogy(1.0 - beta, 1.0 - beta)
    return float(np.sum(energy))


def _forced_state(w: WeightMatrix) -> BeliefState:
    # n = 1: la única arista está obligada, β = 1
    return BeliefState(
        beta=np.ones((1, 1)),
        log_u=np.zeros(1),
        log_v=np.zeros(1),
        f_bp=-float(w.log_entries[0, 0]),
        residual=0.0,
        iterations=0,
    )


# === INICIALIZACIÓN CONVEXIFICADA ===

def _solve_offsets(log_p: np.ndarray, other: np.ndarray, tol: float) -> np.ndarray:
    """
    Para cada fila k resuelve Σ_j expit(log_p[k, j] + a_k + other[j]) = 1.

    La función es monótona en a_k; se usa bisección con pasos de Newton
    cuando caen dentro del intervalo, vectorizado sobre todas las filas.
    """
    n = log_p.shape[0]
    base = log_p + other[None, :]
    target = logit(1.0 / n)
    lo = target - base.max(axis=1)
    hi = target - base.min(axis=1)
    a = 0.5 * (lo + hi)
    for _ in range(_ROOT_ITERS):
        s = expit(base + a[:, None])
        f = s.sum(axis=1) - 1.0
        lo = np.where(f < 0, a, lo)
        hi = np.where(f > 0, a, hi)
        slope = (s * (1.0 - s)).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = a - f / slope
        inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
        a = np.where(inside, newton, 0.5 * (lo + hi))
        if np.max(np.abs(f)) < tol or np.max(hi - lo) < 1e-15 * (1.0 + np.max(np.abs(a))):
            break
    return a


def _margin_deviation(log_p: np.ndarray, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    beta = expit(log_p + a[:, None] + b[None, :])
    return beta.sum(axis=1) - 1.0, beta.sum(axis=0) - 1.0


def _offset_potential(log_p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(np.logaddexp(0.0, log_p + a[:, None] + b[None, :])) - np.sum(a) - np.sum(b))


def _newton_offsets(
    log_p: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float, max_iters: int
) -> Tuple[np.ndarray, np.ndarray, float, int]:
    """
    Newton conjunto sobre (a, b) para Φ(a, b) = Σ ln(1 + p·e^{a+b}) - Σ a - Σ b.

    ∇Φ son los desvíos de filas y columnas de β = expit(ln p + a + b) y Φ es
    convexa. (a + c, b - c) da el mismo β, así que b[-1] queda fijo en 0.
    """
    n = log_p.shape[0]
    a = a + b[-1]
    b = b - b[-1]
    cols_free = np.arange(n, 2 * n - 1)
    residual = np.inf
    for step in range(max_iters + 1):
        rows, cols = _margin_deviation(log_p, a, b)
        residual = float(max(np.max(np.abs(rows)), np.max(np.abs(cols))))
        if residual < tol or step == max_iters:
            return a, b, residual, step
        beta = expit(log_p + a[:, None] + b[None, :])
        curvature = beta * (1.0 - beta)
        hessian = np.zeros((2 * n - 1, 2 * n - 1))
        hessian[np.arange(n), np.arange(n)] = curvature.sum(axis=1)
        hessian[cols_free, cols_free] = curvature.sum(axis=0)[:-1]
        hessian[:n, n:] = curvature[:, :-1]
        hessian[n:, :n] = curvature[:, :-1].T
        grad = np.concatenate([rows, cols[:-1]])
        try:
            direction = -cho_solve(cho_factor(hessian), grad)
        except LinAlgError:
            direction = -np.linalg.lstsq(hessian, grad, rcond=None)[0]
        step_a = direction[:n]
        step_b = np.append(direction[n:], 0.0)
        potential = _offset_potential(log_p, a, b)
        slope = float(grad @ direction)
        alpha = 1.0
        for _ in range(50):
            cand_a = a + alpha * step_a
            cand_b = b + alpha * step_b
            cand_rows, cand_cols = _margin_deviation(log_p, cand_a, cand_b)
            cand_residual = max(np.max(np.abs(cand_rows)), np.max(np.abs(cand_cols)))
            # Armijo sobre Φ, o reducción del gradiente cuando Φ ya no distingue
            if (
                _offset_potential(log_p, cand_a, cand_b) <= potential + 1e-4 * alpha * slope
                or cand_residual < 0.5 * residual
            ):
                break
            alpha *= 0.5
        a, b = cand_a, cand_b
    return a, b, residual, max_iters


def init_convexified(
    w: WeightMatrix, tol: float = config.BP_TOL, max_iters: int = config.INIT_MAX_SWEEPS
) -> BeliefState:
    """
    Solución única de β/(1-β) = p·u·v con filas y columnas que suman 1.

    Escalado alterno (u fila a fila, luego v columna a columna) hasta un
    residuo moderado, y después Newton conjunto sobre (ln u, ln v).
    """
    _require_positive(w)
    n = w.n
    if n == 1:
        return _forced_state(w)
    log_p = w.log_entries
    log_u = np.zeros(n)
    log_v = -logsumexp(log_p, axis=0)
    sweeps = 0
    for sweeps in range(1, max_iters + 1):
        log_u = _solve_offsets(log_p, log_v, tol)
        log_v = _solve_offsets(log_p.T, log_u, tol)
        # tras el paso en v las columnas suman 1; el desvío queda en las filas
        rows, _ = _margin_deviation(log_p, log_u, log_v)
        if np.max(np.abs(rows)) < config.INIT_NEWTON_SWITCH:
            break
    log_u, log_v, residual, steps = _newton_offsets(log_p, log_u, log_v, tol, config.INIT_MAX_NEWTON)
    if not residual < tol:
        raise BpInitError("La inicialización convexificada no converge", residual)
    beta = expit(log_p + log_u[:, None] + log_v[None, :])
    logger.debug("Inicialización convexificada: %d barridos + %d pasos de Newton, residuo %.2e", sweeps, steps, residual)
    return BeliefState(
        beta=beta,
        log_u=log_u,
        log_v=log_v,
        f_bp=bethe_free_energy(beta, w),
        residual=residual,
        iterations=sweeps + steps,
    )


def init_sinkhorn(w: WeightMatrix) -> BeliefState:
    """Escalado doblemente estocástico de p̂ (inicialización de respaldo)."""
    _require_positive(w)
    if w.n == 1:
        return _forced_state(w)
    log_r, log_c = sinkhorn_log_scaling(w.log_entries, max_iters=10_000, tol=1e-13)
    beta = np.exp(w.log_entries + log_r[:, None] + log_c[None, :])
    residual = float(max(np.max(np.abs(beta.sum(axis=1) - 1)), np.max(np.abs(beta.sum(axis=0) - 1))))
    return BeliefState(
        beta=beta,
        log_u=log_r,
        log_v=log_c,
        f_bp=bethe_free_energy(beta, w),
        residual=residual,
        iterations=0,
    )


def _perturbed(beta: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    log_beta = np.log(beta) + rng.normal(0.0, 0.5, size=beta.shape)
    log_r, log_c = sinkhorn_log_scaling(log_beta, max_iters=10_000, tol=1e-13)
    return np.exp(log_beta + log_r[:, None] + log_c[None, :])


# === ITERACIÓN DE BP ===

def _chemical_potentials(
    beta: np.ndarray, log_p: np.ndarray, log_v: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Actualiza u con v(n) y después v con el u ya actualizado.

    1 - Σ_j β² se evalúa como Σ_j β·(resto de la fila), que coincide cuando la
    fila suma 1 y no pierde precisión con filas polarizadas.
    """
    row_rest, col_rest = excluded_sums(beta)
    row_free = np.maximum(np.sum(beta * row_rest, axis=1), _TINY)
    log_u = np.log(row_free) - logsumexp(log_p + log_v[None, :], axis=1)
    col_free = np.maximum(np.sum(beta * col_rest, axis=0), _TINY)
    log_v = np.log(col_free) - logsumexp(log_p + log_u[:, None], axis=0)
    return log_u, log_v


def _stationarity_residual(beta: np.ndarray, log_p, log_u, log_v) -> float:
    """Máxima violación relativa de β(1-β) = p·u·v sobre las aristas interiores."""
    interior = (beta > config.BELIEF_FLOOR) & (beta < 1.0 - config.BELIEF_FLOOR)
    if not np.any(interior):
        return 0.0
    row_rest, col_rest = excluded_sums(beta)
    complement = 0.5 * (row_rest + col_rest)
    b = beta[interior]
    log_rhs = (log_p + log_u[:, None] + log_v[None, :])[interior]
    with np.errstate(divide="ignore"):
        gap = log_rhs - np.log(b) - np.log(complement[interior])
    return float(np.max(np.abs(np.expm1(gap))))


def _residual(beta, log_p, log_u, log_v) -> float:
    rows = np.max(np.abs(beta.sum(axis=1) - 1.0))
    cols = np.max(np.abs(beta.sum(axis=0) - 1.0))
    return float(max(rows, cols, _stationarity_residual(beta, log_p, log_u, log_v)))


def _sweep(
    beta: np.ndarray, log_u: np.ndarray, log_v: np.ndarray, log_p: np.ndarray, damping: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Un barrido: propuesta amortiguada, normalización y potenciales químicos."""
    row_rest, col_rest = excluded_sums(beta)
    others = np.maximum(0.5 * (row_rest + col_rest), config.BELIEF_FLOOR)
    proposal = expit(log_p + log_u[:, None] + log_v[None, :] - 2.0 * np.log(others))
    updated = damping * beta + (1.0 - damping) * proposal
    # normalización (a) por filas y (b) por columnas
    updated = updated / updated.sum(axis=1, keepdims=True)
    updated = updated / updated.sum(axis=0, keepdims=True)
    log_u, log_v = _chemical_potentials(updated, log_p, log_v)
    return updated, log_u, log_v


# --- extrapolación de Anderson sobre z = (ln β, ln u, ln v) ---

def _pack(beta: np.ndarray, log_u: np.ndarray, log_v: np.ndarray) -> np.ndarray:
    return np.concatenate([np.log(np.maximum(beta, _TINY)).ravel(), log_u, log_v])


def _unpack(z: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    with np.errstate(over="ignore"):
        beta = np.exp(z[: n * n]).reshape(n, n)
    return beta, z[n * n : n * n + n].copy(), z[n * n + n :].copy()


def _anderson_step(points: Sequence[np.ndarray], residuals: Sequence[np.ndarray]) -> np.ndarray:
    """Combina los últimos puntos para anular T(z) - z por mínimos cuadrados."""
    x = np.array(points)
    f = np.array(residuals)
    d_x = np.diff(x, axis=0).T
    d_f = np.diff(f, axis=0).T
    weights = np.linalg.lstsq(d_f, f[-1], rcond=None)[0]
    return x[-1] + f[-1] - (d_x + d_f) @ weights


# --- mínimos en la frontera ---

def _vertex_state(
    beta: np.ndarray, w: WeightMatrix, log_u: np.ndarray, log_v: np.ndarray, iterations: int, energies: List[float]
) -> Optional[BeliefState]:
    """
    Vértice de emparejamiento perfecto al que tienden las creencias, si lo hay.

    F_BP es convexa en el politopo de Birkhoff, así que su mínimo puede ser un
    vértice. Solo se acepta a distancia < VERTEX_TOL y si el emparejamiento es
    de peso máximo: en otro caso un ciclo alternante baja F_BP.
    """
    rows, cols = linear_sum_assignment(beta, maximize=True)
    vertex = np.zeros_like(beta)
    vertex[rows, cols] = 1.0
    if np.max(np.abs(beta - vertex)) > config.VERTEX_TOL:
        return None
    log_p = w.log_entries
    weight = math.fsum(log_p[rows, cols])
    best_rows, best_cols = linear_sum_assignment(log_p, maximize=True)
    best = math.fsum(log_p[best_rows, best_cols])
    if weight < best - 1e-9 * (1.0 + abs(best)):
        return None
    return BeliefState(
        beta=vertex,
        log_u=log_u,
        log_v=log_v,
        f_bp=bethe_free_energy(vertex, w),
        residual=_residual(vertex, log_p, log_u, log_v),
        iterations=iterations,
        clamped=True,
        energy_trace=tuple(energies),
    )


def _two_by_two_state(w: WeightMatrix) -> BeliefState:
    """
    n = 2: los doblemente estocásticos son β = [[t, 1-t], [1-t, t]] y F_BP es
    lineal en t, así que el mínimo es el emparejamiento de más peso, o todo el
    segmento si ambos pesan igual (se devuelve t = 1/2).
    """
    log_p = w.log_entries
    diagonal = float(log_p[0, 0] + log_p[1, 1])
    anti = float(log_p[0, 1] + log_p[1, 0])
    if abs(diagonal - anti) <= 1e-12 * (1.0 + abs(diagonal) + abs(anti)):
        beta = np.full((2, 2), 0.5)
        log_u, log_v = _chemical_potentials(beta, log_p, np.zeros(2))
        return BeliefState(
            beta=beta,
            log_u=log_u,
            log_v=log_v,
            f_bp=bethe_free_energy(beta, w),
            residual=_residual(beta, log_p, log_u, log_v),
            iterations=0,
        )
    vertex = np.eye(2) if diagonal > anti else np.eye(2)[::-1].copy()
    logger.warning("BP en 2x2 sin punto interior: se devuelve el emparejamiento de máximo peso")
    zeros = np.zeros(2)
    return BeliefState(
        beta=vertex,
        log_u=zeros,
        log_v=zeros,
        f_bp=bethe_free_energy(vertex, w),
        residual=0.0,
        iterations=0,
        clamped=True,
    )


def _converged_state(
    beta: np.ndarray, w: WeightMatrix, log_u: np.ndarray, log_v: np.ndarray, residual: float, iterations: int,
    energies: List[float],
) -> BeliefState:
    floor = config.BELIEF_FLOOR
    clamped = bool(np.any(beta < floor) or np.any(beta > 1.0 - floor))
    if clamped:
        logger.warning("Creencias en la frontera [%.0e, 1-%.0e]: se recortan en los logaritmos", floor, floor)
    state = BeliefState(
        beta=beta,
        log_u=log_u,
        log_v=log_v,
        f_bp=bethe_free_energy(beta, w),
        residual=residual,
        iterations=iterations,
        clamped=clamped,
        energy_trace=tuple(energies),
    )
    logger.info("BP convergió en %d iteraciones (F_BP=%.10g, residuo %.2e)", iterations, state.f_bp, residual)
    return state


def solve(w: WeightMatrix, cfg: Optional[BpConfig] = None, init: Optional[BeliefState] = None) -> BeliefState:
    """
    Mínimo de la energía libre de Bethe.

    Cada barrido: actualización amortiguada de β, normalización por filas y
    luego por columnas, y actualización de los potenciales químicos (u, v).
    Los barridos se aceleran con Anderson; un punto extrapolado solo se acepta
    si su |Δβ| no empeora. Converge cuando max |Δβ| < tol y el residuo de
    estacionariedad es <= BP_STATIONARITY_FACTOR·tol. Si las creencias tienden
    a un vértice de peso máximo se devuelve ese vértice (clamped).
    """
    cfg = cfg or BpConfig()
    _require_positive(w)
    n = w.n
    if n == 1:
        return _forced_state(w)
    if n == 2:
        return _two_by_two_state(w)

    if init is None:
        if cfg.init_mode == InitMode.convexified:
            try:
                init = init_convexified(w, tol=cfg.tol)
            except BpInitError as exc:
                logger.warning("Inicialización convexificada fallida (%s); se usa Sinkhorn", exc)
                init = init_sinkhorn(w)
        else:
            init = init_sinkhorn(w)

    log_p = w.log_entries
    beta = init.beta.copy()
    if cfg.restart_seed is not None:
        beta = _perturbed(beta, cfg.restart_seed)
    log_u, log_v = _chemical_potentials(beta, log_p, init.log_v)

    point = (beta, log_u, log_v)
    latest = point
    memory = cfg.anderson_memory + 1
    points: Deque[np.ndarray] = deque(maxlen=memory)
    residuals: Deque[np.ndarray] = deque(maxlen=memory)
    fallback = None  # paso simple pendiente mientras se prueba un punto extrapolado
    accepted_delta = np.inf
    trace: List[float] = []
    energies: List[float] = []
    stationarity_tol = config.BP_STATIONARITY_FACTOR * cfg.tol
    for _ in range(cfg.max_iters):
        updated = _sweep(*point, log_p, cfg.damping)
        delta = float(np.max(np.abs(updated[0] - point[0])))
        if fallback is not None and not delta <= accepted_delta:
            # la extrapolación no mejora: paso simple y se vacía el historial
            points.clear()
            residuals.clear()
            point, fallback = fallback, None
            continue
        if not np.isfinite(delta):
            break
        accepted_delta = delta
        latest = updated
        trace.append(delta)
        if cfg.track_energy:
            energies.append(bethe_free_energy(updated[0], w))
        if delta < cfg.tol:
            beta, log_u, log_v = updated
            residual = _residual(beta, log_p, log_u, log_v)
            if residual <= stationarity_tol:
                return _converged_state(beta, w, log_u, log_v, residual, len(trace), energies)
            vertex = _vertex_state(beta, w, log_u, log_v, len(trace), energies)
            if vertex is not None:
                logger.warning("BP tiende a un vértice de peso máximo (residuo interior %.2e)", residual)
                return vertex
        if cfg.anderson_memory == 0:
            point, fallback = updated, None
            continue
        current = _pack(*point)
        points.append(current)
        residuals.append(_pack(*updated) - current)
        if len(points) < 2:
            point, fallback = updated, None
            continue
        point, fallback = _unpack(_anderson_step(points, residuals), n), updated

    beta, log_u, log_v = latest
    finite = bool(np.all(np.isfinite(beta)))
    last = BeliefState(
        beta=beta,
        log_u=log_u,
        log_v=log_v,
        f_bp=bethe_free_energy(np.clip(beta, 0.0, 1.0), w),
        residual=_residual(beta, log_p, log_u, log_v) if finite else np.inf,
        iterations=len(trace),
        energy_trace=tuple(energies),
    )
    raise BpConvergenceError(
        f"BP no convergió en {cfg.max_iters} barridos (residuo {last.residual:.3e})",
        state=last,
        trace=trace,
    )


# === PODA DE ARISTAS POLARIZADAS ===

def prune_polarized(
    state: BeliefState,
    w: WeightMatrix,
    eps: float = config.POLARIZATION_EPS,
    mode: PolarizationMode = PolarizationMode.committed,
) -> PrunedProblem:
    """
    Compromete las aristas polarizadas y devuelve el problema reducido.

    En modo "committed" una arista está polarizada si β > 1-ε; en modo
    "literal" si β > ε. Se comprometen en orden decreciente de β mientras
    su fila y su columna sigan libres.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps debe estar en (0, 0.5)")
    n = w.n
    threshold = 1.0 - eps if mode == PolarizationMode.committed else eps
    beta = state.beta
    candidates = np.argwhere(beta > threshold)
    order = np.argsort(-beta[candidates[:, 0], candidates[:, 1]], kind="stable")
    row_free = np.ones(n, dtype=bool)
    col_free = np.ones(n, dtype=bool)
    committed = []
    for i, j in candidates[order]:
        if row_free[i] and col_free[j]:
            row_free[i] = col_free[j] = False
            committed.append((int(i), int(j)))
    committed_log_weight = float(sum(w.log_entries[i, j] for i, j in committed))
    rows = np.flatnonzero(row_free)
    cols = np.flatnonzero(col_free)
    reduced = w.submatrix(rows, cols) if rows.size else None
    if committed:
        logger.info("Poda: %d aristas comprometidas, quedan %d", len(committed), rows.size)
    return PrunedProblem(
        reduced=reduced,
        committed=tuple(committed),
        row_index=rows,
        col_index=cols,
        committed_log_weight=committed_log_weight,
    )
