# src/services/oracle.py

import itertools
import logging
import math
from typing import List, Tuple

import numpy as np
from scipy.special import logsumexp

from src import config
from src.exceptions import OracleSizeError, PermanentPrecisionError
from src.models.beliefs import BeliefState
from src.models.loops import BoundViolation, GeneralizedLoop, LoopSeries
from src.models.snapshot import WeightMatrix
from src.utils.numerics import sinkhorn_log_scaling
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

GRAY_BLOCK = 256


def _check_size(w: WeightMatrix, limit: int, what: str) -> None:
    if w.n > limit:
        raise OracleSizeError(f"{what}: n={w.n} supera el máximo permitido ({limit})")


def _balanced(log_entries: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Escala filas y columnas (Sinkhorn en log) y normaliza cada fila por su máximo.

    Retorna (B, log_factor) con per(A) = per(B) · exp(log_factor).
    """
    log_r, log_c = sinkhorn_log_scaling(log_entries, max_iters=200, tol=1e-3)
    scaled = log_entries + log_r[:, None] + log_c[None, :]
    row_max = scaled.max(axis=1)
    B = np.exp(scaled - row_max[:, None])
    log_factor = float(np.sum(row_max - log_r) - np.sum(log_c))
    return B, log_factor


def _has_empty_line(log_entries: np.ndarray) -> bool:
    finite = np.isfinite(log_entries)
    return bool(np.any(~finite.any(axis=1)) or np.any(~finite.any(axis=0)))


# === PERMANENTE (RYSER + CÓDIGO GRAY) ===

def _ryser_block(high: np.ndarray, low_sums: np.ndarray, low_parity: np.ndarray, start: int, stop: int) -> float:
    """Suma parcial de Ryser sobre los subconjuntos altos start..stop-1 (en orden Gray)."""
    n = high.shape[0]
    gray = start ^ (start >> 1)
    cols = [k for k in range(high.shape[1]) if (gray >> k) & 1]
    high_sum = high[:, cols].sum(axis=1) if cols else np.zeros(n)
    high_size = len(cols)
    partial = []
    for g in range(start, stop):
        if g > start:
            # el bit más bajo de g es la columna que entra o sale
            bit = (g & -g).bit_length() - 1
            if ((g ^ (g >> 1)) >> bit) & 1:
                high_sum = high_sum + high[:, bit]
                high_size += 1
            else:
                high_sum = high_sum - high[:, bit]
                high_size -= 1
        products = np.prod(low_sums + high_sum[None, :], axis=1)
        # paridad total = paridad baja · paridad alta
        sign = -1.0 if (n - high_size) % 2 else 1.0
        partial.append(math.fsum(sign * low_parity * products))
    return math.fsum(partial)


def permanent_exact(w: WeightMatrix, threads: int = 1) -> float:
    """
    ln per(w) con la fórmula de inclusión-exclusión de Ryser.

    Las m columnas bajas se tabulan para los 2^m subconjuntos y las restantes se
    recorren en código Gray (una columna cambia por paso). Los bloques del
    recorrido se reparten entre hilos y se reducen en orden.
    """
    _check_size(w, config.RYSER_MAX_N, "permanent_exact")
    n = w.n
    if n == 1:
        return float(w.log_entries[0, 0])
    if _has_empty_line(w.log_entries):
        return -np.inf
    B, log_factor = _balanced(w.log_entries)
    m = min(n, config.RYSER_LOW_BITS)
    masks = np.arange(1 << m)
    low_bits = ((masks[:, None] >> np.arange(m)) & 1).astype(float)
    # sumas por fila de cada subconjunto bajo, tabuladas una sola vez
    low_sums = low_bits @ B[:, :m].T
    low_parity = np.where(low_bits.sum(axis=1) % 2 == 1, -1.0, 1.0)
    n_high = 1 << (n - m)
    blocks = [(s, min(s + GRAY_BLOCK, n_high)) for s in range(0, n_high, GRAY_BLOCK)]
    partials = ordered_map(
        lambda block: _ryser_block(B[:, m:], low_sums, low_parity, block[0], block[1]), blocks, threads
    )
    # la suma alternada puede cancelar hasta perder toda la precisión
    total = math.fsum(partials)
    if not total > 0:
        raise PermanentPrecisionError(f"La suma de Ryser no es positiva ({total:.3e}) para n={n}")
    return math.log(total) + log_factor


def permanent_bruteforce(w: WeightMatrix) -> float:
    """ln per(w) enumerando las n! permutaciones."""
    _check_size(w, config.BRUTEFORCE_MAX_N, "permanent_bruteforce")
    n = w.n
    rows = np.arange(n)
    perms = np.array(list(itertools.permutations(range(n))))
    return float(logsumexp(w.log_entries[rows[None, :], perms].sum(axis=1)))


# === MARGINALES EXACTAS ===

def _subset_dp(B: np.ndarray, from_top: bool) -> np.ndarray:
    """
    F[mask] = permanente de las |mask| primeras filas (o últimas si from_top=False)
    restringidas a las columnas de mask. Solo suma términos positivos.
    """
    n = B.shape[0]
    size = 1 << n
    table = np.zeros(size)
    table[0] = 1.0
    for mask in range(1, size):
        count = bin(mask).count("1")
        row = count - 1 if from_top else n - count
        total = 0.0
        for j in range(n):
            if (mask >> j) & 1:
                total += B[row, j] * table[mask ^ (1 << j)]
        table[mask] = total
    return table


def marginals_exact(w: WeightMatrix) -> np.ndarray:
    """
    Marginales exactas p_i^j·per(menor_ij)/per(w).

    Se obtienen de dos programas dinámicos sobre subconjuntos de columnas
    (filas desde arriba y desde abajo), sin sumas alternadas.
    """
    _check_size(w, config.MARGINALS_MAX_N, "marginals_exact")
    n = w.n
    if n == 1:
        return np.ones((1, 1))
    B, _ = _balanced(w.log_entries)
    forward = _subset_dp(B, from_top=True)
    backward = _subset_dp(B, from_top=False)
    full = (1 << n) - 1
    acc = np.zeros((n, n))
    for prefix in range(full):
        weight = forward[prefix]
        if weight == 0.0:
            continue
        row = bin(prefix).count("1")
        rest = full ^ prefix
        # la fila `row` toma la columna j; el resto de filas cubre rest sin j
        for j in range(n):
            if (rest >> j) & 1:
                acc[row, j] += weight * backward[rest ^ (1 << j)]
    return acc * B / forward[full]


def marginals_bruteforce(w: WeightMatrix) -> np.ndarray:
    _check_size(w, config.BRUTEFORCE_MAX_N, "marginals_bruteforce")
    n = w.n
    rows = np.arange(n)
    perms = np.array(list(itertools.permutations(range(n))))
    log_weights = w.log_entries[rows[None, :], perms].sum(axis=1)
    probs = np.exp(log_weights - logsumexp(log_weights))
    marginals = np.zeros((n, n))
    for i in range(n):
        np.add.at(marginals[i], perms[:, i], probs)
    return marginals


# === SERIE DE LAZOS ===

def loop_series_exact(beliefs: BeliefState) -> LoopSeries:
    """
    Enumera los 2^{n²} subconjuntos de aristas y conserva los lazos generalizados.

    r_C = Π_i (1 - q_i) Π_j (1 - q^j) Π_{(i,j)∈C} β/(1-β), z = 1 + Σ r_C.
    """
    n = beliefs.n
    if n > config.LOOP_SERIES_MAX_N:
        raise OracleSizeError(
            f"loop_series_exact: n={n} supera el máximo permitido ({config.LOOP_SERIES_MAX_N})"
        )
    if n == 1:
        return LoopSeries(z=1.0, loops=())
    log_gamma = beliefs.log_gamma().ravel()
    masks = np.arange(1, 1 << (n * n), dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n * n)) & 1).astype(bool)
    edges = bits.reshape(-1, n, n)
    q_row = edges.sum(axis=2)
    q_col = edges.sum(axis=1)
    # lazo generalizado: ningún nodo de grado 1
    valid = np.all((q_row == 0) | (q_row >= 2), axis=1) & np.all((q_col == 0) | (q_col >= 2), axis=1)
    bits, q_row, q_col = bits[valid], q_row[valid], q_col[valid]
    node_factor = np.prod(np.where(q_row > 0, 1 - q_row, 1), axis=1) * np.prod(
        np.where(q_col > 0, 1 - q_col, 1), axis=1
    )
    r_values = node_factor * np.exp(bits.astype(float) @ log_gamma)
    loops = []
    for k in range(bits.shape[0]):
        flat = np.flatnonzero(bits[k])
        loops.append(
            GeneralizedLoop(
                edges=frozenset((int(e // n), int(e % n)) for e in flat),
                left_degrees=tuple(int(q) for q in q_row[k]),
                right_degrees=tuple(int(q) for q in q_col[k]),
                r=float(r_values[k]),
            )
        )
    z = 1.0 + math.fsum(r_values)
    logger.debug("Serie de lazos n=%d: %d lazos, z=%.6g", n, len(loops), z)
    return LoopSeries(z=z, loops=tuple(loops))


def node_bound(degree: int) -> float:
    """Cota (q-1)^(1-q/2) del factor de nodo."""
    return float((degree - 1) ** (1.0 - degree / 2.0))


def loop_bound_violations(beliefs: BeliefState, series: LoopSeries, rtol: float = 1e-8) -> List[BoundViolation]:
    """Comprueba |r_C| <= 1 y |ψ_{i;C}| <= (q_i-1)^(1-q_i/2) en cada nodo de cada lazo."""
    half_log_gamma = 0.5 * beliefs.log_gamma()
    violations: List[BoundViolation] = []
    for index, loop in enumerate(series.loops):
        if abs(loop.r) > 1.0 + rtol:
            violations.append(BoundViolation("loop", index, 0, abs(loop.r), 1.0))
        for side, degrees in (("row", loop.left_degrees), ("col", loop.right_degrees)):
            for node, q in enumerate(degrees):
                if q == 0:
                    continue
                if side == "row":
                    cols = [j for (i, j) in loop.edges if i == node]
                    log_psi = half_log_gamma[node, cols].sum()
                else:
                    rows = [i for (i, j) in loop.edges if j == node]
                    log_psi = half_log_gamma[rows, node].sum()
                psi = (q - 1) * math.exp(log_psi)
                bound = node_bound(q)
                if psi > bound * (1.0 + rtol):
                    violations.append(BoundViolation(side, node, q, psi, bound))
    return violations


def node_bound_violations(beliefs: BeliefState, rtol: float = 1e-8) -> List[BoundViolation]:
    """
    Certificado escalable de la cota: para cada nodo y cada grado q >= 2 toma el
    mayor |ψ| posible (las q aristas de mayor γ). Si no hay violaciones, todos
    los lazos generalizados cumplen |r_C| <= 1 sin enumerarlos.
    """
    n = beliefs.n
    if n < 2:
        return []
    half_log_gamma = 0.5 * beliefs.log_gamma()
    degrees = np.arange(2, n + 1)
    log_bounds = (1.0 - degrees / 2.0) * np.log(degrees - 1)
    violations: List[BoundViolation] = []
    for side, matrix in (("row", half_log_gamma), ("col", half_log_gamma.T)):
        top = np.cumsum(-np.sort(-matrix, axis=1), axis=1)[:, 1:]
        log_psi = np.log(degrees - 1)[None, :] + top
        bad = log_psi > log_bounds[None, :] + math.log1p(rtol)
        for node, k in zip(*np.nonzero(bad)):
            violations.append(
                BoundViolation(side, int(node), int(degrees[k]), float(np.exp(log_psi[node, k])), float(np.exp(log_bounds[k])))
            )
    return violations
