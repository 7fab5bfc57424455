# src/services/saddle_corrector.py

import dataclasses
import itertools
import logging
import math
from typing import List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from src import config
from src.exceptions import (
    NumericalError,
    SaddleConvergenceError,
    SaddleDomainError,
    SaddleSingularError,
)
from src.models.beliefs import BeliefState
from src.models.saddle import CorrectedEstimate, ExhaustiveSummary, OrthantTerm, SaddleSolution
from src.models.snapshot import WeightMatrix
from src.schemas.bp import BpConfig
from src.schemas.saddle import G4Terms, SaddleConfig
from src.services import bp_solver
from src.utils.numerics import signed_logsumexp
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


# === FUNCIÓN G Y SUS DERIVADAS ===

def _check_domain(rho: np.ndarray) -> None:
    if not np.all(np.isfinite(rho)) or np.any(rho == 0):
        raise SaddleDomainError("Todas las componentes de rho deben ser finitas y no nulas")


def _exponents(rho: np.ndarray, log_gamma: np.ndarray) -> np.ndarray:
    n = log_gamma.shape[0]
    return log_gamma - (rho[:n, None] + rho[None, n:])


def _g_value(rho: np.ndarray, log_gamma: np.ndarray) -> float:
    _check_domain(rho)
    log_partition = np.sum(rho) + np.sum(np.logaddexp(0.0, _exponents(rho, log_gamma)))
    return float(2.0 * np.sum(np.log(np.abs(rho))) - log_partition)


def _gradient(rho: np.ndarray, log_gamma: np.ndarray) -> np.ndarray:
    t = expit(_exponents(rho, log_gamma))
    return 2.0 / rho - 1.0 + np.concatenate([t.sum(axis=1), t.sum(axis=0)])


def _lambda(rho: np.ndarray, log_gamma: np.ndarray) -> np.ndarray:
    """Λ = -∇²G: diagonal 2/ρ² más el acoplamiento t(1-t) de cada arista."""
    n = log_gamma.shape[0]
    t = expit(_exponents(rho, log_gamma))
    w = t * (1.0 - t)
    lam = np.zeros((2 * n, 2 * n))
    lam[:n, n:] = w
    lam[n:, :n] = w.T
    lam[np.diag_indices(2 * n)] = 2.0 / rho**2 + np.concatenate([w.sum(axis=1), w.sum(axis=0)])
    return lam


def _cholesky(lam: np.ndarray):
    if not np.all(np.isfinite(lam)):
        raise SaddleSingularError("El hessiano contiene valores no finitos")
    try:
        return cho_factor(lam, lower=True)
    except LinAlgError as exc:
        raise SaddleSingularError(f"El hessiano no es definido positivo: {exc}") from exc


def g_function(rho, beliefs: BeliefState) -> float:
    """
    G(ρ) = Σ 2 ln|ρ_k| - ln Z(ρ), con ln Z(ρ) = Σρ + Σ_ij ln(1 + γ_ij e^{-ρ_i-ρ^j}).

    Para componentes negativas se usa ln|ρ|: las partes imaginarias constantes
    se cancelan por pares y no entran en el valor.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (2 * beliefs.n,):
        raise SaddleDomainError(f"rho debe tener {2 * beliefs.n} componentes")
    return _g_value(rho, beliefs.log_gamma())


# === PUNTO DE SILLA POR ORTHANTE ===

def _solve_orthant(log_gamma: np.ndarray, signs: np.ndarray, cfg: SaddleConfig) -> SaddleSolution:
    signs = np.asarray(signs, dtype=float)
    rho = 2.5 * signs
    limit = config.SADDLE_DIVERGENCE_LIMIT
    residual = math.inf
    iterations = 0

    # punto fijo amortiguado ρ = 2 / (1 - Σ t), confinado al orthante
    for _ in range(cfg.max_fixed_point_iters):
        grad = _gradient(rho, log_gamma)
        residual = float(np.max(np.abs(grad)))
        if residual < cfg.newton_switch:
            break
        iterations += 1
        t = expit(_exponents(rho, log_gamma))
        denom = 1.0 - np.concatenate([t.sum(axis=1), t.sum(axis=0)])
        with np.errstate(divide="ignore"):
            proposal = 2.0 / denom
        outside = ~np.isfinite(proposal) | (np.sign(proposal) != signs)
        proposal = np.where(outside, 2.0 * rho, proposal)
        rho = (1.0 - cfg.damping) * rho + cfg.damping * proposal
        if np.max(np.abs(rho)) > limit:
            raise SaddleConvergenceError("El punto fijo diverge: G no tiene máximo en el orthante", residual)

    # Newton con retroceso sobre ∇G = 0
    converged = False
    for _ in range(cfg.max_newton_iters + 1):
        grad = _gradient(rho, log_gamma)
        residual = float(np.max(np.abs(grad)))
        if residual < cfg.tol:
            converged = True
            break
        iterations += 1
        step = cho_solve(_cholesky(_lambda(rho, log_gamma)), grad)
        g0 = _g_value(rho, log_gamma)
        alpha = 1.0
        for _ in range(60):
            candidate = rho + alpha * step
            if np.all(np.sign(candidate) == signs) and _g_value(candidate, log_gamma) >= g0 - 1e-12 * (1.0 + abs(g0)):
                break
            alpha *= 0.5
        else:
            raise SaddleConvergenceError("Newton no encuentra un paso de ascenso", residual)
        rho = candidate
        if np.max(np.abs(rho)) > limit:
            raise SaddleConvergenceError("Newton diverge: G no tiene máximo en el orthante", residual)
    if not converged:
        raise SaddleConvergenceError("El punto de silla no converge", residual)

    factor = _cholesky(_lambda(rho, log_gamma))
    logdet = float(2.0 * np.sum(np.log(np.diag(factor[0]))))
    return SaddleSolution(
        signs=signs.astype(int),
        rho=rho,
        log_gamma=log_gamma,
        g_value=_g_value(rho, log_gamma),
        logdet_hessian=logdet,
        converged=True,
        residual=residual,
        iterations=iterations,
    )


def _with_corrections(sol: SaddleSolution, cfg: SaddleConfig) -> SaddleSolution:
    g_sp = gaussian_correction(sol)
    g4 = fourth_order_correction(sol, terms=cfg.g4_terms, threads=cfg.threads)
    ratio = abs(g4 / g_sp) if g_sp != 0 else math.inf
    return dataclasses.replace(sol, g_sp=g_sp, g4=g4, ratio=ratio)


def solve_saddle(
    beliefs: BeliefState,
    signs,
    tol: float = config.SADDLE_TOL,
    cfg: Optional[SaddleConfig] = None,
) -> SaddleSolution:
    """
    Resuelve ∇G(ρ) = 0 dentro del orthante dado por `signs` (2N valores ±1).

    Punto fijo amortiguado sobre ρ = 2/(1 - Σt) hasta residuo < 1e-3 y luego
    Newton con retroceso (G debe crecer y ρ no puede salir del orthante).
    """
    cfg = (cfg or SaddleConfig()).model_copy(update={"tol": tol})
    signs = np.asarray(signs)
    if signs.shape != (2 * beliefs.n,) or not np.all(np.abs(signs) == 1):
        raise SaddleDomainError(f"signs debe tener {2 * beliefs.n} entradas ±1")
    beta = beliefs.beta
    if np.any(beta <= 0) or np.any(beta >= 1):
        raise SaddleDomainError("El punto de silla requiere creencias interiores (0 < β < 1)")
    return _with_corrections(_solve_orthant(beliefs.log_gamma(), signs, cfg), cfg)


# === CORRECCIONES ===

def gaussian_correction(sol: SaddleSolution) -> float:
    """G_sp = G(ρ) + N ln(2π) + ½ ln det Λ; el término aporta exp(-G_sp) a z."""
    g_sp = sol.g_value + sol.n * LOG_2PI + 0.5 * sol.logdet_hessian
    if not math.isfinite(g_sp):
        raise SaddleSingularError("det Λ no finito")
    return float(g_sp)


def _inverse_lambda(sol: SaddleSolution) -> np.ndarray:
    factor = _cholesky(_lambda(sol.rho, sol.log_gamma))
    return cho_solve(factor, np.eye(2 * sol.n))


def fourth_order_correction(
    sol: SaddleSolution, terms: G4Terms = G4Terms.full, threads: int = 1
) -> float:
    """
    Corrección siguiente al orden gaussiano, con C = Λ^{-1}.

    Cuártica: (1/8) Σ G'''' C C, con G'''' = -12/ρ⁴ en cada componente y
    -w(1-6w) en la dirección e_i + e_{N+j} de cada arista (w = t(1-t)).
    En modo "full" se suman los pares de terceras derivadas (4/ρ³ y w(1-2t)):
    (1/8)·mancuerna + (1/12)·theta.
    """
    n = sol.n
    rho = sol.rho
    C = _inverse_lambda(sol)
    diag = np.diag(C)
    X = C[:n, n:]
    t = expit(_exponents(rho, sol.log_gamma))
    w = t * (1.0 - t)
    # varianza de C en la dirección e_i + e_{N+j} de cada arista
    edge_c = diag[:n, None] + 2.0 * X + diag[None, n:]

    quartic = math.fsum((-12.0 / rho**4 * diag**2).tolist()) + math.fsum(
        (-w * (1.0 - 6.0 * w) * edge_c**2).ravel().tolist()
    )
    if terms == G4Terms.quartic:
        return quartic / 8.0

    # terceras derivadas: 4/ρ³ por componente, w(1-2t) por arista
    tau = 4.0 / rho**3
    theta = w * (1.0 - 2.0 * t)
    weighted = theta * edge_c
    # mancuerna: h_c = Σ_ab G'''_abc C_ab, contraído con C
    h = tau * diag
    h[:n] += weighted.sum(axis=1)
    h[n:] += weighted.sum(axis=0)
    dumbbell = float(h @ C @ h)

    # theta: Σ G'''_abc G'''_def C_ad C_be C_cf, separado por tipo de par
    unit_unit = float(tau @ (C**3) @ tau)
    unit_edge = C[:, :n][:, :, None] + C[:, n:][:, None, :]
    unit_edge_sum = float(np.einsum("k,ij,kij->", tau, theta, unit_edge**3))

    R = C[:n, :n]
    Y = C[n:, n:]
    XT = X.T

    def edge_block(i: int) -> float:
        block = R[i][None, :, None] + X[i][None, None, :] + XT[:, :, None] + Y[:, None, :]
        return float(np.einsum("j,ab,jab->", theta[i], theta, block**3))

    # el bloque arista-arista es O(N⁴); se reparte por filas entre hilos
    edge_edge = math.fsum(ordered_map(edge_block, range(n), threads))
    theta_term = unit_unit + 2.0 * unit_edge_sum + edge_edge
    return quartic / 8.0 + dumbbell / 8.0 + theta_term / 12.0


# === ESTIMACIÓN CORREGIDA ===

def _try_orthant(log_gamma: np.ndarray, signs: np.ndarray, cfg: SaddleConfig) -> OrthantTerm:
    try:
        return OrthantTerm(signs=signs, solution=_with_corrections(_solve_orthant(log_gamma, signs, cfg), cfg))
    except NumericalError as exc:
        logger.debug("Orthante %s sin máximo interior: %s", signs.tolist(), exc)
        return OrthantTerm(signs=signs, solution=None, error=str(exc))


def _sign_patterns(n_vars: int, cfg: SaddleConfig) -> List[np.ndarray]:
    """
    Orthantes distintos del todo-+, sin repetidos.

    Exhaustivo: los 2^{2N} - 1 restantes. Si no, el todo-−, los de 1..k signos
    invertidos (k = compare_flips) y compare_orthants aleatorios nuevos.
    """
    if cfg.exhaustive and n_vars <= config.EXHAUSTIVE_MAX_VARS:
        return [np.array(p) for p in itertools.product((1, -1), repeat=n_vars)][1:]
    seen = set()
    patterns: List[np.ndarray] = []

    def add(pattern) -> None:
        key = tuple(int(s) for s in pattern)
        if key not in seen and min(key) < 0:
            seen.add(key)
            patterns.append(np.array(key))

    add(-np.ones(n_vars, dtype=int))
    for k in range(1, min(cfg.compare_flips, n_vars) + 1):
        for flipped in itertools.combinations(range(n_vars), k):
            pattern = np.ones(n_vars, dtype=int)
            pattern[list(flipped)] = -1
            add(pattern)

    # aleatorios hasta completar el cupo o agotar los 2^{2N} - 1 orthantes
    rng = np.random.default_rng(cfg.compare_seed)
    target = min(len(patterns) + cfg.compare_orthants, 2**n_vars - 1)
    attempts = 0
    while len(patterns) < target and attempts < 100 * cfg.compare_orthants:
        attempts += 1
        add(rng.choice(np.array([1, -1]), size=n_vars))
    return patterns


def _summarize(dominant: SaddleSolution, alternates: List[OrthantTerm]) -> ExhaustiveSummary:
    solved = [term for term in alternates if term.converged]
    # contribución de cada orthante: paridad · exp(-G_sp)
    logs = np.array([-dominant.g_sp] + [term.log_contribution for term in solved])
    parities = np.array([1] + [term.parity for term in solved])
    ln_abs_sum, sign = signed_logsumexp(logs, parities)
    all_minus = [term for term in solved if np.all(term.signs < 0)]
    return ExhaustiveSummary(
        ln_abs_sum=ln_abs_sum,
        sign=sign,
        gap_rest=float(logs[0] - logs[1:].max()) if len(logs) > 1 else math.inf,
        gap_all_minus=float(logs[0] - all_minus[0].log_contribution) if all_minus else math.nan,
        n_solved=len(solved) + 1,
        n_skipped=len(alternates) - len(solved),
    )


def corrected_estimate(
    beliefs: BeliefState,
    w: WeightMatrix,
    cfg: Optional[SaddleConfig] = None,
    bp_cfg: Optional[BpConfig] = None,
) -> CorrectedEstimate:
    """
    ln Z corregido: BP, BP + silla gaussiana y BP + silla + G₄.

    Se podan las aristas polarizadas, se recalcula BP en el problema reducido
    y se resuelve el orthante todo-+. La reducción vacía da z = 1.
    """
    cfg = cfg or SaddleConfig()
    ln_z_bp = beliefs.ln_z_bp
    pruned = bp_solver.prune_polarized(beliefs, w, cfg.polarization_eps, cfg.polarization_mode)
    if pruned.is_empty or pruned.reduced.n < 2:
        logger.info("Reducción vacía: se devuelve la estimación de BP")
        return CorrectedEstimate(
            ln_z_bp=ln_z_bp, ln_z_sp=ln_z_bp, ln_z_sp4=ln_z_bp, dominant=None, pruned=pruned
        )

    reduced_beliefs = beliefs if not pruned.committed else bp_solver.solve(pruned.reduced, bp_cfg)
    if reduced_beliefs.is_vertex:
        # sin creencias interiores no hay integral de silla: z = 1
        message = "BP del problema reducido es un vértice: se devuelve la estimación de BP"
        logger.warning(message)
        return CorrectedEstimate(
            ln_z_bp=ln_z_bp, ln_z_sp=ln_z_bp, ln_z_sp4=ln_z_bp, dominant=None, pruned=pruned, warnings=(message,)
        )
    log_gamma = reduced_beliefs.log_gamma()
    n_vars = 2 * reduced_beliefs.n
    # orthante todo-+: término dominante
    dominant = _with_corrections(_solve_orthant(log_gamma, np.ones(n_vars, dtype=int), cfg), cfg)

    warnings = []
    if dominant.ratio >= 1.0:
        message = f"|G4/G_sp| = {dominant.ratio:.3g} >= 1: la aproximación de silla no es fiable"
        logger.warning(message)
        warnings.append(message)

    alternates: List[OrthantTerm] = []
    exhaustive = None
    if cfg.exhaustive and n_vars > config.EXHAUSTIVE_MAX_VARS:
        message = (
            f"Modo exhaustivo omitido: 2N={n_vars} > {config.EXHAUSTIVE_MAX_VARS}; "
            "se comparan el todo-− y los orthantes muestreados"
        )
        logger.warning(message)
        warnings.append(message)
    if cfg.exhaustive or cfg.compare_orthants > 0 or cfg.compare_flips > 0:
        patterns = _sign_patterns(n_vars, cfg)
        alternates = ordered_map(lambda s: _try_orthant(log_gamma, s, cfg), patterns, cfg.threads)
        exhaustive = _summarize(dominant, alternates)

    # BP del problema completo (aristas comprometidas incluidas) por la z del reducido
    return CorrectedEstimate(
        ln_z_bp=ln_z_bp,
        ln_z_sp=ln_z_bp - dominant.g_sp,
        ln_z_sp4=ln_z_bp - dominant.g_sp - dominant.g4,
        dominant=dominant,
        pruned=pruned,
        alternates=tuple(alternates),
        exhaustive=exhaustive,
        warnings=tuple(warnings),
    )
