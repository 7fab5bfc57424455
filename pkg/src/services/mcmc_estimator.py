# src/services/mcmc_estimator.py

import logging
import math
import time
from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from src.exceptions import McmcInfeasibleError
from src.models.snapshot import WeightMatrix
from src.schemas.mcmc import LadderKind, McmcConfig, McmcResult, MoveKind
from src.services.matcher import max_weight_matching
from src.utils.numerics import log_factorial
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)


def temperature_ladder(n_temps: int, kind: LadderKind = LadderKind.geometric) -> np.ndarray:
    """Temperaturas inversas 0 = t_0 < ... < t_{K-1} = 1."""
    if n_temps < 2:
        raise ValueError("Se necesitan al menos dos temperaturas")
    if kind == LadderKind.linear or n_temps == 2:
        return np.linspace(0.0, 1.0, n_temps)
    return np.concatenate([[0.0], np.geomspace(1e-3, 1.0, n_temps - 1)])


def _check_feasible(w: WeightMatrix) -> None:
    log_p = w.log_entries
    if np.any(np.all(np.isneginf(log_p), axis=1)) or np.any(np.all(np.isneginf(log_p), axis=0)):
        raise McmcInfeasibleError("Hay una fila o columna sin pesos positivos")
    if not w.is_strictly_positive:
        best = max_weight_matching(w)
        if not math.isfinite(best.log_weight):
            raise McmcInfeasibleError("Ninguna permutación tiene peso positivo")


def _run_chain(log_p: np.ndarray, ladder: np.ndarray, cfg: McmcConfig, chain: int) -> Tuple[float, np.ndarray]:
    """Una cadena de muestreo por importancia con recocido; retorna (log w, aceptación por temperatura)."""
    n = log_p.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, chain]))
    sigma = rng.permutation(n)
    level = float(log_p[np.arange(n), sigma].sum())
    moves = cfg.sweeps_per_temp * n
    three_cycle = cfg.move == MoveKind.three_cycle and n >= 3
    log_w = 0.0
    acceptance = np.zeros(len(ladder))
    for k, t in enumerate(ladder):
        if k > 0:
            log_w += (t - ladder[k - 1]) * level
        if k == len(ladder) - 1:
            break
        # números aleatorios pre-sorteados para todo el nivel
        if three_cycle:
            picks = np.argsort(rng.random((moves, n)), axis=1)[:, :3]
        else:
            first = rng.integers(0, n, size=moves)
            second = (first + 1 + rng.integers(0, n - 1, size=moves)) % n
            picks = np.stack([first, second], axis=1)
        uniforms = rng.random(moves)
        accepted = 0
        for m in range(moves):
            if three_cycle:
                a, b, c = picks[m]
                delta = (
                    log_p[a, sigma[b]] + log_p[b, sigma[c]] + log_p[c, sigma[a]]
                    - log_p[a, sigma[a]] - log_p[b, sigma[b]] - log_p[c, sigma[c]]
                )
            else:
                a, b = picks[m]
                delta = log_p[a, sigma[b]] + log_p[b, sigma[a]] - log_p[a, sigma[a]] - log_p[b, sigma[b]]
            if t == 0.0 or delta >= 0 or uniforms[m] < math.exp(t * delta):
                if three_cycle:
                    sigma[a], sigma[b], sigma[c] = sigma[b], sigma[c], sigma[a]
                else:
                    sigma[a], sigma[b] = sigma[b], sigma[a]
                level += delta
                accepted += 1
        acceptance[k] = accepted / moves
        # recalcula el nivel para no acumular redondeo
        level = float(log_p[np.arange(n), sigma].sum())
    return log_w, acceptance


def estimate(w: WeightMatrix, cfg: McmcConfig = None) -> McmcResult:
    """
    ln Z por muestreo por importancia con recocido sobre permutaciones.

    Objetivo ∝ exp(t Σ ln p_{i,π(i)}); en t = 0 es uniforme con ln Z_0 = ln N!.
    Cada cadena usa su propio flujo aleatorio derivado de (seed, índice), así
    que el resultado no depende del número de hilos.
    """
    cfg = cfg or McmcConfig()
    n = w.n
    if n < 2:
        raise ValueError("mcmc requiere n >= 2")
    _check_feasible(w)
    started = time.perf_counter()
    ladder = temperature_ladder(cfg.n_temps, cfg.ladder)
    log_p = np.array(w.log_entries)
    outcomes = ordered_map(lambda c: _run_chain(log_p, ladder, cfg, c), range(cfg.n_chains), cfg.threads)
    log_weights = np.array([o[0] for o in outcomes])
    rates = np.mean([o[1] for o in outcomes], axis=0)[:-1]

    ln_n_fact = log_factorial(n)
    chains = len(log_weights)
    ln_z_mean = float(logsumexp(log_weights) - math.log(chains) + ln_n_fact)
    relative = np.exp(log_weights - log_weights.max())
    if chains > 1 and np.all(np.isfinite(relative)):
        stderr = float(np.std(relative, ddof=1) / (math.sqrt(chains) * np.mean(relative)))
    else:
        stderr = 0.0
    ess = float(relative.sum() ** 2 / np.sum(relative**2))
    elapsed = time.perf_counter() - started
    logger.info("MCMC: ln Z = %.6f ± %.2e (ESS %.1f de %d cadenas, %.1fs)", ln_z_mean, stderr, ess, chains, elapsed)
    return McmcResult(
        ln_z_mean=ln_z_mean,
        ln_z_stderr=stderr,
        acceptance_rates=[float(r) for r in rates],
        ess_estimate=ess,
        chain_log_weights=[float(x) for x in log_weights],
        seconds=elapsed,
    )
