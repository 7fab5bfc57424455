import math

import numpy as np
import pytest
from hypothesis import given

from src.exceptions import OracleSizeError
from src.models.beliefs import BeliefState
from src.models.snapshot import WeightMatrix
from src.services import bp_solver, oracle
from tests.conftest import ones, random_matrix, weight_matrices


def beliefs_from(beta: np.ndarray) -> BeliefState:
    n = beta.shape[0]
    return BeliefState(beta=beta, log_u=np.zeros(n), log_v=np.zeros(n), f_bp=0.0, residual=0.0, iterations=0)


# === PERMANENTE ===

def test_identity_permanent_is_one():
    assert oracle.permanent_exact(WeightMatrix.from_entries(np.eye(3))) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("n", range(2, 9))
def test_all_ones_permanent_is_factorial(n):
    value = math.exp(oracle.permanent_exact(ones(n)))
    assert abs(value / math.factorial(n) - 1.0) < 1e-12


def test_small_permanent():
    w = WeightMatrix.from_entries([[1.0, 2.0], [3.0, 4.0]])
    assert math.exp(oracle.permanent_exact(w)) == pytest.approx(10.0, rel=1e-13)


def test_single_entry_permanent():
    assert oracle.permanent_exact(WeightMatrix(np.array([[-3.5]]))) == -3.5


@pytest.mark.parametrize("seed", range(100))
def test_ryser_matches_enumeration(seed):
    n = 2 + seed % 6
    w = random_matrix(n, seed, low=0.01, high=5.0)
    exact = oracle.permanent_exact(w)
    brute = oracle.permanent_bruteforce(w)
    assert abs(math.expm1(exact - brute)) < 1e-10


def test_ryser_survives_extreme_scales():
    rng = np.random.default_rng(4)
    log_entries = rng.normal(0.0, 5.0, size=(6, 6)) - 700.0
    w = WeightMatrix(log_entries)
    assert abs(math.expm1(oracle.permanent_exact(w) - oracle.permanent_bruteforce(w))) < 1e-10


def test_empty_row_gives_zero_permanent():
    entries = np.ones((3, 3))
    entries[1] = 0.0
    assert oracle.permanent_exact(WeightMatrix.from_entries(entries)) == -np.inf


def test_ryser_is_identical_across_threads():
    w = random_matrix(21, 8)
    assert oracle.permanent_exact(w, threads=1) == oracle.permanent_exact(w, threads=4)


def test_size_limits():
    with pytest.raises(OracleSizeError):
        oracle.permanent_exact(ones(25))
    with pytest.raises(OracleSizeError):
        oracle.marginals_exact(ones(13))
    with pytest.raises(OracleSizeError):
        oracle.permanent_bruteforce(ones(9))
    with pytest.raises(OracleSizeError):
        oracle.loop_series_exact(beliefs_from(np.full((5, 5), 0.2)))


# === MARGINALES ===

def test_two_by_two_marginals_are_half():
    np.testing.assert_allclose(oracle.marginals_exact(ones(2)), np.full((2, 2), 0.5), rtol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_marginals_match_enumeration(seed):
    w = random_matrix(4, seed)
    np.testing.assert_allclose(oracle.marginals_exact(w), oracle.marginals_bruteforce(w), rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("n", [5, 9, 12])
def test_marginals_are_doubly_stochastic(n):
    marginals = oracle.marginals_exact(random_matrix(n, n))
    np.testing.assert_allclose(marginals.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(marginals.sum(axis=0), 1.0, atol=1e-10)


def test_dominant_diagonal_marginals_approach_one():
    entries = np.full((4, 4), 1e-6)
    np.fill_diagonal(entries, 1.0)
    marginals = oracle.marginals_exact(WeightMatrix.from_entries(entries))
    assert np.all(np.diag(marginals) > 1.0 - 1e-5)


# === SERIE DE LAZOS ===

def test_loop_series_two_by_two():
    beliefs = bp_solver.solve(ones(2))
    series = oracle.loop_series_exact(beliefs)
    assert len(series.loops) == 1
    assert series.loops[0].r == pytest.approx(1.0, rel=1e-10)
    assert series.loops[0].left_degrees == (2, 2)
    assert series.z == pytest.approx(2.0, rel=1e-10)


def test_loop_series_three_by_three():
    beliefs = bp_solver.solve(ones(3))
    series = oracle.loop_series_exact(beliefs)
    assert series.z == pytest.approx(6.0 / (27.0 * (2.0 / 3.0) ** 6), rel=1e-8)
    assert series.z == pytest.approx(2.53125, rel=1e-8)


def test_loops_have_no_degree_one_vertex():
    series = oracle.loop_series_exact(bp_solver.solve(random_matrix(3, 2)))
    for loop in series.loops:
        assert all(q == 0 or q >= 2 for q in loop.left_degrees + loop.right_degrees)
        assert sum(loop.left_degrees) == len(loop.edges) == sum(loop.right_degrees)


@pytest.mark.parametrize("seed", range(20))
def test_resummation_identity(seed):
    n = 2 + seed % 3
    w = random_matrix(n, 100 + seed)
    beliefs = bp_solver.solve(w)
    series = oracle.loop_series_exact(beliefs)
    assert beliefs.ln_z_bp + math.log(series.z) == pytest.approx(oracle.permanent_exact(w), rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_resummation_identity_all_ones(n):
    beliefs = bp_solver.solve(ones(n))
    z = oracle.loop_series_exact(beliefs).z
    assert beliefs.ln_z_bp + math.log(z) == pytest.approx(math.log(math.factorial(n)), rel=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_loop_bounds_hold_at_fixed_points(seed):
    n = 2 + seed % 3
    beliefs = bp_solver.solve(random_matrix(n, 200 + seed, low=0.01, high=1.0))
    series = oracle.loop_series_exact(beliefs)
    assert all(abs(loop.r) <= 1.0 + 1e-8 for loop in series.loops)
    assert oracle.loop_bound_violations(beliefs, series) == []


def test_node_bound_values():
    assert oracle.node_bound(2) == 1.0
    assert oracle.node_bound(3) == pytest.approx(2.0**-0.5)
    assert oracle.node_bound(4) == pytest.approx(3.0**-1.0)


@given(weight_matrices(min_n=2, max_n=8, low=0.01, high=1.0))
def test_node_certificate_holds_at_fixed_points(w):
    assert oracle.node_bound_violations(bp_solver.solve(w)) == []


def test_node_certificate_flags_non_stochastic_beliefs():
    violations = oracle.node_bound_violations(beliefs_from(np.full((3, 3), 0.8)))
    assert violations
    assert {v.side for v in violations} == {"row", "col"}
    assert all(v.psi > v.bound for v in violations)
