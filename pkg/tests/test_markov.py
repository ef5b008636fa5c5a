"""Transition matrix construction, long-run averages and strategy search."""
import numpy as np
import pytest

from sliceq.core import (
    Scenario,
    SliceType,
    demo_scenario,
    enumerate_regions,
    naive_strategy,
)
from sliceq.engine import SimConfig, run_replication
from sliceq.errors import InvalidInputError
from sliceq.markov import (
    analytic_evaluation,
    build_transition_matrix,
    empty_probs_from_analytics,
    estimate_acceptance_rates,
    instant_utility,
    long_run_distribution,
    strategy_search,
    utility_metrics,
)
from sliceq.tenants import KnowledgeRegime


def _open_scenario():
    # roomy single-resource pool so states like (2, 3) are interior
    return Scenario(
        resources=(1.0,),
        slice_types=(
            SliceType(cost=(0.1,), arrival_rate=1.0, release_rate=0.2,
                      waiting_cost_rate=1.0, profit_rate=4.0),
            SliceType(cost=(0.1,), arrival_rate=1.0, release_rate=1 / 3,
                      waiting_cost_rate=1.5, profit_rate=4.0),
        ),
    )


def test_transition_row_example():
    sc = _open_scenario()
    region = enumerate_regions(sc)
    strat = naive_strategy(region, [1, 2, 0])
    psi = build_transition_matrix(strat, region, [0.3, 0.5])
    i = region.feasible_index((0, 0))
    up1 = region.feasible_index((1, 0))
    up2 = region.feasible_index((0, 1))
    assert psi[i, up1] == pytest.approx(0.7)
    assert psi[i, up2] == pytest.approx(0.3 * 0.5)
    assert psi[i, i] == pytest.approx(0.15)


def test_transition_rows_stochastic():
    region = enumerate_regions(demo_scenario())
    strat = naive_strategy(region, [2, 1, 0])
    psi = build_transition_matrix(strat, region, [0.25, 0.4])
    assert np.allclose(psi.sum(axis=1), 1.0, atol=1e-12)
    assert (psi >= 0).all()


def test_transition_boundary_rows_self_loop():
    region = enumerate_regions(demo_scenario())
    strat = naive_strategy(region, [1, 2, 0])
    psi = build_transition_matrix(strat, region, [0.3, 0.3])
    for j in range(region.n_admissible, region.n_feasible):
        assert psi[j, j] == pytest.approx(1.0)


def test_transition_identity_when_queues_always_empty():
    region = enumerate_regions(demo_scenario())
    strat = naive_strategy(region, [1, 2, 0])
    psi = build_transition_matrix(strat, region, [1.0, 1.0])
    assert np.allclose(psi, np.eye(region.n_feasible))


def test_transition_rejects_bad_probabilities():
    region = enumerate_regions(demo_scenario())
    strat = naive_strategy(region, [1, 2, 0])
    with pytest.raises(InvalidInputError):
        build_transition_matrix(strat, region, [1.2, 0.5])


def test_long_run_identity_returns_initial():
    res = long_run_distribution(np.eye(3), np.array([0.2, 0.3, 0.5]),
                                tol=1e-12, max_iters=50)
    assert np.allclose(res.distribution, [0.2, 0.3, 0.5])
    assert res.converged


def test_long_run_periodic_chain():
    psi = np.array([[0.0, 1.0], [1.0, 0.0]])
    res = long_run_distribution(psi, np.array([1.0, 0.0]), tol=1e-9,
                                max_iters=200_000)
    assert np.allclose(res.distribution, [0.5, 0.5], atol=1e-4)


def test_long_run_absorbing_chain():
    psi = np.array([[1.0, 0.0], [0.5, 0.5]])
    res = long_run_distribution(psi, np.array([0.0, 1.0]), tol=1e-12,
                                max_iters=100_000)
    assert np.allclose(res.distribution, [1.0, 0.0], atol=1e-3)


def test_long_run_flags_unconverged():
    psi = np.array([[0.0, 1.0], [1.0, 0.0]])
    res = long_run_distribution(psi, np.array([1.0, 0.0]), tol=1e-12,
                                max_iters=100)
    assert not res.converged
    assert res.iterations == 100


def test_long_run_stable_beyond_convergence():
    rng = np.random.default_rng(0)
    psi = rng.random((5, 5))
    psi /= psi.sum(axis=1, keepdims=True)
    p0 = np.full(5, 0.2)
    a = long_run_distribution(psi, p0, tol=1e-8, max_iters=50_000)
    b = long_run_distribution(psi, p0, tol=1e-8, max_iters=100_000)
    assert a.converged and b.converged
    assert np.abs(a.distribution - b.distribution).sum() < 2e-8


def test_long_run_accepts_sparse_matrix():
    from scipy import sparse
    psi = sparse.csr_matrix(np.array([[0.5, 0.5, 0.0],
                                      [0.2, 0.3, 0.5],
                                      [0.0, 0.4, 0.6]]))
    res = long_run_distribution(psi, np.array([1.0, 0.0, 0.0]),
                                tol=1e-8, max_iters=100_000)
    pi = res.distribution
    assert isinstance(pi, np.ndarray)
    assert np.abs(np.asarray(pi @ psi).ravel() - pi).max() < 1e-4


def test_long_run_validates_inputs():
    with pytest.raises(InvalidInputError):
        long_run_distribution(np.eye(2), np.array([0.5, 0.6]))
    with pytest.raises(InvalidInputError):
        long_run_distribution(np.array([[0.5, 0.4], [0.5, 0.5]]),
                              np.array([0.5, 0.5]))


def test_acceptance_rates_point_mass():
    sc = _open_scenario()
    region = enumerate_regions(sc)
    long_run = np.zeros(region.n_feasible)
    long_run[region.feasible_index((2, 3))] = 1.0
    mu = estimate_acceptance_rates(long_run, region, [0.2, 1 / 3])
    assert mu == pytest.approx([0.4, 1.0])
    zero = np.zeros(region.n_feasible)
    zero[region.feasible_index((0, 0))] = 1.0
    assert estimate_acceptance_rates(zero, region, [0.2, 1 / 3]) == pytest.approx([0, 0])


def test_acceptance_rates_match_simulation_occupancy():
    sc = demo_scenario()
    region = enumerate_regions(sc)
    strat = naive_strategy(region, [2, 1, 0])
    cfg = SimConfig(horizon=2000.0, master_seed=3, queue_cap=100)
    m = run_replication(sc, strat, cfg, region=region)
    eta = np.array([st.release_rate for st in sc.slice_types])
    predicted = m.state_mean() * eta
    measured = m.measured_acceptance_rates()
    assert np.all(np.abs(predicted - measured) / measured < 0.05)


def test_instant_utility():
    assert instant_utility([0, 0], [1.0, 1.5]) == 0.0
    assert instant_utility([1, 2], [1.0, 1.5]) == pytest.approx(4.0)
    assert instant_utility([2, 1], [1.5, 1.0]) == pytest.approx(4.0)


def test_utility_metrics_values():
    out = utility_metrics([1.0, 1.0], [0.2, 1 / 3], [1.0, 1.5])
    assert out["u_sigma"] == pytest.approx(9.5)
    single = utility_metrics([0.4], [0.2], [2.0])
    assert single["u_sigma"] == pytest.approx(4.0)


def test_utility_metrics_weighted_means():
    out = utility_metrics(
        [1.0, 1.0], [0.2, 0.5], [1.0, 1.0],
        mean_lengths=[2.0, 6.0], mean_waits=[1.0, 3.0],
        arrival_rates=[1.0, 3.0], accept_probs=[0.5, 0.5],
    )
    assert out["mean_wait"] == pytest.approx((2.0 + 18.0) / 8.0)
    assert out["admission_rate"] == pytest.approx(0.5)
    empty = utility_metrics([1.0], [1.0], [1.0], mean_lengths=[0.0],
                            mean_waits=[0.0])
    assert empty["mean_wait"] == 0.0
    assert empty["mean_wait_empty"]


def test_empty_probs_from_analytics():
    sc = demo_scenario()
    p0 = empty_probs_from_analytics(sc, [3.0, 5.0])
    assert len(p0) == 2
    assert all(0 <= p <= 1 for p in p0)
    # saturated patient queue has no empty mass
    p0 = empty_probs_from_analytics(
        Scenario(resources=(1.0,),
                 slice_types=(SliceType(cost=(0.5,), arrival_rate=2.0,
                                        release_rate=1.0, profit_rate=1.0),)),
        [1.0],
    )
    assert p0[0] == 0.0


def test_analytic_evaluation_runs_and_is_labelled():
    sc = demo_scenario()
    region = enumerate_regions(sc)
    strat = naive_strategy(region, [2, 1, 0])
    res = analytic_evaluation(sc, strat, region, seed=1)
    assert res["label"] == "embedded-chain approximation"
    assert res["u_sigma"] >= 0.0
    assert len(res["long_run"]) == region.n_feasible
    res_fp = analytic_evaluation(sc, strat, region, seed=1, fixed_point_rounds=3)
    assert res_fp["u_sigma"] >= 0.0


def test_strategy_search_composition_and_determinism():
    sc = demo_scenario()
    region = enumerate_regions(sc)
    cfg = SimConfig(horizon=10.0, replications=1, master_seed=4, queue_cap=20,
                    knowledge=KnowledgeRegime("full"),
                    initial_state="random_full")
    rows = strategy_search(sc, region, 1, cfg)
    kinds = [r.kind for r in rows]
    assert kinds.count("random") == 1
    for bench in ("prefer1", "prefer2", "greedy_single"):
        assert kinds.count(bench) == 1
    rows2 = strategy_search(sc, region, 1, cfg)
    assert [(r.strategy_id, r.objective) for r in rows] \
        == [(r.strategy_id, r.objective) for r in rows2]
    # sorted best-first on the objective
    objectives = [r.objective for r in rows]
    assert objectives == sorted(objectives, reverse=True)


def test_strategy_search_exhaustive_guard():
    sc = demo_scenario()
    region = enumerate_regions(sc)
    cfg = SimConfig(horizon=5.0, replications=1, master_seed=0)
    with pytest.raises(InvalidInputError):
        strategy_search(sc, region, 1, cfg, exhaustive=True)


def test_strategy_search_exhaustive_small_region():
    sc = Scenario(
        resources=(1.0,),
        slice_types=(
            SliceType(cost=(0.4,), arrival_rate=1.0, release_rate=1.0,
                      profit_rate=2.0),
            SliceType(cost=(0.45,), arrival_rate=1.0, release_rate=1.0,
                      profit_rate=2.0),
        ),
    )
    region = enumerate_regions(sc)
    assert region.n_admissible <= 12
    cfg = SimConfig(horizon=5.0, replications=1, master_seed=0, queue_cap=10)
    rows = strategy_search(sc, region, 0, cfg, exhaustive=True,
                           include_benchmarks=False)
    assert len(rows) == 2 ** region.n_admissible
