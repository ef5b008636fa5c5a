"""Embedded-chain evaluation of admission strategies and strategy search.

The transition matrix treats one decision epoch per step: from an admissible
state the controller serves the first preferred type whose queue is
non-empty, so the chance of moving along a preference column is a product of
queue-empty probabilities. States outside the admissibility region hold a
pure self-loop, which makes boundary states absorbing; results are therefore
labelled an embedded-chain approximation, with the simulator as ground
truth.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .core import RegionIndex, Scenario, Strategy, naive_strategy, random_strategy
from .engine import SimConfig, run_monte_carlo, substream
from .errors import InvalidInputError
from .queueing import QueueParams, TruncationConfig, DEFAULT_TRUNCATION, impatient_pmf

DENSE_STATE_LIMIT = 20_000
EXHAUSTIVE_COLUMN_LIMIT = 4096


def build_transition_matrix(strategy: Strategy, region: RegionIndex,
                            empty_probs) -> np.ndarray | sparse.csr_matrix:
    """Per-epoch state transition probabilities under a strategy.

    ``empty_probs[t]`` is the chance that queue t+1 is empty at a decision
    epoch. Walking a preference column, the mass that reaches position i and
    finds that queue non-empty moves along its slice increment; mass blocked
    by infeasibility, by the reserve element or by running out of positions
    stays put.
    """
    p0 = np.asarray(empty_probs, dtype=float)
    if ((p0 < 0) | (p0 > 1)).any():
        raise InvalidInputError("queue-empty probabilities must lie in [0, 1]")
    n_states = region.n_feasible
    n_types = len(region.feasible[0])
    if len(p0) != n_types:
        raise InvalidInputError("need one empty probability per slice type")

    rows, cols, vals = [], [], []
    for j in range(n_states):
        self_mass = 0.0
        if region.is_admissible_index(j):
            column = strategy.column(j)
            prefix = 1.0
            for pref in column:
                if pref == 0:
                    break
                move = prefix * (1.0 - p0[pref - 1])
                target = region.next_feasible[j][pref - 1]
                if target >= 0:
                    if move > 0.0:
                        rows.append(j)
                        cols.append(target)
                        vals.append(move)
                else:
                    self_mass += move
                prefix *= p0[pref - 1]
            self_mass += prefix
        else:
            self_mass = 1.0
        if self_mass > 0.0:
            rows.append(j)
            cols.append(j)
            vals.append(self_mass)

    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(n_states, n_states))
    if n_states <= DENSE_STATE_LIMIT:
        return mat.toarray()
    return mat


@dataclass
class LongRunResult:
    distribution: np.ndarray
    converged: bool
    iterations: int


def long_run_distribution(psi, p_init, tol: float = 1e-9,
                          max_iters: int = 50_000) -> LongRunResult:
    """Running average of the k-step distributions (handles periodic chains).

    Stops when successive averages differ by less than ``tol`` in L1, or at
    ``max_iters`` with the convergence flag cleared.
    """
    p = np.asarray(p_init, dtype=float)
    if p.ndim != 1 or abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
        raise InvalidInputError("initial distribution must be a probability vector")
    n = p.shape[0]
    dense = isinstance(psi, np.ndarray)
    if dense and psi.shape != (n, n):
        raise InvalidInputError("matrix/vector size mismatch")
    rowsums = psi.sum(axis=1)
    if np.abs(np.asarray(rowsums).ravel() - 1.0).max() > 1e-9:
        raise InvalidInputError("transition matrix rows must sum to one")

    avg = p.copy()
    vk = p.copy()
    for k in range(1, max_iters + 1):
        vk = vk @ psi
        new_avg = (avg * k + vk) / (k + 1)
        delta = np.abs(new_avg - avg).sum()
        avg = new_avg
        if delta < tol:
            return LongRunResult(avg, True, k)
    return LongRunResult(avg, False, max_iters)


def estimate_acceptance_rates(long_run: np.ndarray, region: RegionIndex,
                              release_rates) -> np.ndarray:
    """Per-type acceptance rates from the long-run occupancy.

    In steady operation acceptances balance releases, so the acceptance rate
    of type n equals its mean active count times its release rate.
    """
    eta = np.asarray(release_rates, dtype=float)
    states = np.asarray(region.feasible, dtype=float)
    mean_counts = long_run @ states
    return mean_counts * eta


def instant_utility(state, utility_rates) -> float:
    """Utility rate earned at one instant from the active slices."""
    return float(np.dot(np.asarray(state, dtype=float),
                        np.asarray(utility_rates, dtype=float)))


def utility_metrics(acceptance_rates, release_rates, utility_rates,
                    mean_lengths=None, mean_waits=None,
                    arrival_rates=None, accept_probs=None) -> dict:
    """Aggregate performance metrics from per-queue quantities.

    Returns the long-run utility rate, and (when the per-queue inputs are
    given) the length-weighted mean wait and the arrival-weighted admission
    probability.
    """
    mu = np.asarray(acceptance_rates, dtype=float)
    eta = np.asarray(release_rates, dtype=float)
    u = np.asarray(utility_rates, dtype=float)
    if (mu < 0).any() or (eta <= 0).any():
        raise InvalidInputError("rates must be non-negative (releases positive)")
    out = {"u_sigma": float((mu * u / eta).sum())}
    if mean_lengths is not None and mean_waits is not None:
        lengths = np.asarray(mean_lengths, dtype=float)
        waits = np.asarray(mean_waits, dtype=float)
        total = lengths.sum()
        if total > 0:
            out["mean_wait"] = float((waits * lengths).sum() / total)
            out["mean_wait_empty"] = False
        else:
            out["mean_wait"] = 0.0
            out["mean_wait_empty"] = True
    if arrival_rates is not None and accept_probs is not None:
        lam = np.asarray(arrival_rates, dtype=float)
        pa = np.asarray(accept_probs, dtype=float)
        out["admission_rate"] = float((lam * pa).sum() / lam.sum())
    return out


def empty_probs_from_analytics(scenario: Scenario, service_rates,
                               cfg: TruncationConfig = DEFAULT_TRUNCATION) -> np.ndarray:
    """Queue-empty probabilities from the single-queue stationary model."""
    out = []
    for st, mu in zip(scenario.slice_types, service_rates):
        if mu <= 0:
            out.append(0.0)
            continue
        params = QueueParams(st.arrival_rate, mu, st.reneging_rate, st.balking_exponent)
        if (st.reneging_rate == 0 and st.balking_exponent == 0
                and params.workload >= 1):
            out.append(0.0)
            continue
        out.append(float(impatient_pmf(params, cfg)[0]))
    return np.asarray(out)


def bootstrap_service_rates(scenario: Scenario, strategy: Strategy,
                            region: RegionIndex, seed: int,
                            horizon: float = 200.0) -> np.ndarray:
    """Measure per-queue acceptance rates with a short patient-tenant run."""
    cfg = SimConfig(horizon=horizon, master_seed=seed, queue_cap=100,
                    initial_state="random_full", collect_records=False)
    from .engine import run_replication  # local import keeps module load light

    metrics = run_replication(scenario, strategy, cfg, 0, region=region)
    return metrics.measured_acceptance_rates()


def analytic_evaluation(scenario: Scenario, strategy: Strategy,
                        region: RegionIndex, seed: int = 0,
                        fixed_point_rounds: int = 0,
                        empty_probs=None,
                        tol: float = 1e-8, max_iters: int = 5000) -> dict:
    """Embedded-chain estimate of the strategy's long-run metrics.

    Queue-empty probabilities come from the stationary queue model fed with
    service rates measured in a short bootstrap run, unless given explicitly
    via ``empty_probs``. With ``fixed_point_rounds`` > 0 the service-rate
    guesses are refined by alternating the chain solve with the queue model
    under damping 0.5.
    """
    eta = np.array([st.release_rate for st in scenario.slice_types])
    u = np.array([st.effective_utility_rate for st in scenario.slice_types])
    p_init = np.zeros(region.n_feasible)
    p_init[region.feasible_index((0,) * scenario.n_types)] = 1.0

    if empty_probs is not None:
        psi = build_transition_matrix(strategy, region, empty_probs)
        result = long_run_distribution(psi, p_init, tol=tol, max_iters=max_iters)
        mu_hat = estimate_acceptance_rates(result.distribution, region, eta)
    else:
        mu_hat = bootstrap_service_rates(scenario, strategy, region, seed)
        result = None
        for _ in range(max(1, fixed_point_rounds)):
            p0 = empty_probs_from_analytics(scenario, mu_hat)
            psi = build_transition_matrix(strategy, region, p0)
            result = long_run_distribution(psi, p_init, tol=tol,
                                           max_iters=max_iters)
            mu_next = estimate_acceptance_rates(result.distribution, region, eta)
            if fixed_point_rounds == 0:
                mu_hat = mu_next
                break
            delta = np.abs(mu_next - mu_hat).max()
            mu_hat = 0.5 * mu_hat + 0.5 * mu_next
            if delta < 1e-6:
                break

    metrics = utility_metrics(mu_hat, eta, u)
    return {
        "long_run": result.distribution,
        "converged": result.converged,
        "iterations": result.iterations,
        "acceptance_rates": mu_hat,
        "u_sigma": metrics["u_sigma"],
        "label": "embedded-chain approximation",
    }


OBJECTIVES = {
    "utility": ("u_sigma", True),
    "wait": ("mean_wait_joined", False),
    "admission": ("admission_rate", True),
}


@dataclass
class SearchRow:
    strategy_id: str
    kind: str  # random | prefer1 | prefer2 | greedy_single
    u_sigma: float
    mean_wait: float
    admission_rate: float
    objective: float
    strategy: Strategy | None = None


def _simulate_strategy(scenario, strategy, region, config) -> tuple[float, float, float]:
    mc = run_monte_carlo(scenario, strategy, config, region=region)
    return (
        mc.aggregate["u_sigma"][0],
        mc.aggregate["mean_wait_joined"][0],
        mc.aggregate["admission_rate"][0],
    )


def strategy_search(scenario: Scenario, region: RegionIndex,
                    n_strategies: int, config: SimConfig,
                    objective: str = "utility",
                    evaluator: str = "simulation",
                    reserve_last: bool = True,
                    exhaustive: bool = False,
                    include_benchmarks: bool = True) -> list[SearchRow]:
    """Evaluate random strategies plus the fixed benchmarks, best first.

    The deterministic master seed drives strategy generation and every
    Monte-Carlo evaluation.
    """
    if n_strategies < 1 and not exhaustive:
        raise InvalidInputError("need at least one strategy")
    if objective not in OBJECTIVES:
        raise InvalidInputError(f"unknown objective {objective!r}")
    if evaluator not in ("simulation", "analytic"):
        raise InvalidInputError(f"unknown evaluator {evaluator!r}")
    key, maximize = OBJECTIVES[objective]

    n_types = scenario.n_types
    rng = substream(config.master_seed, 0, 999)
    candidates: list[tuple[str, str, Strategy]] = []
    if exhaustive:
        options = (
            [tuple(p) + (0,) for p in itertools.permutations(range(1, n_types + 1))]
            if reserve_last
            else list(itertools.permutations(range(n_types + 1)))
        )
        total = len(options) ** region.n_admissible
        if total > EXHAUSTIVE_COLUMN_LIMIT:
            raise InvalidInputError(
                f"exhaustive search over {total} strategies refused "
                f"(limit {EXHAUSTIVE_COLUMN_LIMIT})"
            )
        for i, combo in enumerate(itertools.product(options, repeat=region.n_admissible)):
            strat = Strategy(columns=tuple(combo),
                             scenario_fingerprint=region.scenario_fingerprint)
            candidates.append((f"exhaustive_{i}", "random", strat))
    else:
        for i in range(n_strategies):
            candidates.append(
                (f"random_{i}", "random", random_strategy(region, rng, reserve_last))
            )

    if include_benchmarks:
        if n_types >= 2:
            order1 = list(range(1, n_types + 1)) + [0]
            order2 = [2, 1] + list(range(3, n_types + 1)) + [0]
            candidates.append(("prefer1", "prefer1", naive_strategy(region, order1)))
            candidates.append(("prefer2", "prefer2", naive_strategy(region, order2)))
        else:
            candidates.append(("prefer1", "prefer1", naive_strategy(region, [1, 0])))

    rows: list[SearchRow] = []
    for sid, kind, strat in candidates:
        if evaluator == "simulation":
            u_sigma, wait, adm = _simulate_strategy(scenario, strat, region, config)
        else:
            res = analytic_evaluation(scenario, strat, region, seed=config.master_seed)
            u_sigma, wait, adm = res["u_sigma"], math.nan, math.nan
        value = {"u_sigma": u_sigma, "mean_wait_joined": wait,
                 "admission_rate": adm}[key]
        rows.append(SearchRow(sid, kind, u_sigma, wait, adm, value, strat))

    if include_benchmarks:
        mc = run_monte_carlo(scenario, None, config, single_queue=True, region=region)
        rows.append(SearchRow(
            "greedy_single", "greedy_single",
            mc.aggregate["u_sigma"][0],
            mc.aggregate["mean_wait_joined"][0],
            mc.aggregate["admission_rate"][0],
            mc.aggregate[{"u_sigma": "u_sigma",
                          "mean_wait_joined": "mean_wait_joined",
                          "admission_rate": "admission_rate"}[key]][0],
            None,
        ))

    rows.sort(key=lambda r: (-r.objective if maximize else r.objective))
    return rows
