"""Rational tenant impatience: lifetime models, balking and reneging rules
under the different levels of queue information the operator may publish,
and per-request profit accounting.

A request is worth profit_rate * lifetime when served; issuing costs
issue_cost once and waiting costs waiting_cost_rate per period. Every rule
below compares the remaining expected value against the expected cost of
continuing to wait; ties favour waiting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInputError

REGIME_KINDS = ("patient", "blind", "position", "avg_wait", "serving_rate", "full")


@dataclass(frozen=True)
class LifetimeDistribution:
    """Distribution of a slice's business-session duration.

    Kinds: ``uniform`` on (0, tau_max], ``rational`` with density 1/(t+1)^2,
    ``pareto`` with density 1/t^2 on [1, inf), ``exponential`` with the given
    rate.
    """

    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "rational", "pareto", "exponential"):
            raise InvalidInputError(f"unknown lifetime kind {self.kind!r}")
        if self.kind in ("uniform", "exponential") and self.param <= 0:
            raise InvalidInputError("lifetime parameter must be positive")

    def cdf(self, t: float) -> float:
        if t <= 0:
            return 0.0
        if self.kind == "uniform":
            return min(1.0, t / self.param)
        if self.kind == "rational":
            return 1.0 - 1.0 / (t + 1.0)
        if self.kind == "pareto":
            return 0.0 if t < 1.0 else 1.0 - 1.0 / t
        return 1.0 - math.exp(-self.param * t)

    def sample(self, rng) -> float:
        u = rng.random()
        # 1-u lies in (0, 1]: keeps every draw strictly positive
        if self.kind == "uniform":
            return self.param * (1.0 - u)
        if self.kind == "rational":
            return u / (1.0 - u)
        if self.kind == "pareto":
            return 1.0 / (1.0 - u)
        return -math.log(1.0 - u) / self.param


@dataclass(frozen=True)
class KnowledgeRegime:
    """What a waiting tenant knows about its queue.

    ``risk_factor`` bounds the blind tenant's waiting budget as a fraction of
    the expected slice value; ``delta_k`` is the minimum observed progress
    before the position-only tenant trusts its serving-rate estimate.
    """

    kind: str
    risk_factor: float = 1.0
    delta_k: int = 2

    def __post_init__(self):
        if self.kind not in REGIME_KINDS:
            raise InvalidInputError(f"unknown knowledge regime {self.kind!r}")
        if self.risk_factor < 0:
            raise InvalidInputError("risk_factor must be non-negative")
        if self.delta_k < 1:
            raise InvalidInputError("delta_k must be at least 1")


@dataclass
class QueueInfoView:
    """Queue knowledge published to one tenant; only the fields its regime
    permits are filled in."""

    position: int | None = None
    length: int | None = None
    service_rate: float | None = None
    renege_rates: tuple[float, ...] | None = None
    mean_accepted_wait: float | None = None


def expected_wait(k: int, mu: float, omega) -> float:
    """Expected wait at queue position k given per-position renege rates.

    omega[i] is the renege rate at position i; position 0 (the service slot)
    contributes rate zero regardless. Needs omega defined for positions < k.
    """
    if k < 0:
        raise InvalidInputError("position must be non-negative")
    if mu <= 0:
        raise InvalidInputError("service rate must be positive")
    total = 0.0
    cum = 0.0
    for i in range(k):
        cum += omega[i] if i > 0 and i < len(omega) else 0.0
        total += 1.0 / (mu + cum)
    return total


def balk_decision(req, length: int, mu: float) -> bool:
    """Issue/balk decision from the expected wait length/mu.

    ``length`` counts the queue including the deciding request itself.
    Returns True to issue (join), False to balk.
    """
    if mu <= 0:
        raise InvalidInputError("service rate must be positive")
    value = req.profit_rate * req.lifetime
    cost = req.issue_cost + req.waiting_cost_rate * length / mu
    return value - cost >= 0.0


def balking_chance(dist: LifetimeDistribution, length: int, mu: float,
                   u: float, zeta: float, u0: float = 0.0) -> float:
    """Probability that a random-lifetime tenant joins at the given length."""
    if mu <= 0 or u <= 0 or zeta <= 0:
        raise InvalidInputError("mu, u and zeta must be positive")
    if length < 0:
        raise InvalidInputError("queue length must be non-negative")
    threshold = (u0 * mu + u * length) / (mu * zeta)
    return 1.0 - dist.cdf(threshold)


def renege_full(req, k: int, mu: float, omega) -> bool:
    """Stay/renege decision with position, service rate and renege rates."""
    remaining_cost = req.waiting_cost_rate * expected_wait(k, mu, omega)
    return req.profit_rate * req.lifetime - remaining_cost >= 0.0


def renege_serving_rate(req, k: int, mu: float) -> bool:
    """Stay/renege decision with only the position and service rate known."""
    if mu <= 0:
        raise InvalidInputError("service rate must be positive")
    return k <= mu * req.profit_rate * req.lifetime / req.waiting_cost_rate


def renege_position(req, k: int, length: int, elapsed: float,
                    delta_k: int) -> tuple[bool, float | None]:
    """Stay/renege decision from observed queue progress alone.

    ``length`` is the queue length at entrance (including the request),
    ``k`` the current position, ``elapsed`` the waiting time so far. The
    progress-based serving-rate estimate is only trusted for the first
    delta_k observed departures; once the request has advanced past that
    probation band it waits unconditionally. Returns (wait, deadline): the
    deadline is the waiting time since entrance at which the in-band bound
    crosses the current position if it never changes again.
    """
    if k > length:
        raise InvalidInputError("position cannot exceed the entrance length")
    if k < 1:
        raise InvalidInputError("position must be at least 1 while queued")
    if length - k > delta_k:
        return True, None
    value = req.profit_rate * req.lifetime
    u = req.waiting_cost_rate
    if u <= 0:
        return True, None
    wait = k * (u * elapsed + value) <= length * value
    if not wait:
        return False, None
    deadline = value * (length - k) / (u * k) if k < length else None
    return True, deadline


def renege_avg_wait(req, mean_wait: float) -> bool:
    """Entrance-time decision from the published average accepted wait."""
    if mean_wait < 0:
        raise InvalidInputError("mean wait must be non-negative")
    return req.profit_rate * req.lifetime - req.waiting_cost_rate * mean_wait >= 0.0


def renege_blind(req, risk_factor: float) -> float:
    """Maximum waiting time a tenant with no queue knowledge will accept."""
    if risk_factor < 0:
        raise InvalidInputError("risk_factor must be non-negative")
    if req.waiting_cost_rate <= 0:
        return math.inf
    budget = risk_factor * req.profit_rate * req.lifetime - req.issue_cost
    return max(0.0, budget / req.waiting_cost_rate)


def end_profit(req, accepted: bool, wait: float) -> float:
    """Realized profit of one issued request."""
    if wait < 0:
        raise InvalidInputError("wait must be non-negative")
    cost = req.issue_cost + req.waiting_cost_rate * wait
    if accepted:
        return req.profit_rate * req.lifetime - cost
    return -cost
