"""Closed-form and semi-numeric results for a single request queue.

The model: Poisson arrivals at rate lambda, exogenous Poisson acceptance
epochs at rate mu while the queue is non-empty, exponential balking (an
arrival joins with probability exp(-beta * l / mu), where l counts the queue
including the arrival itself) and exponential reneging (every waiting
request abandons after an individual Exp(alpha) patience).

Without impatience the queue is the classic geometric-occupancy birth-death
system; with impatience the stationary distribution is a product over
per-level birth/death ratios.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import (
    DivergentQueueError,
    InvalidInputError,
    QuadratureError,
    SeriesTruncationError,
)


@dataclass(frozen=True)
class QueueParams:
    arrival_rate: float
    service_rate: float
    reneging_rate: float = 0.0
    balking_exponent: float = 0.0

    def __post_init__(self):
        if self.arrival_rate <= 0 or self.service_rate <= 0:
            raise InvalidInputError("arrival and service rates must be positive")
        if self.reneging_rate < 0 or self.balking_exponent < 0:
            raise InvalidInputError("impatience parameters must be non-negative")

    @property
    def workload(self) -> float:
        return self.arrival_rate / self.service_rate

    @property
    def join_decay(self) -> float:
        """Per-queue-position joining factor delta = exp(-beta/mu)."""
        return math.exp(-self.balking_exponent / self.service_rate)

    @property
    def patience_ratio(self) -> float | None:
        """gamma = mu/alpha, undefined without reneging."""
        if self.reneging_rate == 0:
            return None
        return self.service_rate / self.reneging_rate


@dataclass(frozen=True)
class TruncationConfig:
    series_tail_tol: float = 1e-14
    max_terms: int = 10_000
    quadrature_abs_tol: float = 1e-9
    quadrature_max_depth: int = 200

    def __post_init__(self):
        if self.series_tail_tol <= 0 or self.quadrature_abs_tol <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.max_terms < 1 or self.quadrature_max_depth < 1:
            raise InvalidInputError("term/depth budgets must be positive")


DEFAULT_TRUNCATION = TruncationConfig()


def mm1_pmf(params: QueueParams, length: int) -> float:
    """Stationary probability of the patient queue holding ``length`` requests."""
    if params.reneging_rate != 0 or params.balking_exponent != 0:
        raise InvalidInputError("mm1_pmf applies to the patient queue only")
    if length < 0:
        raise InvalidInputError("queue length must be non-negative")
    rho = params.workload
    if rho >= 1:
        raise DivergentQueueError(
            f"workload {rho:.4g} >= 1: patient queue has no steady state"
        )
    return (1.0 - rho) * rho**length


def little_mean_length(arrival_rate: float, mean_wait: float) -> float:
    """Mean queue length from the arrival rate and mean waiting time."""
    if arrival_rate < 0 or mean_wait < 0:
        raise InvalidInputError("inputs must be non-negative")
    return arrival_rate * mean_wait


def wait_cdf(params: QueueParams, wait: float) -> float:
    """CDF of a patient request's waiting time: Exp(mu - lambda)."""
    if params.reneging_rate != 0 or params.balking_exponent != 0:
        raise InvalidInputError("wait_cdf applies to the patient queue only")
    if params.workload >= 1:
        raise DivergentQueueError(
            f"workload {params.workload:.4g} >= 1: waiting time diverges"
        )
    if wait < 0:
        return 0.0
    return 1.0 - math.exp(-(params.service_rate - params.arrival_rate) * wait)


def balking_prob(model: str, params: QueueParams, length: int,
                 l_max: int | None = None) -> float:
    """Probability that an arrival joins a queue of the given length.

    ``linear`` needs the truncation length l_max; ``hyperbolic`` uses the
    balking exponent as a patience factor; ``exponential`` scales the length
    by the serving rate.
    """
    if length < 0:
        raise InvalidInputError("queue length must be non-negative")
    if model == "linear":
        if l_max is None or l_max <= 0:
            raise InvalidInputError("linear balking requires a positive l_max")
        return min(1.0, max(0.0, 1.0 - length / l_max))
    if model == "hyperbolic":
        if length == 0:
            return 1.0
        return min(1.0, params.balking_exponent / length)
    if model == "exponential":
        return math.exp(-params.balking_exponent * length / params.service_rate)
    raise InvalidInputError(f"unknown balking model {model!r}")


def impatient_pmf(params: QueueParams,
                  cfg: TruncationConfig = DEFAULT_TRUNCATION) -> np.ndarray:
    """Stationary queue-length PMF under exponential balking and reneging.

    p(l) = p(0) * prod_{i=1..l} lambda*delta^i / (mu + i*alpha), normalized
    over the truncated support. Falls back to the geometric law when both
    impatience parameters are zero.
    """
    lam, mu = params.arrival_rate, params.service_rate
    alpha, delta = params.reneging_rate, params.join_decay
    if alpha == 0 and params.balking_exponent == 0:
        rho = params.workload
        if rho >= 1:
            raise DivergentQueueError("workload >= 1 and no impatience")
        # geometric, truncated where the tail drops below the tolerance
        n = max(2, int(math.log(cfg.series_tail_tol) / math.log(rho)) + 2)
        probs = (1 - rho) * rho ** np.arange(n)
        return probs / probs.sum()

    terms = [1.0]
    term = 1.0
    small_streak = 0
    total = 1.0
    for i in range(1, cfg.max_terms + 1):
        term *= lam * delta**i / (mu + i * alpha)
        terms.append(term)
        total += term
        if term < cfg.series_tail_tol * total:
            small_streak += 1
            if small_streak >= 10:
                break
        else:
            small_streak = 0
    else:
        raise SeriesTruncationError(
            f"stationary series did not settle within {cfg.max_terms} terms"
        )
    probs = np.array(terms) / total
    return probs


@dataclass(frozen=True)
class JoinAcceptProbs:
    p_join: float
    p_accept: float
    p_accept_and_join: float
    p_accept_given_join: float
    degenerate: bool


def join_accept_probs(params: QueueParams,
                      cfg: TruncationConfig = DEFAULT_TRUNCATION) -> JoinAcceptProbs:
    """Joining and acceptance probabilities of an arriving request.

    Joining means entering a non-empty queue; an arrival that finds the queue
    empty counts toward acceptance only. The per-length acceptance factor is
    gamma / (gamma + j), taken as 1 when there is no reneging.
    """
    probs = impatient_pmf(params, cfg)
    delta = params.join_decay
    gamma = params.patience_ratio
    j = np.arange(len(probs))
    join_terms = probs * delta**j
    join_terms[0] = 0.0
    p_join = float(join_terms.sum())
    if gamma is None:
        accept_factor = np.ones_like(probs)
    else:
        accept_factor = gamma / (gamma + j)
    p_accept_and_join = float((join_terms * accept_factor).sum())
    p_accept = float(probs[0]) + p_accept_and_join
    if p_join <= 0.0:
        return JoinAcceptProbs(0.0, p_accept, 0.0, 1.0, degenerate=True)
    return JoinAcceptProbs(
        p_join=p_join,
        p_accept=p_accept,
        p_accept_and_join=p_accept_and_join,
        p_accept_given_join=p_accept_and_join / p_join,
        degenerate=False,
    )


def _quad(func, lo, hi, cfg: TruncationConfig, what: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(
                func, lo, hi,
                epsabs=cfg.quadrature_abs_tol,
                epsrel=cfg.quadrature_abs_tol,
                limit=cfg.quadrature_max_depth,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"{what}: {exc}") from exc
    if err > 10 * cfg.quadrature_abs_tol * max(1.0, abs(value)):
        raise QuadratureError(
            f"{what}: estimated error {err:.3g} exceeds tolerance"
        )
    return value


@dataclass(frozen=True)
class WaitDensities:
    """Waiting-time densities for accepted, reneged and all joined requests.

    ``raw_norm`` is the integral of the accepted-wait series before
    normalization; the closed-form series is not itself a proper density, so
    the accepted density is scaled to integrate to one and the deficit is
    surfaced here.
    """

    params: QueueParams
    probs: JoinAcceptProbs
    mean_accepted: float
    mean_reneged: float
    mean_joined: float
    raw_norm: float
    domain_cutoff: float
    _series_coeffs: np.ndarray
    _prefactor: float

    def _shape(self, w):
        w = np.asarray(w, dtype=float)
        mu, alpha = self.params.service_rate, self.params.reneging_rate
        x = -np.expm1(-alpha * w)
        series = np.zeros_like(x)
        xp = np.ones_like(x)
        for c in self._series_coeffs:
            xp = xp * x
            series += c * xp
        return np.exp(-(mu + alpha) * w) * series

    def f_accepted(self, w):
        """Density of the waiting time of requests accepted from the queue."""
        w = np.asarray(w, dtype=float)
        out = np.where(w < 0, 0.0, self._prefactor * self._shape(np.maximum(w, 0.0)))
        return out if out.ndim else float(out)

    def cumulative_weighted(self, w: float,
                            cfg: TruncationConfig = DEFAULT_TRUNCATION) -> float:
        """g(w) = integral_0^w exp(alpha*x) f_accepted(x) dx."""
        if w <= 0:
            return 0.0
        alpha = self.params.reneging_rate
        return _quad(
            lambda x: math.exp(alpha * x) * float(self.f_accepted(x)),
            0.0, w, cfg, "accepted-wait weighted cumulative",
        )

    def f_reneged(self, w, cfg: TruncationConfig = DEFAULT_TRUNCATION):
        """Density of the waiting time of requests that renege."""
        alpha = self.params.reneging_rate
        p = self.probs.p_accept_given_join
        wf = float(w)
        if wf < 0:
            return 0.0
        g = self.cumulative_weighted(wf, cfg)
        return alpha * math.exp(-alpha * wf) * (1.0 - p * g) / (1.0 - p)

    def f_joined(self, w, cfg: TruncationConfig = DEFAULT_TRUNCATION):
        """Density of the waiting time of every request that joins the queue."""
        alpha = self.params.reneging_rate
        p = self.probs.p_accept_given_join
        wf = float(w)
        if wf < 0:
            return 0.0
        g = self.cumulative_weighted(wf, cfg)
        return p * (float(self.f_accepted(wf)) - alpha * math.exp(-alpha * wf) * g) \
            + alpha * math.exp(-alpha * wf)


def wait_densities(params: QueueParams,
                   cfg: TruncationConfig = DEFAULT_TRUNCATION) -> WaitDensities:
    """Build the waiting-time densities and their means.

    Requires reneging (alpha > 0). Raises when no request is ever accepted
    out of a non-empty queue, since the accepted-wait density is then
    undefined.
    """
    if params.reneging_rate <= 0:
        raise InvalidInputError("wait densities require a positive reneging rate")
    probs_pmf = impatient_pmf(params, cfg)
    jp = join_accept_probs(params, cfg)
    if jp.degenerate or jp.p_accept_and_join <= 0:
        raise InvalidInputError(
            "no acceptance-from-queue mass: accepted-wait density undefined"
        )
    if 1.0 - jp.p_accept_given_join < 1e-12:
        raise InvalidInputError(
            "no reneging mass: reneged-wait density undefined"
        )

    mu, alpha = params.service_rate, params.reneging_rate
    delta = params.join_decay

    # series coefficients delta^(l(l+1)/2) / (l! (l-1)!)
    coeffs = []
    c = 1.0
    for l in range(1, cfg.max_terms + 1):
        c = delta ** (l * (l + 1) // 2) / (
            math.factorial(l) * math.factorial(l - 1)
        )
        if l > 1 and c < cfg.series_tail_tol * (coeffs[0] if coeffs else 1.0):
            break
        coeffs.append(c)
    coeffs = np.array(coeffs)

    # cut the domain where the exponential envelope bounds the tail below 1e-12
    envelope = coeffs.sum()
    cutoff = math.log(max(envelope, 1.0) / ((mu + alpha) * 1e-12)) / (mu + alpha)
    cutoff = max(cutoff, 10.0 / (mu + alpha))

    prefactor = probs_pmf[0] * alpha / jp.p_accept_and_join

    stub = WaitDensities(
        params=params, probs=jp,
        mean_accepted=float("nan"), mean_reneged=float("nan"),
        mean_joined=float("nan"),
        raw_norm=1.0, domain_cutoff=cutoff,
        _series_coeffs=coeffs, _prefactor=prefactor,
    )
    raw_norm = _quad(lambda w: prefactor * float(stub._shape(w)),
                     0.0, cutoff, cfg, "accepted-wait normalization")
    if raw_norm <= 0:
        raise QuadratureError("accepted-wait series integrated to zero")

    normalized_prefactor = prefactor / raw_norm
    mean_accepted = _quad(
        lambda w: w * normalized_prefactor * float(stub._shape(w)),
        0.0, cutoff, cfg, "accepted-wait mean",
    )
    p = jp.p_accept_given_join
    mean_joined = (1.0 - p) / alpha
    mean_reneged = 1.0 / alpha - p * mean_accepted / (1.0 - p)

    return WaitDensities(
        params=params, probs=jp,
        mean_accepted=mean_accepted,
        mean_reneged=mean_reneged,
        mean_joined=mean_joined,
        raw_norm=raw_norm,
        domain_cutoff=cutoff,
        _series_coeffs=coeffs,
        _prefactor=normalized_prefactor,
    )
