"""Empirical distributions, geometric/exponential maximum-likelihood fits,
KL divergence and per-request profit summaries."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# a fit counts as successful when it converged, explains the data within this
# KL budget, and had enough samples to mean anything
KLD_SUCCESS_THRESHOLD = 0.25
MIN_SUCCESS_SAMPLES = 30
MIN_FIT_SAMPLES = 10


@dataclass(frozen=True)
class EmpiricalPMF:
    """Relative frequencies of non-negative integer samples."""

    counts: tuple[int, ...]
    n: int

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalPMF":
        xs = [int(x) for x in samples]
        if not xs:
            raise InvalidInputError("need at least one sample")
        if any(x < 0 for x in xs):
            raise InvalidInputError("samples must be non-negative integers")
        counter = Counter(xs)
        top = max(counter)
        counts = tuple(counter.get(k, 0) for k in range(top + 1))
        return cls(counts=counts, n=len(xs))

    def prob(self, k: int) -> float:
        if 0 <= k < len(self.counts):
            return self.counts[k] / self.n
        return 0.0


@dataclass(frozen=True)
class FitResult:
    parameter: float
    converged: bool
    log_likelihood: float
    kld: float | None = None
    tail_diagnostic: float | None = None
    n: int = 0
    degenerate: bool = False


def fit_geometric(samples) -> FitResult:
    """MLE of a geometric distribution on {0, 1, 2, ...}: p = 1/(1 + mean)."""
    xs = np.asarray(list(samples), dtype=float)
    if xs.size == 0:
        raise InvalidInputError("cannot fit an empty sample")
    if xs.size < 2:
        raise InvalidInputError("need at least two samples")
    if (xs < 0).any():
        raise InvalidInputError("geometric samples must be non-negative")
    mean = float(xs.mean())
    p_hat = 1.0 / (1.0 + mean)
    degenerate = mean == 0.0
    converged = not degenerate and xs.size >= MIN_FIT_SAMPLES
    if degenerate:
        loglik = 0.0  # all mass at zero: p=1 fits exactly
    else:
        loglik = float(xs.size * math.log(p_hat) + xs.sum() * math.log(1.0 - p_hat))
    pmf = EmpiricalPMF.from_samples(xs.astype(int))
    kld = kld_vs_geometric(pmf, p_hat)
    return FitResult(parameter=p_hat, converged=converged, log_likelihood=loglik,
                     kld=kld, n=int(xs.size), degenerate=degenerate)


def kld_vs_geometric(pmf: EmpiricalPMF, p_hat: float) -> float:
    """KL divergence of the empirical PMF from geometric(p_hat), natural log."""
    if not 0.0 < p_hat <= 1.0:
        raise InvalidInputError("p_hat must lie in (0, 1]")
    total = 0.0
    for k, count in enumerate(pmf.counts):
        if count == 0:
            continue
        p_emp = count / pmf.n
        if p_hat == 1.0:
            if k > 0:
                return math.inf
            model = 1.0
        else:
            model = (1.0 - p_hat) ** k * p_hat
        total += p_emp * math.log(p_emp / model)
    return total


def fit_exponential(samples) -> FitResult:
    """MLE of an exponential rate, with a fat-tail diagnostic.

    The diagnostic is the ratio of the empirical 99th percentile to the
    fitted one; values well above 1 flag a heavier-than-exponential tail.
    """
    xs = np.asarray(list(samples), dtype=float)
    if xs.size == 0:
        raise InvalidInputError("cannot fit an empty sample")
    if xs.size < 2:
        raise InvalidInputError("need at least two samples")
    if (xs <= 0).any():
        raise InvalidInputError("exponential samples must be positive")
    mean = float(xs.mean())
    rate = 1.0 / mean
    fitted_q99 = math.log(100.0) / rate
    empirical_q99 = float(np.quantile(xs, 0.99))
    loglik = float(xs.size * math.log(rate) - rate * xs.sum())
    return FitResult(
        parameter=rate,
        converged=xs.size >= MIN_FIT_SAMPLES,
        log_likelihood=loglik,
        tail_diagnostic=empirical_q99 / fitted_q99,
        n=int(xs.size),
    )


def fit_success(fit: FitResult) -> bool:
    """Gate used by the campaign summaries to call a fit successful."""
    return (
        fit.converged
        and fit.kld is not None
        and fit.kld <= KLD_SUCCESS_THRESHOLD
        and fit.n >= MIN_SUCCESS_SAMPLES
    )


def profit_summary(records) -> dict[int, dict]:
    """Per-type end-profit summary over issued requests.

    Balked and capacity-rejected requests never issued, so they are excluded;
    reneged ones count with their losses. Requests still waiting at the end
    of a run carry no realized profit and are skipped too.
    """
    by_type: dict[int, list[float]] = {}
    for r in records:
        if r.end_profit is None or r.disposition not in ("accepted", "reneged"):
            continue
        by_type.setdefault(r.slice_type, []).append(r.end_profit)
    out = {}
    for t, profits in sorted(by_type.items()):
        n = len(profits)
        total = float(sum(profits))
        out[t] = {
            "n_issued": n,
            "total_profit": total,
            "mean_profit": total / n,
            "profiting_chance": sum(1 for p in profits if p > 0) / n,
            "empty": False,
        }
    return out


def profit_summary_or_empty(records, slice_type: int) -> dict:
    """Summary for one type, with an explicit empty marker when nothing issued."""
    table = profit_summary(records)
    if slice_type in table:
        return table[slice_type]
    return {
        "n_issued": 0,
        "total_profit": 0.0,
        "mean_profit": 0.0,
        "profiting_chance": 0.0,
        "empty": True,
    }


def floor_binned(values) -> np.ndarray:
    """Bin continuous gaps into whole operation periods (floor)."""
    arr = np.asarray(values, dtype=float)
    if (arr < 0).any():
        raise InvalidInputError("gaps must be non-negative")
    return np.floor(arr).astype(int)
