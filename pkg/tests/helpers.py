"""Shared test oracles, kept independent of the implementation paths they
check: exact-rational region enumeration, a truncated balance-equation
linear solve, closed-form series integrals, and a literal pass-by-pass
interpreter of the queue-serving algorithm."""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def rational_regions(resources, costs):
    """Enumerate feasible/admissible states in exact rational arithmetic.

    ``costs`` is a list of per-type cost tuples. Returns (feasible set,
    admissible set).
    """
    res = [Fraction(str(r)) for r in resources]
    cost = [[Fraction(str(c)) for c in row] for row in costs]
    n = len(cost)
    m = len(res)

    def ok(state):
        return all(
            sum(cost[t][i] * state[t] for t in range(n)) <= res[i]
            for i in range(m)
        )

    feasible = set()
    stack = [(0,) * n]
    feasible.add((0,) * n)
    while stack:
        s = stack.pop()
        for t in range(n):
            child = s[:t] + (s[t] + 1,) + s[t + 1:]
            if child not in feasible and ok(child):
                feasible.add(child)
                stack.append(child)
    admissible = {
        s for s in feasible
        if any(s[:t] + (s[t] + 1,) + s[t + 1:] in feasible for t in range(n))
    }
    return feasible, admissible


def balance_equation_pmf(lam, mu, alpha, beta, tail=1e-12, max_states=4000):
    """Stationary law of the impatient queue from its generator, solved as a
    linear system on a truncated state space.

    Birth from length l runs at lam * delta^(l+1) (the arrival counts itself
    when balking); death from length l runs at mu + l*alpha (every waiting
    request, head included, may abandon).
    """
    delta = math.exp(-beta / mu)

    # find a truncation level with negligible tail via the product form
    probs = [1.0]
    term = 1.0
    for l in range(1, max_states):
        term *= lam * delta**l / (mu + l * alpha)
        probs.append(term)
        if term < tail * sum(probs):
            break
    n = len(probs) + 5

    gen = np.zeros((n, n))
    for l in range(n):
        if l + 1 < n:
            birth = lam * delta ** (l + 1)
            gen[l, l + 1] = birth
            gen[l, l] -= birth
        if l > 0:
            death = mu + l * alpha
            gen[l, l - 1] = death
            gen[l, l] -= death
    # stationary distribution: pi @ gen = 0, sum(pi) = 1
    a = np.vstack([gen.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return np.clip(pi, 0.0, None) / pi.sum()


def tv_distance(p, q):
    """Total-variation distance between two PMFs over aligned indexes."""
    n = max(len(p), len(q))
    pa = np.zeros(n)
    qa = np.zeros(n)
    pa[: len(p)] = p
    qa[: len(q)] = q
    return 0.5 * float(np.abs(pa - qa).sum())


def tv_from_dict(emp: dict, model: np.ndarray) -> float:
    """TV distance between a {length: prob} dict and a dense PMF."""
    top = max(
        max((k[0] if isinstance(k, tuple) else k) for k in emp) + 1 if emp else 1,
        len(model),
    )
    pa = np.zeros(top)
    for k, v in emp.items():
        idx = k[0] if isinstance(k, tuple) else k
        pa[idx] = v
    qa = np.zeros(top)
    qa[: len(model)] = model
    return 0.5 * float(np.abs(pa - qa).sum())


def series_norm_oracle(lam, mu, alpha, beta, p0, p_accept_and_join, terms=60):
    """Closed-form integral of the accepted-wait series via Beta functions.

    integral_0^inf e^{-(mu+alpha)W} (1-e^{-alpha W})^l dW
        = B(gamma+1, l+1)/alpha with gamma = mu/alpha.
    """
    delta = math.exp(-beta / mu)
    gamma = mu / alpha
    total = 0.0
    for l in range(1, terms):
        c = delta ** (l * (l + 1) // 2) / (
            math.factorial(l) * math.factorial(l - 1)
        )
        logbeta = (
            math.lgamma(gamma + 1) + math.lgamma(l + 1) - math.lgamma(gamma + l + 2)
        )
        total += c * math.exp(logbeta) / alpha
    return p0 * alpha * total / p_accept_and_join


def series_mean_oracle(lam, mu, alpha, beta, terms=40):
    """Closed-form (integral W * shape, integral shape) of the accepted-wait
    series, via binomial expansion of (1 - e^{-alpha W})^l."""
    delta = math.exp(-beta / mu)
    num = 0.0
    den = 0.0
    for l in range(1, terms):
        c = delta ** (l * (l + 1) // 2) / (
            math.factorial(l) * math.factorial(l - 1)
        )
        for i in range(l + 1):
            coef = c * (-1) ** i * math.comb(l, i)
            rate = mu + alpha + i * alpha
            den += coef / rate
            num += coef / rate**2
    return num / den


def reference_serve(state, queues, columns, admissible, feasible_next):
    """Literal pass-by-pass interpreter of the queue-serving rules.

    ``queues`` maps type (1-based) to a list of request labels; ``columns``
    maps each admissible state to its preference vector; ``feasible_next``
    tells whether adding one slice of a type keeps the state feasible.
    Returns (final state, accepted labels in order).
    """
    state = tuple(state)
    queues = {t: list(q) for t, q in queues.items()}
    accepted = []
    while state in admissible:
        column = columns[state]
        before = state
        for pref in column:
            if pref == 0:
                break
            if not queues.get(pref):
                continue
            candidate = state[: pref - 1] + (state[pref - 1] + 1,) + state[pref:]
            if not feasible_next(candidate):
                continue
            accepted.append(queues[pref].pop(0))
            state = candidate
        if state == before:
            break
    return state, accepted
