"""Necessary stability conditions as an LP over long-flow channel states.

For long flows with mean bit rates ``x_l`` and short classes with arrival
rates ``lambda_k``, the traffic is supportable only if time-sharing
fractions ``p[c, l]`` (serve long flow ``l`` in joint state ``c``) and
``mu[c]`` (serve some short flow in state ``c``) exist with

* ``x_l <= sum_c pi_c p[c, l] R[c, l]`` for every long flow,
* ``sum_k lambda_k E[ceil(F_k / Rmax_k)] <= sum_c pi_c mu[c]``,
* ``sum_l p[c, l] + mu[c] <= 1`` for every state,

all variables non-negative.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import DiscretePmf
from .lp import LPResult, NumericalFailure, lp_feasible

MAX_STATES = 10**6
DEFAULT_EPS = 1e-6


class StateSpaceTooLarge(ValueError):
    pass


class Verdict(enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class LongTraffic:
    pmf: DiscretePmf
    mean_rate: float  # bits per slot


@dataclass(frozen=True)
class ShortClass:
    pmf: DiscretePmf
    size_pmf: tuple[tuple[int, float], ...]  # (bits, probability)
    arrival_rate: float  # flows per slot


@dataclass(frozen=True)
class SupportabilityInstance:
    long_flows: tuple[LongTraffic, ...] = ()
    short_classes: tuple[ShortClass, ...] = ()

    def scaled(self, factor: float) -> "SupportabilityInstance":
        return SupportabilityInstance(
            tuple(LongTraffic(f.pmf, f.mean_rate * factor) for f in self.long_flows),
            tuple(
                ShortClass(c.pmf, c.size_pmf, c.arrival_rate * factor)
                for c in self.short_classes
            ),
        )


@dataclass
class StateSpace:
    rates: np.ndarray  # (C, L) integer rate of each long flow in each state
    probs: np.ndarray  # (C,)

    def __len__(self):
        return len(self.probs)


@dataclass
class Support:
    feasible: bool
    p: np.ndarray | None  # (C, L)
    mu: np.ndarray | None  # (C,)
    states: StateSpace
    phase1_value: float


def expected_workload(size_pmf: Sequence[tuple[int, float]], best_rate: int) -> float:
    """``E[ceil(F / best_rate)]`` summed exactly over the integer size pmf."""
    return math.fsum(p * ((f + best_rate - 1) // best_rate) for f, p in size_pmf)


def class_workload_rate(cls: ShortClass) -> float:
    return cls.arrival_rate * expected_workload(cls.size_pmf, cls.pmf.max_rate())


def short_workload_rate(instance: SupportabilityInstance) -> float:
    return math.fsum(class_workload_rate(c) for c in instance.short_classes)


def enumerate_states(long_pmfs: Sequence[DiscretePmf], max_states: int = MAX_STATES) -> StateSpace:
    count = 1
    for p in long_pmfs:
        count *= len(p)
    if count > max_states:
        raise StateSpaceTooLarge(f"{count} joint states exceed the limit of {max_states}")
    rates = np.zeros((count, len(long_pmfs)), dtype=np.int64)
    probs = np.ones(count)
    for c, combo in enumerate(itertools.product(*(p.outcomes() for p in long_pmfs))):
        for l, (r, pr) in enumerate(combo):
            rates[c, l] = r
            probs[c] *= pr
    return StateSpace(rates, probs)


def build_lp(instance: SupportabilityInstance, states: StateSpace, eps: float = 0.0):
    """Constraint matrix over variables ``[p[0, :], ..., p[C-1, :], mu]``."""
    C = len(states)
    L = len(instance.long_flows)
    nv = C * L + C
    A = []
    b = []
    scale = 1.0 + eps
    for l, f in enumerate(instance.long_flows):
        row = np.zeros(nv)
        for c in range(C):
            row[c * L + l] = -states.probs[c] * states.rates[c, l]
        A.append(row)
        b.append(-scale * f.mean_rate)
    row = np.zeros(nv)
    row[C * L :] = -states.probs
    A.append(row)
    b.append(-scale * short_workload_rate(instance))
    for c in range(C):
        row = np.zeros(nv)
        row[c * L : (c + 1) * L] = 1.0
        row[C * L + c] = 1.0
        A.append(row)
        b.append(1.0)
    return np.array(A), np.array(b), nv


def check_supportable(
    instance: SupportabilityInstance, eps: float = 0.0, states: StateSpace | None = None
) -> Support:
    """Feasibility of the necessary conditions with loads scaled by ``1 + eps``."""
    if states is None:
        states = enumerate_states([f.pmf for f in instance.long_flows])
    A, b, nv = build_lp(instance, states, eps)
    res: LPResult = lp_feasible(A, b, n_vars=nv)
    C, L = len(states), len(instance.long_flows)
    if not res.feasible:
        return Support(False, None, None, states, res.phase1_value)
    x = res.x
    return Support(True, x[: C * L].reshape(C, L), x[C * L :], states, res.phase1_value)


def constraint_violation(instance: SupportabilityInstance, support: Support) -> float:
    """Largest violation of the three constraint families by a witness."""
    st = support.states
    p, mu = support.p, support.mu
    worst = max(0.0, -float(p.min()) if p.size else 0.0, -float(mu.min()))
    for l, f in enumerate(instance.long_flows):
        served = float(np.dot(st.probs, p[:, l] * st.rates[:, l]))
        worst = max(worst, f.mean_rate - served)
    worst = max(worst, short_workload_rate(instance) - float(np.dot(st.probs, mu)))
    worst = max(worst, float((p.sum(axis=1) + mu - 1.0).max()))
    return worst


def classify(instance: SupportabilityInstance, eps: float = DEFAULT_EPS) -> Verdict:
    states = enumerate_states([f.pmf for f in instance.long_flows])
    if check_supportable(instance, eps, states).feasible:
        return Verdict.INTERIOR
    if check_supportable(instance, 0.0, states).feasible:
        return Verdict.BOUNDARY
    return Verdict.INFEASIBLE


def boundary_load(
    template: Callable[[float], SupportabilityInstance],
    tol: float = 1e-3,
    start: float = 1.0,
) -> float:
    """Bisection for the largest load parameter that stays supportable.

    ``template(lam)`` builds the instance; feasibility must be monotone in
    ``lam``.  Returns ``lam*`` with feasible ``lam* - tol`` and infeasible
    ``lam* + tol``.
    """
    cache = {}

    def feasible(lam):
        if lam not in cache:
            cache[lam] = check_supportable(template(lam)).feasible
        return cache[lam]

    lo, hi = 0.0, start
    while feasible(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e9:
            raise NumericalFailure("load stays supportable beyond 1e9")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- discretized traffic distributions ----------------------------------------


def truncated_exp_size_pmf(mean: float, max_value: int) -> tuple[tuple[int, float], ...]:
    """Exact pmf of ``max(1, round(min(Exp(mean), max_value)))``.

    Rounding is half-up, so size ``f`` collects the draws in
    ``[f - 0.5, f + 0.5)``; the clamp adds ``[0, 0.5)`` to size 1 and the
    cap adds every draw at or above ``max_value - 0.5`` to ``max_value``.
    """

    def surv(x):
        return math.exp(-x / mean) if x > 0 else 1.0

    out = []
    for f in range(1, max_value + 1):
        lo = 0.0 if f == 1 else f - 0.5
        p = surv(lo) if f == max_value else surv(lo) - surv(f + 0.5)
        out.append((f, p))
    return tuple(out)


def truncated_poisson_pmf(mean: float, max_value: int) -> list[float]:
    probs = []
    p = math.exp(-mean)
    for k in range(max_value):
        probs.append(p)
        p = p * mean / (k + 1)
    probs.append(max(0.0, 1.0 - math.fsum(probs)))
    return probs


def truncated_poisson_mean(mean: float, max_value: int) -> float:
    return math.fsum(k * p for k, p in enumerate(truncated_poisson_pmf(mean, max_value)))


def witness_rows(support: Support):
    st = support.states
    for c in range(len(st)):
        yield [c, *st.rates[c].tolist(), st.probs[c], *support.p[c].tolist(), support.mu[c]]


def witness_header(n_long: int) -> list[str]:
    return (
        ["state"]
        + [f"R_{l}" for l in range(n_long)]
        + ["pi"]
        + [f"p_{l}" for l in range(n_long)]
        + ["mu"]
    )


def instance_from_scenario(scenario) -> SupportabilityInstance:
    """Long-run traffic of a simulation scenario.

    M-flows inject for a bounded time, so their long-run rate is zero and
    they are left out.  Arrival counts are truncated Poisson, so their exact
    truncated means are used.
    """
    longs = tuple(
        LongTraffic(f.pmf, truncated_poisson_mean(f.arrival_mean, f.arrival_max))
        for f in scenario.long_flows
        if f.injection_end is None
    )
    shorts = tuple(
        ShortClass(
            c.pmf,
            truncated_exp_size_pmf(c.size_mean, c.size_max),
            truncated_poisson_mean(c.arrival_rate, c.arrival_max),
        )
        for c in scenario.short_classes
    )
    return SupportabilityInstance(longs, shorts)


def grid_feasible(instance: SupportabilityInstance, step: float = 0.01) -> bool:
    """Brute-force check on a ``step`` grid, for at most one long flow.

    In each state, giving the short side every slot the long flow does not
    use (``mu = 1 - p``) is never worse, so only ``p`` is gridded.
    """
    if len(instance.long_flows) > 1:
        raise ValueError("grid oracle handles at most one long flow")
    states = enumerate_states([f.pmf for f in instance.long_flows])
    need_short = short_workload_rate(instance)
    need_long = instance.long_flows[0].mean_rate if instance.long_flows else 0.0
    k = int(round(1.0 / step))
    grid = np.arange(k + 1) / k
    served = np.zeros(1)
    spare = np.zeros(1)
    for c in range(len(states)):
        pi = states.probs[c]
        rate = states.rates[c, 0] if instance.long_flows else 0
        served = (served[:, None] + pi * rate * grid[None, :]).ravel()
        spare = (spare[:, None] + pi * (1.0 - grid)[None, :]).ravel()
    tol = 1e-12
    return bool(np.any((served >= need_long - tol) & (spare >= need_short - tol)))
