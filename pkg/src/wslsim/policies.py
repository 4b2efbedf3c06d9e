"""Scheduling policies as pure functions of a per-slot network snapshot.

Each ``*_decide`` function reads a :class:`NetworkState` and returns a
:class:`Decision` without touching the state.  Randomized choices take a
:class:`~wslsim.core.RandomStream` and consume exactly one draw, only when a
short flow has to be picked by the workload-based policies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import LongFlow, RandomStream, ShortFlow, workload_of

POLICY_NAMES = ("wslu", "wslo", "ws", "maxweight", "delay")
DEFAULT_ALPHA = 50.0
DEFAULT_D = 16
DEFAULT_TAU_BAR = 10**6


class EmptyCandidates(ValueError):
    pass


@dataclass(frozen=True)
class PolicyParams:
    name: str = "wslu"
    alpha: float = DEFAULT_ALPHA
    learning_period: int | None = DEFAULT_D  # None: never forget
    tau_bar: int = DEFAULT_TAU_BAR

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {POLICY_NAMES}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.learning_period is not None and self.learning_period < 1:
            raise ValueError("learning period must be >= 1 or None (unbounded)")
        if self.tau_bar < 1:
            raise ValueError("tau_bar must be >= 1")


@dataclass(frozen=True)
class Decision:
    kind: str  # "short", "long" or "idle"
    flow_id: int | None = None

    @classmethod
    def serve_short(cls, flow_id: int) -> "Decision":
        return cls("short", flow_id)

    @classmethod
    def serve_long(cls, flow_id: int) -> "Decision":
        return cls("long", flow_id)

    @classmethod
    def idle(cls) -> "Decision":
        return cls("idle")


IDLE = Decision.idle()


@dataclass
class NetworkState:
    slot: int
    short_flows: Sequence[ShortFlow] = ()
    long_flows: Sequence[LongFlow] = ()
    rates: Mapping[int, int] = field(default_factory=dict)
    hol_delays: Mapping[int, int] = field(default_factory=dict)

    def short_by_id(self, flow_id: int) -> ShortFlow:
        for f in self.short_flows:
            if f.id == flow_id:
                return f
        raise KeyError(flow_id)


def estimated_total_workload(state: NetworkState) -> int:
    return sum(
        workload_of(f.residual_bits, f.learned_max)
        for f in state.short_flows
        if f.residual_bits > 0
    )


def true_total_workload(state: NetworkState) -> int:
    return sum(
        workload_of(f.residual_bits, f.true_max)
        for f in state.short_flows
        if f.residual_bits > 0
    )


def _eligible(state: NetworkState, best) -> list[ShortFlow]:
    out = []
    for f in state.short_flows:
        if f.residual_bits <= 0:
            continue
        r = state.rates[f.id]
        if r >= f.residual_bits or r == best(f):
            out.append(f)
    return out


def eligible_short_set(state: NetworkState) -> set[int]:
    """Short flows whose current rate clears them or equals their learned best."""
    return {f.id for f in _eligible(state, lambda f: f.learned_max)}


def tiebreak_uniform(candidates: Sequence[int], rng: RandomStream) -> int:
    if not candidates:
        raise EmptyCandidates("no candidate flows")
    return candidates[rng.choice_index(len(candidates))]


def tiebreak_oldest(
    candidates: Sequence[int], state: NetworkState, tau_bar: int, rng: RandomStream
) -> int:
    """Pick the candidate with the largest capped age, uniformly among ties."""
    if not candidates:
        raise EmptyCandidates("no candidate flows")
    ages = {f.id: f.capped_age(tau_bar) for f in state.short_flows}
    top = max(ages[c] for c in candidates)
    return tiebreak_uniform([c for c in candidates if ages[c] == top], rng)


def _long_argmax(state: NetworkState) -> tuple[int, LongFlow | None]:
    best, arg = 0, None
    for f in state.long_flows:
        v = f.queue_bits * state.rates[f.id]
        if arg is None or v > best or (v == best and f.id < arg.id):
            best, arg = v, f
    return best, arg


def _workload_decide(state, params, workload, best, tiebreak, rng) -> Decision:
    rhs, larg = _long_argmax(state)
    if params.alpha * workload > rhs:
        cands = [f.id for f in _eligible(state, best)]
        if cands:
            if tiebreak == "oldest":
                return Decision.serve_short(
                    tiebreak_oldest(cands, state, params.tau_bar, rng)
                )
            return Decision.serve_short(tiebreak_uniform(cands, rng))
        backlogged = [f.id for f in state.short_flows if f.residual_bits > 0]
        return Decision.serve_short(tiebreak_uniform(backlogged, rng))
    if larg is None or rhs == 0:
        return IDLE
    return Decision.serve_long(larg.id)


def wsl_decide(
    state: NetworkState, params: PolicyParams, tiebreak: str, rng: RandomStream
) -> Decision:
    """Workload-based scheduling with learned best rates.

    Serves the short side when ``alpha`` times the estimated workload strictly
    exceeds the largest long-flow queue-rate product, otherwise the long flow
    attaining that product (lowest id on ties).
    """
    return _workload_decide(
        state,
        params,
        estimated_total_workload(state),
        lambda f: f.learned_max,
        tiebreak,
        rng,
    )


def ws_decide(
    state: NetworkState,
    params: PolicyParams,
    true_maxima: Mapping[int, int] | None = None,
    rng: RandomStream | None = None,
) -> Decision:
    """Workload-based scheduling with the true best rates (oracle policy)."""
    if true_maxima is None:
        true_maxima = {f.id: f.true_max for f in state.short_flows}
    workload = sum(
        workload_of(f.residual_bits, true_maxima[f.id])
        for f in state.short_flows
        if f.residual_bits > 0
    )
    return _workload_decide(
        state, params, workload, lambda f: true_maxima[f.id], "uniform", rng
    )


def _argmax_all(state: NetworkState, weight) -> Decision:
    best, choice = 0, IDLE
    best_id = math.inf
    for f in state.long_flows:
        if f.queue_bits <= 0:
            continue
        v = weight(f) * state.rates[f.id]
        if v > 0 and (v > best or (v == best and f.id < best_id)):
            best, best_id, choice = v, f.id, Decision.serve_long(f.id)
    for f in state.short_flows:
        if f.residual_bits <= 0:
            continue
        v = weight(f) * state.rates[f.id]
        if v > 0 and (v > best or (v == best and f.id < best_id)):
            best, best_id, choice = v, f.id, Decision.serve_short(f.id)
    return choice


def maxweight_decide(state: NetworkState) -> Decision:
    def queue(f):
        return f.queue_bits if isinstance(f, LongFlow) else f.residual_bits

    return _argmax_all(state, queue)


def delay_decide(state: NetworkState) -> Decision:
    return _argmax_all(state, lambda f: state.hol_delays.get(f.id, 0))


def decide(state: NetworkState, params: PolicyParams, rng: RandomStream) -> Decision:
    if params.name == "wslu":
        return wsl_decide(state, params, "uniform", rng)
    if params.name == "wslo":
        return wsl_decide(state, params, "oldest", rng)
    if params.name == "ws":
        return ws_decide(state, params, None, rng)
    if params.name == "maxweight":
        return maxweight_decide(state)
    return delay_decide(state)
