"""Domain types, channel distributions, random streams and workload arithmetic."""
from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "EmptySupport",
    "NonPositiveRate",
    "ProbSumMismatch",
    "NegativeProb",
    "DuplicateRate",
    "ZeroRate",
    "NonMonotonicSlot",
    "DiscretePmf",
    "pmf_validate",
    "pmf_sample",
    "RandomStream",
    "workload_of",
    "truncated_poisson_sample",
    "truncated_exp_size",
    "RateWindow",
    "window_max_update",
    "ShortFlow",
    "LongFlow",
    "UNBOUNDED",
    "LINK_G",
    "LINK_P",
    "LINK_R",
    "BUILTIN_LINKS",
]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
GOLDEN_STREAM = 0xD1B54A32D192ED03
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB
UNIT = 2.0**-53

# Learning window length meaning "never forget".
UNBOUNDED = None


class EmptySupport(ValueError):
    pass


class NonPositiveRate(ValueError):
    pass


class ProbSumMismatch(ValueError):
    pass


class NegativeProb(ValueError):
    pass


class DuplicateRate(ValueError):
    pass


class ZeroRate(ValueError):
    pass


class NonMonotonicSlot(ValueError):
    pass


@dataclass(frozen=True)
class DiscretePmf:
    """Finite-support distribution of a link rate (bits per slot).

    ``rates`` is strictly increasing and ``probs`` sums to one.  Build
    instances through :func:`pmf_validate` so both invariants hold.
    """

    rates: tuple[int, ...]
    probs: tuple[float, ...]
    cdf: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        acc = 0.0
        cdf = []
        for p in self.probs:
            acc += p
            cdf.append(acc)
        cdf[-1] = 1.0
        object.__setattr__(self, "cdf", tuple(cdf))

    def max_rate(self) -> int:
        return self.rates[-1]

    def p_at_max(self) -> float:
        return self.probs[-1]

    def mean(self) -> float:
        return sum(r * p for r, p in zip(self.rates, self.probs))

    def __len__(self):
        return len(self.rates)

    def outcomes(self) -> list[tuple[int, float]]:
        return list(zip(self.rates, self.probs))


def pmf_validate(outcomes: Iterable[tuple[int, float]]) -> DiscretePmf:
    """Check ``(rate, prob)`` pairs and sort them into a :class:`DiscretePmf`.

    Sums within 1e-9 of one are accepted and renormalized only when they
    miss by more than 1e-12, so a validated pmf read back compares equal.
    """
    pairs = [(r, float(p)) for r, p in outcomes]
    if not pairs:
        raise EmptySupport("rate distribution needs at least one outcome")
    for r, p in pairs:
        if int(r) != r or r <= 0:
            raise NonPositiveRate(f"rate {r!r} is not a positive integer")
        if p < 0:
            raise NegativeProb(f"probability {p!r} for rate {r} is negative")
    total = math.fsum(p for _, p in pairs)
    if abs(total - 1.0) > 1e-9:
        raise ProbSumMismatch(f"probabilities sum to {total!r}, expected 1")
    pairs.sort(key=lambda rp: rp[0])
    rates = tuple(int(r) for r, _ in pairs)
    if len(set(rates)) != len(rates):
        raise DuplicateRate(f"rates {rates} contain duplicates")
    scale = 1.0 if abs(total - 1.0) <= 1e-12 else total
    probs = tuple(p / scale for _, p in pairs)
    return DiscretePmf(rates, probs)


LINK_G = pmf_validate([(10, 0.2), (20, 0.2), (30, 0.2), (40, 0.2), (50, 0.2)])
LINK_P = pmf_validate([(5, 0.2), (10, 0.2), (15, 0.2), (20, 0.2), (25, 0.2)])
LINK_R = pmf_validate([(10, 0.5), (20, 0.2), (30, 0.2), (40, 0.09), (100, 0.01)])
BUILTIN_LINKS = {"G": LINK_G, "P": LINK_P, "R": LINK_R}


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * MIX_B) & MASK64
    return z ^ (z >> 31)


def slot_key(seed: int, slot: int) -> int:
    return mix64((mix64(int(seed) & MASK64) + (int(slot) + 1) * GOLDEN) & MASK64)


def stream_key(seed: int, slot: int, stream: int) -> int:
    return mix64((slot_key(seed, slot) + (int(stream) + 1) * GOLDEN_STREAM) & MASK64)


def keyed_uniform(key: int, index: int) -> float:
    """The ``index``-th uniform of the stream identified by ``key``."""
    # int() keeps numpy integers from overflowing in the fallback kernels
    return (mix64((int(key) + (int(index) + 1) * GOLDEN) & MASK64) >> 11) * UNIT


class RandomStream:
    """SplitMix64 stream of uniforms in [0, 1).

    The simulation kernels key one stream per (slot, purpose) with
    :meth:`for_slot`; the j-th draw of that stream is exactly the uniform
    the kernel uses at index j.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int = 0):
        self._state = mix64(seed & MASK64)

    @classmethod
    def for_slot(cls, seed: int, slot: int, stream: int) -> "RandomStream":
        obj = cls.__new__(cls)
        obj._state = stream_key(seed, slot, stream)
        return obj

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN) & MASK64
        return mix64(self._state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * UNIT

    def choice_index(self, n: int) -> int:
        """Uniform index in ``range(n)`` from a single draw."""
        k = int(self.random() * n)
        return n - 1 if k >= n else k

    def copy(self) -> "RandomStream":
        obj = RandomStream.__new__(RandomStream)
        obj._state = self._state
        return obj


def pmf_sample(pmf: DiscretePmf, rng: RandomStream) -> int:
    return pmf.rates[bisect.bisect_right(pmf.cdf, rng.random())]


def workload_of(residual_bits: int, best_rate: int) -> int:
    """Slots needed to clear ``residual_bits`` at ``best_rate`` bits per slot."""
    if best_rate <= 0:
        raise ZeroRate("best rate must be positive")
    return (residual_bits + best_rate - 1) // best_rate


def truncated_poisson_from_uniform(u: float, mean: float, max_value: int) -> int:
    # inversion; the tail mass above the cap collapses onto the cap
    p = math.exp(-mean)
    cum = p
    k = 0
    while u >= cum and k < max_value:
        k += 1
        p = p * mean / k
        cum += p
    return k


def truncated_poisson_sample(mean: float, max_value: int, rng: RandomStream) -> int:
    return truncated_poisson_from_uniform(rng.random(), mean, max_value)


def truncated_exp_from_uniform(u: float, mean: float, max_value: int) -> int:
    x = -mean * math.log(1.0 - u)
    if x > max_value:
        x = float(max_value)
    n = int(math.floor(x + 0.5))
    return n if n >= 1 else 1


def truncated_exp_size(mean: float, max_value: int, rng: RandomStream) -> int:
    """Flow size in bits: exponential draw, capped, rounded, at least one bit."""
    return truncated_exp_from_uniform(rng.random(), mean, max_value)


class RateWindow:
    """Sliding maximum of observed rates over slots ``[t - D, t]``.

    Uses a monotone deque, so each observation is pushed and popped at most
    once.  With ``D = UNBOUNDED`` only the running maximum is stored.
    """

    __slots__ = ("D", "_dq", "_max", "_last")

    def __init__(self, D: int | None = UNBOUNDED):
        if D is not None and D < 0:
            raise ValueError("learning period must be non-negative")
        self.D = D
        self._dq: deque[tuple[int, int]] = deque()
        self._max = 0
        self._last: int | None = None

    def push(self, slot: int, rate: int) -> int:
        if self._last is not None and slot <= self._last:
            raise NonMonotonicSlot(f"slot {slot} does not follow slot {self._last}")
        self._last = slot
        if self.D is None:
            if rate > self._max:
                self._max = rate
            return self._max
        dq = self._dq
        while dq and dq[-1][1] <= rate:
            dq.pop()
        dq.append((slot, rate))
        lo = slot - self.D
        while dq[0][0] < lo:
            dq.popleft()
        self._max = dq[0][1]
        return self._max

    @property
    def learned_max(self) -> int:
        return self._max

    @property
    def last_slot(self) -> int | None:
        return self._last


def window_max_update(
    rate_window: Sequence[tuple[int, int]],
    new_obs: tuple[int, int],
    D: int | None,
) -> tuple[list[tuple[int, int]], int]:
    """Functional form over an explicit FIFO of ``(slot, rate)`` pairs.

    Returns the retained window (slots in ``[new_slot - D, new_slot]``) and
    its maximum rate.
    """
    slot, rate = new_obs
    if rate_window and slot <= rate_window[-1][0]:
        raise NonMonotonicSlot(f"slot {slot} does not follow slot {rate_window[-1][0]}")
    if D is None:
        best = max([rate] + [r for _, r in rate_window])
        return [(slot, best)], best
    kept = [(s, r) for s, r in rate_window if s >= slot - D]
    kept.append((slot, rate))
    return kept, max(r for _, r in kept)


@dataclass
class ShortFlow:
    """A flow with a finite number of bits that leaves once they are sent."""

    id: int
    class_id: int
    arrival_slot: int
    residual_bits: int
    original_size: int
    pmf: DiscretePmf
    learned_max: int = 0
    age: int = 0

    def capped_age(self, tau_bar: int) -> int:
        return min(tau_bar, self.age)

    @property
    def true_max(self) -> int:
        return self.pmf.max_rate()


@dataclass
class LongFlow:
    """A persistent flow with a bit queue at the base station."""

    id: int
    queue_bits: int
    pmf: DiscretePmf
    arrival_mean: float = 1.0
    arrival_max: int = 10
    injection_end_slot: int | None = None
