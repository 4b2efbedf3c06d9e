"""Streaming statistics over slot reports, and CSV output."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class OutOfOrderSlot(ValueError):
    pass


class AccountingMismatch(RuntimeError):
    """Flow or bit accounting does not balance; indicates an engine bug."""


@dataclass
class MetricsReport:
    mean_delay: float
    delay_std: float
    departures: int
    avg_n_short: float
    avg_n_short_all: float
    avg_queue_long: tuple[float, ...]
    avg_queue_mflow: tuple[float, ...]
    blocking_prob: float
    offered: int
    blocked: int
    e_miss_freq: float
    short_decisions: int
    growth: tuple[float, float, float]
    final_n_short: int
    final_queue_long: tuple[int, ...]

    @property
    def growth_ratio(self) -> float:
        first, _, last = self.growth
        if first > 0:
            return last / first
        return math.inf if last > 0 else 1.0


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


@dataclass
class DelayStats:
    """Mergeable (count, sum, sum of squares) triple."""

    count: int = 0
    total: float = 0.0
    sumsq: float = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        self.total += x
        self.sumsq += x * x

    def merge(self, other: "DelayStats") -> "DelayStats":
        return DelayStats(
            self.count + other.count, self.total + other.total, self.sumsq + other.sumsq
        )

    @property
    def mean(self) -> float:
        return _ratio(self.total, self.count)

    @property
    def std(self) -> float:
        # sample (n - 1) standard deviation
        if self.count == 0:
            return math.nan
        if self.count == 1:
            return 0.0
        var = (self.sumsq - self.total * self.total / self.count) / (self.count - 1)
        return math.sqrt(max(var, 0.0))


@dataclass
class MetricsAccumulator:
    """Aggregates :class:`~wslsim.engine.SlotReport` objects one slot at a time.

    Statistics are taken over post-warmup slots, sampled at the end of each
    slot.  Flow accounting (admitted, departed, blocked) spans the whole run.
    """

    warmup: int
    horizon: int
    n_long: int = 0
    n_mflow: int = 0
    delays: DelayStats = field(default_factory=DelayStats)
    n_sum: float = 0.0
    n_sum_all: float = 0.0
    slots: int = 0
    slots_all: int = 0
    third_sum: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    third_n: list = field(default_factory=lambda: [0, 0, 0])
    short_decisions: int = 0
    emiss: int = 0
    offered: int = 0
    blocked: int = 0
    queue_sum: list = field(default_factory=list)
    mflow_sum: list = field(default_factory=list)
    admitted_all: int = 0
    blocked_all: int = 0
    departed_all: int = 0
    final_n_short: int = 0
    final_queue_long: tuple = ()
    last_slot: int = -1

    def __post_init__(self):
        if not self.queue_sum:
            self.queue_sum = [0.0] * self.n_long
        if not self.mflow_sum:
            self.mflow_sum = [0.0] * self.n_mflow

    def observe(self, report) -> None:
        t = report.slot
        if t <= self.last_slot:
            raise OutOfOrderSlot(f"slot {t} after slot {self.last_slot}")
        self.last_slot = t
        post = t >= self.warmup
        self.admitted_all += report.admitted
        self.blocked_all += report.blocked
        self.departed_all += len(report.departures)
        self.final_n_short = report.n_sflows
        self.final_queue_long = tuple(report.long_queues)
        self.n_sum_all += report.n_sflows
        self.slots_all += 1
        if not post:
            return
        for _, delay in report.departures:
            self.delays.add(delay)
        self.offered += report.admitted + report.blocked
        self.blocked += report.blocked
        self.n_sum += report.n_sflows
        self.slots += 1
        third = (t - self.warmup) * 3 // (self.horizon - self.warmup)
        self.third_sum[third] += report.n_sflows
        self.third_n[third] += 1
        if report.short_branch:
            self.short_decisions += 1
            self.emiss += int(report.emiss)
        for l, q in enumerate(report.long_queues):
            self.queue_sum[l] += q
        for m, q in enumerate(report.mflow_bits):
            self.mflow_sum[m] += q

    def check_accounting(self) -> None:
        offered_all = self.admitted_all + self.blocked_all
        if self.departed_all + self.final_n_short + self.blocked_all != offered_all:
            raise AccountingMismatch(
                f"departed {self.departed_all} + present {self.final_n_short} + "
                f"blocked {self.blocked_all} != offered {offered_all}"
            )

    def finalize(self) -> MetricsReport:
        self.check_accounting()
        return MetricsReport(
            mean_delay=self.delays.mean,
            delay_std=self.delays.std,
            departures=self.delays.count,
            avg_n_short=_ratio(self.n_sum, self.slots),
            avg_n_short_all=_ratio(self.n_sum_all, self.slots_all),
            avg_queue_long=tuple(_ratio(q, self.slots) for q in self.queue_sum),
            avg_queue_mflow=tuple(_ratio(q, self.slots) for q in self.mflow_sum),
            blocking_prob=_ratio(self.blocked, self.offered),
            offered=self.offered,
            blocked=self.blocked,
            e_miss_freq=_ratio(self.emiss, self.short_decisions),
            short_decisions=self.short_decisions,
            growth=tuple(_ratio(s, c) for s, c in zip(self.third_sum, self.third_n)),
            final_n_short=self.final_n_short,
            final_queue_long=self.final_queue_long,
        )


def merge_delays(stats: Iterable[DelayStats]) -> DelayStats:
    out = DelayStats()
    for s in stats:
        out = out.merge(s)
    return out


def fmt(value) -> str:
    """Render one CSV cell; floats keep 6 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write ``header`` then ``rows``; overwrites ``path``."""
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


SUMMARY_BASE = [
    "seed",
    "policy",
    "lambda",
    "D",
    "alpha",
    "mean_delay",
    "delay_std",
    "avg_n_short",
    "avg_n_short_all",
]
SUMMARY_TAIL = [
    "blocking_prob",
    "e_miss_freq",
    "growth_first",
    "growth_mid",
    "growth_last",
]


def summary_header(n_long: int, n_mflow: int, extra: Sequence[str] = ()) -> list[str]:
    return (
        list(extra)
        + SUMMARY_BASE
        + [f"avg_Ql_{l}" for l in range(n_long)]
        + [f"avg_mflow_bits_{m}" for m in range(n_mflow)]
        + SUMMARY_TAIL
    )


def summary_row(seed, policy, lam, D, alpha, report: MetricsReport, n_long, n_mflow, extra=()):
    ql = list(report.avg_queue_long) + [None] * (n_long - len(report.avg_queue_long))
    qm = list(report.avg_queue_mflow) + [None] * (n_mflow - len(report.avg_queue_mflow))
    return (
        list(extra)
        + [
            seed,
            policy,
            lam,
            "inf" if D is None else D,
            alpha,
            report.mean_delay,
            report.delay_std,
            report.avg_n_short,
            report.avg_n_short_all,
        ]
        + ql
        + qm
        + [
            report.blocking_prob,
            report.e_miss_freq,
            *report.growth,
        ]
    )


TRACE_HEADER = [
    "slot",
    "policy_branch",
    "served_flow",
    "bits",
    "W_est",
    "W_true",
    "sum_QlRl_max",
    "lyapunov",
    "n_short",
    "blocked_cum",
]


def write_trace(path, trace: np.ndarray) -> None:
    def rows():
        for rec in trace:
            vals = [int(v) for v in rec]
            vals[7] = float(rec[7])
            yield vals

    write_csv(path, TRACE_HEADER, rows())
