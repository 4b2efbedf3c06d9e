"""Slot-by-slot simulation of one base station.

:class:`Simulation` owns all flow state as numpy arrays and advances it with
:func:`wslsim.kernels.run_slots`.  Within a slot the order is: sample channel
rates, inject long-flow bits, admit short-flow arrivals, update learned best
rates, decide, transmit ``min(rate, backlog)`` bits, remove finished short
flows, convert M-flows whose injection ended, then record statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels as K
from .core import DiscretePmf, LongFlow, ShortFlow, workload_of
from .metrics import AccountingMismatch, MetricsAccumulator, MetricsReport
from .policies import Decision, NetworkState, PolicyParams

POLICY_CODES = {
    "wslu": K.POL_WSLU,
    "wslo": K.POL_WSLO,
    "ws": K.POL_WS,
    "maxweight": K.POL_MAXWEIGHT,
    "delay": K.POL_DELAY,
}
SCHEMES = ("long", "scheme1", "scheme2")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class LongFlowSpec:
    """A persistent bit source.

    ``scheme`` is ``"long"`` for an L-flow, or for an M-flow (finite
    ``injection_end``) either ``"scheme1"`` (held in the short set from slot
    0) or ``"scheme2"`` (long until its last bit arrives, short afterwards).
    ``injection_end`` is the last slot in which bits are injected.
    """

    pmf: DiscretePmf
    arrival_mean: float = 1.0
    arrival_max: int = 10
    injection_end: int | None = None
    scheme: str = "long"
    link: str = field(default="", compare=False)


@dataclass(frozen=True)
class ShortClassSpec:
    pmf: DiscretePmf
    arrival_rate: float
    arrival_max: int = 100
    size_mean: float = 30.0
    size_max: int = 150
    link: str = field(default="", compare=False)


@dataclass(frozen=True)
class Scenario:
    long_flows: tuple[LongFlowSpec, ...] = ()
    short_classes: tuple[ShortClassSpec, ...] = ()
    policy: PolicyParams = PolicyParams()
    admission_cap: int | None = None
    horizon: int = 200_000
    warmup: int = 20_000
    seed: int = 1

    def validate(self) -> None:
        if self.horizon < 0 or self.warmup < 0:
            raise ScenarioError("horizon and warmup must be non-negative")
        if self.horizon > 0 and not self.horizon > self.warmup:
            raise ScenarioError(f"horizon {self.horizon} must exceed warmup {self.warmup}")
        for c in self.short_classes:
            if not c.arrival_rate > 0:
                raise ScenarioError("short-class arrival rate must be positive")
            if c.arrival_max < 1 or c.size_max < 1 or not c.size_mean > 0:
                raise ScenarioError("short-class caps and mean size must be positive")
        for f in self.long_flows:
            if f.scheme not in SCHEMES:
                raise ScenarioError(f"unknown scheme {f.scheme!r}")
            if f.scheme != "long" and f.injection_end is None:
                raise ScenarioError(f"{f.scheme} flow needs an injection_end")
            if not f.arrival_mean > 0 or f.arrival_max < 1:
                raise ScenarioError("long-flow arrival mean and cap must be positive")
        if self.admission_cap is not None and self.admission_cap < 0:
            raise ScenarioError("admission cap must be non-negative")
        if self.seed < 0:
            raise ScenarioError("seed must be non-negative")

    @property
    def n_mflow(self) -> int:
        return sum(1 for f in self.long_flows if f.injection_end is not None)


@dataclass
class SlotReport:
    slot: int
    decision: Decision
    branch: int
    bits_transmitted: int
    departures: list[tuple[int, int]]
    admitted: int
    blocked: int
    w_est: int
    w_true: int
    w_end: int
    w_arrivals: int
    w_served: int
    rhs: int
    long_queues: tuple[int, ...]
    mflow_bits: tuple[int, ...]
    lyapunov: float
    n_short: int
    n_sflows: int
    emiss: bool
    # a workload-based policy took its short branch (baselines never do)
    short_branch: bool = False


def admit(current_short_count: int, cap: int | None) -> bool:
    """True when a new short flow may enter under ``cap``."""
    return cap is None or current_short_count < cap


def lyapunov_value(state: NetworkState, alpha: float) -> float:
    """``alpha * W_s**2 + sum_l Q_l**2`` with true best rates."""
    w = sum(
        workload_of(f.residual_bits, f.true_max)
        for f in state.short_flows
        if f.residual_bits > 0
    )
    return alpha * w * w + sum(f.queue_bits**2 for f in state.long_flows)


def _channel_tables(pmfs: Sequence[DiscretePmf]):
    width = max(len(p) for p in pmfs)
    rates = np.zeros((len(pmfs), width), dtype=np.int64)
    cdf = np.ones((len(pmfs), width), dtype=np.float64)
    sizes = np.zeros(len(pmfs), dtype=np.int64)
    for c, p in enumerate(pmfs):
        rates[c, : len(p)] = p.rates
        cdf[c, : len(p)] = p.cdf
        sizes[c] = len(p)
    return rates, cdf, sizes


class Simulation:
    """Mutable simulation instance for one scenario and seed."""

    def __init__(self, scenario: Scenario, trace: bool = False, capacity: int = 256):
        scenario.validate()
        self.scenario = scenario
        sc = scenario
        self.n_long = len(sc.long_flows)
        self.n_mflow = sc.n_mflow

        pmfs: list[DiscretePmf] = []
        index: dict[DiscretePmf, int] = {}

        def chan(p):
            if p not in index:
                index[p] = len(pmfs)
                pmfs.append(p)
            return index[p]

        long_chan = [chan(f.pmf) for f in sc.long_flows]
        class_chan = [chan(c.pmf) for c in sc.short_classes]
        if not pmfs:
            chan(DiscretePmf((1,), (1.0,)))
        self.pmfs = pmfs
        self.ch_rates, self.ch_cdf, self.ch_n = _channel_tables(pmfs)
        width = self.ch_rates.shape[1]

        nc = len(sc.short_classes)
        self.sc_chan = np.array(class_chan, dtype=np.int64).reshape(nc)
        self.sc_lam = np.array([c.arrival_rate for c in sc.short_classes], dtype=np.float64)
        self.sc_amax = np.array([c.arrival_max for c in sc.short_classes], dtype=np.int64)
        self.sc_smean = np.array([c.size_mean for c in sc.short_classes], dtype=np.float64)
        self.sc_smax = np.array([c.size_max for c in sc.short_classes], dtype=np.int64)

        max_new = self.n_long + int(self.sc_amax.sum())
        cap_rows = max(capacity, 2 * max_new + 16)
        self.S = np.zeros((cap_rows, K.S_NCOLS), dtype=np.int64)
        self.S_injmean = np.zeros(cap_rows, dtype=np.float64)
        self.LAST = np.full((cap_rows, width), K.NEVER, dtype=np.int64)
        self.L = np.zeros((self.n_long, K.L_NCOLS), dtype=np.int64)
        self.L_injmean = np.zeros(self.n_long, dtype=np.float64)
        self.ACUM = np.zeros((self.n_long, max(sc.horizon, 1)), dtype=np.int64)
        self.CTR = np.zeros(K.C_NCOUNTERS, dtype=np.int64)
        self.ACC = np.zeros(K.A_NACC, dtype=np.float64)
        self.ACC_L = np.zeros(self.n_long, dtype=np.float64)
        self.ACC_M = np.zeros(self.n_mflow, dtype=np.float64)
        self.trace_on = bool(trace)
        rows = sc.horizon if trace else 0
        self.TRACE = np.zeros((rows, K.T_NCOLS), dtype=np.float64)
        self._no_events = np.zeros((0, 2), dtype=np.int64)

        # flow ids 0..n_long-1 belong to the long-flow specs, in order
        n = 0
        msrc = 0
        for l, f in enumerate(sc.long_flows):
            m = -1
            if f.injection_end is not None:
                m = msrc
                msrc += 1
            if f.scheme == "scheme1":
                row = self.S[n]
                row[K.S_ID] = l
                row[K.S_CHAN] = long_chan[l]
                row[K.S_ARR] = 0
                row[K.S_MSRC] = m
                row[K.S_INJEND] = f.injection_end
                row[K.S_INJMAX] = f.arrival_max
                row[K.S_RMAX] = f.pmf.max_rate()
                row[K.S_SFLOW] = 0
                row[K.S_CLASS] = -1
                self.S_injmean[n] = f.arrival_mean
                n += 1
            else:
                r = self.L[l]
                r[K.L_ID] = l
                r[K.L_CHAN] = long_chan[l]
                r[K.L_ACTIVE] = 1
                r[K.L_INJEND] = -1 if f.injection_end is None else f.injection_end
                r[K.L_INJMAX] = f.arrival_max
                r[K.L_SCHEME2] = 1 if f.scheme == "scheme2" else 0
                r[K.L_MSRC] = m
                self.L_injmean[l] = f.arrival_mean
        self.CTR[K.C_NSHORT] = n
        self.CTR[K.C_NEXTID] = self.n_long
        self.slot = 0

        p = sc.policy
        self._pol = POLICY_CODES[p.name]
        self._alpha = float(p.alpha)
        self._D = -1 if p.learning_period is None else int(p.learning_period)
        self._tau = int(p.tau_bar)
        self._cap = -1 if sc.admission_cap is None else int(sc.admission_cap)

    # -- state growth -----------------------------------------------------
    def _grow(self) -> None:
        rows = self.S.shape[0] * 2
        S = np.zeros((rows, K.S_NCOLS), dtype=np.int64)
        S[: self.S.shape[0]] = self.S
        inj = np.zeros(rows, dtype=np.float64)
        inj[: self.S.shape[0]] = self.S_injmean
        LAST = np.full((rows, self.LAST.shape[1]), K.NEVER, dtype=np.int64)
        LAST[: self.LAST.shape[0]] = self.LAST
        self.S, self.S_injmean, self.LAST = S, inj, LAST

    def _advance(self, t1: int, events: np.ndarray) -> None:
        sc = self.scenario
        while self.slot < t1:
            done = K.run_slots(
                self.slot,
                t1,
                sc.seed,
                sc.warmup,
                sc.horizon,
                self._pol,
                self._alpha,
                self._D,
                self._tau,
                self._cap,
                self.ch_rates,
                self.ch_cdf,
                self.ch_n,
                self.sc_chan,
                self.sc_lam,
                self.sc_amax,
                self.sc_smean,
                self.sc_smax,
                self.S,
                self.S_injmean,
                self.LAST,
                self.L,
                self.L_injmean,
                self.ACUM,
                self.CTR,
                self.ACC,
                self.ACC_L,
                self.ACC_M,
                self.TRACE,
                self.trace_on,
                events,
            )
            if done < t1:
                self._grow()
            self.slot = int(done)

    # -- public API -------------------------------------------------------
    @property
    def finished(self) -> bool:
        return self.slot >= self.scenario.horizon

    def step(self) -> SlotReport:
        """Run one slot and describe what happened in it."""
        if self.finished:
            raise RuntimeError("simulation already reached its horizon")
        t = self.slot
        while self.CTR[K.C_NSHORT] + self.n_long + int(self.sc_amax.sum()) > self.S.shape[0]:
            self._grow()
        events = np.zeros((self.S.shape[0] + 1, 2), dtype=np.int64)
        self._advance(t + 1, events)
        c = self.CTR
        kind = int(c[K.C_LAST_KIND])
        fid = int(c[K.C_LAST_FLOW])
        if kind == K.KIND_SHORT:
            decision = Decision.serve_short(fid)
        elif kind == K.KIND_LONG:
            decision = Decision.serve_long(fid)
        else:
            decision = Decision.idle()
        ne = int(c[K.C_NEVENTS])
        w_true = int(c[K.C_LAST_WTRUE])
        return SlotReport(
            slot=t,
            decision=decision,
            branch=int(c[K.C_LAST_BRANCH]),
            bits_transmitted=int(c[K.C_LAST_BITS]),
            departures=[(int(a), int(b)) for a, b in events[:ne]],
            admitted=int(c[K.C_LAST_ADMIT]),
            blocked=int(c[K.C_LAST_BLOCK]),
            w_est=int(c[K.C_LAST_WEST]),
            w_true=w_true,
            w_end=int(c[K.C_LAST_WEND]),
            w_arrivals=int(c[K.C_LAST_WARR]),
            w_served=int(c[K.C_LAST_WDEC]),
            rhs=int(c[K.C_LAST_RHS]),
            long_queues=self.long_queues(),
            mflow_bits=self.mflow_bits(),
            lyapunov=self._alpha * w_true * w_true + int(c[K.C_LAST_QSQ]),
            n_short=int(c[K.C_NSHORT]),
            n_sflows=int(c[K.C_NSFLOW]),
            emiss=bool(c[K.C_LAST_EMISS]),
            short_branch=kind == K.KIND_SHORT
            and int(c[K.C_LAST_BRANCH]) == 1
            and self._pol <= K.POL_WS,
        )

    def run(self) -> MetricsReport:
        """Run to the horizon and return the aggregated statistics."""
        self._advance(self.scenario.horizon, self._no_events)
        self.check_conservation()
        return self.report()

    def long_queues(self) -> tuple[int, ...]:
        return tuple(int(q) for q in self.L[:, K.L_Q])

    def mflow_bits(self) -> tuple[int, ...]:
        out = [0] * self.n_mflow
        for l in range(self.n_long):
            m = self.L[l, K.L_MSRC]
            if m >= 0 and self.L[l, K.L_ACTIVE]:
                out[m] += int(self.L[l, K.L_Q])
        n = int(self.CTR[K.C_NSHORT])
        for i in range(n):
            m = self.S[i, K.S_MSRC]
            if m >= 0:
                out[m] += int(self.S[i, K.S_RES])
        return tuple(out)

    def bits_in_system(self) -> int:
        n = int(self.CTR[K.C_NSHORT])
        return int(self.S[:n, K.S_RES].sum() + self.L[:, K.L_Q].sum())

    def check_conservation(self) -> None:
        c = self.CTR
        inside = self.bits_in_system()
        if c[K.C_BITS_IN] != c[K.C_BITS_OUT] + inside:
            raise AccountingMismatch(
                f"injected {c[K.C_BITS_IN]} != transmitted {c[K.C_BITS_OUT]} + queued {inside}"
            )
        if c[K.C_ADMITTED] != c[K.C_DEPARTED] + c[K.C_NSFLOW]:
            raise AccountingMismatch("admitted short flows do not balance")
        if c[K.C_OFFERED] != c[K.C_ADMITTED] + c[K.C_BLOCKED]:
            raise AccountingMismatch("offered short flows do not balance")

    @property
    def bits_injected(self) -> int:
        return int(self.CTR[K.C_BITS_IN])

    @property
    def bits_transmitted(self) -> int:
        return int(self.CTR[K.C_BITS_OUT])

    def trace(self) -> np.ndarray | None:
        if not self.trace_on:
            return None
        return self.TRACE[: self.slot]

    def accumulator(self) -> MetricsAccumulator:
        """Kernel sums repackaged as a :class:`MetricsAccumulator`."""
        sc = self.scenario
        a = self.ACC
        acc = MetricsAccumulator(
            warmup=sc.warmup, horizon=sc.horizon, n_long=self.n_long, n_mflow=self.n_mflow
        )
        acc.delays.count = int(a[K.A_DCOUNT])
        acc.delays.total = float(a[K.A_DSUM])
        acc.delays.sumsq = float(a[K.A_DSUMSQ])
        acc.n_sum = float(a[K.A_NSUM])
        acc.n_sum_all = float(a[K.A_NSUM_ALL])
        acc.slots = int(a[K.A_SLOTS])
        acc.slots_all = int(a[K.A_SLOTS_ALL])
        acc.third_sum = [float(a[K.A_THIRD_SUM + i]) for i in range(3)]
        acc.third_n = [int(a[K.A_THIRD_N + i]) for i in range(3)]
        acc.short_decisions = int(a[K.A_SHORTDEC])
        acc.emiss = int(a[K.A_EMISS])
        acc.offered = int(a[K.A_OFFERED])
        acc.blocked = int(a[K.A_BLOCKED])
        acc.queue_sum = [float(x) for x in self.ACC_L]
        acc.mflow_sum = [float(x) for x in self.ACC_M]
        c = self.CTR
        acc.admitted_all = int(c[K.C_ADMITTED])
        acc.blocked_all = int(c[K.C_BLOCKED])
        acc.departed_all = int(c[K.C_DEPARTED])
        acc.final_n_short = int(c[K.C_NSFLOW])
        acc.final_queue_long = self.long_queues()
        acc.last_slot = self.slot - 1
        return acc

    def report(self) -> MetricsReport:
        return self.accumulator().finalize()

    def network_state(self) -> NetworkState:
        """Object snapshot of the flows as they stood at the last decision.

        Residuals and queues are end-of-slot values; rates and learned maxima
        are those of the last executed slot.
        """
        t = self.slot - 1
        shorts = []
        rates = {}
        hol = {}
        n = int(self.CTR[K.C_NSHORT])
        for i in range(n):
            row = self.S[i]
            c = int(row[K.S_CHAN])
            f = ShortFlow(
                id=int(row[K.S_ID]),
                class_id=int(row[K.S_CLASS]),
                arrival_slot=int(row[K.S_ARR]),
                residual_bits=int(row[K.S_RES]),
                original_size=int(row[K.S_SIZE]),
                pmf=self.pmfs[c],
                learned_max=int(row[K.S_LMAX]),
                age=max(t - int(row[K.S_ARR]), 0),
            )
            shorts.append(f)
            rates[f.id] = int(row[K.S_RATE])
            hol[f.id] = t - f.arrival_slot + 1 if f.residual_bits > 0 else 0
        longs = []
        for l in range(self.n_long):
            row = self.L[l]
            if not row[K.L_ACTIVE]:
                continue
            spec = self.scenario.long_flows[l]
            f = LongFlow(
                id=int(row[K.L_ID]),
                queue_bits=int(row[K.L_Q]),
                pmf=spec.pmf,
                arrival_mean=spec.arrival_mean,
                arrival_max=spec.arrival_max,
                injection_end_slot=spec.injection_end,
            )
            longs.append(f)
            rates[f.id] = int(row[K.L_RATE])
            hol[f.id] = 0
        return NetworkState(slot=t, short_flows=shorts, long_flows=longs, rates=rates, hol_delays=hol)


def run(scenario: Scenario, trace: bool = False) -> tuple[MetricsReport, np.ndarray | None]:
    """Run ``scenario`` to its horizon; returns the report and optional trace."""
    sim = Simulation(scenario, trace=trace)
    if scenario.horizon == 0:
        return sim.report(), sim.trace()
    report = sim.run()
    return report, sim.trace()
