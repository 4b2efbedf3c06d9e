"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary (and to stdout when this file is run as a script).
"""
import functools
import math
import random
import time
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import CRITERIA_LINES
from wslsim.core import LINK_G, LINK_P, LINK_R, RandomStream, RateWindow
from wslsim.engine import LongFlowSpec, Scenario, ShortClassSpec, run
from wslsim.metrics import summary_header, summary_row, write_csv
from wslsim.policies import PolicyParams, tiebreak_uniform, ws_decide, wsl_decide
from wslsim.presets import build_preset
from wslsim.supportability import (
    ShortClass,
    SupportabilityInstance,
    boundary_load,
    check_supportable,
    constraint_violation,
    expected_workload,
    grid_feasible,
    truncated_exp_size_pmf,
)
from test_policies import random_state
from test_supportability import random_instance

pytestmark = pytest.mark.slow

SEEDS = (1, 2, 3, 4, 5)
HORIZON = 200_000
WARMUP = 20_000
GROWS = 3.0  # last third at least this many times the first third
FLAT = 1.5
THREE_LONG = (LongFlowSpec(LINK_G), LongFlowSpec(LINK_G), LongFlowSpec(LINK_P))
RUNS_CHECKED = []  # every run() call verifies bit conservation before returning


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {n}: {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    return ok


def gp(policy, lam, longs=(), cap=None, seed=1, D=16, horizon=HORIZON):
    return Scenario(
        long_flows=longs,
        short_classes=(ShortClassSpec(LINK_G, lam / 2), ShortClassSpec(LINK_P, lam / 2)),
        policy=PolicyParams(policy, learning_period=D),
        admission_cap=cap,
        horizon=horizon,
        warmup=WARMUP if horizon == HORIZON else horizon // 10,
        seed=seed,
    )


@functools.lru_cache(maxsize=None)
def report(scenario: Scenario):
    rep, _ = run(scenario)
    RUNS_CHECKED.append(scenario)
    return rep


def growth(policy, lam, longs=(), D=16):
    return [report(gp(policy, lam, longs, seed=s, D=D)).growth_ratio for s in SEEDS]


def count(values, pred):
    return sum(1 for v in values if pred(v))


def fmt(values):
    return "[" + ", ".join(f"{v:.3g}" for v in values) + "]"


def test_criterion_01_stability_without_long_flows():
    t0 = time.perf_counter()
    mw = growth("maxweight", 0.12)
    wslu = growth("wslu", 0.12)
    elapsed = time.perf_counter() - t0
    ok = count(mw, lambda g: g >= GROWS) >= 4 and count(wslu, lambda g: g <= FLAT) >= 4 and elapsed <= 60
    assert record(
        1, ok, f"growth maxweight={fmt(mw)} (need >=3 in 4/5), wslu={fmt(wslu)} (need <=1.5 in 4/5), {elapsed:.1f}s"
    )


def test_criterion_02_maxweight_with_long_flows():
    mw = growth("maxweight", 0.05, THREE_LONG)
    wslu = growth("wslu", 0.05, THREE_LONG)
    ok = count(mw, lambda g: g >= GROWS) >= 4 and count(wslu, lambda g: g <= FLAT) >= 4
    assert record(2, ok, f"growth maxweight={fmt(mw)} (need >=3 in 4/5), wslu={fmt(wslu)} (need <=1.5 in 4/5)")


def test_criterion_03_scheme_sensitivity():
    runs = build_preset("sim1", lambdas=(0.08,), seeds=SEEDS)
    bits = {"scheme1": [], "scheme2": []}
    for r in runs:
        bits[r.variant].append(sum(report(r.scenario).avg_queue_mflow))
    ratios = [a / b if b > 0 else math.inf for a, b in zip(bits["scheme1"], bits["scheme2"])]
    ok = count(ratios, lambda x: x >= 10) >= 4
    assert record(3, ok, f"M-flow bits scheme1/scheme2={fmt(ratios)} (need >=10 in 4/5)")


def test_criterion_04_learning_period_tradeoff():
    def std(D, seed):
        sc = Scenario(
            long_flows=tuple(LongFlowSpec(LINK_R) for _ in range(3)),
            short_classes=(ShortClassSpec(LINK_R, 0.13),),
            policy=PolicyParams("wslu", learning_period=D),
            horizon=HORIZON,
            warmup=WARMUP,
            seed=seed,
        )
        return report(sc).delay_std

    inf = [std(None, s) for s in SEEDS]
    d16 = [std(16, s) for s in SEEDS]
    ok = count(zip(inf, d16), lambda p: p[0] > p[1]) >= 4
    assert record(4, ok, f"delay std D=inf {fmt(inf)} vs D=16 {fmt(d16)} (need larger in 4/5)")


def mean_over_seeds(field, policy, lam, cap=None):
    return float(np.mean([getattr(report(gp(policy, lam, cap=cap, seed=s)), field) for s in SEEDS]))


def test_criterion_05_blocking_ordering():
    b = {p: mean_over_seeds("blocking_prob", p, 0.11, 20) for p in ("wslu", "delay", "maxweight")}
    wslu13 = mean_over_seeds("blocking_prob", "wslu", 0.13, 20)
    wslo13 = mean_over_seeds("blocking_prob", "wslo", 0.13, 20)
    ok = b["wslu"] < b["delay"] <= b["maxweight"] and wslo13 <= wslu13
    assert record(
        5,
        ok,
        f"blocking at 0.11 wslu={b['wslu']:.4g} delay={b['delay']:.4g} maxweight={b['maxweight']:.4g}; "
        f"at 0.13 wslo={wslo13:.4g} wslu={wslu13:.4g}",
    )


def test_criterion_06_tiebreak_improvement():
    wslu = mean_over_seeds("mean_delay", "wslu", 0.13)
    wslo = mean_over_seeds("mean_delay", "wslo", 0.13)
    assert record(6, wslo <= 0.6 * wslu, f"mean delay wslo={wslo:.4g} wslu={wslu:.4g} ratio={wslo / wslu:.3f} (need <=0.6)")


def test_criterion_07_boundary_cross_check():
    sizes = truncated_exp_size_pmf(30.0, 150)
    closed = 1 / (0.5 * expected_workload(sizes, 50) + 0.5 * expected_workload(sizes, 25))
    star = boundary_load(
        lambda lam: SupportabilityInstance(
            (), (ShortClass(LINK_G, sizes, lam / 2), ShortClass(LINK_P, sizes, lam / 2))
        ),
        1e-9,
    )
    below = growth("wslu", 0.85 * star)
    above = growth("wslu", 1.15 * star)
    ok = (
        abs(star - closed) < 1e-6
        and count(below, lambda g: g <= FLAT) >= 3
        and count(above, lambda g: g > FLAT) >= 3
    )
    assert record(
        7, ok, f"lambda*={star:.6f} (closed form {closed:.6f}); growth at 0.85x {fmt(below)}, at 1.15x {fmt(above)}"
    )


def test_criterion_08_oracle_equivalence():
    rnd = random.Random(2024)
    mismatches = 0
    for k in range(1000):
        s = random_state(rnd, exact=True)
        p = PolicyParams("wslu", alpha=rnd.choice([0.5, 1, 50]))
        if wsl_decide(s, p, "uniform", RandomStream(k)) != ws_decide(s, p, rng=RandomStream(k)):
            mismatches += 1
    assert record(8, mismatches == 0, f"{mismatches} mismatches over 1000 states")


def test_criterion_09_lp_vs_grid():
    rnd = random.Random(909)
    agree = worst = checked = 0
    while checked < 20:
        inst = random_instance(rnd)
        if check_supportable(inst.scaled(0.97)).feasible != check_supportable(inst.scaled(1.03)).feasible:
            continue
        sup = check_supportable(inst)
        agree += sup.feasible == grid_feasible(inst)
        if sup.feasible:
            worst = max(worst, constraint_violation(inst, sup))
        checked += 1
    ok = agree == 20 and worst <= 1e-8
    assert record(9, ok, f"{agree}/20 verdicts agree, worst witness violation {worst:.2e}")


def brute_window(history, t, D):
    lo = -math.inf if D is None else t - D
    return max(r for s, r in history if s >= lo)


def test_criterion_10_core_properties(tmp_path):
    rnd = random.Random(10)
    window_bad = 0
    for _ in range(10_000):
        D = rnd.choice([None, 0, 1, 5, 16, 64])
        w = RateWindow(D)
        history, t = [], 0
        for _ in range(rnd.randint(1, 40)):
            t += rnd.randint(1, 3)
            r = rnd.randint(1, 60)
            history.append((t, r))
            window_bad += w.push(t, r) != brute_window(history, t, D)

    sc = gp("wslu", 0.12, THREE_LONG, horizon=20_000)
    paths = []
    for i in range(2):
        rep, _ = run(sc)
        path = tmp_path / f"run{i}.csv"
        write_csv(path, summary_header(3, 0), [summary_row(1, "wslu", 0.12, 16, 50.0, rep, 3, 0)])
        paths.append(path.read_bytes())
    identical = paths[0] == paths[1]

    rng = RandomStream(2024)
    counts = Counter(tiebreak_uniform(list(range(7)), rng) for _ in range(10**5))
    p = chisquare([counts[c] for c in range(7)]).pvalue

    ok = window_bad == 0 and identical and p > 0.001
    assert record(
        10,
        ok,
        f"window mismatches {window_bad}/10^4, CSV identical={identical}, chi-square p={p:.3g}, "
        f"conservation verified on {len(RUNS_CHECKED) + 2} runs",
    )


def test_criterion_11_emiss():
    d16 = [report(gp("wslu", 0.12, seed=s, D=16)).e_miss_freq for s in SEEDS]
    d64 = [report(gp("wslu", 0.12, seed=s, D=64)).e_miss_freq for s in SEEDS]
    ok = float(np.mean(d16)) < 0.05 and count(zip(d64, d16), lambda p: p[0] <= p[1]) >= 4
    assert record(11, ok, f"e_miss D=16 {fmt(d16)} mean {np.mean(d16):.3g} (need <0.05); D=64 {fmt(d64)}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
