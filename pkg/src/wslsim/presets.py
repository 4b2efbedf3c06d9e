"""The five desk-scale experiments: scheme comparison, learning period,
policy comparison, admission control and tie-breaking."""
from __future__ import annotations

from dataclasses import dataclass

from .core import LINK_G, LINK_P, LINK_R, DiscretePmf
from .engine import LongFlowSpec, Scenario, ShortClassSpec
from .policies import PolicyParams

PRESET_NAMES = ("sim1", "sim2", "sim3", "sim4", "sim5")
DEFAULT_LAMBDAS = (0.06, 0.08, 0.10, 0.11, 0.12, 0.13)
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
DEFAULT_HORIZON = 200_000
MFLOW_DURATION = 10_000
MFLOW_TAIL = 2_000
ADMISSION_CAP = 20


class UnknownPreset(ValueError):
    pass


@dataclass(frozen=True)
class PresetRun:
    variant: str  # names the output file
    lam: float
    scenario: Scenario


def gp_classes(lam: float) -> tuple[ShortClassSpec, ...]:
    """Each arriving short flow gets a G or a P link with equal probability."""
    return (
        ShortClassSpec(LINK_G, lam / 2, link="G"),
        ShortClassSpec(LINK_P, lam / 2, link="P"),
    )


def three_long_flows(links: tuple[tuple[str, DiscretePmf], ...] | None = None):
    links = links or (("G", LINK_G), ("G", LINK_G), ("P", LINK_P))
    return tuple(LongFlowSpec(pmf, 1.0, 10, link=name) for name, pmf in links)


def mflows(scheme: str, duration: int, count: int = 3) -> tuple[LongFlowSpec, ...]:
    # untruncated Poisson(1) in principle; 100 is never reached in practice
    return tuple(
        LongFlowSpec(LINK_G, 1.0, 100, injection_end=duration - 1, scheme=scheme, link="G")
        for _ in range(count)
    )


def scaled(horizon: int, scale: float) -> int:
    return max(10, int(round(horizon * scale)))


def _scenario(policy, lam, shorts, longs=(), cap=None, horizon=DEFAULT_HORIZON, seed=1):
    return Scenario(
        long_flows=longs,
        short_classes=shorts,
        policy=policy,
        admission_cap=cap,
        horizon=horizon,
        warmup=horizon // 10,
        seed=seed,
    )


def build_preset(
    name: str,
    lambdas=DEFAULT_LAMBDAS,
    seeds=DEFAULT_SEEDS,
    scale: float = 1.0,
) -> list[PresetRun]:
    """Every (variant, policy, lambda, seed) run of one preset, in output order."""
    if name not in PRESET_NAMES:
        raise UnknownPreset(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    horizon = scaled(DEFAULT_HORIZON, scale)
    grid = []  # (variant, policy, lam -> (shorts, longs, cap, horizon))

    if name == "sim1":
        duration = scaled(MFLOW_DURATION, scale)
        h = duration + scaled(MFLOW_TAIL, scale)
        ws = PolicyParams("ws")
        for scheme in ("scheme1", "scheme2"):
            grid.append((scheme, ws, lambda lam, s=scheme: (gp_classes(lam), mflows(s, duration), None, h)))
    elif name == "sim2":
        r_longs = three_long_flows((("R", LINK_R),) * 3)
        for d in (16, None):
            grid.append(
                (
                    "rlinks",
                    PolicyParams("wslu", learning_period=d),
                    lambda lam: ((ShortClassSpec(LINK_R, lam, link="R"),), r_longs, None, horizon),
                )
            )
    else:
        cap = ADMISSION_CAP if name == "sim4" else None
        policies = ("wslu", "wslo") if name == "sim5" else ("delay", "maxweight", "wslu")
        variants = [("short_only", (), cap), ("with_long", three_long_flows(), cap)]
        if name == "sim5":
            variants += [
                ("short_only_cap", (), ADMISSION_CAP),
                ("with_long_cap", three_long_flows(), ADMISSION_CAP),
            ]
        for variant, longs, c in variants:
            for pol in policies:
                grid.append(
                    (variant, PolicyParams(pol), lambda lam, L=longs, c=c: (gp_classes(lam), L, c, horizon))
                )

    runs = []
    for variant, policy, make in grid:
        for lam in lambdas:
            shorts, longs, cap, h = make(lam)
            for seed in sorted(seeds):
                runs.append(
                    PresetRun(variant, lam, _scenario(policy, lam, shorts, longs, cap, h, seed))
                )
    return runs
