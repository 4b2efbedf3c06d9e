"""JSON experiment files: parsing, validation and serialization.

A config has five sections, all optional except ``traffic``::

    {
      "links":   {"X": {"rates": [5, 50], "probs": [0.5, 0.5]}},
      "traffic": {"lambda": 0.12,
                  "short":  [{"link": "G", "share": 0.5}, {"link": "P", "share": 0.5}],
                  "long":   [{"link": "G"}],
                  "medium": [{"link": "G", "injection_end": 9999, "scheme": "scheme2"}]},
      "policy":  {"name": "wslu", "alpha": 50, "D": 16, "tau_bar": 1000000},
      "run":     {"horizon": 200000, "warmup": 20000, "seeds": [1, 2, 3],
                  "admission_cap": null, "trace": false},
      "output":  {"directory": "out"}
    }

A short class gives either ``share`` (a fraction of ``traffic.lambda``) or an
absolute ``arrival_rate``.  ``D`` may be ``null`` or ``"inf"`` for an
unbounded learning window.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

from .core import BUILTIN_LINKS, DiscretePmf, pmf_validate
from .engine import LongFlowSpec, Scenario, ScenarioError, ShortClassSpec
from .policies import DEFAULT_ALPHA, DEFAULT_D, DEFAULT_TAU_BAR, PolicyParams

DEFAULT_HORIZON = 200_000
DEFAULT_OUTPUT = "wslsim_out"


class ParseError(ValueError):
    """Malformed document; carries the line or the offending field."""


class ValidationError(ValueError):
    """Well-formed document whose values break an invariant."""


SECTIONS = {"links", "traffic", "policy", "run", "output"}
TRAFFIC_KEYS = {"lambda", "short", "long", "medium"}
SHORT_KEYS = {"link", "share", "arrival_rate", "arrival_max", "size_mean", "size_max"}
LONG_KEYS = {"link", "arrival_mean", "arrival_max"}
MEDIUM_KEYS = {"link", "arrival_mean", "arrival_max", "injection_end", "scheme"}
POLICY_KEYS = {"name", "alpha", "D", "tau_bar"}
RUN_KEYS = {"horizon", "warmup", "seeds", "admission_cap", "trace"}
OUTPUT_KEYS = {"directory"}
LINK_KEYS = {"rates", "probs"}


@dataclass(frozen=True)
class Experiment:
    """A scenario template plus the replication and output settings."""

    scenario: Scenario
    seeds: tuple[int, ...] = (1,)
    trace: bool = False
    output_dir: str = DEFAULT_OUTPUT
    lam: float | None = None
    shares: tuple[float | None, ...] = field(default=(), compare=False)

    def scenarios(self) -> list[Scenario]:
        return [replace(self.scenario, seed=s) for s in self.seeds]

    def with_lambda(self, lam: float) -> "Experiment":
        """Rescale every ``share``-based short class to total rate ``lam``."""
        if self.lam is None:
            raise ValidationError("traffic.lambda: not set, nothing to sweep")
        classes = tuple(
            c if s is None else replace(c, arrival_rate=s * lam)
            for c, s in zip(self.scenario.short_classes, self.shares)
        )
        return replace(self, scenario=replace(self.scenario, short_classes=classes), lam=lam)


def _check_keys(obj: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ParseError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return obj


def _number(obj: dict, key: str, where: str, default=None, kind=float):
    if key not in obj or obj[key] is None:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{where}.{key}: expected a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ValidationError(f"{where}.{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _links(doc: dict) -> dict[str, DiscretePmf]:
    links = dict(BUILTIN_LINKS)
    raw = doc.get("links", {})
    if not isinstance(raw, dict):
        raise ParseError("links: expected an object")
    for name, spec in raw.items():
        where = f"links.{name}"
        if name in BUILTIN_LINKS:
            raise ValidationError(f"{where}: built-in link names cannot be redefined")
        _check_keys(spec, LINK_KEYS, where)
        rates, probs = spec.get("rates"), spec.get("probs")
        if not isinstance(rates, list) or not isinstance(probs, list) or len(rates) != len(probs):
            raise ParseError(f"{where}: rates and probs must be lists of equal length")
        try:
            links[name] = pmf_validate(zip(rates, probs))
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"{where}: {exc}") from exc
    return links


def _link(links, obj, where) -> tuple[str, DiscretePmf]:
    name = obj.get("link", "G")
    if name not in links:
        raise ValidationError(f"{where}.link: unknown link {name!r}")
    return name, links[name]


def _parse_traffic(doc, links):
    traffic = _check_keys(doc.get("traffic", {}), TRAFFIC_KEYS, "traffic")
    lam = _number(traffic, "lambda", "traffic")
    shorts, shares = [], []
    for i, c in enumerate(traffic.get("short", [])):
        where = f"traffic.short[{i}]"
        _check_keys(c, SHORT_KEYS, where)
        name, pmf = _link(links, c, where)
        share = _number(c, "share", where)
        rate = _number(c, "arrival_rate", where)
        if (share is None) == (rate is None):
            raise ValidationError(f"{where}: give exactly one of share or arrival_rate")
        if share is not None:
            if lam is None:
                raise ValidationError(f"{where}.share: needs traffic.lambda")
            rate = share * lam
        shorts.append(
            ShortClassSpec(
                pmf,
                rate,
                arrival_max=_number(c, "arrival_max", where, 100, int),
                size_mean=_number(c, "size_mean", where, 30.0),
                size_max=_number(c, "size_max", where, 150, int),
                link=name,
            )
        )
        shares.append(share)
    longs = []
    for i, f in enumerate(traffic.get("long", [])):
        where = f"traffic.long[{i}]"
        _check_keys(f, LONG_KEYS, where)
        name, pmf = _link(links, f, where)
        longs.append(
            LongFlowSpec(
                pmf,
                _number(f, "arrival_mean", where, 1.0),
                _number(f, "arrival_max", where, 10, int),
                link=name,
            )
        )
    for i, f in enumerate(traffic.get("medium", [])):
        where = f"traffic.medium[{i}]"
        _check_keys(f, MEDIUM_KEYS, where)
        name, pmf = _link(links, f, where)
        end = _number(f, "injection_end", where, None, int)
        if end is None:
            raise ValidationError(f"{where}.injection_end: required for medium flows")
        scheme = f.get("scheme", "scheme2")
        if scheme not in ("scheme1", "scheme2"):
            raise ValidationError(f"{where}.scheme: expected scheme1 or scheme2, got {scheme!r}")
        longs.append(
            LongFlowSpec(
                pmf,
                _number(f, "arrival_mean", where, 1.0),
                _number(f, "arrival_max", where, 100, int),
                injection_end=end,
                scheme=scheme,
                link=name,
            )
        )
    return lam, tuple(shorts), tuple(shares), tuple(longs)


def _parse_policy(doc) -> PolicyParams:
    pol = _check_keys(doc.get("policy", {}), POLICY_KEYS, "policy")
    d = pol.get("D", DEFAULT_D)
    if d is None or (isinstance(d, str) and d.lower() in ("inf", "infinity")):
        d = None
    elif isinstance(d, bool) or not isinstance(d, (int, float)) or int(d) != d:
        raise ParseError(f"policy.D: expected an integer, null or \"inf\", got {d!r}")
    else:
        d = int(d)
    try:
        return PolicyParams(
            name=pol.get("name", "wslu"),
            alpha=_number(pol, "alpha", "policy", DEFAULT_ALPHA),
            learning_period=d,
            tau_bar=_number(pol, "tau_bar", "policy", DEFAULT_TAU_BAR, int),
        )
    except ValueError as exc:
        raise ValidationError(f"policy: {exc}") from exc


def experiment_from_dict(doc: dict) -> Experiment:
    _check_keys(doc, SECTIONS, "config")
    links = _links(doc)
    lam, shorts, shares, longs = _parse_traffic(doc, links)
    policy = _parse_policy(doc)
    run = _check_keys(doc.get("run", {}), RUN_KEYS, "run")
    horizon = _number(run, "horizon", "run", DEFAULT_HORIZON, int)
    warmup = _number(run, "warmup", "run", horizon // 10, int)
    seeds = run.get("seeds", [1])
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds
    ):
        raise ParseError("run.seeds: expected a non-empty list of integers")
    trace = run.get("trace", False)
    if not isinstance(trace, bool):
        raise ParseError("run.trace: expected true or false")
    out = _check_keys(doc.get("output", {}), OUTPUT_KEYS, "output")
    scenario = Scenario(
        long_flows=longs,
        short_classes=shorts,
        policy=policy,
        admission_cap=_number(run, "admission_cap", "run", None, int),
        horizon=horizon,
        warmup=warmup,
        seed=min(seeds),
    )
    try:
        scenario.validate()
    except ScenarioError as exc:
        raise ValidationError(str(exc)) from exc
    return Experiment(
        scenario=scenario,
        seeds=tuple(sorted(set(seeds))),
        trace=trace,
        output_dir=str(out.get("directory", DEFAULT_OUTPUT)),
        lam=lam,
        shares=shares,
    )


def parse_config_text(text: str) -> Experiment:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return experiment_from_dict(doc)


def parse_config(path) -> Experiment:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _link_name(pmf: DiscretePmf, hint: str, custom: dict) -> str:
    if hint and BUILTIN_LINKS.get(hint) == pmf:
        return hint
    for name, builtin in BUILTIN_LINKS.items():
        if builtin == pmf:
            return name
    for name, known in custom.items():
        if known == pmf:
            return name
    name = hint if hint and hint not in BUILTIN_LINKS and hint not in custom else f"link{len(custom)}"
    custom[name] = pmf
    return name


def experiment_to_dict(exp: Experiment) -> dict:
    """Inverse of :func:`experiment_from_dict` up to link naming."""
    sc = exp.scenario
    custom: dict[str, DiscretePmf] = {}
    shorts = [
        {
            "link": _link_name(c.pmf, c.link, custom),
            "arrival_rate": c.arrival_rate,
            "arrival_max": c.arrival_max,
            "size_mean": c.size_mean,
            "size_max": c.size_max,
        }
        for c in sc.short_classes
    ]
    longs, mediums = [], []
    for f in sc.long_flows:
        entry = {
            "link": _link_name(f.pmf, f.link, custom),
            "arrival_mean": f.arrival_mean,
            "arrival_max": f.arrival_max,
        }
        if f.injection_end is None:
            longs.append(entry)
        else:
            entry.update(injection_end=f.injection_end, scheme=f.scheme)
            mediums.append(entry)
    traffic: dict[str, Any] = {"short": shorts, "long": longs, "medium": mediums}
    if exp.lam is not None:
        traffic["lambda"] = exp.lam
    d = sc.policy.learning_period
    return {
        "links": {
            n: {"rates": list(p.rates), "probs": list(p.probs)} for n, p in custom.items()
        },
        "traffic": traffic,
        "policy": {
            "name": sc.policy.name,
            "alpha": sc.policy.alpha,
            "D": "inf" if d is None else d,
            "tau_bar": sc.policy.tau_bar,
        },
        "run": {
            "horizon": sc.horizon,
            "warmup": sc.warmup,
            "seeds": list(exp.seeds),
            "admission_cap": sc.admission_cap,
            "trace": exp.trace,
        },
        "output": {"directory": exp.output_dir},
    }


def dump_config(exp: Experiment) -> str:
    return json.dumps(experiment_to_dict(exp), indent=2) + "\n"
