"""Time the simulation kernels with numba on and with the pure-Python fallback.

Each mode runs in its own interpreter because the switch is read at import
time.  Compilation happens in an untimed warm-up run.

    python benchmarks/bench_kernels.py --horizon 20000 --repeat 3
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from wslsim import _jit
from wslsim.core import LINK_G, LINK_P
from wslsim.engine import LongFlowSpec, Scenario, ShortClassSpec, run
from wslsim.policies import PolicyParams

horizon, repeat, policy = int(sys.argv[1]), int(sys.argv[2]), sys.argv[3]

def scenario(h):
    return Scenario(
        long_flows=(LongFlowSpec(LINK_G), LongFlowSpec(LINK_G), LongFlowSpec(LINK_P)),
        short_classes=(ShortClassSpec(LINK_G, 0.25), ShortClassSpec(LINK_P, 0.25)),
        policy=PolicyParams(policy),
        horizon=h,
        warmup=h // 10,
        seed=7,
    )

run(scenario(50))
times = []
for _ in range(repeat):
    t0 = time.perf_counter()
    rep, _ = run(scenario(horizon))
    times.append(time.perf_counter() - t0)
print(json.dumps({"jit": _jit.JIT_ENABLED, "best": min(times), "mean_delay": rep.mean_delay}))
"""


def measure(disable: bool, horizon: int, repeat: int, policy: str) -> dict:
    env = dict(os.environ)
    env.pop("WSLSIM_DISABLE_JIT", None)
    if disable:
        env["WSLSIM_DISABLE_JIT"] = "1"
    out = subprocess.run(
        [sys.executable, "-c", CHILD, str(horizon), str(repeat), policy],
        env=env,
        check=True,
        capture_output=True,
        text=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--policies", default="wslu,wslo,maxweight,delay")
    args = ap.parse_args(argv)

    print(f"{'policy':<10} {'numba s':>9} {'python s':>9} {'speedup':>8}  same result")
    for policy in args.policies.split(","):
        fast = measure(False, args.horizon, args.repeat, policy)
        slow = measure(True, args.horizon, args.repeat, policy)
        same = fast["mean_delay"] == slow["mean_delay"]
        print(
            f"{policy:<10} {fast['best']:>9.3f} {slow['best']:>9.3f} "
            f"{slow['best'] / fast['best']:>7.1f}x  {same}"
        )


if __name__ == "__main__":
    main()
