"""Time the numba kernels against the pure-Python fallback.

Each backend runs in its own interpreter because the choice is made at import
time from ``SCHELLING_DISABLE_JIT``.  A warm-up run is excluded so JIT compile
time does not count.

    python3 benchmarks/bench_kernels.py --n 20000 --w 10 --tau 19/50
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from fractions import Fraction
from schelling_ring._accel import JIT_ENABLED
from schelling_ring.dynamics import StopCondition, init_random
from schelling_ring.ring import Model, ModelParams

n, w, tau, model, stages, repeats = json.loads(sys.argv[1])
params = ModelParams(n, w, Fraction(tau), Model(model))
stop = StopCondition(max_stages=stages)
init_random(ModelParams(200, w, Fraction(tau), Model(model)), 0).run(StopCondition(max_stages=100))
times, events = [], 0
for seed in range(repeats):
    state = init_random(params, seed)
    t0 = time.perf_counter()
    trace = state.run(stop)
    times.append(time.perf_counter() - t0)
    events += len(trace)
print(json.dumps({"jit": JIT_ENABLED, "best": min(times), "events": events}))
"""


def measure(cfg, disable: bool) -> dict:
    env = dict(os.environ)
    env.pop("SCHELLING_DISABLE_JIT", None)
    if disable:
        env["SCHELLING_DISABLE_JIT"] = "1"
    res = subprocess.run([sys.executable, "-c", WORKER, json.dumps(cfg)], capture_output=True, text=True,
                         env=env, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--w", type=int, default=10)
    ap.add_argument("--tau", default="19/50")
    ap.add_argument("--model", choices=["standard", "simple"], default="standard")
    ap.add_argument("--stages", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    a = ap.parse_args(argv)
    cfg = [a.n, a.w, a.tau, a.model, a.stages, a.repeats]
    jit = measure(cfg, disable=False)
    pure = measure(cfg, disable=True)
    if jit["events"] != pure["events"]:
        raise SystemExit("backends disagree on the event count")
    for name, r in (("jit", jit), ("pure", pure)):
        print(f"backend={name} jit_active={int(r['jit'])} best_s={r['best']:.4f} events={r['events']}")
    print(f"speedup={pure['best'] / jit['best']:.1f}")


if __name__ == "__main__":
    main()
