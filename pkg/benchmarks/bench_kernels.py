"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each mode runs in its own interpreter because the JIT switch is read at
import time. Compilation is excluded: every kernel is warmed up once first.
"""

import argparse
import json
import os
import subprocess
import sys

CASES = r"""
import json, time
import numpy as np
from stableweb import _accel
from stableweb.diagnostics import meeting_steps
from stableweb.engine import EngineConfig, full_occupancy, simulate
from stableweb.metrics import modulus
from stableweb.sampling import build_increment_law, walk_char_fn

repeat = int(REPEAT)
law = build_increment_law(1.5, 0.25)
cfg = EngineConfig(scale_n=64, horizon=0.5, half_width=16.0, seed=1)
rng = np.random.default_rng(0)
jt = np.sort(rng.uniform(0, 10, 200))
vals = np.concatenate([[0.0], np.cumsum(rng.normal(size=200))])
cases = {
    "engine (512 walkers, t=0.5)": lambda: simulate(cfg, full_occupancy(cfg)),
    "walk char fn (64 steps x 500)": lambda: walk_char_fn(law, 64, 500, [1.0]),
    "meeting times (n=256, 50 pairs)": lambda: meeting_steps(law, 256, 1.0, 50, horizon=2.0),
    "modulus (200 jumps)": lambda: modulus((jt, vals), 0.05, (0.0, 10.0)),
}
out = {"jit": _accel.JIT_ENABLED}
for name, fn in cases.items():
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run(disable, repeat):
    env = dict(os.environ, STABLEWEB_DISABLE_JIT="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", CASES.replace("REPEAT", str(repeat))],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    if not fast.pop("jit"):
        print("numba unavailable: both columns use the fallback")
    slow.pop("jit")
    print(f"{'kernel':34s} {'jit [s]':>10s} {'python [s]':>11s} {'speedup':>8s}")
    for name in fast:
        print(f"{name:34s} {fast[name]:10.4f} {slow[name]:11.4f} {slow[name] / fast[name]:7.0f}x")


if __name__ == "__main__":
    main()
