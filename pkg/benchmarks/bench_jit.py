"""Compare the numba kernels against the pure numpy fallback.

Each backend runs in a fresh interpreter so that NOETHERLAB_DISABLE_JIT is
read at import time. The first call in the JIT run includes compilation, so
both a cold and a warm timing are reported.

    python benchmarks/bench_jit.py [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKLOAD = r"""
import json, sys, time
import numpy as np
from pathlib import Path
from noetherlab import ellint
from noetherlab._jit import backend
from noetherlab.harness import Context, load_config

cfg_dir = Path(sys.argv[1])
repeat = int(sys.argv[2])
rng = np.random.default_rng(0)
x, y, z, p = (rng.uniform(0.1, 5.0, 20000) for _ in range(4))

def carlson():
    return float(np.sum(ellint.carlson_rf(x, y, z)) + np.sum(ellint.carlson_rj(x, y, z, p)))

def trajectory():
    ctx = Context(load_config(cfg_dir / "cms.yaml"))
    return ctx.traj.t_span[1]

out = {"backend": backend()}
for name, fn in (("carlson_grid", carlson), ("cms_trajectory", trajectory)):
    t0 = time.perf_counter(); fn(); cold = time.perf_counter() - t0
    warm = []
    for _ in range(repeat):
        t0 = time.perf_counter(); fn(); warm.append(time.perf_counter() - t0)
    out[name] = {"cold": cold, "warm": min(warm)}
print(json.dumps(out))
"""


def run(disable, repeat, cfg_dir):
    env = dict(os.environ)
    if disable:
        env["NOETHERLAB_DISABLE_JIT"] = "1"
    else:
        env.pop("NOETHERLAB_DISABLE_JIT", None)
    t0 = time.perf_counter()
    r = subprocess.run([sys.executable, "-c", WORKLOAD, cfg_dir, str(repeat)],
                       env=env, capture_output=True, text=True, check=True)
    res = json.loads(r.stdout.strip().splitlines()[-1])
    res["process"] = time.perf_counter() - t0
    return res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cfg_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "configs")
    jit = run(False, args.repeat, cfg_dir)
    py = run(True, args.repeat, cfg_dir)
    print(f"{'workload':16s} {'numba cold':>11s} {'numba warm':>11s} {'numpy warm':>11s} {'speedup':>8s}")
    for name in ("carlson_grid", "cms_trajectory"):
        a, b = jit[name], py[name]
        print(f"{name:16s} {a['cold']:11.3f} {a['warm']:11.3f} {b['warm']:11.3f} "
              f"{b['warm'] / a['warm']:7.1f}x")
    print(f"backends: {jit['backend']} / {py['backend']}; "
          f"process wall {jit['process']:.1f}s / {py['process']:.1f}s")


if __name__ == "__main__":
    main()
