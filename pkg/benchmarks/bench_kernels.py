"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Also times one end-to-end decode under each backend, switching the backend
through ``ADAPTIVE_PIR_NUMBA`` in a subprocess so the module-level choice is
honoured.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from adaptive_pir import _kernels

Q = 65537


def cases(rng):
    A = rng.integers(0, Q, (48, 48), dtype=np.int64)
    B = rng.integers(0, Q, (48, 48), dtype=np.int64)
    return {
        "inv (10^5 elements)": ("inv", (rng.integers(1, Q, 100_000, dtype=np.int64), Q)),
        "matmul 48x48": ("matmul", (A, B, Q)),
        "solve 48x48, 48 rhs": ("solve", (A, B, Q)),
        "rank 48x48": ("rank", (A, Q)),
        "poly_eval deg 32 at 10^4 points": ("poly_eval", (rng.integers(0, Q, 33, dtype=np.int64),
                                                          rng.integers(0, Q, 10_000, dtype=np.int64), Q)),
        "lagrange_weights 16 nodes -> 64": ("lagrange_weights", (np.arange(16, dtype=np.int64),
                                                                 np.arange(100, 164, dtype=np.int64), Q)),
    }


SESSION = """
import time
from adaptive_pir.params import SystemParams
from adaptive_pir.simulator import SessionConfig, StragglerModel, run_session
p = SystemParams(9, 2, 2, 2, 3)
run_session(SessionConfig(p, stragglers=StragglerModel.fixed_set([0])))
t = time.perf_counter()
for s in range(10):
    run_session(SessionConfig(p, file_seed=s, stragglers=StragglerModel.fixed_set([s % 9])))
print((time.perf_counter() - t) / 10)
"""


def session_time(flag):
    env = dict(os.environ, ADAPTIVE_PIR_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SESSION], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args()
    if "numba" not in _kernels.IMPLEMENTATIONS:
        sys.exit("numba is not installed")
    rng = np.random.default_rng(0)
    rows = []
    for label, (name, call_args) in cases(rng).items():
        timings = {}
        for backend in ("numpy", "numba"):
            fn = _kernels.IMPLEMENTATIONS[backend][name]
            fn(*call_args)  # compile / warm up
            n = 3
            timings[backend] = min(timeit.repeat(lambda: fn(*call_args), number=n, repeat=args.repeat)) / n
        rows.append({"kernel": label, **timings, "speedup": timings["numpy"] / timings["numba"]})
    rows.append({"kernel": "session (9,2,2,2), S=1", "numpy": session_time("0"), "numba": session_time("1")})
    rows[-1]["speedup"] = rows[-1]["numpy"] / rows[-1]["numba"]

    print(f"{'kernel':36} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for r in rows:
        print(f"{r['kernel']:36} {r['numpy'] * 1e3:10.3f} {r['numba'] * 1e3:10.3f} {r['speedup']:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
