"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``DFEE_DISABLE_NUMBA``. Usage::

    python3 benchmarks/bench_backends.py [--repeat 5] [--sizes 129,257,513]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from dfee import kernels, _accel
from dfee.ensemble import EnsembleConfig, make_estimator, sample_ensemble
from dfee.densities import DensityModel
from dfee.lattice import BoxGeometry

sizes = [int(s) for s in sys.argv[1].split(",")]
repeat = int(sys.argv[2])
rng = np.random.default_rng(0)

def best(fn):
    fn()  # warm-up (JIT compilation, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)

out = {"backend": _accel.BACKEND, "rows": []}
for n in sizes:
    d = 2.0 + rng.exponential(size=n)
    e = -np.ones(n - 1)
    a = rng.standard_normal((n, n)); a = a + a.T
    b = rng.standard_normal(n) + 0j
    dl = e.astype(complex)
    x = rng.standard_normal(20 * n) + 1e6
    out["rows"].append({"n": n, "op": "eigh_tridiagonal", "sec": best(lambda: kernels.eigh_tridiagonal(d, e))})
    out["rows"].append({"n": n, "op": "eigh_dense_values", "sec": best(lambda: kernels.eigh_dense(a, vectors=False))})
    out["rows"].append({"n": n, "op": "solve_tridiagonal", "sec": best(lambda: kernels.solve_tridiagonal(dl, d - 0.5 - 0.1j, dl, b))})
    out["rows"].append({"n": n, "op": "decaying_solution", "sec": best(lambda: kernels.decaying_solution(d - 0.5 - 0.1j))})
    out["rows"].append({"n": 20 * n, "op": "mean_and_m2", "sec": best(lambda: kernels.mean_and_m2(x))})

cfg = EnsembleConfig(BoxGeometry(1, 128), DensityModel.exponential(1.0), 1.0, 20, master_seed=1)
ests = [make_estimator("block_entropy", M=25), make_estimator("cut_entropy", c=0, side="left")]
out["rows"].append({"n": 257, "op": "ensemble_20_realizations", "sec": best(lambda: sample_ensemble(cfg, ests))})
print(json.dumps(out))
"""


def run_backend(disable_numba: bool, sizes: str, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("DFEE_DISABLE_NUMBA", None)
    if disable_numba:
        env["DFEE_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, sizes, str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="129,257,513")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    numba_res = run_backend(False, args.sizes, args.repeat)
    numpy_res = run_backend(True, args.sizes, args.repeat)
    print(f"{'operation':<26}{'n':>7}{'numba [ms]':>13}{'numpy [ms]':>13}{'ratio':>9}")
    for a, b in zip(numba_res["rows"], numpy_res["rows"]):
        ratio = b["sec"] / a["sec"] if a["sec"] > 0 else float("inf")
        print(f"{a['op']:<26}{a['n']:>7}{1e3 * a['sec']:>13.3f}{1e3 * b['sec']:>13.3f}{ratio:>9.2f}")
    print(f"(backends: {numba_res['backend']} vs {numpy_res['backend']}; ratio = numpy / numba)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
