"""Time the numba and pure-numpy kernel backends side by side.

    python benchmarks/bench_kernels.py [--ticks 23400] [--k 8] [--repeat 20]

Each backend runs in its own subprocess with SIPVOL_BACKEND set, so the
dispatch flag is read exactly as in normal use. Numba compile time is paid
in a warm-up call and excluded from the timings.
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from sipvol import kernels
from sipvol.spot_vol import PreAvgConfig, _weight_vectors, spot_curve

m, k, repeat = (int(a) for a in sys.argv[1:4])
rng = np.random.default_rng(0)
y = np.cumsum(rng.standard_normal(m + 1)) / np.sqrt(m) + 5e-4 * rng.standard_normal(m + 1)
dy = np.diff(y)
g, h = _weight_vectors(k, "skewed")
contrib = rng.standard_normal(m - k + 1) ** 2
lo = np.arange(0, contrib.size - 600, 300, dtype=np.int64)
hi = lo + 600
cfg = PreAvgConfig()

cases = {
    "preaverage_all": lambda: kernels.preaverage_all(dy, g, h),
    "bipower": lambda: kernels.bipower(dy),
    "window_sums": lambda: kernels.window_sums(contrib, lo, hi),
    "spot_curve": lambda: spot_curve(y, 78, cfg),
}
out = {}
for name, fn in cases.items():
    fn()  # warm-up, includes any JIT compile
    out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
print(json.dumps(out))
"""


def time_backend(backend, ticks, k, repeat):
    env = dict(os.environ, SIPVOL_BACKEND=backend)
    res = subprocess.run(
        [sys.executable, "-c", WORKER, str(ticks), str(k), str(repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ticks", type=int, default=23_400)
    ap.add_argument("--k", type=int, default=8, help="pre-averaging window for the kernel cases")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    numba_t = time_backend("numba", args.ticks, args.k, args.repeat)
    numpy_t = time_backend("numpy", args.ticks, args.k, args.repeat)
    print(f"m = {args.ticks}, k = {args.k}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for name in numba_t:
        a, b = numba_t[name] * 1e3, numpy_t[name] * 1e3
        print(f"{name:<16}{a:>12.3f}{b:>12.3f}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
