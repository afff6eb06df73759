"""Compare the compiled routing kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 12 50 200] [--repeat 5]

Also times a short end-to-end simulation under each backend (the backend is
chosen at import, so that part runs in subprocesses with MESHROUTE_PURE set
or unset).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from meshroute import _kernels_py

try:
    from meshroute import _kernels as _compiled
except ImportError:
    _compiled = None

SIM_SNIPPET = (
    "import time; from meshroute import simulate, builtin_scenario, BACKEND;"
    "sc = builtin_scenario('diamond').with_params(duration_s=10);"
    "t = time.perf_counter(); simulate(sc, '{proto}'); print(BACKEND, time.perf_counter() - t)"
)


def inputs(n: int, rng: np.random.Generator):
    w = rng.uniform(100, 2000, n)
    w[rng.random(n) < 0.5] = np.inf
    adv = rng.uniform(0, 1e4, (n, n))
    usable = (np.isfinite(w)).astype(np.uint8)
    q = rng.integers(0, 20, n).astype(float)
    W = np.where(rng.random((n, n)) < 0.3, rng.uniform(100, 2000, (n, n)), np.inf)
    np.fill_diagonal(W, np.inf)
    cur = np.full((n, n), np.inf)
    np.fill_diagonal(cur, 0.0)
    return w, adv, usable, q, W, cur


def cases(mod, n, rng):
    w, adv, usable, q, W, cur = inputs(n, rng)
    hop = np.empty(n, dtype=np.int64)
    score = np.empty(n)
    out = np.empty((n, n))
    _kernels_py.dv_next_hops(w, adv, usable, hop, score)  # realistic hop table for drain_time
    return {
        "dv_next_hops": lambda: mod.dv_next_hops(w, adv, usable, hop, score),
        "drain_time": lambda: mod.drain_time(w, hop, q),
        "backpressure_select": lambda: mod.backpressure_select(w, adv, usable, q, 0, adv, 1000.0),
        "dv_round": lambda: mod.dv_round(W, cur, out),
    }


def bench_kernels(sizes, repeat):
    backends = [("numpy", _kernels_py)] + ([("cython", _compiled)] if _compiled else [])
    print(f"{'kernel':<22}{'n':>5}" + "".join(f"{name + ' us':>14}" for name, _ in backends) + f"{'speedup':>10}")
    for n in sizes:
        for kernel in ("dv_next_hops", "drain_time", "backpressure_select", "dv_round"):
            times = []
            for _, mod in backends:
                fn = cases(mod, n, np.random.default_rng(n))[kernel]
                loops, _ = timeit.Timer(fn).autorange()
                best = min(timeit.repeat(fn, number=loops, repeat=repeat)) / loops
                times.append(best * 1e6)
            speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else ""
            print(f"{kernel:<22}{n:>5}" + "".join(f"{t:>14.2f}" for t in times) + speed)


def bench_simulation(proto):
    print(f"\nend-to-end: diamond, 10 simulated seconds, {proto}")
    for pure in ("1", ""):
        env = dict(os.environ, MESHROUTE_PURE=pure)
        res = subprocess.run([sys.executable, "-c", SIM_SNIPPET.format(proto=proto)], env=env, capture_output=True, text=True)
        if res.returncode:
            print(res.stderr.strip())
            continue
        backend, secs = res.stdout.split()
        print(f"  {backend:<7} {float(secs):.2f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[12, 50, 200])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--protocol", default="CDP")
    ap.add_argument("--no-sim", action="store_true")
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    bench_kernels(args.sizes, args.repeat)
    if not args.no_sim:
        bench_simulation(args.protocol)


if __name__ == "__main__":
    main()
