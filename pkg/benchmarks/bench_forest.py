"""Time forest growth and prediction under the numba and numpy backends.

    python3 benchmarks/bench_forest.py [--n 1000 2000] [--trees 200] [--repeat 3]

Both backends consume the same pre-drawn randomness, so the fitted forests
must agree exactly; the script checks that before reporting timings.
"""

import argparse
import time

import numpy as np

from diffvar._jit import HAS_NUMBA, USE_JIT
from diffvar.learners.forest import ForestParams, fit_forest


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--trees", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not (HAS_NUMBA and USE_JIT):
        print("numba unavailable or disabled (DIFFVAR_DISABLE_JIT); timing numpy only")
    params = ForestParams(trees=args.trees)
    print(f"{'n':>6} {'backend':>8} {'fit s':>8} {'predict s':>10} {'speedup':>8}")
    for n in args.n:
        r = np.random.default_rng(n)
        x = r.normal(size=(n, args.p))
        y = x[:, 0] ** 2 + 2 * (x[:, 1] < 0) + r.normal(size=n)
        res = {}
        for backend in (("jit", "numpy") if USE_JIT else ("numpy",)):
            fit_forest(x[:50], y[:50], ForestParams(trees=2), backend=backend)  # compile
            tf, model = best_of(lambda: fit_forest(x, y, params, backend=backend), args.repeat)
            tp, pred = best_of(lambda: model.predict(x, backend=backend), args.repeat)
            res[backend] = (tf, tp, pred)
        if "jit" in res:
            assert np.array_equal(res["jit"][2], res["numpy"][2]), "backends disagree"
        base = res["numpy"][0] + res["numpy"][1]
        for backend, (tf, tp, _) in res.items():
            print(f"{n:>6} {backend:>8} {tf:>8.3f} {tp:>10.3f} {base / (tf + tp):>7.1f}x")


if __name__ == "__main__":
    main()
