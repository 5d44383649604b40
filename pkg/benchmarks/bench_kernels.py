"""Time each hot kernel under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Every kernel is run once per backend before timing so numba compilation is
excluded. Outputs are compared across backends as a sanity check.
"""
import argparse
import json
import time

import numpy as np

from synthgauge import _accel, _kernels


def _cases(rng):
    x, y = rng.standard_normal((1000, 32)), rng.standard_normal((1000, 32))
    m = rng.standard_normal((64, 64))
    m = m + m.T
    pts = rng.standard_normal((300, 10))
    d2 = ((pts[:, None] - pts[None]) ** 2).sum(-1)
    lay = rng.standard_normal((300, 2))
    p = np.exp(-d2)
    np.fill_diagonal(p, 0.0)
    p /= p.sum()
    return {
        "sq_dists 1000x1000x32": (_kernels.sq_dists, (x, y)),
        "cosine_dists 1000x1000x32": (_kernels.cosine_dists, (x, y)),
        "jacobi 64x64": (_kernels.jacobi, (m, 100, 1e-12)),
        "perplexity_rows N=300": (_kernels.perplexity_rows, (d2, np.log(30.0))),
        "tsne_grad N=300": (_kernels.tsne_grad, (lay, p, 1.0)),
    }


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def _time(fn, args, repeat):
    fn(*args)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, _first(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    if not _accel.HAS_NUMBA:
        print("numba is not installed; only the numpy backend can be timed")
    backends = ["numba", "numpy"] if _accel.HAS_NUMBA else ["numpy"]
    rows = []
    print(f"{'kernel':30s} " + " ".join(f"{b:>11s}" for b in backends) + "    speedup  max|diff|")
    for name, (fn, fargs) in _cases(np.random.default_rng(0)).items():
        times, outs = {}, {}
        for b in backends:
            prev = _accel.set_backend(b)
            try:
                times[b], outs[b] = _time(fn, fargs, args.repeat)
            finally:
                _accel.set_backend(prev)
        row = {"kernel": name, **{f"{b}_s": times[b] for b in backends}}
        line = f"{name:30s} " + " ".join(f"{1e3 * times[b]:9.2f}ms" for b in backends)
        if len(backends) == 2:
            row["speedup"] = times["numpy"] / times["numba"]
            row["max_abs_diff"] = float(np.max(np.abs(np.abs(outs["numba"]) - np.abs(outs["numpy"]))))
            line += f"  {row['speedup']:8.1f}x  {row['max_abs_diff']:.1e}"
        print(line)
        rows.append(row)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
