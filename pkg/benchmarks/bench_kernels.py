"""Compare the numba kernels with the pure-numpy fallback.

    python benchmarks/bench_kernels.py --resolution 64 --repeat 5

Each kernel runs once per backend to warm up (and to compile on the numba
side), then ``--repeat`` timed runs; the best time is reported together with
the max difference between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from abfoliate import _kernels
from abfoliate.minkowski import PhiFamily


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _cases(n, rng):
    f = rng.standard_normal((n, n, n))
    x = rng.standard_normal(n ** 3)
    b = rng.uniform(0.05, 0.6, n ** 3)
    bn = b * rng.uniform(0.05, 1.0, n ** 3)
    kro = PhiFamily.kropina()
    lo, hi = kro.s_domain
    phi = lambda s: _kernels.phi_numpy(kro.code, kro.l, s)
    return {
        "fd_derivative": lambda: _kernels.fd_derivative(f, 1, 1.0 / n),
        "pairwise_sum": lambda: np.array(_kernels.pairwise_sum(x)),
        "solve_fixed_point": lambda: _kernels.solve_fixed_point(
            b, bn, phi=phi, dom_lo=lo, dom_hi=hi, code=kro.code, l=kro.l)[0],
    }


def run(resolution: int, repeat: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    cases = _cases(resolution, rng)
    saved = _kernels.get_backend()
    rows = []
    try:
        for name, fn in cases.items():
            timing, outputs = {}, {}
            for backend in ("numpy", "numba"):
                _kernels.set_backend(backend)
                timing[backend], outputs[backend] = _best(fn, repeat)
            diff = float(np.nanmax(np.abs(outputs["numpy"] - outputs["numba"])))
            rows.append({"kernel": name, "nodes": resolution ** 3,
                         "numpy_s": timing["numpy"], "numba_s": timing["numba"],
                         "speedup": timing["numpy"] / timing["numba"], "max_abs_diff": diff})
    finally:
        _kernels.set_backend(saved)
    return rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    rows = run(args.resolution, args.repeat)
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'kernel':<20s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    for r in rows:
        print(f"{r['kernel']:<20s} {r['numpy_s']:11.4f} {r['numba_s']:11.4f} "
              f"{r['speedup']:8.1f} {r['max_abs_diff']:11.2e}")


if __name__ == "__main__":
    main()
