"""Timing comparison of the compiled and fallback kernel backends.

Runs each hot kernel (direct convolution, population step, branching tree
sizes) on both implementations over identical inputs, checks that they
agree, and reports best-of-N wall times.  Compilation happens during the
warm-up pass, so the numba column reflects steady-state cost.

    python benchmarks/bench_backends.py [--repeats N] [--scale X]
"""

import argparse
import time

import numpy as np

from drphase.kernels import KIND_FINITE, available_backends, get_backend


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(scale: float):
    rng = np.random.default_rng(42)
    p = rng.random(max(int(4096 * scale), 8))
    p /= p.sum()
    q = rng.random(max(int(2048 * scale), 8))
    q /= q.sum()
    samples = rng.integers(0, 6, size=max(int(200_000 * scale), 64),
                           dtype=np.int64)
    cdf = np.array([0.5, 1.0])  # offspring count uniform on {1, 2}
    seeds = np.arange(max(int(2_000 * scale), 16), dtype=np.uint64)
    return (
        ("conv_direct",
         lambda be: be.conv_direct(p, q),
         lambda a, b: np.allclose(a, b, rtol=1e-13, atol=0.0)),
        ("mc_step",
         lambda be: be.mc_step(samples, 1, 1234, 3, KIND_FINITE, 0, cdf, 0.0),
         np.array_equal),
        ("gw_sizes",
         lambda be: be.gw_sizes(seeds, 10, KIND_FINITE, 0, cdf, 0.0),
         np.array_equal),
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed passes per kernel; best is reported")
    parser.add_argument("--scale", type=float, default=1.0,
                        help="multiplier on every workload size")
    args = parser.parse_args()

    names = available_backends()
    backends = [get_backend(name) for name in names]
    print(f"backends: {', '.join(names)}")
    header = f"{'kernel':<14}" + "".join(f"{n:>14}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, call, same in workloads(args.scale):
        outs = [call(be) for be in backends]  # warm-up and JIT
        if len(outs) == 2 and not same(outs[0], outs[1]):
            raise SystemExit(f"{label}: backends disagree")
        times = [best_of(lambda be=be: call(be), args.repeats)
                 for be in backends]
        row = f"{label:<14}" + "".join(f"{t * 1e3:>11.2f} ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
