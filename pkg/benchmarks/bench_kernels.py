"""Compare the compiled and NumPy backends of the per-iteration GLM sweep.

    python benchmarks/bench_kernels.py [--n 50000] [--p 100] [--repeat 30]

Times one full pass (objective, gradient, mu2, mu4) per family and backend,
then one complete Newton-Stein fit per backend.
"""
import argparse
import statistics
import time

import numpy as np

from newstein import OptimizerConfig, SpikedModelSpec, generate_spiked, optimize
from newstein import kernels
from newstein.family import FAMILIES


def time_pass(data, beta, fam, backend, repeat):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        kernels.glm_pass(data.X, beta, data.y, fam, True, backend)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50_000)
    ap.add_argument("--p", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=30)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the NumPy backend is available")
    data = generate_spiked(SpikedModelSpec(n=args.n, p=args.p, seed=0))
    beta = np.random.default_rng(1).standard_normal(args.p) / np.sqrt(args.p)

    print(f"one sweep, n={args.n}, p={args.p}, median of {args.repeat} (ms)")
    print(f"{'family':<15}" + "".join(f"{b:>10}" for b in backends) + "   speed-up")
    for name, fam in sorted(FAMILIES.items()):
        times = {b: time_pass(data, beta, fam, b, args.repeat) for b in backends}
        row = "".join(f"{1e3 * times[b]:>10.2f}" for b in backends)
        ratio = times["python"] / times["cython"] if "cython" in times else 1.0
        print(f"{name:<15}{row}   {ratio:8.2f}x")

    print("\nfull Newton-Stein fit (logistic, default suggestions)")
    for b in backends:
        t0 = time.perf_counter()
        tr = optimize(data, "logistic", None, OptimizerConfig(backend=b))
        dt = time.perf_counter() - t0
        print(f"{b:<15}{dt:8.3f} s  {tr.iterations} iterations ({tr.termination})")


if __name__ == "__main__":
    main()
