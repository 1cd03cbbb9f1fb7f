"""Timing comparison of the compiled and pure NumPy kernel backends.

Runs the likelihood kernels that dominate fitting time on synthetic inputs
of increasing size, checks that both backends agree to 1e-9 relative before
trusting the timings, and prints a table with the speedup of the compiled
extension. Usage:

    python3 benchmarks/bench_backends.py [--sizes 1000,10000,100000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from blockhawkes import _pykernels

try:
    from blockhawkes import _ckernels
except ImportError:
    _ckernels = None


def _times(rng, m, horizon):
    return np.sort(rng.uniform(0.0, horizon, size=m))


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _check(a, b):
    rel = abs(a - b) / max(1.0, abs(a), abs(b))
    if rel > 1e-9:
        raise AssertionError(f"backends disagree: {a!r} vs {b!r}")


def build_cases(sizes, seed=0):
    rng = np.random.default_rng(seed)
    horizon = 100.0
    alpha, beta, lam = 0.8, 1.6, 2.0
    k = 4
    cases = []
    for m in sizes:
        t = _times(rng, m, horizon)
        cases.append((
            f"loglik m={m}",
            lambda mod, t=t: mod.hawkes_loglik(t, horizon, alpha, beta, lam),
        ))
        w = rng.uniform(0.0, 1.0, size=m)
        cases.append((
            f"weighted m={m}",
            lambda mod, t=t, w=w: mod.hawkes_loglik_weighted(
                t, w, horizon, alpha, beta, lam),
        ))
        cases.append((
            f"gradient m={m}",
            lambda mod, t=t, w=w: mod.hawkes_loglik_weighted_grad(
                t, w, horizon, alpha, beta, lam)[0],
        ))
    m = sizes[-1]
    t = _times(rng, m, horizon)
    send = rng.integers(0, 64, size=m)
    recv = (send + 1 + rng.integers(0, 63, size=m)) % 64
    tau = rng.dirichlet(np.ones(k), size=64)
    alphas = np.full((k, k), alpha)
    betas = np.full((k, k), beta)
    lams = np.full((k, k), lam)
    cases.append((
        f"elbo value m={m} k={k}",
        lambda mod: mod.elbo_hawkes_value(
            t, send, recv, tau, alphas, betas, lams, horizon),
    ))
    cases.append((
        f"elbo caches m={m} k={k}",
        lambda mod: mod.elbo_hawkes_caches(
            t, send, recv, tau, alphas, betas, lams, horizon)[0],
    ))
    return cases


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1000,10000,100000")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if _ckernels is None:
        print("compiled extension not importable; timing the fallback only")
    cases = build_cases(sizes)
    width = max(len(name) for name, _ in cases)
    header = f"{'kernel':<{width}}  {'python':>10}"
    if _ckernels is not None:
        header += f"  {'compiled':>10}  {'speedup':>8}"
    print(header)
    for name, call in cases:
        py_value = call(_pykernels)
        py_time = _best_of(lambda: call(_pykernels), args.repeats)
        line = f"{name:<{width}}  {py_time * 1e3:>8.2f}ms"
        if _ckernels is not None:
            c_value = call(_ckernels)
            _check(py_value, c_value)
            c_time = _best_of(lambda: call(_ckernels), args.repeats)
            line += f"  {c_time * 1e3:>8.2f}ms  {py_time / c_time:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
