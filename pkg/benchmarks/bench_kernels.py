"""Compiled versus NumPy kernel timings.

    python3 benchmarks/bench_kernels.py [--n 500] [--repeat 3]

Times the smoothing kernels (with and without latent-effect quadrature), the
pair distance kernel and one full analysis under each backend, and reports the
largest disagreement between the two.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from benefitmark import kernels
from benefitmark.indirect import gauss_hermite_normal
from benefitmark.kernels import BENEFIT_DIRECT, BENEFIT_LEQ, LINK_CODES

BANDWIDTHS = 2.0 ** np.arange(-5, 6)


def cases(n: int, rng: np.random.Generator) -> dict:
    z = np.sort(rng.normal(size=n))
    nodes, weights = gauss_hermite_normal(32)
    one, unit = np.zeros(1), np.ones(1)
    a1 = rng.normal(size=(n, 1))
    b1 = rng.normal(size=(n, 1))
    a2 = rng.normal(size=(n, 2))
    b2 = rng.normal(size=(n, 2))
    x0 = rng.normal(size=(n // 2, 4))
    x1 = rng.normal(size=(n - n // 2, 4))
    return {
        "smooth, direct surface": (
            "nw_benefit", (z, z, BANDWIDTHS, a1, b1, BENEFIT_DIRECT, LINK_CODES["logit"],
                           one, unit, 0.0, 1.0)),
        "smooth, logit, 32 nodes": (
            "nw_benefit", (z, z, BANDWIDTHS, a2, b2, BENEFIT_LEQ, LINK_CODES["logit"],
                           nodes, weights, 0.0, 1.0)),
        "smooth, probit, 32 nodes": (
            "nw_benefit", (z, z, BANDWIDTHS, a2, b2, BENEFIT_LEQ, LINK_CODES["probit"],
                           nodes, weights, 0.0, 1.0)),
        "smooth, precomputed values": (
            "nw_matrix", (z, z, BANDWIDTHS, rng.random((n, n)))),
        "pair distances": ("pair_sq_distances", (x0, x1)),
    }


def disagreement(x, y) -> float:
    x = x if isinstance(x, tuple) else (x,)
    y = y if isinstance(y, tuple) else (y,)
    return max(float(np.max(np.abs(p - q) / np.maximum(1.0, np.abs(q)))) for p, q in zip(x, y))


def end_to_end(n: int, pure: bool) -> float:
    """Seconds for one default-grid analysis in a fresh interpreter."""
    code = (
        "import time, sys\n"
        "sys.path.insert(0, 'tests')\n"
        "from conftest import SCENARIO_DOC\n"
        "from benefitmark import AnalysisConfig, Scenario, analyze, simulate_trial\n"
        "sc = Scenario.from_dict(SCENARIO_DOC)\n"
        f"data = simulate_trial(sc, {n}, 1).masked()\n"
        "cfg = AnalysisConfig(benefit=sc.benefit, marker_columns=('z',), covariate_columns=('w',))\n"
        "t = time.perf_counter(); analyze(data, cfg); print(time.perf_counter() - t)\n"
    )
    env = dict(os.environ, BENEFITMARK_PURE="1" if pure else "0")
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = subprocess.run([sys.executable, "-c", code], env=env, cwd=root, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=500)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if kernels.compiled_backend is None:
        sys.exit("compiled extension not built: pip install -e . --no-build-isolation")

    rng = np.random.default_rng(0)
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<28s}{'compiled s':>12s}{'numpy s':>12s}{'speedup':>10s}{'max rel diff':>14s}")
    for name, (fn, fargs) in cases(args.n, rng).items():
        fast = getattr(kernels.compiled_backend, fn)
        slow = getattr(kernels.python_backend, fn)
        t_fast = min(timeit.repeat(lambda: fast(*fargs), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*fargs), number=1, repeat=args.repeat))
        diff = disagreement(fast(*fargs), slow(*fargs))
        print(f"{name:<28s}{t_fast:>12.4f}{t_slow:>12.4f}{t_slow / t_fast:>10.1f}{diff:>14.1e}")
    t_fast = end_to_end(args.n, pure=False)
    t_slow = end_to_end(args.n, pure=True)
    print(f"{'analyze, default grid':<28s}{t_fast:>12.4f}{t_slow:>12.4f}{t_slow / t_fast:>10.1f}")


if __name__ == "__main__":
    main()
