"""Time the numba kernels against their pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--end-to-end]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from jointges import _kernels


def _cases(rng):
    p, K, n = 60, 3, 200
    X = rng.standard_normal((K, n, p))
    grams = np.ascontiguousarray(np.einsum("kni,knj->kij", X, X))
    idx = np.array(sorted(rng.choice(np.arange(1, p), 8, replace=False)), dtype=np.int64)

    m = 12
    Z = rng.standard_normal((n, m))
    y = Z[:, :3] @ np.array([1.0, -0.5, 0.3]) + rng.standard_normal(n)
    G, c = Z.T @ Z / n, Z.T @ y / n
    lmax = 2 * np.abs(c).max()
    lams = np.geomspace(lmax, lmax * 1e-3, 50)

    A = np.triu(rng.uniform(-1, 1, (p, p)) * (rng.random((p, p)) < 0.05), 1)
    eps = rng.standard_normal((2000, p))
    order = np.arange(p, dtype=np.int64)
    return {
        "gram_rss (K=3, |pa|=8)": lambda nb: _kernels.gram_rss(grams, 0, idx, use_numba=nb),
        "cd_lasso_path (m=12, 50 lambdas)": lambda nb: _kernels.cd_lasso_path(G, c, lams, tol=1e-8, use_numba=nb),
        "forward_sample (n=2000, p=60)": lambda nb: _kernels.forward_sample(eps, A, order, use_numba=nb),
    }


def _end_to_end(disable: bool) -> float:
    code = (
        "import time, numpy as np\n"
        "from jointges import MultiDataset, ScoreConfig, JointModelConfig, random_joint_model, sample, joint_ges\n"
        "rng = np.random.default_rng(0)\n"
        "_, sems, _ = random_joint_model(JointModelConfig(p=30, K=3, core_edges=30, extra_edges=10), rng)\n"
        "data = MultiDataset([sample(m, 100, rng) for m in sems])\n"
        "joint_ges(data, ScoreConfig(scaling_c=3))\n"
        "t = time.perf_counter(); joint_ges(data, ScoreConfig(scaling_c=3)); print(time.perf_counter() - t)\n"
    )
    env = dict(os.environ, JOINTGES_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--end-to-end", action="store_true", help="also time a full joint fit (p=30, K=3)")
    args = ap.parse_args(argv)
    if not _kernels.USE_NUMBA:
        print("numba unavailable or disabled; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speedup':>8s}")
    for name, fn in _cases(rng).items():
        fn(True)  # compile
        t_py = min(timeit.repeat(lambda: fn(False), number=1, repeat=args.repeat // 10 or 1))
        t_nb = min(timeit.repeat(lambda: fn(True), number=1, repeat=args.repeat))
        print(f"{name:36s} {1e6 * t_py:12.1f} {1e6 * t_nb:12.1f} {t_py / t_nb:8.1f}")
    if args.end_to_end:
        t_nb, t_py = _end_to_end(False), _end_to_end(True)
        print(f"{'joint fit p=30 K=3 [s]':36s} {t_py:12.2f} {t_nb:12.2f} {t_py / t_nb:8.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
