"""Time the numba and numpy flavours of each hot kernel and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both flavours are imported directly from ``krakensim.kernels``, so the
``KRAKENSIM_DISABLE_NUMBA`` flag does not matter here. The first numba call
(compilation or cache load) is excluded from the timings.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from krakensim import _accel, kernels


def workloads(rng: np.random.Generator) -> dict[str, tuple]:
    S, A, H, K = 16, 4, 8, 4096
    P = rng.random((S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((S, A))
    cumP = np.cumsum(P, axis=2)
    cumP[..., -1] = 1.0
    policy = rng.integers(0, A, size=(H - 1, S)).astype(np.int64)
    n = 200_000
    values = rng.random((n, 3)) * 10.0
    lo, hi, cells = np.zeros(3), np.full(3, 10.0), np.array([8, 16, 32], dtype=np.int64)
    samples = rng.normal(0.0, 1.0, 1_000_000)
    samples[::997] += 8.0
    samples[1::997] += 8.0
    return {
        "quantize": ((values, lo, hi, cells), kernels._quantize_nb, kernels._quantize_np),
        "backup": ((P, R, 0.95, 32), kernels._backup_nb, kernels._backup_np),
        "rollouts": ((cumP, R, policy, 0, 1, rng.random((K, H)), 0.95), kernels._rollouts_nb, kernels._rollouts_np),
        "residual_scan": ((samples, np.zeros_like(samples), 4.0, 2), kernels._residual_scan_nb, kernels._residual_scan_np),
    }


def agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    if a.dtype.kind in "iu":
        return np.array_equal(a, b)
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<14} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}  agree")
    ok = True
    for name, (inputs, nb, npf) in workloads(rng).items():
        same = agree(nb(*inputs), npf(*inputs))
        ok &= same
        t_nb = min(timeit.repeat(lambda: nb(*inputs), number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: npf(*inputs), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<14} {t_nb:>10.3f} {t_np:>10.3f} {t_np / t_nb:>8.2f}  {'yes' if same else 'NO'}")
    return 0 if ok else 2


if __name__ == "__main__":
    raise SystemExit(main())
