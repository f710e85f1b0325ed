import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from krakensim import _accel, kernels

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def reference_backup(P, R, gamma, H):
    S, A = R.shape
    Q = np.zeros((H, S, A))
    V = np.zeros(S)
    for h in range(H):
        for s in range(S):
            for a in range(A):
                Q[h, s, a] = R[s, a] + gamma * sum(P[s, a, t] * V[t] for t in range(S))
        V = Q[h].max(axis=1)
    return Q


def reference_scan(x, e, thr, run_len):
    out, run = [], 0
    for i, (a, b) in enumerate(zip(x, e)):
        run = run + 1 if abs(a - b) > thr else 0
        if run == run_len:
            out.append(i)
    return out


@needs_numba
@given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_backup_flavours_agree(S, A, H, seed):
    rng = np.random.default_rng(seed)
    P = rng.random((S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.normal(size=(S, A))
    ref = reference_backup(P, R, 0.9, H)
    np.testing.assert_allclose(kernels._backup_nb(P, R, 0.9, H), ref, atol=1e-12)
    np.testing.assert_allclose(kernels._backup_np(P, R, 0.9, H), ref, atol=1e-12)


@needs_numba
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_quantize_flavours_agree(seed, d):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-5, 0, d)
    hi = lo + rng.uniform(0.5, 5, d)
    cells = rng.integers(1, 20, d).astype(np.int64)
    x = rng.uniform(lo - 1, hi + 1, (50, d))
    k1, d1 = kernels._quantize_nb(x, lo, hi, cells)
    k2, d2 = kernels._quantize_np(x, lo, hi, cells)
    assert np.array_equal(k1, k2)
    np.testing.assert_allclose(d1, d2, atol=1e-12)
    assert (d1 >= 0).all() and (d1 <= 1).all()


@needs_numba
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_residual_scan_flavours_agree(seed, run_len):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=300)
    e = np.zeros(300)
    ref = reference_scan(x, e, 1.0, run_len)
    assert kernels._residual_scan_nb(x, e, 1.0, run_len).tolist() == ref
    assert kernels._residual_scan_np(x, e, 1.0, run_len).tolist() == ref


@needs_numba
def test_rollout_flavours_agree():
    rng = np.random.default_rng(3)
    S, A, H, K = 4, 3, 5, 200
    P = rng.random((S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    cumP = np.cumsum(P, axis=2)
    cumP[..., -1] = 1.0
    R = rng.random((S, A))
    pol = rng.integers(0, A, (H - 1, S)).astype(np.int64)
    u = rng.random((K, H))
    np.testing.assert_allclose(
        kernels._rollouts_nb(cumP, R, pol, 1, 2, u, 0.9), kernels._rollouts_np(cumP, R, pol, 1, 2, u, 0.9), atol=1e-12
    )


def test_rollout_mean_matches_policy_value():
    # with the greedy continuation, sampled returns estimate the DP value
    rng = np.random.default_rng(11)
    S, A, H = 3, 2, 4
    P = rng.random((S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((S, A))
    Q = reference_backup(P, R, 0.95, H)
    pol = np.argmax(Q[: H - 1], axis=2).astype(np.int64)
    cumP = np.cumsum(P, axis=2)
    cumP[..., -1] = 1.0
    est = kernels.rollouts(cumP, R, pol, 0, 1, rng.random((40_000, H)), 0.95).mean()
    assert est == pytest.approx(Q[H - 1, 0, 1], abs=0.02)


def test_backend_flag_reported():
    assert _accel.backend() in ("numba", "numpy")
