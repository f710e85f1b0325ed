"""Hot numeric loops, each in a numba flavour and a vectorised numpy flavour.

The public functions dispatch on :data:`krakensim._accel.USE_NUMBA`. Both
flavours must return identical results (bit-for-bit for the integer outputs,
to float rounding for the value tables); ``tests/test_kernels.py`` and
``benchmarks/bench_kernels.py`` hold them to that.
"""

import numpy as np

from krakensim._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# uniform quantizer


@njit
def _quantize_nb(values, lo, hi, n_cells):
    n, d = values.shape
    keys = np.empty((n, d), dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            span = hi[j] - lo[j]
            width = span / n_cells[j]
            c = int(np.floor((values[i, j] - lo[j]) / width))
            if c < 0:
                c = 0
            elif c >= n_cells[j]:
                c = n_cells[j] - 1
            keys[i, j] = c
            centre = lo[j] + (c + 0.5) * width
            e = abs(values[i, j] - centre) / span
            if e > 1.0:
                e = 1.0
            acc += e
        dist[i] = acc / d
    return keys, dist


def _quantize_np(values, lo, hi, n_cells):
    span = hi - lo
    width = span / n_cells
    keys = np.floor((values - lo) / width).astype(np.int64)
    keys = np.clip(keys, 0, n_cells - 1)
    centre = lo + (keys + 0.5) * width
    err = np.minimum(np.abs(values - centre) / span, 1.0)
    return keys, err.mean(axis=1)


def quantize(values, lo, hi, n_cells):
    """Per-dimension uniform quantization of an ``(n, d)`` batch.

    Returns cell indices ``(n, d)`` and the per-row distortion: mean over
    dimensions of ``|x - centre| / (hi - lo)``, clipped to 1.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    lo = np.ascontiguousarray(lo, dtype=np.float64)
    hi = np.ascontiguousarray(hi, dtype=np.float64)
    n_cells = np.ascontiguousarray(n_cells, dtype=np.int64)
    fn = _quantize_nb if USE_NUMBA else _quantize_np
    return fn(values, lo, hi, n_cells)


# ---------------------------------------------------------------------------
# finite-horizon expectimax backup


@njit
def _backup_nb(P, R, gamma, H):
    S, A = R.shape
    Q = np.zeros((H, S, A))
    V = np.zeros(S)
    for h in range(H):
        newV = np.empty(S)
        for s in range(S):
            best = -np.inf
            for a in range(A):
                acc = 0.0
                for s2 in range(S):
                    acc += P[s, a, s2] * V[s2]
                q = R[s, a] + gamma * acc
                Q[h, s, a] = q
                if q > best:
                    best = q
            newV[s] = best
        V = newV
    return Q


def _backup_np(P, R, gamma, H):
    S, A = R.shape
    Q = np.zeros((H, S, A))
    V = np.zeros(S)
    for h in range(H):
        Q[h] = R + gamma * (P @ V)
        V = Q[h].max(axis=1)
    return Q


def backup(P, R, gamma, H):
    """``Q[h-1, s, a]``: optimal value with ``h`` steps to go, ``h = 1..H``."""
    P = np.ascontiguousarray(P, dtype=np.float64)
    R = np.ascontiguousarray(R, dtype=np.float64)
    fn = _backup_nb if USE_NUMBA else _backup_np
    return fn(P, R, float(gamma), int(H))


# ---------------------------------------------------------------------------
# sampled rollouts


@njit
def _rollouts_nb(cumP, R, policy, s0, a0, uniforms, gamma):
    K, H = uniforms.shape
    out = np.empty(K)
    for k in range(K):
        s = s0
        a = a0
        ret = 0.0
        disc = 1.0
        for t in range(H):
            ret += disc * R[s, a]
            disc *= gamma
            if t + 1 < H:
                u = uniforms[k, t]
                row = cumP[s, a]
                j = 0
                while u >= row[j]:
                    j += 1
                s = j
                a = policy[H - t - 2, s]
        out[k] = ret
    return out


def _rollouts_np(cumP, R, policy, s0, a0, uniforms, gamma):
    K, H = uniforms.shape
    s = np.full(K, s0, dtype=np.int64)
    a = np.full(K, a0, dtype=np.int64)
    ret = np.zeros(K)
    disc = 1.0
    for t in range(H):
        ret += disc * R[s, a]
        disc *= gamma
        if t + 1 < H:
            rows = cumP[s, a]
            s = np.argmax(uniforms[:, t, None] < rows, axis=1)
            a = policy[H - t - 2, s]
    return ret


def rollouts(cumP, R, policy, s0, a0, uniforms, gamma):
    """Discounted returns of ``K`` model rollouts starting with ``(s0, a0)``.

    ``policy[h-1, s]`` is the continuation action with ``h`` steps to go;
    ``uniforms`` is ``(K, H)`` in ``[0, 1)`` and drives inverse-CDF sampling
    against ``cumP`` (last column must be 1).
    """
    fn = _rollouts_nb if USE_NUMBA else _rollouts_np
    return fn(
        np.ascontiguousarray(cumP, dtype=np.float64),
        np.ascontiguousarray(R, dtype=np.float64),
        np.ascontiguousarray(policy, dtype=np.int64),
        int(s0),
        int(a0),
        np.ascontiguousarray(uniforms, dtype=np.float64),
        float(gamma),
    )


# ---------------------------------------------------------------------------
# residual anomaly scan


@njit
def _residual_scan_nb(samples, expected, threshold, run_len):
    n = samples.shape[0]
    out = np.empty(n, dtype=np.int64)
    m = 0
    run = 0
    for i in range(n):
        if abs(samples[i] - expected[i]) > threshold:
            run += 1
            if run == run_len:
                out[m] = i
                m += 1
        else:
            run = 0
    return out[:m]


def _residual_scan_np(samples, expected, threshold, run_len):
    exceed = np.abs(samples - expected) > threshold
    if not exceed.any():
        return np.empty(0, dtype=np.int64)
    # length of the current exceedance run ending at each index
    idx = np.arange(exceed.size)
    last_clear = np.maximum.accumulate(np.where(exceed, -1, idx))
    run = np.where(exceed, idx - last_clear, 0)
    return np.flatnonzero(run == run_len).astype(np.int64)


def residual_scan(samples, expected, threshold, run_len):
    """Indices where a run of ``run_len`` consecutive exceedances completes.

    A sample exceeds when ``|samples - expected| > threshold``; each run
    reports once, at its ``run_len``-th sample.
    """
    fn = _residual_scan_nb if USE_NUMBA else _residual_scan_np
    return fn(
        np.ascontiguousarray(samples, dtype=np.float64),
        np.ascontiguousarray(expected, dtype=np.float64),
        float(threshold),
        int(run_len),
    )
