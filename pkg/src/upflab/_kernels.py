"""Hot numeric kernels in two equivalent implementations.

Each kernel exists as a numba ``@njit`` loop (``*_nb``) and a numpy
fallback (``*_np``); ``upflab._backend.BACKEND`` picks which one the
public names dispatch to. Timestamp arithmetic is integer nanoseconds
and resampling statistics use one shared interpolation rule, so the two
paths agree bit-for-bit on queue timings and resampling counts.

All quantiles use linear interpolation between order statistics
(index ``h = (n - 1) q``), matching numpy's default method.
"""

from __future__ import annotations

import numpy as np

from upflab._backend import njit, using_numba

__all__ = [
    "quantile_sorted",
    "row_quantile_sorted",
    "loo_quantile_sorted",
    "queue_sim",
    "window_busy",
    "perm_count_pair",
    "boot_quantile_stats",
    "lowess_fit",
    "implementations",
]


# --------------------------------------------------------------------
# quantile helpers
# --------------------------------------------------------------------

def quantile_sorted(a: np.ndarray, q: float) -> float:
    """Type-7 quantile of an already-sorted 1-d array."""
    n = a.shape[0]
    h = (n - 1) * q
    i = int(h)
    if i >= n - 1:
        return float(a[n - 1])
    t = h - i
    lo = float(a[i])
    hi = float(a[i + 1])
    if t < 0.5:
        return lo + (hi - lo) * t
    return hi - (hi - lo) * (1.0 - t)


def row_quantile_sorted(m: np.ndarray, q: float) -> np.ndarray:
    """Type-7 quantile of each row of a row-sorted 2-d array."""
    n = m.shape[1]
    h = (n - 1) * q
    i = int(h)
    if i >= n - 1:
        return m[:, n - 1].astype(np.float64)
    t = h - i
    lo = m[:, i].astype(np.float64)
    hi = m[:, i + 1].astype(np.float64)
    if t < 0.5:
        return lo + (hi - lo) * t
    return hi - (hi - lo) * (1.0 - t)


def loo_quantile_sorted(a: np.ndarray, q: float) -> np.ndarray:
    """Leave-one-out quantiles from one sorted array.

    Element ``k`` is the type-7 ``q`` quantile of ``a`` with the value at
    sorted position ``k`` removed. O(n) instead of n full re-sorts.
    """
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 values for leave-one-out")
    m = n - 1
    h = (m - 1) * q
    i = int(h)
    t = h - i
    i2 = min(i + 2, n - 1)
    k = np.arange(n)
    lo = np.where(k <= i, a[min(i + 1, n - 1)], a[i])
    hi = np.where(k <= i + 1, a[i2], a[min(i + 1, n - 1)])
    lo = lo.astype(np.float64)
    hi = hi.astype(np.float64)
    if t < 0.5:
        return lo + (hi - lo) * t
    return hi - (hi - lo) * (1.0 - t)


@njit(cache=True)
def _quantile_sorted_jit(a, q):
    n = a.shape[0]
    h = (n - 1) * q
    i = int(h)
    if i >= n - 1:
        return float(a[n - 1])
    t = h - i
    lo = a[i]
    hi = a[i + 1]
    if t < 0.5:
        return lo + (hi - lo) * t
    return hi - (hi - lo) * (1.0 - t)


# --------------------------------------------------------------------
# shared-server queue simulation
# --------------------------------------------------------------------
#
# Inputs are sorted by (arrival, tie-break); ``rank`` holds small
# non-negative priority ranks (0 = served first, FIFO within a rank).
# Multi-core uses earliest-free-server assignment. All times int64 ns.

def _queue_sim_loop(arrival, service, rank, n_ranks, cores):
    n = arrival.shape[0]
    start = np.empty(n, dtype=np.int64)
    completion = np.empty(n, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    head = np.full(n_ranks, -1, dtype=np.int64)
    tail = np.full(n_ranks, -1, dtype=np.int64)
    server_free = np.zeros(cores, dtype=np.int64)
    queued = 0
    i = 0
    for _served in range(n):
        s_idx = 0
        t_free = server_free[0]
        for c in range(1, cores):
            if server_free[c] < t_free:
                t_free = server_free[c]
                s_idx = c
        while i < n and arrival[i] <= t_free:
            r = rank[i]
            if tail[r] == -1:
                head[r] = i
            else:
                nxt[tail[r]] = i
            tail[r] = i
            queued += 1
            i += 1
        if queued == 0:
            if t_free < arrival[i]:
                t_free = arrival[i]
            while i < n and arrival[i] <= t_free:
                r = rank[i]
                if tail[r] == -1:
                    head[r] = i
                else:
                    nxt[tail[r]] = i
                tail[r] = i
                queued += 1
                i += 1
        j = -1
        for r in range(n_ranks):
            if head[r] != -1:
                j = head[r]
                head[r] = nxt[j]
                if head[r] == -1:
                    tail[r] = -1
                break
        queued -= 1
        start[j] = t_free
        completion[j] = t_free + service[j]
        server_free[s_idx] = completion[j]
    return start, completion


queue_sim_nb = njit(cache=True)(_queue_sim_loop)


def queue_sim_np(arrival, service, rank, n_ranks, cores):
    n = arrival.shape[0]
    if n == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty.copy(), empty.copy()
    if cores == 1 and (n_ranks == 1 or np.all(rank == rank[0])):
        # FIFO single server: completion_i = C_i + max_{j<=i}(arr_j - C_{j-1})
        csum = np.cumsum(service)
        base = arrival - (csum - service)
        completion = np.maximum.accumulate(base) + csum
        start = completion - service
        return start.astype(np.int64), completion.astype(np.int64)
    return _queue_sim_loop(arrival, service, rank, n_ranks, cores)


# --------------------------------------------------------------------
# per-window busy time
# --------------------------------------------------------------------

def _window_busy_loop(start, completion, window_ns, n_windows):
    busy = np.zeros(n_windows, dtype=np.int64)
    for p in range(start.shape[0]):
        s = start[p]
        e = completion[p]
        if e <= s:
            continue
        w0 = s // window_ns
        w1 = (e - 1) // window_ns
        if w0 == w1:
            busy[w0] += e - s
        else:
            busy[w0] += (w0 + 1) * window_ns - s
            for w in range(w0 + 1, w1):
                busy[w] += window_ns
            busy[w1] += e - w1 * window_ns
    return busy


window_busy_nb = njit(cache=True)(_window_busy_loop)


def window_busy_np(start, completion, window_ns, n_windows):
    busy = np.zeros(n_windows, dtype=np.int64)
    dur = completion - start
    live = dur > 0
    w0 = start // window_ns
    w1 = (completion - 1) // window_ns
    same = live & (w0 == w1)
    np.add.at(busy, w0[same], dur[same])
    for p in np.nonzero(live & (w0 != w1))[0]:
        s, e = start[p], completion[p]
        a, b = w0[p], w1[p]
        busy[a] += (a + 1) * window_ns - s
        busy[a + 1 : b] += window_ns
        busy[b] += e - b * window_ns
    return busy


# --------------------------------------------------------------------
# permutation resampling
# --------------------------------------------------------------------
#
# One chunk of resamples: ``u`` holds pre-drawn uniforms, one row per
# resample; argsorting a row yields the pooled-relabeling permutation.
# Counts resamples whose |delta-quantile| reaches the observed values
# for two quantiles at once (they share the shuffles).

def _perm_count_pair_loop(pooled, u, n_x, q1, q2, t1_abs, t2_abs):
    n = pooled.shape[0]
    n_y = n - n_x
    c1 = 0
    c2 = 0
    x = np.empty(n_x, dtype=np.float64)
    y = np.empty(n_y, dtype=np.float64)
    for b in range(u.shape[0]):
        idx = np.argsort(u[b])
        for j in range(n_x):
            x[j] = pooled[idx[j]]
        for j in range(n_y):
            y[j] = pooled[idx[n_x + j]]
        x.sort()
        y.sort()
        t1 = _quantile_sorted_jit(x, q1) - _quantile_sorted_jit(y, q1)
        if abs(t1) >= t1_abs:
            c1 += 1
        t2 = _quantile_sorted_jit(x, q2) - _quantile_sorted_jit(y, q2)
        if abs(t2) >= t2_abs:
            c2 += 1
    return c1, c2


perm_count_pair_nb = njit(cache=True)(_perm_count_pair_loop)


def perm_count_pair_np(pooled, u, n_x, q1, q2, t1_abs, t2_abs):
    idx = np.argsort(u, axis=1)
    perm = pooled[idx]
    x = np.sort(perm[:, :n_x], axis=1)
    y = np.sort(perm[:, n_x:], axis=1)
    t1 = row_quantile_sorted(x, q1) - row_quantile_sorted(y, q1)
    t2 = row_quantile_sorted(x, q2) - row_quantile_sorted(y, q2)
    c1 = int(np.count_nonzero(np.abs(t1) >= t1_abs))
    c2 = int(np.count_nonzero(np.abs(t2) >= t2_abs))
    return c1, c2


# --------------------------------------------------------------------
# bootstrap resampling
# --------------------------------------------------------------------
#
# Per-resample delta-quantile statistics; ``idx_x``/``idx_y`` are
# pre-drawn with-replacement index chunks, one row per resample.

def _boot_quantile_stats_loop(x, y, idx_x, idx_y, q):
    b = idx_x.shape[0]
    out = np.empty(b, dtype=np.float64)
    xs = np.empty(idx_x.shape[1], dtype=np.float64)
    ys = np.empty(idx_y.shape[1], dtype=np.float64)
    for r in range(b):
        for j in range(idx_x.shape[1]):
            xs[j] = x[idx_x[r, j]]
        for j in range(idx_y.shape[1]):
            ys[j] = y[idx_y[r, j]]
        xs.sort()
        ys.sort()
        out[r] = _quantile_sorted_jit(xs, q) - _quantile_sorted_jit(ys, q)
    return out


boot_quantile_stats_nb = njit(cache=True)(_boot_quantile_stats_loop)


def boot_quantile_stats_np(x, y, idx_x, idx_y, q):
    xs = np.sort(x[idx_x], axis=1)
    ys = np.sort(y[idx_y], axis=1)
    return row_quantile_sorted(xs, q) - row_quantile_sorted(ys, q)


# --------------------------------------------------------------------
# LOWESS
# --------------------------------------------------------------------
#
# One smoothing pass over x-sorted data: local linear fit at every
# point over its k nearest neighbors, tricube distance weights times
# the caller's robustness weights. The robustifying outer loop lives in
# upflab.stats.smoothing.

def _lowess_fit_loop(x, y, k, rweights):
    n = x.shape[0]
    fitted = np.empty(n, dtype=np.float64)
    for i in range(n):
        lo = i
        hi = i + 1
        while hi - lo < k:
            left = x[i] - x[lo - 1] if lo > 0 else np.inf
            right = x[hi] - x[i] if hi < n else np.inf
            if left <= right:
                lo -= 1
            else:
                hi += 1
        dmax = max(x[i] - x[lo], x[hi - 1] - x[i])
        sw = 0.0
        swx = 0.0
        swx2 = 0.0
        swy = 0.0
        swxy = 0.0
        for j in range(lo, hi):
            if dmax > 0.0:
                d = abs(x[j] - x[i]) / dmax
                u = 1.0 - d * d * d
                w = u * u * u if u > 0.0 else 0.0
            else:
                w = 1.0
            w *= rweights[j]
            dx = x[j] - x[i]
            sw += w
            swx += w * dx
            swx2 += w * dx * dx
            swy += w * y[j]
            swxy += w * dx * y[j]
        if sw <= 0.0:
            # all window weights vanished (robustness zeroed them)
            acc = 0.0
            for j in range(lo, hi):
                acc += y[j]
            fitted[i] = acc / (hi - lo)
            continue
        denom = sw * swx2 - swx * swx
        if denom <= 1e-12 * sw * swx2 or swx2 == 0.0:
            fitted[i] = swy / sw
        else:
            fitted[i] = (swx2 * swy - swx * swxy) / denom
    return fitted


lowess_fit_nb = njit(cache=True)(_lowess_fit_loop)


def lowess_fit_np(x, y, k, rweights):
    n = x.shape[0]
    fitted = np.empty(n, dtype=np.float64)
    for i in range(n):
        lo = i
        hi = i + 1
        while hi - lo < k:
            left = x[i] - x[lo - 1] if lo > 0 else np.inf
            right = x[hi] - x[i] if hi < n else np.inf
            if left <= right:
                lo -= 1
            else:
                hi += 1
        xi = x[lo:hi]
        dmax = max(x[i] - x[lo], x[hi - 1] - x[i])
        if dmax > 0.0:
            u = 1.0 - (np.abs(xi - x[i]) / dmax) ** 3
            w = np.where(u > 0.0, u**3, 0.0)
        else:
            w = np.ones(hi - lo)
        w = w * rweights[lo:hi]
        sw = w.sum()
        if sw <= 0.0:
            fitted[i] = y[lo:hi].mean()
            continue
        dx = xi - x[i]
        swx = np.dot(w, dx)
        swx2 = np.dot(w, dx * dx)
        swy = np.dot(w, y[lo:hi])
        swxy = np.dot(w, dx * y[lo:hi])
        denom = sw * swx2 - swx * swx
        if denom <= 1e-12 * sw * swx2 or swx2 == 0.0:
            fitted[i] = swy / sw
        else:
            fitted[i] = (swx2 * swy - swx * swxy) / denom
    return fitted


# --------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------

if using_numba():
    queue_sim = queue_sim_nb
    window_busy = window_busy_nb
    perm_count_pair = perm_count_pair_nb
    boot_quantile_stats = boot_quantile_stats_nb
    lowess_fit = lowess_fit_nb
else:
    queue_sim = queue_sim_np
    window_busy = window_busy_np
    perm_count_pair = perm_count_pair_np
    boot_quantile_stats = boot_quantile_stats_np
    lowess_fit = lowess_fit_np


def implementations() -> dict[str, dict[str, object]]:
    """Both backends of every hot kernel, for benchmarks and tests."""
    return {
        "queue_sim": {"numba": queue_sim_nb, "numpy": queue_sim_np},
        "window_busy": {"numba": window_busy_nb, "numpy": window_busy_np},
        "perm_count_pair": {"numba": perm_count_pair_nb, "numpy": perm_count_pair_np},
        "boot_quantile_stats": {
            "numba": boot_quantile_stats_nb,
            "numpy": boot_quantile_stats_np,
        },
        "lowess_fit": {"numba": lowess_fit_nb, "numpy": lowess_fit_np},
    }
