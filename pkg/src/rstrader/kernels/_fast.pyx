# cython: language_level=3
"""Compiled recurrence kernels: EMA chains, Wilder RSI, drawdown scan,
clamped forward price differences.

Must stay operation-for-operation identical to ``_pure.py`` (the build uses
-ffp-contract=off so the doubles match bit-for-bit).
"""

import numpy as np


def ema(double[::1] values, int span):
    cdef Py_ssize_t n = values.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    if n == 0:
        return out_arr
    cdef double k = 2.0 / (span + 1.0)
    cdef double e = values[0]
    cdef Py_ssize_t i
    out[0] = e
    for i in range(1, n):
        e = e + k * (values[i] - e)
        out[i] = e
    return out_arr


cdef inline double _rsi_point(double avg_gain, double avg_loss):
    if avg_loss == 0.0:
        return 50.0 if avg_gain == 0.0 else 100.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def wilder_rsi(double[::1] closes, int period):
    cdef Py_ssize_t n = closes.shape[0]
    out_arr = np.full(n, np.nan, dtype=np.float64)
    cdef double[::1] out = out_arr
    if n <= period:
        return out_arr
    cdef double gain_sum = 0.0
    cdef double loss_sum = 0.0
    cdef double d, gain, loss, avg_gain, avg_loss
    cdef Py_ssize_t i
    for i in range(1, period + 1):
        d = closes[i] - closes[i - 1]
        if d > 0.0:
            gain_sum += d
        else:
            loss_sum += -d
    avg_gain = gain_sum / period
    avg_loss = loss_sum / period
    out[period] = _rsi_point(avg_gain, avg_loss)
    for i in range(period + 1, n):
        d = closes[i] - closes[i - 1]
        gain = d if d > 0.0 else 0.0
        loss = -d if d < 0.0 else 0.0
        avg_gain = (avg_gain * (period - 1) + gain) / period
        avg_loss = (avg_loss * (period - 1) + loss) / period
        out[i] = _rsi_point(avg_gain, avg_loss)
    return out_arr


def max_drawdown_frac(double[::1] equity):
    cdef Py_ssize_t n = equity.shape[0]
    cdef double peak = equity[0]
    cdef double mdd = 0.0
    cdef double dd
    cdef Py_ssize_t i
    for i in range(n):
        if equity[i] > peak:
            peak = equity[i]
        dd = (peak - equity[i]) / peak
        if dd > mdd:
            mdd = dd
    return mdd


def forward_diffs(double[::1] closes, horizons):
    cdef Py_ssize_t n = closes.shape[0]
    cdef Py_ssize_t m = len(horizons)
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, t, j
    cdef long h
    for k in range(m):
        h = horizons[k]
        for t in range(n):
            j = t + h
            if j > n - 1:
                j = n - 1
            out[k, t] = closes[j] - closes[t]
    return out_arr
