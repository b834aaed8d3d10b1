"""Pure NumPy/Python fallback for the compiled kernels.

Every function here mirrors ``_fast.pyx`` operation-for-operation so the two
backends produce bit-identical doubles; parity is asserted in the test suite.
"""

from __future__ import annotations

import numpy as np


def ema(values: np.ndarray, span: int) -> np.ndarray:
    """Exponential moving average seeded with the first value."""
    n = values.shape[0]
    out = np.empty(n, dtype=np.float64)
    if n == 0:
        return out
    k = 2.0 / (span + 1.0)
    e = float(values[0])
    out[0] = e
    for i in range(1, n):
        e = e + k * (float(values[i]) - e)
        out[i] = e
    return out


def wilder_rsi(closes: np.ndarray, period: int) -> np.ndarray:
    """Wilder-smoothed RSI; NaN for indices before the first full period.

    Conventions: avg_loss == 0 -> 100; both averages 0 -> 50.
    """
    n = closes.shape[0]
    out = np.full(n, np.nan, dtype=np.float64)
    if n <= period:
        return out
    gain_sum = 0.0
    loss_sum = 0.0
    for i in range(1, period + 1):
        d = float(closes[i]) - float(closes[i - 1])
        if d > 0.0:
            gain_sum += d
        else:
            loss_sum += -d
    avg_gain = gain_sum / period
    avg_loss = loss_sum / period
    out[period] = _rsi_point(avg_gain, avg_loss)
    for i in range(period + 1, n):
        d = float(closes[i]) - float(closes[i - 1])
        gain = d if d > 0.0 else 0.0
        loss = -d if d < 0.0 else 0.0
        avg_gain = (avg_gain * (period - 1) + gain) / period
        avg_loss = (avg_loss * (period - 1) + loss) / period
        out[i] = _rsi_point(avg_gain, avg_loss)
    return out


def _rsi_point(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0:
        return 50.0 if avg_gain == 0.0 else 100.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def max_drawdown_frac(equity: np.ndarray) -> float:
    """Largest peak-to-trough decline as a fraction of the running peak."""
    peak = np.maximum.accumulate(equity)
    dd = (peak - equity) / peak
    return float(dd.max())


def forward_diffs(closes: np.ndarray, horizons: tuple[int, ...]) -> np.ndarray:
    """closes[min(t+h, n-1)] - closes[t] for each horizon, shape (len(h), n)."""
    n = closes.shape[0]
    out = np.empty((len(horizons), n), dtype=np.float64)
    base = np.arange(n)
    for k, h in enumerate(horizons):
        idx = np.minimum(base + h, n - 1)
        out[k] = closes[idx] - closes
    return out
