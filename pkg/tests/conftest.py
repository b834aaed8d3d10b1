import datetime as dt
import json

import numpy as np
import pytest

from rstrader.market_data import Bar, PriceSeries

START_DATE = dt.date(2024, 1, 2)


def make_series(closes, ticker="TEST", start=START_DATE) -> PriceSeries:
    """Series with one bar per consecutive day; OHLC collapsed onto close."""
    bars = []
    for i, close in enumerate(closes):
        c = float(close)
        bars.append(
            Bar(
                date=start + dt.timedelta(days=i),
                open=c,
                high=c,
                low=c,
                close=c,
                volume=1000,
            )
        )
    return PriceSeries(ticker, bars)


def write_ohlcv_csv(path, closes, start=START_DATE, jitter=0.0):
    """OHLCV file for the loaders; optional high/low spread around close."""
    lines = ["Date,Open,High,Low,Close,Volume"]
    for i, close in enumerate(closes):
        c = float(close)
        hi = c * (1 + jitter)
        lo = c * (1 - jitter)
        date = (start + dt.timedelta(days=i)).isoformat()
        lines.append(f"{date},{c!r},{hi!r},{lo!r},{c!r},1000")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


# --- synthetic close generators for indicator and metric checks ---

def ramp(n, start=100.0, slope=0.5):
    return [start + slope * i for i in range(n)]


def step(n, level=100.0, jump=10.0, at=None):
    at = n // 2 if at is None else at
    return [level if i < at else level + jump for i in range(n)]


def sine(n, base=100.0, amplitude=10.0, period=40.0, phase=0.0):
    return [base + amplitude * np.sin(2 * np.pi * i / period + phase) for i in range(n)]


def random_walk(n, seed, start=100.0, scale=1.0):
    rng = np.random.default_rng(seed)
    closes = [start]
    for _ in range(n - 1):
        closes.append(max(1.0, closes[-1] + rng.normal(0.0, scale)))
    return closes


@pytest.fixture
def flat_series():
    return make_series([100.0] * 60)
