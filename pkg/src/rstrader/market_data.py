"""Market data: OHLCV/news/filings file loaders and multi-horizon momentum
features.

Horizons are counted in trading days (array index offsets over the daily
series); calendar gaps are not modeled. Indices past either end of the series
are clamped and flagged as truncated.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

OHLCV_HEADER = ["Date", "Open", "High", "Low", "Close", "Volume"]

# (short, mid, long) horizons in trading days
HORIZONS = (1, 7, 30)


class MarketDataError(ValueError):
    """Raised for unreadable files, malformed rows, or invariant violations."""


@dataclass(frozen=True)
class Bar:
    """One daily OHLCV observation."""

    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: int

    def __post_init__(self):
        for name in ("open", "high", "low", "close"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.volume < 0:
            raise ValueError("volume must be >= 0")
        if self.low > min(self.open, self.close):
            raise ValueError("low exceeds min(open, close)")
        if self.high < max(self.open, self.close):
            raise ValueError("high is below max(open, close)")


@dataclass(frozen=True)
class NewsItem:
    timestamp: dt.datetime
    ticker: str  # empty string for macro items
    headline: str
    body: str
    source: str


@dataclass(frozen=True)
class FilingDoc:
    ticker: str
    filing_kind: str  # 10-Q or 10-K
    period: dt.date
    text: str


FILING_KINDS = ("10-Q", "10-K")


@dataclass(frozen=True)
class MomentumFeatures:
    """Price differences over the three horizons; truncated marks clamping."""

    d1: float
    d7: float
    d30: float
    horizons_truncated: bool


class PriceSeries:
    """Validated, date-ascending daily bars for one ticker.

    The backtest loop reads prices only through ``close_at``/``close_prefix``
    so an instrumented subclass can audit every access.
    """

    def __init__(self, ticker: str, bars: list[Bar]):
        if not bars:
            raise MarketDataError(f"{ticker}: empty price series")
        ordered = sorted(bars, key=lambda b: b.date)
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.date == prev.date:
                raise MarketDataError(f"{ticker}: duplicate date {cur.date}")
        self.ticker = ticker
        self.bars = ordered
        self._closes = np.array([b.close for b in ordered], dtype=np.float64)
        self._dates = [b.date for b in ordered]

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def dates(self) -> list[dt.date]:
        return self._dates

    @property
    def closes(self) -> np.ndarray:
        """Full close array; avoid during decision phases (lookahead)."""
        return self._closes

    def close_at(self, i: int) -> float:
        if not 0 <= i < len(self.bars):
            raise IndexError(f"trading-day index {i} out of range")
        return float(self._closes[i])

    def close_prefix(self, t: int) -> np.ndarray:
        """Copy of closes[0..t] inclusive."""
        if not 0 <= t < len(self.bars):
            raise IndexError(f"trading-day index {t} out of range")
        return self._closes[: t + 1].copy()

    def index_of(self, date: dt.date) -> int:
        try:
            return self._dates.index(date)
        except ValueError:
            raise MarketDataError(f"{self.ticker}: no bar on {date}") from None

    def set_phase(self, phase: str, t: int) -> None:
        """Audit hook; a plain series ignores phases."""


class InstrumentedPriceSeries(PriceSeries):
    """Price series that records every close access with the active phase.

    Used by the no-lookahead audit: any decision-phase access to an index
    greater than the current trading day is a violation.
    """

    def __init__(self, ticker: str, bars: list[Bar]):
        super().__init__(ticker, bars)
        self._phase = "setup"
        self._phase_t = -1
        self.accesses: list[tuple[str, int, int]] = []  # (phase, t_now, index)

    @classmethod
    def wrap(cls, series: PriceSeries) -> "InstrumentedPriceSeries":
        return cls(series.ticker, series.bars)

    def set_phase(self, phase: str, t: int) -> None:
        self._phase = phase
        self._phase_t = t

    def _record(self, index: int) -> None:
        self.accesses.append((self._phase, self._phase_t, index))

    def close_at(self, i: int) -> float:
        self._record(i)
        return super().close_at(i)

    def close_prefix(self, t: int) -> np.ndarray:
        self._record(t)
        return super().close_prefix(t)

    @property
    def closes(self) -> np.ndarray:
        self._record(len(self.bars) - 1)
        return super().closes

    def violations(self) -> list[tuple[str, int, int]]:
        """Decision-phase accesses beyond the current trading day."""
        return [
            (phase, t, i)
            for phase, t, i in self.accesses
            if phase == "decision" and i > t
        ]


def load_ohlcv(path: str, ticker: str | None = None) -> PriceSeries:
    """Parse an OHLCV CSV into a validated, date-ascending PriceSeries.

    A malformed row (bad types, invariant violation, wrong field count)
    aborts the load with the offending line number. Out-of-order rows are
    legal and come back sorted.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise MarketDataError(f"cannot read OHLCV file {path}: {exc}") from exc
    name = ticker or _ticker_from_path(path)
    bars: list[Bar] = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != OHLCV_HEADER:
            raise MarketDataError(
                f"{path}: expected header {','.join(OHLCV_HEADER)!r}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 6:
                    raise ValueError(f"expected 6 fields, got {len(row)}")
                bar = Bar(
                    date=dt.date.fromisoformat(row[0].strip()),
                    open=float(row[1]),
                    high=float(row[2]),
                    low=float(row[3]),
                    close=float(row[4]),
                    volume=int(row[5]),
                )
            except ValueError as exc:
                raise MarketDataError(f"{path} line {lineno}: {exc}") from exc
            bars.append(bar)
    return PriceSeries(name, bars)


def write_ohlcv(series: PriceSeries, path: str) -> None:
    """Serialize a series back to the OHLCV CSV format (round-trip exact)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(OHLCV_HEADER)
        for b in series.bars:
            writer.writerow(
                [b.date.isoformat(), repr(b.open), repr(b.high), repr(b.low), repr(b.close), b.volume]
            )


def _ticker_from_path(path: str) -> str:
    import os

    return os.path.splitext(os.path.basename(path))[0].upper()


def _parse_timestamp(raw: str) -> dt.datetime:
    ts = dt.datetime.fromisoformat(str(raw).replace("Z", "+00:00"))
    if ts.tzinfo is not None:
        ts = ts.astimezone(dt.timezone.utc).replace(tzinfo=None)
    return ts


def load_news(path: str) -> tuple[list[NewsItem], int]:
    """Load newline-delimited JSON news records, sorted by timestamp.

    Returns (items, count of malformed lines skipped).
    """
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise MarketDataError(f"cannot read news file {path}: {exc}") from exc
    items: list[NewsItem] = []
    skipped = 0
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                headline = str(obj["headline"])
                if not headline:
                    raise ValueError("empty headline")
                items.append(
                    NewsItem(
                        timestamp=_parse_timestamp(obj["timestamp"]),
                        ticker=str(obj.get("ticker", "") or ""),
                        headline=headline,
                        body=str(obj.get("body", "") or ""),
                        source=str(obj.get("source", "") or ""),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                skipped += 1
                logger.warning("%s line %d: skipping malformed news record (%s)", path, lineno, exc)
    items.sort(key=lambda n: n.timestamp)
    return items, skipped


def load_filings(path: str) -> tuple[list[FilingDoc], int]:
    """Load newline-delimited JSON filing records, sorted by period date.

    Returns (items, count of malformed lines skipped).
    """
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise MarketDataError(f"cannot read filings file {path}: {exc}") from exc
    items: list[FilingDoc] = []
    skipped = 0
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                kind = str(obj["kind"])
                if kind not in FILING_KINDS:
                    raise ValueError(f"unknown filing kind {kind!r}")
                items.append(
                    FilingDoc(
                        ticker=str(obj["ticker"]),
                        filing_kind=kind,
                        period=dt.date.fromisoformat(str(obj["period"])),
                        text=str(obj.get("text", "") or ""),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                skipped += 1
                logger.warning("%s line %d: skipping malformed filing record (%s)", path, lineno, exc)
    items.sort(key=lambda f: f.period)
    return items, skipped


def momentum(series: PriceSeries, t: int) -> MomentumFeatures:
    """Forward price differences close[min(t+h, last)] - close[t].

    These look into the future by construction; they feed reward evaluation,
    never decisions.
    """
    n = len(series)
    if not 0 <= t < n:
        raise IndexError(f"trading-day index {t} out of range for series of length {n}")
    last = n - 1
    base = series.close_at(t)
    diffs = []
    truncated = False
    for h in HORIZONS:
        j = t + h
        if j > last:
            j = last
            truncated = True
        diffs.append(series.close_at(j) - base)
    return MomentumFeatures(diffs[0], diffs[1], diffs[2], truncated)


def backward_momentum(series: PriceSeries, t: int) -> MomentumFeatures:
    """Backward price differences close[t] - close[max(t-h, 0)].

    The decision-time counterpart of ``momentum``: uses only data at or
    before t, clamped at the start of the series.
    """
    n = len(series)
    if not 0 <= t < n:
        raise IndexError(f"trading-day index {t} out of range for series of length {n}")
    base = series.close_at(t)
    diffs = []
    truncated = False
    for h in HORIZONS:
        j = t - h
        if j < 0:
            j = 0
            truncated = True
        diffs.append(base - series.close_at(j))
    return MomentumFeatures(diffs[0], diffs[1], diffs[2], truncated)
