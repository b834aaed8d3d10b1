import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rstrader.market_data import (
    Bar,
    MarketDataError,
    PriceSeries,
    backward_momentum,
    load_filings,
    load_news,
    load_ohlcv,
    momentum,
    write_ohlcv,
)
from conftest import make_series, write_jsonl, write_ohlcv_csv


class TestBarInvariants:
    def test_valid_bar(self):
        bar = Bar(dt.date(2024, 1, 2), 10.0, 11.0, 9.0, 10.5, 100)
        assert bar.close == 10.5

    def test_low_above_close_rejected(self):
        with pytest.raises(ValueError, match="low"):
            Bar(dt.date(2024, 1, 2), 10.0, 11.0, 10.2, 10.1, 100)

    def test_nonpositive_price_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            Bar(dt.date(2024, 1, 2), 0.0, 11.0, 9.0, 10.0, 100)

    def test_negative_volume_rejected(self):
        with pytest.raises(ValueError, match="volume"):
            Bar(dt.date(2024, 1, 2), 10.0, 11.0, 9.0, 10.0, -1)


class TestLoadOhlcv:
    def test_two_valid_rows(self, tmp_path):
        path = write_ohlcv_csv(tmp_path / "t.csv", [100.0, 101.0], jitter=0.01)
        series = load_ohlcv(str(path))
        assert len(series) == 2
        assert series.dates[0] < series.dates[1]

    def test_low_above_high_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "Date,Open,High,Low,Close,Volume\n"
            "2024-01-02,100,101,99,100,10\n"
            "2024-01-03,100,99,101,100,10\n"
        )
        with pytest.raises(MarketDataError, match="line 3"):
            load_ohlcv(str(path))

    def test_rows_out_of_order_sorted(self, tmp_path):
        path = tmp_path / "shuffled.csv"
        path.write_text(
            "Date,Open,High,Low,Close,Volume\n"
            "2024-01-03,101,101,101,101,10\n"
            "2024-01-02,100,100,100,100,10\n"
        )
        series = load_ohlcv(str(path))
        assert [b.close for b in series.bars] == [100.0, 101.0]

    def test_missing_file(self):
        with pytest.raises(MarketDataError, match="no/such"):
            load_ohlcv("no/such/file.csv")

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("date,open,high,low,close,volume\n")
        with pytest.raises(MarketDataError, match="header"):
            load_ohlcv(str(path))

    def test_empty_series(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("Date,Open,High,Low,Close,Volume\n")
        with pytest.raises(MarketDataError, match="empty"):
            load_ohlcv(str(path))

    def test_duplicate_date(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text(
            "Date,Open,High,Low,Close,Volume\n"
            "2024-01-02,100,100,100,100,10\n"
            "2024-01-02,101,101,101,101,10\n"
        )
        with pytest.raises(MarketDataError, match="duplicate"):
            load_ohlcv(str(path))

    def test_round_trip_idempotent(self, tmp_path):
        src = write_ohlcv_csv(tmp_path / "src.csv", [100.0, 100.37, 99.81], jitter=0.013)
        first = load_ohlcv(str(src))
        write_ohlcv(first, str(tmp_path / "copy.csv"))
        second = load_ohlcv(str(tmp_path / "copy.csv"), first.ticker)
        assert first.bars == second.bars


class TestNewsAndFilings:
    def _news(self, ts, ticker="TSLA"):
        return {
            "timestamp": ts,
            "ticker": ticker,
            "headline": "h",
            "body": "b",
            "source": "s",
        }

    def test_three_valid_lines(self, tmp_path):
        path = write_jsonl(
            tmp_path / "n.jsonl",
            [self._news("2024-01-03T10:00:00"), self._news("2024-01-02T10:00:00"), self._news("2024-01-04T10:00:00")],
        )
        items, skipped = load_news(str(path))
        assert len(items) == 3 and skipped == 0
        assert [i.timestamp.day for i in items] == [2, 3, 4]

    def test_malformed_line_skipped_with_count(self, tmp_path):
        path = tmp_path / "n.jsonl"
        good = self._news("2024-01-02T10:00:00")
        import json

        path.write_text(json.dumps(good) + "\n{not json\n" + json.dumps(good) + "\n")
        items, skipped = load_news(str(path))
        assert len(items) == 2 and skipped == 1

    def test_empty_file(self, tmp_path):
        path = tmp_path / "n.jsonl"
        path.write_text("")
        items, skipped = load_news(str(path))
        assert items == [] and skipped == 0

    def test_unreadable_file(self):
        with pytest.raises(MarketDataError):
            load_news("missing.jsonl")

    def test_filings_kind_validated(self, tmp_path):
        path = write_jsonl(
            tmp_path / "f.jsonl",
            [
                {"ticker": "TSLA", "kind": "10-K", "period": "2024-01-05", "text": "annual"},
                {"ticker": "TSLA", "kind": "8-K", "period": "2024-01-06", "text": "bad kind"},
            ],
        )
        docs, skipped = load_filings(str(path))
        assert len(docs) == 1 and skipped == 1
        assert docs[0].filing_kind == "10-K"

    def test_news_zulu_timestamp(self, tmp_path):
        path = write_jsonl(tmp_path / "n.jsonl", [self._news("2024-01-02T10:00:00Z")])
        items, skipped = load_news(str(path))
        assert skipped == 0
        assert items[0].timestamp == dt.datetime(2024, 1, 2, 10, 0, 0)


class TestMomentum:
    def test_linear_ramp(self):
        # unit-slope ramp, shifted +1 so every close is strictly positive
        series = make_series([float(i + 1) for i in range(41)])
        feats = momentum(series, 5)
        assert (feats.d1, feats.d7, feats.d30) == (1.0, 7.0, 30.0)
        assert feats.horizons_truncated is False

    def test_clamped_tail(self):
        series = make_series([float(i + 1) for i in range(10)])
        feats = momentum(series, 5)
        assert (feats.d1, feats.d7, feats.d30) == (1.0, 4.0, 4.0)
        assert feats.horizons_truncated is True

    def test_constant_series(self, flat_series):
        feats = momentum(flat_series, 17)
        assert feats.d1 == feats.d7 == feats.d30 == 0.0

    def test_out_of_range(self, flat_series):
        with pytest.raises(IndexError):
            momentum(flat_series, len(flat_series))

    def test_exact_unclamped_difference(self):
        closes = [100.0 + 0.1 * i * i for i in range(60)]
        series = make_series(closes)
        feats = momentum(series, 10)
        assert feats.d30 == closes[40] - closes[10]

    def test_backward_clamps_at_start(self):
        closes = [float(i + 1) for i in range(40)]
        series = make_series(closes)
        feats = backward_momentum(series, 5)
        assert (feats.d1, feats.d7, feats.d30) == (1.0, 5.0, 5.0)
        assert feats.horizons_truncated is True
        later = backward_momentum(series, 35)
        assert (later.d1, later.d7, later.d30) == (1.0, 7.0, 30.0)
        assert later.horizons_truncated is False


@settings(max_examples=50, deadline=None)
@given(
    closes=st.lists(st.floats(min_value=1.0, max_value=1e4), min_size=2, max_size=80),
    offset=st.floats(min_value=0.0, max_value=1e4),
    data=st.data(),
)
def test_momentum_translation_invariance(closes, offset, data):
    t = data.draw(st.integers(min_value=0, max_value=len(closes) - 1))
    base = make_series(closes)
    shifted = make_series([c + offset for c in closes])
    a = momentum(base, t)
    b = momentum(shifted, t)
    for x, y in zip((a.d1, a.d7, a.d30), (b.d1, b.d7, b.d30)):
        assert abs(x - y) < 1e-9 * max(1.0, abs(x))
