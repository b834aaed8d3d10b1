"""Signal perception: pre-screening with recorded reasons, then analyst
reports with explicit risk cues.

The default analyzer is a deterministic lexicon scorer so every test runs
offline; an endpoint-backed analyzer can be dropped in via the same
interface (see ``llm_client``).
"""

from __future__ import annotations

import datetime as dt
import json
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass

SOURCE_KINDS = ("news", "filing", "macro")
RISK_CUES = ("downside_indicator", "volatility_signal", "none")
STABILITY_CLASSES = ("stable", "volatile")

# Editable defaults; override any key with a JSON lexicon file.
DEFAULT_LEXICONS: dict[str, list[str]] = {
    "positive": [
        "gain", "gains", "growth", "beat", "beats", "record", "strong",
        "surge", "surges", "upgrade", "profit", "profitable", "bullish",
        "outperform", "expand", "exceeded", "rally", "rebound",
    ],
    "negative": [
        "loss", "losses", "miss", "missed", "weak", "decline", "declines",
        "drop", "drops", "downgrade", "lawsuit", "recall", "bearish",
        "underperform", "warning", "cut", "cuts", "plunge", "slump",
    ],
    "downside": [
        "drawdown", "bankruptcy", "default", "recession", "crash",
        "selloff", "liquidation", "insolvency", "downturn", "collapse",
    ],
    "volatility": [
        "volatile", "volatility", "swing", "swings", "turbulence",
        "turbulent", "uncertainty", "whipsaw", "spike", "erratic",
    ],
    "macro": [
        "inflation", "fed", "rates", "tariff", "tariffs", "gdp",
        "unemployment", "election", "geopolitical", "sanctions", "opec",
        "treasury", "stimulus",
    ],
}

_WORD_RE = re.compile(r"[a-z][a-z'\-]*")


class LookaheadError(RuntimeError):
    """A signal dated after the decision date reached the filter: this is a
    harness bug, not a data problem."""


@dataclass(frozen=True)
class Signal:
    source_kind: str
    ticker: str  # empty for macro
    timestamp: dt.datetime
    text: str
    origin_id: str

    def __post_init__(self):
        if self.source_kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source_kind {self.source_kind!r}")


@dataclass(frozen=True)
class FilterVerdict:
    include: bool
    relevance: float
    reason: str

    def __post_init__(self):
        if self.include and not self.reason:
            raise ValueError("included signals must carry a non-empty reason")


@dataclass(frozen=True)
class AnalystReport:
    signal_ref: str
    summary: str
    sentiment: float
    risk_cues: tuple[str, ...]
    stability_class: str
    degraded: bool = False

    def __post_init__(self):
        if not -1.0 <= self.sentiment <= 1.0:
            raise ValueError("sentiment must lie in [-1, 1]")
        if self.stability_class not in STABILITY_CLASSES:
            raise ValueError(f"unknown stability_class {self.stability_class!r}")
        for cue in self.risk_cues:
            if cue not in RISK_CUES:
                raise ValueError(f"unknown risk cue {cue!r}")


def load_lexicons(path: str) -> dict[str, list[str]]:
    """Merge a JSON lexicon file (key -> word list) over the defaults."""
    with open(path, encoding="utf-8") as fh:
        override = json.load(fh)
    merged = {k: list(v) for k, v in DEFAULT_LEXICONS.items()}
    for key, words in override.items():
        if key not in merged:
            raise ValueError(f"unknown lexicon key {key!r}")
        merged[key] = [str(w).lower() for w in words]
    return merged


def _tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def filter_signal(
    signal: Signal,
    ticker: str,
    date: dt.date,
    lexicons: dict[str, list[str]] | None = None,
) -> FilterVerdict:
    """Pre-screen one signal for the given ticker and decision date.

    Includes on a direct ticker match, or for macro signals on a match
    against the macro keyword list; the reason records which criteria fired.
    """
    if signal.timestamp.date() > date:
        raise LookaheadError(
            f"signal {signal.origin_id} dated {signal.timestamp.date()} "
            f"reached the filter for decision date {date}"
        )
    lex = lexicons or DEFAULT_LEXICONS
    if signal.ticker and signal.ticker.upper() == ticker.upper():
        return FilterVerdict(True, 1.0, f"ticker match: {ticker.upper()}")
    if signal.source_kind == "macro":
        keywords = [w.lower() for w in lex["macro"]]
        present = set(_tokens(signal.text))
        matched = [w for w in keywords if w in present]
        if matched:
            relevance = len(matched) / len(keywords)
            return FilterVerdict(True, relevance, "macro keywords: " + ", ".join(matched))
    return FilterVerdict(False, 0.0, "")


class AnalyzerAgent(ABC):
    """Turns a filtered signal into an analyst report."""

    @abstractmethod
    def analyze(self, signal: Signal) -> AnalystReport: ...


class LexiconAnalyzer(AnalyzerAgent):
    """Deterministic analyzer: sentiment from positive/negative term counts,
    risk cues from the downside/volatility lexicons."""

    def __init__(self, lexicons: dict[str, list[str]] | None = None):
        lex = lexicons or DEFAULT_LEXICONS
        self._positive = {w.lower() for w in lex["positive"]}
        self._negative = {w.lower() for w in lex["negative"]}
        self._downside = {w.lower() for w in lex["downside"]}
        self._volatility = {w.lower() for w in lex["volatility"]}

    def analyze(self, signal: Signal) -> AnalystReport:
        toks = _tokens(signal.text)
        pos = sum(1 for w in toks if w in self._positive)
        neg = sum(1 for w in toks if w in self._negative)
        sentiment = (pos - neg) / max(1, pos + neg)
        cues: list[str] = []
        if any(w in self._downside for w in toks):
            cues.append("downside_indicator")
        if any(w in self._volatility for w in toks):
            cues.append("volatility_signal")
        if not cues:
            cues.append("none")
        return AnalystReport(
            signal_ref=signal.origin_id,
            summary=_summarize(signal.text),
            sentiment=sentiment,
            risk_cues=tuple(cues),
            stability_class=stability_class_for(signal.source_kind),
        )


def stability_class_for(source_kind: str) -> str:
    """Filings are stable evidence; news and macro narratives are volatile."""
    return "stable" if source_kind == "filing" else "volatile"


def _summarize(text: str, limit: int = 140) -> str:
    flat = " ".join(text.split())
    return flat if len(flat) <= limit else flat[: limit - 3] + "..."


def analyze(signal: Signal, analyzer: AnalyzerAgent) -> AnalystReport:
    """Run an analyzer, degrading to a neutral report on any failure so one
    bad signal never aborts a backtest."""
    try:
        return analyzer.analyze(signal)
    except Exception:
        return AnalystReport(
            signal_ref=signal.origin_id,
            summary=_summarize(signal.text) or "(analyzer failed)",
            sentiment=0.0,
            risk_cues=("none",),
            stability_class=stability_class_for(signal.source_kind),
            degraded=True,
        )
