"""The daily backtest loop: perceive -> remember -> decide -> size ->
execute -> reward -> reflect, under a run config with ablation toggles.

Decisions at day t see only data indexed <= t (prices flow through the
series accessors so an instrumented run can audit every access); forward
momentum and rewards belong to the evaluation phase after the fill. With
identical config, data, and recorded/stub agents the result bundle is
byte-identical across runs.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .decision import (
    AblationFlags,
    BuyHoldPolicy,
    DualAgentPolicy,
    MacdSignalPolicy,
    MomentumAgreementSizer,
    Policy,
    PolicyContext,
    RandomPolicy,
    RsiSignalPolicy,
    SizingConstants,
    ThresholdDirectionAgent,
)
from .kernels import forward_diffs
from .llm_client import (
    ChatCompletionClient,
    EndpointConfig,
    LLMAnalyzer,
    LLMDirectionAgent,
    LLMReflector,
    LLMSizingAgent,
    ReplayClient,
    TranscriptRecorder,
    build_templates,
)
from .market_data import (
    HORIZONS,
    FilingDoc,
    NewsItem,
    PriceSeries,
    backward_momentum,
    load_filings,
    load_news,
    load_ohlcv,
)
from .memory import MemoryStore, RetrievalQuery
from .perception import (
    AnalyzerAgent,
    LexiconAnalyzer,
    Signal,
    analyze,
    filter_signal,
    load_lexicons,
)
from .portfolio import AccountState, TradeLogEntry, execute, write_trade_log
from .reward_reflection import (
    ReflectionNote,
    RewardRecord,
    benchmark_pnl,
    momentum_score,
    reflect,
    reward,
)

POLICIES = ("dual_agent", "llm", "buy_hold", "random", "macd", "rsi")
ANALYZERS = ("lexicon", "llm")


class ConfigError(ValueError):
    pass


class DataCoverageError(ValueError):
    pass


@dataclass
class MemoryConstants:
    tau_shallow: float = 3.0
    tau_intermediate: float = 14.0
    tau_deep: float = 90.0
    k: int = 5
    promotion_threshold: float | None = None  # None: calibrate or default


@dataclass
class RewardOptions:
    benchmark_window: int = 30
    scale_by_trade_delta: bool = False
    normalize_by_price: bool = False


@dataclass
class RunConfig:
    ticker: str
    start: dt.date
    end: dt.date
    initial_cash: float = 100_000.0
    fee_bps: float = 0.0
    seed: int = 0
    policy: str = "dual_agent"
    analyzer: str = "lexicon"
    allow_short: bool = False
    sizing: SizingConstants = field(default_factory=SizingConstants)
    memory: MemoryConstants = field(default_factory=MemoryConstants)
    reward: RewardOptions = field(default_factory=RewardOptions)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    train_start: dt.date | None = None
    train_end: dt.date | None = None
    lexicons_path: str | None = None
    endpoint: EndpointConfig | None = None
    transcript_path: str | None = None
    replay_path: str | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.initial_cash <= 0:
            raise ConfigError("initial_cash must be positive")
        if self.start > self.end:
            raise ConfigError("start date is after end date")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.analyzer not in ANALYZERS:
            raise ConfigError(f"unknown analyzer {self.analyzer!r}; choose from {ANALYZERS}")
        if (self.train_start is None) != (self.train_end is None):
            raise ConfigError("train_start and train_end must be given together")

    def to_mapping(self) -> dict:
        obj = dataclasses.asdict(self)
        for key in ("start", "end", "train_start", "train_end"):
            if obj[key] is not None:
                obj[key] = obj[key].isoformat()
        return obj

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_mapping(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_date(value, label: str) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{label}: invalid date {value!r}") from exc


def _require_bool(value, label: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{label} must be true or false, got {value!r}")
    return value


def config_from_mapping(mapping: dict) -> RunConfig:
    """Build a validated RunConfig from a parsed config file mapping."""
    try:
        ticker = str(mapping["ticker"])
        rng = mapping["range"]
        start = _parse_date(rng["start"], "range.start")
        end = _parse_date(rng["end"], "range.end")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"config missing required key: {exc}") from exc

    sizing_map = mapping.get("sizing", {}) or {}
    sizing = SizingConstants(
        kelly_scale=float(sizing_map.get("kelly_scale", 0.5)),
        cvar_alpha=float(sizing_map.get("cvar_alpha", 0.95)),
        cvar_budget=float(sizing_map.get("cvar_budget", 0.05)),
        lookback=int(sizing_map.get("lookback", 60)),
        fixed_unit=int(sizing_map.get("fixed_unit", 10)),
    )
    memory_map = mapping.get("memory", {}) or {}
    theta = memory_map.get("promotion_threshold")
    memory = MemoryConstants(
        tau_shallow=float(memory_map.get("tau_shallow", 3.0)),
        tau_intermediate=float(memory_map.get("tau_intermediate", 14.0)),
        tau_deep=float(memory_map.get("tau_deep", 90.0)),
        k=int(memory_map.get("k", 5)),
        promotion_threshold=None if theta is None else float(theta),
    )
    reward_map = mapping.get("reward", {}) or {}
    reward_opts = RewardOptions(
        benchmark_window=int(reward_map.get("benchmark_window", 30)),
        scale_by_trade_delta=_require_bool(
            reward_map.get("scale_by_trade_delta", False), "reward.scale_by_trade_delta"
        ),
        normalize_by_price=_require_bool(
            reward_map.get("normalize_by_price", False), "reward.normalize_by_price"
        ),
    )
    ablation_map = mapping.get("ablation", {}) or {}
    for key in ablation_map:
        if key not in ("rs", "fip", "mn", "mtr"):
            raise ConfigError(f"unknown ablation flag {key!r}")
    ablation = AblationFlags(
        rs=_require_bool(ablation_map.get("rs", True), "ablation.rs"),
        fip=_require_bool(ablation_map.get("fip", True), "ablation.fip"),
        mn=_require_bool(ablation_map.get("mn", True), "ablation.mn"),
        mtr=_require_bool(ablation_map.get("mtr", True), "ablation.mtr"),
    )
    train = mapping.get("train_range") or {}
    endpoint_map = mapping.get("endpoint")
    endpoint = None
    if endpoint_map:
        endpoint = EndpointConfig(
            url=str(endpoint_map["url"]),
            model=str(endpoint_map.get("model", "gpt-4o")),
            temperature=float(endpoint_map.get("temperature", 0.7)),
            credential_env=str(endpoint_map.get("credential_env", "RSTRADER_API_KEY")),
            max_retries=int(endpoint_map.get("max_retries", 3)),
            backoff_base=float(endpoint_map.get("backoff_base", 0.5)),
            timeout=float(endpoint_map.get("timeout", 30.0)),
        )
    return RunConfig(
        ticker=ticker,
        start=start,
        end=end,
        initial_cash=float(mapping.get("initial_cash", 100_000.0)),
        fee_bps=float(mapping.get("fee_bps", 0.0)),
        seed=int(mapping.get("seed", 0)),
        policy=str(mapping.get("policy", "dual_agent")),
        analyzer=str(mapping.get("analyzer", "lexicon")),
        allow_short=_require_bool(mapping.get("allow_short", False), "allow_short"),
        sizing=sizing,
        memory=memory,
        reward=reward_opts,
        ablation=ablation,
        train_start=_parse_date(train["start"], "train_range.start") if train else None,
        train_end=_parse_date(train["end"], "train_range.end") if train else None,
        lexicons_path=mapping.get("lexicons"),
        endpoint=endpoint,
        transcript_path=mapping.get("transcript"),
        replay_path=mapping.get("replay"),
        output_dir=mapping.get("output_dir"),
    )


@dataclass
class DataBundle:
    series: PriceSeries
    news: list[NewsItem] = field(default_factory=list)
    filings: list[FilingDoc] = field(default_factory=list)


def load_data_bundle(mapping: dict) -> DataBundle:
    """Load the data files named in a config mapping's ``data`` section."""
    data_map = mapping.get("data") or {}
    if "ohlcv" not in data_map:
        raise ConfigError("config must name an OHLCV file under data.ohlcv")
    series = load_ohlcv(data_map["ohlcv"], mapping.get("ticker"))
    news: list[NewsItem] = []
    filings: list[FilingDoc] = []
    if data_map.get("news"):
        news, _ = load_news(data_map["news"])
    if data_map.get("filings"):
        filings, _ = load_filings(data_map["filings"])
    return DataBundle(series=series, news=news, filings=filings)


def build_signals(data: DataBundle, include_news: bool = True) -> list[Signal]:
    """Convert raw feed items to signals with stable origin ids, ordered by
    (timestamp, origin_id). With ``include_news`` off (the market-news
    ablation) news and macro items are dropped before filtering."""
    signals: list[Signal] = []
    if include_news:
        for i, item in enumerate(data.news):
            kind = "news" if item.ticker else "macro"
            text = item.headline if not item.body else f"{item.headline}\n{item.body}"
            signals.append(
                Signal(kind, item.ticker, item.timestamp, text, f"news:{i:05d}")
            )
    for i, doc in enumerate(data.filings):
        timestamp = dt.datetime.combine(doc.period, dt.time.min)
        signals.append(
            Signal("filing", doc.ticker, timestamp, doc.text, f"filing:{i:05d}")
        )
    signals.sort(key=lambda s: (s.timestamp, s.origin_id))
    return signals


def calibrate_reward_threshold(
    series: PriceSeries,
    train_start: dt.date,
    train_end: dt.date,
    multi_timescale: bool = True,
    percentile: float = 75.0,
) -> float:
    """Memory promotion threshold: the given percentile of |total momentum|
    over the training window (the unit-position reward magnitude).

    Forward differences are clamped at the window edge so calibration never
    reads prices beyond train_end.
    """
    idx = [i for i, d in enumerate(series.dates) if train_start <= d <= train_end]
    if len(idx) < 2:
        raise ConfigError("training window covers fewer than 2 trading days")
    closes = series.closes[idx[0] : idx[-1] + 1]
    diffs = forward_diffs(closes, HORIZONS)
    totals = diffs.sum(axis=0) if multi_timescale else diffs[0]
    theta = float(np.percentile(np.abs(totals), percentile))
    return theta if theta > 0 else 1.0


@dataclass
class AgentBundle:
    """Injected agent implementations (tests and exotic setups)."""

    analyzer: AnalyzerAgent
    policy: Policy
    reflector: object | None = None


@dataclass
class BacktestResult:
    ticker: str
    t_indices: list[int]
    dates: list[dt.date]
    equity_curve: list[float]
    trade_log: list[TradeLogEntry]
    reward_trace: list[RewardRecord]
    reflections: list[ReflectionNote]
    summary: metrics.PerformanceSummary
    store: MemoryStore
    config_hash: str
    promotion_threshold: float


def _build_agents(config: RunConfig, transport=None) -> AgentBundle:
    lexicons = load_lexicons(config.lexicons_path) if config.lexicons_path else None
    constants = config.sizing
    client = None
    templates = None
    if config.policy == "llm" or config.analyzer == "llm":
        templates = build_templates(rs=config.ablation.rs, fip=config.ablation.fip)
        if config.replay_path:
            client = ReplayClient(config.replay_path)
        else:
            if config.endpoint is None:
                raise ConfigError("llm agents require an endpoint config or a replay transcript")
            recorder = (
                TranscriptRecorder(config.transcript_path, config.config_hash())
                if config.transcript_path
                else None
            )
            client = ChatCompletionClient(config.endpoint, transport=transport, recorder=recorder)

    if config.analyzer == "llm":
        analyzer: AnalyzerAgent = LLMAnalyzer(client, templates, config.ticker)
    else:
        analyzer = LexiconAnalyzer(lexicons)

    reflector = None
    if config.policy == "dual_agent":
        policy: Policy = DualAgentPolicy(
            ThresholdDirectionAgent(), MomentumAgreementSizer(), constants
        )
    elif config.policy == "llm":
        policy = DualAgentPolicy(
            LLMDirectionAgent(client, templates),
            LLMSizingAgent(client, templates, constants),
            constants,
        )
        reflector = LLMReflector(client, templates, config.ticker)
    elif config.policy == "buy_hold":
        policy = BuyHoldPolicy()
    elif config.policy == "random":
        policy = RandomPolicy(config.seed)
    elif config.policy == "macd":
        policy = MacdSignalPolicy()
    else:
        policy = RsiSignalPolicy()
    return AgentBundle(analyzer=analyzer, policy=policy, reflector=reflector)


def _resolve_threshold(config: RunConfig, series: PriceSeries) -> float:
    if config.memory.promotion_threshold is not None:
        return config.memory.promotion_threshold
    if config.train_start is not None:
        return calibrate_reward_threshold(
            series, config.train_start, config.train_end, config.ablation.mtr
        )
    return 1.0


def run(
    config: RunConfig,
    data: DataBundle,
    agents: AgentBundle | None = None,
    transport=None,
) -> BacktestResult:
    """Run one backtest over the configured date range."""
    series = data.series
    if config.start < series.dates[0] or config.end > series.dates[-1]:
        raise DataCoverageError(
            f"range {config.start}..{config.end} extends beyond the loaded data "
            f"({series.dates[0]}..{series.dates[-1]})"
        )
    indices = [i for i, d in enumerate(series.dates) if config.start <= d <= config.end]
    if not indices:
        raise DataCoverageError(f"no trading days between {config.start} and {config.end}")

    series.set_phase("setup", -1)
    theta = _resolve_threshold(config, series)
    taus = {
        "shallow": config.memory.tau_shallow,
        "intermediate": config.memory.tau_intermediate,
        "deep": config.memory.tau_deep,
    }
    store = MemoryStore(taus=taus, promotion_threshold=theta)
    bundle = agents or _build_agents(config, transport=transport)
    lexicons = load_lexicons(config.lexicons_path) if config.lexicons_path else None

    signals = build_signals(data, include_news=config.ablation.mn)
    pointer = 0
    state = AccountState(cash=config.initial_cash, position=0)
    equity_curve: list[float] = []
    trade_log: list[TradeLogEntry] = []
    reward_trace: list[RewardRecord] = []
    reflections: list[ReflectionNote] = []

    for rel_t, t in enumerate(indices):
        date = series.dates[t]
        series.set_phase("decision", t)

        # 1. perceive: filter and analyze everything that has arrived by t
        while pointer < len(signals) and signals[pointer].timestamp.date() <= date:
            sig = signals[pointer]
            pointer += 1
            verdict = filter_signal(sig, config.ticker, date, lexicons)
            if verdict.include:
                report = analyze(sig, bundle.analyzer)
                store.insert(report, t)

        # 2. daily memory bookkeeping
        store.decay_step(t)

        # 3. retrieve experience
        retrieved = store.retrieve(RetrievalQuery(config.ticker, t, config.memory.k))

        # 4-5. decide direction, then size
        price = series.close_at(t)
        prefix = series.close_prefix(t)
        recent_returns = np.diff(prefix) / prefix[:-1] if prefix.size > 1 else np.empty(0)
        ctx = PolicyContext(
            ticker=config.ticker,
            t=t,
            momentum=backward_momentum(series, t),
            retrieved=retrieved,
            account=state,
            price=price,
            closes=prefix,
            recent_returns=recent_returns,
            ablation=config.ablation,
        )
        decision = bundle.policy.decide(ctx)

        # 6. execute at the same-day close
        position_before = state.position
        state, entry = execute(
            state, decision, price, config.fee_bps, t, config.allow_short
        )
        trade_log.append(entry)
        equity = state.equity(price)
        if not config.allow_short and (state.cash < 0 or state.position < 0):
            raise RuntimeError(f"accounting violation at t={t}: {state}")
        equity_curve.append(equity)

        # 7. evaluation phase: forward momentum and reward
        series.set_phase("evaluation", t)
        score = momentum_score(
            series,
            t,
            multi_timescale=config.ablation.mtr,
            normalize_by_price=config.reward.normalize_by_price,
        )
        bench = benchmark_pnl(equity_curve, rel_t, config.reward.benchmark_window)
        record = reward(
            position_before,
            state.position,
            score,
            t=t,
            benchmark_pnl=bench,
            scale_by_trade_delta=config.reward.scale_by_trade_delta,
        )
        reward_trace.append(record)

        # 8. reflect: reinforce contributors and write the note
        note_text = None
        if bundle.reflector is not None:
            note_text = bundle.reflector.note_text(record)
        note = reflect(
            record,
            decision.contributing_memory_ids,
            store,
            config.reward.benchmark_window,
            note_text=note_text,
        )
        reflections.append(note)

    series.set_phase("done", -1)
    return BacktestResult(
        ticker=config.ticker,
        t_indices=indices,
        dates=[series.dates[i] for i in indices],
        equity_curve=equity_curve,
        trade_log=trade_log,
        reward_trace=reward_trace,
        reflections=reflections,
        summary=metrics.summarize(equity_curve),
        store=store,
        config_hash=config.config_hash(),
        promotion_threshold=theta,
    )


# --- result bundle I/O ---

BUNDLE_FILES = (
    "equity.csv",
    "trades.jsonl",
    "rewards.csv",
    "memory.jsonl",
    "summary.json",
    "config.json",
)

REWARD_TRACE_HEADER = (
    "t,position_before,position_after,m_s,m_m,m_l,total,reward,case,benchmark_pnl"
)


def write_bundle(result: BacktestResult, outdir: str, config_mapping: dict) -> None:
    """Write the replayable result bundle; all files are deterministic."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "equity.csv"), "w", encoding="utf-8") as fh:
        fh.write("t,date,equity\n")
        for t, date, equity in zip(result.t_indices, result.dates, result.equity_curve):
            fh.write(f"{t},{date.isoformat()},{equity!r}\n")
    write_trade_log(result.trade_log, os.path.join(outdir, "trades.jsonl"))
    with open(os.path.join(outdir, "rewards.csv"), "w", encoding="utf-8") as fh:
        fh.write(REWARD_TRACE_HEADER + "\n")
        for r in result.reward_trace:
            fh.write(
                f"{r.t},{r.position_before},{r.position_after},"
                f"{r.momentum.m_s!r},{r.momentum.m_m!r},{r.momentum.m_l!r},"
                f"{r.momentum.total!r},{r.reward!r},{r.case},{r.benchmark_pnl!r}\n"
            )
    result.store.dump(os.path.join(outdir, "memory.jsonl"))
    summary_obj = {
        "ticker": result.ticker,
        "cr_pct": result.summary.cr_pct,
        "sharpe": result.summary.sharpe,
        "mdd_pct": result.summary.mdd_pct,
        "final_equity": result.equity_curve[-1],
        "trading_days": len(result.equity_curve),
        "config_hash": result.config_hash,
        "promotion_threshold": result.promotion_threshold,
    }
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary_obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
    config_obj = dict(config_mapping)
    config_obj["config_hash"] = result.config_hash
    with open(os.path.join(outdir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config_obj, fh, sort_keys=True, indent=2, default=str)
        fh.write("\n")


def read_equity_curve(bundle_dir: str) -> list[float]:
    path = os.path.join(bundle_dir, "equity.csv")
    curve: list[float] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,date,equity":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if line:
                curve.append(float(line.split(",")[2]))
    if not curve:
        raise ValueError(f"{path}: empty equity curve")
    return curve
