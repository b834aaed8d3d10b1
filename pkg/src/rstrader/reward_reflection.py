"""Multi-timescale reward and reflection: the forward momentum score, the
risk-sensitive reward, the sliding-window P&L benchmark, and the reflection
notes written back into memory.

Reward cases: an unchanged position is penalized quadratically in the total
momentum (passivity costs most when the market moves most); a changed
position earns post-trade position times total momentum. Rewards are
evaluation-phase quantities and must never feed decisions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .market_data import PriceSeries, momentum

DEFAULT_BENCHMARK_WINDOW = 30

INERTIA_PENALTY = "inertia_penalty"
POSITION_SCALED = "position_scaled"


@dataclass(frozen=True)
class MomentumScore:
    """Forward price differences over the short/mid/long horizons."""

    m_s: float
    m_m: float
    m_l: float
    total: float
    truncated: bool


@dataclass(frozen=True)
class RewardRecord:
    t: int
    reward: float
    position_before: int
    position_after: int
    momentum: MomentumScore
    benchmark_pnl: float
    case: str


@dataclass(frozen=True)
class ReflectionNote:
    t: int
    text: str
    linked_ids: tuple[int, ...]


def momentum_score(
    series: PriceSeries,
    t: int,
    multi_timescale: bool = True,
    normalize_by_price: bool = False,
) -> MomentumScore:
    """Total forward momentum at t.

    With ``multi_timescale`` off only the 1-day horizon contributes (the
    mid/long components are zeroed). ``normalize_by_price`` divides each
    difference by close[t] for cross-ticker comparability; off by default.
    """
    feats = momentum(series, t)
    m_s, m_m, m_l = feats.d1, feats.d7, feats.d30
    if not multi_timescale:
        m_m = 0.0
        m_l = 0.0
    if normalize_by_price:
        base = series.close_at(t)
        m_s, m_m, m_l = m_s / base, m_m / base, m_l / base
    return MomentumScore(m_s, m_m, m_l, m_s + m_m + m_l, feats.horizons_truncated)


def reward(
    position_before: int,
    position_after: int,
    score: MomentumScore,
    t: int = 0,
    benchmark_pnl: float = 0.0,
    scale_by_trade_delta: bool = False,
) -> RewardRecord:
    """Risk-sensitive reward for day t.

    ``scale_by_trade_delta`` swaps the post-trade position for the signed
    trade size in the action branch (experimental alternative, off by
    default).
    """
    if position_before < 0 or position_after < 0:
        raise ValueError("positions must be >= 0 (long-only)")
    if position_after == position_before:
        value = -(score.total**2)
        case = INERTIA_PENALTY
    else:
        scale = (position_after - position_before) if scale_by_trade_delta else position_after
        value = scale * score.total
        case = POSITION_SCALED
    return RewardRecord(
        t=t,
        reward=value,
        position_before=position_before,
        position_after=position_after,
        momentum=score,
        benchmark_pnl=benchmark_pnl,
        case=case,
    )


def benchmark_pnl(equity_curve, t: int, window: int = DEFAULT_BENCHMARK_WINDOW) -> float:
    """Sliding-window account P&L: equity[t] - equity[max(0, t - window)]."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t >= len(equity_curve):
        raise ValueError("t beyond the end of the equity curve")
    return float(equity_curve[t]) - float(equity_curve[max(0, t - window)])


def reflect(
    record: RewardRecord,
    contributing_ids: tuple[int, ...],
    store,
    benchmark_window: int = DEFAULT_BENCHMARK_WINDOW,
    note_text: str | None = None,
) -> ReflectionNote:
    """Attribute the day's reward to its contributing memories and write a
    reflection note into shallow memory.

    The reward is split equally across the contributing records; with none,
    the note is still emitted. ``note_text`` overrides the generated wording
    (used when an endpoint-backed reflector supplies the text).
    """
    ids = tuple(contributing_ids)
    if ids:
        share = record.reward / len(ids)
        for record_id in ids:
            store.reinforce(record_id, share)
    if note_text is None:
        if record.position_after > record.position_before:
            action = f"bought {record.position_after - record.position_before}"
        elif record.position_after < record.position_before:
            action = f"sold {record.position_before - record.position_after}"
        else:
            action = "held"
        versus = "ahead of" if record.reward >= record.benchmark_pnl else "behind"
        note_text = (
            f"day {record.t}: {action} (position {record.position_before}"
            f"->{record.position_after}); {record.case} reward {record.reward:.6g}, "
            f"{versus} the {benchmark_window}-day pnl benchmark {record.benchmark_pnl:.6g}"
        )
    note = ReflectionNote(t=record.t, text=note_text, linked_ids=ids)
    store.insert(note, record.t)
    return note
