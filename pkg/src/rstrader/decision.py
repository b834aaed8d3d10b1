"""Trading decisions: a direction agent (buy/sell/hold) plus a quantity/risk
agent sizing trades under scaled-Kelly and CVaR constraints, and the
baseline policies (buy-and-hold, random, MACD, RSI).

Decision-time momentum features are backward differences; the forward
differences belong to reward evaluation only. Long-only by default; whole
shares.
"""

from __future__ import annotations

import math
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import kernels
from .market_data import MomentumFeatures, PriceSeries
from .memory import MemoryRecord
from .perception import AnalystReport
from .portfolio import AccountState, floor_shares


class Direction(IntEnum):
    SELL = -1
    HOLD = 0
    BUY = 1


@dataclass(frozen=True)
class AblationFlags:
    """Feature toggles: risk-sensitive sizing, financial-insight prompting,
    market-news integration, multi-timescale reward."""

    rs: bool = True
    fip: bool = True
    mn: bool = True
    mtr: bool = True


@dataclass(frozen=True)
class TradeDecision:
    direction: Direction
    quantity: int
    rationale: str
    contributing_memory_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if self.quantity < 0 or self.quantity != int(self.quantity):
            raise ValueError("quantity must be a non-negative whole number of shares")
        if self.direction == Direction.HOLD and self.quantity != 0:
            raise ValueError("hold decisions must carry quantity 0")


@dataclass
class PolicyContext:
    """Everything a policy may look at for day t: backward momentum, the
    retrieved memories, account state, and price history up to t only."""

    ticker: str
    t: int
    momentum: MomentumFeatures  # backward differences
    retrieved: list[MemoryRecord]
    account: AccountState
    price: float
    closes: np.ndarray  # closes[0..t] inclusive
    recent_returns: np.ndarray  # daily simple returns up to t
    ablation: AblationFlags = field(default_factory=AblationFlags)


@dataclass(frozen=True)
class SizingInputs:
    win_prob: float
    payoff_ratio: float
    kelly_scale: float = 0.5
    cvar_alpha: float = 0.95
    cvar_budget: float = 0.05
    lookback: int = 60

    def __post_init__(self):
        if not 0.0 <= self.win_prob <= 1.0:
            raise ValueError("win_prob must lie in [0, 1]")
        if self.payoff_ratio <= 0:
            raise ValueError("payoff_ratio must be positive")
        if not 0.0 < self.kelly_scale <= 1.0:
            raise ValueError("kelly_scale must lie in (0, 1]")
        if not 0.5 < self.cvar_alpha < 1.0:
            raise ValueError("cvar_alpha must lie in (0.5, 1)")
        if not 0.0 < self.cvar_budget <= 1.0:
            raise ValueError("cvar_budget must lie in (0, 1]")
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")


def kelly_fraction(p: float, b: float, lam: float = 1.0) -> float:
    """Scaled Kelly bet fraction: clamp(lam * (p - (1-p)/b), 0, 1)."""
    raw = p - (1.0 - p) / b
    return min(1.0, max(0.0, lam * raw))


def cvar(returns, alpha: float) -> float:
    """Historical-simulation CVaR under the positive-loss convention.

    Tail = worst ceil((1-alpha)*n) observations; result is -mean(tail)
    floored at 0.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.size == 0:
        raise ValueError("returns must be non-empty")
    if not 0.5 < alpha < 1.0:
        raise ValueError("alpha must lie in (0.5, 1)")
    # epsilon absorbs float error in (1-alpha)*n when the product is integral
    k = max(1, math.ceil((1.0 - alpha) * r.size - 1e-9))
    tail = np.sort(r)[:k]
    return float(max(0.0, -tail.mean()))


def size_position(ctx: PolicyContext, inputs: SizingInputs, direction: Direction) -> int:
    """Whole-share quantity from the Kelly fraction, capped by the CVaR
    budget and by what the account can actually do."""
    if direction == Direction.HOLD:
        raise ValueError("size_position requires a non-hold direction")
    fraction = kelly_fraction(inputs.win_prob, inputs.payoff_ratio, inputs.kelly_scale)
    window = ctx.recent_returns[-inputs.lookback :]
    if window.size > 0:
        risk = cvar(window, inputs.cvar_alpha)
        if risk > 0:
            fraction = min(fraction, inputs.cvar_budget / risk)
    if direction == Direction.BUY:
        equity = ctx.account.equity(ctx.price)
        qty = floor_shares(fraction * equity / ctx.price)
        qty = min(qty, floor_shares(ctx.account.cash / ctx.price))
    else:
        qty = floor_shares(fraction * ctx.account.position)
        qty = min(qty, ctx.account.position)
    return max(0, qty)


@dataclass(frozen=True)
class DirectionVerdict:
    direction: Direction
    rationale: str
    degraded: bool = False


@dataclass(frozen=True)
class SizingEstimate:
    win_prob: float
    payoff_ratio: float
    rationale: str = ""
    degraded: bool = False


class DirectionAgent(ABC):
    @abstractmethod
    def decide(self, ctx: PolicyContext) -> DirectionVerdict: ...


class SizingAgent(ABC):
    @abstractmethod
    def estimate(self, ctx: PolicyContext, direction: Direction) -> SizingEstimate: ...


def _sign(x: float) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0


def _feature_votes(ctx: PolicyContext) -> list[int]:
    m = ctx.momentum
    if ctx.ablation.fip:
        return [_sign(m.d1), _sign(m.d7), _sign(m.d30)]
    # insight prompting off: myopic single-horizon rule
    return [_sign(m.d1)]


def _sentiment_vote(retrieved: list[MemoryRecord]) -> tuple[int, int]:
    """(vote, number of reports). Reflection notes carry no sentiment."""
    sentiments = [
        rec.content.sentiment
        for rec in retrieved
        if isinstance(rec.content, AnalystReport)
    ]
    if not sentiments:
        return 0, 0
    return _sign(sum(sentiments) / len(sentiments)), len(sentiments)


class ThresholdDirectionAgent(DirectionAgent):
    """Deterministic default: momentum-sign votes plus a memory sentiment
    vote; trades only on full agreement of the momentum features."""

    def decide(self, ctx: PolicyContext) -> DirectionVerdict:
        votes = _feature_votes(ctx)
        need = len(votes)
        score = sum(votes)
        sentiment_note = ""
        if ctx.ablation.fip:
            vote, n_reports = _sentiment_vote(ctx.retrieved)
            score += vote
            if n_reports:
                sentiment_note = f", sentiment vote {vote:+d} from {n_reports} report(s)"
        if score >= need:
            direction = Direction.BUY
        elif score <= -need:
            direction = Direction.SELL
        else:
            direction = Direction.HOLD
        rationale = (
            f"momentum votes {votes}{sentiment_note}, score {score:+d} "
            f"(threshold {need}) -> {direction.name.lower()}"
        )
        return DirectionVerdict(direction, rationale)


class MomentumAgreementSizer(SizingAgent):
    """Deterministic default: win probability 0.5 + 0.1 per momentum feature
    agreeing with the direction; even payoff."""

    def estimate(self, ctx: PolicyContext, direction: Direction) -> SizingEstimate:
        votes = _feature_votes(ctx)
        agreeing = sum(1 for v in votes if v == int(direction))
        p = 0.5 + 0.1 * agreeing
        return SizingEstimate(
            win_prob=p,
            payoff_ratio=1.0,
            rationale=f"{agreeing}/{len(votes)} features agree -> p={p:.2f}, b=1",
        )


class Policy(ABC):
    """A complete daily decision rule (direction and quantity)."""

    @abstractmethod
    def decide(self, ctx: PolicyContext) -> TradeDecision: ...


@dataclass
class SizingConstants:
    kelly_scale: float = 0.5
    cvar_alpha: float = 0.95
    cvar_budget: float = 0.05
    lookback: int = 60
    fixed_unit: int = 10  # trade size when risk-sensitive sizing is off


class DualAgentPolicy(Policy):
    """Direction agent first, then the quantity/risk agent; zero-size
    decisions degrade to hold."""

    def __init__(
        self,
        direction_agent: DirectionAgent,
        sizing_agent: SizingAgent,
        constants: SizingConstants | None = None,
    ):
        self.direction_agent = direction_agent
        self.sizing_agent = sizing_agent
        self.constants = constants or SizingConstants()

    def decide(self, ctx: PolicyContext) -> TradeDecision:
        ids = tuple(rec.id for rec in ctx.retrieved)
        verdict = self.direction_agent.decide(ctx)
        if verdict.direction == Direction.HOLD:
            return TradeDecision(Direction.HOLD, 0, verdict.rationale, ids)
        if not ctx.ablation.rs:
            qty = self._fixed_unit_qty(ctx, verdict.direction)
            if qty == 0:
                return TradeDecision(
                    Direction.HOLD, 0, verdict.rationale + " (fixed unit infeasible)", ids
                )
            return TradeDecision(
                verdict.direction, qty, verdict.rationale + " (fixed-unit sizing)", ids
            )
        estimate = self.sizing_agent.estimate(ctx, verdict.direction)
        inputs = SizingInputs(
            win_prob=estimate.win_prob,
            payoff_ratio=estimate.payoff_ratio,
            kelly_scale=self.constants.kelly_scale,
            cvar_alpha=self.constants.cvar_alpha,
            cvar_budget=self.constants.cvar_budget,
            lookback=self.constants.lookback,
        )
        qty = size_position(ctx, inputs, verdict.direction)
        rationale = f"{verdict.rationale}; {estimate.rationale}"
        if qty == 0:
            return TradeDecision(Direction.HOLD, 0, rationale + " (sized to zero)", ids)
        return TradeDecision(verdict.direction, qty, rationale, ids)

    def _fixed_unit_qty(self, ctx: PolicyContext, direction: Direction) -> int:
        unit = self.constants.fixed_unit
        if direction == Direction.BUY:
            return min(unit, floor_shares(ctx.account.cash / ctx.price))
        return min(unit, ctx.account.position)


class BuyHoldPolicy(Policy):
    """Buy the maximum affordable quantity on the first day, then hold."""

    def __init__(self):
        self._bought = False

    def decide(self, ctx: PolicyContext) -> TradeDecision:
        if self._bought:
            return TradeDecision(Direction.HOLD, 0, "buy-and-hold: holding")
        self._bought = True
        qty = floor_shares(ctx.account.cash / ctx.price)
        if qty == 0:
            return TradeDecision(Direction.HOLD, 0, "buy-and-hold: cannot afford one share")
        return TradeDecision(Direction.BUY, qty, "buy-and-hold: initial full allocation")


class RandomPolicy(Policy):
    """Uniform direction and quantity fraction from a seeded generator.

    Uses the stdlib Mersenne generator so identical seeds reproduce the
    decision stream byte-for-byte across platforms.
    """

    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def decide(self, ctx: PolicyContext) -> TradeDecision:
        direction = (Direction.BUY, Direction.SELL, Direction.HOLD)[self._rng.randrange(3)]
        fraction = self._rng.random()
        if direction == Direction.BUY:
            qty = floor_shares(fraction * ctx.account.cash / ctx.price)
        elif direction == Direction.SELL:
            qty = floor_shares(fraction * ctx.account.position)
        else:
            qty = 0
        if direction != Direction.HOLD and qty == 0:
            return TradeDecision(Direction.HOLD, 0, "random: degenerate quantity -> hold")
        return TradeDecision(direction, qty, f"random: fraction {fraction:.3f}")


def _prefix_closes(series, t: int) -> np.ndarray:
    if isinstance(series, PriceSeries):
        return series.close_prefix(t)
    arr = np.asarray(series, dtype=np.float64)
    if not 0 <= t < arr.size:
        raise IndexError(f"trading-day index {t} out of range")
    return arr[: t + 1]


def macd_policy(series, t: int) -> Direction:
    """MACD(12, 26, 9) crossover rule: buy when the MACD line crosses above
    its signal at t, sell on the cross below. EMAs are seeded with the first
    close; insufficient history means hold."""
    if t < 1:
        return Direction.HOLD
    closes = _prefix_closes(series, t)
    macd = kernels.ema(closes, 12) - kernels.ema(closes, 26)
    signal = kernels.ema(macd, 9)
    if macd[t] > signal[t] and macd[t - 1] <= signal[t - 1]:
        return Direction.BUY
    if macd[t] < signal[t] and macd[t - 1] >= signal[t - 1]:
        return Direction.SELL
    return Direction.HOLD


def rsi_policy(series, t: int, period: int = 14) -> Direction:
    """Wilder RSI rule: buy on the upward cross through 30, sell on the
    downward cross through 70."""
    if t < period + 1:
        return Direction.HOLD
    closes = _prefix_closes(series, t)
    rsi = kernels.wilder_rsi(closes, period)
    cur, prev = rsi[t], rsi[t - 1]
    if prev < 30.0 <= cur:
        return Direction.BUY
    if prev > 70.0 >= cur:
        return Direction.SELL
    return Direction.HOLD


class _IndicatorPolicy(Policy):
    """All-in on buy signals, all-out on sell signals."""

    name = "indicator"

    def _direction(self, ctx: PolicyContext) -> Direction:
        raise NotImplementedError

    def decide(self, ctx: PolicyContext) -> TradeDecision:
        direction = self._direction(ctx)
        if direction == Direction.BUY:
            qty = floor_shares(ctx.account.cash / ctx.price)
        elif direction == Direction.SELL:
            qty = ctx.account.position
        else:
            qty = 0
        if direction != Direction.HOLD and qty == 0:
            return TradeDecision(Direction.HOLD, 0, f"{self.name}: signal but nothing to trade")
        return TradeDecision(direction, qty, f"{self.name}: {direction.name.lower()} signal")


class MacdSignalPolicy(_IndicatorPolicy):
    name = "macd"

    def _direction(self, ctx: PolicyContext) -> Direction:
        # the prefix ends at day t, so its last index is the current day
        return macd_policy(ctx.closes, ctx.closes.size - 1)


class RsiSignalPolicy(_IndicatorPolicy):
    name = "rsi"

    def __init__(self, period: int = 14):
        self.period = period

    def _direction(self, ctx: PolicyContext) -> Direction:
        return rsi_policy(ctx.closes, ctx.closes.size - 1, self.period)
