"""Account ledger: trade execution with clamping, fees in basis points, and
strict conservation accounting.

Fills happen at the same-day close with zero slippage. Infeasible orders are
clamped to what cash or inventory allows and flagged, never rejected: an
agent emitting one bad size must not abort a long backtest.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass


def floor_shares(x: float) -> int:
    """Floor to whole shares with a 1e-9 nudge absorbing float
    representation error (0.2 * 10000 / 100 must floor to 20, not 19)."""
    return int(math.floor(x + 1e-9))


@dataclass(frozen=True)
class AccountState:
    cash: float
    position: int

    def equity(self, price: float) -> float:
        """Marked-to-market equity; always recomputed, never cached."""
        return self.cash + self.position * price


@dataclass(frozen=True)
class TradeLogEntry:
    t: int
    direction: int
    requested_qty: int
    executed_qty: int
    price: float
    fee: float
    cash_after: float
    position_after: int
    clamped: bool


def execute(
    state: AccountState,
    decision,
    price: float,
    fee_bps: float = 0.0,
    t: int = 0,
    allow_short: bool = False,
) -> tuple[AccountState, TradeLogEntry]:
    """Apply one trade decision to the account at the given close price.

    Buys are capped by cash net of fees, sells by current inventory (unless
    shorting is enabled). The position update is
    position' = position + direction * executed_qty.
    """
    if price <= 0:
        raise ValueError(f"price must be positive, got {price}")
    if fee_bps < 0:
        raise ValueError("fee_bps must be >= 0")
    d = int(decision.direction)
    requested = int(decision.quantity)
    fee_rate = fee_bps / 10_000.0

    if d == 0 or requested == 0:
        entry = TradeLogEntry(t, 0, 0, 0, price, 0.0, state.cash, state.position, False)
        return state, entry

    if d > 0:
        executed = min(requested, floor_shares(state.cash / (price * (1.0 + fee_rate))))
        # the nudged floor can overshoot affordability by one share
        while executed > 0 and executed * price * (1.0 + fee_rate) > state.cash:
            executed -= 1
    else:
        executed = requested if allow_short else min(requested, state.position)
    executed = max(0, executed)

    fee = executed * price * fee_rate
    new_cash = state.cash - d * executed * price - fee
    new_position = state.position + d * executed
    new_state = AccountState(cash=new_cash, position=new_position)
    entry = TradeLogEntry(
        t=t,
        direction=d,
        requested_qty=requested,
        executed_qty=executed,
        price=price,
        fee=fee,
        cash_after=new_cash,
        position_after=new_position,
        clamped=executed < requested,
    )
    return new_state, entry


def write_trade_log(entries: list[TradeLogEntry], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(asdict(entry), sort_keys=True) + "\n")


def read_trade_log(path: str) -> list[TradeLogEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(TradeLogEntry(**json.loads(line)))
    return entries


def replay_trade_log(initial: AccountState, entries: list[TradeLogEntry]) -> AccountState:
    """Re-apply logged fills to the initial state; must land exactly on the
    recorded cash/position at every step."""
    state = initial
    for entry in entries:
        cash = state.cash - entry.direction * entry.executed_qty * entry.price - entry.fee
        position = state.position + entry.direction * entry.executed_qty
        state = AccountState(cash=cash, position=position)
        if cash != entry.cash_after or position != entry.position_after:
            raise ValueError(
                f"trade log replay diverged at t={entry.t}: "
                f"got ({cash}, {position}), logged ({entry.cash_after}, {entry.position_after})"
            )
    return state
