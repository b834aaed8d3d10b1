import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rstrader.decision import Direction, TradeDecision
from rstrader.portfolio import (
    AccountState,
    execute,
    floor_shares,
    read_trade_log,
    replay_trade_log,
    write_trade_log,
)


def buy(qty):
    return TradeDecision(Direction.BUY, qty, "test buy")


def sell(qty):
    return TradeDecision(Direction.SELL, qty, "test sell")


HOLD = TradeDecision(Direction.HOLD, 0, "test hold")


class TestExecute:
    def test_plain_buy(self):
        state, entry = execute(AccountState(1000.0, 0), buy(3), 100.0)
        assert state.cash == pytest.approx(700.0)
        assert state.position == 3
        assert entry.clamped is False

    def test_sell_clamped_to_position(self):
        state, entry = execute(AccountState(0.0, 3), sell(5), 100.0)
        assert entry.executed_qty == 3
        assert state.position == 0
        assert entry.clamped is True

    def test_hold_identity(self):
        start = AccountState(500.0, 2)
        state, entry = execute(start, HOLD, 120.0)
        assert state == start
        assert state.equity(120.0) == pytest.approx(500.0 + 2 * 120.0)
        assert entry.executed_qty == 0

    def test_buy_clamped_by_cash(self):
        state, entry = execute(AccountState(250.0, 0), buy(10), 100.0)
        assert entry.executed_qty == 2
        assert entry.clamped is True
        assert state.cash == pytest.approx(50.0)

    def test_fee_accounting(self):
        # 10 bps on a 100-share fill at 50: fee = 5.0
        state, entry = execute(AccountState(10_000.0, 0), buy(100), 50.0, fee_bps=10.0)
        assert entry.fee == pytest.approx(5.0)
        assert state.cash == pytest.approx(10_000.0 - 5_000.0 - 5.0)

    def test_fee_respects_cash_limit(self):
        # without the fee the account could afford exactly 100 shares
        state, entry = execute(AccountState(5_000.0, 0), buy(100), 50.0, fee_bps=10.0)
        assert entry.executed_qty == 99
        assert state.cash >= 0

    def test_nonpositive_price_rejected(self):
        with pytest.raises(ValueError):
            execute(AccountState(100.0, 0), buy(1), 0.0)

    def test_short_sell_when_enabled(self):
        state, entry = execute(AccountState(0.0, 0), sell(5), 100.0, allow_short=True)
        assert state.position == -5
        assert state.cash == pytest.approx(500.0)
        assert entry.clamped is False


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=10_000),
    steps=st.integers(min_value=1, max_value=40),
)
def test_conservation_over_random_streams(seed, steps):
    rng = np.random.default_rng(seed)
    state = AccountState(float(rng.integers(1_000, 100_000)), 0)
    price = 100.0
    for t in range(steps):
        price = max(1.0, price + rng.normal(0, 3))
        kind = rng.integers(0, 3)
        qty = int(rng.integers(0, 50))
        decision = (
            HOLD
            if kind == 0 or qty == 0
            else (buy(qty) if kind == 1 else sell(qty))
        )
        cash_before = state.cash
        state, entry = execute(state, decision, price, fee_bps=5.0, t=t)
        d = entry.direction
        # conservation: cash' + d*q*price + fee == cash
        assert abs(state.cash + d * entry.executed_qty * entry.price + entry.fee - cash_before) < 1e-9
        assert state.cash >= 0
        assert state.position >= 0
        assert entry.executed_qty <= entry.requested_qty
        assert entry.clamped == (entry.executed_qty < entry.requested_qty)
        assert state.equity(price) == pytest.approx(state.cash + state.position * price)


class TestTradeLogRoundTrip:
    def test_write_read_replay(self, tmp_path):
        initial = AccountState(10_000.0, 0)
        state = initial
        entries = []
        for t, decision in enumerate([buy(10), HOLD, sell(4), buy(3), sell(100)]):
            state, entry = execute(state, decision, 100.0 + t, fee_bps=2.0, t=t)
            entries.append(entry)
        path = tmp_path / "trades.jsonl"
        write_trade_log(entries, str(path))
        back = read_trade_log(str(path))
        assert back == entries
        final = replay_trade_log(initial, back)
        assert final == state

    def test_replay_detects_divergence(self, tmp_path):
        initial = AccountState(10_000.0, 0)
        state, entry = execute(initial, buy(10), 100.0, t=0)
        bad = entry.__class__(**{**entry.__dict__, "cash_after": entry.cash_after + 1})
        with pytest.raises(ValueError, match="diverged"):
            replay_trade_log(initial, [bad])


def test_floor_shares_absorbs_ulp_noise():
    assert floor_shares(0.2 * 10_000.0 / 100.0) == 20
    assert floor_shares(19.999999999999996) == 20
    assert floor_shares(19.9999) == 19
