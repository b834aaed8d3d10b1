"""Performance analytics: cumulative return, annualized Sharpe ratio, and
maximum drawdown.

Conventions (pinned for reproducibility): sample (n-1) standard deviation,
zero daily risk-free rate by default, 252 trading days a year, and SR = 0
when return variance is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True)
class PerformanceSummary:
    cr_pct: float
    sharpe: float
    mdd_pct: float


def cumulative_return(equity_curve) -> float:
    """100 * (final / initial - 1)."""
    curve = np.asarray(equity_curve, dtype=np.float64)
    if curve.size == 0:
        raise ValueError("equity curve is empty")
    if curve[0] <= 0:
        raise ValueError("initial equity must be positive")
    return float(100.0 * (curve[-1] / curve[0] - 1.0))


def sharpe_ratio(
    equity_curve,
    rf_daily: float = 0.0,
    periods_per_year: int = TRADING_DAYS_PER_YEAR,
) -> float:
    """Annualized Sharpe ratio of daily simple returns."""
    curve = np.asarray(equity_curve, dtype=np.float64)
    if curve.size < 2:
        raise ValueError("equity curve too short for Sharpe ratio (need >= 2 points)")
    returns = np.diff(curve) / curve[:-1]
    std = float(returns.std(ddof=1)) if returns.size > 1 else 0.0
    if std == 0.0:
        return 0.0
    return float(np.sqrt(periods_per_year) * (returns.mean() - rf_daily) / std)


def max_drawdown(equity_curve) -> float:
    """Largest peak-to-trough decline, in percent of the peak (>= 0)."""
    curve = np.asarray(equity_curve, dtype=np.float64)
    if curve.size == 0:
        raise ValueError("equity curve is empty")
    if np.any(curve <= 0):
        raise ValueError("equity curve must be strictly positive")
    return 100.0 * kernels.max_drawdown_frac(curve)


def summarize(equity_curve, rf_daily: float = 0.0) -> PerformanceSummary:
    """CR/SR/MDD for one equity curve; SR falls back to 0 for 1-point curves."""
    curve = np.asarray(equity_curve, dtype=np.float64)
    sharpe = sharpe_ratio(curve, rf_daily) if curve.size >= 2 else 0.0
    return PerformanceSummary(
        cr_pct=cumulative_return(curve),
        sharpe=sharpe,
        mdd_pct=max_drawdown(curve),
    )
