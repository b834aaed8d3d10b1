"""Numeric kernels with a compiled core and a pure fallback.

The Cython extension (``_fast``) is preferred when importable; otherwise the
NumPy/Python twin (``_pure``) is used. Set ``RSTRADER_KERNELS=python`` to
force the fallback. Both backends are bit-identical; ``benchmarks/`` compares
their speed.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pure

_forced = os.environ.get("RSTRADER_KERNELS", "").strip().lower()
if _forced in ("py", "python", "pure"):
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pure
        BACKEND = "python"


def _as_f64(values) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.float64)


def backend_name() -> str:
    return BACKEND


def available_backends() -> dict[str, object]:
    """Importable backend modules, keyed by name (used by the benchmark)."""
    backends: dict[str, object] = {"python": _pure}
    try:
        from . import _fast

        backends["cython"] = _fast
    except ImportError:
        pass
    return backends


def ema(values, span: int) -> np.ndarray:
    """Exponential moving average with smoothing 2/(span+1), seeded with the
    first value."""
    if span < 1:
        raise ValueError("span must be >= 1")
    return _impl.ema(_as_f64(values), span)


def wilder_rsi(closes, period: int = 14) -> np.ndarray:
    """Wilder-smoothed RSI per index; NaN before the first full period."""
    if period < 1:
        raise ValueError("period must be >= 1")
    return _impl.wilder_rsi(_as_f64(closes), period)


def max_drawdown_frac(equity) -> float:
    """Max peak-to-trough decline as a fraction of the peak. Curve must be
    non-empty and strictly positive."""
    arr = _as_f64(equity)
    if arr.size == 0:
        raise ValueError("equity curve is empty")
    return _impl.max_drawdown_frac(arr)


def forward_diffs(closes, horizons: tuple[int, ...]) -> np.ndarray:
    """Forward price differences clamped at the last index, one row per
    horizon."""
    arr = _as_f64(closes)
    if arr.size == 0:
        raise ValueError("closes is empty")
    return _impl.forward_diffs(arr, tuple(int(h) for h in horizons))
