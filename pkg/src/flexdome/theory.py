"""Numeric checks of the scalar decay rates behind the violation bound.

With ``eta_j = j^{-5/6}`` and ``tau_j = j^{-1/6}`` every product
``eta_j * tau_j`` equals ``1/j``, so the exponents reduce to harmonic sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.5772156649015329
OPT_ERROR_BOUND = math.sqrt(7 * 2 ** (2 / 3))


def _harmonic(t: int) -> np.ndarray:
    """``H[k] = sum_{j<=k} 1/j`` for ``k = 0..t``."""
    out = np.zeros(t + 1)
    np.cumsum(1.0 / np.arange(1, t + 1), out=out[1:])
    return out


def series_initial_decay(t: int) -> float:
    """``exp(-1/2 sum_{j<=t} eta_j tau_j)``; behaves like ``t^{-1/2}``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return math.exp(-0.5 * _harmonic(t)[t])


def series_optimization_error(t: int) -> float:
    """``(sum_j eta_j^2 exp(-sum_{k=j+1}^t eta_k tau_k))^{1/2}``; behaves like ``t^{-1/3}``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    harm = _harmonic(t)
    j = np.arange(1, t + 1, dtype=np.float64)
    return math.sqrt(float(np.sum(j ** (-5.0 / 3.0) * np.exp(harm[1:] - harm[t]))))


@dataclass(frozen=True)
class DominanceReport:
    last_crossing: int | None   # largest t with error >= margin
    positive_sum: float         # sum_t [error - margin]_+
    dominates: bool             # error stays strictly below margin at the end of the range
    partial_sums: np.ndarray


def dominance_check(t_range, margin_fn, error_fn) -> DominanceReport:
    """Check that ``margin_fn`` majorises ``error_fn`` eventually.

    Both callables take an integer array and return positive values. The
    summed excess stays bounded exactly when the margin eventually wins.
    """
    t = np.asarray(t_range)
    margin = np.asarray(margin_fn(t), dtype=np.float64)
    error = np.asarray(error_fn(t), dtype=np.float64)
    excess = error - margin
    crossings = np.flatnonzero(excess >= 0)
    strict = np.flatnonzero(excess > 0)
    partial = np.cumsum(np.maximum(excess, 0.0))
    return DominanceReport(
        last_crossing=int(t[crossings[-1]]) if crossings.size else None,
        positive_sum=float(partial[-1]) if partial.size else 0.0,
        dominates=not (strict.size and strict[-1] == len(t) - 1),
        partial_sums=partial,
    )


def initial_decay_curve(t_max: int) -> np.ndarray:
    """``series_initial_decay`` for every ``t = 1..t_max`` in one pass."""
    return np.exp(-0.5 * _harmonic(t_max)[1:])


def optimization_error_curve(t_max: int) -> np.ndarray:
    """``series_optimization_error`` for every ``t = 1..t_max``.

    Uses ``X_t = X_{t-1} exp(-1/t) + t^{-5/3}``.
    """
    out = np.empty(t_max)
    x = 0.0
    for t in range(1, t_max + 1):
        x = x * math.exp(-1.0 / t) + t ** (-5.0 / 3.0)
        out[t - 1] = x
    return np.sqrt(out)


def run_checks(t_values_a=(10**3, 10**4, 10**5, 10**6), t_values_b=(10**3, 10**4, 10**5),
               margin_config=None) -> list[tuple[str, bool, str]]:
    """Pass/fail rows for the decay-rate suite."""
    rows = []
    for t in t_values_a:
        v = series_initial_decay(t) * math.sqrt(t)
        rows.append((f"initial_decay*sqrt(t) t={t}", 0.70 <= v <= 0.80, f"{v:.5f}"))
    for t in t_values_b:
        v = series_optimization_error(t) * t ** (1 / 3)
        rows.append((f"opt_error*t^(1/3) t={t}", 1.0 <= v <= 3.4, f"{v:.5f}"))
    if margin_config is not None:
        t_max = 100_000
        ts = np.arange(1, t_max + 1)
        margin = np.array([margin_config.margin(float(x)) for x in ts])
        init = initial_decay_curve(t_max)
        opt = optimization_error_curve(t_max)
        for name, err in (("a", init), ("b", opt)):
            rep = dominance_check(ts, lambda _t: margin, lambda _t: err)
            rows.append((f"margin dominates term ({name})", rep.dominates,
                         f"sum={rep.positive_sum:.4g} last_crossing={rep.last_crossing}"))
    return rows
