"""Split of the common average rate among users (water-filling).

Given the common AR ``R_c`` and private ARs ``R_k``, find fractions ``c_k``
(non-negative, summing to one) maximizing ``min_k (R_k + c_k R_c)``.  The
optimum tops up the weakest users to a common water level; users whose
private AR already exceeds the level get nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["PartitionResult", "waterfill", "lp_oracle"]


@dataclass(frozen=True, eq=False)
class PartitionResult:
    coeffs: np.ndarray
    level: float
    active_count: int
    degenerate: bool = False


def _validate(common_rate: float, private_rates) -> np.ndarray:
    r = np.asarray(private_rates, dtype=float).reshape(-1)
    if r.size == 0:
        raise ValueError("need at least one private rate")
    if not math.isfinite(common_rate) or common_rate < 0:
        raise ValueError(f"common rate must be finite and >= 0, got {common_rate}")
    if not np.all(np.isfinite(r)) or np.any(r < 0):
        raise ValueError("private rates must be finite and >= 0")
    return r


def waterfill(common_rate: float, private_rates) -> PartitionResult:
    """Optimal partition coefficients by the descending-discard loop.

    Users are sorted by private AR (ties by index).  Starting from all ``K``
    users, the level assuming every remaining user is active is computed; if
    the strongest remaining user would need a negative fraction it is dropped.
    The loop always stops, at the latest with a single active user.
    """
    r = _validate(common_rate, private_rates)
    k = r.size
    if common_rate == 0.0:
        return PartitionResult(np.full(k, 1.0 / k), float(r.min()), 0, degenerate=True)

    order = np.argsort(r, kind="stable")
    sorted_r = r[order]
    prefix = np.cumsum(sorted_r)
    active = k + 1
    while True:
        active -= 1
        level = (common_rate + prefix[active - 1]) / active
        if level - sorted_r[active - 1] >= 0.0:
            break
    c_sorted = np.zeros(k)
    c_sorted[:active] = (level - sorted_r[:active]) / common_rate
    # the weakest-margin active user absorbs the rounding so sum(c) == 1
    c_sorted[active - 1] = max(0.0, 1.0 - c_sorted[:active - 1].sum())
    coeffs = np.empty(k)
    coeffs[order] = c_sorted
    return PartitionResult(coeffs, float(level), int(active))


def lp_oracle(common_rate: float, private_rates, tol: float = 1e-12) -> PartitionResult:
    """Independent check of :func:`waterfill` by bisection on the level.

    A level ``L`` is reachable iff ``sum_k max(0, L - R_k) <= R_c``.
    """
    r = _validate(common_rate, private_rates)
    if common_rate <= 0:
        raise ValueError("lp_oracle needs a strictly positive common rate")
    lo = float(r.min())
    hi = lo + common_rate + float(r.max())
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if np.sum(np.maximum(0.0, mid - r)) <= common_rate:
            lo = mid
        else:
            hi = mid
    level = lo
    coeffs = np.maximum(0.0, level - r) / common_rate
    # hand the sub-tolerance slack back to the active users so sum(c) == 1
    active = coeffs > 0
    if not active.any():
        active = r == r.min()
    coeffs[active] += (1.0 - coeffs.sum()) / active.sum()
    return PartitionResult(coeffs, level, int(active.sum()))
