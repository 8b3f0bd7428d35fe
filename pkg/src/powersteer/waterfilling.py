"""Weighted water-filling: the Gaussian-input closed-form reference.

Maximizes sum_i w_i*log2(1 + g_i*P_i/sigma^2) subject to sum_i P_i =
p_total, by the classic level solution P_i = [w_i/(nu*ln2) - sigma^2/g_i]_+
with the multiplier nu found by bisection. It is a familiar linear-channel
reference only: under a discrete input the saturating MI makes this
allocation strictly suboptimal, which is exactly what the comparison
scenarios demonstrate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .state import ChannelState

_REL_TOL = 1e-8


@dataclass(frozen=True)
class WaterfillingSolution:
    powers: np.ndarray
    nu: float
    achieved_sum: float

    def __post_init__(self):
        p = np.asarray(self.powers, dtype=float).copy()
        p.flags.writeable = False
        object.__setattr__(self, "powers", p)


def _powers_at(nu: float, w: np.ndarray, gains2: np.ndarray, sigma2: float) -> np.ndarray:
    level = w / (nu * math.log(2.0))
    floor = np.where(gains2 > 0, sigma2 / np.where(gains2 > 0, gains2, 1.0), np.inf)
    return np.maximum(level - floor, 0.0)


def waterfilling(w: Sequence[float], channels: ChannelState,
                 p_total: float) -> WaterfillingSolution:
    """Solve for the power vector at total budget p_total.

    The map nu -> sum_i P_i(nu) is continuous and strictly decreasing
    wherever positive, so a geometrically grown bracket plus bisection
    converges to |sum P - p_total| <= 1e-8 * p_total.
    """
    w = np.asarray(w, dtype=float)
    gains2 = np.asarray(channels.gains2, dtype=float)
    if w.shape != gains2.shape:
        raise ValueError(f"weight/gain dimension mismatch: {w.shape} vs {gains2.shape}")
    if not p_total > 0:
        raise ValueError("p_total must be positive")
    if not np.any((w > 0) & (gains2 > 0)):
        raise ValueError("no channel with positive weight and gain; no solution")
    sigma2 = channels.noise.sigma2

    def total(nu: float) -> float:
        return float(np.sum(_powers_at(nu, w, gains2, sigma2)))

    lo = hi = 1.0
    while total(hi) > p_total:
        hi *= 2.0
    while total(lo) < p_total:
        lo /= 2.0
    # invariant: total(lo) >= p_total >= total(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = total(mid)
        if abs(s - p_total) <= _REL_TOL * p_total:
            lo = hi = mid
            break
        if s > p_total:
            lo = mid
        else:
            hi = mid
    nu = 0.5 * (lo + hi)
    powers = _powers_at(nu, w, gains2, sigma2)
    return WaterfillingSolution(powers=powers, nu=nu,
                                achieved_sum=float(powers.sum()))


def gaussian_rate(powers: Sequence[float], w: Sequence[float],
                  channels: ChannelState) -> float:
    """Weighted Gaussian-input rate sum_i w_i*log2(1 + g_i*P_i/sigma^2)."""
    p = np.asarray(powers, dtype=float)
    w = np.asarray(w, dtype=float)
    g = np.asarray(channels.gains2, dtype=float)
    return float(np.sum(w * np.log2(1.0 + g * p / channels.noise.sigma2)))
