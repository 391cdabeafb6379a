"""Online prediction-powered mean estimate and its plug-in confidence interval."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from scipy.special import ndtri


def normal_quantile(q: float) -> float:
    """Inverse standard normal CDF (Cephes ``ndtri`` rational approximations)."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    return float(ndtri(q))


@dataclass(frozen=True)
class ConfidenceInterval:
    center: float
    half_width: float
    alpha: float

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    @property
    def width(self) -> float:
        return 2.0 * self.half_width

    def contains(self, value: float) -> bool:
        return abs(self.center - value) <= self.half_width


class EstimatorState:
    """Running estimate ``w_{t+1} = w_t + g_t / T`` with ``w_1 = 0``.

    ``g_t = f_t(x_t) + (y_t - f_t(x_t)) * xi_t / p_t``. The sum of the terms is
    kept with Neumaier compensation. With ``keep_trace=False`` the terms are
    not stored and the variance is tracked by Welford's recursion instead.
    """

    def __init__(self, T: int, keep_trace: bool = True):
        if T < 1:
            raise ValueError("horizon must be positive")
        self.T = int(T)
        self.keep_trace = keep_trace
        self.g_trace: list = []
        self.labels_used = 0
        self.rounds = 0
        self._sum = 0.0
        self._comp = 0.0
        self._mean = 0.0
        self._m2 = 0.0

    @property
    def w(self) -> float:
        return (self._sum + self._comp) / self.T

    def step(self, f_x: float, y: Optional[float], xi: int, p: float) -> float:
        """Fold one round into the estimate and return its term ``g_t``."""
        if p <= 0:
            raise ValueError("query probability must be positive")
        if xi:
            if y is None:
                raise ValueError("a queried round needs its label")
            g = f_x + (y - f_x) / p
            self.labels_used += 1
        else:
            g = f_x
        s = self._sum + g
        if abs(self._sum) >= abs(g):
            self._comp += (self._sum - s) + g
        else:
            self._comp += (g - s) + self._sum
        self._sum = s
        self.rounds += 1
        if self.keep_trace:
            self.g_trace.append(g)
        else:
            delta = g - self._mean
            self._mean += delta / self.rounds
            self._m2 += delta * (g - self._mean)
        return g


def plug_in_variance(state: EstimatorState) -> float:
    """Mean squared deviation of the recorded terms from the final estimate."""
    if state.rounds != state.T:
        raise ValueError(f"incomplete trace: {state.rounds} of {state.T} rounds")
    if not state.keep_trace:
        return max(state._m2 / state.T, 0.0)
    w = state.w
    return math.fsum((g - w) ** 2 for g in state.g_trace) / state.T


def confidence_interval(state: EstimatorState, alpha: float) -> ConfidenceInterval:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    sigma = math.sqrt(plug_in_variance(state))
    z = normal_quantile(1.0 - alpha / 2.0)
    return ConfidenceInterval(center=state.w, half_width=z * sigma / math.sqrt(state.T), alpha=alpha)


def unbiasedness_check(f_x: float, y_dist: Sequence[Tuple[float, float]], p: float) -> float:
    """Exact expectation of ``g`` over the label distribution and the query coin.

    ``y_dist`` is a sequence of ``(value, probability)`` pairs.
    """
    if not y_dist:
        raise ValueError("label distribution has empty support")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    terms = []
    for y, prob in y_dist:
        terms.append(prob * p * (f_x + (y - f_x) / p))
        terms.append(prob * (1.0 - p) * f_x)
    return math.fsum(terms)
