"""Label-query policies: uniform rate, uncertainty mixture, and FTRL.

All three share the :class:`QueryPolicy` surface used by the harness: call
``probability`` to commit the round's query probability, then ``observe`` once
the round's oracle value and uncertainty are available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np


@dataclass
class PolicyContext:
    """What a policy may look at in round ``t`` (1-based)."""

    t: int
    T: int
    T_b: float
    labels_used: int = 0
    u_x: float = 0.0
    phi_prev: float = 0.0
    mean_u_estimate: float = 1.0

    def __post_init__(self):
        if not 1 <= self.t <= self.T:
            raise ValueError(f"round {self.t} outside [1, {self.T}]")
        if not 0 <= self.labels_used <= self.t - 1:
            raise ValueError("labels_used must lie in [0, t - 1]")

    @property
    def remaining_budget(self) -> float:
        """Pro-rata budget up to ``t`` minus the labels already spent."""
        return self.t * self.T_b / self.T - self.labels_used


def _clip01(p: float) -> float:
    return min(1.0, max(0.0, p))


def uniform_probability(ctx: PolicyContext) -> float:
    if ctx.T_b > ctx.T:
        raise ValueError("budget exceeds horizon")
    return ctx.T_b / ctx.T


@dataclass
class MixtureConfig:
    lam: float
    T_b: float
    T: int
    trigger: bool = True
    trigger_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.T_b <= 0:
            raise ValueError("budget must be positive")


def mixture_probability(ctx: PolicyContext, cfg: MixtureConfig) -> float:
    """Uncertainty-proportional rule capped by the remaining budget, mixed with the uniform rate.

    When the realized label count falls below ``trigger_fraction`` of the
    pro-rata budget, the uncertainty term is replaced by the clipped remaining
    budget so an over-confident uncertainty model cannot starve the budget.
    """
    rate = cfg.T_b / cfg.T
    if cfg.lam == 1.0:
        return rate
    remaining = ctx.remaining_budget
    fired = cfg.trigger and ctx.labels_used < cfg.trigger_fraction * (ctx.t * cfg.T_b / cfg.T)
    if fired:
        base = _clip01(remaining)
    else:
        eta = cfg.T_b / (cfg.T * ctx.mean_u_estimate) if ctx.mean_u_estimate > 0 else 0.0
        base = _clip01(min(eta * ctx.u_x, remaining))
    return _clip01((1.0 - cfg.lam) * base + cfg.lam * rate)


@dataclass
class FtrlState:
    """Accumulator and box for the FTRL query rule.

    ``theta`` is the running sum of the loss derivatives ``-phi / p**2``; it
    starts at zero and never increases.
    """

    gamma: float
    beta: float
    tau: float
    theta: float = 0.0
    last_p: Optional[float] = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if not 0.0 < self.beta <= self.tau:
            raise ValueError("beta must lie in (0, tau]")


def ftrl_probability(state: FtrlState) -> float:
    """Closed-form minimizer of ``gamma*theta*p + p**2/2`` over ``[beta, tau]``."""
    p = max(state.beta, min(state.tau, -state.gamma * state.theta))
    state.last_p = p
    return p


def ftrl_observe(state: FtrlState, phi: float) -> FtrlState:
    if state.last_p is None:
        raise ValueError("ftrl_observe called before ftrl_probability")
    if phi < 0:
        raise ValueError("oracle values must be nonnegative")
    state.theta -= phi / state.last_p ** 2
    return state


def ftrl_hyperparameters(T: int, T_b: float, *, beta_frac: float = 1 / 8,
                         gamma_mode: str = "practical", phi_bound: float = 4.0) -> dict:
    """Defaults tau = T_b/T and beta = beta_frac*tau.

    ``gamma_mode="practical"`` gives gamma = 1/sqrt(T); ``"theoretical"`` gives
    gamma = beta**2 / (sqrt(T) * phi_bound).
    """
    tau = T_b / T
    beta = beta_frac * tau
    if gamma_mode == "practical":
        gamma = 1.0 / math.sqrt(T)
    elif gamma_mode == "theoretical":
        gamma = beta ** 2 / (math.sqrt(T) * phi_bound)
    else:
        raise ValueError(f"unknown gamma_mode {gamma_mode!r}")
    return {"gamma": gamma, "beta": beta, "tau": tau}


def _check_pstar(p_star: float) -> None:
    if not 0.0 < p_star <= 1.0:
        raise ValueError("comparator probability must lie in (0, 1]")


def regret(trace: Iterable[Tuple[float, float]], p_star: float) -> float:
    """Cumulative loss ``sum phi/p`` of the played probabilities minus that of ``p_star``."""
    _check_pstar(p_star)
    played = []
    bench = []
    for phi, p in trace:
        if p <= 0:
            raise ValueError("played probabilities must be positive")
        played.append(phi / p)
        bench.append(phi / p_star)
    return math.fsum(played) - math.fsum(bench)


def regret_upper_bound(trace: Iterable[Tuple[float, float]], gamma: float, p_star: float,
                       beta: float, tau: float, factor: float = 1.0) -> float:
    """FTRL regret bound with quadratic regularizer ``p**2/2`` on ``[beta, tau]``.

    ``factor`` multiplies the gradient term; pass 2 for the more conservative
    variant of the bound.
    """
    _check_pstar(p_star)
    grads = []
    for phi, p in trace:
        if p <= 0:
            raise ValueError("played probabilities must be positive")
        grads.append((phi / p ** 2) ** 2)
    reg_gap = 0.5 * p_star ** 2 - 0.5 * beta ** 2
    return factor * gamma * math.fsum(grads) + reg_gap / gamma


def regret_prefixes(phis: Sequence[float], ps: Sequence[float], p_star: float,
                    gamma: float, beta: float, factor: float = 2.0):
    """Regret and its bound for every prefix of a trace, as two arrays."""
    phis = np.asarray(phis, dtype=float)
    ps = np.asarray(ps, dtype=float)
    reg = np.cumsum(phis / ps - phis / p_star)
    bound = factor * gamma * np.cumsum((phis / ps ** 2) ** 2) + (0.5 * p_star ** 2 - 0.5 * beta ** 2) / gamma
    return reg, bound


class QueryPolicy:
    name = "policy"
    uses_models = True

    def probability(self, t: int, labels_used: int, u_x: float,
                    mean_u: Optional[float] = None) -> float:
        raise NotImplementedError

    def observe(self, phi: float, u_x: float) -> None:
        pass


class UniformPolicy(QueryPolicy):
    name = "uniform"

    def __init__(self, T: int, T_b: float, rate: Optional[float] = None):
        self.T = T
        self.T_b = T_b
        self.rate = T_b / T if rate is None else rate

    def probability(self, t, labels_used, u_x, mean_u=None):
        return self.rate


class MixturePolicy(QueryPolicy):
    """Mixture rule; the normalizer uses ``mean_u`` when the caller supplies one.

    Without it, the running mean of the uncertainties observed so far is used
    (``u0`` before the first observation).
    """

    name = "mixture"

    def __init__(self, cfg: MixtureConfig, u0: float = 1.0, min_prob: float = 1e-6):
        self.cfg = cfg
        self.u0 = u0
        self.min_prob = min_prob
        self._u_sum = 0.0
        self._u_n = 0

    @property
    def mean_u(self) -> float:
        return self._u_sum / self._u_n if self._u_n else self.u0

    def probability(self, t, labels_used, u_x, mean_u=None):
        ctx = PolicyContext(t=t, T=self.cfg.T, T_b=self.cfg.T_b, labels_used=labels_used,
                            u_x=u_x, mean_u_estimate=self.mean_u if mean_u is None else mean_u)
        return max(self.min_prob, mixture_probability(ctx, self.cfg))

    def observe(self, phi, u_x):
        self._u_sum += u_x
        self._u_n += 1


class FtrlPolicy(QueryPolicy):
    name = "ftrl"

    def __init__(self, state: FtrlState):
        self.state = state
        self.trace: list = []

    def probability(self, t, labels_used, u_x, mean_u=None):
        return ftrl_probability(self.state)

    def observe(self, phi, u_x):
        self.trace.append((phi, self.state.last_p))
        ftrl_observe(self.state, phi)
