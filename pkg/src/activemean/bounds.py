"""Empirical monitors for the concentration and variance bounds.

The anytime envelope and the FTRL variance bound quantify over true
conditional variances, which are only available in simulation. The
:func:`simulate_exact_run` simulator draws covariates uniformly from a finite
pool with known label probabilities, so every conditional moment given the
past is an exact finite sum.

All logarithms are natural unless ``log_base`` is given.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .data import make_rng
from .estimator import EstimatorState
from .models import LOGISTIC, ModelBundle
from .policy import FtrlPolicy, FtrlState, UniformPolicy, ftrl_hyperparameters


def _log(x, base: Optional[float] = None):
    return np.log(x) if base is None else np.log(x) / math.log(base)


def _check_delta_T(delta: float, T: int) -> None:
    if not 0.0 < delta < 1.0 / math.e:
        raise ValueError("delta must lie in (0, 1/e)")
    if T < 4:
        raise ValueError("horizon must be at least 4")


def freedman_threshold(sigma_t, b: float, delta: float, T: int,
                       log_base: Optional[float] = None):
    """Deviation level ``2 max(2 sigma_t, b sqrt(L)) sqrt(L)`` with ``L = log(1/delta)``.

    ``sigma_t`` is the square root of the accumulated conditional variance and
    may be an array.
    """
    _check_delta_T(delta, T)
    if b <= 0:
        raise ValueError("b must be positive")
    if np.any(np.asarray(sigma_t) < 0):
        raise ValueError("sigma_t must be nonnegative")
    root = math.sqrt(_log(1.0 / delta, log_base))
    out = 2.0 * np.maximum(2.0 * np.asarray(sigma_t, dtype=float), b * root) * root
    return float(out) if out.ndim == 0 else out


def freedman_failure_probability(T: int, delta: float, log_base: Optional[float] = None) -> float:
    return float(_log(T, log_base)) * delta


def rademacher_generator(b: float) -> Callable:
    """Differences ``+-b/2`` with probability one half each (conditional variance ``b**2/4``)."""

    def generate(rng, n_paths, T):
        signs = np.where(rng.random((n_paths, T)) < 0.5, -1.0, 1.0)
        return signs * (b / 2.0), np.full((n_paths, T), b * b / 4.0)

    return generate


def zero_generator(rng, n_paths, T):
    z = np.zeros((n_paths, T))
    return z, z


def freedman_violation_rate(paths: int, T: int, b: float, delta: float, generator: Callable,
                            seed: int = 0, log_base: Optional[float] = None) -> float:
    """Fraction of paths whose partial sum crosses the threshold at some ``t <= T``.

    ``generator(rng, n_paths, T)`` returns the differences and their
    conditional variances, both shaped ``(n_paths, T)``.
    """
    zeta, cond_var = generator(make_rng(seed, stream=11), paths, T)
    if np.any(np.abs(zeta) > b + 1e-12):
        raise ValueError("generator produced a difference larger than b")
    sums = np.cumsum(zeta, axis=1)
    thresholds = freedman_threshold(np.sqrt(np.cumsum(cond_var, axis=1)), b, delta, T, log_base)
    return float(np.mean(np.any(sums >= thresholds, axis=1)))


@dataclass
class BoundInputs:
    G: float
    mu_y: float
    delta: float
    T: int
    sigma_sq_trace: Sequence[float]
    log_base: Optional[float] = None

    def __post_init__(self):
        _check_delta_T(self.delta, self.T)
        if self.G <= 0:
            raise ValueError("G must be positive")

    @property
    def L(self) -> float:
        return float(_log(_log(self.T, self.log_base) / self.delta, self.log_base))


def theorem1_envelope(inputs: BoundInputs, t: int) -> float:
    """Anytime bound on ``|w_{t+1} - mu_y|`` after ``t`` rounds.

    At ``t = 0`` nothing has been summed, so the bound is the burn-in term ``|mu_y|``.
    """
    if not 0 <= t <= inputs.T:
        raise ValueError("t must lie in [0, T]")
    if len(inputs.sigma_sq_trace) < t:
        raise ValueError("variance trace shorter than t")
    if t == 0:
        return abs(inputs.mu_y)
    return float(envelope_curve(inputs)[t - 1])


def envelope_curve(inputs: BoundInputs) -> np.ndarray:
    """Envelope for ``t = 1..len(sigma_sq_trace)``."""
    sig = np.asarray(inputs.sigma_sq_trace, dtype=float)
    S = np.cumsum(sig)
    t = np.arange(1, len(sig) + 1)
    rootL = math.sqrt(inputs.L)
    mu = abs(inputs.mu_y)
    mart = 2.0 * np.maximum(2.0 * np.sqrt(S), (inputs.G + mu) * rootL) * rootL
    return mart / inputs.T + (1.0 - t / inputs.T) * mu


def variance_decomposition_check(joint: Sequence[Tuple[float, float, float]], p: float):
    """Both sides of the conditional-variance decomposition for a finite joint law.

    ``joint`` holds ``(f, y, probability)`` atoms. The left side is
    ``E[(g - mu)^2]`` by enumerating every ``(f, y, xi)`` outcome; the right side
    is ``E[f^2] + E[(y - f)^2]/p + 2 E[f (y - f)] - mu^2``.
    """
    if not joint:
        raise ValueError("joint distribution has empty support")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    mu = math.fsum(prob * y for _, y, prob in joint)
    lhs_terms = []
    for f, y, prob in joint:
        lhs_terms.append(prob * p * (f + (y - f) / p - mu) ** 2)
        lhs_terms.append(prob * (1.0 - p) * (f - mu) ** 2)
    lhs = math.fsum(lhs_terms)
    e_f2 = math.fsum(prob * f * f for f, _, prob in joint)
    e_r2 = math.fsum(prob * (y - f) ** 2 for f, y, prob in joint)
    e_fr = math.fsum(prob * f * (y - f) for f, y, prob in joint)
    rhs = math.fsum([e_f2, e_r2 / p, 2.0 * e_fr, -mu * mu])
    return lhs, rhs


def residual_term_two_ways(f, q, p: float, weights=None):
    """``E[(y - f)^2 xi / p^2]`` by enumerating ``(x, y, xi)`` versus ``E[(y - f)^2] / p``.

    Binary labels with ``P(y=1 | x) = q``; ``weights`` is the covariate law
    (uniform if omitted).
    """
    f = np.asarray(f, dtype=float)
    q = np.asarray(q, dtype=float)
    w = np.full(len(f), 1.0 / len(f)) if weights is None else np.asarray(weights, dtype=float)
    enum = 0.0
    for y, py in ((1.0, q), (0.0, 1.0 - q)):
        for xi, pxi in ((1.0, p), (0.0, 1.0 - p)):
            enum += float(np.sum(w * py * pxi * (y - f) ** 2 * xi / p ** 2))
    closed = float(np.sum(w * (q * (1.0 - f) ** 2 + (1.0 - q) * f ** 2))) / p
    return enum, closed


@dataclass
class TheoremTwoInputs:
    c0: float
    c1: float
    B: float
    beta: float
    tau: float
    sigma_star_sq: float
    R_pstar: float
    R_min: float
    t: int
    T: int

    def __post_init__(self):
        if self.c0 <= 0 or self.c1 <= 0 or self.B <= 0 or self.beta <= 0:
            raise ValueError("c0, c1, B and beta must be positive")
        if self.c0 * self.c1 < 1.0 - 1e-12:
            raise ValueError("c0 * c1 must be at least 1")


def psi_bound(inputs: TheoremTwoInputs) -> float:
    """Upper bound on the accumulated conditional variance under FTRL with the theoretical step size."""
    s = inputs
    ratio = s.B / s.beta ** 2
    rootT = math.sqrt(s.T)
    return (s.c0 * s.c1 * s.sigma_star_sq
            + 2.0 * s.c0 * (s.t / rootT) * ratio
            + s.c0 * (s.R_pstar - s.R_min) * rootT * ratio)


@dataclass
class ExactRun:
    """One simulated trajectory with its exact conditional moments per round."""

    mu: float
    T: int
    G: float
    beta: float
    tau: float
    gamma: float
    phi_cap: float
    w: np.ndarray          # w_{t+1}, t = 1..T
    sigma_sq: np.ndarray   # E[(g_t - mu)^2 | past]
    resid_sq: np.ndarray   # E[(y_t - f_t(x_t))^2 | past]
    base_var: np.ndarray   # E[f^2] + 2 E[f (y - f)] - mu^2 given the past
    phi: np.ndarray        # oracle at the realized covariate
    p: np.ndarray
    two_way_gap: float     # max gap of residual_term_two_ways over the run

    def envelope(self, delta: float, log_base: Optional[float] = None) -> np.ndarray:
        return envelope_curve(BoundInputs(self.G, self.mu, delta, self.T, self.sigma_sq, log_base))

    def envelope_holds(self, delta: float, log_base: Optional[float] = None) -> bool:
        return bool(np.all(np.abs(self.w - self.mu) <= self.envelope(delta, log_base)))

    def oracle_ratios(self) -> Tuple[float, float]:
        """Smallest ``c0, c1`` with ``phi/c1 <= E[(y-f)^2 | past] <= c0 phi`` over the run."""
        r = self.resid_sq / self.phi
        return float(np.max(r)), float(np.max(1.0 / r))

    def psi_curve(self) -> np.ndarray:
        """Variance bound for ``t = 1..T`` with the comparator set to ``tau``."""
        c0, c1 = self.oracle_ratios()
        star = np.cumsum(self.base_var + self.resid_sq / self.tau)
        t = np.arange(1, self.T + 1)
        r_gap = 0.5 * self.tau ** 2 - 0.5 * self.beta ** 2
        ratio = self.phi_cap / self.beta ** 2
        rootT = math.sqrt(self.T)
        return c0 * c1 * star + 2.0 * c0 * (t / rootT) * ratio + c0 * r_gap * rootT * ratio


def _exact_moments(f, q, p, mu):
    """Conditional second moment of ``g - mu`` by enumeration, plus the pieces of its decomposition."""
    sq = 0.0
    for y, py in ((1.0, q), (0.0, 1.0 - q)):
        queried = f + (y - f) / p - mu
        skipped = f - mu
        sq = sq + py * (p * queried ** 2 + (1.0 - p) * skipped ** 2)
    resid = q * (1.0 - f) ** 2 + (1.0 - q) * f ** 2
    base = f * f + 2.0 * f * (q - f)
    return float(np.mean(sq)), float(np.mean(resid)), float(np.mean(base)) - mu * mu


def simulate_exact_run(pool_x, pool_q, T: int, T_b: float, seed: int, *,
                       policy: str = "ftrl", refit_count: int = 10,
                       gamma_mode: str = "practical", beta_frac: float = 1 / 8,
                       phi_cap: float = 4.0) -> ExactRun:
    """Run the full protocol on covariates drawn uniformly from a finite pool.

    Labels are Bernoulli(``pool_q[k]``) for the drawn atom ``k``. ``policy``
    is ``"ftrl"`` or ``"uniform"`` (rate ``T_b/T``, models still refit).
    """
    pool_x = np.asarray(pool_x, dtype=float)
    pool_q = np.asarray(pool_q, dtype=float)
    K, d = pool_x.shape
    mu = float(np.mean(pool_q))
    batch = round(T_b / refit_count)
    if batch < 1:
        raise ValueError("budget too small for the requested number of refits")
    hp = ftrl_hyperparameters(T, T_b, beta_frac=beta_frac, gamma_mode=gamma_mode, phi_bound=phi_cap)
    if policy == "ftrl":
        pol = FtrlPolicy(FtrlState(gamma=hp["gamma"], beta=hp["beta"], tau=hp["tau"]))
        p_min = hp["beta"]
    elif policy == "uniform":
        pol = UniformPolicy(T, T_b)
        p_min = T_b / T
    else:
        raise ValueError(f"exact simulation supports ftrl or uniform, not {policy!r}")

    rng = make_rng(seed, stream=3)
    ks = rng.integers(K, size=T)
    ys = (rng.random(T) < pool_q[ks]).astype(float)
    coins = rng.random(T)
    bundle = ModelBundle(d, LOGISTIC, batch_size=batch, phi_cap=phi_cap, seed=seed)
    est = EstimatorState(T)

    w = np.empty(T)
    sigma_sq = np.empty(T)
    resid_sq = np.empty(T)
    base_var = np.empty(T)
    phis = np.empty(T)
    ps = np.empty(T)
    gap = 0.0

    def refresh():
        f = bundle.predict(pool_x)
        return f, bundle.predict_phi(pool_x)

    f_pool, phi_pool = refresh()
    cache_key = None
    for t in range(T):
        k = ks[t]
        p = pol.probability(t + 1, est.labels_used, 0.0)
        key = (bundle.n_refits, p)
        if key != cache_key:
            moments = _exact_moments(f_pool, pool_q, p, mu)
            enum, closed = residual_term_two_ways(f_pool, pool_q, p)
            gap = max(gap, abs(enum - closed))
            cache_key = key
        sigma_sq[t], resid_sq[t], base_var[t] = moments
        ps[t] = p
        phis[t] = phi_pool[k]
        xi = coins[t] < p
        pol.observe(phi_pool[k], 0.0)
        est.step(f_pool[k], ys[t] if xi else None, int(xi), p)
        w[t] = est.w
        if xi and bundle.absorb_labeled(pool_x[k], ys[t]):
            f_pool, phi_pool = refresh()

    return ExactRun(mu=mu, T=T, G=1.0 / p_min, beta=hp["beta"], tau=hp["tau"], gamma=hp["gamma"],
                    phi_cap=phi_cap, w=w, sigma_sq=sigma_sq, resid_sq=resid_sq, base_var=base_var,
                    phi=phis, p=ps, two_way_gap=gap)
