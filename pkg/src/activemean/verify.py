"""Simulation checks behind the ``verify-bounds`` subcommand.

Each check returns a plain dict with ``name``, ``passed`` and the measured
quantities next to the threshold they were compared against, so the report
serializes directly to JSON.
"""
from __future__ import annotations

import math
import time
from typing import Callable, Dict, List

import numpy as np

from .bounds import (freedman_failure_probability, freedman_violation_rate, rademacher_generator,
                     simulate_exact_run, variance_decomposition_check)
from .data import make_rng, sigmoid
from .estimator import EstimatorState, unbiasedness_check
from .policy import FtrlPolicy, FtrlState, ftrl_hyperparameters, regret_prefixes

CHECK_PS = (0.1, 0.3, 0.5, 1.0)


def _random_dist(rng, n_atoms: int):
    vals = rng.normal(size=n_atoms)
    probs = rng.dirichlet(np.ones(n_atoms))
    return list(zip(vals.tolist(), probs.tolist()))


def check_unbiasedness(n_dists: int = 100, mc_trials: int = 500, T: int = 200,
                       seed: int = 0) -> dict:
    """Exact enumeration of E[g] on random laws, then a Monte-Carlo mean of final estimates."""
    rng = make_rng(seed, stream=21)
    worst = 0.0
    for _ in range(n_dists):
        dist = _random_dist(rng, int(rng.integers(1, 6)))
        mean = math.fsum(v * q for v, q in dist)
        f_x = float(rng.normal())
        for p in CHECK_PS:
            worst = max(worst, abs(unbiasedness_check(f_x, dist, p) - mean))

    q, f, p = 0.3, 0.6, 0.25
    mc = make_rng(seed, stream=22)
    finals = np.empty(mc_trials)
    for i in range(mc_trials):
        ys = (mc.random(T) < q).astype(float)
        xis = mc.random(T) < p
        est = EstimatorState(T, keep_trace=False)
        for y, xi in zip(ys.tolist(), xis.tolist()):
            est.step(f, y if xi else None, int(xi), p)
        finals[i] = est.w
    se = float(np.std(finals, ddof=1) / math.sqrt(mc_trials))
    z = abs(float(np.mean(finals)) - q) / se
    return {"name": "unbiasedness", "passed": bool(worst <= 1e-12 and z <= 3.0),
            "max_enumeration_error": worst, "enumeration_tolerance": 1e-12,
            "mc_mean": float(np.mean(finals)), "mc_target": q, "mc_z": z, "mc_z_limit": 3.0}


def decomposition_cases(n_random: int = 96, seed: int = 0):
    """Random joint laws of (f, y) plus hand-picked degenerate ones."""
    rng = make_rng(seed, stream=23)
    cases = []
    for _ in range(n_random):
        n = int(rng.integers(1, 7))
        fs = rng.normal(size=n)
        ys = rng.normal(size=n)
        probs = rng.dirichlet(np.ones(n))
        cases.append(list(zip(fs.tolist(), ys.tolist(), probs.tolist())))
    cases.append([(0.0, 0.0, 0.5), (1.0, 1.0, 0.5)])            # perfect predictor
    cases.append([(2.0, 2.0, 1.0)])                            # point mass
    cases.append([(0.5, 0.0, 0.3), (0.5, 1.0, 0.7)])           # constant predictor
    cases.append([(y, y, q) for y, q in zip((-1.0, 0.0, 3.0), (0.2, 0.5, 0.3))])
    return cases


def check_decomposition(ps=(0.05, 0.3, 1.0), seed: int = 0) -> dict:
    worst = 0.0
    n = 0
    for joint in decomposition_cases(seed=seed):
        for p in ps:
            lhs, rhs = variance_decomposition_check(joint, p)
            worst = max(worst, abs(lhs - rhs))
            n += 1
    return {"name": "variance_decomposition", "passed": bool(worst <= 1e-10), "cases": n,
            "max_abs_gap": worst, "tolerance": 1e-10}


def check_freedman(paths: int = 1000, T: int = 64, delta: float = 0.02, b: float = 1.0,
                   seed: int = 0) -> dict:
    start = time.perf_counter()
    rate = freedman_violation_rate(paths, T, b, delta, rademacher_generator(b), seed=seed)
    limit = freedman_failure_probability(T, delta)
    return {"name": "freedman", "passed": bool(rate <= limit), "violation_rate": rate,
            "limit": limit, "paths": paths, "runtime_s": time.perf_counter() - start}


def exact_pool(K: int = 64, d: int = 5, seed: int = 0):
    """Finite covariate pool with logistic label probabilities."""
    rng = make_rng(seed, stream=24)
    X = rng.standard_normal((K, d))
    w = rng.standard_normal(d) * math.sqrt(0.5)
    return X, sigmoid(X @ w)


def check_envelope(runs: int = 500, T: int = 400, delta: float = 0.05, seed: int = 0) -> dict:
    X, q = exact_pool(seed=seed)
    held = 0
    worst_ratio = 0.0
    for i in range(runs):
        run = simulate_exact_run(X, q, T, 0.2 * T, seed ^ (i + 1))
        env = run.envelope(delta)
        held += bool(np.all(np.abs(run.w - run.mu) <= env))
        worst_ratio = max(worst_ratio, float(np.max(np.abs(run.w - run.mu) / env)))
    frac = held / runs
    return {"name": "anytime_envelope", "passed": bool(frac >= 0.95), "fraction_dominated": frac,
            "required": 0.95, "runs": runs, "max_deviation_to_envelope": worst_ratio}


def check_regret(n_traces: int = 100, T: int = 500, B: float = 4.0, seed: int = 0) -> dict:
    """FTRL on random oracle sequences in [0, B]; regret against a comparator grid on every prefix."""
    rng = make_rng(seed, stream=25)
    hp = ftrl_hyperparameters(T, 0.2 * T)
    gamma, beta, tau = hp["gamma"], hp["beta"], hp["tau"]
    comparators = np.linspace(beta, tau, 9)
    grad_limit = B ** 2 / beta ** 4
    worst_slack = math.inf
    worst_grad = 0.0
    for i in range(n_traces):
        # mix of scales so that some traces stay below tau for a while
        scale = B * rng.random() ** 3
        phis = np.minimum(rng.random(T) * scale * (1 + (i % 3 == 0) * rng.random(T) * 4), B)
        pol = FtrlPolicy(FtrlState(gamma=gamma, beta=beta, tau=tau))
        ps = np.empty(T)
        for t in range(T):
            ps[t] = pol.probability(t + 1, 0, 0.0)
            pol.observe(float(phis[t]), 0.0)
        worst_grad = max(worst_grad, float(np.max((phis / ps ** 2) ** 2)))
        for p_star in comparators:
            reg, bound = regret_prefixes(phis, ps, p_star, gamma, beta, factor=2.0)
            worst_slack = min(worst_slack, float(np.min(bound - reg)))
    return {"name": "regret", "passed": bool(worst_slack >= 0.0 and worst_grad <= grad_limit),
            "min_bound_minus_regret": worst_slack, "max_sq_gradient": worst_grad,
            "sq_gradient_limit": grad_limit, "traces": n_traces}


def check_psi(runs: int = 20, T: int = 400, seed: int = 0) -> dict:
    """Accumulated conditional variance against the data-dependent bound (theoretical step size)."""
    X, q = exact_pool(seed=seed)
    worst = math.inf
    gap = 0.0
    for i in range(runs):
        run = simulate_exact_run(X, q, T, 0.2 * T, seed ^ (i + 1), gamma_mode="theoretical")
        worst = min(worst, float(np.min(run.psi_curve() - np.cumsum(run.sigma_sq))))
        gap = max(gap, run.two_way_gap)
    return {"name": "psi_bound", "passed": bool(worst >= 0.0 and gap <= 1e-10),
            "min_bound_minus_variance": worst, "max_two_way_gap": gap, "runs": runs}


def run_checks(quick: bool = False, seed: int = 0) -> Dict[str, object]:
    """Run every check; ``quick`` shrinks the simulation sizes for smoke testing."""
    checks: List[Callable[[], dict]]
    if quick:
        checks = [lambda: check_unbiasedness(20, 100, seed=seed),
                  lambda: check_decomposition(seed=seed),
                  lambda: check_freedman(200, seed=seed),
                  lambda: check_envelope(40, seed=seed),
                  lambda: check_regret(10, seed=seed),
                  lambda: check_psi(3, seed=seed)]
    else:
        checks = [lambda: check_unbiasedness(seed=seed), lambda: check_decomposition(seed=seed),
                  lambda: check_freedman(seed=seed), lambda: check_envelope(seed=seed),
                  lambda: check_regret(seed=seed), lambda: check_psi(seed=seed)]
    results = [c() for c in checks]
    return {"passed": all(r["passed"] for r in results), "seed": seed, "quick": quick,
            "checks": results}
