"""Trial runner, budget sweep, aggregation and CSV/JSON output."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .data import (MASK64, CsvSchema, Dataset, SyntheticConfig, generate_synthetic, load_csv,
                   make_rng, permute)
from .estimator import ConfidenceInterval, EstimatorState, confidence_interval
from .models import LINEAR, LOGISTIC, ModelBundle
from .policy import (FtrlPolicy, FtrlState, MixtureConfig, MixturePolicy, UniformPolicy,
                     ftrl_hyperparameters)

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "ACTIVEMEAN_OUTPUT_DIR"
RESULT_COLUMNS = ["policy", "T_b", "trial", "width", "covered", "labels_used", "center", "half_width"]
SUMMARY_COLUMNS = ["policy", "T_b", "mean_width", "coverage", "mean_labels"]


def default_budget_fractions() -> List[float]:
    return [float(v) for v in np.linspace(0.15, 0.40, 5)]


@dataclass(frozen=True)
class PolicySpec:
    """Parsed policy selector: ``uniform``, ``mixture:<lambda>``, ``ftrl[:<gamma_mode>[:<beta_frac>]]``."""

    kind: str
    lam: float = 0.5
    gamma_mode: str = "practical"
    beta_frac: float = 1 / 8

    @classmethod
    def parse(cls, text: str) -> "PolicySpec":
        parts = text.strip().split(":")
        kind = parts[0].lower()
        if kind == "uniform" and len(parts) == 1:
            return cls("uniform")
        if kind == "mixture" and len(parts) <= 2:
            lam = float(parts[1]) if len(parts) == 2 else 0.5
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"mixture lambda out of range in {text!r}")
            return cls("mixture", lam=lam)
        if kind == "ftrl" and len(parts) <= 3:
            mode = parts[1] if len(parts) >= 2 else "practical"
            if mode not in ("practical", "theoretical"):
                raise ValueError(f"unknown gamma mode in {text!r}")
            beta_frac = float(parts[2]) if len(parts) == 3 else 1 / 8
            return cls("ftrl", gamma_mode=mode, beta_frac=beta_frac)
        raise ValueError(f"cannot parse policy {text!r}")

    @property
    def id(self) -> str:
        if self.kind == "mixture":
            return f"mixture:{self.lam:g}"
        if self.kind == "ftrl":
            out = "ftrl"
            if self.gamma_mode != "practical" or self.beta_frac != 1 / 8:
                out += f":{self.gamma_mode}"
            if self.beta_frac != 1 / 8:
                out += f":{self.beta_frac:g}"
            return out
        return self.kind


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"
    T: int = 2000
    d: int = 10
    label_col: str = "y"
    feature_cols: Optional[List[str]] = None
    pred_col: Optional[str] = None
    task: str = "auto"
    policies: List[str] = field(default_factory=lambda: ["uniform", "mixture:0.5", "ftrl"])
    budget_fractions: List[float] = field(default_factory=default_budget_fractions)
    budgets: Optional[List[float]] = None
    trials: int = 50
    alpha: float = 0.1
    refit_count: int = 10
    base_seed: int = 0
    baseline_fixed_model: bool = True
    seed_set_min: int = 20
    phi_cap: Optional[float] = None
    trigger: bool = True
    mean_u_mode: str = "current"
    workers: int = 1

    def __post_init__(self):
        for frac in self.budget_fractions:
            if not 0.0 < frac <= 1.0:
                raise ValueError(f"budget fraction {frac} outside (0, 1]")
        if self.trials < 1 or self.refit_count < 1:
            raise ValueError("trials and refit_count must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.mean_u_mode not in ("current", "history"):
            raise ValueError(f"unknown mean_u_mode {self.mean_u_mode!r}")
        if self.task not in ("auto", LINEAR, LOGISTIC):
            raise ValueError(f"unknown task {self.task!r}")
        for p in self.policies:
            PolicySpec.parse(p)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def load_dataset(self) -> Dataset:
        if self.dataset == "synthetic":
            return generate_synthetic(SyntheticConfig(T=self.T, d=self.d, seed=self.base_seed))
        if not self.feature_cols:
            raise ValueError("CSV datasets need feature_cols")
        return load_csv(self.dataset, CsvSchema(self.label_col, self.feature_cols, self.pred_col))

    def budget_values(self, T: int) -> List[float]:
        if self.budgets:
            return [float(b) for b in self.budgets]
        return [frac * T for frac in self.budget_fractions]


@dataclass
class TrialResult:
    policy: str
    T_b: float
    trial: int
    interval: ConfidenceInterval
    covered: bool
    labels_used: int
    p_trace: np.ndarray
    runtime_ms: int = 0
    seed: int = 0
    seed_labels: int = 0
    pool_labels: int = 0

    @property
    def width(self) -> float:
        return self.interval.width

    def row(self) -> dict:
        return {"policy": self.policy, "T_b": self.T_b, "trial": self.trial, "width": self.width,
                "covered": self.covered, "labels_used": self.labels_used,
                "center": self.interval.center, "half_width": self.interval.half_width}


def stable_trial_seed(base_seed: int, policy_id: str, T_b: float, trial: int) -> int:
    digest = hashlib.blake2b(f"{policy_id}|{T_b!r}|{trial}".encode(), digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(digest, "little")) & MASK64


def batch_size_for(T_b: float, refit_count: int) -> int:
    # Python's round() is round-half-to-even.
    return int(round(T_b / refit_count))


def _task_for(cfg: ExperimentConfig, ds: Dataset) -> str:
    if cfg.task != "auto":
        return cfg.task
    return LOGISTIC if ds.is_binary else LINEAR


def _phi_cap_for(cfg: ExperimentConfig, ds: Dataset) -> float:
    if cfg.phi_cap is not None:
        return float(cfg.phi_cap)
    # label range treated as known a priori
    return 4.0 * max(float(np.max(ds.labels ** 2)), 1e-12)


def run_trial(cfg: ExperimentConfig, policy, T_b: float, trial_index: int,
              dataset: Optional[Dataset] = None) -> TrialResult:
    """One pass of the active sequential estimation protocol over a permuted stream."""
    spec = policy if isinstance(policy, PolicySpec) else PolicySpec.parse(policy)
    start = time.perf_counter()
    ds = dataset if dataset is not None else cfg.load_dataset()
    T = ds.T
    if not 0 < T_b <= T:
        raise ValueError(f"budget {T_b} outside (0, {T}]")
    batch = batch_size_for(T_b, cfg.refit_count)
    if batch < 1:
        raise ValueError(f"budget {T_b} too small for {cfg.refit_count} refits (batch size 0)")

    seed = stable_trial_seed(cfg.base_seed, spec.id, T_b, trial_index)
    data = permute(ds, seed)
    X = data.design_matrix()
    y = data.labels
    task = _task_for(cfg, ds)
    phi_cap = _phi_cap_for(cfg, ds)
    bundle = ModelBundle(X.shape[1], task, batch_size=batch, phi_cap=phi_cap, seed=seed)
    coins = make_rng(seed, stream=1).random(T).tolist()

    fixed = spec.kind == "uniform" and cfg.baseline_fixed_model
    seed_labels = 0
    if fixed:
        seed_labels = min(max(cfg.seed_set_min, batch), int(T_b))
        bundle.fit_initial(X[:seed_labels], y[:seed_labels])
        pol = UniformPolicy(T, T_b, rate=max(T_b - seed_labels, 0.0) / T)
        if pol.rate <= 0:
            raise ValueError("seed set exhausts the budget of the fixed-model baseline")
    elif spec.kind == "uniform":
        pol = UniformPolicy(T, T_b)
    elif spec.kind == "mixture":
        pol = MixturePolicy(MixtureConfig(lam=spec.lam, T_b=T_b, T=T, trigger=cfg.trigger),
                            u0=bundle.u0)
    else:
        hp = ftrl_hyperparameters(T, T_b, beta_frac=spec.beta_frac, gamma_mode=spec.gamma_mode,
                                  phi_bound=phi_cap)
        pol = FtrlPolicy(FtrlState(**hp))

    # "current": E[u] is the current uncertainty model averaged over the covariates
    # seen so far; "history": running mean of the u values used in past rounds.
    current_mean_u = spec.kind == "mixture" and cfg.mean_u_mode == "current"

    def predictions():
        f = bundle.predict(X)
        u = bundle.predict_uncertainty(X, f)
        u_prefix = np.concatenate([[0.0], np.cumsum(u)]).tolist() if current_mean_u else None
        return f.tolist(), u.tolist(), bundle.predict_phi(X).tolist(), u_prefix

    f_all, u_all, phi_all, u_prefix = predictions()
    est = EstimatorState(T)
    y_list = y.tolist()
    p_trace = [0.0] * T
    labels_used = 0
    mean_u = None
    for t in range(T):
        if current_mean_u:
            mean_u = u_prefix[t] / t if t else bundle.u0
        p = pol.probability(t + 1, labels_used, u_all[t], mean_u)
        p_trace[t] = p
        xi = coins[t] < p
        # p is committed before this round's oracle value reaches the policy
        pol.observe(phi_all[t], u_all[t])
        est.step(f_all[t], y_list[t] if xi else None, 1 if xi else 0, p)
        if xi:
            labels_used += 1
            if not fixed and bundle.absorb_labeled(X[t], y_list[t]):
                f_all, u_all, phi_all, u_prefix = predictions()

    ci = confidence_interval(est, cfg.alpha)
    return TrialResult(policy=spec.id, T_b=float(T_b), trial=trial_index, interval=ci,
                       covered=ci.contains(ds.true_mean), labels_used=est.labels_used,
                       p_trace=np.asarray(p_trace), seed=seed, seed_labels=seed_labels,
                       pool_labels=bundle.n_labeled,
                       runtime_ms=int(round(1000 * (time.perf_counter() - start))))


def _run_job(args):
    cfg, spec, T_b, trial, ds = args
    return run_trial(cfg, spec, T_b, trial, ds)


def run_experiment(cfg: ExperimentConfig, dataset: Optional[Dataset] = None) -> List[TrialResult]:
    """Every policy x budget x trial, returned sorted by (policy, T_b, trial)."""
    ds = dataset if dataset is not None else cfg.load_dataset()
    specs = [PolicySpec.parse(p) for p in cfg.policies]
    jobs = [(cfg, spec, T_b, trial, ds)
            for spec in specs for T_b in cfg.budget_values(ds.T) for trial in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=8))
    else:
        results = [_run_job(job) for job in jobs]
    results.sort(key=lambda r: (r.policy, r.T_b, r.trial))
    return results


def aggregate(results: Sequence[TrialResult]) -> List[dict]:
    """Mean width, coverage fraction and mean label count per (policy, T_b)."""
    if not results:
        raise ValueError("nothing to aggregate")
    groups: dict = {}
    for r in results:
        groups.setdefault((r.policy, r.T_b), []).append(r)
    rows = []
    for (policy, T_b), rs in sorted(groups.items()):
        rows.append({
            "policy": policy,
            "T_b": T_b,
            "mean_width": math.fsum(r.width for r in rs) / len(rs),
            "coverage": sum(bool(r.covered) for r in rs) / len(rs),
            "mean_labels": math.fsum(r.labels_used for r in rs) / len(rs),
        })
    return rows


def interpolate(summary: Sequence[dict], policy: str, T_b, column: str = "mean_width"):
    """Linear interpolation of a summary column along the budget axis."""
    pts = sorted((row["T_b"], row[column]) for row in summary if row["policy"] == policy)
    if not pts:
        raise KeyError(policy)
    xs, ys = zip(*pts)
    return np.interp(T_b, xs, ys)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path, columns, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_results_csv(results: Sequence[TrialResult], path) -> None:
    _write_rows(path, RESULT_COLUMNS, [r.row() for r in results])


def write_summary_csv(summary: Sequence[dict], path) -> None:
    _write_rows(path, SUMMARY_COLUMNS, summary)


def read_results_csv(path) -> List[dict]:
    """Parse a results CSV back into typed row dicts."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{
            "policy": rec["policy"], "T_b": float(rec["T_b"]), "trial": int(rec["trial"]),
            "width": float(rec["width"]), "covered": rec["covered"] == "1",
            "labels_used": int(rec["labels_used"]), "center": float(rec["center"]),
            "half_width": float(rec["half_width"]),
        } for rec in reader]


def results_from_rows(rows: Sequence[dict], alpha: float = float("nan")) -> List[TrialResult]:
    return [TrialResult(policy=r["policy"], T_b=r["T_b"], trial=r["trial"],
                        interval=ConfidenceInterval(r["center"], r["half_width"], alpha),
                        covered=r["covered"], labels_used=r["labels_used"], p_trace=np.empty(0))
            for r in rows]


def write_json(results: Sequence[TrialResult], summary: Sequence[dict], path,
               cfg: Optional[ExperimentConfig] = None) -> None:
    payload = {
        "config": cfg.to_dict() if cfg is not None else None,
        "base_seed": cfg.base_seed if cfg is not None else None,
        "interpolation": "linear in T_b between grid points",
        "results": [dict(r.row(), seed=r.seed) for r in results],
        "summary": list(summary),
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def summary_path_for(path) -> str:
    root, ext = os.path.splitext(os.fspath(path))
    return f"{root}.summary{ext or '.csv'}"


def emit(results: Sequence[TrialResult], summary: Sequence[dict], fmt: str, path,
         cfg: Optional[ExperimentConfig] = None) -> List[str]:
    """Write results in ``csv`` (results + sibling ``.summary.csv``) or ``json``; returns paths written."""
    if fmt == "csv":
        write_results_csv(results, path)
        spath = summary_path_for(path)
        write_summary_csv(summary, spath)
        return [os.fspath(path), spath]
    if fmt == "json":
        write_json(results, summary, path, cfg)
        return [os.fspath(path)]
    raise ValueError(f"unknown format {fmt!r}")


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "results")
