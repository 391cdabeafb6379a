"""Datasets: the logistic synthetic generator, CSV ingestion and seeded permutations.

Randomness
----------
Every random stream in the package comes from :func:`make_rng`, a numpy
``Generator`` driven by the Philox-4x64 counter-based bit generator. The
64-bit seed is the Philox key; independent sub-streams of one seed are
obtained by placing the stream index in the highest counter word, so two
streams never overlap within 2**192 draws. Normal variates use numpy's
ziggurat transform on top of that bit stream, which is deterministic for a
fixed numpy release.

Per-trial seeds are derived as ``base_seed ^ trial_index`` (:func:`trial_seed`).
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by ``seed``; ``stream`` selects a disjoint sub-stream."""
    counter = [0, 0, 0, int(stream) & MASK64]
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64, counter=counter))


def trial_seed(base_seed: int, trial_index: int) -> int:
    return (int(base_seed) ^ int(trial_index)) & MASK64


def sigmoid(z):
    out = expit(np.asarray(z, dtype=float))
    return out if out.ndim else float(out)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Covariates, labels and optional black-box predictions for one stream.

    ``true_mean`` is the full-sample label mean; it is only used to score
    interval coverage.
    """

    features: np.ndarray
    labels: np.ndarray
    predictions: Optional[np.ndarray] = None
    true_mean: float = field(default=float("nan"))

    def __post_init__(self):
        features = _frozen(self.features)
        if features.ndim == 1:
            features = _frozen(features.reshape(-1, 1))
        labels = _frozen(self.labels).reshape(-1)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if features.shape[0] != labels.shape[0]:
            raise ValueError(
                f"features have {features.shape[0]} rows but labels have {labels.shape[0]}"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        if self.predictions is not None:
            preds = _frozen(self.predictions).reshape(-1)
            if preds.shape[0] != labels.shape[0]:
                raise ValueError("predictions length must equal the number of rows")
            object.__setattr__(self, "predictions", preds)
        if np.isnan(self.true_mean) and labels.size:
            object.__setattr__(self, "true_mean", float(np.mean(labels)))

    @property
    def T(self) -> int:
        return int(self.labels.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.labels == 0.0) | (self.labels == 1.0)))

    def design_matrix(self) -> np.ndarray:
        """Model inputs: the features, plus the prediction column when present."""
        if self.predictions is None:
            return np.asarray(self.features)
        return np.column_stack([self.features, self.predictions])


@dataclass(frozen=True)
class SyntheticConfig:
    T: int
    d: int = 10
    weight_variance: float = 0.5
    noise_variance: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if int(self.T) < 1 or int(self.d) < 1:
            raise ValueError("T and d must be positive integers")
        if self.weight_variance < 0 or self.noise_variance < 0:
            raise ValueError("variances must be nonnegative")


def synthetic_logits(cfg: SyntheticConfig):
    """Draw covariates, the true weight vector and noisy logits.

    Returns ``(X, w_star, logits, uniforms)``; labels are ``uniforms < sigmoid(logits)``.
    """
    rng = make_rng(cfg.seed)
    X = rng.standard_normal((cfg.T, cfg.d))
    w_star = rng.standard_normal(cfg.d) * np.sqrt(cfg.weight_variance)
    eps = rng.standard_normal(cfg.T) * np.sqrt(cfg.noise_variance)
    uniforms = rng.random(cfg.T)
    return X, w_star, X @ w_star + eps, uniforms


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    X, _, logits, uniforms = synthetic_logits(cfg)
    y = (uniforms < sigmoid(logits)).astype(float)
    return Dataset(features=X, labels=y, true_mean=float(np.mean(y)))


@dataclass(frozen=True)
class CsvSchema:
    label_col: str
    feature_cols: Sequence[str]
    pred_col: Optional[str] = None

    def __post_init__(self):
        if not self.feature_cols:
            raise ValueError("schema needs at least one feature column")
        object.__setattr__(self, "feature_cols", tuple(self.feature_cols))


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a headed UTF-8 CSV into a :class:`Dataset`.

    Data rows are numbered from 1 (the header is not counted) in error messages.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such dataset file: {path}")
    cols = list(schema.feature_cols) + [schema.label_col]
    if schema.pred_col is not None:
        cols.append(schema.pred_col)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty dataset (no header row)")
        missing = [c for c in cols if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for i, rec in enumerate(reader, start=1):
            try:
                rows.append([float(rec[c]) for c in cols])
            except (TypeError, ValueError):
                bad = [c for c in cols if not _is_number(rec.get(c))]
                raise ValueError(f"{path}: malformed row {i}: non-numeric value in {bad}") from None
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    arr = np.asarray(rows, dtype=float)
    k = len(schema.feature_cols)
    preds = arr[:, k + 1] if schema.pred_col is not None else None
    return Dataset(features=arr[:, :k], labels=arr[:, k], predictions=preds,
                   true_mean=float(np.mean(arr[:, k])))


def _is_number(s) -> bool:
    try:
        float(s)
    except (TypeError, ValueError):
        return False
    return True


def write_csv(ds: Dataset, path) -> None:
    """Write a dataset in the layout :func:`load_csv` reads (``x0..x{d-1},[pred,]y``)."""
    names = [f"x{j}" for j in range(ds.d)]
    header = names + (["pred"] if ds.predictions is not None else []) + ["y"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(ds.T):
            row = [repr(float(v)) for v in ds.features[t]]
            if ds.predictions is not None:
                row.append(repr(float(ds.predictions[t])))
            row.append(repr(float(ds.labels[t])))
            w.writerow(row)


def permute(ds: Dataset, seed: int) -> Dataset:
    perm = make_rng(seed).permutation(ds.T)
    preds = None if ds.predictions is None else ds.predictions[perm]
    return Dataset(features=ds.features[perm], labels=ds.labels[perm],
                   predictions=preds, true_mean=ds.true_mean)
