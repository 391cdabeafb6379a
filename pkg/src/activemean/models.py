"""Prediction model, uncertainty predictor and squared-residual oracle.

The three learners are refit together on disjoint pools of queried samples
every ``batch_size`` labels (see :meth:`ModelBundle.absorb_labeled`).
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from scipy.special import expit

from .data import make_rng, sigmoid

logger = logging.getLogger(__name__)

LINEAR = "linear"
LOGISTIC = "logistic"

# nearest doubles inside (0, 1); sigmoid saturates to exactly 0 or 1 for large logits
_P_LO = float(np.finfo(float).tiny)
_P_HI = 1.0 - float(np.finfo(float).epsneg)


class LinearRegression:
    """Least squares with a small ridge on the slopes (the intercept is not penalized)."""

    def __init__(self, d: int, ridge: float = 1e-6, cold_start: float = 0.0):
        self.d = d
        self.ridge = ridge
        self.coef = np.zeros(d)
        self.intercept = float(cold_start)
        self.n_fit = 0

    def fit(self, X, y) -> bool:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        x_bar = X.mean(axis=0)
        y_bar = float(y.mean())
        Xc = X - x_bar
        A = Xc.T @ Xc + self.ridge * np.eye(self.d)
        try:
            coef = np.linalg.solve(A, Xc.T @ (y - y_bar))
        except np.linalg.LinAlgError:
            logger.warning("singular design in linear refit; keeping previous state")
            return False
        if not np.all(np.isfinite(coef)):
            return False
        self.coef = coef
        self.intercept = y_bar - float(x_bar @ coef)
        self.n_fit = len(y)
        return True

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


class LogisticRegression:
    """Binary logistic regression fit by full-batch gradient descent from zero weights.

    The fixed iteration budget doubles as early stopping on small pools.
    """

    def __init__(self, d: int, lr: float = 0.1, n_iter: int = 200, tol: float = 1e-8):
        self.d = d
        self.lr = lr
        self.n_iter = n_iter
        self.tol = tol
        self.coef = np.zeros(d)
        self.intercept = 0.0
        self.n_fit = 0

    def fit(self, X, y) -> bool:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        Xa = np.column_stack([X, np.ones(n)])
        w = np.zeros(self.d + 1)
        step = self.lr / n
        stop = (self.tol * n) ** 2
        for _ in range(self.n_iter):
            grad = Xa.T @ (expit(Xa @ w) - y)
            w -= step * grad
            if grad @ grad < stop:
                break
        if not np.all(np.isfinite(w)):
            logger.warning("logistic refit diverged; keeping previous state")
            return False
        self.coef, self.intercept = w[:-1].copy(), float(w[-1])
        self.n_fit = n
        return True

    def predict(self, X):
        z = np.asarray(X, dtype=float) @ self.coef + self.intercept
        return np.clip(sigmoid(z), _P_LO, _P_HI)


class ModelBundle:
    """Predictor ``f``, uncertainty predictor ``u`` and oracle ``phi`` for one trial.

    Parameters
    ----------
    d : int
        Input dimension.
    task : {"logistic", "linear"}
        Logistic tasks use ``u = 2 min(f, 1 - f)`` and need labels in {0, 1};
        linear tasks learn ``u`` by regressing ``|f(x) - y|`` on ``x``.
    batch_size : int
        Number of queried labels between refits.
    eps_u : float
        Floor applied to ``u`` and ``phi``.
    phi_cap : float
        Upper clamp on ``phi`` (the oracle bound used by the regret analysis).
    u0, phi0 : float
        Outputs of the uncertainty predictor and oracle before their first fit.
    """

    def __init__(self, d: int, task: str = LOGISTIC, batch_size: int = 1, *,
                 ridge: float = 1e-6, lr: float = 0.1, n_iter: int = 200,
                 eps_u: float = 1e-6, u0: float = 1.0, phi0: float = 1.0,
                 phi_cap: float = 4.0, seed: int = 0):
        if task not in (LINEAR, LOGISTIC):
            raise ValueError(f"unknown task kind {task!r}")
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0 < eps_u <= phi_cap:
            raise ValueError("need 0 < eps_u <= phi_cap")
        self.d = d
        self.task = task
        self.batch_size = int(batch_size)
        self.eps_u = eps_u
        self.u0 = u0
        self.phi0 = phi0
        self.phi_cap = phi_cap
        if task == LOGISTIC:
            self.predictor = LogisticRegression(d, lr=lr, n_iter=n_iter)
        else:
            self.predictor = LinearRegression(d, ridge=ridge)
        self.uncertainty = LinearRegression(d, ridge=ridge, cold_start=u0) if task == LINEAR else None
        self.phi_oracle = LinearRegression(d, ridge=ridge, cold_start=phi0)
        self.train_pool: list = []
        self.uncertainty_pool: list = []
        self.tmp_pool: list = []
        self.b = 0
        self.n_refits = 0
        self._rng = make_rng(seed, stream=7)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected {self.d} features, got {x.shape[-1]}")
        return x

    @property
    def n_labeled(self) -> int:
        return len(self.train_pool) + len(self.uncertainty_pool) + len(self.tmp_pool)

    def predict(self, x):
        """Predictor output; accepts one feature vector or a matrix of rows."""
        x = self._check(x)
        out = self.predictor.predict(x)
        return float(out) if x.ndim == 1 else out

    def predict_uncertainty(self, x, f_x):
        x = self._check(x)
        if self.task == LOGISTIC:
            f_x = np.asarray(f_x, dtype=float)
            u = 2.0 * np.minimum(f_x, 1.0 - f_x)
        else:
            u = self.uncertainty.predict(x)
        u = np.maximum(u, self.eps_u)
        return float(u) if np.ndim(u) == 0 else u

    def predict_phi(self, x):
        x = self._check(x)
        phi = np.clip(self.phi_oracle.predict(x), self.eps_u, self.phi_cap)
        return float(phi) if x.ndim == 1 else phi

    def fit_initial(self, X, y) -> None:
        """Fit the predictor once on an upfront seed set (fixed-model baseline)."""
        X = self._check(np.atleast_2d(X))
        self._check_labels(y)
        self.predictor.fit(X, y)

    def _check_labels(self, y) -> None:
        if self.task != LOGISTIC:
            return
        y = np.asarray(y, dtype=float)
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("logistic task requires labels in {0, 1}")

    def absorb_labeled(self, x, y) -> bool:
        """Queue one queried sample; returns True when this triggered a refit."""
        x = self._check(x)
        self._check_labels([y])
        self.tmp_pool.append((x.copy(), float(y)))
        self.b += 1
        if self.b >= self.batch_size:
            self.split_and_refit()
            return True
        return False

    def split_and_refit(self, seed: Optional[int] = None) -> None:
        """Split the queued samples between the two pools and refit all learners.

        The larger half of an odd-sized batch goes to the training pool. When a
        learner's design is degenerate it keeps its previous state.
        """
        if not self.tmp_pool:
            raise ValueError("split_and_refit called with an empty batch")
        rng = self._rng if seed is None else make_rng(seed, stream=7)
        order = rng.permutation(len(self.tmp_pool))
        n_train = (len(order) + 1) // 2
        self.train_pool.extend(self.tmp_pool[i] for i in order[:n_train])
        self.uncertainty_pool.extend(self.tmp_pool[i] for i in order[n_train:])
        self.tmp_pool = []
        self.b = 0
        self.n_refits += 1

        X = np.array([s[0] for s in self.train_pool])
        y = np.array([s[1] for s in self.train_pool])
        self.predictor.fit(X, y)
        if self.uncertainty_pool:
            Xu = np.array([s[0] for s in self.uncertainty_pool])
            yu = np.array([s[1] for s in self.uncertainty_pool])
            resid = self.predictor.predict(Xu) - yu
            if self.uncertainty is not None:
                self.uncertainty.fit(Xu, np.abs(resid))
            self.phi_oracle.fit(Xu, resid ** 2)
