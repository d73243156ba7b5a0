"""Nuisance learners: ridge regression, L2 logistic regression (IRLS), k-NN.

All learners standardize features with statistics from the training rows
only. Classifier probabilities are clipped into ``[eps, 1 - eps]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .errors import DegenerateDesign, DimensionMismatch, InsufficientData, NonConvergence, NonFiniteValue

Kind = Literal["ridge_linear", "logistic", "knn_regress", "knn_classify", "constant"]
REGRESSOR_KINDS = ("ridge_linear", "knn_regress", "constant")
CLASSIFIER_KINDS = ("logistic", "knn_classify", "constant")

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100


@dataclass(frozen=True)
class LearnerSpec:
    """Learner family plus hyperparameters.

    ``constant`` ignores the features and predicts the training mean; it
    exists for misspecification experiments.
    """

    kind: Kind = "ridge_linear"
    lam: float = 1e-3
    k: int = 10
    clip_epsilon: float = 0.01

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS + CLASSIFIER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.clip_epsilon < 0.5:
            raise ValueError("clip_epsilon must lie in (0, 0.5)")


DEFAULT_OUTCOME_SPEC = LearnerSpec("ridge_linear", lam=1e-3)
DEFAULT_PROPENSITY_SPEC = LearnerSpec("logistic", lam=1e-3)


@dataclass(frozen=True, eq=False)
class FittedModel:
    kind: str
    spec: LearnerSpec
    n_features: int
    center: np.ndarray
    scale: np.ndarray
    coef: Optional[np.ndarray] = None
    intercept: float = 0.0
    train_x: Optional[np.ndarray] = None
    train_y: Optional[np.ndarray] = None
    converged: bool = True
    n_iter: int = 0
    loss_path: tuple[float, ...] = field(default=())

    def predict(self, features) -> np.ndarray:
        return predict(self, features)

    def predict_proba(self, features) -> np.ndarray:
        return predict_proba(self, features)


def _sigmoid(eta):
    # overflow-free logistic function
    return np.exp(-np.logaddexp(0.0, -eta))


def _check_xy(features, targets) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} feature rows but {y.shape[0]} targets")
    if x.shape[0] < 1:
        raise InsufficientData("cannot fit on zero rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteValue("training data contain non-finite values")
    return x, y


def _standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    return center, scale


def _ridge(z: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    # penalized least squares on standardized features; intercept unpenalized
    n, d = z.shape
    zc = z - z.mean(axis=0)
    yc = y - y.mean()
    gram = zc.T @ zc / n + lam * np.eye(d)
    if lam == 0 and np.linalg.matrix_rank(gram) < d:
        raise DegenerateDesign("singular normal equations with lam=0")
    coef = np.linalg.solve(gram, zc.T @ yc / n)
    intercept = float(y.mean() - z.mean(axis=0) @ coef)
    return coef, intercept


def _log_loss(zb: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float) -> float:
    eta = zb @ w
    # log(1 + exp(eta)) - y * eta, computed stably
    loss = np.mean(np.logaddexp(0.0, eta) - y * eta)
    return float(loss + 0.5 * lam * np.sum(w[1:] ** 2))


def _irls(z: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, bool, int, list[float]]:
    """Damped Newton / IRLS for mean log-loss + (lam/2)*||coef||^2.

    Step halving guarantees the objective never increases.
    """
    n, d = z.shape
    zb = np.column_stack([np.ones(n), z])
    penalty = lam * np.eye(d + 1)
    penalty[0, 0] = 0.0
    ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    w = np.zeros(d + 1)
    w[0] = np.log(ybar / (1 - ybar))
    loss = _log_loss(zb, y, w, lam)
    path = [loss]
    converged = False
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        p = _sigmoid(zb @ w)
        grad = zb.T @ (p - y) / n + penalty @ w
        weights = p * (1 - p)
        hess = (zb * weights[:, None]).T @ zb / n + penalty
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            w_new = w - t * step
            new_loss = _log_loss(zb, y, w_new, lam)
            if new_loss <= loss or t < 1e-10:
                break
            t *= 0.5
        if new_loss > loss:
            # no descent direction left at machine precision
            converged = True
            break
        delta = np.max(np.abs(w_new - w))
        w, loss = w_new, new_loss
        path.append(loss)
        if delta < IRLS_TOL:
            converged = True
            break
    return w, converged, it, path


def fit_regressor(features, targets, spec: LearnerSpec = DEFAULT_OUTCOME_SPEC) -> FittedModel:
    """Fit an outcome regression according to ``spec``."""
    x, y = _check_xy(features, targets)
    n, d = x.shape
    center, scale = _standardizer(x)
    z = (x - center) / scale
    if spec.kind == "ridge_linear":
        coef, intercept = _ridge(z, y, spec.lam)
        return FittedModel("ridge_linear", spec, d, center, scale, coef=coef, intercept=intercept)
    if spec.kind == "knn_regress":
        if n < spec.k:
            raise InsufficientData(f"knn needs at least k={spec.k} rows, got {n}")
        return FittedModel("knn_regress", spec, d, center, scale, train_x=z, train_y=y)
    if spec.kind == "constant":
        return FittedModel("constant", spec, d, center, scale, intercept=float(y.mean()))
    raise ValueError(f"{spec.kind!r} is not a regressor")


def fit_classifier(features, labels, spec: LearnerSpec = DEFAULT_PROPENSITY_SPEC) -> FittedModel:
    """Fit a model for P(label = 1 | features)."""
    x, y = _check_xy(features, labels)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    n, d = x.shape
    center, scale = _standardizer(x)
    z = (x - center) / scale
    if spec.kind == "constant" or (spec.kind == "logistic" and y.min() == y.max()):
        # a single observed class has no finite logistic MLE; fall back to the rate
        return FittedModel("constant", spec, d, center, scale, intercept=float(y.mean()))
    if spec.kind == "logistic":
        w, converged, n_iter, path = _irls(z, y, spec.lam)
        if not converged:
            warnings.warn(
                NonConvergence(f"IRLS stopped after {n_iter} iterations without converging"),
                stacklevel=2,
            )
        return FittedModel(
            "logistic", spec, d, center, scale, coef=w[1:], intercept=float(w[0]),
            converged=converged, n_iter=n_iter, loss_path=tuple(path),
        )
    if spec.kind == "knn_classify":
        if n < spec.k:
            raise InsufficientData(f"knn needs at least k={spec.k} rows, got {n}")
        return FittedModel("knn_classify", spec, d, center, scale, train_x=z, train_y=y)
    raise ValueError(f"{spec.kind!r} is not a classifier")


def _prepare(model: FittedModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if model.n_features == 1 else x[None, :]
    if x.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got {x.shape[1]}")
    return (x - model.center) / model.scale


def _knn_mean(model: FittedModel, z: np.ndarray) -> np.ndarray:
    k = model.spec.k
    out = np.empty(z.shape[0])
    # chunk to bound the distance matrix size
    for start in range(0, z.shape[0], 512):
        block = z[start:start + 512]
        d2 = ((block[:, None, :] - model.train_x[None, :, :]) ** 2).sum(axis=2)
        idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out[start:start + 512] = model.train_y[idx].mean(axis=1)
    return out


def _raw_output(model: FittedModel, features) -> np.ndarray:
    z = _prepare(model, features)
    if model.kind == "constant":
        return np.full(z.shape[0], model.intercept)
    if model.kind in ("knn_regress", "knn_classify"):
        return _knn_mean(model, z)
    eta = z @ model.coef + model.intercept
    if model.kind == "logistic":
        return _sigmoid(eta)
    return eta


def predict(model: FittedModel, features) -> np.ndarray:
    """Regression predictions (for classifiers: unclipped probabilities)."""
    return _raw_output(model, features)


def clip_probability(p, eps: float) -> np.ndarray:
    return np.clip(p, eps, 1.0 - eps)


def predict_proba(model: FittedModel, features) -> np.ndarray:
    """P(label = 1 | features), clipped into ``[eps, 1 - eps]``."""
    return clip_probability(_raw_output(model, features), model.spec.clip_epsilon)
