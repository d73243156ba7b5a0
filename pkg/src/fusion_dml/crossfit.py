"""K-fold cross-fitting of the five nuisance functions.

For every unit ``i`` in fold ``k`` the package needs

* ``mu_hat[i, t, s]``  outcome regression E[Y | X, T=t, S=s]
* ``e_hat[i, t, s]``   treatment propensity P(T=t | X, S=s)
* ``p_hat[i]``         sampling propensity P(S=1 | X)

each produced by a model that never saw fold ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal, Mapping, Optional, Sequence

import numpy as np

from .core import Dataset
from .errors import CellTooSmall, EmptyTrainingCell
from .learners import (
    DEFAULT_OUTCOME_SPEC,
    DEFAULT_PROPENSITY_SPEC,
    LearnerSpec,
    clip_probability,
    fit_classifier,
    fit_regressor,
)


@dataclass(frozen=True)
class CrossFitConfig:
    folds: int = 5
    repeats: int = 1
    seed: int = 0
    outcome_spec: LearnerSpec = DEFAULT_OUTCOME_SPEC
    propensity_spec: LearnerSpec = DEFAULT_PROPENSITY_SPEC
    aggregate: Literal["mean", "median"] = "mean"

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.aggregate not in ("mean", "median"):
            raise ValueError("aggregate must be 'mean' or 'median'")

    def fold_seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.repeats)]


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    K: int
    seed: int

    def test_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.K)


@dataclass(frozen=True, eq=False)
class NuisanceEstimates:
    """Out-of-fold nuisance predictions, indexed ``[unit, t, s]``.

    Entries of ``mu_hat`` for treatment levels that were not requested are NaN.
    """

    mu_hat: np.ndarray
    e_hat: np.ndarray
    p_hat: np.ndarray
    e_exp_known: bool = False
    p_known: bool = False
    clip_epsilon: float = 0.01

    def __post_init__(self):
        for arr in (self.mu_hat, self.e_hat, self.p_hat):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.p_hat.shape[0]


def assign_folds(dataset: Dataset, K: int, seed: int = 0) -> FoldAssignment:
    """Random K-fold split stratified by the (T, S) cell.

    Within every cell fold sizes differ by at most one; the starting fold
    rotates between cells so overall fold sizes stay balanced as well.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(dataset.n, dtype=np.int64)
    offset = 0
    for t in (0, 1):
        for s in (0, 1):
            idx = np.flatnonzero((dataset.t == t) & (dataset.s == s))
            if idx.size == 0:
                continue
            if idx.size < K:
                raise CellTooSmall(f"cell t={t}, s={s} has {idx.size} units but K={K}")
            perm = rng.permutation(idx)
            fold_of[perm] = (offset + np.arange(idx.size)) % K
            offset = (offset + idx.size) % K
    return FoldAssignment(fold_of=fold_of, K=K, seed=seed)


def _fit_predict_mu(dataset, train, test, t, s, spec):
    mask = train & (dataset.t == t) & (dataset.s == s)
    if not mask.any():
        raise EmptyTrainingCell(f"no training units with t={t}, s={s} outside the held-out fold")
    model = fit_regressor(dataset.x[mask], dataset.y[mask], spec)
    return model.predict(dataset.x[test])


def estimate_nuisances(
    dataset: Dataset,
    folds: FoldAssignment,
    outcome_spec: LearnerSpec = DEFAULT_OUTCOME_SPEC,
    propensity_spec: LearnerSpec = DEFAULT_PROPENSITY_SPEC,
    levels: Iterable[int] = (0, 1),
) -> NuisanceEstimates:
    """Cross-fitted predictions of every nuisance function for every unit.

    Known experimental propensities (``known_e_exp``) and known sampling
    propensities (``known_p``) replace the corresponding fitted models; they
    are still clipped.
    """
    n = dataset.n
    eps = propensity_spec.clip_epsilon
    levels = tuple(sorted(set(int(t) for t in levels)))
    mu_hat = np.full((n, 2, 2), np.nan)
    e1_hat = np.empty((n, 2))
    p_hat = np.empty(n)
    for k in range(folds.K):
        test = folds.fold_of == k
        train = ~test
        for t in levels:
            for s in (0, 1):
                mu_hat[test, t, s] = _fit_predict_mu(dataset, train, test, t, s, outcome_spec)
        for s in (0, 1):
            if s == 1 and dataset.known_e_exp is not None:
                continue
            mask = train & (dataset.s == s)
            if not mask.any():
                raise EmptyTrainingCell(f"no training units with s={s} outside the held-out fold")
            model = fit_classifier(dataset.x[mask], dataset.t[mask], propensity_spec)
            e1_hat[test, s] = model.predict_proba(dataset.x[test])
        if dataset.known_p is None:
            model = fit_classifier(dataset.x[train], dataset.s[train], propensity_spec)
            p_hat[test] = model.predict_proba(dataset.x[test])
    if dataset.known_e_exp is not None:
        e1_hat[:, 1] = clip_probability(dataset.known_e_exp, eps)
    if dataset.known_p is not None:
        p_hat[:] = clip_probability(dataset.known_p, eps)

    e_hat = np.empty((n, 2, 2))
    e_hat[:, 1, :] = e1_hat
    e_hat[:, 0, :] = 1.0 - e1_hat
    return NuisanceEstimates(
        mu_hat=mu_hat,
        e_hat=e_hat,
        p_hat=p_hat,
        e_exp_known=dataset.known_e_exp is not None,
        p_known=dataset.known_p is not None,
        clip_epsilon=eps,
    )


def crossfit_nuisances(dataset: Dataset, config: CrossFitConfig, seed: Optional[int] = None,
                       levels: Iterable[int] = (0, 1)) -> NuisanceEstimates:
    folds = assign_folds(dataset, config.folds, config.seed if seed is None else seed)
    return estimate_nuisances(dataset, folds, config.outcome_spec, config.propensity_spec, levels)


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its asymptotic variance on the per-unit scale.

    The standard error of ``point`` is ``sqrt(variance / n)``.
    """

    point: float
    variance: float


@dataclass(frozen=True)
class RepeatedResult:
    estimates: dict[str, Estimate]
    repetitions: tuple[dict[str, Estimate], ...] = field(default=())
    seeds: tuple[int, ...] = field(default=())


def aggregate_estimates(
    reps: Sequence[Estimate], n: int, method: Literal["mean", "median"] = "mean"
) -> Estimate:
    """Combine repetitions: centre, plus within- and between-repetition spread."""
    points = np.array([e.point for e in reps], dtype=float)
    variances = np.array([e.variance for e in reps], dtype=float)
    if method == "mean":
        centre = float(points.mean())
        var = float(np.mean(variances + n * (points - centre) ** 2))
    elif method == "median":
        centre = float(np.median(points))
        var = float(np.median(variances + n * (points - centre) ** 2))
    else:
        raise ValueError(f"unknown aggregation {method!r}")
    if len(reps) == 1:
        return reps[0]
    return Estimate(centre, var)


Downstream = Callable[[Dataset, NuisanceEstimates], Mapping[str, Estimate]]


def repeat_crossfit(
    dataset: Dataset,
    downstream: Downstream,
    config: CrossFitConfig = CrossFitConfig(),
    seeds: Optional[Sequence[int]] = None,
    levels: Iterable[int] = (0, 1),
) -> RepeatedResult:
    """Run folds + nuisances + ``downstream`` once per fold seed and aggregate."""
    seeds = list(config.fold_seeds() if seeds is None else seeds)
    if not seeds:
        raise ValueError("need at least one repetition")
    levels = tuple(levels)
    reps = []
    for seed in seeds:
        nuisances = crossfit_nuisances(dataset, config, seed=seed, levels=levels)
        reps.append(dict(downstream(dataset, nuisances)))
    keys = reps[0].keys()
    agg = {key: aggregate_estimates([r[key] for r in reps], dataset.n, config.aggregate) for key in keys}
    return RepeatedResult(estimates=agg, repetitions=tuple(reps), seeds=tuple(seeds))
