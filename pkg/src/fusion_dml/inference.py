"""Second-stage estimators built on cross-fitted nuisances.

Two per-unit scores drive everything here:

``phi``     corrected gap between the observational and experimental outcome
            regressions; its mean estimates theta(t), which is zero when both
            external validity and conditional ignorability hold.
``lambda``  observational outcome regression corrected with experimental
            residuals; its mean estimates E[Y(t)] under external validity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Iterable, Literal, Optional

import numpy as np

from .core import Dataset
from .crossfit import (
    CrossFitConfig,
    Estimate,
    NuisanceEstimates,
    assign_folds,
    repeat_crossfit,
)
from .errors import EmptyCell, MissingNuisance, ZeroVariance
from .learners import clip_probability, fit_classifier, fit_regressor

_NORMAL = NormalDist()


def normal_quantile(alpha_level: float) -> float:
    """Two-sided critical value Phi^{-1}(1 - alpha/2)."""
    return _NORMAL.inv_cdf(1.0 - alpha_level / 2.0)


def two_sided_p(z: float) -> float:
    if math.isinf(z):
        return 0.0
    return float(min(1.0, 2.0 * _NORMAL.cdf(-abs(z))))


@dataclass(frozen=True, eq=False)
class ScoreVector:
    values: np.ndarray
    level: int
    kind: Literal["phi", "lambda"]

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise MissingNuisance(f"non-finite {self.kind} scores for t={self.level}")

    def __len__(self):
        return self.values.shape[0]

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class ThetaReport:
    level: int
    theta_hat: float
    sigma2_hat: float
    sigma2_r_hat: float
    z_stat: float
    p_value: float
    ci_low: float
    ci_high: float
    n: int
    alpha_level: float = 0.05
    degenerate_variance: bool = False

    @property
    def se(self) -> float:
        return math.sqrt(self.sigma2_hat / self.n)

    def to_dict(self) -> dict:
        out = asdict(self)
        if not math.isfinite(self.z_stat):
            out["z_stat"] = None
        out["se"] = self.se
        return out


@dataclass(frozen=True)
class TestReport:
    levels: dict[int, ThetaReport]
    alpha_level: float
    correction: Literal["none", "bonferroni"]
    threshold: float
    adjusted_p: dict[int, float]
    reject: bool

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self) -> dict:
        return {
            "alpha_level": self.alpha_level,
            "correction": self.correction,
            "threshold": self.threshold,
            "reject": self.reject,
            "levels": {str(t): r.to_dict() for t, r in self.levels.items()},
            "adjusted_p": {str(t): p for t, p in self.adjusted_p.items()},
        }


@dataclass(frozen=True)
class AteReport:
    nu_hat: tuple[float, float]
    gamma2_hat: tuple[float, float]
    tau_hat: float
    Gamma2_hat: float
    ci_low: float
    ci_high: float
    n: int
    alpha_level: float = 0.05

    @property
    def se(self) -> float:
        return math.sqrt(self.Gamma2_hat / self.n)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["nu_hat"] = list(self.nu_hat)
        out["gamma2_hat"] = list(self.gamma2_hat)
        out["se"] = self.se
        return out


@dataclass(frozen=True)
class EffectEstimate:
    """Single ATE estimate from a baseline estimator."""

    method: str
    tau_hat: float
    se: float
    ci_low: float
    ci_high: float
    n_used: int

    def to_dict(self) -> dict:
        return asdict(self)


def _indicator(dataset: Dataset, t: int) -> np.ndarray:
    return (dataset.t == t).astype(float)


def _require(nuisances: NuisanceEstimates, dataset: Dataset, t: int, cells: Iterable[int]) -> None:
    if nuisances.n != dataset.n:
        raise MissingNuisance(f"nuisances cover {nuisances.n} units, dataset has {dataset.n}")
    for s in cells:
        if not np.all(np.isfinite(nuisances.mu_hat[:, t, s])):
            raise MissingNuisance(f"outcome regression for t={t}, s={s} was not estimated")


def phi_scores(dataset: Dataset, nuisances: NuisanceEstimates, t: int) -> ScoreVector:
    """Per-unit scores whose mean estimates theta(t)."""
    _require(nuisances, dataset, t, (0, 1))
    y, s = dataset.y, dataset.s.astype(float)
    ind = _indicator(dataset, t)
    mu0 = nuisances.mu_hat[:, t, 0]
    mu1 = nuisances.mu_hat[:, t, 1]
    e0 = nuisances.e_hat[:, t, 0]
    e1 = nuisances.e_hat[:, t, 1]
    p = nuisances.p_hat
    values = (
        mu0
        - mu1
        + ind * (1 - s) / (e0 * (1 - p)) * (y - mu0)
        - ind * s / (e1 * p) * (y - mu1)
    )
    return ScoreVector(values, int(t), "phi")


def restricted_variance(dataset: Dataset, nuisances: NuisanceEstimates, t: int) -> float:
    """Variance of the phi score implied by the null mu(x,t,0) == mu(x,t,1).

    Both residuals are taken against the observational regression.
    """
    y, s = dataset.y, dataset.s.astype(float)
    ind = _indicator(dataset, t)
    mu0 = nuisances.mu_hat[:, t, 0]
    e0 = nuisances.e_hat[:, t, 0]
    e1 = nuisances.e_hat[:, t, 1]
    p = nuisances.p_hat
    obs = (1 - s) * ind * (y - mu0) / (e0 * (1 - p))
    exp = s * ind * (y - mu0) / (e1 * p)
    return float(np.mean(obs**2 + exp**2))


def theta_report(
    level: int,
    theta_hat: float,
    sigma2_hat: float,
    sigma2_r_hat: float,
    n: int,
    alpha_level: float = 0.05,
) -> ThetaReport:
    """Z statistic, p-value and confidence interval for a theta estimate.

    Z divides by the restricted standard deviation; the CI uses the
    unrestricted variance.
    """
    if n < 2:
        raise ZeroVariance("need at least two units for a variance estimate")
    degenerate = False
    if sigma2_r_hat > 0:
        z = math.sqrt(n) * theta_hat / math.sqrt(sigma2_r_hat)
        p_value = two_sided_p(z)
    elif theta_hat == 0:
        z, p_value = 0.0, 1.0
    else:
        z, p_value = math.copysign(math.inf, theta_hat), 0.0
        degenerate = True
        warnings.warn("restricted variance is zero but theta_hat is not; reporting p=0", RuntimeWarning)
    half = normal_quantile(alpha_level) * math.sqrt(max(sigma2_hat, 0.0) / n)
    return ThetaReport(
        level=int(level),
        theta_hat=float(theta_hat),
        sigma2_hat=float(sigma2_hat),
        sigma2_r_hat=float(sigma2_r_hat),
        z_stat=float(z),
        p_value=float(p_value),
        ci_low=float(theta_hat - half),
        ci_high=float(theta_hat + half),
        n=int(n),
        alpha_level=alpha_level,
        degenerate_variance=degenerate,
    )


def estimate_theta(
    scores: ScoreVector,
    dataset: Dataset,
    nuisances: NuisanceEstimates,
    alpha_level: float = 0.05,
) -> ThetaReport:
    if scores.kind != "phi":
        raise ValueError("estimate_theta needs phi scores")
    phi = scores.values
    theta = float(phi.mean())
    sigma2 = float(np.mean((phi - theta) ** 2))
    sigma2_r = restricted_variance(dataset, nuisances, scores.level)
    return theta_report(scores.level, theta, sigma2, sigma2_r, len(scores), alpha_level)


def theta_estimates(dataset: Dataset, nuisances: NuisanceEstimates, levels: Iterable[int]) -> dict[str, Estimate]:
    """Downstream for ``repeat_crossfit``: theta with both variance estimates."""
    out = {}
    for t in levels:
        phi = phi_scores(dataset, nuisances, t).values
        theta = float(phi.mean())
        out[f"theta{t}"] = Estimate(theta, float(np.mean((phi - theta) ** 2)))
        out[f"theta{t}_r"] = Estimate(theta, restricted_variance(dataset, nuisances, t))
    return out


def _decide(
    reports: dict[int, ThetaReport],
    alpha_level: float,
    correction: Literal["none", "bonferroni"],
) -> TestReport:
    m = len(reports)
    if correction == "bonferroni":
        threshold = alpha_level / m
        adjusted = {t: min(1.0, r.p_value * m) for t, r in reports.items()}
    elif correction == "none":
        threshold = alpha_level
        adjusted = {t: r.p_value for t, r in reports.items()}
    else:
        raise ValueError(f"unknown correction {correction!r}")
    reject = any(r.p_value < threshold for r in reports.values())
    return TestReport(reports, alpha_level, correction, threshold, adjusted, reject)


def decide_from_pvalues(
    p_values: dict[int, float],
    alpha_level: float = 0.05,
    correction: Literal["none", "bonferroni"] = "bonferroni",
) -> bool:
    """Joint decision from per-level p-values alone."""
    m = len(p_values)
    threshold = alpha_level / m if correction == "bonferroni" else alpha_level
    return any(p < threshold for p in p_values.values())


def _check_levels(dataset: Dataset, levels: Iterable[int]) -> tuple[int, ...]:
    levels = tuple(sorted(set(int(t) for t in levels)))
    if not levels or any(t not in (0, 1) for t in levels):
        raise ValueError("levels must be a nonempty subset of {0, 1}")
    dataset.require_cells(levels, (0, 1))
    return levels


def test_assumptions(
    dataset: Dataset,
    nuisances: NuisanceEstimates,
    levels: Iterable[int] = (0, 1),
    alpha_level: float = 0.05,
    correction: Literal["none", "bonferroni"] = "bonferroni",
) -> TestReport:
    """Test H0(t): mu(x,t,0) == mu(x,t,1) for every requested level.

    The joint null (external validity and conditional ignorability) is
    rejected if any level rejects after correction.
    """
    levels = _check_levels(dataset, levels)
    reports = {
        t: estimate_theta(phi_scores(dataset, nuisances, t), dataset, nuisances, alpha_level)
        for t in levels
    }
    return _decide(reports, alpha_level, correction)


test_assumptions.__test__ = False


def run_test(
    dataset: Dataset,
    config: CrossFitConfig = CrossFitConfig(),
    levels: Iterable[int] = (0, 1),
    alpha_level: float = 0.05,
    correction: Literal["none", "bonferroni"] = "bonferroni",
) -> TestReport:
    """Cross-fit (possibly repeatedly) and run the theta test end to end."""
    levels = _check_levels(dataset, levels)
    result = repeat_crossfit(
        dataset, lambda d, nu: theta_estimates(d, nu, levels), config, levels=levels
    )
    est = result.estimates
    reports = {
        t: theta_report(
            t, est[f"theta{t}"].point, est[f"theta{t}"].variance, est[f"theta{t}_r"].variance,
            dataset.n, alpha_level,
        )
        for t in levels
    }
    return _decide(reports, alpha_level, correction)


def lambda_scores(dataset: Dataset, nuisances: NuisanceEstimates, t: int) -> ScoreVector:
    """Per-unit scores whose mean estimates E[Y(t)]."""
    _require(nuisances, dataset, t, (0,))
    y, s = dataset.y, dataset.s.astype(float)
    ind = _indicator(dataset, t)
    mu0 = nuisances.mu_hat[:, t, 0]
    e1 = nuisances.e_hat[:, t, 1]
    p = nuisances.p_hat
    values = mu0 + s * ind / (p * e1) * (y - mu0)
    return ScoreVector(values, int(t), "lambda")


def ate_estimates(dataset: Dataset, nuisances: NuisanceEstimates) -> dict[str, Estimate]:
    """Downstream for ``repeat_crossfit``: nu(0), nu(1) and tau."""
    lam0 = lambda_scores(dataset, nuisances, 0).values
    lam1 = lambda_scores(dataset, nuisances, 1).values
    diff = lam1 - lam0
    out = {}
    for key, v in (("nu0", lam0), ("nu1", lam1), ("tau", diff)):
        m = float(v.mean())
        out[key] = Estimate(m, float(np.mean((v - m) ** 2)))
    return out


def ate_report(est: dict[str, Estimate], n: int, alpha_level: float = 0.05) -> AteReport:
    tau = est["tau"]
    half = normal_quantile(alpha_level) * math.sqrt(tau.variance / n)
    return AteReport(
        nu_hat=(est["nu0"].point, est["nu1"].point),
        gamma2_hat=(est["nu0"].variance, est["nu1"].variance),
        tau_hat=tau.point,
        Gamma2_hat=tau.variance,
        ci_low=tau.point - half,
        ci_high=tau.point + half,
        n=n,
        alpha_level=alpha_level,
    )


def estimate_ate(dataset: Dataset, nuisances: NuisanceEstimates, alpha_level: float = 0.05) -> AteReport:
    """Doubly robust population ATE from the lambda scores of both levels."""
    dataset.require_cells((0, 1), (1,))
    return ate_report(ate_estimates(dataset, nuisances), dataset.n, alpha_level)


def run_ate(dataset: Dataset, config: CrossFitConfig = CrossFitConfig(), alpha_level: float = 0.05) -> AteReport:
    dataset.require_cells((0, 1), (1,))
    result = repeat_crossfit(dataset, ate_estimates, config)
    return ate_report(result.estimates, dataset.n, alpha_level)


# --- baselines -------------------------------------------------------------


def _effect(method: str, psi: np.ndarray, alpha_level: float) -> EffectEstimate:
    tau = float(psi.mean())
    se = float(np.sqrt(np.mean((psi - tau) ** 2) / psi.size))
    half = normal_quantile(alpha_level) * se
    return EffectEstimate(method, tau, se, tau - half, tau + half, int(psi.size))


def difference_in_means(dataset: Dataset, s: int = 1, alpha_level: float = 0.05) -> EffectEstimate:
    arm = dataset.s == s
    y1 = dataset.y[arm & (dataset.t == 1)]
    y0 = dataset.y[arm & (dataset.t == 0)]
    if y1.size == 0 or y0.size == 0:
        raise EmptyCell(f"sample s={s} needs both treated and control units")
    tau = float(y1.mean() - y0.mean())
    v1 = y1.var(ddof=1) / y1.size if y1.size > 1 else 0.0
    v0 = y0.var(ddof=1) / y0.size if y0.size > 1 else 0.0
    se = float(math.sqrt(v1 + v0))
    half = normal_quantile(alpha_level) * se
    return EffectEstimate(f"diff_in_means_s{s}", tau, se, tau - half, tau + half, int(y1.size + y0.size))


@dataclass(frozen=True, eq=False)
class ArmNuisances:
    """Cross-fitted mu(x, t, s) and e(x, 1, s) for the units of one sample."""

    index: np.ndarray
    mu: np.ndarray  # shape (m, 2)
    e1: np.ndarray  # shape (m,)


def arm_nuisances(dataset: Dataset, s: int, config: CrossFitConfig = CrossFitConfig(),
                  seed: Optional[int] = None) -> ArmNuisances:
    """Cross-fit outcome and treatment models using only sample ``s``."""
    index = np.flatnonzero(dataset.s == s)
    sub = dataset.subset(index)
    folds = assign_folds(sub, config.folds, config.seed if seed is None else seed)
    mu = np.empty((sub.n, 2))
    e1 = np.empty(sub.n)
    eps = config.propensity_spec.clip_epsilon
    for k in range(folds.K):
        test = folds.fold_of == k
        train = ~test
        for t in (0, 1):
            mask = train & (sub.t == t)
            mu[test, t] = fit_regressor(sub.x[mask], sub.y[mask], config.outcome_spec).predict(sub.x[test])
        model = fit_classifier(sub.x[train], sub.t[train], config.propensity_spec)
        e1[test] = model.predict_proba(sub.x[test])
    if s == 1 and dataset.known_e_exp is not None:
        e1 = clip_probability(dataset.known_e_exp[index], eps)
    return ArmNuisances(index, mu, e1)


def _arm_from_full(dataset: Dataset, nuisances: NuisanceEstimates, s: int) -> ArmNuisances:
    index = np.flatnonzero(dataset.s == s)
    mu = nuisances.mu_hat[index][:, :, s]
    if not np.all(np.isfinite(mu)):
        raise MissingNuisance(f"outcome regressions for s={s} are incomplete")
    return ArmNuisances(index, mu, nuisances.e_hat[index, 1, s])


def _aipw_psi(dataset: Dataset, arm: ArmNuisances) -> np.ndarray:
    y = dataset.y[arm.index]
    t = dataset.t[arm.index].astype(float)
    mu0, mu1, e = arm.mu[:, 0], arm.mu[:, 1], arm.e1
    return mu1 - mu0 + t * (y - mu1) / e - (1 - t) * (y - mu0) / (1 - e)


def _ipw_psi(dataset: Dataset, arm: ArmNuisances) -> np.ndarray:
    y = dataset.y[arm.index]
    t = dataset.t[arm.index].astype(float)
    return t * y / arm.e1 - (1 - t) * y / (1 - arm.e1)


def _arm(dataset, nuisances, s, config):
    dataset.require_cells((0, 1), (s,))
    if nuisances is not None:
        return _arm_from_full(dataset, nuisances, s)
    return arm_nuisances(dataset, s, config)


def experimental_aipw(dataset: Dataset, nuisances: Optional[NuisanceEstimates] = None,
                      config: CrossFitConfig = CrossFitConfig(), alpha_level: float = 0.05) -> EffectEstimate:
    return _effect("exp_aipw", _aipw_psi(dataset, _arm(dataset, nuisances, 1, config)), alpha_level)


def experimental_ipw(dataset: Dataset, nuisances: Optional[NuisanceEstimates] = None,
                     config: CrossFitConfig = CrossFitConfig(), alpha_level: float = 0.05) -> EffectEstimate:
    return _effect("exp_ipw", _ipw_psi(dataset, _arm(dataset, nuisances, 1, config)), alpha_level)


def baseline_experimental_ate(dataset: Dataset, nuisances: Optional[NuisanceEstimates] = None,
                              config: CrossFitConfig = CrossFitConfig(),
                              alpha_level: float = 0.05) -> dict[str, EffectEstimate]:
    """Experimental-sample-only estimates: difference in means and AIPW.

    When ``nuisances`` is omitted the outcome and treatment models are
    cross-fitted inside the experimental sample.
    """
    diff = difference_in_means(dataset, 1, alpha_level)
    return {
        "exp_diff": EffectEstimate("exp_diff", diff.tau_hat, diff.se, diff.ci_low, diff.ci_high, diff.n_used),
        "exp_aipw": experimental_aipw(dataset, nuisances, config, alpha_level),
    }


def baseline_observational_ate(dataset: Dataset, nuisances: Optional[NuisanceEstimates] = None,
                               config: CrossFitConfig = CrossFitConfig(),
                               alpha_level: float = 0.05) -> EffectEstimate:
    """Standard AIPW on the observational sample (valid only under ignorability)."""
    return _effect("obs_aipw", _aipw_psi(dataset, _arm(dataset, nuisances, 0, config)), alpha_level)
