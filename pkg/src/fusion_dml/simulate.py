"""Synthetic data generators and a Monte Carlo benchmark runner."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .core import Dataset, validate_dataset
from .crossfit import CrossFitConfig, crossfit_nuisances
from .errors import FusionError
from .inference import (
    EffectEstimate,
    difference_in_means,
    estimate_ate,
    experimental_aipw,
    experimental_ipw,
    baseline_observational_ate,
    run_ate,
)

logger = logging.getLogger(__name__)

DgpKind = Literal["fusion_s7", "efficiency_appD", "confounded"]
ESTIMATORS = ("dml_fusion", "exp_aipw", "exp_ipw", "exp_diff", "obs_aipw")

FUSION_TRUE_TAU = 1.0
EFFICIENCY_TRUE_TAU = 0.0


def expit(z):
    return 1.0 / (1.0 + np.exp(-z))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _dataset(y, t, s, x, names) -> Dataset:
    cols = {"y": y, "t": t, "s": s}
    cols.update({name: x[:, j] for j, name in enumerate(names)})
    return validate_dataset(cols)


def generate_fusion_dgp(n: int, seed=None, confounding_strength: float = 0.0) -> tuple[Dataset, float]:
    """Five N(1/2, 25) covariates; experiment selected on X1 - X2.

    S ~ Bernoulli(0.5 * expit(X1 - X2)); T ~ Bernoulli(0.5) in the experiment
    and Bernoulli(expit(X1 - X2)) otherwise; Y ~ N(X0 + 5 X2 + T (X1 + X3), 1).
    A positive ``confounding_strength`` adds a latent standard normal U to the
    observational treatment logit and to the outcome mean.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if confounding_strength < 0:
        raise ValueError("confounding_strength must be >= 0")
    rng = _rng(seed)
    x = rng.normal(0.5, 5.0, size=(n, 5))
    s = rng.binomial(1, 0.5 * expit(x[:, 1] - x[:, 2]))
    if confounding_strength > 0:
        u = rng.normal(size=n)
        obs_logit = x[:, 1] - x[:, 2] + confounding_strength * u
    else:
        u = np.zeros(n)
        obs_logit = x[:, 1] - x[:, 2]
    t = np.where(s == 1, rng.binomial(1, 0.5, size=n), rng.binomial(1, expit(obs_logit)))
    mean = x[:, 0] + 5 * x[:, 2] + t * (x[:, 1] + x[:, 3]) + confounding_strength * u
    y = rng.normal(mean, 1.0)
    return _dataset(y, t, s, x, [f"x{j}" for j in range(5)]), FUSION_TRUE_TAU


def generate_confounded_dgp(n: int, seed=None, strength: float = 1.0) -> tuple[Dataset, float]:
    return generate_fusion_dgp(n, seed, confounding_strength=strength)


def generate_efficiency_dgp(n: int, seed=None, covariate_seed=None) -> tuple[Dataset, float]:
    """Four standard normal covariates with expit-linked selection and treatment.

    ``covariate_seed`` fixes the covariates so that repeated calls only redraw
    the sample and treatment assignments and the outcome noise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    x = _rng(covariate_seed).normal(size=(n, 4)) if covariate_seed is not None else rng.normal(size=(n, 4))
    x1, x2, x3, x4 = x.T
    pi_s = expit(x1 - x2)
    pi_obs = expit(x1 + x2 - 2 * x3)
    s = rng.binomial(1, pi_s)
    t = rng.binomial(1, s * 0.5 + (1 - s) * pi_obs)
    y = 5 * x2 + x4 + t * (x1 + x3) + rng.normal(size=n)
    return _dataset(y, t, s, x, [f"x{j + 1}" for j in range(4)]), EFFICIENCY_TRUE_TAU


@dataclass(frozen=True)
class OracleFunctions:
    """True nuisance values for a fusion-DGP sample (no latent confounder)."""

    mu: np.ndarray  # [i, t, s]
    e: np.ndarray   # [i, t, s]
    p: np.ndarray


def fusion_oracle(dataset: Dataset) -> OracleFunctions:
    x = dataset.x
    base = x[:, 0] + 5 * x[:, 2]
    effect = x[:, 1] + x[:, 3]
    mu = np.empty((dataset.n, 2, 2))
    for t in (0, 1):
        mu[:, t, :] = (base + t * effect)[:, None]
    e1 = np.column_stack([expit(x[:, 1] - x[:, 2]), np.full(dataset.n, 0.5)])
    e = np.stack([1 - e1, e1], axis=1)
    return OracleFunctions(mu, e, 0.5 * expit(x[:, 1] - x[:, 2]))


def efficiency_oracle(dataset: Dataset) -> OracleFunctions:
    x1, x2, x3, x4 = dataset.x.T
    mu = np.empty((dataset.n, 2, 2))
    for t in (0, 1):
        mu[:, t, :] = (5 * x2 + x4 + t * (x1 + x3))[:, None]
    e1 = np.column_stack([expit(x1 + x2 - 2 * x3), np.full(dataset.n, 0.5)])
    e = np.stack([1 - e1, e1], axis=1)
    return OracleFunctions(mu, e, expit(x1 - x2))


@dataclass(frozen=True)
class DgpConfig:
    kind: DgpKind = "fusion_s7"
    n: int = 2000
    seed: int = 0
    confounding_strength: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fusion_s7", "efficiency_appD", "confounded"):
            raise ValueError(f"unknown dgp {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.confounding_strength < 0:
            raise ValueError("confounding_strength must be >= 0")


def generate(config: DgpConfig, seed=None, covariate_seed=None) -> tuple[Dataset, float]:
    seed = config.seed if seed is None else seed
    if config.kind == "fusion_s7":
        return generate_fusion_dgp(config.n, seed)
    if config.kind == "confounded":
        return generate_fusion_dgp(config.n, seed, config.confounding_strength)
    return generate_efficiency_dgp(config.n, seed, covariate_seed)


@dataclass(frozen=True)
class BenchmarkRow:
    estimator: str
    n: int
    replication: int
    estimate: float
    se: float
    ci_low: float
    ci_high: float


@dataclass
class BenchmarkReport:
    dgp: DgpConfig
    true_tau: float
    replications: int
    rows: list[BenchmarkRow] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def estimates(self, estimator: str, n: int) -> np.ndarray:
        return np.array([r.estimate for r in self.rows if r.estimator == estimator and r.n == n])

    def ses(self, estimator: str, n: int) -> np.ndarray:
        return np.array([r.se for r in self.rows if r.estimator == estimator and r.n == n])

    def summary(self) -> list[dict]:
        out = []
        keys = sorted({(r.estimator, r.n) for r in self.rows}, key=lambda k: (ESTIMATORS.index(k[0]), k[1]))
        for est, n in keys:
            rows = [r for r in self.rows if r.estimator == est and r.n == n]
            values = np.array([r.estimate for r in rows])
            ses = np.array([r.se for r in rows])
            bias = values - self.true_tau
            covered = [r.ci_low <= self.true_tau <= r.ci_high for r in rows]
            out.append({
                "estimator": est,
                "n": n,
                "replications": len(rows),
                "mean_bias": float(bias.mean()),
                "mse": float(np.mean(bias**2)),
                "empirical_sd": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
                "mean_se": float(ses.mean()),
                "median_se": float(np.median(ses)),
                "coverage": float(np.mean(covered)),
            })
        return out

    def mse(self, estimator: str, n: int) -> float:
        return float(np.mean((self.estimates(estimator, n) - self.true_tau) ** 2))

    def to_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "n", "replication", "estimate", "se"])
            for r in self.rows:
                writer.writerow([r.estimator, r.n, r.replication, repr(r.estimate), repr(r.se)])

    def to_dict(self) -> dict:
        return {
            "dgp": asdict(self.dgp),
            "true_tau": self.true_tau,
            "replications": self.replications,
            "failures": self.failures,
            "summary": self.summary(),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _as_effect(method: str, report) -> EffectEstimate:
    if isinstance(report, EffectEstimate):
        return report
    return EffectEstimate(method, report.tau_hat, report.se, report.ci_low, report.ci_high, report.n)


def run_estimators(
    dataset: Dataset,
    estimators: Sequence[str] = ESTIMATORS,
    config: CrossFitConfig = CrossFitConfig(),
    alpha_level: float = 0.05,
) -> dict[str, EffectEstimate]:
    """Run the requested ATE estimators on one dataset, sharing one cross-fit."""
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    nuisances = crossfit_nuisances(dataset, config)
    out = {}
    for name in estimators:
        if name == "dml_fusion":
            report = estimate_ate(dataset, nuisances, alpha_level) if config.repeats == 1 else run_ate(dataset, config, alpha_level)
            out[name] = _as_effect(name, report)
        elif name == "exp_aipw":
            out[name] = experimental_aipw(dataset, nuisances, config, alpha_level)
        elif name == "exp_ipw":
            out[name] = experimental_ipw(dataset, nuisances, config, alpha_level)
        elif name == "exp_diff":
            d = difference_in_means(dataset, 1, alpha_level)
            out[name] = EffectEstimate(name, d.tau_hat, d.se, d.ci_low, d.ci_high, d.n_used)
        elif name == "obs_aipw":
            out[name] = baseline_observational_ate(dataset, nuisances, config, alpha_level)
    return out


def replication_seed(seed: int, n: int, replication: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, n, replication])


def _replication(dgp: DgpConfig, n: int, rep: int, estimators, config: CrossFitConfig, alpha_level: float):
    cfg = DgpConfig(dgp.kind, n, dgp.seed, dgp.confounding_strength)
    covariate_seed = np.random.SeedSequence([dgp.seed, n]) if dgp.kind == "efficiency_appD" else None
    data_ss, fold_ss = replication_seed(dgp.seed, n, rep).spawn(2)
    dataset, true_tau = generate(cfg, np.random.default_rng(data_ss), covariate_seed)
    run_cfg = dataclasses.replace(config, seed=int(fold_ss.generate_state(1)[0]))
    try:
        return true_tau, run_estimators(dataset, estimators, run_cfg, alpha_level), None
    except (FusionError, np.linalg.LinAlgError) as exc:
        logger.warning("n=%d replication %d failed: %s", n, rep, exc)
        return true_tau, None, {"n": n, "replication": rep, "error": type(exc).__name__, "message": str(exc)}


def run_benchmark(
    dgp: DgpConfig,
    sizes: Sequence[int],
    repeats: int,
    estimators: Sequence[str] = ESTIMATORS,
    config: CrossFitConfig = CrossFitConfig(),
    alpha_level: float = 0.05,
    workers: int = 1,
) -> BenchmarkReport:
    """Monte Carlo comparison of ATE estimators across sample sizes.

    Each (n, replication) pair owns an RNG stream derived from
    ``(dgp.seed, n, replication)``, so results do not depend on ``workers``.
    For the efficiency design the covariates are drawn once per n and only
    assignments and noise are redrawn.
    """
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    tasks = [(int(n), rep) for n in sizes for rep in range(repeats)]
    run = lambda task: _replication(dgp, task[0], task[1], estimators, config, alpha_level)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]

    report = BenchmarkReport(dgp=dgp, true_tau=results[0][0], replications=repeats)
    for (n, rep), (_, estimates, failure) in zip(tasks, results):
        if failure is not None:
            report.failures.append(failure)
            continue
        for name in estimators:
            r = estimates[name]
            report.rows.append(BenchmarkRow(name, n, rep, r.tau_hat, r.se, r.ci_low, r.ci_high))
    return report
