"""Breakdown-frontier scan over the bias family q(X, T; a) = a (2T - 1).

Observational outcomes are debiased by subtracting ``a`` from treated and
adding ``a`` to control units; the theta test is then re-run. Values of ``a``
at which the test does not reject are plausible bias magnitudes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Dataset
from .crossfit import CrossFitConfig
from .inference import run_test


def debias_outcomes(dataset: Dataset, alpha: float) -> Dataset:
    """Remove the assumed selection bias from observational (S=0) outcomes."""
    if alpha == 0:
        return dataset
    shift = alpha * (2.0 * dataset.t - 1.0)
    y = np.where(dataset.s == 0, dataset.y - shift, dataset.y)
    return dataset.with_outcome(y)


@dataclass(frozen=True, eq=False)
class SensitivityCurve:
    alphas: np.ndarray
    p_values: np.ndarray
    theta_hats: np.ndarray
    level: int
    alpha_level: float
    non_rejection_interval: Optional[tuple[float, float]]
    peak_alpha: float

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "alpha_level": self.alpha_level,
            "peak_alpha": self.peak_alpha,
            "peak_p_value": float(self.p_values.max()),
            "non_rejection_interval": None if self.non_rejection_interval is None else list(self.non_rejection_interval),
            "alphas": self.alphas.tolist(),
            "p_values": self.p_values.tolist(),
            "theta_hats": self.theta_hats.tolist(),
        }

    def to_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha", "p_value"])
            for a, p in zip(self.alphas, self.p_values):
                writer.writerow([repr(float(a)), repr(float(p))])


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise ValueError("empty grid")
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        start, stop, step = parts
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(count)
    return np.array([float(v) for v in text.split(",")])


def breakdown_scan(
    dataset: Dataset,
    level: int,
    grid: Sequence[float],
    config: CrossFitConfig = CrossFitConfig(),
    alpha_level: float = 0.05,
) -> SensitivityCurve:
    """Re-run the theta(level) test on outcomes debiased at each grid value.

    The fold seeds are the same at every grid point.
    """
    alphas = np.asarray(grid, dtype=float)
    if alphas.ndim != 1 or alphas.size == 0:
        raise ValueError("grid must be a nonempty 1-d sequence")
    if np.any(np.diff(alphas) <= 0):
        raise ValueError("grid must be strictly ascending")
    p_values = np.empty(alphas.size)
    thetas = np.empty(alphas.size)
    for j, a in enumerate(alphas):
        report = run_test(debias_outcomes(dataset, float(a)), config, levels=(level,),
                          alpha_level=alpha_level, correction="none")
        p_values[j] = report.levels[level].p_value
        thetas[j] = report.levels[level].theta_hat
    keep = alphas[p_values >= alpha_level]
    interval = (float(keep.min()), float(keep.max())) if keep.size else None
    return SensitivityCurve(
        alphas=alphas,
        p_values=p_values,
        theta_hats=thetas,
        level=int(level),
        alpha_level=alpha_level,
        non_rejection_interval=interval,
        peak_alpha=float(alphas[int(np.argmax(p_values))]),
    )
