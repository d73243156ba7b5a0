"""Command-line entry point: ``fusion-dml {test,estimate,sensitivity,simulate,benchmark}``.

Exit codes: 0 the command ran (whatever the statistical decision), 2 bad
input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from . import __version__
from .core import read_csv, write_csv
from .crossfit import CrossFitConfig
from .errors import DataError, FusionError, NumericalError
from .inference import (
    baseline_experimental_ate,
    baseline_observational_ate,
    run_ate,
    run_test,
)
from .learners import LearnerSpec
from .sensitivity import breakdown_scan, parse_grid
from .simulate import ESTIMATORS, DgpConfig, generate, run_benchmark

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "FUSION_DML_THREADS"

logger = logging.getLogger("fusion_dml")


@dataclass
class RunConfig:
    command: str = "test"
    input: Optional[str] = None
    output: Optional[str] = None
    csv: Optional[str] = None
    dgp: str = "fusion_s7"
    n: list[int] = field(default_factory=lambda: [2000])
    strength: float = 0.0
    folds: int = 5
    repeats: int = 1
    aggregate: str = "mean"
    seed: int = 0
    outcome_learner: str = "ridge_linear"
    outcome_lam: float = 1e-3
    propensity_learner: str = "logistic"
    propensity_lam: float = 1e-3
    knn_k: int = 10
    clip: float = 0.01
    alpha_level: float = 0.05
    correction: str = "auto"
    levels: list[int] = field(default_factory=lambda: [0, 1])
    level: int = 1
    grid: str = "0:35:1"
    baselines: list[str] = field(default_factory=list)
    estimators: list[str] = field(default_factory=lambda: list(ESTIMATORS))
    mc_repeats: int = 10

    def crossfit(self) -> CrossFitConfig:
        return CrossFitConfig(
            folds=self.folds,
            repeats=self.repeats,
            seed=self.seed,
            outcome_spec=LearnerSpec(self.outcome_learner, self.outcome_lam, self.knn_k, self.clip),
            propensity_spec=LearnerSpec(self.propensity_learner, self.propensity_lam, self.knn_k, self.clip),
            aggregate=self.aggregate,
        )

    def resolved_correction(self) -> str:
        if self.correction == "auto":
            return "bonferroni" if len(set(self.levels)) > 1 else "none"
        return self.correction

    def validate(self) -> None:
        if isinstance(self.n, int):
            self.n = [self.n]
        if isinstance(self.levels, int):
            self.levels = [self.levels]
        if not self.n or any(v < 1 for v in self.n):
            raise ValueError("n must be a list of positive sizes")
        if self.correction not in ("auto", "none", "bonferroni"):
            raise ValueError(f"unknown correction {self.correction!r}")
        if not 0 < self.alpha_level < 1:
            raise ValueError("alpha_level must lie in (0, 1)")
        if not self.levels or any(t not in (0, 1) for t in self.levels):
            raise ValueError("levels must be a nonempty subset of {0,1}")
        if self.level not in (0, 1):
            raise ValueError("level must be 0 or 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}")
        bad = set(self.baselines) - {"exp_diff", "exp_aipw", "obs_aipw"}
        if bad:
            raise ValueError(f"unknown baselines {sorted(bad)}")
        self.crossfit()


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _baselines(text: str) -> list[str]:
    if text == "all":
        return ["exp_diff", "exp_aipw", "obs_aipw"]
    if text == "none":
        return []
    return _str_list(text)


def _add_crossfit_args(p: argparse.ArgumentParser, repeats_flag: str = "--repeats") -> None:
    g = p.add_argument_group("cross-fitting")
    g.add_argument("--folds", type=int, help="number of cross-fitting folds K (default 5)")
    g.add_argument(repeats_flag, dest="repeats", type=int, help="repeated cross-fitting R (default 1)")
    g.add_argument("--aggregate", choices=["mean", "median"])
    g.add_argument("--seed", type=int)
    g.add_argument("--outcome-learner", choices=["ridge_linear", "knn_regress", "constant"])
    g.add_argument("--outcome-lam", type=float)
    g.add_argument("--propensity-learner", choices=["logistic", "knn_classify", "constant"])
    g.add_argument("--propensity-lam", type=float)
    g.add_argument("--knn-k", type=int)
    g.add_argument("--clip", type=float, help="probability clipping epsilon (default 0.01)")
    g.add_argument("--alpha-level", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fusion-dml", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        p.add_argument("--config", help="JSON file with RunConfig fields")
        if needs_input:
            p.add_argument("--input", help="input CSV (y,t,s,x1..xd[,e_exp,p_samp])")
        p.add_argument("--output", help="write the JSON report here instead of stdout")
        # benchmark spends --repeats on Monte Carlo replications
        _add_crossfit_args(p, "--repeats" if needs_input else "--crossfit-repeats")

    p = sub.add_parser("test", help="test external validity / conditional ignorability")
    common(p)
    p.add_argument("--levels", type=_int_list, help="treatment levels to test, e.g. 0,1")
    p.add_argument("--correction", choices=["auto", "none", "bonferroni"])

    p = sub.add_parser("estimate", help="doubly robust population ATE")
    common(p)
    p.add_argument("--baselines", type=_baselines, help="all, none, or a list of exp_diff,exp_aipw,obs_aipw")

    p = sub.add_parser("sensitivity", help="breakdown-frontier scan")
    common(p)
    p.add_argument("--level", type=int)
    p.add_argument("--grid", help="start:stop:step (inclusive) or comma list")
    p.add_argument("--csv", help="write the alpha,p_value curve here")

    p = sub.add_parser("simulate", help="draw a synthetic dataset as CSV")
    p.add_argument("--config")
    p.add_argument("--dgp", choices=["fusion_s7", "efficiency_appD", "confounded"])
    p.add_argument("--n", type=_int_list)
    p.add_argument("--seed", type=int)
    p.add_argument("--strength", type=float)
    p.add_argument("--output", help="CSV path (default stdout)")

    p = sub.add_parser("benchmark", help="Monte Carlo comparison of ATE estimators")
    common(p, needs_input=False)
    p.add_argument("--dgp", choices=["fusion_s7", "efficiency_appD", "confounded"])
    p.add_argument("--n", type=_int_list, help="comma-separated sample sizes")
    p.add_argument("--strength", type=float)
    p.add_argument("--repeats", "--mc-repeats", dest="mc_repeats", type=int,
                   help="Monte Carlo replications per n (default 10)")
    p.add_argument("--estimators", type=_str_list)
    p.add_argument("--csv", help="per-replication rows (estimator,n,replication,estimate,se)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    cfg = RunConfig(command=args.command)
    names = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {args.config}: {exc}") from None
        data = data.get("config", data)
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        for key, value in data.items():
            if key != "command":
                setattr(cfg, key, value)
    for key, value in vars(args).items():
        if key in names and key != "command" and value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _emit_json(payload: dict, output: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(cfg: RunConfig):
    if not cfg.input:
        raise ValueError("--input is required")
    return read_csv(cfg.input)


def cmd_test(cfg: RunConfig) -> dict:
    dataset = _load(cfg)
    report = run_test(dataset, cfg.crossfit(), cfg.levels, cfg.alpha_level, cfg.resolved_correction())
    out = report.to_dict()
    out["n"] = dataset.n
    out["cell_counts"] = dataset.cell_counts().as_dict()
    return out


def cmd_estimate(cfg: RunConfig) -> dict:
    dataset = _load(cfg)
    xf = cfg.crossfit()
    report = run_ate(dataset, xf, cfg.alpha_level)
    out = {"ate": report.to_dict(), "n": dataset.n, "cell_counts": dataset.cell_counts().as_dict()}
    if cfg.baselines:
        table = {"dml_fusion": {"tau_hat": report.tau_hat, "se": report.se,
                                "ci_low": report.ci_low, "ci_high": report.ci_high, "n_used": report.n}}
        if {"exp_diff", "exp_aipw"} & set(cfg.baselines):
            exp = baseline_experimental_ate(dataset, config=xf, alpha_level=cfg.alpha_level)
            for name in ("exp_diff", "exp_aipw"):
                if name in cfg.baselines:
                    table[name] = exp[name].to_dict()
        if "obs_aipw" in cfg.baselines:
            table["obs_aipw"] = baseline_observational_ate(dataset, config=xf, alpha_level=cfg.alpha_level).to_dict()
        out["comparison"] = table
    return out


def cmd_sensitivity(cfg: RunConfig) -> dict:
    dataset = _load(cfg)
    grid = parse_grid(cfg.grid)
    curve = breakdown_scan(dataset, cfg.level, grid, cfg.crossfit(), cfg.alpha_level)
    if cfg.csv:
        curve.to_csv(cfg.csv)
    return curve.to_dict()


def cmd_simulate(cfg: RunConfig) -> Optional[dict]:
    dataset, true_tau = generate(DgpConfig(cfg.dgp, cfg.n[0], cfg.seed, cfg.strength))
    write_csv(dataset, cfg.output if cfg.output else sys.stdout)
    logger.info("true_tau=%s", true_tau)
    return None


def cmd_benchmark(cfg: RunConfig) -> dict:
    dgp = DgpConfig(cfg.dgp, cfg.n[0], cfg.seed, cfg.strength)
    workers = int(os.environ.get(THREADS_ENV, "1"))
    report = run_benchmark(dgp, cfg.n, cfg.mc_repeats, cfg.estimators, cfg.crossfit(), cfg.alpha_level,
                           workers=workers)
    if cfg.csv:
        report.to_csv(cfg.csv)
    return report.to_dict()


COMMANDS = {
    "test": cmd_test,
    "estimate": cmd_estimate,
    "sensitivity": cmd_sensitivity,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
}


def _fail(code: int, exc: BaseException) -> int:
    name = exc.code if isinstance(exc, FusionError) else type(exc).__name__
    sys.stderr.write(json.dumps({"error": name, "message": str(exc)}) + "\n")
    return code


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        result = COMMANDS[cfg.command](cfg)
    except DataError as exc:
        return _fail(EXIT_INPUT, exc)
    except (NumericalError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_INPUT, exc)
    if result is not None:
        # where the report is written is not part of how it was computed
        result["config"] = {k: v for k, v in asdict(cfg).items() if k != "output"}
        _emit_json(result, cfg.output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
