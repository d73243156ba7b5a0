import json
import math

import numpy as np
import pytest

from fusion_dml.core import validate_dataset
from fusion_dml.crossfit import CrossFitConfig
from fusion_dml.simulate import (
    DgpConfig,
    efficiency_oracle,
    expit,
    fusion_oracle,
    generate,
    generate_confounded_dgp,
    generate_efficiency_dgp,
    generate_fusion_dgp,
    run_benchmark,
    run_estimators,
)


def within(value, target, sd, n, k=4.0):
    return abs(value - target) < k * sd / math.sqrt(n)


def test_fusion_moments():
    n = 20000
    ds, tau = generate_fusion_dgp(n, seed=0)
    assert tau == 1.0
    assert ds.d == 5 and ds.covariate_names == ("x0", "x1", "x2", "x3", "x4")
    for j in range(5):
        assert within(ds.x[:, j].mean(), 0.5, 5.0, n)
        assert abs(ds.x[:, j].std() / 5.0 - 1) < 0.03
    exp = ds.s == 1
    assert within(ds.t[exp].mean(), 0.5, 0.5, exp.sum())
    # mean of X1 + X3 estimates the population effect
    assert within((ds.x[:, 1] + ds.x[:, 3]).mean(), tau, math.sqrt(50), n)


def test_fusion_selection_probability_by_quadrature():
    # E[0.5 expit(Z)], Z = X1 - X2 ~ N(0, 50), via Gauss-Hermite quadrature
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    expected = 0.5 * float(weights @ expit(math.sqrt(50) * nodes)) / math.sqrt(2 * math.pi)
    assert expected == pytest.approx(0.25, abs=1e-9)
    ds, _ = generate_fusion_dgp(20000, seed=1)
    assert within(ds.s.mean(), expected, 0.5, ds.n)


def test_efficiency_moments():
    n = 20000
    ds, tau = generate_efficiency_dgp(n, seed=0)
    assert tau == 0.0 and ds.d == 4
    assert within(ds.s.mean(), 0.5, 0.5, n)
    orc = efficiency_oracle(ds)
    resid = ds.y - orc.mu[np.arange(n), ds.t, ds.s]
    assert within(resid.mean(), 0.0, 1.0, n)
    assert abs(resid.std() - 1.0) < 0.03


def test_efficiency_fixed_covariates():
    a, _ = generate_efficiency_dgp(100, seed=1, covariate_seed=5)
    b, _ = generate_efficiency_dgp(100, seed=2, covariate_seed=5)
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(a.y, b.y)


def test_confounded_zero_strength_matches_fusion():
    a, _ = generate_confounded_dgp(500, seed=3, strength=0.0)
    b, _ = generate_fusion_dgp(500, seed=3)
    assert a.equals(b)


def test_oracle_shapes():
    ds, _ = generate_fusion_dgp(50, seed=0)
    orc = fusion_oracle(ds)
    np.testing.assert_allclose(orc.e.sum(axis=1), 1.0)
    np.testing.assert_array_equal(orc.mu[:, :, 0], orc.mu[:, :, 1])


@pytest.mark.parametrize("kind", ["fusion_s7", "efficiency_appD", "confounded"])
def test_generated_data_validates(kind):
    ds, _ = generate(DgpConfig(kind, 300, seed=2, confounding_strength=1.0))
    assert validate_dataset(ds).equals(ds)
    a, _ = generate(DgpConfig(kind, 300, seed=2, confounding_strength=1.0))
    assert a.equals(ds)


def test_config_validation():
    with pytest.raises(ValueError):
        DgpConfig("unknown")
    with pytest.raises(ValueError):
        DgpConfig(n=0)
    with pytest.raises(ValueError):
        DgpConfig(confounding_strength=-1.0)


def test_run_estimators_names():
    ds, _ = generate_fusion_dgp(500, seed=0)
    out = run_estimators(ds)
    assert set(out) == {"dml_fusion", "exp_aipw", "exp_ipw", "exp_diff", "obs_aipw"}
    with pytest.raises(ValueError):
        run_estimators(ds, ["magic"])


def test_benchmark_deterministic_and_worker_independent(tmp_path):
    dgp = DgpConfig("fusion_s7", seed=4)
    a = run_benchmark(dgp, [250, 500], repeats=2)
    b = run_benchmark(dgp, [250, 500], repeats=2, workers=2)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    assert len(a.rows) == 2 * 2 * 5
    summary = {(r["estimator"], r["n"]): r for r in a.summary()}
    assert set(summary) == {(e, n) for e in ("dml_fusion", "exp_aipw", "exp_ipw", "exp_diff", "obs_aipw") for n in (250, 500)}
    path = tmp_path / "rows.csv"
    a.to_csv(path)
    assert path.read_text().splitlines()[0] == "estimator,n,replication,estimate,se"
    with pytest.raises(ValueError):
        run_benchmark(dgp, [250], repeats=1)


@pytest.mark.slow
def test_dml_bias_shrinks_with_n():
    rep = run_benchmark(DgpConfig("fusion_s7", seed=11), [250, 2000], repeats=40, estimators=["dml_fusion"],
                        config=CrossFitConfig())
    assert rep.mse("dml_fusion", 2000) < rep.mse("dml_fusion", 250)
