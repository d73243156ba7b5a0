import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from fusion_dml.crossfit import CrossFitConfig
from fusion_dml.inference import run_test
from fusion_dml.sensitivity import breakdown_scan, debias_outcomes, parse_grid
from fusion_dml.simulate import generate_efficiency_dgp


def inject_bias(dataset, alpha):
    """Add alpha (2T - 1) to observational outcomes: the exact inverse of debiasing."""
    shift = alpha * (2.0 * dataset.t - 1.0)
    return dataset.with_outcome(np.where(dataset.s == 0, dataset.y + shift, dataset.y))


def test_debias_examples():
    ds = make_dataset([10.0, 10.0, 10.0, 10.0], [1, 0, 1, 0], [0, 0, 1, 1])
    assert debias_outcomes(ds, 0.0) is ds
    out = debias_outcomes(ds, 2.0)
    np.testing.assert_array_equal(out.y, [8.0, 12.0, 10.0, 10.0])
    np.testing.assert_array_equal(out.t, ds.t)
    np.testing.assert_array_equal(ds.y, 10.0)  # input untouched


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(-50, 50), n=st.integers(1, 40))
def test_debias_round_trip(seed, alpha, n):
    rng = np.random.default_rng(seed)
    ds = make_dataset(rng.normal(scale=20, size=n), rng.integers(0, 2, n), rng.integers(0, 2, n))
    back = debias_outcomes(debias_outcomes(ds, alpha), -alpha)
    np.testing.assert_allclose(back.y, ds.y, rtol=0, atol=1e-12)


def test_parse_grid():
    grid = parse_grid("0:35:1")
    assert grid.size == 36 and grid[0] == 0 and grid[-1] == 35
    np.testing.assert_allclose(parse_grid("-1:1:0.5"), [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_array_equal(parse_grid("3, 1.5,7"), [3, 1.5, 7])
    for bad in ("", "  ", "5:1:1", "0:1:0"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_scan_rejects_bad_grid():
    ds, _ = generate_efficiency_dgp(200, seed=0)
    with pytest.raises(ValueError):
        breakdown_scan(ds, 1, [])
    with pytest.raises(ValueError):
        breakdown_scan(ds, 1, [1.0, 0.0])


def test_scan_invariants_and_determinism(tmp_path):
    ds, _ = generate_efficiency_dgp(800, seed=3)
    biased = inject_bias(ds, 5.0)
    grid = parse_grid("0:10:1")
    a = breakdown_scan(biased, 1, grid)
    b = breakdown_scan(biased, 1, grid)
    np.testing.assert_array_equal(a.p_values, b.p_values)
    assert a.p_values.shape == grid.shape
    assert np.all((a.p_values >= 0) & (a.p_values <= 1))
    assert a.peak_alpha in grid
    assert 3 <= a.peak_alpha <= 7
    lo, hi = a.non_rejection_interval
    assert lo in grid and hi in grid and lo <= a.peak_alpha <= hi
    path = tmp_path / "curve.csv"
    a.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "alpha,p_value" and len(lines) == 12


def test_scan_matches_run_test_pointwise():
    ds, _ = generate_efficiency_dgp(500, seed=4)
    cfg = CrossFitConfig(seed=7)
    curve = breakdown_scan(ds, 0, [0.0, 1.5], cfg)
    direct = run_test(debias_outcomes(ds, 1.5), cfg, levels=(0,), correction="none")
    assert curve.p_values[1] == direct.levels[0].p_value


def test_debiasing_at_true_alpha_undoes_injection():
    # outcome fits are shift-equivariant, so theta at alpha* equals theta on clean data
    ds, _ = generate_efficiency_dgp(600, seed=9)
    clean = breakdown_scan(ds, 1, [0.0])
    biased = breakdown_scan(inject_bias(ds, 5.0), 1, [5.0])
    assert biased.theta_hats[0] == pytest.approx(clean.theta_hats[0], abs=1e-8)


def test_no_rejection_region_reported_as_none():
    ds, _ = generate_efficiency_dgp(2000, seed=1)
    curve = breakdown_scan(inject_bias(ds, 30.0), 1, [0.0, 1.0])
    assert curve.non_rejection_interval is None
    assert curve.to_dict()["non_rejection_interval"] is None
