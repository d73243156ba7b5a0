import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusion_dml.core import read_csv, validate_dataset, write_csv
from fusion_dml.errors import (
    DataError,
    EmptyCell,
    NonBinaryIndicator,
    NonFiniteValue,
    PropensityOutOfRange,
)
from fusion_dml.simulate import generate_fusion_dgp


def table(**extra):
    cols = {"y": [1.0, 2.0, 3.0, 4.0], "t": [0, 1, 0, 1], "s": [0, 0, 1, 1], "x1": [0.1, 0.2, 0.3, 0.4]}
    cols.update(extra)
    return cols


def test_minimal_complete_design():
    ds = validate_dataset(table(), require_levels=(0, 1))
    counts = ds.cell_counts()
    assert (counts.t0s0, counts.t1s0, counts.t0s1, counts.t1s1) == (1, 1, 1, 1)
    assert counts.total == ds.n == 4
    assert ds.d == 1


def test_non_binary_treatment():
    with pytest.raises(NonBinaryIndicator):
        validate_dataset(table(t=[0, 2, 0, 1]))


def test_non_finite_rejected():
    with pytest.raises(NonFiniteValue):
        validate_dataset(table(y=[1.0, np.nan, 3.0, 4.0]))
    with pytest.raises(NonFiniteValue):
        validate_dataset(table(x1=[0.1, np.inf, 0.3, 0.4]))


def test_propensity_range():
    with pytest.raises(PropensityOutOfRange):
        validate_dataset(table(p_samp=[0.5, 0.5, 1.0, 0.5]))
    ds = validate_dataset(table(e_exp=[0.5] * 4, p_samp=[0.2, 0.3, 0.4, 0.5]))
    assert ds.known_p[3] == 0.5 and ds.known_e_exp is not None


def test_empty_cell_only_for_requested_levels():
    cols = {"y": [1.0, 2.0, 3.0], "t": [0, 0, 1], "s": [0, 1, 1], "x1": [0.0, 1.0, 2.0]}
    ds = validate_dataset(cols, require_levels=(0,))
    assert ds.cell_counts().t1s0 == 0
    with pytest.raises(EmptyCell):
        validate_dataset(cols, require_levels=(0, 1))


def test_missing_covariates():
    with pytest.raises(DataError):
        validate_dataset({"y": [1.0], "t": [0], "s": [1]})


def test_fusion_draw_experimental_fraction():
    # E[S] = E[0.5 expit(X1 - X2)] = 0.25 because X1 - X2 is symmetric about 0
    ds, _ = generate_fusion_dgp(2000, seed=11)
    assert abs(ds.s.mean() - 0.25) < 0.03


def test_dataset_is_read_only():
    ds = validate_dataset(table())
    with pytest.raises(ValueError):
        ds.y[0] = 10.0


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 30),
    d=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
    with_props=st.booleans(),
)
def test_validation_is_idempotent(n, d, seed, with_props):
    rng = np.random.default_rng(seed)
    cols = {"y": rng.normal(size=n), "t": rng.integers(0, 2, n), "s": rng.integers(0, 2, n)}
    for j in range(d):
        cols[f"x{j + 1}"] = rng.normal(size=n)
    if with_props:
        cols["e_exp"] = rng.uniform(0.05, 0.95, n)
        cols["p_samp"] = rng.uniform(0.05, 0.95, n)
    once = validate_dataset(cols)
    twice = validate_dataset(once)
    assert once.equals(twice)
    counts = once.cell_counts()
    assert counts.total == n


def test_csv_round_trip(tmp_path):
    ds, _ = generate_fusion_dgp(50, seed=1)
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    back = read_csv(path)
    assert back.equals(ds)
    header = path.read_text().splitlines()[0]
    assert header == "y,t,s,x0,x1,x2,x3,x4"


def test_csv_bad_value(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,t,s,x1\n1.0,0,0,0.5\n2.0,2,1,0.1\n")
    with pytest.raises(NonBinaryIndicator):
        read_csv(path)
    path.write_text("y,t,s,x1\n1.0,0,0,\n")
    with pytest.raises(NonFiniteValue):
        read_csv(path)
