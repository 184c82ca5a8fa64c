import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repen.synthdata import (
    Constant,
    ConstantSigma,
    DataSet,
    HeaviSine,
    LinearSigma,
    RegressionSpec,
    SinPi,
    eval_noise,
    eval_regression,
    generate,
    replication_seed,
)


def test_regression_values():
    assert eval_regression(SinPi(), 0.5) == pytest.approx(1.0, abs=1e-15)
    assert eval_regression(HeaviSine(), 0.5) == pytest.approx(-2.0, abs=1e-12)
    assert eval_regression(Constant(3.2), 0.71) == 3.2


def test_noise_values():
    assert eval_noise(ConstantSigma(1.0), 0.3) == 1.0
    assert eval_noise(LinearSigma(), 0.25) == 0.25
    assert eval_noise(ConstantSigma(0.0), 0.9) == 0.0


@pytest.mark.parametrize("x", [-0.1, 1.5, math.nan])
def test_outside_unit_interval(x):
    with pytest.raises(ValueError):
        eval_regression(SinPi(), x)
    with pytest.raises(ValueError):
        eval_noise(LinearSigma(), x)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        ConstantSigma(-1.0)


def test_noiseless_constant():
    d = generate(RegressionSpec(Constant(2.5), ConstantSigma(0.0), 50), 3)
    assert np.all(d.y == 2.5)


def test_same_seed_bit_identical():
    spec = RegressionSpec(HeaviSine(), LinearSigma(), 300)
    a, b = generate(spec, replication_seed(7, 3)), generate(spec, replication_seed(7, 3))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    c = generate(spec, replication_seed(7, 4))
    assert not np.array_equal(a.x, c.x)


def test_mean_of_y_sinpi():
    spec = RegressionSpec(SinPi(), ConstantSigma(1.0), 200)
    ys = np.concatenate([generate(spec, replication_seed(0, r)).y for r in range(500)])
    se = ys.std(ddof=1) / math.sqrt(ys.size)
    assert abs(ys.mean() - 2 / math.pi) < 5 * se


def test_design_and_noise_marginals():
    spec = RegressionSpec(SinPi(), LinearSigma(), 200_000)
    d = generate(spec, 11)
    n = d.n
    assert abs(d.x.mean() - 0.5) < 5 * math.sqrt(1 / 12 / n)
    # variance of X: sd of (X - 1/2)^2 is 1/sqrt(180)
    assert abs(d.x.var() - 1 / 12) < 5 * math.sqrt(1 / 180 / n)
    # (Y - s(X)) / sigma(X) is standard normal
    z = (d.y - np.sin(np.pi * d.x)) / d.x
    assert abs(z.var() - 1.0) < 5 * math.sqrt(2 / n)


def test_heavisine_jumps_only_at_discontinuities():
    f = HeaviSine()
    assert f.discontinuities == (0.3, 0.72)
    eps = 1e-9
    for a in f.discontinuities:
        assert abs(f(np.array([a + eps]))[0] - f(np.array([a - eps]))[0]) > 1.0
    grid = np.linspace(0, 1, 20001)
    grid = grid[np.min(np.abs(grid[:, None] - np.array(f.discontinuities)), axis=1) > 1e-3]
    jumps = np.abs(f(grid + 1e-7 * (grid < 1)) - f(grid))
    assert jumps.max() < 1e-4


def test_dataset_validation():
    with pytest.raises(ValueError):
        DataSet(np.array([0.1, 0.2]), np.array([1.0]))
    with pytest.raises(ValueError):
        DataSet(np.array([0.1, 1.2]), np.array([1.0, 2.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 10_000), st.integers(2, 300))
def test_generate_is_pure(master, r, n):
    spec = RegressionSpec(SinPi(), ConstantSigma(0.5), n)
    a = generate(spec, replication_seed(master, r))
    b = generate(spec, replication_seed(master, r))
    assert a.n == n
    assert np.array_equal(a.y, b.y)
    assert np.all((a.x >= 0) & (a.x <= 1))
