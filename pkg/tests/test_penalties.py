import itertools
import math

import numpy as np
import pytest

from conftest import random_fixture
from repen import penalties as pn
from repen import resampling as rs
from repen.exceptions import UndefinedModelError
from repen.histmodels import Partition, Regular, build_family, empirical_risk, fit, truth_stats
from repen.resampling import Efron, LeaveOneOut, Rademacher, RandomHoldOut, VFold
from repen.synthdata import ConstantSigma, DataSet, RegressionSpec, SinPi, generate

EXCHANGEABLE = [Efron(), Rademacher(), RandomHoldOut(), LeaveOneOut()]


def definition_penalty(f, data, weights, probs):
    """Sum over cells of E[(p_hat + p_hat^W)(beta^W - beta_hat)^2 | cell weight > 0]."""
    n = data.n
    total = 0.0
    for k in range(f.dim):
        idx = np.flatnonzero(f.cells == k)
        num = den = 0.0
        for w, pr in zip(weights, probs):
            sw = w[idx].sum()
            if sw == 0:
                continue
            bw = (w[idx] @ data.y[idx]) / sw
            num += pr * (idx.size + sw) / n * (bw - f.means[k]) ** 2
            den += pr
        total += num / den
    return total


@pytest.mark.parametrize("n", [6, 9, 12])
def test_closed_form_matches_subset_enumeration(n):
    rng = np.random.default_rng(n)
    for q in (n // 2, n - 1, 2):
        part, data, f = random_fixture(rng, n=n, D=2)
        W = []
        for sub in itertools.combinations(range(n), q):
            w = np.zeros(n)
            w[list(sub)] = n / q
            W.append(w)
        W = np.array(W)
        probs = np.full(len(W), 1 / len(W))
        closed = pn.resampling_penalty_closed(f, RandomHoldOut(q), 1.0).value
        assert closed == pytest.approx(definition_penalty(f, data, W, probs), rel=1e-12)
        val, _ = pn.penalty_from_weights(f, data, W, 1.0, probs)
        assert closed == pytest.approx(val, rel=1e-12)


def test_efron_closed_form_matches_composition_enumeration():
    from scipy import stats

    rng = np.random.default_rng(3)
    part, data, f = random_fixture(rng, n=7, D=2)
    n = q = 7
    rows, probs = [], []
    for cuts in itertools.combinations(range(q + n - 1), n - 1):
        c = np.diff(np.concatenate([[-1], cuts, [q + n - 1]])) - 1
        rows.append(c * n / q)
        probs.append(stats.multinomial.pmf(c, q, np.full(n, 1 / n)))
    closed = pn.resampling_penalty_closed(f, Efron(), 1.0).value
    assert closed == pytest.approx(definition_penalty(f, data, np.array(rows), np.array(probs)), rel=1e-11)


@pytest.mark.parametrize("scheme", EXCHANGEABLE, ids=lambda s: type(s).__name__)
def test_closed_form_matches_monte_carlo(scheme):
    rng = np.random.default_rng(17)
    for _ in range(5):
        part, data, f = random_fixture(rng)
        closed = pn.resampling_penalty_closed(f, scheme, 1.0).value
        mc = pn.resampling_penalty_mc(f, data, scheme, 1.0, 20_000, rng)
        assert abs(closed - mc.value) <= 4 * mc.se


def test_zero_within_cell_variance():
    d = DataSet(np.array([0.1, 0.2, 0.6, 0.9]), np.array([1.0, 1.0, 4.0, 4.0]))
    f = fit(Partition(np.array([0, 0.5, 1.0])), d)
    for s in EXCHANGEABLE:
        assert pn.resampling_penalty_closed(f, s, 1.0).value == 0.0
    assert pn.vfold_penalty(f, d, np.array([0, 1, 0, 1])).value == 0.0


def test_singleton_cells_have_zero_penalty():
    d = DataSet(np.array([0.1, 0.6]), np.array([1.0, 3.0]))
    f = fit(Partition(np.array([0, 0.5, 1.0])), d)
    for s in EXCHANGEABLE:
        assert pn.resampling_penalty_closed(f, s, 1.0).value == 0.0


def test_unit_weights_give_zero():
    rng = np.random.default_rng(0)
    part, data, f = random_fixture(rng)
    val, _ = pn.penalty_from_weights(f, data, np.ones((10, data.n)), 1.0)
    assert val == pytest.approx(0.0, abs=1e-25)


def test_undefined_model_rejected():
    d = DataSet(np.array([0.1, 0.2]), np.array([1.0, 3.0]))
    f = fit(Partition(np.array([0, 0.5, 1.0])), d)
    with pytest.raises(UndefinedModelError):
        pn.resampling_penalty_closed(f, Rademacher(), 1.0)
    assert pn.criterion(f, 0.0).total == math.inf


def test_vfold_rejected_by_closed_form():
    rng = np.random.default_rng(0)
    _, _, f = random_fixture(rng)
    with pytest.raises(TypeError):
        pn.resampling_penalty_closed(f, VFold(2), 1.0)


def test_mc_se_scales_with_draws():
    rng = np.random.default_rng(8)
    part, data, f = random_fixture(rng, n=40, D=3)
    ratios = []
    for _ in range(10):
        a = pn.resampling_penalty_mc(f, data, Rademacher(), 1.0, 2000, rng).se
        b = pn.resampling_penalty_mc(f, data, Rademacher(), 1.0, 4000, rng).se
        ratios.append(a / b)
    assert np.mean(ratios) == pytest.approx(math.sqrt(2), rel=0.1)


def test_vfold_with_singleton_blocks_is_leave_one_out(rng):
    for n in (8, 20, 50):
        part, data, f = random_fixture(rng, n=n, D=3)
        loo = pn.resampling_penalty_closed(f, LeaveOneOut(), n - 1.0).value
        vf = pn.vfold_penalty(f, data, np.arange(n)).value
        assert vf == pytest.approx(loo, rel=1e-12)


def test_vfold_matches_explicit_vectors(rng):
    for V in (2, 3, 5):
        part, data, f = random_fixture(rng, n=30, D=3)
        blocks = rs.make_blocks(30, V, rng)
        W = np.array([np.where(blocks == j, 0.0, V / (V - 1)) for j in range(V)])
        want = definition_penalty(f, data, W, np.full(V, 1 / V))
        assert pn.vfold_penalty(f, data, blocks, 1.0).value == pytest.approx(want, rel=1e-12)


def test_vfold_aligned_blocks_hand_example():
    # cells {0,1} and {2,3}, blocks {0,1} and {2,3}: each cell survives one fold only
    d = DataSet(np.array([0.1, 0.2, 0.6, 0.9]), np.array([1.0, 3.0, 2.0, 6.0]))
    f = fit(Partition(np.array([0, 0.5, 1.0])), d)
    val = pn.vfold_penalty(f, d, np.array([0, 0, 1, 1]), 1.0).value
    # surviving fold keeps the whole cell with weight 2: beta^W = beta_hat
    assert val == 0.0
    val = pn.vfold_penalty(f, d, np.array([0, 1, 0, 1]), 1.0).value
    # each fold keeps one point per cell with weight 2: (n_cell + 2) / n * (y_i - mean)^2
    cell_a = ((1.0 - 2.0) ** 2 + (3.0 - 2.0) ** 2) / 2
    cell_b = ((2.0 - 4.0) ** 2 + (6.0 - 4.0) ** 2) / 2
    assert val == pytest.approx((2 + 2) / 4 * (cell_a + cell_b), rel=1e-14)


def test_ideal_penalty_examples():
    q = Partition(np.array([0.0, 1.0]))
    d = DataSet(np.array([0.3, 0.8]), np.array([1.0, 2.0]))
    f = fit(q, d)
    spec = RegressionSpec(SinPi(), ConstantSigma(1), 2)
    t = truth_stats(q, spec)
    t_exact = type(t)(p=t.p, beta=f.means.copy(), bias=t.bias, sigma2=t.sigma2)
    assert pn.ideal_penalty(f, t_exact) == 0.0
    t_half = type(t)(p=np.array([1.0]), beta=f.means - 0.5, bias=t.bias, sigma2=t.sigma2)
    assert pn.ideal_penalty(f, t_half) == pytest.approx(0.5)


def test_mallows_penalty():
    f = fit(Partition(np.linspace(0, 1, 11)), DataSet(np.linspace(0, 1, 200), np.zeros(200)))
    assert pn.mallows_penalty(f, 1.0, 200) == pytest.approx(0.1)
    assert pn.mallows_penalty(f, 0.0, 200) == 0.0
    f2 = fit(Partition(np.linspace(0, 1, 21)), DataSet(np.linspace(0, 1, 200), np.zeros(200)))
    assert pn.mallows_penalty(f2, 1.0, 200) == pytest.approx(2 * pn.mallows_penalty(f, 1.0, 200))


def test_estimate_sigma2_examples():
    x = (np.arange(200) + 0.5) / 200
    assert pn.estimate_sigma2(DataSet(x, np.full(200, 3.0)),
                              [fit(q, DataSet(x, np.full(200, 3.0))) for q in build_family(Regular(), 200)]) == 0.0
    # 10 cells of 20 points, within-cell sum of squares 2 each
    y = np.zeros(200)
    y[0::20], y[1::20] = 1.0, -1.0
    d = DataSet(x, y)
    f = fit(Partition(np.linspace(0, 1, 11)), d)
    assert np.allclose(f.sumsq, 2.0)
    assert pn.estimate_sigma2(d, [f]) == pytest.approx(200 * (20 / 200) / 190, rel=1e-12)


def test_estimate_sigma2_gaussian():
    rng = np.random.default_rng(4)
    n = 100_000
    d = DataSet(rng.random(n), rng.normal(size=n))
    s2 = pn.estimate_sigma2(d, [fit(Partition(np.array([0.0, 1.0])), d)])
    assert abs(s2 - 1.0) < 5 * math.sqrt(2 / n)


def test_vfcv_noiseless_in_model():
    rng = np.random.default_rng(2)
    x = rng.random(60)
    y = np.where(x < 0.5, 1.0, -2.0)
    q = Partition(np.array([0.0, 0.5, 1.0]))
    cv = pn.vfcv_criterion(q, DataSet(x, y), rs.make_blocks(60, 5, rng))
    assert cv.defined and cv.total == 0.0


def test_vfcv_constant_model_definition(rng):
    n, V = 37, 4
    d = DataSet(rng.random(n), rng.normal(size=n))
    blocks = rs.make_blocks(n, V, rng)
    cv = pn.vfcv_criterion(Partition(np.array([0.0, 1.0])), d, blocks)
    want = np.mean([np.mean((d.y[blocks == j] - d.y[blocks != j].mean()) ** 2) for j in range(V)])
    assert cv.total == pytest.approx(want, rel=1e-12)


def test_vfcv_general_matches_refits(rng):
    n, V = 80, 5
    d = DataSet(rng.random(n), rng.normal(size=n))
    blocks = rs.make_blocks(n, V, rng)
    q = Partition(np.array([0.0, 0.3, 0.55, 1.0]))
    cv = pn.vfcv_criterion(q, d, blocks)
    errs = []
    for j in range(V):
        tr, te = blocks != j, blocks == j
        ftr = fit(q, DataSet(d.x[tr], d.y[tr]))
        errs.append(np.mean((d.y[te] - ftr.predict(d.x[te])) ** 2))
    assert cv.total == pytest.approx(np.mean(errs), rel=1e-12)


def test_vfcv_fold_emptying_cell_is_undefined():
    d = DataSet(np.array([0.1, 0.2, 0.6, 0.9]), np.array([1.0, 3.0, 2.0, 6.0]))
    cv = pn.vfcv_criterion(Partition(np.array([0, 0.5, 1.0])), d, np.array([0, 0, 1, 1]))
    assert not cv.defined and cv.total == math.inf


def test_scaling_by_constant(rng):
    part, data, f = random_fixture(rng, n=40, D=3)
    c = -3.0
    d2 = DataSet(data.x, c * data.y)
    f2 = fit(part, d2)
    blocks = rs.make_blocks(40, 4, rng)
    assert empirical_risk(f2) == pytest.approx(c * c * empirical_risk(f), rel=1e-12)
    for s in EXCHANGEABLE:
        a = pn.resampling_penalty_closed(f, s, 1.0).value
        assert pn.resampling_penalty_closed(f2, s, 1.0).value == pytest.approx(c * c * a, rel=1e-12)
    a = pn.vfold_penalty(f, data, blocks).value
    assert pn.vfold_penalty(f2, d2, blocks).value == pytest.approx(c * c * a, rel=1e-12)
    s2 = pn.estimate_sigma2(data, [f])
    assert pn.estimate_sigma2(d2, [f2]) == pytest.approx(c * c * s2, rel=1e-12)


def test_penalties_nonnegative(rng):
    for _ in range(20):
        part, data, f = random_fixture(rng)
        for s in EXCHANGEABLE:
            assert pn.resampling_penalty_closed(f, s, 1.0).value >= 0
        assert pn.vfold_penalty(f, data, rs.make_blocks(data.n, 2, rng)).value >= 0


@pytest.mark.parametrize("scheme", EXCHANGEABLE, ids=lambda s: type(s).__name__)
def test_expected_penalty_tracks_ideal(scheme):
    spec = RegressionSpec(SinPi(), ConstantSigma(1.0), 200)
    q = Partition(np.linspace(0, 1, 5))
    truth = truth_stats(q, spec)
    pen, ideal = [], []
    for r in range(500):
        d = generate(spec, np.random.SeedSequence([99, r]))
        f = fit(q, d)
        assert f.min_count >= 20
        C = rs.default_constant(scheme, 200)
        pen.append(pn.resampling_penalty_closed(f, scheme, C).value)
        ideal.append(pn.ideal_penalty(f, truth))
    assert 0.8 <= np.mean(pen) / np.mean(ideal) <= 1.25
