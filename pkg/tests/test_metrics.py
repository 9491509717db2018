import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybrid_rc.barkley import FieldPair
from hybrid_rc.hybrid import plan_dims
from hybrid_rc.metrics import ErrorSeries, error_field, normalized_error, valid_time, wout_contribution
from hybrid_rc.reservoir import Readout


def loop_oracle(truth, pred):
    t_len = truth.shape[0]
    sq = []
    for t in range(t_len):
        s = 0.0
        for idx in np.ndindex(truth.shape[1:]):
            s += truth[(t,) + idx] ** 2
        sq.append(s)
    denom = math.sqrt(sum(sq) / t_len)
    out = []
    for t in range(t_len):
        s = 0.0
        for idx in np.ndindex(truth.shape[1:]):
            s += (truth[(t,) + idx] - pred[(t,) + idx]) ** 2
        out.append(math.sqrt(s) / denom)
    return np.array(out)


def test_error_zero_for_perfect_prediction():
    t = np.random.default_rng(0).random((5, 2, 3, 3))
    assert not normalized_error(t, t).values.any()


def test_error_of_zero_prediction_with_constant_norm():
    t = np.ones((6, 2, 2, 2))
    t[::2] *= -1  # sign flips keep the norm constant
    assert np.allclose(normalized_error(t, np.zeros_like(t)).values, 1.0, rtol=0, atol=1e-15)


def test_error_matches_loop_oracle():
    rng = np.random.default_rng(1)
    t = rng.standard_normal((3, 2, 2, 2))
    p = rng.standard_normal((3, 2, 2, 2))
    assert np.allclose(normalized_error(t, p).values, loop_oracle(t, p), rtol=0, atol=1e-12)


def test_error_rejects_zero_truth_and_shape_mismatch():
    with pytest.raises(ValueError):
        normalized_error(np.zeros((2, 2, 3, 3)), np.ones((2, 2, 3, 3)))
    with pytest.raises(ValueError):
        normalized_error(np.ones((2, 2, 3, 3)), np.ones((3, 2, 3, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_error_invariant_under_point_relabeling(seed):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((4, 2, 3, 4))
    p = rng.standard_normal((4, 2, 3, 4))
    perm = rng.permutation(12)
    tp = t.reshape(4, 2, 12)[:, :, perm].reshape(t.shape)
    pp = p.reshape(4, 2, 12)[:, :, perm].reshape(p.shape)
    assert np.allclose(normalized_error(t, p).values, normalized_error(tp, pp).values, rtol=1e-13, atol=0)


def test_valid_time_examples():
    v = valid_time(ErrorSeries(np.zeros(100), 0.01))
    assert v.time == pytest.approx(1.0) and v.censored
    v = valid_time(ErrorSeries(np.array([0.3, 0.1]), 0.01), 0.2)
    assert v.time == 0.0 and not v.censored
    v = valid_time(ErrorSeries(np.array([0.1, 0.19, 0.21, 0.05]), 0.01), 0.2)
    assert v.time == pytest.approx(0.02) and v.index == 2 and not v.censored


def test_valid_time_threshold_is_strict():
    assert valid_time(ErrorSeries(np.array([0.2, 0.2]), 0.01), 0.2).censored
    with pytest.raises(ValueError):
        valid_time(ErrorSeries(np.zeros(3)), 0.0)


@settings(max_examples=80, deadline=None)
@given(arrays(float, st.integers(1, 40), elements=st.floats(0, 1)), arrays(float, 40, elements=st.floats(0, 1)))
def test_valid_time_monotone(e, bump):
    larger = e + bump[: len(e)]
    assert valid_time(ErrorSeries(larger)).time <= valid_time(ErrorSeries(e)).time


def test_error_field():
    t = FieldPair(np.ones((3, 3)), np.zeros((3, 3)))
    p = FieldPair(np.full((3, 3), 0.75), np.zeros((3, 3)))
    d = error_field(t, p)
    assert np.array_equal(d.u, np.full((3, 3), 0.25)) and not d.v.any()
    assert not error_field(t, t).u.any()
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((2, 3, 3)), rng.standard_normal((2, 3, 3))
    d = error_field(a, b)
    for k, g in enumerate((d.u, d.v)):
        for i in range(3):
            for j in range(3):
                assert g[i, j] == abs(a[k, i, j] - b[k, i, j])
    with pytest.raises(ValueError):
        error_field(np.zeros((2, 3, 3)), np.zeros((2, 3, 4)))


def test_contribution_extremes():
    plan = plan_dims("oh", 4, 3)
    w = np.zeros((2, plan.h_dim))
    w[:, :8] = 1.0
    rep = wout_contribution(Readout(w), plan)
    assert np.array_equal(rep.reservoir_share, [1, 1])
    w = np.zeros((2, plan.h_dim))
    w[:, 8:] = -2.0
    rep = wout_contribution(w, plan)
    assert np.array_equal(rep.kbm_share, [1, 1])


def test_contribution_degenerate_row():
    plan = plan_dims("fh", 4, 3)
    w = np.zeros((2, plan.h_dim))
    w[1, 0] = 1
    rep = wout_contribution(w, plan)
    assert rep.degenerate.tolist() == [True, False]
    assert math.isnan(rep.reservoir_share[0])


def test_contribution_rejects_bad_plans():
    with pytest.raises(ValueError):
        wout_contribution(np.zeros((2, 8)), plan_dims("reservoir", 4, 3))
    with pytest.raises(ValueError):
        wout_contribution(np.zeros((2, 5)), plan_dims("oh", 4, 3))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["oh", "fh"]))
def test_contribution_shares_sum_to_one(seed, mode):
    rng = np.random.default_rng(seed)
    plan = plan_dims(mode, 7, 3)
    w = rng.standard_normal((5, 2, plan.h_dim))
    rep = wout_contribution(w, plan, feature_rms=rng.random(plan.h_dim))
    assert np.all(np.abs(rep.reservoir_share + rep.kbm_share - 1) <= 1e-12)
    assert ((rep.reservoir_share >= 0) & (rep.reservoir_share <= 1)).all()
