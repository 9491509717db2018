import doctest

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hybrid_rc.hybrid as hybrid_mod
from hybrid_rc.hybrid import HybridMode, assemble_features, assemble_input, plan_dims
from hybrid_rc.reservoir import ReservoirSpec, build_matrices

modes = st.sampled_from(list(HybridMode))


def test_mode_names_roundtrip():
    for name in ("reservoir", "ih", "oh", "fh"):
        assert HybridMode.parse(name).value == name
        assert str(HybridMode.parse(name)) == name
    assert HybridMode.parse("none") is HybridMode.NONE
    assert HybridMode.parse("output_hybrid") is HybridMode.OUTPUT
    with pytest.raises(ValueError):
        HybridMode.parse("xx")


def test_plan_reservoir_only():
    p = plan_dims("reservoir", 400, 3)
    assert (p.x_dim, p.h_dim, p.y_dim) == (18, 800, 2)


def test_plan_oh_and_fh():
    assert plan_dims("oh", 100, 3).h_dim == 218
    fh = plan_dims("fh", 100, 3)
    assert (fh.x_dim, fh.h_dim) == (36, 218)


@pytest.mark.parametrize("mode", list(HybridMode))
@pytest.mark.parametrize("r_dim", [100, 400])
def test_plan_formulas(mode, r_dim):
    p = plan_dims(mode, r_dim, 3)
    assert p.u_dim == p.k_dim == 18
    assert p.x_dim == (36 if mode.kbm_in_input else 18)
    assert p.h_dim == 2 * r_dim + (18 if mode.kbm_in_readout else 0)
    assert p.h_dim == p.r_feat + p.kbm_feat


def test_plan_options():
    assert plan_dims("oh", 100, 3, kbm_readout="center").h_dim == 202
    assert plan_dims("fh", 100, 3, readout_state="raw").h_dim == 118
    with pytest.raises(ValueError):
        plan_dims("oh", 100, 4)
    with pytest.raises(ValueError):
        plan_dims("oh", 100, 3, kbm_readout="x")


def test_plan_doctest():
    assert doctest.testmod(hybrid_mod).failed == 0


def test_ih_input_matrix_is_r_by_36():
    p = plan_dims("ih", 400, 3)
    assert build_matrices(ReservoirSpec(r_dim=400, seed=0), p.x_dim).w_in.shape == (400, 36)


def test_assemble_input_examples():
    assert np.array_equal(assemble_input("reservoir", [1, 2]), [1, 2])
    assert np.array_equal(assemble_input("oh", [1, 2], [9, 9]), [1, 2])
    assert assemble_input("ih", np.zeros(18), np.ones(18)).shape == (36,)
    with pytest.raises(ValueError):
        assemble_input("ih", np.zeros(18))
    with pytest.raises(ValueError):
        assemble_input("ih", np.zeros(18), np.zeros(17))


def test_assemble_features_examples():
    r = np.arange(8.0)
    assert np.array_equal(assemble_features("reservoir", r), r)
    k = np.arange(100.0, 118.0)
    out = assemble_features("oh", r, k)
    assert out.shape == (26,)
    assert np.array_equal(out[-18:], k)
    assert np.array_equal(assemble_features("fh", r, k), out)
    with pytest.raises(ValueError):
        assemble_features("oh", r)


@settings(max_examples=60, deadline=None)
@given(modes, st.integers(1, 30), st.sampled_from([1, 3, 5]), st.integers(0, 1000))
def test_assembled_lengths_match_plan(mode, r_dim, sigma, seed):
    rng = np.random.default_rng(seed)
    p = plan_dims(mode, r_dim, sigma)
    u = rng.standard_normal(p.u_dim)
    k = rng.standard_normal(p.k_dim)
    r_aug = rng.standard_normal(2 * r_dim)
    assert assemble_input(mode, u, k).shape == (p.x_dim,)
    assert assemble_features(mode, r_aug, k, plan=p).shape == (p.h_dim,)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(0, 1000))
def test_full_hybrid_composes(r_dim, seed):
    rng = np.random.default_rng(seed)
    u, k = rng.standard_normal(18), rng.standard_normal(18)
    r_aug = rng.standard_normal(2 * r_dim)
    assert np.array_equal(assemble_input("fh", u, k), assemble_input("ih", u, k))
    assert np.array_equal(assemble_features("fh", r_aug, k), assemble_features("oh", r_aug, k))
    assert assemble_input("reservoir", u, k).tobytes() == u.tobytes()
    assert assemble_features("reservoir", r_aug, k).tobytes() == r_aug.tobytes()
