import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybrid_rc.barkley import (
    BarkleyParams,
    BlowUpError,
    FieldPair,
    KnowledgeModel,
    barkley_step,
    default_initial_condition,
    laplacian_no_flux,
    make_epsilon_model,
    simulate,
    step_fields,
)

P = BarkleyParams()


def const(nx, ny, u, v):
    return FieldPair(np.full((nx, ny), u), np.full((nx, ny), v))


params_st = st.builds(
    BarkleyParams,
    d=st.floats(0.0, 0.05),
    a=st.floats(0.1, 2.0),
    b=st.floats(0.0, 0.5),
    eps=st.floats(0.01, 10.0),
    dt=st.floats(1e-4, 0.02),
    dx=st.floats(0.05, 1.0),
    nx=st.integers(3, 9),
    ny=st.integers(3, 9),
)


# --- types -----------------------------------------------------------------


def test_fieldpair_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        FieldPair(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        FieldPair(np.zeros(3), np.zeros(3))


def test_fieldpair_array_roundtrip():
    rng = np.random.default_rng(0)
    f = FieldPair(rng.random((4, 5)), rng.random((4, 5)))
    assert FieldPair.from_array(f.as_array()) == f
    assert f.as_array().shape == (2, 4, 5)


def test_params_defaults():
    assert (P.d, P.a, P.b, P.eps, P.dt, P.dx, P.nx, P.ny) == (0.02, 0.75, 0.06, 0.08, 0.01, 0.1, 80, 80)


@pytest.mark.parametrize("kw", [dict(dt=0), dict(dx=-1), dict(eps=0), dict(a=0), dict(nx=2), dict(ny=2)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        BarkleyParams(**kw)


# --- laplacian -------------------------------------------------------------


def test_laplacian_constant_is_zero():
    assert np.array_equal(laplacian_no_flux(np.full((5, 7), 0.75), 0.1), np.zeros((5, 7)))
    assert np.abs(laplacian_no_flux(np.full((5, 7), 3.3), 0.1)).max() < 1e-12


def test_laplacian_interior_spike():
    f = np.zeros((5, 5))
    f[2, 2] = 1.0
    expected = np.zeros((5, 5))
    expected[2, 2] = -4
    expected[1, 2] = expected[3, 2] = expected[2, 1] = expected[2, 3] = 1
    assert np.array_equal(laplacian_no_flux(f, 1.0), expected)


def test_laplacian_linear_ramp_hand_oracle():
    # f(x, y) = x with x the row index.  Clamped neighbors: row 0 sees 0 above
    # and 1 below -> +1; row 4 sees 3 above and 4 below -> -1; interior 0.
    f = np.repeat(np.arange(5.0)[:, None], 5, axis=1)
    expected = np.zeros((5, 5))
    expected[0, :] = 1.0
    expected[4, :] = -1.0
    assert np.array_equal(laplacian_no_flux(f, 1.0), expected)
    assert np.array_equal(laplacian_no_flux(f.T, 1.0), expected.T)


def test_laplacian_too_small():
    with pytest.raises(ValueError):
        laplacian_no_flux(np.zeros((2, 5)), 0.1)
    with pytest.raises(ValueError):
        laplacian_no_flux(np.zeros((5, 5)), 0.0)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(3, 10), st.integers(3, 10)), elements=st.floats(-10, 10)),
       st.floats(0.05, 2.0))
def test_laplacian_sums_to_zero(f, dx):
    lap = laplacian_no_flux(f, dx)
    assert abs(lap.sum()) <= 1e-10 * (1 + np.abs(f).sum()) / dx**2


def test_laplacian_stacked_matches_single():
    rng = np.random.default_rng(1)
    f = rng.random((3, 2, 6, 7))
    lap = laplacian_no_flux(f, 0.1)
    for idx in np.ndindex(3, 2):
        assert np.array_equal(lap[idx], laplacian_no_flux(f[idx], 0.1))


# --- step ------------------------------------------------------------------


def test_step_homogeneous_hand_value():
    # (v + b)/a = 0.08; reaction = 12.5 * 0.5 * 0.5 * 0.42 = 1.3125
    out = barkley_step(const(80, 80, 0.5, 0.0), P)
    assert np.allclose(out.u, 0.513125, rtol=0, atol=1e-15)
    assert np.allclose(out.v, 0.00125, rtol=0, atol=1e-15)


@pytest.mark.parametrize("val", [0.0, 1.0])
def test_step_fixed_points(val):
    s = const(80, 80, val, val)
    assert barkley_step(s, P) == s


@settings(max_examples=60, deadline=None)
@given(params_st, st.sampled_from([0.0, 1.0]))
def test_fixed_points_any_params(p, val):
    s = const(p.nx, p.ny, val, val)
    assert barkley_step(s, p) == s


@settings(max_examples=40, deadline=None)
@given(params_st, st.integers(0, 2**32 - 1))
def test_pure_diffusion_conserves_mass(p, seed):
    rng = np.random.default_rng(seed)
    s = FieldPair(rng.random((p.nx, p.ny)), rng.random((p.nx, p.ny)))
    out = barkley_step(s, p, reaction=False)
    assert abs(out.u.sum() - s.u.sum()) <= 1e-12 * abs(s.u.sum())


def test_step_shape_mismatch():
    with pytest.raises(ValueError):
        barkley_step(const(5, 5, 0, 0), P)


def test_step_blowup_raises():
    p = BarkleyParams(nx=5, ny=5, dt=1.0)
    s = const(5, 5, 1e200, 0.0)
    with pytest.raises(BlowUpError):
        for _ in range(50):
            s = barkley_step(s, p)


def test_step_fields_batched_matches_single():
    rng = np.random.default_rng(2)
    p = BarkleyParams(nx=6, ny=5)
    x = rng.random((4, 2, 6, 5))
    out = step_fields(x, p)
    for k in range(4):
        assert np.array_equal(out[k], barkley_step(FieldPair.from_array(x[k]), p).as_array())


# --- simulate --------------------------------------------------------------


def test_simulate_zero_fixed_point():
    traj = simulate(BarkleyParams(nx=6, ny=6), const(6, 6, 0, 0), 100)
    assert traj.shape == (101, 2, 6, 6)
    assert not traj.any()


def test_simulate_one_step():
    p = BarkleyParams(nx=8, ny=8)
    init = default_initial_condition(8, 8, 3)
    traj = simulate(p, init, 1)
    assert len(traj) == 2
    assert np.array_equal(traj[0], init.as_array())
    assert np.array_equal(traj[1], barkley_step(init, p).as_array())


def test_simulate_deterministic():
    p = BarkleyParams(nx=10, ny=10)
    init = default_initial_condition(10, 10, 4)
    assert np.array_equal(simulate(p, init, 50), simulate(p, init, 50))


def test_simulate_rejects_zero_steps():
    with pytest.raises(ValueError):
        simulate(P, const(80, 80, 0, 0), 0)


def test_simulate_reports_blowup_step():
    p = BarkleyParams(nx=5, ny=5, dt=1.0, eps=1e-3)
    with pytest.raises(BlowUpError) as err:
        simulate(p, const(5, 5, 2.0, 0.0), 100)
    assert err.value.step is not None and 1 <= err.value.step <= 100


def test_simulate_reference_run_bounded():
    # reference-run bound: 10,000 steps at desk scale stay finite with U inside [-0.1, 1.1]
    p = BarkleyParams(nx=40, ny=40)
    traj = simulate(p, default_initial_condition(40, 40, 1), 10_000)
    assert np.isfinite(traj).all()
    assert traj[:, 0].min() >= -0.1 and traj[:, 0].max() <= 1.1


# --- epsilon model ---------------------------------------------------------


def test_epsilon_model_identity():
    assert make_epsilon_model(P, 0) == P


@pytest.mark.parametrize("e, eps", [(0.1, 0.088), (100, 8.08)])
def test_epsilon_model_values(e, eps):
    q = make_epsilon_model(P, e)
    assert q.eps == pytest.approx(eps, rel=1e-14)
    assert dataclasses.replace(q, eps=P.eps) == P


def test_epsilon_model_rejects_minus_one():
    with pytest.raises(ValueError):
        make_epsilon_model(P, -1)


@settings(max_examples=50, deadline=None)
@given(params_st)
def test_epsilon_model_zero_is_identity_for_all(p):
    assert make_epsilon_model(p, 0.0) == p


def test_knowledge_model_counts_frames():
    p = BarkleyParams(nx=6, ny=6)
    k = KnowledgeModel.with_error(p, 0.1)
    x = default_initial_condition(6, 6, 0).as_array()
    k(x)
    k(np.stack([x, x, x]))
    assert k.calls == 4
    assert np.array_equal(k(x), step_fields(x, make_epsilon_model(p, 0.1)))


# --- initial condition -----------------------------------------------------


def test_initial_condition_deterministic():
    assert default_initial_condition(20, 20, 7) == default_initial_condition(20, 20, 7)
    assert not default_initial_condition(20, 20, 7) == default_initial_condition(20, 20, 8)


def test_initial_condition_small_grid_bounds():
    f = default_initial_condition(4, 4, 0)
    assert f.shape == (4, 4)
    for g in (f.u, f.v):
        assert g.min() >= 0 and g.max() <= 1.01


def test_initial_condition_layout():
    f = default_initial_condition(10, 10, 0)
    assert (f.u[:, :5] > 0.98).all() and (f.u[:, 5:] < 0.02).all()
    assert (f.v[5:] >= 0.375).all() and (f.v[:5] <= 0.01).all()


def test_initial_condition_forms_pattern():
    # reference run: 80 x 80, seed 1, 2000 steps keeps a spatially varied U field
    p = BarkleyParams()
    traj = simulate(p, default_initial_condition(80, 80, 1), 2000)
    assert traj[-1, 0].var() > 0.01
