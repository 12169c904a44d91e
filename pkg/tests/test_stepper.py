import numpy as np
import pytest

from dgtwophase.dgspace import S, DgFunction, DgSpace
from dgtwophase.forms import Discretization
from dgtwophase.limiter import LimiterConfig, value_range
from dgtwophase.mesh import build_macro
from dgtwophase.physics import ConstantModel, ModelA
from dgtwophase.solver import NewtonConfig
from dgtwophase.stepper import (SCHEMES, SchemeConfig, StepFailure, TimeState, advance,
                                stopping_criterion)

from helpers import box_setup, const, project, space_for


def scaled(u, factor):
    return DgFunction(u.space, u.coeffs * factor)


def s_only(value, sp):
    u = project(sp, const(0.0), const(value))
    return u


def test_stopping_criterion_examples():
    sp = DgSpace(build_macro(2, 1, (1, 1)), 1)
    prev = s_only(0.5, sp)
    assert stopping_criterion(prev.copy(), prev, 0.03)
    assert not stopping_criterion(scaled(prev, 1.05), prev, 0.03)
    assert stopping_criterion(scaled(prev, 1.01), prev, 0.03)
    zero = sp.zeros()
    assert stopping_criterion(zero, zero, 0.03)
    assert not stopping_criterion(prev, zero, 0.03)


def run(scheme, setup, model, u, tau=3.0, steps=1, **kw):
    sp = u.space
    disc = Discretization(sp, model)
    state = TimeState(0.0, 0, u)
    diags = []
    for _ in range(steps):
        state, d = advance(state, SchemeConfig(kind=scheme, tau=tau, **kw), disc)
        diags.append(d)
    return state, diags


@pytest.mark.parametrize("scheme", SCHEMES)
def test_hydrostatic_state_is_steady(scheme):
    setup = box_setup(J_n=0.0)
    sp = space_for(setup, 2)
    u = project(sp, lambda x, y: (1.0 - y) * 9810.0 + 0 * x, const(0.0))
    state, _ = run(scheme, setup, ModelA(setup), u)
    assert np.abs(state.u.coeffs - u.coeffs).max() < 1e-10 * np.abs(u.coeffs).max()
    assert state.t == 3.0 and state.step == 1


@pytest.mark.parametrize("scheme", SCHEMES)
def test_constant_state_without_gravity_is_steady(scheme):
    setup = box_setup(gravity=False, J_n=0.0, p_init=const(10.0), p_dirichlet=const(10.0),
                      s_dirichlet=const(0.2))
    sp = space_for(setup, 1)
    u = project(sp, const(10.0), const(0.2))
    state, _ = run(scheme, setup, ModelA(setup), u)
    assert np.abs(state.u.coeffs - u.coeffs).max() < 1e-10


def frozen_problem():
    setup = box_setup(J_n=-5.137e-5)
    model = ConstantModel(setup, a_pp=1e-7, a_ps=2e-9, a_sp=5e-8, a_ss=1e-9)
    sp = space_for(setup, 2)
    u = project(sp, lambda x, y: (1.0 - y) * 9810.0 + 0 * x, const(0.1))
    return setup, model, u


def test_frozen_coefficients_schemes_agree():
    setup, model, u = frozen_problem()
    out = {}
    for scheme in ("linear", "implicit", "iterative"):
        st, diags = run(scheme, setup, model, u, limiter=LimiterConfig(enabled=False))
        out[scheme] = (st.u, diags[0])
    assert out["implicit"][1].newton_iters == 1
    assert out["iterative"][1].outer_iters <= 2  # one pass plus the confirming check
    for a in out:
        for b in out:
            d = DgFunction(u.space, out[a][0].coeffs - out[b][0].coeffs)
            assert d.l2_norm(0) < 1e-8 and d.l2_norm(S) < 1e-8


def test_impes_equals_single_pass_impes_iterative():
    setup = box_setup()
    sp = space_for(setup, 1)
    u = project(sp, lambda x, y: (1.0 - y) * 9810.0 + 0 * x, const(0.05))
    a, _ = run("impes", setup, ModelA(setup), u)
    b, diags = run("impes_iterative", setup, ModelA(setup), u, max_outer=1, check_stop=False)
    assert diags[0].outer_iters == 1
    assert np.array_equal(a.u.coeffs, b.u.coeffs)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_schemes_are_deterministic(scheme):
    setup = box_setup()
    sp = space_for(setup, 2)
    u = project(sp, lambda x, y: (1.0 - y) * 9810.0 + 0 * x, const(0.0))
    a, _ = run(scheme, setup, ModelA(setup), u, steps=2)
    b, _ = run(scheme, setup, ModelA(setup), u, steps=2)
    assert np.array_equal(a.u.coeffs, b.u.coeffs)
    assert value_range(a.u)[0] >= -1e-12


def test_newton_failure_becomes_step_failure():
    setup = box_setup()
    sp = space_for(setup, 1)
    u = project(sp, lambda x, y: (1.0 - y) * 9810.0 + 0 * x, const(0.0))
    with pytest.raises(StepFailure) as err:
        run("implicit", setup, ModelA(setup), u, tau=50.0,
            newton=NewtonConfig(atol=1e-30, rtol=1e-30, max_iter=1))
    assert err.value.scheme == "implicit" and err.value.t == 0.0


def test_outer_cap_is_a_failure_only_with_the_stop_check():
    setup = box_setup()
    sp = space_for(setup, 1)
    u = project(sp, lambda x, y: (1.0 - y) * 9810.0 + 0 * x, const(0.0))
    with pytest.raises(StepFailure):
        run("iterative", setup, ModelA(setup), u, tol_iter=1e-300, max_outer=2)
    st, d = run("iterative", setup, ModelA(setup), u, max_outer=2, check_stop=False)
    assert d[0].outer_iters == 2 and d[0].converged


def test_limiter_each_newton_iterate():
    # saturation stays well inside the bounds, so limiting every iterate is harmless
    setup = box_setup(gravity=False, J_n=-1e-6, p_init=const(10.0), p_dirichlet=const(10.0),
                      s_dirichlet=const(0.2))
    sp = space_for(setup, 2)
    u = project(sp, const(10.0), const(0.2))
    a, da = run("implicit", setup, ModelA(setup), u, limit_each_newton=True)
    b, db = run("implicit", setup, ModelA(setup), u)
    assert da[0].newton_iters >= 1
    assert np.allclose(a.u.coeffs, b.u.coeffs, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("kw", [dict(kind="nope"), dict(tau=0.0), dict(alpha=1.5),
                                dict(tol_iter=0.0)])
def test_scheme_config_validation(kw):
    with pytest.raises(ValueError):
        SchemeConfig(**kw)


def test_space_mismatch_rejected():
    setup = box_setup()
    sp1, sp2 = space_for(setup, 1), space_for(setup, 2)
    disc = Discretization(sp2, ModelA(setup))
    with pytest.raises(ValueError):
        advance(TimeState(0.0, 0, sp1.zeros()), SchemeConfig(), disc)
