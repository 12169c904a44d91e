import numpy as np
import pytest
from hypothesis import given, strategies as st

from dgtwophase.adapt import (AdaptConfig, Estimator, compute_estimator, compute_tolerances,
                              h_tolerance, mark_h, mark_p_diff, mark_p_frac, truncate_orders)
from dgtwophase.dgspace import P, S, DgSpace
from dgtwophase.forms import default_beta
from dgtwophase.mesh import COARSEN, KEEP, REFINE
from dgtwophase.physics import ConstantModel, ModelA

from helpers import UNIT_K, box_setup, const, mesh_for, never, project, space_for


def test_constant_steady_state_has_zero_indicator():
    setup = box_setup(gravity=False, J_n=0.0, p_init=const(7.0), p_dirichlet=const(7.0),
                      s_dirichlet=const(0.2))
    sp = space_for(setup, 3)
    u = project(sp, const(7.0), const(0.2))
    eta2 = compute_estimator(sp, ModelA(setup), u, u, 3.0)
    assert np.sqrt(eta2).max() < 1e-12


def jump_setup(**kw):
    args = dict(extent=(2.0, 1.0), macro=(2, 1), gravity=False, K_out=UNIT_K, lens=never,
                dirichlet=lambda x, y: x < 1e-12, p_init=const(1.0), p_dirichlet=const(1.0),
                s_dirichlet=const(0.0), J_n=0.0)
    args.update(kw)
    return box_setup(**args)


def test_single_jump_matches_face_integral():
    setup = jump_setup()
    a_ss = 0.3
    model = ConstantModel(setup, a_pp=1.0, a_ps=0.0, a_sp=0.5, a_ss=a_ss)
    sp = DgSpace(mesh_for(setup), 2)
    u = project(sp, const(1.0), lambda x, y: (x > 1).astype(float))
    eta2 = compute_estimator(sp, model, u, u, 3.0)
    sigma_gamma = default_beta(2) * a_ss * 1.0 * 1.0 / 1.0  # beta delta_s k |e| / |E|
    h_e, length = 1.0, 1.0
    expected = 0.5 * (1.0 / h_e) * sigma_gamma ** 2 * length
    assert np.allclose(eta2, expected, rtol=1e-12, atol=1e-12)


def test_neumann_flux_term_goes_to_owner():
    J_n = -5.137e-5
    setup = jump_setup(inflow=lambda x, y: (y > 1 - 1e-12) & (x < 1), J_n=J_n)
    model = ConstantModel(setup, a_pp=1.0, a_ps=0.0, a_sp=0.5, a_ss=0.3)
    sp = DgSpace(mesh_for(setup), 1)
    u = project(sp, const(1.0), const(0.0))
    eta2 = compute_estimator(sp, model, u, u, 3.0)
    h_e, length = 1.0 * 1.0 / 1.0, 1.0
    assert eta2[0] == pytest.approx(h_e * J_n ** 2 * length, rel=1e-12)
    assert eta2[1] == pytest.approx(0.0, abs=1e-30)


def test_dirichlet_term_translation_invariant():
    rng = np.random.default_rng(0)
    base = jump_setup()
    shifted = jump_setup(s_dirichlet=const(0.25))
    sp = DgSpace(mesh_for(base), 2)
    u = project(sp, const(1.0), lambda x, y: 0.1 * x + 0 * y)
    u.coeffs[sp.field_slices[S]] += 0.01 * rng.normal(size=sp.field_slices[S].size)
    v = u.copy()
    v.coeffs[sp.dof_index(np.arange(2), 2, S)[:, 0]] += 2 * 0.25  # add 0.25 to s
    e1 = compute_estimator(sp, ConstantModel(base, a_ss=0.3), u, u, 3.0)
    e2 = compute_estimator(sp, ConstantModel(shifted, a_ss=0.3), v, v, 3.0)
    assert np.allclose(e1, e2, rtol=1e-12)


def test_sum_decomposition():
    rng = np.random.default_rng(1)
    setup = box_setup(J_n=-5.137e-5)
    mesh = mesh_for(setup)
    mesh, _ = mesh.execute_marks(np.array([REFINE, KEEP, KEEP, KEEP]))
    sp = DgSpace(mesh, rng.integers(1, 4, mesh.n_elements))
    u = project(sp, lambda x, y: (1 - y) * 9810 + 0 * x, lambda x, y: 0.1 + 0.05 * x * y)
    old = project(sp, lambda x, y: (1 - y) * 9810 + 0 * x, const(0.1))
    est = Estimator(sp, ModelA(setup), None, 0.5)
    vol, faces = est.parts(u, old, 3.0)
    total = vol.sum() + sum(val.sum() for _, _, _, val in faces)
    assert est(u, old, 3.0).sum() == pytest.approx(total, rel=1e-12)
    assert np.all(est(u, old, 3.0) >= 0)


def test_lower_order_of_lower_degree_data_is_unchanged():
    setup = box_setup(J_n=-5.137e-5)
    sp = space_for(setup, 2)
    u = project(sp, lambda x, y: (1 - y) * 9810 + 0 * x, lambda x, y: 0.1 + 0.05 * x)
    est = Estimator(sp, ModelA(setup))
    assert np.allclose(est.lower_order(u, u, 3.0), est(u, u, 3.0), rtol=1e-12, atol=1e-30)
    low = truncate_orders(u)
    assert np.allclose(low.means(S), u.means(S)) and np.allclose(low.means(P), u.means(P))


def test_tolerance_examples():
    ttol, htol = compute_tolerances(np.ones(60), 800.0, 3.0, 60)
    assert ttol == pytest.approx(0.075) and htol == pytest.approx(0.00375)
    c, N = 0.2, 40
    ttol, htol = compute_tolerances(np.full(N, c), 100.0, 2.0, 25)
    assert ttol == pytest.approx(N * c / 100.0) and htol == pytest.approx(ttol * 2.0 / 25)
    assert h_tolerance(ttol, 2.0, 50) == pytest.approx(0.5 * h_tolerance(ttol, 2.0, 25))
    with pytest.raises(ValueError):
        compute_tolerances(np.ones(3), 0.0, 1.0, 3)


def test_mark_h_examples():
    htol = 1e-3
    marks = mark_h(np.array([2 * htol, 0.005 * htol, 0.5 * htol, 2 * htol, 0.005 * htol]),
                   htol, np.array([0, 2, 1, 3, 0]), 3)
    assert marks.tolist() == [REFINE, COARSEN, KEEP, KEEP, KEEP]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(1.0, 100.0),
       st.integers(0, 10_000))
def test_mark_h_monotone_and_pure(eta, lam, seed):
    eta = np.array(eta)
    levels = np.random.default_rng(seed).integers(0, 4, eta.size)
    a = mark_h(eta, 0.1, levels, 3)
    b = mark_h(lam * eta, 0.1, levels, 3)
    assert np.all(b[a == REFINE] == REFINE)
    assert np.array_equal(a, mark_h(eta, 0.1, levels, 3))


def test_mark_p_diff_examples():
    ptol = 1e-6
    eta_r = np.array([1.0, 1.0, 1.0, 1.0])
    eta_rm1 = eta_r + np.array([0.0, 200 * ptol, 10 * ptol, 0.0])
    new = mark_p_diff(eta_r, eta_rm1, np.array([2, 2, 2, 1]), ptol, 3)
    assert new.tolist() == [1, 3, 2, 1]
    assert mark_p_diff(eta_r, eta_rm1, np.array([3, 3, 3, 3]), ptol, 3).tolist() == [2, 3, 3, 2]


def test_mark_p_frac_examples():
    lv = np.array([1, 3, 3, 3])
    eta_rm1 = np.ones(4)
    eta_r = np.array([1.0, 2.0, 0.001, 0.5])
    new = mark_p_frac(eta_r, eta_rm1, np.array([2, 2, 2, 2]), lv, 3, 3)
    assert new.tolist() == [3, 1, 3, 2]
    plain = mark_p_frac(eta_r, eta_rm1, np.array([2, 2, 2, 2]), lv, 3, 3, plain=True)
    assert plain.tolist() == [2, 1, 3, 2]
    # a vanishing lower-order indicator: ratio infinite unless both vanish
    z = mark_p_frac(np.array([1e-3, 0.0]), np.zeros(2), np.array([2, 2]), np.array([3, 3]), 3, 3)
    assert z.tolist() == [1, 2]


def test_adapt_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(p_strategy="bogus")
    with pytest.raises(ValueError):
        AdaptConfig(max_order=0)
