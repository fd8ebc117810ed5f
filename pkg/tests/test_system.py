import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_params
from pxlog.barrier import BarrierBox
from pxlog.errors import InvalidParameterError, PreconditionError
from pxlog.fields import Flavor, ScalarField
from pxlog.mesh import build_interval_mesh
from pxlog.pxlap import SolverOptions, solve_dirichlet
from pxlog.system import (BOX_TOL, ConstantRhs, TruncationSpec, default_l, epsilon_continuation,
                          gamma_cut, lambda_continuation, solution_operator_T, solve_regularized,
                          solve_truncated, truncate_rhs_G, truncate_rhs_H)


def constant_box(mesh, lo, hi, eps0=0.5):
    f = lambda c: ScalarField.constant(mesh, c)
    return BarrierBox(f(lo), f(hi), f(lo), f(hi), eps0)


@pytest.mark.parametrize("s, expected", [(1.5, 0.0), (0.5, -math.sqrt(0.5)), (3.0, 1.0)])
def test_gamma_cut_examples(s, expected):
    assert gamma_cut(0.5, 1.0, 2.0, s) == pytest.approx(expected, rel=1e-15)


def test_default_l():
    m = build_interval_mesh(0, 1, 4)
    assert default_l(make_params(m, p=3, q=3)) == 0.5
    assert default_l(make_params(m, p=1.4, q=3)) == pytest.approx(0.2)


def test_truncation_table_corner():
    m = build_interval_mesh(0, 1, 4)
    params = make_params(m, alpha=1.0, beta=1.0)
    spec = TruncationSpec(constant_box(m, 1.0, 2.0), 0.5)
    assert truncate_rhs_H(params, spec, 2, 3.0, 3.0) == pytest.approx(-math.log(2) + 2 - 1, rel=1e-14)


def test_truncation_below_box():
    m = build_interval_mesh(0, 1, 4)
    params = make_params(m, alpha=1.0, beta=1.0)
    spec = TruncationSpec(constant_box(m, 1.0, 2.0), 0.5)
    got = truncate_rhs_H(params, spec, 1, 0.75, 1.5)
    assert got == pytest.approx(-math.log(1.5) + 1.5 + math.sqrt(0.25), rel=1e-14)
    got = truncate_rhs_G(params, spec, 1, 0.75, 2.25)
    assert got == pytest.approx(-math.log(1.0) + 1.0 - math.sqrt(0.25), rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(node=st.integers(1, 15), a=st.floats(0, 1), b=st.floats(0, 1), eps=st.floats(1e-6, 0.5))
def test_inside_box_identity(regime_i_small, node, a, b, eps):
    params, box, _ = regime_i_small
    spec = TruncationSpec.for_params(box, params)
    ul, uh, vl, vh = (x[node] for x in box.bounds())
    s, t = ul + a * (uh - ul), vl + b * (vh - vl)
    h = -params.gamma * math.log(t + eps) + params.theta * t ** params.alpha.values[node]
    g = -params.gamma * math.log(s + eps) + params.theta * s ** params.beta.values[node]
    assert truncate_rhs_H(params, spec, node, s, t, eps) == pytest.approx(h, rel=1e-14, abs=1e-14)
    assert truncate_rhs_G(params, spec, node, s, t, eps) == pytest.approx(g, rel=1e-14, abs=1e-14)


def test_decoupled_constant_rhs_gives_torsion():
    m = build_interval_mesh(0, 1, 32)
    params = make_params(m, p=3.0, q=2.0)
    spec = TruncationSpec(constant_box(m, 0.0, 10.0), 0.5)
    one = ConstantRhs(1.0)
    st_ = solve_truncated(params, spec, 0.5, rhs=(one, one))
    tu, _ = solve_dirichlet(params.p, ScalarField.constant(m, 1.0))
    tv, _ = solve_dirichlet(params.q, ScalarField.constant(m, 1.0))
    np.testing.assert_allclose(st_.u.values, tu.values, atol=1e-10)
    np.testing.assert_allclose(st_.v.values, tv.values, atol=1e-10)


def test_zero_rhs_gives_zero():
    m = build_interval_mesh(0, 1, 16)
    params = make_params(m)
    spec = TruncationSpec(constant_box(m, -1.0, 1.0), 0.5)
    zero = ConstantRhs(0.0)
    st_ = solve_truncated(params, spec, 0.5, rhs=(zero, zero))
    assert np.max(np.abs(st_.u.values)) < 1e-12 and np.max(np.abs(st_.v.values)) < 1e-12


def test_regime_i_truncated_solve(regime_i):
    params, box, _ = regime_i
    state = solve_truncated(params, TruncationSpec.for_params(box, params), 0.25)
    assert state.within_box
    assert state.report["box_violation"] <= BOX_TOL


def test_eps_outside_box_range(regime_i_small):
    params, box, _ = regime_i_small
    spec = TruncationSpec.for_params(box, params)
    for eps in (0.0, 0.75):
        with pytest.raises(PreconditionError):
            solve_truncated(params, spec, eps)


def test_same_box_for_two_eps(regime_i):
    params, box, _ = regime_i
    k0 = box.constants["k0"]
    for eps in (0.25, 0.025):
        state, used = solve_regularized(params, eps, "i", box=box)
        assert used is box and state.within_box
        assert np.all(state.u.values >= k0 * box.mesh.distance - 1e-9)
        assert np.all(state.v.values >= k0 * box.mesh.distance - 1e-9)


def test_symmetric_state(regime_i_small):
    params, box, _ = regime_i_small
    state, _ = solve_regularized(params, 0.1, "i", box=box)
    np.testing.assert_allclose(state.u.values, state.v.values, atol=1e-10)


def test_continuation_single_entry(regime_i_small):
    params, box, _ = regime_i_small
    res = epsilon_continuation(params, [0.25], "i", box=box)
    assert res.differences == [] and res.converged
    assert res.limit is res.states[0]


def test_continuation_differences_shrink(regime_i):
    params, box, _ = regime_i
    res = epsilon_continuation(params, [2.0 ** -k for k in range(1, 7)], "i", box=box)
    d = res.differences
    assert all(b < a for a, b in zip(d, d[1:]))
    assert all(s.within_box for s in res.states)
    assert set(res.unregularized) == {"weak", "strong"}


def test_schedule_must_decrease(regime_i_small):
    params, box, _ = regime_i_small
    with pytest.raises(InvalidParameterError):
        epsilon_continuation(params, [0.1, 0.2], "i", box=box)


def test_operator_T_zero_lambda():
    m = build_interval_mesh(0, 1, 16)
    params = make_params(m, flavor=Flavor.SHIFTED)
    f = ScalarField.constant(m, 0.3)
    u, v = solution_operator_T(0.0, f, f, 1e-3, params)
    assert np.all(u.values == 0) and np.all(v.values == 0)


def test_operator_T_constant_rhs():
    m = build_interval_mesh(0, 1, 32)
    params = make_params(m, p=3.0, alpha=1.0, flavor=Flavor.SHIFTED)
    zero = ScalarField.constant(m, 0.0)
    lam = 0.6
    u, _ = solution_operator_T(lam, zero, zero, 1.0, params)
    unit, _ = solve_dirichlet(params.p, ScalarField.constant(m, 1.0), SolverOptions(tol=1e-12))
    np.testing.assert_allclose(u.values, lam ** 0.5 * unit.values, rtol=1e-8, atol=1e-14)


def test_operator_T_symmetry():
    m = build_interval_mesh(0, 1, 16)
    params = make_params(m, p=2.5, q=2.5, alpha=0.7, beta=0.7, flavor=Flavor.SHIFTED)
    f = ScalarField(m, np.sin(np.pi * m.nodes[:, 0]))
    u, v = solution_operator_T(0.8, f, f, 1e-2, params)
    np.testing.assert_array_equal(u.values, v.values)


def test_lambda_branch():
    m = build_interval_mesh(0, 1, 32)
    params = make_params(m, alpha=0.6, beta=0.6, gamma=0.5, flavor=Flavor.SHIFTED)
    rec = lambda_continuation(params, 1e-3, [k / 10 for k in range(11)])
    assert rec.complete and rec.lambdas[-1] == 1.0
    u0, v0 = rec.states[0]
    assert np.all(u0.values == 0) and np.all(v0.values == 0)
    assert min(rec.positivity_margins) >= -1e-9
    assert all(math.isfinite(c) for pair in rec.a_priori for c in pair)
    for u, v in rec.states:
        np.testing.assert_allclose(u.values, v.values, atol=1e-10)


def test_lambda_grid_validation():
    m = build_interval_mesh(0, 1, 8)
    params = make_params(m, alpha=0.6, beta=0.6, gamma=0.5, flavor=Flavor.SHIFTED)
    with pytest.raises(InvalidParameterError):
        lambda_continuation(params, 1e-3, [0.0, 0.5, 0.9])
    with pytest.raises(PreconditionError):
        lambda_continuation(make_params(m, alpha=0.3, beta=0.3, flavor=Flavor.SHIFTED), 1e-3, [0.0, 1.0])
