import dataclasses

import numpy as np
import pytest

from conftest import make_params
from pxlog.barrier import (BarrierBox, BarrierParams, check_sub_super, construct_box, fit_constants,
                           solve_power_rhs, yy_barrier)
from pxlog.errors import (BarrierConstructionError, CertificationError, InvalidParameterError,
                          PreconditionError)
from pxlog.exponent import ExponentField
from pxlog.fields import ScalarField
from pxlog.mesh import build_interval_mesh, enlarge_domain, restrict


def test_yy_branch_values():
    m = build_interval_mesh(0, 2, 16)
    w = yy_barrier(ExponentField.constant(m, 2.0), 1.0, 0.25, 0.5, 1.0).values
    x = m.nodes[:, 0]
    at = lambda t: w[np.argmin(np.abs(x - t))]
    assert at(0.25) == pytest.approx(0.25, abs=1e-15)
    assert at(0.5) == pytest.approx(0.25 + 0.25 / 3, abs=1e-14)
    assert at(1.0) == pytest.approx(0.25 + 0.25 / 3, abs=1e-14)


@pytest.mark.parametrize("p0, eta, tau, c0", [(2.0, 1.0, 0.5, 1.0), (3.0, 7.0, 0.3, 0.4), (1.5, 0.2, 0.9, 2.0)])
def test_yy_layer_and_continuity(p0, eta, tau, c0):
    delta = 0.25
    m = build_interval_mesh(0, 2, 800)
    w = yy_barrier(ExponentField.constant(m, p0), eta, delta, tau, c0).values
    d = m.distance
    xi = c0 * eta ** (1 / (p0 - 1 + tau))
    np.testing.assert_allclose(w[d < delta], xi * d[d < delta], rtol=1e-15)
    assert np.all(w[d >= delta] >= xi * delta * (1 - 1e-15))
    for edge in (delta, 2 * delta):
        i = int(np.argmin(np.abs(d - edge)))
        assert abs(w[i] - w[i - 1]) <= xi * 2 / 800 * 1.01 + 1e-12
    # the middle branch meets the outer constant without a jump
    k = 2.0 / (p0 - 1)
    inner_limit = xi * delta + xi * delta / (k + 1)
    assert w.max() == pytest.approx(inner_limit, rel=1e-14)


def test_yy_rejects_large_delta():
    m = build_interval_mesh(0, 1, 8)
    with pytest.raises(InvalidParameterError):
        yy_barrier(ExponentField.constant(m, 2.0), 1.0, 0.3, 0.5, 1.0)


def test_power_rhs_linear_example():
    m = build_interval_mesh(0, 1, 64)
    u = solve_power_rhs(ExponentField.constant(m, 2.0), 4.0, -1.0)
    x = m.nodes[:, 0]
    np.testing.assert_allclose(u.values, 0.25 * x * (1 - x) / 2, atol=1e-14)
    assert u.values.max() == pytest.approx(0.03125, abs=1e-14)


@pytest.mark.parametrize("p0", [1.7, 3.0])
def test_power_rhs_homogeneity(p0):
    m = build_interval_mesh(0, 1, 32)
    p = ExponentField.constant(m, p0)
    unit = solve_power_rhs(p, 2.0, 0.0)
    u = solve_power_rhs(p, 9.0, 0.5)
    np.testing.assert_allclose(u.values, 9.0 ** (0.5 / (p0 - 1)) * unit.values, rtol=1e-12)


def test_power_rhs_variable_exponent_solves_equation():
    from pxlog.pxlap import residual
    m = build_interval_mesh(0, 1, 32)
    p = ExponentField.affine(m, [2.0, 1.0])
    u = solve_power_rhs(p, 8.0, -0.5)
    r = residual(p, u, ScalarField.constant(m, 8.0 ** -0.5))
    assert np.max(np.abs(r.values)) < 1e-10


def _fields_for(m, lam, p0=2.0):
    p = ExponentField.constant(m, p0)
    big = enlarge_domain(m, 0.25)
    ul = solve_power_rhs(p, lam, -1.0)
    ub = solve_power_rhs(p.on(big), lam, 1.0)
    uh = ScalarField(m, restrict(ub.values, big))
    return {"u_lo": ul, "v_lo": ul, "u_hi": uh, "v_hi": uh, "u_hi_big": ub, "v_hi_big": ub}


def test_fit_constants_closed_form():
    m = build_interval_mesh(0, 1, 64)
    params = make_params(m, p=2.0, q=2.0, alpha=0.5, beta=0.5)
    bp = BarrierParams(lam=2.0, sigma=1.0, regime="i", delta=0.125)
    c = fit_constants(_fields_for(m, 2.0), params, bp)
    assert c["k0"] == pytest.approx(1 / 8, rel=1e-12)
    assert c["K1"] == pytest.approx(1 / 8, rel=1e-12)


def test_fit_constants_lambda_invariance():
    m = build_interval_mesh(0, 1, 32)
    params = make_params(m, p=3.0, q=3.0)
    consts = [fit_constants(_fields_for(m, lam, 3.0), params,
                            BarrierParams(lam=lam, sigma=1.0, regime="i", delta=0.125)) for lam in (4.0, 64.0)]
    for key in ("C1", "C1'", "K1", "K2"):
        assert consts[0][key] == pytest.approx(consts[1][key], rel=1e-6)


def test_degenerate_lower_barrier():
    m = build_interval_mesh(0, 1, 16)
    params = make_params(m, p=2.0, q=2.0)
    fields = _fields_for(m, 2.0)
    fields["u_lo"] = ScalarField.constant(m, 0.0)
    with pytest.raises(CertificationError):
        fit_constants(fields, params, BarrierParams(lam=2.0, sigma=1.0, regime="i", delta=0.125))


def test_barrier_params_validation():
    with pytest.raises(InvalidParameterError):
        BarrierParams(lam=1.0, sigma=1.0, regime="i", delta=0.1)
    with pytest.raises(InvalidParameterError):
        BarrierParams(lam=4.0, sigma=-1.5, regime="ii", delta=0.1)
    with pytest.raises(InvalidParameterError):
        BarrierParams(lam=4.0, sigma=-0.5, regime="i", delta=0.1)


def test_regime_i_box(regime_i):
    params, box, bp = regime_i
    ul, uh, vl, vh = box.bounds()
    assert np.all(ul <= uh) and np.all(vl <= vh)
    inner = box.mesh.interior
    assert np.all(uh[inner] > 0) and np.all(vh[inner] > 0)
    k0 = box.constants["k0"]
    assert k0 > 0
    assert np.all(np.minimum(ul, vl) >= k0 * box.mesh.distance - 1e-12)
    assert all(m >= 0 for m in box.certificate["margins"].values())
    assert bp.sigma == 1.0 and bp.lam > 1


def test_regime_i_quarter_eps():
    params = make_params(build_interval_mesh(0, 1, 32))
    box, bp = construct_box(params, "i", 0.25)
    assert box.eps0 == 0.25
    assert check_sub_super(box, params, 0.25).passed


def test_eps_uniform_certificate(regime_i):
    params, box, _ = regime_i
    for eps in (box.eps0, box.eps0 / 2, box.eps0 / 10, 1e-6):
        cert = check_sub_super(box, params, eps)
        assert cert.passed, cert.margins


def test_large_gamma_fails_on_super_side():
    params = make_params(build_interval_mesh(0, 1, 16), alpha=2.5, beta=2.5, gamma=1e3)
    with pytest.raises(BarrierConstructionError) as info:
        construct_box(params, "ii", 0.5)
    assert info.value.failed.startswith("super")
    assert info.value.margin < 0


def test_regime_needs_hypothesis():
    params = make_params(build_interval_mesh(0, 1, 16), alpha=0.5, beta=0.5)
    with pytest.raises(PreconditionError):
        construct_box(params, "ii", 0.5)


def test_scaled_lower_barrier_violates(regime_i_small):
    params, box, _ = regime_i_small
    bad = dataclasses.replace(box, u_lo=ScalarField(box.mesh, 10 * box.u_hi.values))
    cert = check_sub_super(bad, params, box.eps0)
    assert not cert.passed
    assert cert.margins["order_u"] < 0


def test_box_eps_range(regime_i_small):
    _, box, _ = regime_i_small
    assert box.contains_eps(0.5) and box.contains_eps(1e-9)
    assert not box.contains_eps(0.0) and not box.contains_eps(0.6)
    assert isinstance(box, BarrierBox)
