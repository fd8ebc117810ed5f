import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pxlog.errors import MeshMismatchError
from pxlog.exponent import ExponentField
from pxlog.fields import ScalarField
from pxlog.mesh import build_interval_mesh, build_rectangle_mesh
from pxlog.pxlap import SolverOptions, jacobian, principal, residual, solve_dirichlet


def dense_residual_1d(x, p_mid, u, f):
    """Loop assembly of the 1D weak residual with lumped load."""
    n = len(x)
    r = np.zeros(n)
    for e in range(n - 1):
        h = x[e + 1] - x[e]
        du = (u[e + 1] - u[e]) / h
        flux = abs(du) ** (p_mid[e] - 2) * du if du != 0 else 0.0
        r[e] -= flux
        r[e + 1] += flux
        r[e] -= 0.5 * h * f[e]
        r[e + 1] -= 0.5 * h * f[e + 1]
    r[[0, -1]] = 0
    return r


def test_zero_data_zero_residual():
    m = build_interval_mesh(0, 1, 8)
    r = residual(ExponentField.constant(m, 3), ScalarField.constant(m, 0), ScalarField.constant(m, 0))
    assert np.all(r.values == 0)


def test_hat_function_load():
    m = build_interval_mesh(0, 1, 2)
    r = residual(ExponentField.constant(m, 2), ScalarField.constant(m, 0), ScalarField.constant(m, 1))
    assert r.values[1] == pytest.approx(-0.5)


@pytest.mark.parametrize("n", [16, 32, 64])
def test_interpolant_residual_is_small(n):
    m = build_interval_mesh(0, 1, n)
    x = m.nodes[:, 0]
    u = ScalarField(m, x * (1 - x) / 2)
    p = ExponentField.constant(m, 2)
    r = residual(p, u, ScalarField.constant(m, 1)).values
    ref = dense_residual_1d(x, p.at_barycenters, u.values, np.ones(m.n_nodes))
    np.testing.assert_allclose(r, ref, atol=1e-14)
    assert np.max(np.abs(r)) <= 1.0 / n ** 2


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(-2, 2), min_size=11, max_size=11), a=st.floats(1.3, 5), b=st.floats(-0.3, 0.3))
def test_residual_matches_dense_assembly(vals, a, b):
    m = build_interval_mesh(0, 1, 10)
    p = ExponentField.affine(m, [a, b])
    u = np.array(vals)
    f = np.sin(3 * m.nodes[:, 0])
    r = residual(p, ScalarField(m, u), ScalarField(m, f)).values
    ref = dense_residual_1d(m.nodes[:, 0], p.at_barycenters, u, f)
    np.testing.assert_allclose(r, ref, atol=1e-12, rtol=1e-12)


def test_linear_jacobian_is_stiffness():
    m = build_rectangle_mesh((0, 1), (0, 1), 4, 4)
    p = ExponentField.constant(m, 2.0)
    rng = np.random.default_rng(1)
    J = jacobian(p, ScalarField(m, rng.normal(size=m.n_nodes)), mu=0.0)
    assert abs(J - m.stiffness).max() < 1e-13


def test_degenerate_jacobian_vanishes():
    m = build_interval_mesh(0, 1, 8)
    J = jacobian(ExponentField.constant(m, 4.0), ScalarField.constant(m, 0.0), mu=0.0)
    assert abs(J[m.interior][:, m.interior]).max() == 0


@pytest.mark.parametrize("mesh", [build_interval_mesh(0, 1, 12), build_rectangle_mesh((0, 1), (0, 1), 4, 4)])
@pytest.mark.parametrize("pspec", [3.0, 1.6, [2.5, 0.5]])
def test_jacobian_finite_differences(mesh, pspec):
    p = ExponentField.from_spec(mesh, pspec)
    rng = np.random.default_rng(7)
    u = rng.normal(size=mesh.n_nodes)
    w = rng.normal(size=mesh.n_nodes)
    Jw = jacobian(p, ScalarField(mesh, u), mu=0.0) @ w
    errs = []
    for h in (1e-3, 5e-4, 2.5e-4):
        fd = (principal(p, u + h * w) - principal(p, u)) / h
        errs.append(np.linalg.norm(fd - Jw))
    assert errs[2] < errs[0] * 0.3
    assert errs[2] < 1e-2 * np.linalg.norm(Jw)


def test_torsion_p2():
    m = build_interval_mesh(0, 1, 64)
    u, rep = solve_dirichlet(ExponentField.constant(m, 2), ScalarField.constant(m, 1))
    x = m.nodes[:, 0]
    assert rep.converged
    assert u.values.max() == pytest.approx(0.125, abs=1e-12)
    np.testing.assert_allclose(u.values, x * (1 - x) / 2, atol=1e-13)


def test_torsion_p4():
    m = build_interval_mesh(-1, 1, 256)
    u, _ = solve_dirichlet(ExponentField.constant(m, 4), ScalarField.constant(m, 1))
    x = m.nodes[:, 0]
    exact = 0.75 * (1 - np.abs(x) ** (4 / 3))
    assert np.max(np.abs(u.values - exact)) <= 5e-3
    assert u.values.max() == pytest.approx(0.75, abs=5e-3)


@pytest.mark.parametrize("pspec", [1.5, 3.0, [2.0, 1.0]])
def test_zero_load_gives_zero(pspec):
    m = build_interval_mesh(0, 1, 16)
    u, _ = solve_dirichlet(ExponentField.from_spec(m, pspec), ScalarField.constant(m, 0))
    assert np.all(u.values == 0)


@pytest.mark.parametrize("p0", [1.5, 2.0, 3.0, 4.0])
def test_homogeneity(p0):
    m = build_rectangle_mesh((0, 1), (0, 1), 6, 6)
    p = ExponentField.constant(m, p0)
    f = ScalarField(m, 1 + m.nodes[:, 0])
    opts = SolverOptions(tol=1e-12)
    u1, _ = solve_dirichlet(p, f, opts)
    u5, _ = solve_dirichlet(p, ScalarField(m, 5 * f.values), opts)
    inner = m.interior
    np.testing.assert_allclose(u5.values[inner], 5 ** (1 / (p0 - 1)) * u1.values[inner], rtol=1e-8)


def test_variable_exponent_2d_converges():
    m = build_rectangle_mesh((0, 1), (0, 1), 8, 8)
    p = ExponentField.affine(m, [1.8, 1.5, 0.5])
    u, rep = solve_dirichlet(p, ScalarField.constant(m, 1))
    assert rep.converged
    assert np.all(u.values[m.interior] > 0)
    assert np.max(np.abs(residual(p, u, ScalarField.constant(m, 1)).values)) < 1e-9


def test_mesh_mismatch():
    a, b = build_interval_mesh(0, 1, 4), build_interval_mesh(0, 1, 4)
    with pytest.raises(MeshMismatchError):
        residual(ExponentField.constant(a, 2), ScalarField.constant(b, 0), ScalarField.constant(a, 0))


@settings(max_examples=15, deadline=None)
@given(vals=st.lists(st.floats(0, 5), min_size=15, max_size=15), p0=st.floats(1.4, 4.5))
def test_maximum_principle(vals, p0):
    m = build_interval_mesh(0, 1, 16)
    f = np.concatenate([[0.0], vals, [0.0]])
    u, _ = solve_dirichlet(ExponentField.constant(m, p0), ScalarField(m, f))
    assert u.values.min() >= -1e-12
