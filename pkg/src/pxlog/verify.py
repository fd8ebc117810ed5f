"""Independent checks and small-mesh oracles.

Everything here is a pure function of its inputs: the same arguments give
bit-identical reports.  Random sampling is driven by explicit seeds.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedError, InvalidParameterError, OracleFailure
from .exponent import ExponentField, gradient_norm, sobolev_norm
from .fields import ScalarField, SystemParams
from .mesh import Mesh, build_interval_mesh, gauss_rule
from .pxlap import SolverOptions, linear_solve, principal, solve_dirichlet


@dataclass
class CheckReport:
    check: str
    passed: bool
    margin: float
    location: int | None = None
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.check, "passed": self.passed, "margin": self.margin,
                "location": self.location, "constants": dict(self.constants)}


def check_ordering(u: ScalarField, lo: ScalarField, hi: ScalarField, tol: float = 1e-8) -> CheckReport:
    u.mesh.check_same(lo.mesh)
    u.mesh.check_same(hi.mesh)
    slack = np.minimum(u.values - lo.values, hi.values - u.values)
    i = int(np.argmin(slack))
    return CheckReport("ordering", bool(slack[i] >= -tol), float(slack[i]), i)


def fit_positivity_constant(u: ScalarField):
    """Largest c with u >= c d(x) at the interior nodes."""
    mesh = u.mesh
    inner = mesh.interior
    ratio = u.values[inner] / mesh.distance[inner]
    i = int(np.argmin(ratio))
    c = float(ratio[i])
    return c, CheckReport("positivity", c > 0, c, int(inner[i]), {"c": c})


def check_monotonicity(p: ExponentField, n_samples: int = 1000, value_range=(-1.0, 1.0),
                       seed: int = 0) -> CheckReport:
    """Sample <A(u) - A(v), u - v> over random zero-boundary pairs."""
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be at least 1")
    mesh = p.mesh
    rng = np.random.default_rng(seed)
    inner = mesh.interior
    lo, hi = value_range
    worst, where = math.inf, -1
    for k in range(n_samples):
        u = np.zeros(mesh.n_nodes)
        v = np.zeros(mesh.n_nodes)
        u[inner] = rng.uniform(lo, hi, inner.size)
        v[inner] = rng.uniform(lo, hi, inner.size)
        val = float((principal(p, u) - principal(p, v)) @ (u - v))
        if val < worst:
            worst, where = val, k
    return CheckReport("monotonicity", worst >= -1e-12, worst, where)


def check_maximum_principle(p: ExponentField, n_samples: int = 100, seed: int = 0,
                            opts: SolverOptions | None = None) -> CheckReport:
    """Solve with random nonnegative data and record the smallest nodal value."""
    mesh = p.mesh
    rng = np.random.default_rng(seed)
    worst, where = math.inf, -1
    for k in range(n_samples):
        f = rng.uniform(0.0, 1.0, mesh.n_nodes) * (rng.uniform(size=mesh.n_nodes) < 0.5)
        u, _ = solve_dirichlet(p, ScalarField(mesh, f), opts)
        m = float(u.values.min())
        if m < worst:
            worst, where = m, k
    return CheckReport("maximum_principle", worst >= -1e-12, worst, where)


def _power_mass(mesh, rule, p, phi):
    """Nodal integrals of |phi|^{p-2} phi psi_i and the value of the integral of |phi|^p."""
    vals = rule.interpolate(mesh, phi)
    w = mesh.measures[:, None] * rule.weights[None, :]
    dens = np.abs(vals) ** (p - 2.0) * vals
    local = np.einsum("ek,ek,kv->ev", w, dens, rule.points)
    return mesh.scatter(local), float(np.sum(w * np.abs(vals) ** p))


def first_eigenpair(p_const: float, mesh: Mesh, opts: SolverOptions | None = None,
                    tol: float = 1e-12, max_iter: int = 5000):
    """First eigenvalue of the constant-exponent p-Laplacian.

    Minimizes the Rayleigh quotient of |grad phi|^p over |phi|^p by gradient
    steps preconditioned with the stiffness matrix, normalizing the
    denominator to one after every step.  For p = 2 a unit step is inverse
    iteration.
    """
    if not p_const > 1:
        raise InvalidParameterError("p must exceed 1")
    p = ExponentField.constant(mesh, p_const)
    rule = gauss_rule(mesh.dim)
    inner = mesh.interior
    K = mesh.stiffness[inner][:, inner]

    def normalize(phi):
        _, den = _power_mass(mesh, rule, p_const, phi)
        return phi / den ** (1.0 / p_const)

    def quotient(phi):
        g = np.linalg.norm(mesh.element_gradients(phi), axis=1)
        num = float(np.sum(mesh.measures * g ** p_const))
        _, den = _power_mass(mesh, rule, p_const, phi)
        return num / den

    phi = normalize(mesh.distance.copy())
    R = quotient(phi)
    history = [R]
    step = 1.0
    for it in range(max_iter):
        M, _ = _power_mass(mesh, rule, p_const, phi)
        grad = principal(p, phi)[inner] - R * M[inner]
        d = np.zeros(mesh.n_nodes)
        d[inner] = linear_solve(K, grad)
        while True:
            trial = normalize(np.maximum(phi - step * d, 0.0))
            Rt = quotient(trial)
            if Rt <= R or step < 1e-12:
                break
            step *= 0.5
        change = abs(R - Rt) / R
        phi, R = trial, Rt
        history.append(R)
        step = min(1.0, 2.0 * step)
        if change <= tol:
            break
    else:
        raise DivergedError(f"Rayleigh minimization did not settle (last change {change:.2e})",
                            {"history": history})
    return R, ScalarField(mesh, phi, zero_boundary=True)


def comparison_constant(w: ScalarField, phi: ScalarField) -> CheckReport:
    """Largest P with P * phi <= w at the interior nodes."""
    inner = w.mesh.interior
    ratio = w.values[inner] / phi.values[inner]
    i = int(np.argmin(ratio))
    return CheckReport("eigenfunction_comparison", bool(ratio[i] > 0), float(ratio[i]), int(inner[i]),
                       {"P1": float(ratio[i])})


def hardy_sobolev_ratio(u: ScalarField, wdenom: ScalarField, delta: float,
                        p: ExponentField | None = None):
    """Integral of |u| / wdenom^delta with interior Gauss points only.

    The fitted constant divides the value by the Luxemburg norm of |grad u|
    (for exponent p, or 2 when p is omitted).
    """
    if not 0 < delta < 1:
        raise InvalidParameterError("delta must lie in (0, 1)")
    mesh = u.mesh
    mesh.check_same(wdenom.mesh)
    inner = mesh.interior
    if np.any(wdenom.values[inner] <= 0):
        raise InvalidParameterError("denominator must be positive at interior nodes")
    rule = gauss_rule(mesh.dim)
    uq = np.abs(rule.interpolate(mesh, u.values))
    wq = rule.interpolate(mesh, wdenom.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(wq > 0, uq / np.where(wq > 0, wq, 1.0) ** delta, 0.0)
    value = rule.integrate(mesh, integrand)
    if p is None:
        p = ExponentField.constant(mesh, 2.0)
    gnorm = gradient_norm(p, u)
    c = value / gnorm if gnorm > 0 else 0.0
    ok = bool(np.isfinite(value) and np.isfinite(c))
    return value, CheckReport("hardy_sobolev", ok, float(value), None, {"C": float(c), "grad_norm": gnorm})


def a_priori_check(u: ScalarField, v: ScalarField, params: SystemParams):
    """Smallest constants making the two a-priori growth inequalities hold.

    For u: ||u||^{p-} <= C ||u|| (1 + ||v||)^{alpha+} + C (1 + ||u||), and
    symmetrically for v with q- and beta+, in the W^{1,p(x)} and W^{1,q(x)}
    norms.
    """
    nu = sobolev_norm(params.p, u)
    nv = sobolev_norm(params.q, v)
    cu = nu ** params.p.minimum / (nu * (1.0 + nv) ** params.alpha.maximum + 1.0 + nu)
    cv = nv ** params.q.minimum / (nv * (1.0 + nu) ** params.beta.maximum + 1.0 + nv)
    ok = all(math.isfinite(x) for x in (nu, nv, cu, cv))
    return (cu, cv), CheckReport("a_priori", ok, 0.0, None,
                                 {"C_u": cu, "C_v": cv, "norm_u": nu, "norm_v": nv})


def torsion_oracle(p_value: float, n: int, opts: SolverOptions | None = None) -> float:
    """Sup error of the 1D unit-load solve against the closed form.

    p = 2 uses (0, 1) and x(1-x)/2; otherwise (-1, 1) and
    (p-1)/p (1 - |x|^{p/(p-1)}).  Errors are taken at the nodes and the
    element midpoints (for p = 2 the nodal values are exact).
    """
    if p_value == 2:
        mesh = build_interval_mesh(0.0, 1.0, n)
        exact = lambda x: 0.5 * x * (1.0 - x)
    else:
        mesh = build_interval_mesh(-1.0, 1.0, n)
        k = p_value / (p_value - 1.0)
        exact = lambda x: (1.0 / k) * (1.0 - np.abs(x) ** k)
    u, _ = solve_dirichlet(ExponentField.constant(mesh, p_value), ScalarField.constant(mesh, 1.0), opts)
    x = mesh.nodes[:, 0]
    xm = mesh.barycenters[:, 0]
    um = u.values[mesh.elements].mean(axis=1)
    return float(max(np.abs(u.values - exact(x)).max(), np.abs(um - exact(xm)).max()))


# ---------------------------------------------------------------------------
# dense brute-force oracle for the truncated system on tiny 1D meshes

def _scenario_seed(*parts) -> int:
    h = hashlib.sha256(repr(parts).encode()).hexdigest()
    return int(h[:16], 16)


def _dense_residual(xs, pu, pq, l, bounds, H, G, u_in, v_in):
    """Loop-assembled residual of the truncated system (1D, interior unknowns)."""
    ul, uh, vl, vh = bounds
    n = len(xs)
    u = np.zeros(n)
    v = np.zeros(n)
    u[1:-1], v[1:-1] = u_in, v_in
    ru = np.zeros(n)
    rv = np.zeros(n)
    for e in range(n - 1):
        h = xs[e + 1] - xs[e]
        for w, pe, r in ((u, pu[e], ru), (v, pq[e], rv)):
            g = (w[e + 1] - w[e]) / h
            flux = abs(g) ** (pe - 2.0) * g if g != 0 else 0.0
            r[e] -= flux
            r[e + 1] += flux
    for i in range(1, n - 1):
        weight = 0.5 * (xs[i + 1] - xs[i - 1])
        t = min(max(v[i], vl[i]), vh[i])
        s = min(max(u[i], ul[i]), uh[i])
        cut_u = -max(ul[i] - u[i], 0.0) ** l + max(u[i] - uh[i], 0.0) ** l
        cut_v = -max(vl[i] - v[i], 0.0) ** l + max(v[i] - vh[i], 0.0) ** l
        ru[i] -= weight * (H(i, t) - cut_u)
        rv[i] -= weight * (G(i, s) - cut_v)
    return np.concatenate([ru[1:-1], rv[1:-1]])


def brute_force_coupled(params: SystemParams, spec, eps: float, rhs=None, restarts: int = 64,
                        tol: float = 1e-12, max_iter: int = 200):
    """Dense Newton with finite-difference Jacobians from random starts in the box.

    Only for 1D meshes with at most 17 nodes.  Returns ``(u, v, residual)``
    for the in-box root with the smallest residual; raises OracleFailure when
    no start reaches ``tol``.
    """
    box = spec.box
    mesh = box.mesh
    if mesh.dim != 1 or mesh.n_nodes > 17:
        raise InvalidParameterError("the oracle handles 1D meshes with at most 17 nodes")
    params = params.on(mesh)
    xs = mesh.nodes[:, 0]
    pu = 0.5 * (params.p.values[:-1] + params.p.values[1:])
    pq = 0.5 * (params.q.values[:-1] + params.q.values[1:])
    bounds = tuple(np.asarray(b, dtype=float) for b in box.bounds())
    a_vals, b_vals = params.alpha.values, params.beta.values
    gam, th = params.gamma, params.theta

    if rhs is None:
        def H(i, t):
            return -gam * math.log(t + eps) + th * t ** a_vals[i]

        def G(i, s):
            return -gam * math.log(s + eps) + th * s ** b_vals[i]
    else:
        Hr, Gr = rhs

        def H(i, t):
            return float(Hr(np.array([t]))[0])

        def G(i, s):
            return float(Gr(np.array([s]))[0])

    m = mesh.n_nodes - 2

    def F(x):
        return _dense_residual(xs, pu, pq, spec.l, bounds, H, G, x[:m], x[m:])

    def jac(x):
        J = np.empty((2 * m, 2 * m))
        for k in range(2 * m):
            h = 1e-7 * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            J[:, k] = (F(xp) - F(xm)) / (2 * h)
        return J

    ul, uh, vl, vh = bounds
    rng = np.random.default_rng(_scenario_seed(params.describe(), eps, spec.l, m,
                                               [b.tolist() for b in bounds]))
    best = None
    for _ in range(restarts):
        x = np.concatenate([rng.uniform(ul[1:-1], uh[1:-1]), rng.uniform(vl[1:-1], vh[1:-1])])
        r = F(x)
        for _ in range(max_iter):
            rn = np.max(np.abs(r))
            if rn <= tol:
                break
            try:
                d = np.linalg.solve(jac(x), -r)
            except np.linalg.LinAlgError:
                break
            step = 1.0
            while step > 1e-10:
                xt = x + step * d
                rt = F(xt)
                if np.max(np.abs(rt)) < rn:
                    break
                step *= 0.5
            else:
                break
            x, r = xt, rt
        rn = float(np.max(np.abs(r)))
        inside = (np.all(x[:m] >= ul[1:-1] - 1e-8) and np.all(x[:m] <= uh[1:-1] + 1e-8)
                  and np.all(x[m:] >= vl[1:-1] - 1e-8) and np.all(x[m:] <= vh[1:-1] + 1e-8))
        if rn <= tol and inside and (best is None or rn < best[1]):
            best = (x.copy(), rn)
    if best is None:
        raise OracleFailure("no in-box root found from any restart")
    x, rn = best
    u = np.zeros(mesh.n_nodes)
    v = np.zeros(mesh.n_nodes)
    u[1:-1], v[1:-1] = x[:m], x[m:]
    return ScalarField(mesh, u, True), ScalarField(mesh, v, True), rn
