"""Discrete p(x)-Laplacian with homogeneous Dirichlet data.

The operator part is assembled exactly for P1 fields (the gradient is
piecewise constant and p is sampled at element barycenters).  Loads use
nodal quadrature: the load vector is ``lumped_mass * f``.  This is exact for
constant data, keeps singular right-hand sides off the boundary nodes, and
makes every pointwise inequality on f carry over to the discrete residual.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DivergedError
from .exponent import ExponentField
from .fields import ScalarField


# residuals below this many ulps of the assembled flux magnitudes are noise
ROUNDING_FACTOR = 1e3


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 200
    mu: float = 1e-10
    armijo_factor: float = 0.5
    armijo_c: float = 1e-4
    min_step: float = 2.0 ** -20
    stall_limit: int = 3

    def replace(self, **kw) -> "SolverOptions":
        return SolverOptions(**{**asdict(self), **kw})


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residual: float = float("inf")
    damping_events: int = 0
    fallback_used: bool = False
    wall_time: float = 0.0
    history: list | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        d.pop("history")
        return d


def _flux(p_el: np.ndarray, g: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(g, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > 0, norm ** (p_el - 2.0), 0.0)
    return scale[:, None] * g


def principal(p: ExponentField, values: np.ndarray) -> np.ndarray:
    """Nodal vector of the integrals of |grad u|^{p-2} grad u . grad phi_i."""
    mesh = p.mesh
    g = mesh.element_gradients(values)
    fl = _flux(p.at_barycenters, g)
    local = mesh.measures[:, None] * np.einsum("ed,edk->ek", fl, mesh.grads)
    return mesh.scatter(local)


def principal_magnitude(p: ExponentField, values: np.ndarray) -> np.ndarray:
    """Nodal sums of the absolute element contributions to ``principal``.

    Rounding in the assembled residual is proportional to this, so it sets
    the attainable residual floor.
    """
    mesh = p.mesh
    fl = _flux(p.at_barycenters, mesh.element_gradients(values))
    local = mesh.measures[:, None] * np.abs(np.einsum("ed,edk->ek", fl, mesh.grads))
    return mesh.scatter(local)


def load(mesh, f_values) -> np.ndarray:
    return mesh.lumped_mass * np.asarray(f_values, dtype=float)


def residual(p: ExponentField, u: ScalarField, f: ScalarField) -> ScalarField:
    """A(u) - load(f) at interior nodes, zero on the boundary."""
    p.mesh.check_same(u.mesh)
    p.mesh.check_same(f.mesh)
    r = principal(p, u.values) - load(p.mesh, f.values)
    r[p.mesh.boundary] = 0.0
    return ScalarField(p.mesh, r)


def _tangent_coefficients(p_el, g, mu):
    s = np.einsum("ed,ed->e", g, g) + mu
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(s > 0, s ** ((p_el - 2.0) / 2.0), np.where(p_el == 2.0, 1.0, 0.0))
        b = np.where(s > 0, (p_el - 2.0) * s ** ((p_el - 4.0) / 2.0), 0.0)
    return a, b


def jacobian(p: ExponentField, u: ScalarField, mu: float = 1e-10) -> sp.csr_matrix:
    """Derivative of ``principal`` at u, regularized by mu.

    Returned as a full nodal matrix; boundary rows and columns are not
    eliminated, solvers take the interior block.
    """
    mesh = p.mesh
    p.mesh.check_same(u.mesh)
    return _jacobian(p, u.values, mu)


def _jacobian(p, values, mu):
    mesh = p.mesh
    g = mesh.element_gradients(values)
    a, b = _tangent_coefficients(p.at_barycenters, g, mu)
    M = a[:, None, None] * np.eye(mesh.dim)[None] + b[:, None, None] * np.einsum("ei,ej->eij", g, g)
    local = np.einsum("e,edi,edf,efj->eij", mesh.measures, mesh.grads, M, mesh.grads)
    return mesh.assemble(local)


def lagged_operator(p, values, mu) -> sp.csr_matrix:
    """Stiffness with the frozen coefficient |grad u|^{p-2} (mu^{(p-2)/2} where grad u = 0)."""
    mesh = p.mesh
    g = mesh.element_gradients(values)
    # regularize only degenerate elements so the fixed point stays exact
    s = np.einsum("ed,ed->e", g, g)
    a, _ = _tangent_coefficients(p.at_barycenters, g, np.where(s > 0, 0.0, mu))
    local = np.einsum("e,edi,edj->eij", mesh.measures * a, mesh.grads, mesh.grads)
    return mesh.assemble(local)


def linear_solve(mat, rhs) -> np.ndarray:
    mat = sp.csc_matrix(mat)
    if mat.shape[0] == 1:
        return np.array([rhs[0] / mat[0, 0]])
    return spla.spsolve(mat, rhs)


def damped_newton(F, J, x0, opts: SolverOptions, scale: float, picard=None,
                  report: SolveReport | None = None, noise=None):
    """Armijo-damped Newton iteration for F(x) = 0.

    ``F`` returns the residual vector, ``J`` a sparse Jacobian.  Convergence
    is declared when max|F| <= opts.tol * scale.  ``picard(x)`` may return
    an alternative iterate; it is used when a Newton line search fails, and
    permanently after ``stall_limit`` consecutive failures.  ``noise(x)``
    optionally bounds the rounding level of F; the tolerance never drops
    below it.
    """
    rep = report or SolveReport()
    rep.history = []
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float)
    r = F(x)
    target = opts.tol * scale
    stalls = 0
    use_picard = False

    def search(x, r, d):
        phi0 = float(r @ r)
        step = 1.0
        while step >= opts.min_step:
            xt = x + step * d
            rt = F(xt)
            phit = float(rt @ rt)
            if np.isfinite(phit) and phit <= (1.0 - 2.0 * opts.armijo_c * step) * phi0:
                return xt, rt, step
            step *= opts.armijo_factor
            rep.damping_events += 1
        return None

    for it in range(1, opts.max_iter + 1):
        rnorm = float(np.max(np.abs(r))) if r.size else 0.0
        rep.history.append(rnorm)
        if rnorm <= target or (noise is not None and rnorm <= noise(x)):
            rep.converged = True
            rep.iterations = it - 1
            rep.residual = rnorm
            break
        found = None
        newton_failed = False
        if not use_picard:
            try:
                d = -linear_solve(J(x), r)
                if np.all(np.isfinite(d)):
                    found = search(x, r, d)
            except (RuntimeError, ValueError):
                found = None
            newton_failed = found is None
        if found is None and picard is not None:
            d = picard(x) - x
            found = search(x, r, d)
            if found is None:
                # Picard step is accepted undamped as a last resort
                xt = x + d
                found = (xt, F(xt), 1.0)
            rep.fallback_used = True
        if found is None:
            rep.residual = rnorm
            rep.iterations = it
            break
        x_new, r_new, _ = found
        stalls = stalls + 1 if newton_failed else 0
        if stalls >= opts.stall_limit and picard is not None:
            use_picard = True
            rep.fallback_used = True
        x, r = x_new, r_new
    else:
        rep.iterations = opts.max_iter
        rep.residual = float(np.max(np.abs(r))) if r.size else 0.0
        rep.converged = rep.residual <= target or (noise is not None and rep.residual <= noise(x))
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def solve_dirichlet(p: ExponentField, f: ScalarField, opts: SolverOptions | None = None,
                    u0: np.ndarray | None = None):
    """Solve -div(|grad u|^{p-2} grad u) = f with u = 0 on the boundary.

    Returns ``(u, report)``; raises DivergedError when the damped Newton
    iteration (with its Picard fallback) misses the tolerance.
    """
    p.mesh.check_same(f.mesh)
    fv = np.asarray(f.values, dtype=float)
    return solve_nodal(p, lambda u: fv, None, opts, u0)


def solve_nodal(p: ExponentField, source, dsource=None, opts: SolverOptions | None = None,
                u0: np.ndarray | None = None, scale: float | None = None):
    """Solve -Delta_p u = source(u) where the source acts node by node.

    ``source`` maps nodal values to nodal values and ``dsource`` returns its
    pointwise derivative (omit it for data independent of u).  The default
    convergence scale is the sup of the load of source(u0).
    """
    opts = opts or SolverOptions()
    mesh = p.mesh
    inner = mesh.interior
    L = mesh.lumped_mass[inner]
    K = mesh.stiffness[inner][:, inner]

    def full(x):
        v = np.zeros(mesh.n_nodes)
        v[inner] = x
        return v

    def F(x):
        u = full(x)
        return principal(p, u)[inner] - L * source(u)[inner]

    def J(x):
        u = full(x)
        jac = _jacobian(p, u, opts.mu)[inner][:, inner]
        if dsource is not None:
            jac = jac - sp.diags(L * dsource(u)[inner])
        return jac

    def picard(x):
        u = full(x)
        mat = lagged_operator(p, u, opts.mu)[inner][:, inner]
        rhs = L * source(u)[inner]
        if dsource is not None:
            # keep the monotone part of the source implicit
            ds = np.minimum(dsource(u)[inner], 0.0)
            mat = mat - sp.diags(L * ds)
            rhs = rhs - L * ds * x
        return linear_solve(mat, rhs)

    if u0 is None:
        b0 = L * source(np.zeros(mesh.n_nodes))[inner]
        x0 = linear_solve(K, b0) if inner.size else np.zeros(0)
    else:
        x0 = np.asarray(u0, dtype=float)[inner]
    if scale is None:
        scale = float(np.max(np.abs(L * source(full(x0))[inner]))) if inner.size else 0.0

    def noise(x):
        return ROUNDING_FACTOR * np.finfo(float).eps * float(np.max(principal_magnitude(p, full(x))[inner]))

    x, rep = damped_newton(F, J, x0, opts, scale, picard, noise=noise)
    if not rep.converged:
        raise DivergedError(f"p-Laplacian solve stopped at residual {rep.residual:.3e} "
                            f"after {rep.iterations} iterations", rep)
    return ScalarField(mesh, full(x), zero_boundary=True), rep
