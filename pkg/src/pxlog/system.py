"""Coupled solves: truncated system, eps-regularization, lambda-continuation.

The truncated right-hand side clamps the partner variable into the box and
adds a penalty gamma_cut that pushes the own variable back inside:

    H2(x, s, t) = H(x, clamp(t, v_lo, v_hi)) - gamma_cut(l, u_lo, u_hi, s)
    G2(x, s, t) = G(x, clamp(s, u_lo, u_hi)) - gamma_cut(l, v_lo, v_hi, t)

with H(x, t) = -gamma log(t + eps) + theta t^alpha and G the analogue in s
with beta.  Inside the box both reduce to the raw right-hand sides.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .barrier import BarrierBox, construct_box
from .errors import (BoxViolationError, BranchTruncatedError, DivergedError,
                     InvalidParameterError, PreconditionError)
from .exponent import validate
from .fields import Flavor, ScalarField, SystemParams
from .nonlin import rhs_derivative, rhs_values, scalar_min_f
from .pxlap import (ROUNDING_FACTOR, SolverOptions, _jacobian, damped_newton,
                    principal, principal_magnitude, solve_dirichlet, solve_nodal)

BOX_TOL = 1e-8
DERIVATIVE_CAP = 1e6


def gamma_cut(l, lower, upper, s):
    """-((lower - s)_+)^l + ((s - upper)_+)^l."""
    return -np.maximum(lower - s, 0.0) ** l + np.maximum(s - upper, 0.0) ** l


def gamma_cut_derivative(l, lower, upper, s):
    below = np.maximum(lower - s, 0.0)
    above = np.maximum(s - upper, 0.0)
    with np.errstate(divide="ignore"):
        d = np.where(below > 0, l * below ** (l - 1.0), 0.0) + np.where(above > 0, l * above ** (l - 1.0), 0.0)
    return np.minimum(d, DERIVATIVE_CAP)


def default_l(params: SystemParams) -> float:
    return min(0.5, (min(params.p.minimum, params.q.minimum) - 1.0) / 2.0)


@dataclass(frozen=True, eq=False)
class TruncationSpec:
    box: BarrierBox
    l: float

    def __post_init__(self):
        if not 0 < self.l < 1:
            raise InvalidParameterError(f"l must lie in (0, 1), got {self.l}")

    @classmethod
    def for_params(cls, box: BarrierBox, params: SystemParams) -> "TruncationSpec":
        return cls(box, default_l(params))


class LogPowerRhs:
    """Nodal -gamma log(|w| + eps) + theta |w|^a (or (|w| + eps)^a)."""

    def __init__(self, gamma, theta, exponent_values, flavor=Flavor.PLAIN, eps=0.0):
        self.gamma, self.theta = gamma, theta
        self.a = np.asarray(exponent_values, dtype=float)
        self.flavor, self.eps = Flavor(flavor), eps

    def __call__(self, w):
        return rhs_values(self.gamma, self.theta, self.a, self.flavor, self.eps, w)

    def derivative(self, w):
        return rhs_derivative(self.gamma, self.theta, self.a, self.flavor, self.eps, w)


class ConstantRhs:
    """Right-hand side that ignores its argument."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, w):
        return np.full(np.shape(w), self.value)

    def derivative(self, w):
        return np.zeros(np.shape(w))


def raw_rhs_pair(params: SystemParams, eps: float):
    """(H, G) as functions of the partner variable."""
    return (LogPowerRhs(params.gamma, params.theta, params.alpha.values, params.flavor, eps),
            LogPowerRhs(params.gamma, params.theta, params.beta.values, params.flavor, eps))


def truncated_rhs(params, spec: TruncationSpec, eps, u, v, rhs=None):
    """Nodal (H2, G2) for nodal arrays u, v."""
    H, G = rhs or raw_rhs_pair(params, eps)
    ul, uh, vl, vh = spec.box.bounds()
    H2 = H(np.clip(v, vl, vh)) - gamma_cut(spec.l, ul, uh, u)
    G2 = G(np.clip(u, ul, uh)) - gamma_cut(spec.l, vl, vh, v)
    return H2, G2


def truncate_rhs_H(params, spec: TruncationSpec, node: int, s: float, t: float, eps: float = 0.0) -> float:
    """H2 at one node; s is the u-argument, t the v-argument."""
    ul, uh, vl, vh = (b[node] for b in spec.box.bounds())
    tc = min(max(t, vl), vh)
    h = rhs_values(params.gamma, params.theta, params.alpha.values[node], params.flavor, eps, tc)
    return float(h - gamma_cut(spec.l, ul, uh, s))


def truncate_rhs_G(params, spec: TruncationSpec, node: int, s: float, t: float, eps: float = 0.0) -> float:
    """G2 at one node; clamps s and penalizes t."""
    ul, uh, vl, vh = (b[node] for b in spec.box.bounds())
    sc = min(max(s, ul), uh)
    g = rhs_values(params.gamma, params.theta, params.beta.values[node], params.flavor, eps, sc)
    return float(g - gamma_cut(spec.l, vl, vh, t))


@dataclass
class CoupledState:
    u: ScalarField
    v: ScalarField
    residual_u: float
    residual_v: float
    within_box: bool
    eps: float | None = None
    report: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"eps": self.eps, "residual_u": self.residual_u, "residual_v": self.residual_v,
                "within_box": self.within_box, **self.report}


def box_violation(box: BarrierBox, u, v) -> float:
    ul, uh, vl, vh = box.bounds()
    return float(max(np.max(ul - u), np.max(u - uh), np.max(vl - v), np.max(v - vh)))


def coupled_residual(params, spec, eps, u, v, rhs=None):
    """Interior residual vectors of both truncated equations."""
    mesh = params.mesh
    inner = mesh.interior
    L = mesh.lumped_mass
    H2, G2 = truncated_rhs(params, spec, eps, u, v, rhs)
    ru = (principal(params.p, u) - L * H2)[inner]
    rv = (principal(params.q, v) - L * G2)[inner]
    return ru, rv


def solve_truncated(params: SystemParams, spec: TruncationSpec, eps: float,
                    opts: SolverOptions | None = None, u0=None, v0=None, rhs=None,
                    gs_sweeps: int = 500) -> CoupledState:
    """Solve the truncated coupled system on the box of ``spec``.

    Stacked damped Newton on both equations; if it fails, a relaxed
    Gauss-Seidel iteration alternates single-equation solves.  The result
    must lie in the box, otherwise BoxViolationError is raised.
    """
    opts = opts or SolverOptions()
    box = spec.box
    if rhs is None and not box.contains_eps(eps):
        raise PreconditionError(f"eps={eps} outside the box validity range (0, {box.eps0}]")
    mesh = box.mesh
    params = params.on(mesh)
    H, G = rhs or raw_rhs_pair(params, eps)
    ul, uh, vl, vh = box.bounds()
    inner = mesh.interior
    n = inner.size
    L = mesh.lumped_mass[inner]
    l = spec.l
    t0 = time.perf_counter()

    def split(x):
        u = np.zeros(mesh.n_nodes)
        v = np.zeros(mesh.n_nodes)
        u[inner], v[inner] = x[:n], x[n:]
        return u, v

    def F(x):
        u, v = split(x)
        ru, rv = coupled_residual(params, spec, eps, u, v, (H, G))
        return np.concatenate([ru, rv])

    def J(x):
        u, v = split(x)
        tc, sc = np.clip(v, vl, vh), np.clip(u, ul, uh)
        v_in = ((v >= vl) & (v <= vh))[inner]
        u_in = ((u >= ul) & (u <= uh))[inner]
        Ju = _jacobian(params.p, u, opts.mu)[inner][:, inner] + sp.diags(L * gamma_cut_derivative(l, ul, uh, u)[inner])
        Jv = _jacobian(params.q, v, opts.mu)[inner][:, inner] + sp.diags(L * gamma_cut_derivative(l, vl, vh, v)[inner])
        Huv = sp.diags(-L * H.derivative(tc)[inner] * v_in)
        Gvu = sp.diags(-L * G.derivative(sc)[inner] * u_in)
        return sp.bmat([[Ju, Huv], [Gvu, Jv]], format="csc")

    u_start = 0.5 * (ul + uh) if u0 is None else np.asarray(u0, dtype=float)
    v_start = 0.5 * (vl + vh) if v0 is None else np.asarray(v0, dtype=float)
    x0 = np.concatenate([u_start[inner], v_start[inner]])
    H2, G2 = truncated_rhs(params, spec, eps, *split(x0), (H, G))
    scale = float(np.max(L)) * max(1.0, float(np.max(np.abs(H2[inner]))), float(np.max(np.abs(G2[inner]))))
    target = opts.tol * scale

    def noise(x):
        u, v = split(x)
        mag = max(np.max(principal_magnitude(params.p, u)[inner]), np.max(principal_magnitude(params.q, v)[inner]))
        return ROUNDING_FACTOR * np.finfo(float).eps * max(float(mag), scale)

    x, rep = damped_newton(F, J, x0, opts, scale, noise=noise)
    method = "newton"
    gs_history = []
    if not rep.converged:
        method = "gauss-seidel"
        u, v = split(x0)
        for sweep in range(gs_sweeps):
            gv = H(np.clip(v, vl, vh))
            un, _ = solve_nodal(params.p, lambda w: gv - gamma_cut(l, ul, uh, w),
                                lambda w: -gamma_cut_derivative(l, ul, uh, w), opts, u0=u)
            u = 0.5 * u + 0.5 * un.values
            gu = G(np.clip(u, ul, uh))
            vn, _ = solve_nodal(params.q, lambda w: gu - gamma_cut(l, vl, vh, w),
                                lambda w: -gamma_cut_derivative(l, vl, vh, w), opts, u0=v)
            v = 0.5 * v + 0.5 * vn.values
            r = F(np.concatenate([u[inner], v[inner]]))
            gs_history.append(float(np.max(np.abs(r))))
            if gs_history[-1] <= max(target, noise(np.concatenate([u[inner], v[inner]]))):
                break
        x = np.concatenate([u[inner], v[inner]])
        # polish with Newton from the Gauss-Seidel iterate
        x, rep2 = damped_newton(F, J, x, opts, scale, noise=noise)
        rep.fallback_used = True
        rep.converged = rep2.converged
        rep.residual = rep2.residual
        rep.iterations += rep2.iterations
    u, v = split(x)
    ru, rv = coupled_residual(params, spec, eps, u, v, (H, G))
    rmax_u = float(np.max(np.abs(ru))) if n else 0.0
    rmax_v = float(np.max(np.abs(rv))) if n else 0.0
    info = {"method": method, "iterations": rep.iterations, "damping_events": rep.damping_events,
            "fallback_used": rep.fallback_used, "target": target}
    if not (rep.converged or max(rmax_u, rmax_v) <= max(target, noise(x))):
        raise DivergedError(f"truncated system stalled at residual {max(rmax_u, rmax_v):.3e}",
                            {"newton": rep.history, "gauss_seidel": gs_history})
    viol = box_violation(box, u, v)
    state = CoupledState(ScalarField(mesh, u, True), ScalarField(mesh, v, True), rmax_u, rmax_v,
                         viol <= BOX_TOL, eps, info)
    state.report["box_violation"] = viol
    state.report["wall_time"] = time.perf_counter() - t0
    if not state.within_box:
        raise BoxViolationError(f"converged state leaves the box by {viol:.3e}", state)
    return state


def solve_regularized(params: SystemParams, eps: float, regime: str, opts: SolverOptions | None = None,
                      box: BarrierBox | None = None, eps0: float = 0.5, u0=None, v0=None):
    """Positive solution of the eps-regularized system inside a certified box.

    Returns ``(state, box)`` so the (eps-independent) box can be reused.
    """
    if box is None:
        box, _ = construct_box(params, regime, eps0, opts=opts)
    if not box.contains_eps(eps):
        raise PreconditionError(f"eps={eps} outside (0, {box.eps0}]")
    spec = TruncationSpec.for_params(box, params)
    return solve_truncated(params, spec, eps, opts, u0, v0), box


def unregularized_residual(params: SystemParams, u, v) -> dict:
    """Residual of the original (eps = 0) system at a positive state.

    Reported both as the sup of the weak residual and divided by the nodal
    weights (a pointwise strong-form residual).
    """
    mesh = params.mesh
    inner = mesh.interior
    L = mesh.lumped_mass
    H, G = raw_rhs_pair(params.replace(flavor=Flavor.PLAIN), 0.0)
    ru = (principal(params.p, u) - L * np.where(mesh.is_boundary, 0.0, H(np.where(mesh.is_boundary, 1.0, v))))[inner]
    rv = (principal(params.q, v) - L * np.where(mesh.is_boundary, 0.0, G(np.where(mesh.is_boundary, 1.0, u))))[inner]
    return {"weak": float(max(np.abs(ru).max(), np.abs(rv).max())),
            "strong": float(max((np.abs(ru) / L[inner]).max(), (np.abs(rv) / L[inner]).max()))}


@dataclass
class ContinuationResult:
    states: list
    differences: list
    converged: bool
    limit: CoupledState
    box: BarrierBox
    unregularized: dict

    def to_dict(self) -> dict:
        return {"eps": [s.eps for s in self.states], "differences": self.differences,
                "converged": self.converged, "steps": [s.summary() for s in self.states],
                "unregularized_residual": self.unregularized,
                "final_regularized_residual": max(self.limit.residual_u, self.limit.residual_v)}


def epsilon_continuation(params: SystemParams, schedule, regime: str, opts: SolverOptions | None = None,
                         box: BarrierBox | None = None, eps0: float | None = None,
                         cauchy_tol: float = 1e-4) -> ContinuationResult:
    """Solve along a decreasing eps schedule with warm starts.

    The run counts as converged when the last successive sup difference is
    at most ``cauchy_tol``; otherwise the result is returned unconverged.
    """
    schedule = [float(e) for e in schedule]
    if not schedule or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise InvalidParameterError("eps schedule must be non-empty and strictly decreasing")
    if box is None:
        box, _ = construct_box(params, regime, eps0 if eps0 is not None else min(0.5, schedule[0]), opts=opts)
    states, diffs = [], []
    u0 = v0 = None
    for eps in schedule:
        state, _ = solve_regularized(params, eps, regime, opts, box, u0=u0, v0=v0)
        if states:
            prev = states[-1]
            diffs.append(float(max(np.max(np.abs(state.u.values - prev.u.values)),
                                   np.max(np.abs(state.v.values - prev.v.values)))))
        states.append(state)
        u0, v0 = state.u.values, state.v.values
    limit = states[-1]
    converged = (not diffs) or diffs[-1] <= cauchy_tol
    unreg = unregularized_residual(params.on(box.mesh), limit.u.values, limit.v.values)
    return ContinuationResult(states, diffs, converged, limit, box, unreg)


def solution_operator_T(lam: float, f: ScalarField, g: ScalarField, eps: float, params: SystemParams,
                        opts: SolverOptions | None = None, u0=None, v0=None):
    """Decoupled solves with frozen data.

    u solves -Delta_p u = lam(-gamma log(|g| + eps) + theta (|g| + eps)^alpha)
    v solves -Delta_q v = lam(-gamma log(|f| + eps) + theta (|f| + eps)^beta)
    """
    if not eps > 0:
        raise InvalidParameterError("eps must be positive")
    if lam < 0:
        raise InvalidParameterError("lambda must be non-negative")
    mesh = params.mesh
    gam, th = params.gamma, params.theta
    fu = lam * rhs_values(gam, th, params.alpha.values, Flavor.SHIFTED, eps, g.values)
    fv = lam * rhs_values(gam, th, params.beta.values, Flavor.SHIFTED, eps, f.values)
    u, _ = solve_dirichlet(params.p, ScalarField(mesh, fu), opts, u0=u0)
    v, _ = solve_dirichlet(params.q, ScalarField(mesh, fv), opts, u0=v0)
    return u, v


def lower_bound_constants(params: SystemParams):
    """m1, m2: lower bounds of theta x^a - gamma log x over the exponent range."""
    g, t = params.gamma, params.theta
    m1 = min(scalar_min_f(g, t, params.alpha.minimum)[1], scalar_min_f(g, t, params.alpha.maximum)[1])
    m2 = min(scalar_min_f(g, t, params.beta.minimum)[1], scalar_min_f(g, t, params.beta.maximum)[1])
    return m1, m2


@dataclass
class BranchRecord:
    lambdas: list = field(default_factory=list)
    states: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    positivity_margins: list = field(default_factory=list)
    a_priori: list = field(default_factory=list)
    m1: float = 0.0
    m2: float = 0.0
    complete: bool = False

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas, "iterations": self.iterations,
            "positivity_margins": self.positivity_margins, "a_priori": self.a_priori,
            "m1": self.m1, "m2": self.m2, "complete": self.complete,
            "max_a_priori_constant": max((max(c) for c in self.a_priori), default=0.0),
            "sup_norms": [[float(np.max(np.abs(u.values))), float(np.max(np.abs(v.values)))]
                          for u, v in self.states],
        }


def lambda_continuation(params: SystemParams, eps: float, lambda_grid, opts: SolverOptions | None = None,
                        tol: float = 1e-9, relax: float = 0.5, max_sweeps: int = 2000) -> BranchRecord:
    """Follow the fixed points of T(lam, .) from lam = 0 to lam = 1.

    Each lam is solved by the relaxed iteration (u, v) <- (1 - relax)(u, v)
    + relax T(lam, u, v), warm-started from the previous lam.
    """
    from .verify import a_priori_check

    grid = [float(x) for x in lambda_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])) or grid[-1] != 1.0 or grid[0] < 0:
        raise InvalidParameterError("lambda grid must increase from >= 0 to 1")
    hyp = validate(params, "H2'")
    if not hyp.passed:
        raise PreconditionError("parameters fail H2'")
    opts = opts or SolverOptions()
    mesh = params.mesh
    rec = BranchRecord()
    rec.m1, rec.m2 = lower_bound_constants(params)
    u = np.zeros(mesh.n_nodes)
    v = np.zeros(mesh.n_nodes)
    for lam in grid:
        sweeps = 0
        if lam > 0:
            for sweeps in range(1, max_sweeps + 1):
                un, vn = solution_operator_T(lam, ScalarField(mesh, u), ScalarField(mesh, v), eps, params,
                                             opts, u0=u, v0=v)
                new_u = (1 - relax) * u + relax * un.values
                new_v = (1 - relax) * v + relax * vn.values
                step = float(max(np.max(np.abs(new_u - u)), np.max(np.abs(new_v - v))))
                u, v = new_u, new_v
                if not np.isfinite(step):
                    break
                if step <= tol:
                    break
            else:
                step = np.inf
            if not step <= tol:
                raise BranchTruncatedError(f"fixed-point iteration failed at lambda={lam}",
                                           last_lambda=rec.lambdas[-1] if rec.lambdas else None, record=rec)
            w1, _ = solve_dirichlet(params.p, ScalarField.constant(mesh, lam * rec.m1), opts)
            margin = float(np.min(u - w1.values))
        else:
            u = np.zeros(mesh.n_nodes)
            v = np.zeros(mesh.n_nodes)
            margin = 0.0
        us, vs = ScalarField(mesh, u, True), ScalarField(mesh, v, True)
        consts, _ = a_priori_check(us, vs, params)
        rec.lambdas.append(lam)
        rec.states.append((us, vs))
        rec.iterations.append(sweeps)
        rec.positivity_margins.append(margin)
        rec.a_priori.append(list(consts))
    rec.complete = rec.lambdas[-1] == 1.0
    return rec
