"""Ordered sub/supersolution boxes for the regularized log system.

Subsolutions solve -Delta_p u = 1/lam on the domain itself; supersolutions
solve -Delta_p u = lam^sigma on an enlarged box and are read back on the
original nodes, so they stay positive on the boundary.  ``construct_box``
doubles lam until both discrete inequality chains hold at every node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (BarrierConstructionError, CertificationError,
                     InvalidParameterError, PreconditionError)
from .exponent import REGIME_HYPOTHESIS, ExponentField, validate
from .fields import Flavor, ScalarField, SystemParams
from .mesh import Mesh, enlarge_domain, restrict
from .nonlin import rhs_values
from .pxlap import SolverOptions, principal, load, solve_dirichlet

DEFAULT_SIGMA = {"i": 1.0, "ii": -0.5, "iii": -0.5, "T2": 1.0}


@dataclass(frozen=True)
class BarrierParams:
    lam: float
    sigma: float
    regime: str
    delta: float
    tau: float = 0.5
    tau1: float = 0.5
    tau2: float = 0.5

    def __post_init__(self):
        if not self.lam > 1:
            raise InvalidParameterError(f"lambda must exceed 1, got {self.lam}")
        if self.regime not in DEFAULT_SIGMA:
            raise InvalidParameterError(f"unknown regime {self.regime!r}")
        if self.regime in ("ii", "iii") and not -1 < self.sigma < 0:
            raise InvalidParameterError("regimes ii and iii need sigma in (-1, 0)")
        if self.regime in ("i", "T2") and not self.sigma > 0:
            raise InvalidParameterError("regime i needs sigma > 0")
        for t in (self.tau, self.tau1, self.tau2):
            if not 0 < t < 1:
                raise InvalidParameterError("tau values must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dict(lam=self.lam, sigma=self.sigma, regime=self.regime, delta=self.delta,
                    tau=self.tau, tau1=self.tau1, tau2=self.tau2)


@dataclass(frozen=True, eq=False)
class BarrierBox:
    u_lo: ScalarField
    u_hi: ScalarField
    v_lo: ScalarField
    v_hi: ScalarField
    eps0: float
    constants: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)
    big_mesh: Mesh | None = None
    u_hi_big: ScalarField | None = None
    v_hi_big: ScalarField | None = None

    @property
    def mesh(self) -> Mesh:
        return self.u_lo.mesh

    def contains_eps(self, eps: float) -> bool:
        return 0 < eps <= self.eps0

    def bounds(self):
        return (self.u_lo.values, self.u_hi.values, self.v_lo.values, self.v_hi.values)

    def to_dict(self) -> dict:
        return {"eps0": self.eps0, "constants": dict(self.constants),
                "certificate": dict(self.certificate)}


def yy_barrier(p: ExponentField, eta: float, delta: float, tau: float, c0: float) -> ScalarField:
    """Three-branch barrier in the distance to the boundary of p's mesh.

    Linear with slope xi = c0 * eta^(1/(p+ - 1 + tau)) up to distance delta,
    then flattened by the factor ((2 delta - t)/delta)^(2/(p- - 1)), constant
    beyond 2 delta.  The middle branch is integrated in closed form.
    """
    mesh = p.mesh
    if not 0 < delta < 0.5 * mesh.inradius:
        raise InvalidParameterError(f"delta={delta} must lie in (0, {0.5 * mesh.inradius})")
    if not (eta > 0 and c0 > 0 and 0 < tau < 1):
        raise InvalidParameterError("eta and c0 must be positive and tau in (0, 1)")
    xi = c0 * eta ** (1.0 / (p.maximum - 1.0 + tau))
    k = 2.0 / (p.minimum - 1.0)
    d = np.minimum(mesh.distance, 2.0 * delta)
    middle = xi * delta + xi * delta / (k + 1.0) * (1.0 - ((2.0 * delta - d) / delta) ** (k + 1.0))
    w = np.where(d < delta, xi * d, middle)
    return ScalarField(mesh, w)


def solve_power_rhs(p: ExponentField, lam: float, sigma: float,
                    opts: SolverOptions | None = None, unit: ScalarField | None = None) -> ScalarField:
    """Solution of -Delta_p u = lam^sigma with zero boundary data.

    For constant p the unit-load solution is rescaled by lam^(sigma/(p-1)),
    which is exact for the homogeneous operator; otherwise the rescaled
    unit solution only seeds the Newton iteration.
    """
    if not lam > 1:
        raise InvalidParameterError(f"lambda must exceed 1, got {lam}")
    mesh = p.mesh
    if unit is None:
        unit, _ = solve_dirichlet(p, ScalarField.constant(mesh, 1.0), opts)
    c = lam ** sigma
    if p.is_constant:
        return ScalarField(mesh, unit.values * c ** (1.0 / (p.minimum - 1.0)), zero_boundary=True)
    guess = unit.values * c ** (1.0 / (p.minimum - 1.0))
    u, _ = solve_dirichlet(p, ScalarField.constant(mesh, c), opts, u0=guess)
    return u


def fit_constants(box_fields: dict, params: SystemParams, bp: BarrierParams) -> dict:
    """Fit the lambda-scaled bound constants of a box.

    ``box_fields`` holds u_lo, v_lo, u_hi, v_hi on the domain and u_hi_big,
    v_hi_big on the enlarged domain.  Raises CertificationError when any
    constant is not positive and finite.
    """
    mesh = box_fields["u_lo"].mesh
    big = box_fields["u_hi_big"].mesh
    lam, sigma = bp.lam, bp.sigma
    pm, pp = params.p.minimum, params.p.maximum
    qm, qp = params.q.minimum, params.q.maximum
    ul, vl = box_fields["u_lo"].values, box_fields["v_lo"].values
    ub, vb = box_fields["u_hi_big"].values, box_fields["v_hi_big"].values
    inner, big_inner = mesh.interior, big.interior
    layer = np.minimum(bp.delta, big.distance[big_inner])
    out = {
        "K1": float(ul.max() / lam ** (-1.0 / (pm - 1.0))),
        "K2": float(vl.max() / lam ** (-1.0 / (qm - 1.0))),
        "k0": float(np.min(np.minimum(ul[inner], vl[inner]) / mesh.distance[inner])) if inner.size else 0.0,
        "c0_strong": float(np.min(np.minimum(ub, vb)[big_inner] / big.distance[big_inner])),
    }
    if sigma > 0:
        out["C0"] = float(np.min(ub[big_inner] / (lam ** (sigma / (pp - 1.0 + bp.tau1)) * layer)))
        out["C0'"] = float(np.min(vb[big_inner] / (lam ** (sigma / (qp - 1.0 + bp.tau2)) * layer)))
        out["C1"] = float(ub.max() / lam ** (sigma / (pm - 1.0)))
        out["C1'"] = float(vb.max() / lam ** (sigma / (qm - 1.0)))
    else:
        out["k2"] = float(ub.max() / lam ** (sigma / (pm - 1.0)))
        out["k2'"] = float(vb.max() / lam ** (sigma / (qm - 1.0)))
        out["c2"] = float(ub.max() / lam ** (sigma / (pp - 1.0)))
        out["c2'"] = float(vb.max() / lam ** (sigma / (qp - 1.0)))
    bad = [k for k, v in out.items() if not (math.isfinite(v) and v > 0)]
    if bad:
        raise CertificationError(f"fitted constants not positive: {', '.join(bad)}")
    return out


def certificate_margins(fields: dict, params: SystemParams, lam: float, sigma: float, eps0: float) -> dict:
    """Worst nodal slack of each inequality the box must satisfy (>= 0 is good)."""
    g, t = params.gamma, params.theta
    ul, vl = fields["u_lo"].values, fields["v_lo"].values
    ub, vb = fields["u_hi"].values, fields["v_hi"].values
    inv = 1.0 / lam
    top = lam ** sigma
    return {
        "sub_u": float(np.min(-g * np.log(vl + eps0) - inv)),
        "sub_v": float(np.min(-g * np.log(ul + eps0) - inv)),
        "super_u": float(np.min(top - rhs_values(g, t, params.alpha.values, Flavor.PLAIN, 0.0, vb))),
        "super_v": float(np.min(top - rhs_values(g, t, params.beta.values, Flavor.PLAIN, 0.0, ub))),
        "order_u": float(np.min(ub - ul)),
        "order_v": float(np.min(vb - vl)),
    }


def construct_box(params: SystemParams, regime: str, eps0: float = 0.5, mesh: Mesh | None = None,
                  opts: SolverOptions | None = None, sigma: float | None = None, tau: float = 0.5,
                  lam_start: float = 2.0, lam_cap: float = 2.0 ** 60):
    """Find lam (by doubling) for which the torsion-type barriers form a box.

    Returns ``(BarrierBox, BarrierParams)``.  The subsolution side is checked
    at eps = eps0 and the supersolution side at eps = 0, which covers every
    eps in (0, eps0] because -log(w + eps) decreases in eps.
    """
    if regime not in DEFAULT_SIGMA:
        raise InvalidParameterError(f"unknown regime {regime!r}")
    if not 0 < eps0 <= 0.5:
        raise InvalidParameterError(f"eps0 must lie in (0, 1/2], got {eps0}")
    mesh = mesh or params.mesh
    params = params.on(mesh)
    hyp = validate(params, REGIME_HYPOTHESIS[regime])
    if not hyp.passed:
        raise PreconditionError(f"parameters fail {hyp.hypothesis} required by regime {regime}")
    sigma = DEFAULT_SIGMA[regime] if sigma is None else sigma
    margin = 0.5 * mesh.inradius
    big = enlarge_domain(mesh, margin)
    big_params = params.on(big)
    delta = 0.5 * big.delta_prime

    units = {}
    for name, field_, msh in (("u_lo", params.p, mesh), ("v_lo", params.q, mesh),
                              ("u_hi", big_params.p, big), ("v_hi", big_params.q, big)):
        units[name], _ = solve_dirichlet(field_, ScalarField.constant(msh, 1.0), opts)

    lam = lam_start
    margins = {}
    while lam <= lam_cap:
        fields = {
            "u_lo": solve_power_rhs(params.p, lam, -1.0, opts, units["u_lo"]),
            "v_lo": solve_power_rhs(params.q, lam, -1.0, opts, units["v_lo"]),
            "u_hi_big": solve_power_rhs(big_params.p, lam, sigma, opts, units["u_hi"]),
            "v_hi_big": solve_power_rhs(big_params.q, lam, sigma, opts, units["v_hi"]),
        }
        fields["u_hi"] = ScalarField(mesh, restrict(fields["u_hi_big"].values, big))
        fields["v_hi"] = ScalarField(mesh, restrict(fields["v_hi_big"].values, big))
        margins = certificate_margins(fields, params, lam, sigma, eps0)
        if all(m >= 0 for m in margins.values()):
            bp = BarrierParams(lam=lam, sigma=sigma, regime=regime, delta=delta, tau=tau, tau1=tau, tau2=tau)
            constants = fit_constants(fields, params, bp)
            if delta < 0.5 * big.inradius:
                w = yy_barrier(big_params.p, lam ** sigma, delta, tau, 1.0)
                inner = big.interior
                constants["yy_ratio"] = float(np.min(fields["u_hi_big"].values[inner] / w.values[inner]))
            box = BarrierBox(fields["u_lo"], fields["u_hi"], fields["v_lo"], fields["v_hi"], eps0,
                             constants, {"lambda": lam, "margins": margins},
                             big, fields["u_hi_big"], fields["v_hi_big"])
            return box, bp
        lam *= 2.0
    failed = min(margins, key=margins.get)
    raise BarrierConstructionError(
        f"no certified box up to lambda={lam_cap:g}; worst inequality {failed} "
        f"with margin {margins[failed]:.3e}", failed=failed, margin=margins[failed], lam=lam / 2.0)


@dataclass
class SubSuperCertificate:
    passed: bool
    margins: dict
    worst_nodes: dict

    def to_dict(self) -> dict:
        return {"passed": self.passed, "margins": self.margins, "worst_nodes": self.worst_nodes}


def check_sub_super(box: BarrierBox, params: SystemParams, eps: float, tol: float = 1e-9) -> SubSuperCertificate:
    """Nodal sign test of the four discrete sub/supersolution inequalities.

    For each interior hat function phi_i the weak residual of the lower
    barrier against H(., u_lo, v_lo) must be <= tol and that of the upper
    barrier against H(., u_hi, v_hi) >= -tol; ordering is checked as well.
    """
    mesh = box.mesh
    params = params.on(mesh)
    inner = mesh.interior
    g, t = params.gamma, params.theta
    ul, uh, vl, vh = box.bounds()

    def res(expo, w, rhs):
        return (principal(expo, w) - load(mesh, rhs))[inner]

    with np.errstate(divide="ignore"):
        terms = {
            "sub_u": -res(params.p, ul, rhs_values(g, t, params.alpha.values, Flavor.PLAIN, eps, vl)),
            "sub_v": -res(params.q, vl, rhs_values(g, t, params.beta.values, Flavor.PLAIN, eps, ul)),
            "super_u": res(params.p, uh, rhs_values(g, t, params.alpha.values, Flavor.PLAIN, eps, vh)),
            "super_v": res(params.q, vh, rhs_values(g, t, params.beta.values, Flavor.PLAIN, eps, uh)),
            "order_u": (uh - ul)[inner],
            "order_v": (vh - vl)[inner],
        }
    margins = {k: float(v.min()) if v.size else 0.0 for k, v in terms.items()}
    worst = {k: int(inner[np.argmin(v)]) if v.size else -1 for k, v in terms.items()}
    return SubSuperCertificate(all(m >= -tol for m in margins.values()), margins, worst)
