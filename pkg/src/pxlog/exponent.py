"""Variable exponents and the variable-exponent Lebesgue quantities.

An exponent is stored at the nodes and sampled at element barycenters for
integrals.  Fields built from an affine description (``c0 + c1*x + c2*y``)
remember it, so they can be re-evaluated exactly on another mesh (the
enlarged domain used by barrier constructions); the barycentric sample of a
P1 field is the vertex mean, which is exact for affine exponents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConjugateUndefinedError, CriticalUndefinedError,
                     InvalidParameterError, UnknownHypothesisError)
from .fields import ScalarField, SystemParams
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class ExponentField:
    mesh: Mesh
    values: np.ndarray
    coeffs: tuple | None = None
    minimum: float = field(init=False)
    maximum: float = field(init=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.mesh.n_nodes:
            raise InvalidParameterError("exponent field has the wrong number of values")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise InvalidParameterError("exponent values must be finite and positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "minimum", float(vals.min()))
        object.__setattr__(self, "maximum", float(vals.max()))

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "ExponentField":
        return cls(mesh, np.full(mesh.n_nodes, float(value)), (float(value),))

    @classmethod
    def affine(cls, mesh: Mesh, coeffs) -> "ExponentField":
        coeffs = tuple(float(c) for c in coeffs)
        if len(coeffs) > mesh.dim + 1:
            raise InvalidParameterError(f"{len(coeffs)} affine coefficients for a {mesh.dim}D mesh")
        vals = np.full(mesh.n_nodes, coeffs[0])
        for k, c in enumerate(coeffs[1:]):
            vals = vals + c * mesh.nodes[:, k]
        return cls(mesh, vals, coeffs)

    @classmethod
    def from_spec(cls, mesh: Mesh, spec) -> "ExponentField":
        """Constant (a number) or affine (a coefficient list) exponent."""
        if np.ndim(spec) == 0:
            return cls.constant(mesh, float(spec))
        return cls.affine(mesh, spec)

    @property
    def is_constant(self) -> bool:
        return self.minimum == self.maximum

    @property
    def at_barycenters(self) -> np.ndarray:
        return self.values[self.mesh.elements].mean(axis=1)

    def on(self, mesh: Mesh) -> "ExponentField":
        """The same exponent evaluated on another mesh."""
        if mesh is self.mesh:
            return self
        if self.coeffs is not None:
            return ExponentField.affine(mesh, self.coeffs)
        # nodal data only: nearest node of the clamped point
        lo = np.array(self.mesh.lower)
        hi = np.array(self.mesh.upper)
        pts = np.clip(mesh.nodes, lo, hi)
        d2 = ((pts[:, None, :] - self.mesh.nodes[None, :, :]) ** 2).sum(axis=2)
        return ExponentField(mesh, self.values[np.argmin(d2, axis=1)])

    def describe(self):
        if self.coeffs is not None:
            return list(self.coeffs) if len(self.coeffs) > 1 else self.coeffs[0]
        return {"min": self.minimum, "max": self.maximum}


def conjugate(field: ExponentField) -> ExponentField:
    """Hoelder conjugate p/(p-1)."""
    if field.minimum <= 1:
        raise ConjugateUndefinedError(f"conjugate needs values > 1, minimum is {field.minimum}")
    v = field.values
    return ExponentField(field.mesh, v / (v - 1.0))


def critical(field: ExponentField, N: int) -> ExponentField:
    """Critical Sobolev exponent N p / (N - p)."""
    if N < 2 or field.maximum >= N:
        raise CriticalUndefinedError(f"critical exponent undefined for N={N}, max exponent {field.maximum}")
    v = field.values
    return ExponentField(field.mesh, N * v / (N - v))


def _modular(p_el, vals_el, measures) -> float:
    return float(np.sum(measures * np.abs(vals_el) ** p_el))


def modular(field: ExponentField, u: ScalarField) -> float:
    """One-point (barycentric) quadrature of the integral of |u|^p."""
    field.mesh.check_same(u.mesh)
    u_el = u.values[field.mesh.elements].mean(axis=1)
    return _modular(field.at_barycenters, u_el, field.mesh.measures)


def _luxemburg(p_el, vals_el, measures, rtol=1e-12) -> float:
    scale = float(np.max(np.abs(vals_el))) if len(vals_el) else 0.0
    if scale == 0.0:
        return 0.0
    w = np.abs(vals_el) / scale

    def mod(lam):
        return _modular(p_el, w / lam, measures)

    lo, hi = 1.0, 1.0
    while mod(hi) > 1.0:
        hi *= 2.0
    while mod(lo) <= 1.0:
        lo *= 0.5
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if mod(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return scale * hi


def luxemburg_norm(field: ExponentField, u: ScalarField) -> float:
    """inf{lam > 0 : modular(u/lam) <= 1}, by bisection."""
    field.mesh.check_same(u.mesh)
    u_el = u.values[field.mesh.elements].mean(axis=1)
    return _luxemburg(field.at_barycenters, u_el, field.mesh.measures)


def gradient_norm(field: ExponentField, u: ScalarField) -> float:
    """Luxemburg norm of |grad u| (piecewise constant for P1 fields)."""
    field.mesh.check_same(u.mesh)
    g = np.linalg.norm(field.mesh.element_gradients(u.values), axis=1)
    return _luxemburg(field.at_barycenters, g, field.mesh.measures)


def sobolev_norm(field: ExponentField, u: ScalarField) -> float:
    """||u||_{L^p(x)} + ||grad u||_{L^p(x)}."""
    return luxemburg_norm(field, u) + gradient_norm(field, u)


HYPOTHESES = ("H1", "H2", "hip-superlinear", "c", "H2'")

REGIME_HYPOTHESIS = {"i": "H2", "ii": "hip-superlinear", "iii": "c", "T2": "H2'"}


@dataclass
class HypothesisReport:
    hypothesis: str
    passed: bool
    margins: dict
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"hypothesis": self.hypothesis, "passed": self.passed,
                "margins": dict(self.margins), "skipped": list(self.skipped)}


def _h1_margins(s: ExponentField, name: str, N: int, margins: dict, skipped: list):
    margins[f"{name}- > 1"] = s.minimum - 1.0
    if N < 2:
        skipped += [f"{name}+ < N", f"{name}' <= {name}*"]
        return
    margins[f"{name}+ < N"] = N - s.maximum
    if s.maximum < N and s.minimum > 1:
        sb = s.at_barycenters
        margins[f"{name}' <= {name}*"] = float(np.min(N * sb / (N - sb) - sb / (sb - 1.0)))
    else:
        margins[f"{name}' <= {name}*"] = -math.inf


def validate(params: SystemParams, which: str) -> HypothesisReport:
    """Check one hypothesis; every margin must be strictly positive.

    Pointwise conditions are sampled at element barycenters.  In 1D the
    conditions involving the dimension (p+ < N and the critical exponent)
    cannot hold and are listed as skipped instead.
    """
    p, q, a, b = params.p, params.q, params.alpha, params.beta
    margins: dict = {}
    skipped: list = []
    if which == "H1":
        N = p.mesh.dim
        _h1_margins(p, "p", N, margins, skipped)
        _h1_margins(q, "q", N, margins, skipped)
    elif which == "H2":
        margins["alpha- > 0"] = a.minimum
        margins["alpha+ < q- - 1"] = q.minimum - 1.0 - a.maximum
        margins["beta- > 0"] = b.minimum
        margins["beta+ < p- - 1"] = p.minimum - 1.0 - b.maximum
    elif which == "hip-superlinear":
        margins["alpha- > q+ - 1"] = a.minimum - (q.maximum - 1.0)
        margins["beta- > p+ - 1"] = b.minimum - (p.maximum - 1.0)
    elif which == "c":
        margins["alpha+ > q- - 1"] = a.maximum - (q.minimum - 1.0)
        margins["beta+ > p- - 1"] = b.maximum - (p.minimum - 1.0)
    elif which == "H2'":
        floor = params.gamma / (params.theta * math.e)
        pc = conjugate(p).at_barycenters
        qc = conjugate(q).at_barycenters
        margins["alpha- > gamma/(theta e)"] = a.minimum - floor
        margins["alpha+ < p- - 1"] = p.minimum - 1.0 - a.maximum
        margins["alpha+ < q'/p'"] = float(np.min(qc / pc)) - a.maximum
        margins["beta- > gamma/(theta e)"] = b.minimum - floor
        margins["beta+ < q- - 1"] = q.minimum - 1.0 - b.maximum
        margins["beta+ < p'/q'"] = float(np.min(pc / qc)) - b.maximum
    else:
        raise UnknownHypothesisError(which)
    passed = all(m > 0 for m in margins.values())
    return HypothesisReport(which, passed, margins, skipped)
