"""Logarithmic right-hand sides and scalar bounds for the log term."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, SingularEvaluationError
from .exponent import ExponentField
from .fields import Flavor, ScalarField


@dataclass(frozen=True)
class RhsSpec:
    """-gamma log(|w| + eps) + theta * |w|^a     (PLAIN)
    -gamma log(|w| + eps) + theta * (|w| + eps)^a  (SHIFTED)
    """

    gamma: float
    theta: float
    exponent: ExponentField
    flavor: Flavor = Flavor.PLAIN
    eps: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and self.theta > 0):
            raise InvalidParameterError("gamma and theta must be positive")
        if self.eps < 0:
            raise InvalidParameterError("eps must be non-negative")
        object.__setattr__(self, "flavor", Flavor(self.flavor))


def rhs_values(gamma, theta, a, flavor, eps, w):
    """Pointwise right-hand side; ``a`` and ``w`` broadcast together."""
    aw = np.abs(w)
    shifted = aw + eps
    if np.any(shifted <= 0):
        raise SingularEvaluationError("log term evaluated at zero")
    base = shifted if Flavor(flavor) is Flavor.SHIFTED else aw
    return -gamma * np.log(shifted) + theta * base ** a


def rhs_derivative(gamma, theta, a, flavor, eps, w):
    """d/dw of ``rhs_values`` for w >= 0 (one-sided at w = 0)."""
    aw = np.abs(w)
    shifted = aw + eps
    base = shifted if Flavor(flavor) is Flavor.SHIFTED else aw
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(base > 0, a * base ** (a - 1.0), np.where(a == 1.0, 1.0, np.where(a > 1, 0.0, np.inf)))
    return np.sign(np.where(w == 0, 1.0, w)) * (-gamma / shifted + theta * power)


def eval_rhs(spec: RhsSpec, w: ScalarField) -> ScalarField:
    spec.exponent.mesh.check_same(w.mesh)
    return ScalarField(w.mesh, rhs_values(spec.gamma, spec.theta, spec.exponent.values,
                                          spec.flavor, spec.eps, w.values))


def log_bound_constant(alpha: float, theta: float, n: int = 100_000) -> float:
    """A constant C with |log x| <= x^-alpha + C x^theta for every x > 0.

    The maximum of (|log x| - x^-alpha)_+ / x^theta is taken on a log grid
    and inflated by 1%.  The grid covers [1e-12, 1e12] and is widened when
    the positive part of the ratio extends past either end (small alpha
    pushes the crossing of x^-alpha and -log x far below 1e-12, small theta
    moves the maximiser far above 1e12).
    """
    if not (alpha > 0 and theta > 0):
        raise InvalidParameterError("alpha and theta must be positive")
    lo, hi = -12.0, 12.0
    # below 1 the ratio is positive while y = -ln x lies between the roots
    # of y = e^{alpha y}; the larger root is the attracting fixed point of
    # y <- ln(y)/alpha
    if alpha < 1.0 / math.e:
        y = 1.0 / alpha ** 2
        for _ in range(500):
            y = math.log(y) / alpha
        lo = min(lo, -1.01 * y / math.log(10))
    # above 1: log x / x^theta peaks at x = e^{1/theta}
    hi = max(hi, 4.0 / (theta * math.log(10)))
    x = np.logspace(lo, hi, n)
    lx = np.log(x)
    with np.errstate(over="ignore"):
        ratio = np.maximum(np.abs(lx) - np.exp(-alpha * lx), 0.0) * np.exp(-theta * lx)
    return 1.01 * float(np.max(ratio))


def log_shift_bound_constant(theta: float, eps: float, n: int = 100_000) -> float:
    """A constant C >= 0 with |log(x + eps)| <= x^theta + C for every x >= 0."""
    if not (theta > 0 and eps > 0):
        raise InvalidParameterError("theta and eps must be positive")
    # for large x the excess log x - x^theta peaks at x = theta^(-1/theta)
    top = min(1e300, max(1e12, 10.0 * math.exp(-math.log(theta) / theta) if theta > 0.0023 else 1e300))
    x = np.concatenate([[0.0], np.logspace(-16, math.log10(top), n)])
    excess = np.abs(np.log(x + eps)) - x ** theta
    return 1.01 * max(float(np.max(excess)), 0.0)


def scalar_min_f(gamma: float, theta: float, delta: float):
    """Global minimum of f(x) = theta x^delta - gamma log x on (0, inf).

    Returns ``(x0, fmin, positive)`` where positive means delta > gamma/(theta e).
    """
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    ratio = gamma / (theta * delta)
    x0 = ratio ** (1.0 / delta)
    fmin = (gamma / delta) * (1.0 - math.log(ratio))
    return x0, fmin, bool(delta > gamma / (theta * math.e))
