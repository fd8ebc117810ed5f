"""Nodal data containers shared across modules."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, MeshMismatchError
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values of a P1 function.

    ``zero_boundary`` marks fields meant to live in W_0 (solutions, barriers
    on their own domain); for those the boundary values are forced to zero.
    """

    mesh: Mesh
    values: np.ndarray
    zero_boundary: bool = False

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.mesh.n_nodes:
            raise MeshMismatchError(f"{vals.shape[0]} values for a mesh with {self.mesh.n_nodes} nodes")
        if self.zero_boundary:
            vals[self.mesh.boundary] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, mesh: Mesh, c: float, zero_boundary: bool = False) -> "ScalarField":
        return cls(mesh, np.full(mesh.n_nodes, float(c)), zero_boundary)

    @classmethod
    def from_function(cls, mesh: Mesh, fn, zero_boundary: bool = False) -> "ScalarField":
        coords = [mesh.nodes[:, k] for k in range(mesh.dim)]
        return cls(mesh, np.broadcast_to(fn(*coords), (mesh.n_nodes,)), zero_boundary)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.mesh, values, self.zero_boundary)

    def __len__(self):
        return self.values.shape[0]


class Flavor(str, enum.Enum):
    """Which regularized right-hand side a system uses.

    PLAIN: -g log(|w|+eps) + t |w|^a        (sub/supersolution route)
    SHIFTED: -g log(|w|+eps) + t (|w|+eps)^a  (continuation route)
    """

    PLAIN = "plain"
    SHIFTED = "shifted"


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Coefficients and exponent fields of the coupled system.

    ``p``/``q`` drive the two operators; ``alpha`` enters the u-equation
    (as a power of v) and ``beta`` the v-equation (as a power of u).
    """

    gamma: float
    theta: float
    p: "ExponentField"
    q: "ExponentField"
    alpha: "ExponentField"
    beta: "ExponentField"
    flavor: Flavor = Flavor.PLAIN

    def __post_init__(self):
        if not (self.gamma > 0 and self.theta > 0):
            raise InvalidParameterError(f"gamma and theta must be positive, got {self.gamma}, {self.theta}")
        mesh = self.p.mesh
        for name in ("q", "alpha", "beta"):
            if getattr(self, name).mesh is not mesh:
                raise MeshMismatchError(f"exponent field {name} is not on the mesh of p")
        if self.p.minimum <= 1 or self.q.minimum <= 1:
            raise InvalidParameterError("p and q must exceed 1 everywhere")
        object.__setattr__(self, "flavor", Flavor(self.flavor))

    @property
    def mesh(self) -> Mesh:
        return self.p.mesh

    def replace(self, **changes) -> "SystemParams":
        kw = dict(gamma=self.gamma, theta=self.theta, p=self.p, q=self.q,
                  alpha=self.alpha, beta=self.beta, flavor=self.flavor)
        kw.update(changes)
        return SystemParams(**kw)

    def on(self, mesh: Mesh) -> "SystemParams":
        return self.replace(p=self.p.on(mesh), q=self.q.on(mesh),
                            alpha=self.alpha.on(mesh), beta=self.beta.on(mesh))

    def swapped(self) -> "SystemParams":
        """Same system with the roles of (u, p, alpha) and (v, q, beta) exchanged."""
        return self.replace(p=self.q, q=self.p, alpha=self.beta, beta=self.alpha)

    def describe(self) -> dict:
        return {
            "gamma": self.gamma,
            "theta": self.theta,
            "flavor": self.flavor.value,
            **{name: getattr(self, name).describe() for name in ("p", "q", "alpha", "beta")},
        }
