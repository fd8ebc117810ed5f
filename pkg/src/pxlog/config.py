"""Scenario files: YAML with a fixed schema and line-accurate errors."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import yaml

from .errors import ConfigError, PxlogError
from .exponent import REGIME_HYPOTHESIS, ExponentField, validate
from .fields import Flavor, SystemParams
from .mesh import Mesh, build_interval_mesh, build_rectangle_mesh
from .pxlap import SolverOptions

# nested dict: allowed keys; None marks a leaf
SCHEMA = {
    "name": None,
    "domain": {"interval": None, "rectangle": None},
    "mesh": {"n": None},
    "exponents": {"p": None, "q": None, "alpha": None, "beta": None},
    "gamma": None,
    "theta": None,
    "regime": None,
    "eps0": None,
    "eps_schedule": None,
    "eps": None,
    "lambda_grid": None,
    "solver": {k: None for k in ("tol", "max_iter", "mu", "armijo_factor", "armijo_c",
                                 "min_step", "stall_limit")},
    "verify": {k: None for k in ("cauchy_tol", "monotonicity_samples", "maximum_principle_samples",
                                 "oracle", "dump_steps")},
    "output": None,
    "seed": None,
}

REGIMES = ("i", "ii", "iii", "T2")


class HypothesisConfigError(ConfigError):
    """The exponents do not satisfy the hypothesis the regime needs."""

    def __init__(self, message, report=None, line=None):
        super().__init__(message, "regime", line)
        self.report = report


@dataclass
class ScenarioConfig:
    name: str
    domain: dict
    resolution: list
    exponents: dict
    gamma: float
    theta: float
    regime: str
    eps0: float = 0.5
    eps_schedule: list = field(default_factory=lambda: [2.0 ** -k for k in range(1, 9)])
    eps: float = 1e-3
    lambda_grid: list = field(default_factory=lambda: [k / 10 for k in range(11)])
    solver: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    output: str = "out"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "ScenarioConfig":
        return ScenarioConfig(**{**asdict(self), **kw})

    def build_mesh(self, resolution=None) -> Mesh:
        res = resolution or self.resolution
        if "interval" in self.domain:
            a, b = self.domain["interval"]
            return build_interval_mesh(a, b, res[0])
        (x0, x1), (y0, y1) = self.domain["rectangle"]
        ny = res[1] if len(res) > 1 else res[0]
        return build_rectangle_mesh((x0, x1), (y0, y1), res[0], ny)

    def build_params(self, mesh: Mesh) -> SystemParams:
        ex = {k: ExponentField.from_spec(mesh, self.exponents[k]) for k in ("p", "q", "alpha", "beta")}
        flavor = Flavor.SHIFTED if self.regime == "T2" else Flavor.PLAIN
        return SystemParams(self.gamma, self.theta, flavor=flavor, **ex)

    def solver_options(self, tol: float | None = None) -> SolverOptions:
        opts = SolverOptions(**self.solver)
        return opts.replace(tol=tol) if tol is not None else opts


def _check_keys(node, schema, path, marks):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("expected a mapping", path or "<root>", node.start_mark.line + 1)
    for key_node, value_node in node.value:
        key = key_node.value
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", where, key_node.start_mark.line + 1)
        marks[where] = key_node.start_mark.line + 1
        if schema[key] is not None:
            _check_keys(value_node, schema[key], where, marks)


def _number(data, key, marks, positive=True):
    val = data[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{key} must be a number", key, marks.get(key))
    if positive and not val > 0:
        raise ConfigError(f"{key} must be positive", key, marks.get(key))
    return float(val)


def parse_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text)


def parse_config_text(text: str) -> ScenarioConfig:
    """Validate a scenario document and fill defaults.

    Unknown keys and malformed values raise ConfigError naming the key path
    and line; exponents that fail the regime's hypothesis raise
    HypothesisConfigError.
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = exc.problem_mark.line + 1 if getattr(exc, "problem_mark", None) else None
        raise ConfigError(f"malformed YAML: {exc}", None, line) from exc
    if root is None:
        raise ConfigError("empty configuration")
    marks: dict = {}
    _check_keys(root, SCHEMA, "", marks)
    for key in ("domain", "mesh", "exponents", "gamma", "theta", "regime"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}", key)

    dom = data["domain"]
    if len(dom) != 1:
        raise ConfigError("domain needs exactly one of interval / rectangle", "domain", marks.get("domain"))
    n = data["mesh"].get("n")
    res = [n] if isinstance(n, int) else list(n or [])
    if not res or any(not isinstance(k, int) or isinstance(k, bool) or k < 2 for k in res):
        raise ConfigError("mesh resolutions must be integers >= 2", "mesh.n", marks.get("mesh.n"))
    ex = data["exponents"]
    for k in ("p", "q", "alpha", "beta"):
        if k not in ex:
            raise ConfigError(f"missing exponent {k!r}", f"exponents.{k}", marks.get("exponents"))
    regime = str(data["regime"])
    if regime not in REGIMES:
        raise ConfigError(f"regime must be one of {REGIMES}", "regime", marks.get("regime"))

    kw = dict(
        name=str(data.get("name", "scenario")), domain=dict(dom), resolution=res, exponents=dict(ex),
        gamma=_number(data, "gamma", marks), theta=_number(data, "theta", marks), regime=regime,
        solver=dict(data.get("solver") or {}), verify=dict(data.get("verify") or {}),
        output=str(data.get("output", "out")), seed=int(data.get("seed", 0)),
    )
    if "eps0" in data:
        kw["eps0"] = _number(data, "eps0", marks)
    if "eps" in data:
        kw["eps"] = _number(data, "eps", marks)
    if "eps_schedule" in data:
        sched = data["eps_schedule"]
        if isinstance(sched, dict):
            raise ConfigError("eps_schedule must be a list", "eps_schedule", marks.get("eps_schedule"))
        kw["eps_schedule"] = [float(e) for e in sched]
    if "lambda_grid" in data:
        kw["lambda_grid"] = [float(e) for e in data["lambda_grid"]]
    cfg = ScenarioConfig(**kw)

    try:
        mesh = cfg.build_mesh()
        params = cfg.build_params(mesh)
    except PxlogError as exc:
        raise ConfigError(str(exc), "exponents", marks.get("exponents")) from exc
    rep = validate(params, REGIME_HYPOTHESIS[regime])
    if not rep.passed:
        failing = [k for k, m in rep.margins.items() if not m > 0]
        raise HypothesisConfigError(f"exponents fail {rep.hypothesis}: {', '.join(failing)}",
                                    rep, marks.get("regime"))
    return cfg
