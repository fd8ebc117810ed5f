"""Command line front end: validate, run, sweep, oracle.

Exit codes: 0 all checks pass, 1 usage or configuration error, 2 hypothesis
validation failed, 3 barrier certification failed, 4 a solver diverged,
5 a verification check failed.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .barrier import check_sub_super, construct_box
from .config import HypothesisConfigError, ScenarioConfig, parse_config
from .errors import (BarrierConstructionError, BoxViolationError, BranchTruncatedError,
                     CertificationError, ConfigError, DivergedError, OracleFailure,
                     PreconditionError)
from .exponent import HYPOTHESES, REGIME_HYPOTHESIS, ExponentField, validate
from .fields import ScalarField
from .pxlap import solve_dirichlet
from .system import (ConstantRhs, TruncationSpec, epsilon_continuation, lambda_continuation,
                     solve_truncated)
from .verify import (a_priori_check, brute_force_coupled, check_maximum_principle,
                     check_monotonicity, check_ordering, comparison_constant, first_eigenpair,
                     fit_positivity_constant, hardy_sobolev_ratio, torsion_oracle)

EXIT_OK, EXIT_USAGE, EXIT_HYPOTHESIS, EXIT_BARRIER, EXIT_DIVERGED, EXIT_VERIFY = 0, 1, 2, 3, 4, 5
ORACLE_NODES = 17

PLOT_SCRIPT = '''"""Plot the nodal data written by the solver run (needs matplotlib)."""
import sys

import matplotlib.pyplot as plt
import numpy as np

for path in sys.argv[1:] or ["u.dat", "v.dat"]:
    data = np.loadtxt(path)
    x = data[:, 0]
    order = np.argsort(x)
    for col, label in zip(data.T[2:], ["lower barrier", "solution", "upper barrier"]):
        plt.plot(x[order], col[order], label=f"{path}: {label}")
plt.legend()
plt.show()
'''


def _clean(obj):
    """Make a report JSON-safe (numpy scalars, non-finite floats)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_fields(out: Path, mesh, columns: dict, stem: str) -> None:
    names = [f"x{k}" for k in range(mesh.dim)] + ["d"] + list(columns)
    rows = np.column_stack([mesh.nodes, mesh.distance] + [np.asarray(c) for c in columns.values()])
    buf = [",".join(names)] + [",".join(repr(float(x)) for x in row) for row in rows]
    write_atomic(out / f"{stem}.csv", "\n".join(buf) + "\n")


def _write_plot(out: Path, mesh, name: str, lo, mid, hi) -> None:
    rows = np.column_stack([mesh.nodes[:, 0], mesh.distance, lo, mid, hi])
    header = "# x d lower solution upper\n"
    write_atomic(out / f"{name}.dat", header + "\n".join(" ".join(f"{x:.16e}" for x in r) for r in rows) + "\n")


class _Stage(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _verify_common(cfg: ScenarioConfig, params, mesh, seed: int, report: dict, required: list) -> None:
    ver = report["verification"]
    vcfg = cfg.verify
    n0 = max(4, cfg.resolution[0])
    errs = [torsion_oracle(2.0, n) for n in (n0, 2 * n0, 4 * n0)]
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    ver["torsion_p2"] = {"resolutions": [n0, 2 * n0, 4 * n0], "errors": errs, "rates": rates,
                         "passed": all(r > 1.8 for r in rates)}
    required.append("torsion_p2")
    n_mono = int(vcfg.get("monotonicity_samples", 200))
    for name, expo in (("p", params.p), ("q", params.q)):
        rep = check_monotonicity(expo, n_mono, seed=seed)
        ver[f"monotonicity_{name}"] = rep.to_dict()
        required.append(f"monotonicity_{name}")
    rep = check_maximum_principle(params.p, int(vcfg.get("maximum_principle_samples", 10)), seed=seed)
    ver["maximum_principle"] = rep.to_dict()
    required.append("maximum_principle")


def _run_box_regime(cfg, params, mesh, opts, report, required, timings, out):
    t = time.perf_counter()
    try:
        box, bp = construct_box(params, cfg.regime, cfg.eps0, opts=opts)
    except BarrierConstructionError as exc:
        report["barrier"] = {"certified": False, "error": str(exc), "failed": exc.failed,
                             "margin": exc.margin, "lambda": exc.lam}
        raise _Stage(EXIT_BARRIER, str(exc))
    except CertificationError as exc:
        report["barrier"] = {"certified": False, "error": str(exc)}
        raise _Stage(EXIT_BARRIER, str(exc))
    timings["barrier"] = time.perf_counter() - t
    checks = {}
    for frac in (1.0, 0.5, 0.1):
        eps = cfg.eps0 * frac
        checks[repr(eps)] = check_sub_super(box, params, eps).to_dict()
    report["barrier"] = {"certified": True, "params": bp.to_dict(), **box.to_dict(), "sub_super": checks}
    ver = report["verification"]
    ver["sub_super"] = {"passed": all(c["passed"] for c in checks.values())}
    required.append("sub_super")

    t = time.perf_counter()
    try:
        res = epsilon_continuation(params, cfg.eps_schedule, cfg.regime, opts, box=box,
                                   cauchy_tol=float(cfg.verify.get("cauchy_tol", 1e-4)))
    except (DivergedError, BoxViolationError) as exc:
        report["continuation"] = {"error": str(exc)}
        raise _Stage(EXIT_DIVERGED, str(exc))
    timings["continuation"] = time.perf_counter() - t
    timings["solves"] = [s.report.pop("wall_time", 0.0) for s in res.states]
    report["continuation"] = res.to_dict()
    diffs = res.differences
    ver["cauchy"] = {"passed": res.converged, "differences": diffs,
                     "monotone": all(b <= a for a, b in zip(diffs, diffs[1:]))}
    required.append("cauchy")
    ul, uh, vl, vh = box.bounds()
    ordering = [check_ordering(s.u, box.u_lo, box.u_hi).to_dict() for s in res.states]
    ordering += [check_ordering(s.v, box.v_lo, box.v_hi).to_dict() for s in res.states]
    ver["ordering"] = {"passed": all(o["passed"] for o in ordering),
                       "worst_margin": min(o["margin"] for o in ordering)}
    required.append("ordering")
    k0 = box.constants["k0"]
    cs = [min(fit_positivity_constant(s.u)[0], fit_positivity_constant(s.v)[0]) for s in res.states]
    ver["positivity"] = {"passed": min(cs) >= 0.9 * k0 > 0, "c_min": min(cs), "k0": k0}
    required.append("positivity")
    phi_lam, phi = first_eigenpair(params.q.minimum, mesh, opts)
    u_last = res.limit.u
    value, hs = hardy_sobolev_ratio(u_last, phi, 0.5, params.p if params.p.is_constant else None)
    ver["hardy_sobolev"] = hs.to_dict()
    ver["eigenpair"] = {"p": params.q.minimum, "lambda1": phi_lam}
    if mesh.dim == 1 and mesh.n_nodes <= ORACLE_NODES:
        spec = TruncationSpec.for_params(box, params)
        eps = cfg.eps_schedule[-1]
        try:
            ou, ov, orr = brute_force_coupled(params, spec, eps)
            diff = float(max(np.abs(ou.values - res.limit.u.values).max(),
                             np.abs(ov.values - res.limit.v.values).max()))
            ver["oracle"] = {"passed": diff <= 1e-8, "difference": diff, "oracle_residual": orr}
        except OracleFailure as exc:
            ver["oracle"] = {"passed": False, "error": str(exc)}
        required.append("oracle")
    if out is not None:
        st = res.limit
        _write_fields(out, mesh, {"u_lo": ul, "u": st.u.values, "u_hi": uh,
                                  "v_lo": vl, "v": st.v.values, "v_hi": vh}, "fields")
        if cfg.verify.get("dump_steps"):
            for k, s in enumerate(res.states):
                _write_fields(out, mesh, {"u": s.u.values, "v": s.v.values}, f"fields_step{k:03d}")
        _write_plot(out, mesh, "u", ul, st.u.values, uh)
        _write_plot(out, mesh, "v", vl, st.v.values, vh)


def _run_branch(cfg, params, mesh, opts, report, required, timings, out):
    t = time.perf_counter()
    try:
        rec = lambda_continuation(params, cfg.eps, cfg.lambda_grid, opts)
    except (BranchTruncatedError, DivergedError) as exc:
        report["continuation"] = {"error": str(exc), "last_lambda": getattr(exc, "last_lambda", None)}
        raise _Stage(EXIT_DIVERGED, str(exc))
    timings["continuation"] = time.perf_counter() - t
    report["continuation"] = rec.to_dict()
    ver = report["verification"]
    ver["branch"] = {"passed": rec.complete}
    ver["positivity_along_branch"] = {"passed": min(rec.positivity_margins) >= -1e-9,
                                      "worst_margin": min(rec.positivity_margins)}
    ver["a_priori"] = {"passed": all(math.isfinite(c) for pair in rec.a_priori for c in pair),
                       "max_constant": max(max(c) for c in rec.a_priori)}
    required += ["branch", "positivity_along_branch", "a_priori"]
    u, v = rec.states[-1]
    w1, _ = solve_dirichlet(params.p, ScalarField.constant(mesh, rec.m1), opts)
    lam1, phi = first_eigenpair(params.q.minimum, mesh, opts)
    ver["eigenpair"] = {"p": params.q.minimum, "lambda1": lam1}
    ver["eigenfunction_comparison"] = comparison_constant(w1, phi).to_dict()
    _, hs = hardy_sobolev_ratio(u, w1, 0.5, params.p if params.p.is_constant else None)
    ver["hardy_sobolev"] = hs.to_dict()
    if out is not None:
        zero = np.zeros(mesh.n_nodes)
        _write_fields(out, mesh, {"u": u.values, "v": v.values, "w1": w1.values}, "fields")
        _write_plot(out, mesh, "u", w1.values, u.values, u.values)
        _write_plot(out, mesh, "v", zero, v.values, v.values)


def run(cfg: ScenarioConfig, out_dir=None, seed: int | None = None, tol: float | None = None) -> dict:
    """Run one scenario and write its report; returns the report dict.

    The report records the exit code of the first failing stage; it is
    written atomically whether or not the run succeeded.
    """
    seed = cfg.seed if seed is None else seed
    out = Path(out_dir if out_dir is not None else cfg.output)
    report = {"config": cfg.to_dict(), "seed": seed, "hypotheses": {}, "barrier": None,
              "continuation": None, "verification": {}}
    timings: dict = {}
    required: list = []
    t_all = time.perf_counter()
    code = EXIT_OK
    try:
        mesh = cfg.build_mesh()
        params = cfg.build_params(mesh)
        opts = cfg.solver_options(tol)
        for h in HYPOTHESES:
            report["hypotheses"][h] = validate(params, h).to_dict()
        needed = REGIME_HYPOTHESIS[cfg.regime]
        if not report["hypotheses"][needed]["passed"]:
            raise _Stage(EXIT_HYPOTHESIS, f"hypothesis {needed} fails")
        t = time.perf_counter()
        _verify_common(cfg, params, mesh, seed, report, required)
        timings["verify_common"] = time.perf_counter() - t
        if cfg.regime == "T2":
            _run_branch(cfg, params, mesh, opts, report, required, timings, out)
        else:
            _run_box_regime(cfg, params, mesh, opts, report, required, timings, out)
        failed = [k for k in required if not report["verification"][k]["passed"]]
        report["verification"]["required"] = required
        report["verification"]["failed"] = failed
        if failed:
            code = EXIT_VERIFY
            report["error"] = f"verification failed: {', '.join(failed)}"
    except _Stage as exc:
        code = exc.code
        report["error"] = str(exc)
    except (DivergedError, BoxViolationError) as exc:
        code = EXIT_DIVERGED
        report["error"] = str(exc)
    except PreconditionError as exc:
        code = EXIT_HYPOTHESIS
        report["error"] = str(exc)
    report["exit_code"] = code
    report["passed"] = code == EXIT_OK
    timings["total"] = time.perf_counter() - t_all
    report["timings"] = timings
    text = json.dumps(_clean(report), indent=2, sort_keys=True)
    write_atomic(out / "report.json", text + "\n")
    if (out / "u.dat").exists():
        write_atomic(out / "plot.py", PLOT_SCRIPT)
    return report


def _sweep_one(args):
    cfg, parameter, value, out, seed, tol = args
    if parameter == "resolution":
        cfg = cfg.replace(resolution=[int(value)] * len(cfg.resolution))
    else:
        cfg = cfg.replace(**{parameter: float(value)})
    rep = run(cfg, out, seed, tol)
    return value, rep


def sweep(cfg: ScenarioConfig, parameter: str, values, out_dir=None, seed=None, tol=None, jobs: int = 1):
    """Independent runs over one parameter plus a pass/fail summary CSV."""
    if parameter not in ("gamma", "theta", "resolution"):
        raise ConfigError(f"cannot sweep {parameter!r}", "sweep")
    base = Path(out_dir if out_dir is not None else cfg.output)
    tasks = [(cfg, parameter, v, base / f"{parameter}={v}", seed, tol) for v in values]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    lines = [f"{parameter},passed,exit_code,certified,error"]
    for value, rep in results:
        cert = (rep.get("barrier") or {}).get("certified", "")
        err = str(rep.get("error", "")).replace(",", ";").replace("\n", " ")
        lines.append(f"{value},{rep['passed']},{rep['exit_code']},{cert},{err}")
    write_atomic(base / "summary.csv", "\n".join(lines) + "\n")
    return [rep for _, rep in results]


def run_oracle(cfg: ScenarioConfig, out_dir=None) -> dict:
    """Brute-force comparisons on a mesh small enough for the dense oracle."""
    n = min(cfg.resolution[0], ORACLE_NODES - 1)
    if "interval" not in cfg.domain:
        raise ConfigError("the oracle runs on interval domains only", "domain")
    small = cfg.replace(resolution=[n])
    mesh = small.build_mesh()
    params = small.build_params(mesh)
    opts = small.solver_options()
    out = Path(out_dir if out_dir is not None else cfg.output)
    result = {"config": small.to_dict(), "comparisons": []}
    code = EXIT_OK
    try:
        box, _ = construct_box(params, "i" if cfg.regime == "T2" else cfg.regime, cfg.eps0, opts=opts)
        spec = TruncationSpec.for_params(box, params)
        cases = [("regularized", None, cfg.eps_schedule[-1] if cfg.regime != "T2" else cfg.eps0),
                 ("constant", (ConstantRhs(1.0), ConstantRhs(1.0)), cfg.eps0)]
        for name, rhs, eps in cases:
            if rhs is not None:
                from .barrier import BarrierBox
                wide = np.full(mesh.n_nodes, 10.0)
                zero = np.zeros(mesh.n_nodes)
                fbox = BarrierBox(*(ScalarField(mesh, a) for a in (zero, wide, zero, wide)), cfg.eps0)
                use = TruncationSpec(fbox, spec.l)
            else:
                use = spec
            st = solve_truncated(params, use, eps, opts, rhs=rhs)
            ou, ov, orr = brute_force_coupled(params, use, eps, rhs=rhs)
            diff = float(max(np.abs(ou.values - st.u.values).max(), np.abs(ov.values - st.v.values).max()))
            result["comparisons"].append({"case": name, "difference": diff, "oracle_residual": orr,
                                          "passed": diff <= 1e-8})
        if not all(c["passed"] for c in result["comparisons"]):
            code = EXIT_VERIFY
    except (BarrierConstructionError, CertificationError) as exc:
        result["error"] = str(exc)
        code = EXIT_BARRIER
    except (DivergedError, BoxViolationError) as exc:
        result["error"] = str(exc)
        code = EXIT_DIVERGED
    except OracleFailure as exc:
        result["error"] = str(exc)
        code = EXIT_VERIFY
    result["exit_code"] = code
    write_atomic(out / "oracle.json", json.dumps(_clean(result), indent=2, sort_keys=True) + "\n")
    return result


def _parse_values(text: str):
    return [float(v) if any(c in v for c in ".eE") else int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pxlog", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("validate", "run", "sweep", "oracle"):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", required=True, help="scenario YAML file")
        sp.add_argument("--out", help="output directory (default: the config's output key)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
        sp.add_argument("--tol", type=float, help="override the solver tolerance")
        if verb == "sweep":
            sp.add_argument("--parameter", required=True, choices=["gamma", "theta", "resolution"])
            sp.add_argument("--values", required=True, type=_parse_values,
                            help="comma-separated values, e.g. 1e-3,1e-2,0.1")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except HypothesisConfigError as exc:
        print(f"hypothesis check failed: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(json.dumps(_clean(exc.report.to_dict()), indent=2), file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.verb == "validate":
        mesh = cfg.build_mesh()
        params = cfg.build_params(mesh)
        reports = {h: validate(params, h).to_dict() for h in HYPOTHESES}
        print(json.dumps(_clean(reports), indent=2))
        return EXIT_OK
    if args.verb == "run":
        rep = run(cfg, args.out, args.seed, args.tol)
        print(f"{cfg.name}: exit {rep['exit_code']}" + (f" ({rep['error']})" if "error" in rep else ""))
        return rep["exit_code"]
    if args.verb == "sweep":
        reports = sweep(cfg, args.parameter, args.values, args.out, args.seed, args.tol, args.jobs)
        for v, rep in zip(args.values, reports):
            print(f"{args.parameter}={v}: exit {rep['exit_code']}")
        return EXIT_OK
    res = run_oracle(cfg, args.out)
    for c in res["comparisons"]:
        print(f"{c['case']}: difference {c['difference']:.3e}")
    return res["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
