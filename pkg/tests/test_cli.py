import json
from pathlib import Path

import pytest

from pxlog.cli import main, run, sweep, write_atomic
from pxlog.config import HypothesisConfigError, parse_config, parse_config_text
from pxlog.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
domain:
  interval: [0, 1]
mesh:
  n: 16
exponents: {p: 3, q: 3, alpha: 0.5, beta: 0.5}
gamma: 1
theta: 1
regime: i
"""

# halving down to 2^-12, where successive differences drop below 1e-4
RUNNABLE = MINIMAL + "eps_schedule: [" + ", ".join(repr(2.0 ** -k) for k in range(1, 13)) + "]\n"


def strip(report):
    return {k: v for k, v in report.items() if k != "timings"}


def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.resolution == [16]
    assert cfg.eps0 == 0.5 and cfg.eps_schedule[0] == 0.5 and cfg.seed == 0
    assert cfg.lambda_grid[-1] == 1.0


def test_unknown_key_is_named():
    text = MINIMAL.replace("alpha: 0.5", "alpah: 0.5")
    with pytest.raises(ConfigError, match="alpah") as info:
        parse_config_text(text)
    assert "exponents.alpah" in str(info.value)


def test_unknown_top_level_key_has_line():
    with pytest.raises(ConfigError, match=r"line 10"):
        parse_config_text(MINIMAL + "colour: red\n")


def test_hypothesis_mismatch():
    text = MINIMAL.replace("regime: i", "regime: ii")
    with pytest.raises(HypothesisConfigError, match="hip-superlinear"):
        parse_config_text(text)


@pytest.mark.parametrize("old, new", [("n: 16", "n: 1"), ("gamma: 1", "gamma: -1"), ("regime: i", "regime: iv")])
def test_schema_violations(old, new):
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL.replace(old, new))


def test_affine_exponent_and_rectangle():
    text = MINIMAL.replace("interval: [0, 1]", "rectangle: [[0, 1], [0, 2]]").replace("p: 3,", "p: [2.8, 0.2, 0.1],")
    cfg = parse_config_text(text)
    mesh = cfg.build_mesh()
    assert mesh.dim == 2
    assert cfg.build_params(mesh).p.maximum == pytest.approx(2.8 + 0.2 + 0.2)


def test_shipped_configs_parse():
    for name in ("regime_i.yaml", "regime_ii.yaml", "t2.yaml"):
        parse_config(CONFIGS / name)


def test_run_regime_i_demo(tmp_path):
    assert main(["run", "--config", str(CONFIGS / "regime_i.yaml"), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] and rep["verification"]["failed"] == []
    assert {"config", "hypotheses", "barrier", "continuation", "verification", "timings"} <= set(rep)
    assert rep["continuation"]["unregularized_residual"]["weak"] >= 0
    for name in ("fields.csv", "u.dat", "v.dat", "plot.py"):
        assert (tmp_path / name).exists()
    rows = [line.split() for line in (tmp_path / "u.dat").read_text().splitlines()[1:]]
    assert all(len(r) == 5 for r in rows)
    assert all(float(r[2]) <= float(r[3]) + 1e-8 <= float(r[4]) + 2e-8 for r in rows)
    assert not list(tmp_path.glob("*.tmp"))


def test_run_t2_demo(tmp_path):
    rep = run(parse_config(CONFIGS / "t2.yaml"), tmp_path)
    assert rep["exit_code"] == 0
    assert rep["continuation"]["complete"] and rep["continuation"]["lambdas"][-1] == 1.0


def test_tiny_mesh_enables_oracle(tmp_path):
    cfg = parse_config_text(RUNNABLE.replace("n: 16", "n: 2"))
    rep = run(cfg, tmp_path)
    assert "oracle" in rep["verification"]
    assert rep["verification"]["oracle"]["passed"]


def test_barrier_failure_exit_code(tmp_path):
    text = MINIMAL.replace("regime: i", "regime: ii").replace("alpha: 0.5, beta: 0.5", "alpha: 2.5, beta: 2.5")
    rep = run(parse_config_text(text.replace("gamma: 1", "gamma: 1000")), tmp_path)
    assert rep["exit_code"] == 3
    assert rep["barrier"]["certified"] is False
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["exit_code"] == 3 and "error" in saved


def test_single_value_sweep_matches_run(tmp_path):
    cfg = parse_config_text(RUNNABLE)
    (swept,) = sweep(cfg, "gamma", [1.0], tmp_path / "sweep")
    direct = run(cfg, tmp_path / "run")
    assert json.dumps(strip(swept), sort_keys=True) == json.dumps(strip(direct), sort_keys=True)
    assert (tmp_path / "sweep" / "summary.csv").read_text().splitlines()[1].startswith("1.0,True,0")


def test_resolution_sweep_torsion_errors_decrease(tmp_path):
    reps = sweep(parse_config_text(RUNNABLE), "resolution", [16, 32, 64], tmp_path)
    errs = [r["verification"]["torsion_p2"]["errors"][0] for r in reps]
    assert errs[0] > errs[1] > errs[2]


def test_gamma_sweep_cli(tmp_path):
    code = main(["sweep", "--config", str(CONFIGS / "regime_ii.yaml"), "--out", str(tmp_path),
                 "--parameter", "gamma", "--values", "1e-3,1e-2,1,10", "--jobs", "2"])
    assert code == 0
    lines = (tmp_path / "summary.csv").read_text().splitlines()[1:]
    certified = [line.split(",")[3] == "True" for line in lines]
    assert certified == [True, True, False, False]


def test_validate_verb_exit_codes(tmp_path, capsys):
    assert main(["validate", "--config", str(CONFIGS / "t2.yaml")]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL.replace("regime: i", "regime: ii"))
    assert main(["validate", "--config", str(bad)]) == 2
    bad.write_text(MINIMAL + "extra: 1\n")
    assert main(["run", "--config", str(bad)]) == 1


def test_oracle_verb(tmp_path):
    cfg = tmp_path / "tiny.yaml"
    cfg.write_text(MINIMAL.replace("n: 16", "n: 4"))
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "oracle.json").read_text())
    assert all(c["difference"] <= 1e-8 for c in res["comparisons"])


def test_seed_and_tol_overrides(tmp_path):
    cfg = parse_config_text(RUNNABLE)
    rep = run(cfg, tmp_path, seed=5, tol=1e-11)
    assert rep["seed"] == 5 and rep["exit_code"] == 0


def test_atomic_write_leaves_old_file_on_error(tmp_path):
    target = tmp_path / "report.json"
    write_atomic(target, "old\n")

    with pytest.raises(TypeError):
        write_atomic(target, 123)
    assert target.read_text() == "old\n"
    assert not list(tmp_path.glob("*.tmp"))
