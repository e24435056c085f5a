import json
import math
from pathlib import Path

import numpy as np
import pytest

from fracobstacle import ProblemSpec, check_kkt
from fracobstacle.cli import _fmt_float, dumps, main
from fracobstacle.config import ConfigError, parse_config_text

DATA_DIR = Path(__file__).parent / "data"

BASE_CONFIG = """
# bump obstacle on (0, 1)
domain.a = 0.0
domain.b = 1.0
grid.n = 8
operator.s = 0.5
obstacle.preset = bump
obstacle.c = 0.5
obstacle.d = 4.0
obstacle.m = 0.5
forcing.preset = zero
solver.method = activeset
seed = 42
"""


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def load_record(path):
    with open(path) as fh:
        return json.load(fh)


def strip_timing(record):
    record = dict(record)
    record.pop("timing_seconds", None)
    return record


# --- config parsing ----------------------------------------------------------------

def test_parse_minimal_config():
    cfg = parse_config_text(BASE_CONFIG)
    assert cfg.n == 8 and cfg.s == 0.5
    assert cfg.obstacle_preset == "bump"
    psi = cfg.obstacle_vector()
    x = cfg.grid().nodes()
    np.testing.assert_allclose(psi, 0.5 - 4.0 * (x - 0.5) ** 2)


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text(BASE_CONFIG + "\nsolver.omega = 1.3\n")


def test_parse_rejects_stray_preset_parameter():
    text = BASE_CONFIG.replace("obstacle.preset = bump", "obstacle.preset = negative")
    # bump parameters d and m no longer belong to the schema
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text(text)


def test_parse_rejects_penalty_keys_without_penalty_route():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text(BASE_CONFIG + "\npenalty.epsilon = 0.1\n")


def test_parse_missing_required_key():
    text = "\n".join(line for line in BASE_CONFIG.splitlines()
                     if not line.startswith("operator.s"))
    with pytest.raises(ConfigError, match="operator.s"):
        parse_config_text(text)


def test_parse_rejects_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text(BASE_CONFIG + "\ngrid.n = 9\n")


def test_parse_rejects_bad_types_and_ranges():
    with pytest.raises(ConfigError):
        parse_config_text(BASE_CONFIG.replace("grid.n = 8", "grid.n = eight"))
    with pytest.raises(ConfigError):
        parse_config_text(BASE_CONFIG.replace("operator.s = 0.5", "operator.s = 1.5"))
    with pytest.raises(ConfigError):
        parse_config_text(BASE_CONFIG.replace("domain.b = 1.0", "domain.b = -1.0"))
    with pytest.raises(ConfigError):
        parse_config_text(BASE_CONFIG.replace("solver.method = activeset",
                                              "solver.method = newton"))


def test_parse_custom_obstacle_length_checked():
    text = BASE_CONFIG.replace("obstacle.preset = bump", "obstacle.preset = custom")
    text = "\n".join(line for line in text.splitlines()
                     if not line.startswith(("obstacle.c", "obstacle.d", "obstacle.m")))
    cfg = parse_config_text(text + "\nobstacle.values = 1, 2, 3\n")
    with pytest.raises(ConfigError, match="entries"):
        cfg.obstacle_vector()


def test_parse_sweep_validation():
    with pytest.raises(ConfigError, match="monotone"):
        parse_config_text(BASE_CONFIG + "\nsweep.axis = s\nsweep.values = 0.3, 0.6, 0.5\n")
    with pytest.raises(ConfigError, match="sweep.values"):
        parse_config_text(BASE_CONFIG + "\nsweep.axis = s\n")
    with pytest.raises(ConfigError, match="sweep.axis"):
        parse_config_text(BASE_CONFIG + "\nsweep.values = 0.3, 0.5\n")


# --- JSON emitter ------------------------------------------------------------------

def test_float_format_round_trips():
    rng = np.random.default_rng(0)
    for x in list(rng.normal(size=50)) + [0.1, 1e-300, 2.0**-52, math.pi]:
        assert float(_fmt_float(float(x))) == float(x)


def test_float_format_keeps_float_typing():
    assert _fmt_float(2.0) == "2.0"
    assert json.loads(dumps({"v": 2.0}))["v"] == 2.0


def test_dumps_rejects_non_finite():
    with pytest.raises(ValueError):
        dumps({"v": float("nan")})


def test_dumps_matches_json_semantics():
    obj = {"a": [1, 2.5, None, True, "x"], "b": {"c": -0.125}}
    assert json.loads(dumps(obj)) == obj


# --- solve -------------------------------------------------------------------------

def test_solve_writes_record_and_csv(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG)
    out = str(tmp_path / "out.json")
    csv = str(tmp_path / "out.csv")
    assert main(["solve", "--config", cfg, "--out", out, "--csv", csv]) == 0
    record = load_record(out)
    assert record["schema_version"] == 1
    for key in ("config", "grid", "s", "solver_id", "converged", "iterations",
                "x", "psi", "f", "u", "residual", "active_set", "energy",
                "reports", "timing_seconds"):
        assert key in record
    assert record["converged"] is True
    lines = Path(csv).read_text().strip().splitlines()
    assert lines[0] == "x,psi,f,u,r,active"
    assert len(lines) == 1 + record["grid"]["n"]
    active_column = [int(line.split(",")[5]) for line in lines[1:]]
    assert set(active_column) <= {0, 1}


def test_solve_record_passes_kkt_on_reload(tmp_path):
    cfg_path = write_config(tmp_path, BASE_CONFIG.replace("grid.n = 8", "grid.n = 64"))
    out = str(tmp_path / "out.json")
    assert main(["solve", "--config", cfg_path, "--out", out]) == 0
    record = load_record(out)
    cfg = parse_config_text(Path(cfg_path).read_text())
    spec = cfg.build_problem()
    assert check_kkt(spec, np.array(record["u"]), tol=1e-8).passed


def test_solve_negative_obstacle_gives_zero_solution(tmp_path):
    text = BASE_CONFIG.replace("obstacle.preset = bump", "obstacle.preset = negative")
    text = "\n".join(line for line in text.splitlines()
                     if not line.startswith(("obstacle.d", "obstacle.m")))
    cfg = write_config(tmp_path, text)
    out = str(tmp_path / "out.json")
    assert main(["solve", "--config", cfg, "--out", out]) == 0
    record = load_record(out)
    assert max(abs(v) for v in record["u"]) == 0.0
    assert record["active_set"] == []


def test_solve_plateau_covering_domain_fully_active(tmp_path):
    text = BASE_CONFIG.replace("obstacle.preset = bump", "obstacle.preset = plateau")
    text = "\n".join(line for line in text.splitlines()
                     if not line.startswith(("obstacle.d", "obstacle.m")))
    text += "\nobstacle.l = -1.0\nobstacle.r = 2.0\n"
    cfg = write_config(tmp_path, text)
    out = str(tmp_path / "out.json")
    assert main(["solve", "--config", cfg, "--out", out]) == 0
    record = load_record(out)
    assert record["active_set"] == list(range(8))


def test_solve_byte_identical_reruns(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG)
    out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    assert main(["solve", "--config", cfg, "--out", out1]) == 0
    assert main(["solve", "--config", cfg, "--out", out2]) == 0
    r1 = strip_timing(load_record(out1))
    r2 = strip_timing(load_record(out2))
    assert dumps(r1) == dumps(r2)


def test_solve_penalty_route(tmp_path):
    text = BASE_CONFIG.replace("solver.method = activeset", "solver.method = penalty")
    text += "\npenalty.epsilon = 1e-2\n"
    cfg = write_config(tmp_path, text)
    out = str(tmp_path / "out.json")
    assert main(["solve", "--config", cfg, "--out", out]) == 0
    record = load_record(out)
    assert record["penalty"] is not None
    assert record["penalty"]["epsilon"] == 1e-2
    assert 0.0 <= record["penalty"]["max_gap"] <= 1e-2 + 1e-7


def test_solver_override_flag(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG)
    out = str(tmp_path / "out.json")
    assert main(["solve", "--config", cfg, "--out", out, "--solver", "psor"]) == 0
    record = load_record(out)
    assert record["solver_id"] == "psor"
    assert record["config"]["solver.method"] == "psor"


# --- exit codes ----------------------------------------------------------------------

def test_exit_2_on_missing_config(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "absent.cfg")]) == 2


def test_exit_2_on_unknown_key(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG + "\nbogus.key = 1\n")
    assert main(["solve", "--config", cfg]) == 2


def test_exit_3_on_iteration_limit(tmp_path):
    text = BASE_CONFIG.replace("solver.method = activeset", "solver.method = pg")
    text += "\nsolver.max_iter = 2\nsolver.tol = 1e-14\n"
    cfg = write_config(tmp_path, text)
    out = str(tmp_path / "out.json")
    assert main(["solve", "--config", cfg, "--out", out]) == 3
    record = load_record(out)
    assert record["converged"] is False
    assert "error" in record


def test_exit_4_on_injected_corruption(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG)
    assert main(["verify", "--config", cfg, "--inject-corruption"]) == 4


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["solve"])  # missing --config
    assert exc.value.code == 2


# --- verify ----------------------------------------------------------------------------

def test_verify_passes_and_includes_oracle_agreement(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE_CONFIG)
    out = str(tmp_path / "verify.json")
    assert main(["verify", "--config", cfg, "--out", out]) == 0
    record = load_record(out)
    ids = [r["check_id"] for r in record["reports"]]
    assert ids == ["kkt", "lewy_stampacchia", "minty", "smallest_supersolution",
                   "bounds_cinfty", "truncation_identities", "comparison_in_f",
                   "linfty_dependence", "oracle_agreement"]
    assert all(r["passed"] for r in record["reports"])
    assert "all checks passed" in capsys.readouterr().out


def test_verify_large_instance_skips_oracle(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG.replace("grid.n = 8", "grid.n = 24"))
    out = str(tmp_path / "verify.json")
    assert main(["verify", "--config", cfg, "--out", out]) == 0
    ids = [r["check_id"] for r in load_record(out)["reports"]]
    assert "oracle_agreement" not in ids


def test_verify_deterministic_given_seed(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG)
    out1, out2 = str(tmp_path / "v1.json"), str(tmp_path / "v2.json")
    assert main(["verify", "--config", cfg, "--out", out1, "--seed", "7"]) == 0
    assert main(["verify", "--config", cfg, "--out", out2, "--seed", "7"]) == 0
    assert dumps(strip_timing(load_record(out1))) == dumps(strip_timing(load_record(out2)))


# --- sweep -----------------------------------------------------------------------------

def test_sweep_epsilon_gap_column(tmp_path):
    text = BASE_CONFIG + "\nsweep.axis = epsilon\nsweep.values = 1e-1, 1e-2, 1e-3\n"
    text += "penalty.epsilon = 1e-1\n"
    cfg = write_config(tmp_path, text)
    csv = str(tmp_path / "sweep.csv")
    assert main(["sweep", "--config", cfg, "--csv", csv]) == 0
    lines = Path(csv).read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header == ["axis", "value", "solver", "converged", "iterations",
                      "energy", "kkt_violation", "max_penalty_gap", "status"]
    gap_idx = header.index("max_penalty_gap")
    for line, eps in zip(lines[1:], (1e-1, 1e-2, 1e-3)):
        cells = line.split(",")
        assert cells[-1] == "ok"
        assert float(cells[gap_idx]) <= eps + 1e-7


def test_sweep_s_axis_all_rows_pass_kkt(tmp_path):
    text = BASE_CONFIG + "\nsweep.axis = s\nsweep.values = 0.25, 0.5, 0.75\n"
    cfg = write_config(tmp_path, text)
    csv = str(tmp_path / "sweep.csv")
    assert main(["sweep", "--config", cfg, "--csv", csv]) == 0
    lines = Path(csv).read_text().strip().splitlines()
    kkt_idx = lines[0].split(",").index("kkt_violation")
    assert len(lines) == 4
    for line in lines[1:]:
        assert float(line.split(",")[kkt_idx]) <= 1e-8


def test_sweep_n_axis(tmp_path):
    text = BASE_CONFIG + "\nsweep.axis = n\nsweep.values = 8, 16, 24\n"
    cfg = write_config(tmp_path, text)
    csv = str(tmp_path / "sweep.csv")
    assert main(["sweep", "--config", cfg, "--csv", csv]) == 0
    lines = Path(csv).read_text().strip().splitlines()
    assert len(lines) == 4
    header = lines[0].split(",")
    gap_idx = header.index("max_penalty_gap")
    for line in lines[1:]:
        cells = line.split(",")
        assert cells[-1] == "ok"
        assert cells[gap_idx] == ""  # not applicable off the epsilon axis


def test_sweep_without_axis_is_config_error(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG)
    assert main(["sweep", "--config", cfg, "--csv", str(tmp_path / "s.csv")]) == 2


def test_sweep_requires_csv_path(tmp_path):
    text = BASE_CONFIG + "\nsweep.axis = s\nsweep.values = 0.3, 0.5\n"
    cfg = write_config(tmp_path, text)
    assert main(["sweep", "--config", cfg]) == 2


# --- oracle-check ------------------------------------------------------------------------

def test_oracle_check_agreement(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE_CONFIG)
    assert main(["oracle-check", "--config", cfg]) == 0
    assert "agree" in capsys.readouterr().out


def test_oracle_check_rejects_large_n(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG.replace("grid.n = 8", "grid.n = 20"))
    assert main(["oracle-check", "--config", cfg]) == 2


def test_oracle_check_record_carries_deviations(tmp_path):
    cfg = write_config(tmp_path, BASE_CONFIG)
    out = str(tmp_path / "oc.json")
    assert main(["oracle-check", "--config", cfg, "--out", out]) == 0
    record = load_record(out)
    assert set(record["oracle_deviations"]) == {"psor", "pg", "activeset"}
    assert all(v <= record["oracle_agree_tol"]
               for v in record["oracle_deviations"].values())


def test_solve_with_sine_forcing(tmp_path):
    text = BASE_CONFIG.replace("forcing.preset = zero", "forcing.preset = sine")
    text += "\nforcing.amplitude = 0.8\nforcing.frequency = 2\n"
    cfg = write_config(tmp_path, text)
    out = str(tmp_path / "out.json")
    assert main(["solve", "--config", cfg, "--out", out]) == 0
    record = load_record(out)
    x = np.array(record["x"])
    np.testing.assert_allclose(record["f"], 0.8 * np.sin(np.pi * 2 * x), atol=1e-15)


# --- golden file ---------------------------------------------------------------------------

def test_golden_record(tmp_path):
    golden_path = DATA_DIR / "golden_solve.json"
    cfg = write_config(tmp_path, (DATA_DIR / "golden_solve.cfg").read_text())
    out = str(tmp_path / "out.json")
    assert main(["solve", "--config", cfg, "--out", out]) == 0
    produced = strip_timing(load_record(out))
    golden = strip_timing(json.loads(golden_path.read_text()))
    assert dumps(produced) == dumps(golden)
