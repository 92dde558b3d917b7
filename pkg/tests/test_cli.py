"""Tests for configuration parsing, reporting, and the command line."""

import json

import numpy as np
import pytest

from cdstoch.config import (
    ConfigError,
    RunConfig,
    build_driving,
    effective_threads,
    load_config,
    parse_config_text,
)
from cdstoch.cli import main
from cdstoch.experiments import EXPERIMENT_NAMES, run_experiments
from cdstoch.linops import ComplexCovariance, CovarianceOperator
from cdstoch.report import (
    SCHEMA_VERSION,
    jsonable,
    make_report,
    metric_rows,
    render_json,
    strip_timing,
    write_outputs,
)

GOOD_TEXT = """
# comment lines and blanks are skipped
seed = 11
replicas = 300
level = 2
n = 2
grid = 16
window = 0 0.5
experiments = paths
u0.block1.a = 1.0 0.3 0 0
u0.block1.b = 1.2
u0.block2.a = 1.0 0 0.2 0
u0.block2.b = 0.8
u1 = none
tol.exact = 1e-11
"""


def tiny_cfg(**kw):
    base = dict(seed=5, replicas=200, grids=(16,), threads=1)
    base.update(kw)
    return RunConfig(**base)


# ------------------------------------------------------------- config values

def test_defaults_validate():
    cfg = RunConfig()
    assert cfg.seed == 0
    assert cfg.grids == (32,)
    assert cfg.window == (0.0, 1.0)
    assert cfg.format == "json"


def test_rejects_bad_scalar_fields():
    with pytest.raises(ConfigError):
        RunConfig(seed=-1)
    with pytest.raises(ConfigError):
        RunConfig(replicas=0)
    with pytest.raises(ConfigError):
        RunConfig(level=6)
    with pytest.raises(ConfigError):
        RunConfig(n=0)
    with pytest.raises(ConfigError):
        RunConfig(format="yaml")
    with pytest.raises(ConfigError):
        RunConfig(threads=0)


def test_grid_rules():
    with pytest.raises(ConfigError):
        RunConfig(grids=(12,))
    with pytest.raises(ConfigError):
        RunConfig(grids=(4,))
    with pytest.raises(ConfigError, match="doubling"):
        RunConfig(grids=(16, 48))
    cfg = RunConfig(grids=(16, 32, 64))
    assert cfg.grids == (16, 32, 64)


def test_window_must_be_increasing():
    with pytest.raises(ConfigError):
        RunConfig(window=(1.0, 1.0))
    with pytest.raises(ConfigError):
        RunConfig(window=(0.0, float("inf")))


def test_experiment_names_checked():
    with pytest.raises(ConfigError, match="warp"):
        RunConfig(experiments=("warp",))
    cfg = RunConfig(experiments=("sde", "paths"))
    assert cfg.experiments == ("sde", "paths")


def test_drift_length_checked():
    with pytest.raises(ConfigError):
        RunConfig(level=1, n=1, drift=(1.0, 2.0))
    cfg = RunConfig(level=1, n=1, drift=(1.0, 0.0, 0.0, 0.0))
    assert cfg.drift == (1.0, 0.0, 0.0, 0.0)


def test_tolerance_keys_checked():
    with pytest.raises(ConfigError):
        RunConfig(tolerances=(("fuzzy", 1e-6),))
    with pytest.raises(ConfigError):
        RunConfig(tolerances=(("exact", -1e-6),))
    cfg = RunConfig(tolerances=(("exact", 1e-11),))
    assert dict(cfg.tolerances)["exact"] == 1e-11


# ------------------------------------------------------------- config text

def test_parse_good_text():
    cfg = parse_config_text(GOOD_TEXT)
    assert cfg.seed == 11
    assert cfg.level == 2
    assert cfg.n == 2
    assert cfg.grids == (16,)
    assert cfg.window == (0.0, 0.5)
    assert cfg.experiments == ("paths",)
    assert cfg.u1_blocks == ()
    assert len(cfg.u0_blocks) == 2
    u, p = build_driving(cfg)
    assert isinstance(u, CovarianceOperator)
    assert p is None


def test_parse_unknown_key_named():
    with pytest.raises(ConfigError, match="wibble"):
        parse_config_text("wibble = 3\n")


def test_parse_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("seed = 1\nseed = 2\n")


def test_parse_line_without_equals():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("seed = 1\nnonsense\n")


def test_parse_bad_number_names_key():
    with pytest.raises(ConfigError, match="replicas"):
        parse_config_text("replicas = many\n")


def test_parse_asymmetric_block_named():
    text = "u0.block1.a = 1 0 0 0\nu0.block1.b = 1.0 0.4 0.1 0.9\n"
    with pytest.raises(ConfigError, match=r"u0\.block1\.b"):
        parse_config_text(text)


def test_parse_non_spd_block_named():
    text = "u0.block1.a = 1 0 0 0\nu0.block1.b = -2.0\n"
    with pytest.raises(ConfigError, match=r"u0\.block1\.b"):
        parse_config_text(text)


def test_parse_block_needs_both_parts():
    with pytest.raises(ConfigError, match=r"u0\.block1"):
        parse_config_text("u0.block1.a = 1 0 0 0\n")


def test_parse_blocks_must_be_contiguous():
    text = "u0.block1.a = 1 0 0 0\nu0.block1.b = 1\n" \
           "u0.block3.a = 1 0 0 0\nu0.block3.b = 1\n"
    with pytest.raises(ConfigError, match="without gaps"):
        parse_config_text(text)


def test_parse_blocks_must_cover_n():
    text = "n = 2\nu0.block1.a = 1 0 0 0\nu0.block1.b = 1\n"
    with pytest.raises(ConfigError, match="n = 2"):
        parse_config_text(text)


def test_parse_u1_none_conflicts_with_blocks():
    text = "u1 = none\nu1.block1.a = 1 0 0 0\nu1.block1.b = 1\n"
    with pytest.raises(ConfigError, match="u1"):
        parse_config_text(text)


def test_parse_u1_mirrors_u0_by_default():
    cfg = parse_config_text("u0.block1.a = 1 0 0 0\nu0.block1.b = 2.0\n")
    u, _ = build_driving(cfg)
    assert isinstance(u, ComplexCovariance)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="config file"):
        load_config(tmp_path / "absent.cfg")


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(GOOD_TEXT, encoding="utf-8")
    assert load_config(path) == parse_config_text(GOOD_TEXT)


# ------------------------------------------------------------------ threads

def test_effective_threads_flag_wins(monkeypatch):
    monkeypatch.setenv("CD_STOCHASTIC_THREADS", "7")
    assert effective_threads(3) == 3


def test_effective_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("CD_STOCHASTIC_THREADS", "5")
    assert effective_threads(None) == 5


def test_effective_threads_bad_env(monkeypatch):
    monkeypatch.setenv("CD_STOCHASTIC_THREADS", "lots")
    with pytest.raises(ConfigError, match="CD_STOCHASTIC_THREADS"):
        effective_threads(None)


def test_effective_threads_default(monkeypatch):
    monkeypatch.delenv("CD_STOCHASTIC_THREADS", raising=False)
    assert effective_threads(None) >= 1


# ------------------------------------------------------------------ reports

def test_jsonable_converts_numpy_scalars():
    doc = jsonable({"a": np.float64(1.5), "b": np.bool_(True),
                    "c": np.int32(4), "d": np.arange(3)})
    assert doc == {"a": 1.5, "b": True, "c": 4, "d": [0, 1, 2]}
    assert json.loads(json.dumps(doc)) == doc


def test_report_schema_and_rendering():
    cfg = tiny_cfg(experiments=("algebra",))
    doc = make_report(cfg, run_experiments(cfg))
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["seed"] == cfg.seed
    assert doc["config"]["replicas"] == 200
    assert "threads" not in doc["config"]
    entry = doc["experiments"][0]
    assert entry["name"] == "algebra"
    assert entry["passed"] is True
    assert entry["wall_time_s"] >= 0.0
    for check in entry["checks"]:
        assert check["anchor"]
        assert isinstance(check["passed"], bool)
    text = render_json(doc)
    assert json.loads(text) == doc
    assert "wall_time_s" not in render_json(strip_timing(doc))


def test_metric_rows_flatten_lists():
    entry = {"name": "x", "checks": [
        {"name": "c", "anchor": "a", "passed": True,
         "gaps": [1.0, 2.0], "table": [{"dt": 0.5, "error": 0.1}]},
    ]}
    rows = list(metric_rows(entry))
    metrics = {r[2] for r in rows}
    assert ("c", "a", "passed", True) in rows
    assert "gaps[0]" in metrics
    assert "table[0].dt" in metrics


def test_write_outputs_csv(tmp_path):
    cfg = tiny_cfg(experiments=("algebra", "linops"), format="csv")
    doc = make_report(cfg, run_experiments(cfg))
    files = write_outputs(doc, tmp_path, "csv")
    names = {f.name for f in files}
    assert "report.json" in names
    assert "algebra.csv" in names and "linops.csv" in names
    header = (tmp_path / "algebra.csv").read_text().splitlines()[0]
    assert header == "experiment,check,anchor,metric,value"


# ---------------------------------------------------------------- run paths

def test_run_experiments_selection_and_order():
    cfg = tiny_cfg(experiments=("sde", "algebra"))
    names = [e["name"] for e in run_experiments(cfg)]
    assert names == ["algebra", "sde"]
    assert set(EXPERIMENT_NAMES) == {
        "algebra", "linops", "paths", "isometry", "martingale",
        "chebyshev", "sde"}


def test_cli_paths_run_writes_report(tmp_path, capsys):
    rc = main(["paths", "--seed", "4", "--replicas", "200", "--grid", "16",
               "--threads", "1", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "paths: PASS" in out
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["passed"] is True
    assert [e["name"] for e in doc["experiments"]] == ["paths"]


def test_cli_algebra_covers_operator_layer(tmp_path):
    rc = main(["algebra", "--replicas", "150", "--grid", "16",
               "--threads", "1", "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert [e["name"] for e in doc["experiments"]] == ["algebra", "linops"]


def test_cli_failure_exit_code(tmp_path, capsys):
    rc = main(["sde", "--replicas", "200", "--grid", "16",
               "--threads", "1", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 1
    assert "sde: FAIL" in out
    assert "strong_order_window" in out


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("u0.block1.a = 1 0 0 0\nu0.block1.b = 1 2 3 4\n")
    rc = main(["run", "--config", str(bad)])
    err = capsys.readouterr().err
    assert rc == 2
    assert "u0.block1.b" in err


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["paths", "--format", "xml"])
    assert exc.value.code == 2


def test_cli_run_uses_config_experiments(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(GOOD_TEXT, encoding="utf-8")
    rc = main(["run", "--config", str(cfg_file), "--replicas", "200",
               "--threads", "1", "--out", str(tmp_path / "out"),
               "--format", "csv"])
    assert rc == 0
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert [e["name"] for e in doc["experiments"]] == ["paths"]
    assert doc["config"]["replicas"] == 200
    assert (tmp_path / "out" / "paths.csv").exists()


def test_reports_identical_across_thread_counts():
    """Worker count must not leak into report bytes."""
    texts = []
    for threads in (1, 3):
        cfg = tiny_cfg(seed=21, experiments=("paths", "isometry"),
                       threads=threads)
        doc = make_report(cfg, run_experiments(cfg))
        texts.append(render_json(strip_timing(doc)))
    assert texts[0] == texts[1]


def test_reports_differ_across_seeds():
    docs = []
    for seed in (1, 2):
        cfg = tiny_cfg(seed=seed, experiments=("paths",))
        docs.append(render_json(strip_timing(
            make_report(cfg, run_experiments(cfg)))))
    assert docs[0] != docs[1]
