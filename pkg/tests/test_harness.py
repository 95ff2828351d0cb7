import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gibbslab import __version__
from gibbslab.harness import (
    GAP_HEADER,
    CURVE_HEADER,
    IDENTITY_HEADER,
    TASKS,
    ConfigError,
    ResourceError,
    _fmt,
    cell_rng,
    check_budget,
    csv_text,
    default_config,
    emit,
    load_config,
    parse_config,
    report_json,
    run,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("bad", [
    [],
    {"colour": 1},
    {"tasks": ["juggle"]},
    {"tasks": [{"name": "gap-scan", "speed": 2}]},
    {"tolerances": {"vibes": 1e-3}},
    {"lindblad": {"weight": "cosine"}},
    {"model": {"name": "tfim", "size": 3}},
    {"model": [1, 2]},
])
def test_parse_errors(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_parse_defaults_and_shorthand():
    cfg = parse_config({"tasks": ["gap-scan"], "tolerances": {"routes": "1e-7"}})
    assert cfg.task("gap-scan") == {"name": "gap-scan"}
    assert cfg.task("adiabatic") is None
    assert cfg.tolerances["routes"] == 1e-7 and cfg.tolerances["fixed_point"] == 1e-8
    assert cfg.jobs == 1 and cfg.seed == 0


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    assert cfg.tasks


@pytest.mark.parametrize("task", TASKS)
def test_default_configs(task):
    assert default_config(task).task(task) is not None


def test_default_config_unknown():
    with pytest.raises(ConfigError):
        default_config("nap")


def test_cell_rng_keys():
    a = cell_rng(1, "gap-scan", 0).random(4)
    np.testing.assert_array_equal(a, cell_rng(1, "gap-scan", 0).random(4))
    assert not np.allclose(a, cell_rng(1, "gap-scan", 1).random(4))
    assert not np.allclose(a, cell_rng(1, "adiabatic", 0).random(4))
    assert not np.allclose(a, cell_rng(2, "gap-scan", 0).random(4))


def test_budget_guard_hint():
    check_budget(4, 1, 2 * 1024**3)
    with pytest.raises(ResourceError, match=r"64 GiB.*use n <= 6"):
        check_budget(8, 1, 2 * 1024**3)


def test_run_refuses_large_task_up_front():
    cfg = parse_config({"tasks": [{"name": "identity-suite", "ns": [2]}, {"name": "gap-scan", "ns": [8], "n_max": 9}]})
    with pytest.raises(ResourceError):
        run(cfg)


def test_fmt():
    assert _fmt(0.1) == "0.10000000000000001"
    assert _fmt(np.float64(2.0)) == "2"
    assert _fmt(True) == "true" and _fmt(None) == "" and _fmt(np.int64(3)) == "3"
    assert _fmt(float("nan")) == "nan"
    assert csv_text(("a", "b"), [(1, 0.5)]) == "a,b\n1,0.5\n"


def test_empty_task_list_gives_provenance_only(tmp_path):
    cfg = parse_config({"seed": 3})
    bundle = run(cfg)
    paths = emit(bundle, tmp_path)
    assert [p.name for p in paths] == ["report.json"]
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["schema_version"] == 1 and doc["tasks"] == {}
    assert doc["provenance"]["artifact_version"] == __version__
    assert doc["provenance"]["seed"] == 3
    assert bundle.ok


def test_identity_suite_passes(tmp_path):
    cfg = parse_config({"model": {"name": "tfim"}, "tasks": [{"name": "identity-suite", "ns": [2], "betas": [1.0]}]})
    bundle = run(cfg)
    t = bundle.tasks[0]
    assert t.ok and t.payload["failed"] == []
    assert t.header == IDENTITY_HEADER
    assert all(r[-1] for r in t.rows)
    assert {r[1] for r in t.rows} == {0}


def test_identity_suite_reports_failures():
    cfg = parse_config({"tolerances": {"fixed_point": 1e-300},
                        "tasks": [{"name": "identity-suite", "ns": [2], "betas": [1.0]}]})
    t = run(cfg).tasks[0]
    assert not t.ok
    assert any("fixed point" in f for f in t.payload["failed"])


def test_gap_scan_schema(tmp_path):
    cfg = parse_config({"tasks": [{"name": "gap-scan", "ns": [2], "betas": [1.0]}]})
    bundle = run(cfg)
    emit(bundle, tmp_path)
    lines = (tmp_path / "gap_scan.csv").read_text().splitlines()
    assert lines[0] == ",".join(GAP_HEADER)
    assert lines[0] == "model,seed,n,beta,sigma,weight,lambda_K,lambda_L,alpha,kernel_dim"
    assert len(lines) == 2 and lines[1].startswith("tfim,0,2,1,1,metropolis,")
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["tasks"]["gap-scan"]["csv"] == "gap_scan.csv"


def test_gap_scan_n_max():
    cfg = parse_config({"tasks": [{"name": "gap-scan", "ns": [2, 5], "n_max": 4}]})
    with pytest.raises(ResourceError):
        run(cfg)


def test_curve_schema(tmp_path):
    cfg = parse_config({"tasks": [{"name": "truncation-scan", "n": 4, "models": ["tfim"], "region": [2],
                                   "buffers": [0, 1]}]})
    emit(run(cfg), tmp_path)
    lines = (tmp_path / "truncation_scan.csv").read_text().splitlines()
    assert lines[0] == ",".join(CURVE_HEADER)
    assert lines[0] == "task_model,curve,abscissa,measured,paper_bound,model,beta,seed"
    assert len(lines) == 3


def test_lr_scan_needs_room():
    cfg = parse_config({"tasks": [{"name": "lr-scan", "n": 3, "a_len": 1, "b_lens": [2]}]})
    with pytest.raises(ConfigError):
        run(cfg)


def test_only_selects_task():
    cfg = parse_config({"tasks": [{"name": "identity-suite", "ns": [2], "betas": [1.0]},
                                  {"name": "gap-scan", "ns": [2], "betas": [1.0]}]})
    bundle = run(cfg, only="gap-scan")
    assert [t.name for t in bundle.tasks] == ["gap-scan"]


def _texts(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_byte_identical_reruns(tmp_path):
    cfg = load_config(CONFIGS / "smoke.yaml")
    cfg = replace(cfg, tasks=tuple(t for t in cfg.tasks if t["name"] in ("identity-suite", "clustering-scan")))
    a, b = tmp_path / "a", tmp_path / "b"
    emit(run(cfg), a)
    emit(run(cfg), b)
    assert _texts(a) == _texts(b)


def test_pool_matches_serial(tmp_path):
    cfg = parse_config({"tasks": [{"name": "identity-suite", "ns": [2], "betas": [0.5, 1.0],
                                   "models": ["random"], "seeds": [0, 1]}]})
    a, b = tmp_path / "a", tmp_path / "b"
    emit(run(cfg), a)
    emit(run(replace(cfg, jobs=2)), b)
    assert _texts(a) == _texts(b)


def test_report_json_sorted_and_timestamp_free():
    cfg = parse_config({"tasks": [{"name": "gap-scan", "ns": [2], "betas": [1.0]}]})
    text = report_json(run(cfg))
    doc = json.loads(text)
    assert text == json.dumps(doc, indent=2, sort_keys=True) + "\n"
    assert "time" not in text.lower()
