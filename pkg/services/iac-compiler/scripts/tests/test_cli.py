#!/usr/bin/env python3
"""
Tests for the iacc command line: exit codes and printed output
"""

import json

import pytest

from core import config
from core.planner import Plan
from core.simulator import EventTrace, PlanStatus
from iacc import main

from .conftest import KB_DIR, MODELS_DIR, RULES_FILE, SIM_DIR, TEMPLATES_DIR

INPUTS = ["--kb", str(KB_DIR), "--templates", str(TEMPLATES_DIR)]


def _model(name):
    return str(MODELS_DIR / f"{name}.camp")


def test_validate_ok(capsys):
    assert main(["validate", "--model", _model("lamp")]) == config.EXIT_OK
    assert capsys.readouterr().err == ""


def test_validate_reports_diagnostics(capsys):
    code = main(["validate", "--model", _model("kinesis_binding"), "--rules", str(RULES_FILE)])
    assert code == config.EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "Error E_PROVIDER_BINDING clickstream/connectsTo/archive_db:" in err


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.camp"
    bad.write_text("component web { kind = web\n", encoding="utf-8")
    assert main(["validate", "--model", str(bad)]) == config.EXIT_VALIDATION
    assert "bad.camp:" in capsys.readouterr().err


def test_generate_writes_bundle(tmp_path, capsys):
    out = tmp_path / "bundle"
    assert main(["generate", "--model", _model("lamp"), "--out", str(out)] + INPUTS) == config.EXIT_OK
    assert (out / "playbooks" / "mysql_db.yml").is_file()
    assert (out / "playbooks" / "php_frontend.yml").is_file()
    assert (out / "provision" / "ec2_vm.sh").is_file()
    printed = capsys.readouterr().out
    assert f"{out / 'playbooks' / 'mysql_db.yml'} (" in printed


def test_generate_failure_exit_code(tmp_path, capsys):
    model = tmp_path / "no_port.camp"
    model.write_text(
        "component web { kind = web; webengine = apache; language = php; }\n"
        "platform vm { provider = amazon; os = ubuntu 16.04; }\n"
        "web hostedOn vm;\n",
        encoding="utf-8",
    )
    out = tmp_path / "bundle"
    assert main(["generate", "--model", str(model), "--out", str(out)] + INPUTS) == config.EXIT_GENERATION
    assert "port" in capsys.readouterr().err
    assert not out.exists()


def test_generate_migration_bundle(tmp_path):
    out = tmp_path / "bundle"
    args = ["generate", "--model", _model("lamp_db_migration"), "--out", str(out), "--migrate"] + INPUTS
    assert main(args) == config.EXIT_OK
    assert (out / "teardown" / "old_db_vm.sh").is_file()


def test_plan_json(capsys):
    assert main(["plan", "--model", _model("lamp")] + INPUTS) == config.EXIT_OK
    plan = Plan.from_json(capsys.readouterr().out)
    assert plan.kind == "deploy"
    assert len(plan.steps) == 8


def test_plan_dot(capsys):
    assert main(["plan", "--model", _model("lamp_db_migration"), "--migrate", "--dot"] + INPUTS) == config.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("digraph migrate_plan {")
    assert '"Checkpoint(mysql_db)" -> "Restore(mysql_db)";' in out


def test_plan_delta(capsys):
    args = ["plan", "--model", _model("lamp_second_db"), "--delta", _model("lamp")] + INPUTS
    assert main(args) == config.EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "delta"
    assert "Provision(reports_vm)" in [s["id"] for s in doc["steps"]]


def test_simulate_model(capsys):
    assert main(["simulate", "--model", _model("lamp")] + INPUTS) == config.EXIT_OK
    trace = EventTrace.from_text(capsys.readouterr().out)
    assert trace.status == PlanStatus.SUCCEEDED


def test_simulate_failure(capsys):
    args = ["simulate", "--model", _model("lamp"), "--sim-config", str(SIM_DIR / "ssh_timeout_ec2.toml")] + INPUTS
    assert main(args) == config.EXIT_SIM_FAILED
    out = capsys.readouterr().out
    assert out.endswith("\tplan\tFailed\n")


def test_simulate_plan_file(tmp_path, capsys):
    assert main(["plan", "--model", _model("analytics")] + INPUTS) == config.EXIT_OK
    plan_file = tmp_path / "plan.json"
    plan_file.write_text(capsys.readouterr().out, encoding="utf-8")

    assert main(["simulate", "--plan", str(plan_file), "--seed", "3"]) == config.EXIT_OK
    first = capsys.readouterr().out
    assert main(["simulate", "--plan", str(plan_file), "--seed", "3"]) == config.EXIT_OK
    assert capsys.readouterr().out == first


def test_kb_listing(capsys):
    assert main(["kb", "--kb", str(KB_DIR)]) == config.EXIT_OK
    assert "mysql" in capsys.readouterr().out.split()

    assert main(["kb", "--kb", str(KB_DIR), "--app", "java8"]) == config.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("java8: 3 supported OS variant(s)")
    assert "  windows 10: choco:jdk8" in out


def test_config_summary(capsys):
    assert main(["config"]) == config.EXIT_OK
    assert "SSH timeout after" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["deploy"],
    ["validate"],
    ["generate", "--model", "x.camp"],
    ["plan", "--model", "x.camp", "--migrate", "--delta", "y.camp"],
    ["simulate", "--seed", "seven"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == config.EXIT_USAGE
    assert capsys.readouterr().err


def test_missing_inputs_are_usage_errors(tmp_path, capsys):
    assert main(["validate", "--model", str(tmp_path / "absent.camp")]) == config.EXIT_USAGE
    assert main(["plan", "--model", _model("lamp"), "--kb", str(tmp_path), "--templates", str(TEMPLATES_DIR)]) \
        == config.EXIT_GENERATION
    assert main(["simulate"]) == config.EXIT_USAGE
    bad_sim = tmp_path / "bad.toml"
    bad_sim.write_text("jitter = 1\n", encoding="utf-8")
    assert main(["simulate", "--model", _model("lamp"), "--sim-config", str(bad_sim)] + INPUTS) == config.EXIT_USAGE
    assert "not found" in capsys.readouterr().err
