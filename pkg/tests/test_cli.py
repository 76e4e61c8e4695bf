"""
命令行测试
"""
import json

import pytest
from click.testing import CliRunner

from crowdchain_sim.cli import cli


@pytest.fixture
def runner():
    return CliRunner()


def test_list(runner):
    result = runner.invoke(cli, ["list"])
    assert result.exit_code == 0
    assert "majority_n3_honest" in result.output
    assert "bundled" in result.output


def test_run_builtin(runner):
    result = runner.invoke(cli, ["run", "majority_n3_honest"])
    assert result.exit_code == 0
    assert "PASS  majority_n3_honest" in result.output


def test_run_writes_reports(runner, tmp_path):
    trace_path = tmp_path / "trace.tsv"
    json_path = tmp_path / "report.json"
    result = runner.invoke(
        cli,
        ["run", "auction_lowest2", "--seed", "9", "--trace", str(trace_path), "--json-report", str(json_path)],
    )
    assert result.exit_code == 0
    report = json.loads(json_path.read_text(encoding="utf-8"))
    assert report["seed"] == 9
    assert trace_path.read_text(encoding="utf-8").startswith("#")


def test_relative_outputs_land_in_output_dir(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("CROWDCHAIN_OUTPUT_DIR", str(tmp_path))
    result = runner.invoke(cli, ["run", "majority_n3_honest", "--trace", "runs/trace.tsv"])
    assert result.exit_code == 0
    assert (tmp_path / "runs" / "trace.tsv").exists()


def test_run_text_report(runner):
    result = runner.invoke(cli, ["run", "withhold_instruction", "--text-report"])
    assert result.exit_code == 0
    assert "withhold_instruction" in result.output
    assert "timeout" in result.output


def test_run_missing_scenario(runner):
    result = runner.invoke(cli, ["run", "nope"])
    assert result.exit_code == 2
    assert "错误" in result.output


def test_run_failing_assertions(runner, tmp_path):
    path = tmp_path / "wrong.yaml"
    path.write_text(
        "scenario: {name: wrong}\n"
        "task: {n: 1, tau: 10, t_a: 3, t_i: 3}\n"
        "workers: [{name: w1, answer: A}]\n"
        "expect: {payouts: {w1: 99}}\n",
        encoding="utf-8",
    )
    result = runner.invoke(cli, ["run", str(path)])
    assert result.exit_code == 1
    assert "payout.w1" in result.output


def test_validate(runner, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: {name: bad}\ntask: {n: 0, tau: 1, t_a: 1, t_i: 1}\n", encoding="utf-8")
    result = runner.invoke(cli, ["validate", str(bad)])
    assert result.exit_code == 2
    assert "task.n" in result.output


def test_validate_normalize(runner, tmp_path):
    out = tmp_path / "normalized.yaml"
    result = runner.invoke(cli, ["validate", "sybil_flood", "--normalize", str(out)])
    assert result.exit_code == 0
    assert "OK  sybil_flood" in result.output
    assert "mempool_policy: fifo" in out.read_text(encoding="utf-8")

    again = runner.invoke(cli, ["validate", "sybil_flood", "--normalize", str(out)])
    assert again.exit_code == 2
    forced = runner.invoke(cli, ["validate", "sybil_flood", "--normalize", str(out), "--force"])
    assert forced.exit_code == 0


def test_game(runner):
    result = runner.invoke(cli, ["game", "linkability", "--trials", "20"])
    assert result.exit_code == 0
    assert "PASS  linkability rate=0.0000 (0/20)" in result.output


def test_suite_parallel(runner):
    result = runner.invoke(cli, ["suite", "--jobs", "2"])
    assert result.exit_code == 0
    assert "FAIL" not in result.output
    assert "个场景通过" in result.output.splitlines()[-1]
