import json
from pathlib import Path

import pandas as pd
import pytest

from fibergof import cli

EXAMPLES = Path(__file__).resolve().parents[1] / "data" / "examples"


@pytest.fixture
def triangle(tmp_path):
    p = tmp_path / "tri.edges"
    p.write_text("a b\nb c\nc a\nb a\nc d\nd a\n")
    return str(p)


def test_parse_args_test_command(triangle):
    run = cli.parse_args(["test", "--model", "p1-constant", "--input", triangle, "--directed",
                          "--steps", "2000", "--burn-in", "200", "--seed", "7"])
    assert run.command == "test"
    assert run.seed == 7
    assert run.seed_source == "flag"
    assert run.stat == "chi2"
    cfg = run.chain_config()
    assert (cfg.steps, cfg.burn_in, cfg.thin) == (2000, 200, 10)


def test_seed_from_environment(triangle, monkeypatch):
    monkeypatch.setenv("FIBERGOF_SEED", "123")
    run = cli.parse_args(["fit", "--model", "p1-zero", "--input", triangle, "--directed"])
    assert (run.seed, run.seed_source) == (123, "env")


@pytest.mark.parametrize("argv", [
    ["test", "--model", "sbm-restricted", "--input", "x.edges", "--directed"],
    ["fit", "--model", "p1-zero", "--input", "x.edges"],
    ["fit", "--model", "beta", "--input", "x.edges", "--directed"],
    ["fiber", "--model", "independence"],
    ["fiber", "--model", "independence", "--margins", "1,1/1,1", "--input", "t.csv"],
    ["test", "--model", "independence", "--margins", "1,1/1,1", "--steps", "10", "--burn-in", "10"],
    ["fit", "--model", "p1-zero", "--input", "x.edges", "--directed", "--trials", "2"],
    ["fiber", "--model", "independence", "--margins", "1,1/1"],
    ["fit", "--model", "ergm", "--input", "x.edges"],
])
def test_usage_errors_exit_64(argv, capsys):
    assert cli.main(argv) == 64


def test_fiber_from_margins(capsys, tmp_path):
    out = tmp_path / "fiber.json"
    assert cli.main(["fiber", "--model", "independence", "--margins", "1,1,1/1,1,1", "--out", str(out)]) == 0
    assert "fiber size: 6" in capsys.readouterr().out
    assert json.loads(out.read_text())["fiber_size"] == 6


def test_fiber_connectivity_and_exact_pvalue(capsys, tmp_path):
    out = tmp_path / "fiber.json"
    code = cli.main(["fiber", "--model", "independence", "--margins", "1,1,1/1,1,1",
                     "--move-set", "incomplete-3x3", "--stat", "chi2", "--out", str(out)])
    assert code == 0
    summary = json.loads(out.read_text())
    assert summary["components"] == 3
    assert 0 < summary["exact_p_value"] <= 1
    assert "unreachable" in capsys.readouterr().out


def test_fiber_truncated_exits_1(capsys):
    code = cli.main(["fiber", "--model", "independence", "--margins", "3,3,3/3,3,3", "--cap", "5"])
    assert code == 1
    assert "(truncated)" in capsys.readouterr().out


def test_fit_writes_report_and_csv(triangle, tmp_path, capsys):
    out, csv = tmp_path / "fit.json", tmp_path / "fit.csv"
    code = cli.main(["fit", "--model", "p1-zero", "--input", triangle, "--directed", "--seed", "1",
                     "--out", str(out), "--csv", str(csv)])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["model"]["name"] == "p1-zero"
    assert set(report["fit"]) >= {"converged", "iterations", "max_margin_gap"}
    df = pd.read_csv(csv)
    assert df.columns.tolist() == ["cell", "label", "observed", "fitted"]
    assert len(df) == 4 * 6
    assert "Seed: 1 (flag)" in capsys.readouterr().out


def test_fit_strict_nonconverged_exits_2(triangle):
    code = cli.main(["fit", "--model", "p1-constant", "--input", triangle, "--directed", "--max-iter", "1",
                     "--strict"])
    assert code == 2


def test_test_command_writes_outputs(tmp_path, capsys):
    table = tmp_path / "t.csv"
    table.write_text("3,1\n1,3\n")
    csv, xlsx = tmp_path / "stream.csv", tmp_path / "r.xlsx"
    code = cli.main(["test", "--model", "independence", "--input", str(table), "--steps", "3000",
                     "--burn-in", "500", "--thin", "5", "--seed", "4", "--out-dir", str(tmp_path),
                     "--csv", str(csv), "--xlsx", str(xlsx)])
    assert code == 0
    reports = list(tmp_path.glob("*_test_independence_s4.json"))
    assert len(reports) == 1
    report = json.loads(reports[0].read_text())
    assert report["seed"] == 4
    assert 0 < report["p_value"] <= 1
    assert len(pd.read_csv(csv)) == 500
    assert xlsx.exists()
    assert "p-value" in capsys.readouterr().out


def test_test_command_on_example_graph(tmp_path):
    out = tmp_path / "sampson.json"
    code = cli.main(["test", "--model", "sbm-full", "--input", str(EXAMPLES / "sampson18.edges"), "--directed",
                     "--blocks", str(EXAMPLES / "sampson18.blocks"), "--steps", "2000", "--burn-in", "200",
                     "--seed", "18", "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["model"]["name"] == "sbm-full"
    assert len(report["labels"]) == 18


def test_moves_export_and_reuse(tmp_path, capsys):
    moves = tmp_path / "moves.json"
    assert cli.main(["moves", "--model", "independence", "--d1", "3", "--d2", "3", "--move-set", "basic",
                     "--moves-out", str(moves)]) == 0
    assert len(json.loads(moves.read_text())) == 9
    code = cli.main(["fiber", "--model", "independence", "--margins", "1,1,1/1,1,1", "--moves-in", str(moves)])
    assert code == 0
    assert "components: 1" in capsys.readouterr().out


def test_simulate_writes_replicates(tmp_path):
    table = tmp_path / "t.csv"
    table.write_text("2,1\n1,4\n")
    out = tmp_path / "reps.csv"
    code = cli.main(["simulate", "--model", "independence", "--input", str(table), "--count", "3",
                     "--seed", "9", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out)
    assert df["replicate"].tolist() == [1, 2, 3]
    assert (df.drop(columns="replicate").sum(axis=1) == 8).all()


def test_simulate_nonconverged_exits_2(triangle, tmp_path):
    code = cli.main(["simulate", "--model", "p1-constant", "--input", triangle, "--directed", "--max-iter", "1",
                     "--out", str(tmp_path / "r.csv")])
    assert code == 2


def test_missing_input_exits_66(tmp_path, capsys):
    code = cli.main(["fit", "--model", "p1-zero", "--input", str(tmp_path / "nope.edges"), "--directed"])
    assert code == 66
    assert "error:" in capsys.readouterr().err
