"""Tests for the command-line interface."""

import json

import pytest

from l2a.cli import main

TINY_WORLD = dict(
    n_classes=4,
    samples_per_class=8,
    frames=6,
    height=10,
    width=10,
    classes_per_family=2,
    embed_dim=6,
)

TINY_RUN = dict(
    seed=0,
    world=TINY_WORLD,
    optimizer=dict(epochs=8, batch_size=8),
    selector=dict(episodes=4, pair_batch=6, hidden=[16], warm_epochs=2, budget=3),
    features=dict(frames=6, grid=4),
    fewshot=dict(way=3, shot=2, query=2, augments=1, episodes=5),
)


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(TINY_RUN))
    return path


class TestGen:
    def test_writes_world(self, tmp_path, capsys):
        spec = tmp_path / "world.json"
        spec.write_text(json.dumps(TINY_WORLD))
        out = tmp_path / "data"
        assert main(["gen", "--spec", str(spec), "--out", str(out)]) == 0
        assert (out / "manifest.json").exists()
        assert "32 clips" in capsys.readouterr().out

    def test_bad_spec_key_fails(self, tmp_path, capsys):
        spec = tmp_path / "world.json"
        spec.write_text(json.dumps({"not_a_field": 1}))
        assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 1
        assert "error:" in capsys.readouterr().err


class TestRun:
    def test_full_run_writes_artifacts(self, run_config, tmp_path, capsys):
        out = tmp_path / "run-out"
        assert main(["run", "--config", str(run_config), "--out", str(out)]) == 0
        assert (out / "result.json").exists()
        assert (out / "classifier" / "sizes.txt").exists()
        assert (out / "episodes.jsonl").exists()
        assert "full/l2a" in capsys.readouterr().out

    def test_setting_flag_overrides_config(self, run_config, tmp_path, capsys):
        out = tmp_path / "fs-out"
        code = main(
            ["run", "--config", str(run_config), "--setting", "fewshot", "--out", str(out)]
        )
        assert code == 0
        saved = json.loads((out / "result.json").read_text())
        assert saved["setting"] == "fewshot"

    def test_missing_config_fails(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_config_key_fails(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"seed": 0, "frobnicate": True}))
        assert main(["run", "--config", str(bad)]) == 1
        assert "frobnicate" in capsys.readouterr().err


class TestSweep:
    def test_budget_scan(self, run_config, tmp_path, capsys):
        out = tmp_path / "sweep-out"
        code = main(
            ["sweep", "--config", str(run_config), "--budgets", "0,2", "--out", str(out)]
        )
        assert code == 0
        lines = (out / "results.csv").read_text().strip().split("\n")
        assert len(lines) == 3
        stdout = capsys.readouterr().out
        assert "budget=0" in stdout and "budget=2" in stdout

    def test_empty_budget_list_fails(self, run_config, capsys):
        assert main(["sweep", "--config", str(run_config), "--budgets", ","]) == 1
        assert "error:" in capsys.readouterr().err


class TestCompare:
    def test_four_variant_rows(self, run_config, tmp_path, capsys):
        out = tmp_path / "cmp-out"
        assert main(["compare", "--config", str(run_config), "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        for tag in ("l2a", "random-pairs", "intra-class", "joint"):
            assert tag in stdout
        lines = (out / "results.csv").read_text().strip().split("\n")
        assert len(lines) == 5


class TestReport:
    def test_collects_runs(self, run_config, tmp_path, capsys):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["run", "--config", str(run_config), "--out", str(a)]) == 0
        assert main(
            ["run", "--config", str(run_config), "--setting", "fewshot", "--out", str(b)]
        ) == 0
        csv_path = tmp_path / "results.csv"
        code = main(["report", "--runs", str(tmp_path), "--out", str(csv_path)])
        assert code == 0
        lines = csv_path.read_text().strip().split("\n")
        assert len(lines) == 3
        assert "wrote 2 rows" in capsys.readouterr().out

    def test_no_results_fails(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["report", "--runs", str(empty), "--out", str(tmp_path / "r.csv")])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestParser:
    def test_missing_subcommand_exits_with_usage(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_setting_rejected(self, run_config):
        with pytest.raises(SystemExit):
            main(["run", "--config", str(run_config), "--setting", "bogus"])
