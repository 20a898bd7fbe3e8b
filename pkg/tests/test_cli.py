import csv
import json

import pytest

from relaxkv.cli import main
from relaxkv.errors import ContractViolationError


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def csv_header_comments(path):
    return [l for l in path.read_text().splitlines() if l.startswith("#")]


class TestRollout:
    def test_default_run_attends_seven(self, tmp_path):
        assert main(["rollout", "--seed", "1", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "rollout.json").read_text())
        assert report["schema_version"] == 1
        assert report["config"]["rollout"]["seed"] == 1
        for step in report["steps"][2:]:
            assert step["attended_frames"] == 7
        assert report["metrics"]["cost_ratio"] == 3.0

    def test_missing_seed_rejected(self, tmp_path):
        assert main(["rollout", "--out", str(tmp_path)]) == 2

    def test_bad_total_frames_rejected(self, tmp_path):
        assert (
            main(
                ["rollout", "--seed", "1", "--out", str(tmp_path),
                 "--set", "rollout.total_frames=50"]
            )
            == 2
        )

    def test_unknown_key_rejected(self, tmp_path):
        assert (
            main(["rollout", "--seed", "1", "--out", str(tmp_path),
                  "--set", "memory.bogus=1"])
            == 2
        )

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text(
            "[rollout]\nseed = 5\ntotal_frames = 30\n"
            "[memory]\nn_sink = 1\n"
        )
        assert (
            main(["rollout", "--config", str(cfg), "--out", str(tmp_path),
                  "--set", "memory.n_sink=3"])
            == 0
        )
        report = json.loads((tmp_path / "rollout.json").read_text())
        assert report["config"]["memory"]["n_sink"] == 3
        assert report["config"]["rollout"]["total_frames"] == 30

    def test_runtime_error_exit_code(self, tmp_path, monkeypatch):
        import relaxkv.cli as cli_mod

        def boom(cfg):
            raise ContractViolationError("injected")

        monkeypatch.setattr(cli_mod, "run_rollout", boom)
        assert main(["rollout", "--seed", "1", "--out", str(tmp_path)]) == 3


class TestSweep:
    def test_sink_grid(self, tmp_path):
        assert (
            main(["sweep", "--seed", "2", "--out", str(tmp_path),
                  "--grid", "memory.n_sink=0,1,2,3"])
            == 0
        )
        rows = read_csv(tmp_path / "sweep.csv")
        assert len(rows) == 4
        assert [r["memory.n_sink"] for r in rows] == ["0", "1", "2", "3"]
        assert all(r["error"] == "" for r in rows)
        assert "# schema_version: 1" in csv_header_comments(tmp_path / "sweep.csv")

    def test_history_position_grid(self, tmp_path):
        assert (
            main(["sweep", "--seed", "2", "--out", str(tmp_path),
                  "--grid", "memory.fixed_history_position=0,1,2,3,4,5,6,7,8"])
            == 0
        )
        rows = read_csv(tmp_path / "sweep.csv")
        assert len(rows) == 9

    def test_conflicting_grid_keys(self, tmp_path):
        assert (
            main(["sweep", "--seed", "2", "--out", str(tmp_path),
                  "--grid", "memory.n_sink=0,1", "--grid", "memory.n_sink=2"])
            == 2
        )

    def test_json_format(self, tmp_path):
        assert (
            main(["sweep", "--seed", "2", "--out", str(tmp_path),
                  "--format", "json", "--grid", "memory.n_tail=0,1"])
            == 0
        )
        payload = json.loads((tmp_path / "sweep.json").read_text())
        assert payload["schema_version"] == 1
        assert len(payload["rows"]) == 2


class TestProfile:
    def test_matches_rollout_costs(self, tmp_path):
        assert main(["profile", "--seed", "3", "--out", str(tmp_path)]) == 0
        assert main(["rollout", "--seed", "3", "--out", str(tmp_path)]) == 0
        prof = read_csv(tmp_path / "profile.csv")
        report = json.loads((tmp_path / "rollout.json").read_text())
        assert len(prof) == len(report["steps"])
        for prow, step in zip(prof, report["steps"]):
            assert int(prow["attended_frames"]) == step["attended_frames"]
            assert int(prow["score_ops"]) == step["score_ops"]

    @pytest.mark.parametrize(
        "policy", ["dense_window", "attention_sink", "full", "none",
                   "sink_only", "tail_only", "history_only"]
    )
    def test_other_policies_match_rollout(self, tmp_path, policy):
        args = ["--seed", "3", "--out", str(tmp_path), "--set",
                f"memory.policy={policy}"]
        assert main(["profile", *args]) == 0
        assert main(["rollout", *args]) == 0
        prof = read_csv(tmp_path / "profile.csv")
        report = json.loads((tmp_path / "rollout.json").read_text())
        for prow, step in zip(prof, report["steps"]):
            assert int(prow["attended_frames"]) == step["attended_frames"]


class TestCompare:
    def test_baseline_vs_relaxed_cost_ratio(self, tmp_path):
        assert (
            main(["compare", "--seed", "4", "--out", str(tmp_path),
                  "--policies", "dense_window,relaxed"])
            == 0
        )
        rows = read_csv(tmp_path / "compare.csv")
        by_policy = {r["policy"]: r for r in rows}
        assert float(by_policy["relaxed"]["cost_ratio"]) == 3.0
        assert float(by_policy["dense_window"]["cost_ratio"]) == 1.0

    def test_same_policy_twice_degenerate_balance(self, tmp_path):
        assert (
            main(["compare", "--seed", "4", "--out", str(tmp_path),
                  "--policies", "relaxed,relaxed"])
            == 0
        )
        rows = read_csv(tmp_path / "compare.csv")
        assert rows[0]["drift"] == rows[1]["drift"]
        assert rows[0]["repetition"] == rows[1]["repetition"]
        assert float(rows[0]["balance"]) == float(rows[1]["balance"]) == 0.0

    def test_single_policy_rejected(self, tmp_path):
        assert (
            main(["compare", "--seed", "4", "--out", str(tmp_path),
                  "--policies", "relaxed"])
            == 2
        )

    def test_byte_identical_reruns(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        args = ["compare", "--seed", "8", "--policies",
                "dense_window,attention_sink,relaxed"]
        assert main([*args, "--out", str(out_a)]) == 0
        assert main([*args, "--out", str(out_b)]) == 0
        assert (out_a / "compare.csv").read_bytes() == (out_b / "compare.csv").read_bytes()
