"""Run orchestration: seeding, CSV artifacts, comparisons and the CLI."""
import csv
import json

import numpy as np
import pytest

from v2vlink.agent import QNetwork, TrainConfig
from v2vlink.baselines import (FixedPolicy, OraclePolicy, PsoPolicy,
                               RandomPolicy, SaPolicy)
from v2vlink.cli import main
from v2vlink.config import ExperimentConfig, config_hash, save_config
from v2vlink.env import N_ACTIONS, State
from v2vlink.harness import (EPISODE_HEADER, EVAL_EPISODE_HEADER,
                             EVAL_STEP_HEADER, NET_VARIANTS, POLICY_NAMES,
                             SUMMARY_HEADER, TRACE_HEADER, _fmt,
                             artifact_paths, build_policy, export_traces,
                             load_traces, make_traces, run_comparison,
                             run_training, seed_streams, summary_row,
                             variant_train_config, write_csv)


@pytest.fixture(scope="module")
def tiny_config():
    # a budget small enough that training is instant but still updates
    return ExperimentConfig(
        episode_len=5, eval_episodes=2, seeds=(1,),
        train=TrainConfig(episodes=3, batch_size=4, learn_start=4,
                          hidden_units=8, replay_capacity=50))


class TestSeeding:
    def test_env_and_agent_streams_differ(self):
        env_rng, agent_rng = seed_streams(7)
        assert env_rng.random() != agent_rng.random()

    def test_deterministic_per_seed(self):
        a = seed_streams(3)[0].random(4)
        b = seed_streams(3)[0].random(4)
        c = seed_streams(4)[0].random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestCsv:
    def test_fmt(self):
        assert _fmt(0.1) == "0.1"
        assert _fmt(1 / 3) == repr(1 / 3)
        assert _fmt(True) == "1"
        assert _fmt(False) == "0"
        assert _fmt(42) == "42"
        assert _fmt("abc") == "abc"

    def test_floats_round_trip_exactly(self, tmp_path):
        path = tmp_path / "vals.csv"
        values = [0.1, 1 / 3, 2.5e-300, -1.2345678901234567e18,
                  np.pi, 63.13]
        write_csv(path, ("x",), [(v,) for v in values])
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x"]
        back = [float(r[0]) for r in rows[1:]]
        assert back == values

    def test_unix_line_endings(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ("a", "b"), [(1, 2)])
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw == b"a,b\n1,2\n"


class TestVariantConfig:
    def test_d3qn_is_the_configured_block(self, tiny_config):
        assert variant_train_config(tiny_config, "d3qn") is tiny_config.train

    def test_ddqn_drops_dueling(self, tiny_config):
        tc = variant_train_config(tiny_config, "ddqn")
        assert tc.dueling is False
        assert tc.target_rule == "double"

    def test_dqn_drops_both(self, tiny_config):
        tc = variant_train_config(tiny_config, "dqn")
        assert tc.dueling is False
        assert tc.target_rule == "max"
        # the rest of the block is untouched
        assert tc.episodes == tiny_config.train.episodes

    def test_unknown_variant(self, tiny_config):
        with pytest.raises(ValueError, match="variant"):
            variant_train_config(tiny_config, "a2c")


class TestArtifacts:
    def test_artifact_paths_naming(self, tmp_path):
        paths = artifact_paths(tmp_path, "ddqn", 1, 5)
        assert paths["episodes"].name == "episodes_ddqn_game1_seed5.csv"
        assert paths["checkpoint"].name == "checkpoint_ddqn_game1_seed5.txt"
        assert paths["figure"].name == "training_ddqn_game1_seed5.png"
        assert paths["run"].name == "run_ddqn_game1_seed5.json"
        assert all(p.parent == tmp_path for p in paths.values())

    def test_run_training_writes_everything(self, tiny_config, tmp_path):
        records = run_training(tiny_config, 2, out_dir=tmp_path)
        assert len(records) == 1
        paths = artifact_paths(tmp_path, "d3qn", 2, 1)
        for p in paths.values():
            assert p.exists() and p.stat().st_size > 0

        with open(paths["episodes"], newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == EPISODE_HEADER
        assert len(rows) == 1 + tiny_config.train.episodes
        assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]

        net = QNetwork.load(paths["checkpoint"])
        assert net.n_actions == N_ACTIONS

        with open(paths["run"]) as fh:
            summary = json.load(fh)
        chash = config_hash(tiny_config)
        assert summary["run_id"] == f"{chash}-d3qn-g2-s1"
        assert summary["config_hash"] == chash
        assert summary["episodes"] == 3
        assert summary["global_steps"] == 15
        assert summary["avg_tail_fractions"] == [0.5, 0.25, 0.125]
        # 3 episodes leave only the half-width window non-empty, so the
        # lone candidate wins without any validation rollouts
        assert summary["policy_tail_fraction"] == 0.5
        assert summary["selection"] == []
        assert summary["wall_clock_s"] > 0
        for key in ("mean_reward_all_episodes", "mean_reward_last_tenth",
                    "mean_ee_all_episodes", "mean_ee_last_tenth",
                    "final_epsilon", "code_version", "target_syncs"):
            assert key in summary

        rec = records[0]
        assert rec.run_id == summary["run_id"]
        assert rec.csv_path == str(paths["episodes"])
        assert len(rec.rows) == 3

    def test_reruns_are_byte_identical(self, tiny_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_training(tiny_config, 2, out_dir=a)
        run_training(tiny_config, 2, out_dir=b)
        pa = artifact_paths(a, "d3qn", 2, 1)
        pb = artifact_paths(b, "d3qn", 2, 1)
        assert pa["episodes"].read_bytes() == pb["episodes"].read_bytes()
        assert pa["checkpoint"].read_bytes() == pb["checkpoint"].read_bytes()

    def test_variants_train_distinct_nets(self, tiny_config, tmp_path):
        run_training(tiny_config, 1, variant="dqn", out_dir=tmp_path)
        paths = artifact_paths(tmp_path, "dqn", 1, 1)
        net = QNetwork.load(paths["checkpoint"])
        assert net.dueling is False


class TestTraces:
    def test_make_traces_deterministic(self, tiny_config):
        t1 = make_traces(tiny_config, 2)
        t2 = make_traces(tiny_config, 2)
        assert len(t1) == tiny_config.eval_episodes
        for a, b in zip(t1, t2):
            assert np.array_equal(a.true_snr_db, b.true_snr_db)
            assert np.array_equal(a.est_snr_db, b.est_snr_db)
            assert a.scenario == b.scenario

    def test_trace_seed_changes_the_draw(self, tiny_config):
        t1 = make_traces(tiny_config, 2, seed=1)
        t2 = make_traces(tiny_config, 2, seed=2)
        assert not np.array_equal(t1[0].true_snr_db, t2[0].true_snr_db)

    def test_export_load_round_trip(self, tiny_config, tmp_path):
        path = tmp_path / "traces.csv"
        traces = export_traces(tiny_config, path, 2, n_episodes=3)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == TRACE_HEADER
        assert len(rows) == 1 + 3 * tiny_config.episode_len

        back = load_traces(path)
        assert len(back) == len(traces) == 3
        for a, b in zip(traces, back):
            assert np.array_equal(a.true_snr_db, b.true_snr_db)
            assert np.array_equal(a.est_snr_db, b.est_snr_db)
            assert a.scenario == tuple(b.scenario)


class TestPolicies:
    def test_build_policy_baselines(self, tiny_config, tmp_path):
        built = {name: build_policy(name, tiny_config, 2, 1, tmp_path)
                 for name in ("oracle", "pso", "sa", "random", "fixed")}
        assert isinstance(built["oracle"], OraclePolicy)
        assert isinstance(built["pso"], PsoPolicy)
        assert isinstance(built["sa"], SaPolicy)
        assert isinstance(built["random"], RandomPolicy)
        assert isinstance(built["fixed"], FixedPolicy)
        assert built["fixed"].flat == tiny_config.fixed_action.flat

    def test_unknown_policy_name(self, tiny_config, tmp_path):
        with pytest.raises(ValueError, match="unknown policy"):
            build_policy("alpha-zero", tiny_config, 2, 1, tmp_path)

    def test_missing_checkpoint_is_actionable(self, tiny_config, tmp_path):
        with pytest.raises(FileNotFoundError, match="v2vlink train"):
            build_policy("d3qn", tiny_config, 2, 1, tmp_path)

    def test_train_missing_fills_the_gap(self, tiny_config, tmp_path):
        policy = build_policy("ddqn", tiny_config, 2, 1, tmp_path,
                              train_missing=True)
        assert artifact_paths(tmp_path, "ddqn", 2, 1)["checkpoint"].exists()
        trace = make_traces(tiny_config, 2)[0]
        state = State(trace.scenario[0], float(trace.est_snr_db[0]), 1)
        assert 0 <= policy(state) < N_ACTIONS

    def test_summary_row_with_zero_oracle(self):
        class Stub:
            episodes = [1]
            n_steps = 4
            cum_reward = 2.0
            valid_actions = 3
            mean_power_w = 1.0
            mean_ee_mbps_per_w = 2.0
            mean_throughput_mbps = 2.0
            violations = 1

        row = summary_row("stub", Stub(), oracle_reward=0.0)
        assert np.isnan(row["reward_vs_oracle"])
        assert row["valid_fraction"] == 0.75
        assert row["violation_fraction"] == 0.25


class TestComparison:
    POLICIES = ("d3qn", "oracle", "random", "fixed")

    def test_run_comparison_artifacts(self, tiny_config, tmp_path):
        rows = run_comparison(tiny_config, 2, out_dir=tmp_path,
                              policies=self.POLICIES)
        assert [r["policy"] for r in rows] == list(self.POLICIES)
        by_name = {r["policy"]: r for r in rows}
        assert by_name["oracle"]["reward_vs_oracle"] == 1.0
        n_steps = tiny_config.eval_episodes * tiny_config.episode_len
        for name, row in by_name.items():
            assert row["n_steps"] == n_steps
            assert row["cum_reward"] <= by_name["oracle"]["cum_reward"]
            assert 0.0 <= row["valid_fraction"] <= 1.0

        with open(tmp_path / "summary_game2.csv", newline="") as fh:
            csv_rows = list(csv.reader(fh))
        assert tuple(csv_rows[0]) == SUMMARY_HEADER
        assert len(csv_rows) == 1 + len(self.POLICIES)

        for name in self.POLICIES:
            with open(tmp_path / f"eval_{name}_game2.csv", newline="") as fh:
                ep_rows = list(csv.reader(fh))
            assert tuple(ep_rows[0]) == EVAL_EPISODE_HEADER
            assert len(ep_rows) == 1 + tiny_config.eval_episodes
            with open(tmp_path / f"eval_steps_{name}_game2.csv",
                      newline="") as fh:
                step_rows = list(csv.reader(fh))
            assert tuple(step_rows[0]) == EVAL_STEP_HEADER
            assert len(step_rows) == 1 + n_steps
        assert (tmp_path / "comparison_game2.png").stat().st_size > 0

    def test_summary_csv_matches_returned_rows(self, tiny_config, tmp_path):
        rows = run_comparison(tiny_config, 1, out_dir=tmp_path,
                              policies=("oracle", "fixed"),
                              collect_steps=False)
        with open(tmp_path / "summary_game1.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            csv_rows = list(reader)
        for ret, got in zip(rows, csv_rows):
            assert got["policy"] == ret["policy"]
            assert float(got["cum_reward"]) == ret["cum_reward"]
            assert int(got["valid_actions"]) == ret["valid_actions"]
        assert not (tmp_path / "eval_steps_oracle_game1.csv").exists()


class TestCli:
    def _write_config(self, tmp_path):
        cfg = ExperimentConfig(
            episode_len=4, eval_episodes=2, seeds=(1,),
            train=TrainConfig(episodes=2, batch_size=4, learn_start=4,
                              hidden_units=8, replay_capacity=50))
        path = tmp_path / "tiny.json"
        save_config(cfg, path)
        return path

    def test_train_then_evaluate(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        out = tmp_path / "runs"
        argv = ["--config", str(cfg_path), "--out", str(out), "--game", "1"]

        assert main(["train", *argv]) == 0
        assert "episodes in" in capsys.readouterr().out
        assert artifact_paths(out, "d3qn", 1, 1)["checkpoint"].exists()

        assert main(["evaluate", "--policy", "d3qn", *argv]) == 0
        assert "valid fraction" in capsys.readouterr().out
        assert (out / "eval_d3qn_game1.csv").exists()
        assert (out / "eval_steps_d3qn_game1.csv").exists()

    def test_evaluate_baseline_needs_no_checkpoint(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        out = tmp_path / "runs"
        assert main(["evaluate", "--policy", "oracle", "--config",
                     str(cfg_path), "--out", str(out)]) == 0
        assert "oracle" in capsys.readouterr().out

    def test_compare_all_policies(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        out = tmp_path / "runs"
        assert main(["compare", "--config", str(cfg_path), "--out", str(out),
                     "--game", "2"]) == 0
        text = capsys.readouterr().out
        for name in POLICY_NAMES:
            assert name in text
        assert (out / "summary_game2.csv").exists()
        for variant in NET_VARIANTS:
            assert artifact_paths(out, variant, 2, 1)["checkpoint"].exists()

    def test_export_traces(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        out = tmp_path / "runs"
        assert main(["export-traces", "--config", str(cfg_path), "--out",
                     str(out), "--game", "1", "--episodes", "3"]) == 0
        assert "3 episodes (12 steps)" in capsys.readouterr().out
        assert len(load_traces(out / "traces_game1.csv")) == 3

    def test_gradcheck_passes(self, capsys):
        assert main(["gradcheck", "--trials", "2"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert out.count("max rel err") == 2

    def test_seed_override(self, tmp_path):
        cfg_path = self._write_config(tmp_path)
        out = tmp_path / "runs"
        assert main(["train", "--config", str(cfg_path), "--out", str(out),
                     "--game", "1", "--seed", "9"]) == 0
        assert artifact_paths(out, "d3qn", 1, 9)["checkpoint"].exists()

    def test_errors_exit_2(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        assert main(["train", "--config", str(missing)]) == 2
        assert "error:" in capsys.readouterr().err

        bad = tmp_path / "bad.json"
        bad.write_text('{"bogus": 1}')
        assert main(["train", "--config", str(bad)]) == 2
        assert "bogus" in capsys.readouterr().err

        cfg_path = self._write_config(tmp_path)
        assert main(["evaluate", "--policy", "d3qn", "--config",
                     str(cfg_path), "--out", str(tmp_path / "empty")]) == 2
        assert "v2vlink train" in capsys.readouterr().err
