import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

from influencekit.cli import main
from fixtures import make_corpus

GOLDEN = Path(__file__).parent / "golden"


def run_cli(*argv) -> tuple[int, str]:
    import contextlib
    import io

    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main(list(argv))
    return code, out.getvalue()


class TestInfluenceCommand:
    def test_two_event_fixture(self, tmp_path):
        cascades = tmp_path / "c.jsonl"
        cascades.write_text(json.dumps({
            "cascade_id": "c1",
            "events": [{"user": "alice", "t": 0, "mark": 10},
                       {"user": "bob", "t": 1, "mark": 5}],
        }) + "\n")
        out = tmp_path / "users.csv"
        code, _ = run_cli("influence", "--cascades", str(cascades), "--out", str(out),
                          "--alpha", "0.02", "--threads", "1")
        assert code == 0
        rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert rows[0] == "user,score,tweet_count"
        assert rows[1] == "alice,1.02,1"
        assert rows[2] == "bob,0.98,1"

    def test_no_capital_matches_baseline(self, tmp_path):
        cascades = tmp_path / "c.jsonl"
        make_corpus(str(cascades), 20, seed=4)
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        run_cli("influence", "--cascades", str(cascades), "--out", str(out_a),
                "--no-capital", "--threads", "1")
        run_cli("influence", "--cascades", str(cascades), "--out", str(out_b),
                "--no-capital", "--threads", "1")
        assert out_a.read_text() == out_b.read_text()

    def test_golden_corpus_bit_identical(self, tmp_path):
        cascades = tmp_path / "corpus.jsonl"
        make_corpus(str(cascades), 100, seed=20240811)
        out = tmp_path / "users.csv"
        per_tweet = tmp_path / "tweets.csv"
        code, _ = run_cli("influence", "--cascades", str(cascades), "--out", str(out),
                          "--per-tweet", str(per_tweet), "--alpha", "0.02",
                          "--b", "0.4", "--threads", "1", "--seed", "1")
        assert code == 0
        assert out.read_bytes() == (GOLDEN / "user_influence.csv").read_bytes()
        assert per_tweet.read_bytes() == (GOLDEN / "tweet_influence.csv").read_bytes()

    def test_threads_do_not_change_results(self, tmp_path):
        cascades = tmp_path / "corpus.jsonl"
        make_corpus(str(cascades), 60, seed=99)
        outs = []
        for threads in ("1", "4"):
            out = tmp_path / f"users-{threads}.csv"
            pt = tmp_path / f"tweets-{threads}.csv"
            run_cli("influence", "--cascades", str(cascades), "--out", str(out),
                    "--per-tweet", str(pt), "--alpha", "0.02", "--threads", threads)
            outs.append((out.read_bytes(), pt.read_bytes()))
        assert outs[0] == outs[1]

    def test_malformed_input_is_data_error(self, tmp_path):
        cascades = tmp_path / "bad.jsonl"
        cascades.write_text("this is not json\n")
        code, _ = run_cli("influence", "--cascades", str(cascades),
                          "--out", str(tmp_path / "o.csv"), "--threads", "1")
        assert code == 3

    def test_skip_bad_accepts_partial_file(self, tmp_path):
        cascades = tmp_path / "bad.jsonl"
        cascades.write_text(
            "garbage\n"
            + json.dumps({"cascade_id": "ok", "events": [{"user": "a", "t": 0}]})
            + "\n"
        )
        code, _ = run_cli("influence", "--cascades", str(cascades),
                          "--out", str(tmp_path / "o.csv"), "--threads", "1", "--skip-bad")
        assert code == 0

    def test_lens_without_inputs_is_config_error(self, tmp_path):
        cascades = tmp_path / "c.jsonl"
        make_corpus(str(cascades), 2, seed=1)
        code, _ = run_cli("influence", "--cascades", str(cascades),
                          "--out", str(tmp_path / "o.csv"), "--conductance", "lexical")
        assert code == 2

    def test_header_carries_config_hash(self, tmp_path):
        cascades = tmp_path / "c.jsonl"
        make_corpus(str(cascades), 3, seed=2)
        out = tmp_path / "o.csv"
        code, stdout = run_cli("influence", "--cascades", str(cascades), "--out", str(out),
                               "--threads", "1")
        assert code == 0
        header = [l for l in out.read_text().splitlines() if l.startswith("#")]
        assert any("config_hash=" in l for l in header)
        assert any("config=" in l for l in header)
        assert "config_hash=" in stdout

    def test_lexical_lens_via_documents(self, tmp_path):
        cascades = tmp_path / "c.jsonl"
        cascades.write_text(json.dumps({
            "cascade_id": "c1",
            "events": [{"user": "alice", "t": 0, "mark": 2},
                       {"user": "bob", "t": 1, "mark": 2},
                       {"user": "carol", "t": 2, "mark": 2}],
        }) + "\n")
        docs = tmp_path / "docs.jsonl"
        docs.write_text("\n".join([
            json.dumps({"user": "alice", "text": "wildfire updates and emergency news"}),
            json.dumps({"user": "bob", "text": "wildfire emergency coverage tonight"}),
            json.dumps({"user": "carol", "text": "cats and cooking recipes"}),
        ]) + "\n")
        out = tmp_path / "o.csv"
        code, _ = run_cli("influence", "--cascades", str(cascades), "--out", str(out),
                          "--conductance", "lexical", "--documents", str(docs),
                          "--beta", "0.18", "--no-capital", "--threads", "1")
        assert code == 0
        scores = {}
        for line in out.read_text().splitlines():
            if line.startswith("#") or line.startswith("user,"):
                continue
            user, score, _ = line.split(",")
            scores[user] = float(score)
        assert scores["alice"] > scores["carol"]


class TestSimulateAndFitNoise:
    def test_round_trip_through_files(self, tmp_path):
        log = tmp_path / "log.jsonl"
        theta = tmp_path / "theta.csv"
        summary = tmp_path / "summary.json"
        code, _ = run_cli("simulate", "--n", "80", "--budget", "1500", "--noise", "1.22",
                          "--seed", "3", "--out-log", str(log), "--out-theta", str(theta),
                          "--summary", str(summary))
        assert code == 0
        s = json.loads(summary.read_text())
        assert s["comparisons"] == 1500
        code, stdout = run_cli("fit-noise", "--log", str(log), "--theta", str(theta),
                               "--observed", str(s["expected_accuracy"]))
        assert code == 0
        fitted = float(stdout.strip().splitlines()[-1])
        assert abs(fitted - 1.22) < 1e-3

    def test_budget_grid_shape(self, tmp_path):
        out = tmp_path / "grid.csv"
        code, _ = run_cli("budget-grid", "--targets", "10,20", "--budgets", "60,120",
                          "--noise", "1.0", "--replications", "2", "--seed", "5",
                          "--out", str(out))
        assert code == 0
        rows = [l for l in out.read_text().splitlines()
                if l and not l.startswith("#") and not l.startswith("n,")]
        assert len(rows) == 4

    def test_build_embeddings_then_influence(self, tmp_path):
        docs = tmp_path / "docs.jsonl"
        docs.write_text("\n".join(
            json.dumps({"user": f"user{i:03d}", "text": f"shared vocabulary plus term{i % 4}"})
            for i in range(8)
        ) + "\n")
        cache = tmp_path / "cache.jsonl"
        code, _ = run_cli("build-embeddings", "--documents", str(docs),
                          "--dimension", "4096", "--out", str(cache))
        assert code == 0
        header = json.loads(cache.read_text().splitlines()[0])
        assert header["lens"] == "lexical"
        assert header["dimension"] == 4096
        cascades = tmp_path / "c.jsonl"
        cascades.write_text(json.dumps({
            "cascade_id": "c1",
            "events": [{"user": "user000", "t": 0}, {"user": "user001", "t": 1},
                       {"user": "user002", "t": 2}],
        }) + "\n")
        code, _ = run_cli("influence", "--cascades", str(cascades),
                          "--out", str(tmp_path / "o.csv"), "--conductance", "lexical",
                          "--embedding-cache", str(cache), "--threads", "1")
        assert code == 0

    def test_noise_curve_monotone(self, tmp_path):
        out = tmp_path / "curve.csv"
        code, _ = run_cli("noise-curve", "--n", "60", "--normalization", "log",
                          "--pairs", "2000", "--points", "10", "--seed", "2",
                          "--out", str(out))
        assert code == 0
        values = [float(l.split(",")[1]) for l in out.read_text().splitlines()
                  if l and not l.startswith("#") and not l.startswith("lambda")]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestRankAndEval:
    def test_rank_then_eval_self(self, tmp_path):
        log = tmp_path / "log.jsonl"
        theta = tmp_path / "theta.csv"
        run_cli("simulate", "--n", "30", "--budget", "600", "--noise", "0.3", "--seed", "8",
                "--out-log", str(log), "--out-theta", str(theta))
        ranking = tmp_path / "ranking.csv"
        code, stdout = run_cli("rank", "--log", str(log), "--noise", "0.3",
                               "--out", str(ranking))
        assert code == 0
        assert "converged" in stdout
        report = tmp_path / "report.json"
        code, stdout = run_cli("eval", "--estimate", str(ranking), "--truth", str(theta),
                               "--out", str(report))
        assert code == 0
        body = json.loads(report.read_text())
        assert set(body) >= {"auc_ndcg", "mape", "spearman", "kendall"}
        assert body["spearman"] > 0.8
        assert "spearman=" in stdout

    def test_eval_identical_rankings(self, tmp_path):
        ranking = tmp_path / "r.csv"
        ranking.write_text("target,score\nalpha,3\nbeta,2\ngamma,1\n")
        code, stdout = run_cli("eval", "--estimate", str(ranking), "--truth", str(ranking))
        assert code == 0
        values = dict(l.split("=") for l in stdout.splitlines() if "=" in l and not l.startswith("#"))
        assert float(values["auc_ndcg"]) == 1.0
        assert float(values["mape"]) == 0.0
        assert float(values["spearman"]) == 1.0
        assert float(values["kendall"]) == 1.0

    def test_mismatched_sets_is_data_error(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("target,score\nx,1\ny,2\n")
        b.write_text("target,score\nx,1\nz,2\n")
        code, _ = run_cli("eval", "--estimate", str(a), "--truth", str(b))
        assert code == 3

    def test_usage_error_unknown_flag(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["rank", "--log", "x", "--definitely-not-a-flag"])
        assert excinfo.value.code == 2


class TestServeCommand:
    def test_ephemeral_port_printed(self, tmp_path):
        from test_service import write_profiles

        targets, proxies = write_profiles(tmp_path / "profiles.jsonl", 4, 2)
        (tmp_path / "svc.json").write_text(json.dumps({
            "profiles": "profiles.jsonl",
            "targets": targets,
            "proxies": proxies,
            "admin_token": "t",
            "log": "events.log",
        }))
        proc = subprocess.Popen(
            [sys.executable, "-m", "influencekit.cli", "serve",
             "--service-config", str(tmp_path / "svc.json"), "--port", "0"],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
        )
        try:
            line = proc.stdout.readline()
            assert "serving on http://127.0.0.1:" in line
            port = int(line.rsplit(":", 1)[1])
            assert port > 0
        finally:
            proc.send_signal(signal.SIGTERM)
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
