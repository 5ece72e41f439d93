from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

import sitegen
from tracesmith.cli import main
from tracesmith.model import dump_trace, load_trace

DATA = Path(__file__).parent / "data"


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def workdir(tmp_path):
    shutil.copy(DATA / "recording_imdb.json", tmp_path / "recording.json")
    sitegen.write_site(tmp_path / "site", "a")
    return tmp_path


def _invoke(runner, args, **kwargs):
    result = runner.invoke(main, args, catch_exceptions=False, **kwargs)
    return result


def _pipeline(runner, workdir):
    """ingest -> offline sop -> instantiate -> sign -> simulate; returns paths."""
    site_dir = workdir / "site"
    sop_path = workdir / "sop.json"
    inst_path = workdir / "instance.json"
    sig_path = workdir / "signatures.json"
    trace_path = workdir / "trace.json"

    r = _invoke(
        runner,
        [
            "sop", "generate",
            "--demo", str(workdir / "recording.json"),
            "--task-example", sitegen.EXAMPLE_TASK,
            "--task-general", sitegen.GENERAL_TASK,
            "--offline", "--out", str(sop_path), "--quiet",
        ],
    )
    assert r.exit_code == 0, r.output
    params_path = workdir / "params.json"
    params_path.write_text(json.dumps(sitegen.DEMO_PARAMS))
    r = _invoke(
        runner,
        ["sop", "instantiate", "--template", str(sop_path), "--params", str(params_path),
         "--strict", "--out", str(inst_path), "--quiet"],
    )
    assert r.exit_code == 0, r.output
    r = _invoke(
        runner,
        ["sign", "--recording", str(workdir / "recording.json"),
         "--snapshots", str(site_dir), "--out", str(sig_path), "--quiet"],
    )
    assert r.exit_code == 0, r.output
    r = _invoke(
        runner,
        ["simulate", "--sop", str(inst_path), "--site", str(site_dir / "site.json"),
         "--config", str(sig_path), "--out", str(trace_path), "--task-id", "imdb-demo",
         "--quiet"],
    )
    assert r.exit_code == 0, r.output
    return sop_path, inst_path, sig_path, trace_path


class TestIngest:
    def test_ingest_json_output(self, runner, workdir):
        r = _invoke(runner, ["ingest", str(workdir / "recording.json"), "--json"])
        assert r.exit_code == 0
        payload = json.loads(r.output)
        assert payload["recording"]["title"] == "Recording IMDB"
        assert payload["dropped"] == [{"stepIndex": 0, "reason": "viewportOnly"}]

    def test_ingest_bad_file_exit_2(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"title": "t", "steps": []}')
        r = runner.invoke(main, ["ingest", str(bad)])
        assert r.exit_code == 2


class TestPipeline:
    def test_full_offline_pipeline_and_monitor_exit_codes(self, runner, workdir):
        _, _, sig_path, trace_path = _pipeline(runner, workdir)
        golden_dir = workdir / "golden"
        golden_dir.mkdir()
        shutil.copy(trace_path, golden_dir / "golden.json")
        (golden_dir / "manifest.json").write_text(
            json.dumps(
                {"taskId": "imdb-demo", "traces": ["golden.json"],
                 "threshold": 0.811, "aggregation": "max"}
            )
        )
        r = _invoke(
            runner,
            ["monitor", "--trace", str(trace_path), "--golden", str(golden_dir),
             "--fail-on-inconsistent", "--json"],
        )
        assert r.exit_code == 0, r.output
        payload = json.loads(r.output)
        assert payload["score"] == 1.0
        assert payload["verdict"] == "consistent"

    def test_sign_partial_exits_3(self, runner, workdir):
        # Remove one snapshot page so a step cannot be signed.
        site_dir = workdir / "site"
        pages = json.loads((site_dir / "pages.json").read_text())
        pages.pop("13")
        pages.pop("14")
        pages.pop("15")
        (site_dir / "pages.json").write_text(json.dumps(pages))
        r = runner.invoke(
            main,
            ["sign", "--recording", str(workdir / "recording.json"),
             "--snapshots", str(site_dir), "--out", str(workdir / "sig.json"), "--json"],
        )
        assert r.exit_code == 3
        payload = json.loads(r.output)
        assert len(payload["entries"]) == 11
        assert [d["stepIndex"] for d in payload["diagnostics"]] == [13, 14, 15]
        assert (workdir / "sig.json").exists()

    def test_simulate_failure_exit_6(self, runner, workdir):
        _, inst_path, sig_path, _ = _pipeline(runner, workdir)
        instance = json.loads(inst_path.read_text())
        instance["steps"][1] = "Click on the element 'Ghost'"
        broken = workdir / "broken.json"
        broken.write_text(json.dumps(instance))
        r = runner.invoke(
            main,
            ["simulate", "--sop", str(broken), "--site", str(workdir / "site" / "site.json"),
             "--out", str(workdir / "t.json")],
        )
        assert r.exit_code == 6


class TestScoreEvalSuite:
    def test_score_identical_traces(self, runner, workdir):
        *_, trace_path = _pipeline(runner, workdir)
        r = _invoke(runner, ["score", "--a", str(trace_path), "--b", str(trace_path), "--json"])
        assert r.exit_code == 0
        assert json.loads(r.output)["score"] == 1.0

    def test_suite_generate_and_eval_auto(self, runner, workdir):
        *_, trace_path = _pipeline(runner, workdir)
        base_dir = workdir / "base"
        base_dir.mkdir()
        trace = load_trace(trace_path)
        for i in range(3):
            dump_trace(trace, base_dir / f"base_{i}.json")
        pairs_path = workdir / "suite" / "pairs.jsonl"
        r = _invoke(
            runner,
            ["suite", "generate", "--base", str(base_dir), "--n", "4",
             "--seed", "9", "--out", str(pairs_path), "--json"],
        )
        assert r.exit_code == 0, r.output
        assert json.loads(r.output)["pairs"] == 24
        r = _invoke(
            runner,
            ["eval", "--pairs", str(pairs_path), "--threshold", "auto", "--json"],
        )
        assert r.exit_code == 0, r.output
        payload = json.loads(r.output)
        assert set(payload) >= {"accuracy", "f1", "threshold", "confusion",
                                "meanSimilar", "meanDissimilar"}
        assert payload["accuracy"] == 1.0

    def test_eval_fixed_threshold(self, runner, workdir):
        *_, trace_path = _pipeline(runner, workdir)
        base_dir = workdir / "base"
        base_dir.mkdir()
        dump_trace(load_trace(trace_path), base_dir / "b.json")
        pairs_path = workdir / "suite2" / "pairs.jsonl"
        _invoke(runner, ["suite", "generate", "--base", str(base_dir), "--n", "3",
                         "--seed", "1", "--out", str(pairs_path), "--quiet"])
        r = _invoke(runner, ["eval", "--pairs", str(pairs_path), "--threshold", "0.9", "--json"])
        assert r.exit_code == 0
        assert json.loads(r.output)["threshold"] == 0.9

    def test_monitor_inconsistent_exit_5(self, runner, workdir):
        *_, trace_path = _pipeline(runner, workdir)
        trace = load_trace(trace_path)
        from tracesmith.sim import PerturbationSpec, perturb

        # a heavily divergent trace must trip the gate
        mutated = trace
        for pos in (1, 2, 3, 5, 7, 9, 10, 11, 12, 13):
            mutated = perturb(mutated, PerturbationSpec("change_goal", position=pos, seed=pos))
            mutated = perturb(mutated, PerturbationSpec("mutate_attrs", position=pos, seed=pos))
            mutated = perturb(mutated, PerturbationSpec("change_action", position=pos, seed=pos))
        bad_path = workdir / "bad.json"
        dump_trace(mutated, bad_path)
        golden_dir = workdir / "golden"
        golden_dir.mkdir()
        shutil.copy(trace_path, golden_dir / "golden.json")
        (golden_dir / "manifest.json").write_text(
            json.dumps({"taskId": "imdb-demo", "traces": ["golden.json"],
                        "threshold": 0.9, "aggregation": "max"})
        )
        r = runner.invoke(
            main,
            ["monitor", "--trace", str(bad_path), "--golden", str(golden_dir),
             "--fail-on-inconsistent", "--json"],
        )
        assert r.exit_code == 5
        assert json.loads(r.output)["verdict"] == "inconsistent"

    def test_threshold_out_of_range_exit_2(self, runner, workdir):
        *_, trace_path = _pipeline(runner, workdir)
        base_dir = workdir / "base"
        base_dir.mkdir()
        dump_trace(load_trace(trace_path), base_dir / "b.json")
        pairs_path = workdir / "s3" / "pairs.jsonl"
        _invoke(runner, ["suite", "generate", "--base", str(base_dir), "--n", "2",
                         "--seed", "2", "--out", str(pairs_path), "--quiet"])
        r = runner.invoke(main, ["eval", "--pairs", str(pairs_path), "--threshold", "1.01"])
        assert r.exit_code == 2
