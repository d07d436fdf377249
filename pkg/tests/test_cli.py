from __future__ import annotations

import json
import subprocess
import sys

import pytest

from clickipi.actions import DEFAULT_PATTERNS
from clickipi.cli import main
from clickipi.ingest import format_events
from clickipi.metrics import DEFAULT_IPI_WEIGHTS
from clickipi.tables import read_csv

from conftest import ev


@pytest.fixture
def one_session_log(tmp_path):
    events = [ev(0, "play", 0.0), ev(10, "pause", 10.0), ev(12, "seek", 30.0, 10.0), ev(14, "play", 30.0),
              ev(84, "pause", 100.0)]
    path = tmp_path / "e.log"
    path.write_text(format_events(events))
    (tmp_path / "videos.csv").write_text("video_id,video_length,week_index,order_in_course\nv1,100,1,1\n")
    return path


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["pipeline", "--simulate", "default", "--n-students", "60", "--seed", "3",
                 "--tasks", "engagement,course", "--modes", "summarized", "--out", str(out)])
    assert code == 0
    return out


def test_encode_one_session(one_session_log, tmp_path, capsys):
    out = tmp_path / "seq.csv"
    assert main(["encode", "--events", str(one_session_log), "--meta", str(tmp_path / "videos.csv"),
                 "--out", str(out), "--sessions-out", str(tmp_path / "s.csv")]) == 0
    rows = read_csv(out)
    assert len(rows) == 1 and rows[0]["sequence"] == "PlPaSfPlPa"
    assert read_csv(tmp_path / "s.csv")[0]["has_end_pause"] == "true"


def test_encode_actions_ipi_chain(one_session_log, tmp_path):
    seq = tmp_path / "seq.csv"
    main(["encode", "--events", str(one_session_log), "--out", str(seq)])
    log2 = tmp_path / "e2.log"
    log2.write_text(format_events([ev(0, "play", 0.0, student="s2"), ev(1, "seek", 90.0, 1.0, student="s2"),
                                   ev(3, "seek", 95.0, 90.0, student="s2"), ev(4, "pause", 95.0, student="s2")]))
    seq2 = tmp_path / "seq2.csv"
    main(["encode", "--events", str(log2), "--out", str(seq2)])
    both = tmp_path / "both.csv"
    both.write_text(seq.read_text() + "".join(seq2.read_text().splitlines(keepends=True)[1:]))
    acts = tmp_path / "actions.csv"
    assert main(["actions", "--sequences", str(both), "--out", str(acts), "--thresholds-out",
                 str(tmp_path / "thr.json"), "--ngrams-out", str(tmp_path / "ng.csv")]) == 0
    assert len(read_csv(acts)) == 2
    assert main(["ipi", "--actions", str(acts), "--out", str(tmp_path / "ipi.csv")]) == 0
    ipis = [float(r["ipi"]) for r in read_csv(tmp_path / "ipi.csv")]
    assert all(abs(v) <= 12 and v % 2 == 0 for v in ipis)


def test_usage_errors_exit_2(capsys):
    assert main(["encode", "--bogus"]) == 2
    assert main([]) == 2
    assert main(["train", "--task", "engagement", "--events", "x", "--meta", "y", "--out", "z"]) == 2  # no seed
    assert main(["simulate", "--seed", "-1", "--out", "x"]) == 2
    assert main(["simulate", "--seed", str(2**64), "--out", "x"]) == 2


def test_module_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.log"
    bad.write_text('{"student_id": "s", "video_id": "v", "timestamp": 1, "kind": "play", "position_to": 0, "playrate": 0}\n')
    assert main(["encode", "--events", str(bad), "--out", str(tmp_path / "o.csv")]) == 1
    err = capsys.readouterr().err
    assert "clickipi encode: error:" in err and "playrate" in err
    assert main(["encode", "--events", str(tmp_path / "missing.log"), "--out", str(tmp_path / "o.csv")]) == 1


def test_show_config_lists_every_default(capsys):
    assert main(["--show-config"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["metrics"]["weights"] == DEFAULT_IPI_WEIGHTS
    assert cfg["actions"]["patterns"] == {k: list(v) for k, v in DEFAULT_PATTERNS.items()}
    assert (cfg["actions"]["w_del"], cfg["actions"]["w_ins"], cfg["actions"]["w_sub"]) == (0.1, 1.0, 1.0)
    assert cfg["ingest"]["gap_seconds"] > 0 and cfg["encode"]["scroll_window"] == 1.0
    assert cfg["backend"] in ("numba", "numpy")
    assert {a["name"] for a in cfg["simgen_default"]["archetypes"]} == {"deep-processor", "skimmer"}


def test_simulate_is_repeatable(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["simulate", "--seed", "11", "--n-students", "15", "--out", str(tmp_path / name)]) == 0
    for f in ("events.jsonl", "videos.csv", "truth.csv", "cohort.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_small_pipeline_artifacts(small_run):
    for rel in ("sequences.csv", "actions.csv", "metrics.csv", "trajectories.csv", "person_weeks.csv",
                "hazards.csv", "config.json", "report/ipi_histogram.csv", "report/ztests.csv",
                "learn/metrics.csv", "learn/course_summarized_top_features.csv"):
        assert (small_run / rel).is_file(), rel
    tasks = {(r["task"], r["mode"]) for r in read_csv(small_run / "learn/metrics.csv")}
    assert tasks == {("engagement", "summarized"), ("course", "summarized")}
    assert json.loads((small_run / "config.json").read_text())["seed"] == 3


def test_report_rebuilds_partitions(small_run, tmp_path):
    (tmp_path / "act.csv").write_text("student_id,exercises\n" + "".join(
        f"s{i:02d},{i % 3}\n" for i in range(1, 61)))
    out = tmp_path / "rep"
    assert main(["report", "--run-dir", str(small_run), "--activity", str(tmp_path / "act.csv"),
                 "--bin-width", "2", "--range", "-12", "12", "--out", str(out)]) == 0
    parts = {r["partition_a"] for r in read_csv(out / "ztests.csv")}
    assert {"engagement:High", "course:non_dropout", "viewers:Active"} <= parts
    hist = read_csv(out / "ipi_histogram.csv")
    assert len({r["bin_lo"] for r in hist}) == 12
    # same inputs, same bytes as the pipeline's own report for the shared partitions
    assert main(["report", "--run-dir", str(small_run), "--out", str(tmp_path / "rep2")]) == 0
    assert (tmp_path / "rep2" / "ztests.csv").read_bytes() == (small_run / "report" / "ztests.csv").read_bytes()


def test_survive_and_ztest_commands(small_run, tmp_path, capsys):
    out = tmp_path / "haz.csv"
    assert main(["survive", "--person-weeks", str(small_run / "person_weeks.csv"), "--out", str(out)]) == 0
    assert [r["covariate"] for r in read_csv(out)] == ["ipi_z", "rewatch", "vpp"]
    assert main(["ztest", "--table", str(small_run / "metrics.csv"), "--value", "ipi", "--group",
                 "engagement_level", "--a", "High", "--b", "Low", "--out", str(tmp_path / "z.csv")]) == 0
    assert "z=" in capsys.readouterr().out
    assert main(["ztest", "--table", str(small_run / "metrics.csv"), "--value", "nope", "--group",
                 "engagement_level", "--a", "High", "--b", "Low", "--out", str(tmp_path / "z.csv")]) == 1


def test_train_command(small_run, tmp_path):
    out = tmp_path / "learn"
    assert main(["train", "--events", str(small_run / "events.jsonl"), "--meta", str(small_run / "videos.csv"),
                 "--task", "engagement", "--mode", "summarized", "--folds", "3", "--seed", "1", "--out", str(out)]) == 0
    assert (out / "engagement_summarized_model.json").is_file()
    model = json.loads((out / "engagement_summarized_model.json").read_text())
    assert model["seed"] == 1 and model["classes"] == ["High", "Low"]


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "clickipi.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "pipeline" in out.stdout
