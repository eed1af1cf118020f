from __future__ import annotations

import json
import subprocess
import sys

import pytest
import yaml

from spoofwatch.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARSE, main

SCENARIO = {
    "seed": 11,
    "n_vps": 80,
    "letters": ["A", "B", "G"],
    "schedule": {"start": "2020-05-03T10:00:00Z", "n_hours": 2, "spacing_hours": 24},
    "population": [
        {"kind": "overt_proxy", "count": 4, "spoof_server_id": "hosting"},
        {"kind": "overt_injector", "count": 2, "spoof_server_id": "2kom.ru"},
        {"kind": "covert_delayer", "count": 2, "added_delay": 35, "affected_letters": ["A", "B"]},
        {"kind": "timeout_query_lost", "count": 3},
    ],
}


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "scenario.yaml"
    cfg.write_text(yaml.safe_dump(SCENARIO))
    assert main(["simulate", "--config", str(cfg), "--out", str(root / "sim")]) == EXIT_OK
    return root


def _detect(sim, out):
    return main(["detect", "--input", str(sim / "sim"), "--schedule", str(sim / "sim" / "schedule.json"),
                 "--vps", str(sim / "sim" / "vps.csv"), "--workers", "1", "--out", str(out)])


def test_full_pipeline(sim, tmp_path):
    d = tmp_path / "det"
    assert _detect(sim, d) == EXIT_OK
    for name in ("verdicts.jsonl", "clusters.json", "detect_summary.json", "manifest.json"):
        assert (d / name).exists()
    counts = json.loads((d / "detect_summary.json").read_text())["classifications"]
    assert counts["overt_spoofed"] == 6 * 3 * 2
    clusters = json.loads((d / "clusters.json").read_text())
    assert clusters["category_counts"]["ISP"] == 1

    v = tmp_path / "val"
    assert main(["validate", "--input", str(sim / "sim"), "--verdicts", str(d / "verdicts.jsonl"),
                 "--server-log", str(sim / "sim" / "server_log.jsonl"), "--vps", str(sim / "sim" / "vps.csv"),
                 "--out", str(v)]) == EXIT_OK
    val = json.loads((v / "validation.json").read_text())
    assert val["mechanisms"] == {"injection": 4, "proxy": 8}
    assert val["covert_delayers"]["n_delayers"] == 4

    r = tmp_path / "rep"
    assert main(["report", "--verdicts", str(v / "verdicts_refined.jsonl"), "--vps", str(sim / "sim" / "vps.csv"),
                 "--cohort-size", "50", "--out", str(r)]) == EXIT_OK
    header = (r / "summary.csv").read_text().splitlines()[0]
    assert header.startswith("window_start,date,n_active_vps")
    assert len((r / "trend.csv").read_text().splitlines()) == 3

    s = tmp_path / "score"
    assert main(["score", "--verdicts", str(d / "verdicts.jsonl"), "--truth", str(sim / "sim" / "truth.jsonl"),
                 "--out", str(s)]) == EXIT_OK
    assert json.loads((s / "score.json").read_text())["spoof"]["recall"] == 1.0


def test_schedule_inferred(sim, tmp_path):
    base = ["detect", "--input", str(sim / "sim"), "--workers", "1", "--out"]
    assert main(base + [str(tmp_path / "a")]) == EXIT_OK
    assert main(base + [str(tmp_path / "b"), "--schedule", str(sim / "sim" / "schedule.json")]) == EXIT_OK
    assert (tmp_path / "a" / "verdicts.jsonl").read_bytes() == (tmp_path / "b" / "verdicts.jsonl").read_bytes()


def test_parallel_matches_serial(sim, tmp_path):
    args = ["detect", "--input", str(sim / "sim"), "--schedule", str(sim / "sim" / "schedule.json"), "--out"]
    assert main(args + [str(tmp_path / "a"), "--workers", "1"]) == EXIT_OK
    assert main(args + [str(tmp_path / "b"), "--workers", "2"]) == EXIT_OK
    assert (tmp_path / "a" / "verdicts.jsonl").read_bytes() == (tmp_path / "b" / "verdicts.jsonl").read_bytes()


def test_ingest_counts_skips(tmp_path):
    raw = tmp_path / "raw.jsonl"
    good = {"kind": "ping", "vp_id": "v", "letter": "A", "timestamp": 1588500000, "rtt": 4.0}
    raw.write_text(json.dumps(good) + "\n{broken\n")
    assert main(["ingest", str(raw), "--out", str(tmp_path / "o")]) == EXIT_OK
    rep = json.loads((tmp_path / "o" / "ingest_report.json").read_text())
    assert rep[str(raw)]["n_skipped"] == 1
    assert main(["ingest", str(raw), "--strict", "--out", str(tmp_path / "p")]) == EXIT_PARSE


def test_exit_codes(sim, tmp_path):
    assert main(["detect", "--input", str(tmp_path / "missing"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["detect", "--input", str(sim / "sim"), "--floor-ms", "-1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", "--preset", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG
    bad_profile = tmp_path / "p.yaml"
    bad_profile.write_text("letters:\n  A: ['^x$']\n")
    assert main(["detect", "--input", str(sim / "sim"), "--profile", str(bad_profile), "--out", str(tmp_path)]) == EXIT_CONFIG
    junk = tmp_path / "junk"
    junk.mkdir()
    (junk / "dns.jsonl").write_text("nope\nnope\n")
    assert main(["detect", "--input", str(junk), "--out", str(tmp_path / "j")]) == EXIT_PARSE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_CONFIG


def test_unsorted_server_log(sim, tmp_path):
    d = tmp_path / "det"
    assert _detect(sim, d) == EXIT_OK
    lines = (sim / "sim" / "server_log.jsonl").read_text().splitlines()
    bad = tmp_path / "log.jsonl"
    bad.write_text("\n".join(reversed(lines)) + "\n")
    code = main(["validate", "--input", str(sim / "sim"), "--verdicts", str(d / "verdicts.jsonl"),
                 "--server-log", str(bad), "--vps", str(sim / "sim" / "vps.csv"), "--out", str(tmp_path / "v")])
    assert code == EXIT_PARSE


def test_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "spoofwatch.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout
