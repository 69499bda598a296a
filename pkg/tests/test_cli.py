import csv
import io
import json
import logging
import subprocess
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

from bugline import cli
from bugline.cli import PROJECT_FILES, main, setup_logging
from helpers import HEADER, tree_bytes, write_synthetic_project

FIXTURES = Path(__file__).parent / "fixtures"
SYNTHETIC = FIXTURES / "synthetic_project.csv"


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def analyzed(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("analyze", "--input", f"Syn={SYNTHETIC}", "--out", out) == 0
    return out


def test_all_artifacts_written(analyzed):
    for name in PROJECT_FILES:
        assert (analyzed / "Syn" / name).stat().st_size > 0
    report = (analyzed / "report.md").read_text()
    assert "| Syn | 600 |" in report
    assert report.count("| Syn | Cluster ") == 3


def test_anomalies_csv_matches_numpy(analyzed):
    durations = {}
    for row in read_csv(SYNTHETIC):
        if row["Resolved"]:
            created = datetime.fromisoformat(row["Created"])
            resolved = datetime.fromisoformat(row["Resolved"])
            durations[row["Issue id"]] = (resolved - created).total_seconds() / 86400
    x = np.array(list(durations.values()))
    z = (x - x.mean()) / x.std()
    q1, q3 = np.percentile(x, [25, 75])
    iqr = q3 - q1
    flagged = (np.abs(z) > 3) | (x < q1 - 1.5 * iqr) | (x > q3 + 1.5 * iqr)
    expected = {bug for bug, f in zip(durations, flagged) if f}

    rows = read_csv(analyzed / "Syn" / "anomalies.csv")
    assert list(rows[0]) == ["bug_id", "resolution_days", "z_score", "z_flag", "iqr_flag", "is_anomaly"]
    assert {r["bug_id"] for r in rows} == expected
    assert all(r["is_anomaly"] == "true" for r in rows)
    for r in rows:
        assert float(r["resolution_days"]) == pytest.approx(durations[r["bug_id"]], rel=1e-5)


def test_cluster_members_are_the_anomalies(analyzed):
    doc = json.loads((analyzed / "Syn" / "clusters.json").read_text())
    members = [b for c in doc["clusters"] for b in c["bug_ids"]]
    anomalous = {r["bug_id"] for r in read_csv(analyzed / "Syn" / "anomalies.csv")}
    assert sorted(members) == sorted(anomalous)
    assert doc["k"] == 3 and doc["seed"] == 42
    assert sum(c["size"] for c in doc["clusters"]) == len(anomalous)


def test_monthly_counts_sum(analyzed):
    rows = read_csv(analyzed / "Syn" / "monthly_counts.csv")
    total = sum(int(r["count"]) for r in rows)
    assert total == len(read_csv(analyzed / "Syn" / "anomalies.csv"))


def write_rows(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        w.writerows(rows)
    return path


def flat_project(path, n=12):
    rows = [
        [f"F-{i}", str(i), "steady state bug", "Resolved", "Fixed", "Major", "2021-01-01 00:00:00", "2021-01-03 00:00:00"]
        for i in range(n)
    ]
    return write_rows(path, rows)


def test_zero_anomaly_project(tmp_path, capsys):
    out = tmp_path / "out"
    assert run("analyze", "--input", f"Flat={flat_project(tmp_path / 'flat.csv')}", "--out", out) == 0
    assert (out / "Flat" / "anomalies.csv").read_text() == "bug_id,resolution_days,z_score,z_flag,iqr_flag,is_anomaly\n"
    assert not (out / "Flat" / "clusters.json").exists()
    report = (out / "report.md").read_text()
    assert "| Flat | 12 | 0 | 0.0 |" in report
    assert "| Flat | - | _clustering skipped: 0 anomalies, fewer than k=3_ |" in report
    assert "WARN Flat: clustering skipped" in capsys.readouterr().err


def test_nonexistent_input_exits_1_without_outputs(tmp_path):
    out = tmp_path / "never"
    assert run("analyze", "--input", f"X={tmp_path / 'nope.csv'}", "--out", out) == 1
    assert not out.exists()


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("analyze", "--bogus")
    assert exc.value.code == 1
    assert run("analyze", "--input", f"S={SYNTHETIC}") == 1  # no --out
    assert run("analyze", "--input", f"S={SYNTHETIC}", "--input", f"S={SYNTHETIC}", "--out", tmp_path) == 1
    assert run("analyze", "--input", f"S={SYNTHETIC}", "--out", tmp_path, "--k", "0") == 1


def test_partial_failure_exits_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("just,some,columns\n1,2,3\n")
    out = tmp_path / "out"
    code = run("analyze", "--input", f"Good={SYNTHETIC}", "--input", f"Bad={bad}", "--out", out)
    assert code == 2
    assert (out / "Good" / "clusters.json").exists()
    assert not (out / "Bad").exists()
    report = (out / "report.md").read_text()
    assert "## Failed projects" in report and "- Bad: failed:" in report


def test_rerun_clears_stale_artifacts(tmp_path):
    out = tmp_path / "out"
    small = write_synthetic_project(tmp_path / "small.csv", 200, seed=3)
    assert run("analyze", "--input", f"A={SYNTHETIC}", "--input", f"B={small}", "--out", out, "--dump-intermediates") == 0
    assert (out / "A" / "tfidf.json").exists() and (out / "B").is_dir()
    assert run("analyze", "--input", f"A={SYNTHETIC}", "--out", out) == 0
    assert not (out / "B").exists()
    assert not (out / "A" / "tfidf.json").exists()
    assert "| B |" not in (out / "report.md").read_text()


def test_dump_intermediates(tmp_path):
    out = tmp_path / "out"
    assert run("analyze", "--input", f"S={SYNTHETIC}", "--out", out, "--dump-intermediates") == 0
    tfidf = json.loads((out / "S" / "tfidf.json").read_text())
    emb = read_csv(out / "S" / "embedding.csv")
    assert len(tfidf["rows"]) == len(emb) == len(read_csv(out / "S" / "anomalies.csv"))


def test_tfidf_cluster_space(tmp_path):
    out = tmp_path / "out"
    assert run("analyze", "--input", f"S={SYNTHETIC}", "--out", out, "--cluster-space", "tfidf") == 0
    assert len(json.loads((out / "S" / "clusters.json").read_text())["clusters"]) == 3


def test_summary_only_prints_table(capsys):
    assert run("summary-only", "--input", f"Fixture={FIXTURES / 'duplicates_fixture.csv'}") == 0
    stdout = capsys.readouterr().out
    assert "| Fixture | 20 | 3 | 15.0 |" in stdout


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "bugline.toml"
    out = tmp_path / "from-config"
    cfg.write_text(f'out = "{out}"\nk = 2\ntop_terms = 4\n[input]\nS = "{SYNTHETIC}"\n')
    assert run("analyze", "--config", cfg, "--k", "4") == 0
    doc = json.loads((out / "S" / "clusters.json").read_text())
    assert doc["k"] == 4
    assert all(len(c["top_terms"]) <= 4 for c in doc["clusters"])
    cfg.write_text("colour = 1\n")
    assert run("analyze", "--config", cfg) == 1


def test_schema_file_renames_columns(tmp_path, capsys):
    src = tmp_path / "renamed.csv"
    text = SYNTHETIC.read_text(encoding="utf-8").split("\n", 1)
    src.write_text(text[0].replace("Issue id", "Bug ID").replace("Summary", "Title") + "\n" + text[1], encoding="utf-8")
    schema = tmp_path / "schema.ini"
    schema.write_text("id = Bug ID\nsummary = Title\n")
    assert run("summary-only", "--input", f"R={src}", "--schema", schema) == 0
    assert "| R | 600 |" in capsys.readouterr().out
    assert run("summary-only", "--input", f"R={src}") == 2


def test_duplicate_column_flags(tmp_path, capsys):
    fixture = FIXTURES / "duplicates_fixture.csv"
    assert run("summary-only", "--input", f"F={fixture}", "--duplicate-literal", "Duplicated") == 0
    assert "| F | 20 | 1 | 5.0 |" in capsys.readouterr().out


def test_bad_rows_warn_with_location(tmp_path, capsys):
    rows = [["K-1", "1", "ok", "Resolved", "Fixed", "Major", "2020-01-01", "2020-01-02"],
            ["K-2", "2", "bad", "Resolved", "Fixed", "Major", "someday", "2020-01-02"]]
    src = write_rows(tmp_path / "w.csv", rows)
    assert run("summary-only", "--input", f"W={src}") == 0
    assert f"WARN {src}:3: bad created timestamp" in capsys.readouterr().err


class FakeTty(io.StringIO):
    def isatty(self):
        return True


def test_color_respects_no_color(monkeypatch):
    stream = FakeTty()
    monkeypatch.delenv("NO_COLOR", raising=False)
    setup_logging(stream=stream)
    cli.log.warning("hello")
    assert "\033[" in stream.getvalue()
    stream = FakeTty()
    monkeypatch.setenv("NO_COLOR", "1")
    setup_logging(stream=stream)
    cli.log.warning("hello")
    assert stream.getvalue() == "WARN hello\n"
    cli.log.handlers[:] = []
    cli.log.setLevel(logging.WARNING)


def test_module_entry_point(tmp_path):
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "bugline", "analyze", "--input", f"S={SYNTHETIC}", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert sorted(p.name for p in (out / "S").iterdir()) == sorted(PROJECT_FILES)
    assert proc.stdout == ""


def test_two_runs_identical(tmp_path, analyzed):
    out = tmp_path / "again"
    assert run("analyze", "--input", f"Syn={SYNTHETIC}", "--out", out) == 0
    assert tree_bytes(out) == tree_bytes(analyzed)
