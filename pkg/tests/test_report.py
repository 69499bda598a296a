import xml.etree.ElementTree as ET
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bugline.anomaly import detect_anomalies
from bugline.cluster import ClusterTheme, Clustering
from bugline.ingest import RepoSummary, ResolutionRecord
from bugline.report import (
    ReportError,
    nice_ticks,
    render_cluster_scatter,
    render_monthly_bars,
    render_resolution_scatter,
    summary_table,
    write_report,
    write_text_atomic,
)

SVG = "{http://www.w3.org/2000/svg}"
T0 = datetime(2019, 3, 1, tzinfo=timezone.utc)


def by_class(svg_text, tag, cls):
    root = ET.fromstring(svg_text)
    return [e for e in root.iter(SVG + tag) if cls in e.get("class", "").split()]


def sample_records():
    days = [1, 2, 3, 2, 1, 4, 3, 2, 5, 700]
    return [ResolutionRecord(f"B-{i}", T0 + timedelta(days=37 * i), float(d)) for i, d in enumerate(days)]


def test_resolution_scatter_marks_anomalies():
    recs = sample_records()
    svg = render_resolution_scatter(recs, detect_anomalies(recs))
    assert len(by_class(svg, "circle", "point")) == 10
    red = by_class(svg, "circle", "anomaly")
    assert [e.get("data-bug") for e in red] == ["B-9"]
    assert len(by_class(svg, "rect", "legend-swatch")) == 2


def test_resolution_scatter_without_flags_and_empty():
    svg = render_resolution_scatter(sample_records(), None)
    assert by_class(svg, "circle", "anomaly") == []
    empty = render_resolution_scatter([], None)
    assert by_class(empty, "circle", "point") == []
    assert "no data" in empty


def test_short_time_span_uses_day_ticks():
    recs = [ResolutionRecord(str(i), T0 + timedelta(days=i), 1.0 + i) for i in range(5)]
    ET.fromstring(render_resolution_scatter(recs, None))


def test_monthly_bars_one_per_month():
    series = [("2020-01", 2), ("2020-02", 0), ("2020-03", 5)]
    bars = by_class(render_monthly_bars(series), "rect", "bar")
    assert [(b.get("data-month"), int(b.get("data-count"))) for b in bars] == series
    assert float(bars[1].get("height")) == 0.0
    assert "no data" in render_monthly_bars([])


def test_cluster_scatter_colours_and_legend():
    emb = np.array([[0.0, 0.0], [1.0, 0.5], [-1.0, 2.0], [0.3, -0.4]])
    c = Clustering(np.array([0, 1, 2, 1]), np.zeros((3, 2)), 0.0, 1)
    svg = render_cluster_scatter(emb, c)
    assert len(by_class(svg, "circle", "point")) == 4
    assert len(by_class(svg, "circle", "cluster-1")) == 2
    assert len(by_class(svg, "g", "legend-entry")) == 3
    with pytest.raises(ReportError):
        render_cluster_scatter(emb[:3], c)


def test_rendering_is_deterministic():
    recs = sample_records()
    assert render_resolution_scatter(recs, detect_anomalies(recs)) == render_resolution_scatter(
        list(recs), detect_anomalies(recs)
    )


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_nice_ticks_bracket_and_bound(lo, hi):
    ticks = nice_ticks(lo, hi)
    assert 2 <= len(ticks) <= 10
    assert ticks[0] <= min(lo, hi) and ticks[-1] >= max(lo, hi)
    assert ticks == sorted(ticks)


@pytest.mark.parametrize("lo, hi", [(0.0, 5e-324), (5e-324, -9.0), (0.0, 3.5e-46), (1e6, 1e6 + 1e-7), (0.0, 0.7000000000000001)])
def test_nice_ticks_tiny_spans(lo, hi):
    ticks = nice_ticks(lo, hi)
    assert 2 <= len(ticks) <= 10
    assert ticks[0] <= min(lo, hi) and ticks[-1] >= max(lo, hi)


def test_nice_ticks_integer_step():
    assert nice_ticks(0, 3, min_step=1.0) == [0, 1, 2, 3]
    assert nice_ticks(0, 100) == [0, 20, 40, 60, 80, 100]
    assert nice_ticks(0.1, 0.93) == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


def test_summary_table_rows():
    table = summary_table([RepoSummary("Cassandra", 4612, 300), RepoSummary("Thunderbird", 15192, 4200)])
    lines = table.splitlines()
    assert lines[0] == "| Project | Total Reports | Duplicates | Duplicate Rate (%) |"
    assert lines[2] == "| Cassandra | 4612 | 300 | 6.5 |"
    assert lines[3] == "| Thunderbird | 15192 | 4200 | 27.6 |"


def test_report_with_skipped_project():
    summaries = [RepoSummary("Alpha", 10, 1), RepoSummary("Beta", 4, 0)]
    themes = {
        "Alpha": [ClusterTheme(0, 3, (("flaky", 0.5), ("junit", 0.25))), ClusterTheme(1, 2, ())],
        "Beta": None,
    }
    text = write_report(summaries, themes, notes={"Beta": "only 1 anomalies, fewer than k=3"},
                        anomaly_counts={"Alpha": {"resolved": 9, "z": 1, "iqr": 2, "anomalies": 2}})
    assert "| Alpha | Cluster 0 | flaky, junit |" in text
    assert "| Alpha | Cluster 1 |  |" in text
    assert "| Beta | - | _only 1 anomalies, fewer than k=3_ |" in text
    assert "| Alpha | 9 | 1 | 2 | 2 |" in text
    assert "| Alpha | 10 | 1 | 10.0 |" in text


def test_pipe_in_project_name_is_escaped():
    assert "| a\\|b | 1 | 0 | 0.0 |" in summary_table([RepoSummary("a|b", 1, 0)])


def test_atomic_write(tmp_path):
    target = tmp_path / "deep" / "out.txt"
    write_text_atomic(target, "one\n")
    write_text_atomic(target, "two\n")
    assert target.read_text() == "two\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]
