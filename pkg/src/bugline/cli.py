"""Command-line entry point: ``bugline analyze`` and ``bugline summary-only``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import shutil
import sys
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

from .anomaly import (
    ANOMALY_CSV_COLUMNS,
    AnomalyConfig,
    anomaly_rows,
    bucket_timestamps,
    detect_anomalies,
    monthly_counts,
)
from .cluster import ClusterError, KMeansConfig, cluster_top_terms, clusters_json, kmeans
from .ingest import (
    Diagnostic,
    IngestError,
    RepoSummary,
    SchemaConfig,
    compute_resolution,
    dataset_summary,
    load_schema,
    read_project_csv,
)
from .reduce import ReduceError, pca_fit, pca_transform
from .report import (
    render_cluster_scatter,
    render_monthly_bars,
    render_resolution_scatter,
    summary_table,
    write_report,
    write_text_atomic,
)
from .textvec import TextVecError, vectorize

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

log = logging.getLogger("bugline")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2

MANIFEST = ".bugline-manifest.json"
PROJECT_FILES = (
    "anomalies.csv",
    "clusters.json",
    "monthly_counts.csv",
    "resolution_scatter.svg",
    "monthly_anomalies.svg",
    "cluster_scatter.svg",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    inputs: tuple[tuple[str, Path], ...]
    out_dir: Path | None
    z_threshold: float = 3.0
    iqr_multiplier: float = 1.5
    k: int = 3
    seed: int = 42
    top_terms: int = 10
    cluster_space: str = "pca2d"
    bucket_key: str = "created"
    duplicate_column: str = "resolution"
    duplicate_literal: str = "Duplicate"
    schema: SchemaConfig = field(default_factory=SchemaConfig)
    dump_intermediates: bool = False

    def validate(self) -> None:
        if self.out_dir is None:
            raise ConfigError("--out is required")
        if not self.inputs:
            raise ConfigError("at least one --input is required")
        names = [name for name, _ in self.inputs]
        if len(set(names)) != len(names):
            raise ConfigError("project names must be unique")
        for name, path in self.inputs:
            if not name or name in (".", "..") or "/" in name or "\\" in name or name.startswith("."):
                raise ConfigError(f"invalid project name {name!r}")
            if not Path(path).is_file():
                raise ConfigError(f"input file not found: {path}")
        if not self.z_threshold > 0:
            raise ConfigError("--z-threshold must be positive")
        if not self.iqr_multiplier > 0:
            raise ConfigError("--iqr-multiplier must be positive")
        if self.k < 1:
            raise ConfigError("--k must be at least 1")
        if self.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if self.top_terms < 0:
            raise ConfigError("--top-terms must be non-negative")
        if self.cluster_space not in ("pca2d", "tfidf"):
            raise ConfigError("--cluster-space must be pca2d or tfidf")
        if self.bucket_key not in ("created", "resolved"):
            raise ConfigError("--bucket-key must be created or resolved")
        if self.out_dir.exists() and not self.out_dir.is_dir():
            raise ConfigError(f"output path is not a directory: {self.out_dir}")


@dataclass
class ProjectResult:
    name: str
    summary: RepoSummary | None = None
    themes: list | None = None
    note: str | None = None
    counts: dict | None = None
    failed: bool = False


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _warn_diagnostics(diagnostics: Sequence[Diagnostic]) -> None:
    for d in diagnostics:
        log.warning("%s:%d: %s", d.source, d.row, d.cause)


def analyze_project(name: str, path: Path, config: PipelineConfig) -> ProjectResult:
    result = ProjectResult(name)
    try:
        reports, diagnostics = read_project_csv(path, config.schema)
    except IngestError as exc:
        log.error("%s: %s", name, exc)
        result.failed = True
        result.note = f"failed: {exc}"
        return result
    _warn_diagnostics(diagnostics)
    result.summary = dataset_summary(name, reports, config.duplicate_column, config.duplicate_literal)

    out = config.out_dir / name
    out.mkdir(parents=True, exist_ok=True)

    quality: list[Diagnostic] = []
    records, summaries = [], []
    for report in reports:
        record = compute_resolution(report, quality, source=str(path))
        if record is not None:
            records.append(record)
            summaries.append(report.summary)
    _warn_diagnostics(quality)
    log.info("%s: %d reports, %d resolved", name, len(reports), len(records))

    if not records:
        log.warning("%s: no resolved bugs, anomaly detection skipped", name)
        result.note = "no resolved bugs"
        write_text_atomic(out / "anomalies.csv", _csv_text(ANOMALY_CSV_COLUMNS, []))
        write_text_atomic(out / "monthly_counts.csv", _csv_text(("month", "count"), []))
        write_text_atomic(out / "resolution_scatter.svg", render_resolution_scatter([], None, title=f"Bug resolution times in {name}"))
        write_text_atomic(out / "monthly_anomalies.svg", render_monthly_bars([], title=f"Monthly anomaly counts in {name}"))
        return result

    anomalies = detect_anomalies(records, AnomalyConfig(config.z_threshold, config.iqr_multiplier))
    result.counts = anomalies.counts()
    series = monthly_counts(anomalies, bucket_timestamps(records, config.bucket_key))
    write_text_atomic(out / "anomalies.csv", _csv_text(ANOMALY_CSV_COLUMNS, anomaly_rows(anomalies)))
    write_text_atomic(out / "monthly_counts.csv", _csv_text(("month", "count"), series))
    write_text_atomic(
        out / "resolution_scatter.svg",
        render_resolution_scatter(records, anomalies, title=f"Bug resolution times in {name} (anomalies in red)"),
    )
    write_text_atomic(out / "monthly_anomalies.svg", render_monthly_bars(series, title=f"Monthly anomaly counts in {name}"))
    log.info(
        "%s: %d anomalies (z=%d, iqr=%d)",
        name,
        result.counts["anomalies"],
        result.counts["z"],
        result.counts["iqr"],
    )

    ids = [f.bug_id for f in anomalies.flags if f.is_anomaly]
    texts = [s for f, s in zip(anomalies.flags, summaries) if f.is_anomaly]
    if len(ids) < config.k:
        result.note = f"clustering skipped: {len(ids)} anomalies, fewer than k={config.k}"
        log.warning("%s: %s", name, result.note)
        return result

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            _, matrix = vectorize(texts)
            model = pca_fit(matrix, 2)
        for w in caught:
            log.warning("%s: %s", name, w.message)
        embedding = pca_transform(model, matrix)
        points = embedding if config.cluster_space == "pca2d" else matrix.to_dense()
        clustering = kmeans(points, KMeansConfig(k=config.k, seed=config.seed))
    except (TextVecError, ReduceError, ClusterError) as exc:
        result.note = f"clustering skipped: {exc}"
        log.warning("%s: %s", name, result.note)
        return result

    themes = cluster_top_terms(matrix, clustering, config.top_terms)
    result.themes = themes
    payload = clusters_json(clustering, themes, ids, config.seed)
    write_text_atomic(out / "clusters.json", json.dumps(payload, indent=2) + "\n")
    write_text_atomic(
        out / "cluster_scatter.svg",
        render_cluster_scatter(embedding, clustering, title=f"TF-IDF clustering of anomalous summaries in {name}"),
    )
    if config.dump_intermediates:
        write_text_atomic(out / "tfidf.json", json.dumps(matrix.to_json()) + "\n")
        write_text_atomic(
            out / "embedding.csv",
            _csv_text(("bug_id", "x", "y"), [(b, repr(float(x)), repr(float(y))) for b, (x, y) in zip(ids, embedding)]),
        )
    return result


def _clear_previous(config: PipelineConfig) -> None:
    """Remove artifacts from an earlier run so outputs never mix."""
    stale = {name for name, _ in config.inputs}
    manifest = config.out_dir / MANIFEST
    if manifest.is_file():
        try:
            stale.update(json.loads(manifest.read_text(encoding="utf-8")).get("projects", []))
        except (OSError, ValueError):
            log.warning("ignoring unreadable %s", manifest)
    for name in sorted(stale):
        target = config.out_dir / name
        if target.is_dir() and name not in (".", "..") and "/" not in name:
            shutil.rmtree(target)
    for leftover in ("report.md",):
        (config.out_dir / leftover).unlink(missing_ok=True)


def run_pipeline(config: PipelineConfig) -> int:
    try:
        config.validate()
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    try:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        _clear_previous(config)
    except OSError as exc:
        log.error("cannot prepare output directory %s: %s", config.out_dir, exc)
        return EXIT_CONFIG

    results = [analyze_project(name, Path(path), config) for name, path in config.inputs]

    ok = [r for r in results if not r.failed]
    failed = [r for r in results if r.failed]
    text = write_report(
        [r.summary for r in ok],
        {r.name: r.themes for r in ok},
        notes={r.name: r.note for r in ok if r.note},
        anomaly_counts={r.name: r.counts for r in ok if r.counts},
    )
    if failed:
        text += "\n## Failed projects\n\n" + "".join(f"- {r.name}: {r.note}\n" for r in failed)
    write_text_atomic(config.out_dir / "report.md", text)
    manifest = {"projects": [r.name for r in ok]}
    write_text_atomic(config.out_dir / MANIFEST, json.dumps(manifest, indent=2) + "\n")
    return EXIT_PARTIAL if failed else EXIT_OK


class _Formatter(logging.Formatter):
    LEVELS = {"WARNING": "WARN", "CRITICAL": "ERROR"}
    COLORS = {"WARN": "\033[33m", "ERROR": "\033[31m"}

    def __init__(self, color: bool):
        super().__init__()
        self.color = color

    def format(self, record: logging.LogRecord) -> str:
        level = self.LEVELS.get(record.levelname, record.levelname)
        if self.color and level in self.COLORS:
            level = f"{self.COLORS[level]}{level}\033[0m"
        return f"{level} {record.getMessage()}"


def setup_logging(verbose: bool = False, stream=None) -> None:
    stream = stream or sys.stderr
    color = "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()
    handler = logging.StreamHandler(stream)
    handler.setFormatter(_Formatter(color))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if verbose else logging.WARNING)
    log.propagate = False


def _parse_input(text: str) -> tuple[str, Path]:
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name, Path(path)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", action="append", type=_parse_input, metavar="NAME=PATH", help="project CSV (repeatable)")
    p.add_argument("--duplicate-column", help="column marking duplicates (default: resolution)")
    p.add_argument("--duplicate-literal", help='value marking a duplicate (default: "Duplicate")')
    p.add_argument("--schema", type=Path, help="key=value file mapping logical fields to CSV columns")
    p.add_argument("--config", type=Path, help="TOML file with default option values; flags win")
    p.add_argument("-v", "--verbose", action="store_true")


class _Parser(argparse.ArgumentParser):
    # Usage errors are configuration errors; 2 is reserved for partial failure.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="bugline", description="Find anomalously long bug resolution times and cluster their themes."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="run the full pipeline")
    _add_common(analyze)
    analyze.add_argument("--out", type=Path, help="output directory")
    analyze.add_argument("--z-threshold", type=float)
    analyze.add_argument("--iqr-multiplier", type=float)
    analyze.add_argument("--k", type=int)
    analyze.add_argument("--seed", type=int)
    analyze.add_argument("--top-terms", type=int)
    analyze.add_argument("--cluster-space", choices=("pca2d", "tfidf"))
    analyze.add_argument("--bucket-key", choices=("created", "resolved"))
    analyze.add_argument("--dump-intermediates", action="store_true", default=None, help="also write tfidf.json and embedding.csv")

    summary = sub.add_parser("summary-only", help="print the per-project report/duplicate table")
    _add_common(summary)
    return parser


_CONFIG_KEYS = {f.name for f in fields(PipelineConfig)} - {"inputs", "schema"} | {"out", "input"}


def _load_config_file(path: Path) -> dict:
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    unknown = sorted(set(k.replace("-", "_") for k in data) - {k.replace("-", "_") for k in _CONFIG_KEYS})
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {', '.join(unknown)}")
    return {k.replace("-", "_"): v for k, v in data.items()}


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    file_values = _load_config_file(args.config) if args.config else {}
    merged: dict = {}
    for key, value in file_values.items():
        if key == "input":
            if not isinstance(value, dict):
                raise ConfigError("config 'input' must be a table of name = path")
            merged["inputs"] = tuple((str(n), Path(p)) for n, p in value.items())
        elif key == "out":
            merged["out_dir"] = Path(value)
        else:
            merged[key] = value
    if args.input:
        merged["inputs"] = tuple(args.input)
    for key in (
        "z_threshold",
        "iqr_multiplier",
        "k",
        "seed",
        "top_terms",
        "cluster_space",
        "bucket_key",
        "duplicate_column",
        "duplicate_literal",
        "dump_intermediates",
    ):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if getattr(args, "out", None) is not None:
        merged["out_dir"] = args.out
    if args.schema is not None:
        try:
            merged["schema"] = load_schema(args.schema)
        except (OSError, IngestError) as exc:
            raise ConfigError(f"bad schema file: {exc}") from exc
    merged.setdefault("inputs", ())
    merged.setdefault("out_dir", None)
    try:
        return PipelineConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def summary_only(config: PipelineConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        config = replace(config, out_dir=Path("."))
        config.validate()
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    summaries, failed = [], 0
    for name, path in config.inputs:
        try:
            reports, diagnostics = read_project_csv(path, config.schema)
        except IngestError as exc:
            log.error("%s: %s", name, exc)
            failed += 1
            continue
        _warn_diagnostics(diagnostics)
        summaries.append(dataset_summary(name, reports, config.duplicate_column, config.duplicate_literal))
    stdout.write(summary_table(summaries))
    return EXIT_PARTIAL if failed else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    if args.command == "summary-only":
        return summary_only(config)
    return run_pipeline(config)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
