"""Parse issue-tracker CSV exports into bug reports and resolution durations.

The default column names follow the flat GitBugs/Jira export layout
(``Issue id``, ``Created``, ``Resolved``, ...). Header lookup is exact first,
then case- and whitespace-insensitive, so minor export variations still map.
"""

from __future__ import annotations

import configparser
import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, TextIO

SECONDS_PER_DAY = 86400.0

LOGICAL_FIELDS = ("id", "created", "resolved", "priority", "status", "resolution", "summary")
REQUIRED_FIELDS = ("id", "created", "resolved", "resolution", "summary")

_FALLBACK_FORMATS = (
    "%Y-%m-%dT%H:%M:%S%z",
    "%Y-%m-%dT%H:%M:%S.%f%z",
    "%Y-%m-%d %H:%M:%S%z",
    "%Y-%m-%d %H:%M:%S.%f%z",
    "%d/%b/%y %H:%M",
    "%d/%b/%y %I:%M %p",
    "%d/%b/%Y %H:%M",
)


class IngestError(Exception):
    """Fatal problem with an input file (bad header, unreadable stream)."""


@dataclass(frozen=True)
class SchemaConfig:
    """Logical field -> CSV column name."""

    id: str = "Issue id"
    created: str = "Created"
    resolved: str = "Resolved"
    priority: str = "Priority"
    status: str = "Status"
    resolution: str = "Resolution"
    summary: str = "Summary"

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "SchemaConfig":
        unknown = sorted(set(mapping) - set(LOGICAL_FIELDS))
        if unknown:
            raise IngestError(f"unknown schema keys: {', '.join(unknown)}")
        return cls(**dict(mapping))


def load_schema(path: str | Path) -> SchemaConfig:
    """Read a ``key = value`` schema file (INI or flat TOML style)."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string("[schema]\n" + text)
    except configparser.Error as exc:
        raise IngestError(f"{path}: cannot parse schema file: {exc}") from exc
    mapping: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            mapping[key.strip()] = value.strip().strip("'\"")
    return SchemaConfig.from_mapping(mapping)


@dataclass(frozen=True)
class BugReport:
    id: str
    created: datetime
    resolved: datetime | None = None
    priority: str | None = None
    status: str | None = None
    resolution: str | None = None
    summary: str = ""
    # File line where the record starts; 0 when built by hand.
    row: int = field(default=0, compare=False)
    raw: Mapping[str, str] = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class ResolutionRecord:
    bug_id: str
    created: datetime
    resolution_days: float
    resolved: datetime | None = None


@dataclass(frozen=True)
class RepoSummary:
    project: str
    total_reports: int
    duplicates: int

    @property
    def duplicate_rate_pct(self) -> float:
        if self.total_reports == 0:
            return 0.0
        return round(100.0 * self.duplicates / self.total_reports, 1)


@dataclass(frozen=True)
class Diagnostic:
    source: str
    row: int
    cause: str

    def __str__(self) -> str:
        return f"WARN {self.source}:{self.row}: {self.cause}"


def parse_timestamp(text: str) -> datetime:
    """Parse a tracker timestamp and return it as an aware UTC datetime.

    Naive values are taken to be UTC. Raises ValueError when no accepted
    format matches.
    """
    s = text.strip()
    if not s:
        raise ValueError("empty timestamp")
    candidate = s[:-1] + "+00:00" if s[-1] in "Zz" else s
    try:
        value = datetime.fromisoformat(candidate)
    except ValueError:
        value = None
        for fmt in _FALLBACK_FORMATS:
            try:
                value = datetime.strptime(s, fmt)
                break
            except ValueError:
                continue
        if value is None:
            raise ValueError(f"unrecognised timestamp {s!r}") from None
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def _resolve_header(header: list[str], schema: SchemaConfig) -> dict[str, int]:
    exact = {name: i for i, name in enumerate(header)}
    folded: dict[str, int] = {}
    for i, name in enumerate(header):
        folded.setdefault(name.strip().casefold(), i)
    columns: dict[str, int] = {}
    for logical in LOGICAL_FIELDS:
        wanted = getattr(schema, logical)
        if wanted in exact:
            columns[logical] = exact[wanted]
        elif wanted.strip().casefold() in folded:
            columns[logical] = folded[wanted.strip().casefold()]
    missing = [f"{name} ({getattr(schema, name)!r})" for name in REQUIRED_FIELDS if name not in columns]
    if missing:
        raise IngestError("missing required columns: " + ", ".join(missing))
    return columns


def parse_bug_reports(
    stream: TextIO | str,
    schema: SchemaConfig | None = None,
    source: str = "<stream>",
) -> tuple[list[BugReport], list[Diagnostic]]:
    """Parse a CSV export into bug reports plus per-row diagnostics.

    Every data row yields either a report or a diagnostic, never both and
    never neither. Row numbers are 1-based file lines (the header is line 1).
    """
    schema = schema or SchemaConfig()
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader, None)
    except UnicodeDecodeError as exc:
        raise IngestError(f"{source}: not valid UTF-8: {exc}") from exc
    except csv.Error as exc:
        raise IngestError(f"{source}: cannot read header: {exc}") from exc
    if header is None:
        raise IngestError(f"{source}: empty file, missing header row")
    if header and header[0].startswith("\ufeff"):
        header[0] = header[0][1:]
    try:
        columns = _resolve_header(header, schema)
    except IngestError as exc:
        raise IngestError(f"{source}: {exc}") from None

    reports: list[BugReport] = []
    diagnostics: list[Diagnostic] = []
    next_line = reader.line_num + 1
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except UnicodeDecodeError as exc:
            raise IngestError(f"{source}: not valid UTF-8: {exc}") from exc
        except csv.Error as exc:
            diagnostics.append(Diagnostic(source, next_line, f"malformed CSV: {exc}"))
            next_line = reader.line_num + 1
            continue
        line, next_line = next_line, reader.line_num + 1
        if not row:
            continue

        def cell(logical: str) -> str | None:
            idx = columns.get(logical)
            if idx is None or idx >= len(row):
                return None
            return row[idx]

        bug_id = (cell("id") or "").strip()
        if not bug_id:
            diagnostics.append(Diagnostic(source, line, "empty issue id"))
            continue
        try:
            created = parse_timestamp(cell("created") or "")
        except ValueError as exc:
            diagnostics.append(Diagnostic(source, line, f"bad created timestamp: {exc}"))
            continue
        resolved_text = (cell("resolved") or "").strip()
        try:
            resolved = parse_timestamp(resolved_text) if resolved_text else None
        except ValueError as exc:
            diagnostics.append(Diagnostic(source, line, f"bad resolved timestamp: {exc}"))
            continue

        def optional(logical: str) -> str | None:
            value = (cell(logical) or "").strip()
            return value or None

        reports.append(
            BugReport(
                id=bug_id,
                created=created,
                resolved=resolved,
                priority=optional("priority"),
                status=optional("status"),
                resolution=optional("resolution"),
                summary=cell("summary") or "",
                row=line,
                raw=dict(zip(header, row)),
            )
        )
    return reports, diagnostics


def read_project_csv(
    path: str | Path, schema: SchemaConfig | None = None
) -> tuple[list[BugReport], list[Diagnostic]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8-sig", newline="") as fh:
            return parse_bug_reports(fh, schema, source=str(path))
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from exc


def compute_resolution(
    report: BugReport, diagnostics: list[Diagnostic] | None = None, source: str = "<stream>"
) -> ResolutionRecord | None:
    """Resolution time in fractional days, or None for unresolved bugs.

    A resolved timestamp earlier than the created one is excluded and noted
    in ``diagnostics`` when a list is given.
    """
    if report.resolved is None:
        return None
    seconds = (report.resolved - report.created).total_seconds()
    if seconds < 0:
        if diagnostics is not None:
            diagnostics.append(
                Diagnostic(source, report.row, f"bug {report.id}: resolved before created, excluded")
            )
        return None
    return ResolutionRecord(report.id, report.created, seconds / SECONDS_PER_DAY, report.resolved)


def resolution_records(
    reports: Iterable[BugReport], diagnostics: list[Diagnostic] | None = None, source: str = "<stream>"
) -> list[ResolutionRecord]:
    out = []
    for report in reports:
        record = compute_resolution(report, diagnostics, source)
        if record is not None:
            out.append(record)
    return out


def _marker_value(report: BugReport, column: str) -> str | None:
    if column in LOGICAL_FIELDS:
        return getattr(report, column)
    value = report.raw.get(column)
    if value is None:
        folded = column.strip().casefold()
        for name, cell in report.raw.items():
            if name.strip().casefold() == folded:
                return cell
    return value


def is_duplicate(report: BugReport, column: str = "resolution", literal: str = "Duplicate") -> bool:
    value = _marker_value(report, column)
    return value is not None and value.strip().casefold() == literal.strip().casefold()


def dataset_summary(
    project_name: str,
    reports: Iterable[BugReport],
    duplicate_column: str = "resolution",
    duplicate_literal: str = "Duplicate",
) -> RepoSummary:
    """Total and duplicate counts for one project.

    ``duplicate_column`` is either a logical field name or a raw CSV header.
    """
    total = 0
    dups = 0
    for report in reports:
        total += 1
        dups += is_duplicate(report, duplicate_column, duplicate_literal)
    return RepoSummary(project_name, total, dups)
