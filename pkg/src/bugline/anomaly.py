"""Z-score and IQR outlier flags on resolution times, plus monthly rollups."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

from .ingest import ResolutionRecord


class AnomalyError(ValueError):
    pass


@dataclass(frozen=True)
class AnomalyConfig:
    z_threshold: float = 3.0
    iqr_multiplier: float = 1.5

    def __post_init__(self) -> None:
        if not self.z_threshold > 0:
            raise ValueError(f"z_threshold must be positive, got {self.z_threshold}")
        if not self.iqr_multiplier > 0:
            raise ValueError(f"iqr_multiplier must be positive, got {self.iqr_multiplier}")


@dataclass(frozen=True)
class DistributionStats:
    mean: float
    std: float  # population
    q1: float
    median: float
    q3: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    def fences(self, multiplier: float) -> tuple[float, float]:
        return self.q1 - multiplier * self.iqr, self.q3 + multiplier * self.iqr


def quantile(sorted_values: Sequence[float], p: float) -> float:
    """Linear-interpolation quantile at position ``p * (n - 1)`` (type 7)."""
    n = len(sorted_values)
    h = p * (n - 1)
    lo = math.floor(h)
    if lo >= n - 1:
        return float(sorted_values[-1])
    t = h - lo
    a, b = float(sorted_values[lo]), float(sorted_values[lo + 1])
    # Interpolating from the nearer end keeps the result inside [a, b].
    if t < 0.5:
        return a + (b - a) * t
    return b - (b - a) * (1.0 - t)


def distribution_stats(durations: Iterable[float]) -> DistributionStats:
    values = sorted(float(x) for x in durations)
    n = len(values)
    if n == 0:
        raise AnomalyError("no resolved bugs")
    mean = math.fsum(values) / n
    var = math.fsum((x - mean) ** 2 for x in values) / n
    return DistributionStats(
        mean=mean,
        std=math.sqrt(var),
        q1=quantile(values, 0.25),
        median=quantile(values, 0.5),
        q3=quantile(values, 0.75),
    )


def _z(x: float, stats: DistributionStats) -> float:
    if stats.std == 0:
        return 0.0
    return (x - stats.mean) / stats.std


def zscore_flags(
    durations: Mapping[str, float], stats: DistributionStats, threshold: float = 3.0
) -> dict[str, tuple[float, bool]]:
    """Per-bug ``(z_score, |z| > threshold)``. Zero spread gives z = 0 everywhere."""
    out = {}
    for bug_id, x in durations.items():
        z = _z(x, stats)
        out[bug_id] = (z, abs(z) > threshold)
    return out


def iqr_flags(
    durations: Mapping[str, float], stats: DistributionStats, multiplier: float = 1.5
) -> dict[str, bool]:
    """Per-bug flag for values strictly outside the Tukey fences."""
    low, high = stats.fences(multiplier)
    return {bug_id: (x < low or x > high) for bug_id, x in durations.items()}


@dataclass(frozen=True)
class BugFlags:
    bug_id: str
    resolution_days: float
    z_score: float
    z_flag: bool
    iqr_flag: bool

    @property
    def is_anomaly(self) -> bool:
        return self.z_flag or self.iqr_flag


@dataclass(frozen=True)
class AnomalySet:
    stats: DistributionStats
    config: AnomalyConfig
    flags: tuple[BugFlags, ...]  # same order as the input records

    @property
    def anomalies(self) -> list[BugFlags]:
        return [f for f in self.flags if f.is_anomaly]

    @property
    def anomalous_ids(self) -> list[str]:
        return [f.bug_id for f in self.flags if f.is_anomaly]

    def counts(self) -> dict[str, int]:
        return {
            "resolved": len(self.flags),
            "z": sum(f.z_flag for f in self.flags),
            "iqr": sum(f.iqr_flag for f in self.flags),
            "anomalies": sum(f.is_anomaly for f in self.flags),
        }


def detect_anomalies(
    records: Sequence[ResolutionRecord], config: AnomalyConfig | None = None
) -> AnomalySet:
    config = config or AnomalyConfig()
    stats = distribution_stats(r.resolution_days for r in records)
    low, high = stats.fences(config.iqr_multiplier)
    flags = []
    for r in records:
        x = r.resolution_days
        z = _z(x, stats)
        flags.append(
            BugFlags(
                bug_id=r.bug_id,
                resolution_days=x,
                z_score=z,
                z_flag=abs(z) > config.z_threshold,
                iqr_flag=x < low or x > high,
            )
        )
    return AnomalySet(stats, config, tuple(flags))


def bucket_timestamps(records: Iterable[ResolutionRecord], key: str = "created") -> dict[str, datetime]:
    """bug_id -> timestamp used for monthly bucketing (``created`` or ``resolved``)."""
    if key not in ("created", "resolved"):
        raise ValueError(f"unknown bucket key {key!r}")
    out = {}
    for r in records:
        ts = r.created if key == "created" else r.resolved
        if ts is not None:
            out[r.bug_id] = ts
    return out


def _month_index(ts: datetime) -> int:
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc)
    return ts.year * 12 + ts.month - 1


def monthly_counts(anomalies: AnomalySet, timestamps: Mapping[str, datetime]) -> list[tuple[str, int]]:
    """Zero-filled ``[(YYYY-MM, count), ...]`` over the span of anomalous bugs."""
    buckets: dict[int, int] = {}
    for flag in anomalies.anomalies:
        idx = _month_index(timestamps[flag.bug_id])
        buckets[idx] = buckets.get(idx, 0) + 1
    if not buckets:
        return []
    first, last = min(buckets), max(buckets)
    return [(f"{i // 12:04d}-{i % 12 + 1:02d}", buckets.get(i, 0)) for i in range(first, last + 1)]


def format_real(x: float) -> str:
    """Six significant digits, as written to ``anomalies.csv``."""
    return f"{x:.6g}"


ANOMALY_CSV_COLUMNS = ("bug_id", "resolution_days", "z_score", "z_flag", "iqr_flag", "is_anomaly")


def anomaly_rows(anomalies: AnomalySet) -> list[list[str]]:
    """CSV rows (without header) for the anomalous bugs only."""
    def b(v: bool) -> str:
        return "true" if v else "false"

    return [
        [f.bug_id, format_real(f.resolution_days), format_real(f.z_score), b(f.z_flag), b(f.iqr_flag), b(f.is_anomaly)]
        for f in anomalies.anomalies
    ]
