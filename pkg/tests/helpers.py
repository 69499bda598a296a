"""Deterministic synthetic data shared by the test modules."""

from __future__ import annotations

import csv
import datetime as dt
import random
from pathlib import Path

HEADER = ["Issue key", "Issue id", "Summary", "Status", "Resolution", "Priority", "Created", "Resolved"]

PLANTED_VOCABULARIES = (
    (
        "flaky", "intermittent", "timeout", "testsuite", "junit", "assertion", "dtest", "harness",
        "nondeterministic", "ci", "jenkins", "retry", "unstable", "racy", "teardown", "fixture",
        "hang", "deadline", "surefire", "mockito",
    ),
    (
        "upgrade", "dependency", "commons", "jackson", "guava", "netty", "maven", "gradle",
        "bump", "cve", "shade", "classpath", "artifact", "pom", "slf4j", "log4j", "protobuf",
        "thrift", "jar", "transitive",
    ),
    (
        "tab", "window", "toolbar", "layout", "scroll", "sidebar", "dialog", "button", "menu",
        "pane", "tooltip", "render", "pixel", "font", "theme", "focus", "cursor", "popup",
        "viewport", "widget",
    ),
)


def planted_corpus(n_docs: int = 300, seed: int = 0, words: tuple[int, int] = (4, 8)):
    """Summaries drawn from disjoint vocabularies; returns ``(summaries, labels)``."""
    rng = random.Random(seed)
    summaries, labels = [], []
    for i in range(n_docs):
        label = i % len(PLANTED_VOCABULARIES)
        vocab = PLANTED_VOCABULARIES[label]
        summaries.append(" ".join(rng.choice(vocab) for _ in range(rng.randint(*words))))
        labels.append(label)
    return summaries, labels


def synthetic_rows(n_rows: int, seed: int = 7, outlier_rate: float = 0.04, dup_rate: float = 0.08,
                   unresolved_rate: float = 0.03):
    rng = random.Random(seed)
    start = dt.datetime(2012, 1, 1)
    fillers = ("in", "when", "on", "the", "after", "for")
    rows = []
    for i in range(n_rows):
        created = start + dt.timedelta(seconds=rng.randrange(0, 10 * 365 * 86400))
        if rng.random() < outlier_rate:
            days = rng.uniform(600, 2500)
            vocab = PLANTED_VOCABULARIES[i % 3]
        else:
            days = rng.lognormvariate(1.5, 1.0)
            vocab = PLANTED_VOCABULARIES[rng.randrange(3)]
        resolved = created + dt.timedelta(days=days)
        words = [rng.choice(vocab) for _ in range(rng.randint(3, 6))]
        words.insert(rng.randrange(len(words) + 1), rng.choice(fillers))
        resolution = "Duplicate" if rng.random() < dup_rate else rng.choice(("Fixed", "Won't Fix", "Invalid"))
        resolved_text = "" if rng.random() < unresolved_rate else resolved.strftime("%Y-%m-%d %H:%M:%S")
        rows.append([
            f"SYN-{i + 1}", str(100000 + i), " ".join(words), "Resolved" if resolved_text else "Open",
            resolution if resolved_text else "", rng.choice(("Major", "Minor", "Critical")),
            created.strftime("%Y-%m-%d %H:%M:%S"), resolved_text,
        ])
    return rows


def write_synthetic_project(path: Path, n_rows: int, seed: int = 7, **kwargs) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        writer.writerows(synthetic_rows(n_rows, seed, **kwargs))
    return path


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def brute_force_inertia(points, k: int) -> float:
    """Exact KMeans optimum by scoring every labelling of the points into k groups."""
    import itertools

    import numpy as np

    x = np.asarray(points, dtype=float)
    n = x.shape[0]
    labels = np.array(list(itertools.product(range(k), repeat=n)))
    sq = np.einsum("ij,ij->i", x, x)
    total = np.zeros(len(labels))
    for j in range(k):
        mask = (labels == j).astype(float)
        counts = mask.sum(axis=1)
        sums = mask @ x
        with np.errstate(invalid="ignore", divide="ignore"):
            between = np.where(counts > 0, np.einsum("ij,ij->i", sums, sums) / counts, 0.0)
        total += mask @ sq - between
    return float(total.min())
