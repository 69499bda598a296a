"""Tokenization and TF-IDF document-term matrices for bug summaries."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .stopwords import ENGLISH_STOPWORDS

MIN_TOKEN_LENGTH = 2

# Runs of Unicode letters/digits; everything else (incl. "_" and "'") separates.
_WORD = re.compile(r"[^\W_]+")


class TextVecError(ValueError):
    pass


def tokenize(summary: str, stopwords: frozenset[str] = ENGLISH_STOPWORDS) -> list[str]:
    """Case-folded alphanumeric runs of length >= 2, minus stopwords.

    >>> tokenize("doesn't open")
    ['doesn', 'open']
    """
    return [
        tok
        for tok in _WORD.findall(summary.casefold())
        if len(tok) >= MIN_TOKEN_LENGTH and tok not in stopwords
    ]


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    df: tuple[int, ...]
    n_docs: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self) -> int:
        return len(self.terms)

    def index(self, term: str) -> int | None:
        return self._index.get(term)

    def idf(self, col: int) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df[col])) + 1.0


def build_vocabulary(corpus: Sequence[Sequence[str]]) -> Vocabulary:
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(doc))
    if not df:
        raise TextVecError("empty vocabulary")
    terms = tuple(sorted(df))
    return Vocabulary(terms, tuple(df[t] for t in terms), len(corpus))


@dataclass(frozen=True)
class DocTermMatrix:
    vocabulary: Vocabulary
    # One tuple of (column, weight) pairs per document, columns ascending.
    rows: tuple[tuple[tuple[int, float], ...], ...]

    @property
    def n_docs(self) -> int:
        return len(self.rows)

    @property
    def n_terms(self) -> int:
        return len(self.vocabulary)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_docs, self.n_terms))
        for i, row in enumerate(self.rows):
            for col, w in row:
                out[i, col] = w
        return out

    def to_json(self) -> dict:
        return {
            "terms": list(self.vocabulary.terms),
            "rows": [[[col, w] for col, w in row] for row in self.rows],
        }


def tfidf_matrix(corpus: Sequence[Sequence[str]], vocab: Vocabulary) -> DocTermMatrix:
    """Raw-count tf times smoothed idf, each non-empty row scaled to unit L2 norm.

    Tokens missing from ``vocab`` are ignored; empty documents stay as empty rows.
    """
    idf = [vocab.idf(c) for c in range(len(vocab))]
    rows = []
    for doc in corpus:
        counts: Counter[int] = Counter()
        for tok in doc:
            col = vocab.index(tok)
            if col is not None:
                counts[col] += 1
        cols = sorted(counts)
        weights = [counts[c] * idf[c] for c in cols]
        norm = math.sqrt(math.fsum(w * w for w in weights))
        rows.append(tuple((c, w / norm) for c, w in zip(cols, weights)))
    return DocTermMatrix(vocab, tuple(rows))


def vectorize(summaries: Sequence[str]) -> tuple[list[list[str]], DocTermMatrix]:
    """Tokenize summaries and build their TF-IDF matrix in one go."""
    corpus = [tokenize(s) for s in summaries]
    return corpus, tfidf_matrix(corpus, build_vocabulary(corpus))
