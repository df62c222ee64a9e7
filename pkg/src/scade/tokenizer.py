"""1-gram / 2-gram tokenization, corpus statistics and sparse count vectors."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import ConsistencyError, DataError, PayloadError
from .ingest import RESERVED_CHARS, PayloadItem

BIGRAM_SEP, FIELD_PAIR_SEP = RESERVED_CHARS

GRAM_MODES = ("unigram", "bigram", "both")

_ASCII_WS = str.maketrans("\t\n\r\f\v", "     ")

MODEL_FORMAT = "scade-corpus-model"
MODEL_VERSION = 1


@dataclass
class TokenizedDoc:
    event_ref: str
    token_counts: Counter
    length: int


def tokenize(payload: PayloadItem, mode: str = "unigram", cross_field_pairs: bool = False) -> TokenizedDoc:
    """Split payload text on whitespace and count 1-grams, adjacent 2-grams, or both.

    With ``cross_field_pairs`` every unordered pair of attribute values is
    emitted as an extra 2-gram token (joined with a distinct separator so it
    never collides with an adjacent pair).
    """
    if mode not in GRAM_MODES:
        raise ValueError(f"unknown gram mode {mode!r}")
    # ASCII whitespace only; other unicode spaces stay inside tokens
    terms = [t for t in payload.text.translate(_ASCII_WS).split(" ") if t]
    if not terms:
        raise PayloadError(f"payload {payload.event_ref} has empty text")
    counts: Counter = Counter()
    if mode in ("unigram", "both"):
        counts.update(terms)
    if mode in ("bigram", "both"):
        counts.update(a + BIGRAM_SEP + b for a, b in zip(terms, terms[1:]))
        if cross_field_pairs:
            counts.update(a + FIELD_PAIR_SEP + b for a, b in combinations(payload.parts, 2))
    return TokenizedDoc(payload.event_ref, counts, sum(counts.values()))


@dataclass
class CorpusModel:
    """Vocabulary plus the corpus statistics both scoring models need.

    ``doc_frequency`` is n(t), the number of documents containing t (this is
    also the "global frequency" used inside the Log Entropy logarithm).
    ``term_frequency`` is the corpus-wide occurrence total sum_d f(t, d).
    Both are arrays aligned with ``vocabulary``.
    """

    doc_count: int
    total_length: int
    vocabulary: list[str]
    doc_frequency: np.ndarray
    term_frequency: np.ndarray
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.doc_frequency = np.asarray(self.doc_frequency, dtype=np.int64)
        self.term_frequency = np.asarray(self.term_frequency, dtype=np.int64)
        self.index = {tok: i for i, tok in enumerate(self.vocabulary)}
        if len(self.index) != len(self.vocabulary):
            raise ConsistencyError("vocabulary contains duplicate tokens")

    @property
    def avg_doc_length(self) -> float:
        return self.total_length / self.doc_count

    @property
    def global_term_frequency(self) -> np.ndarray:
        return self.doc_frequency

    def __len__(self):
        return len(self.vocabulary)

    def df(self, token: str) -> int:
        return int(self.doc_frequency[self.index[token]])

    def tf(self, token: str) -> int:
        return int(self.term_frequency[self.index[token]])

    def merge(self, other: "CorpusModel") -> "CorpusModel":
        """Combine two partial models built over disjoint document sets."""
        df = Counter(dict(zip(self.vocabulary, self.doc_frequency.tolist())))
        tf = Counter(dict(zip(self.vocabulary, self.term_frequency.tolist())))
        df.update(dict(zip(other.vocabulary, other.doc_frequency.tolist())))
        tf.update(dict(zip(other.vocabulary, other.term_frequency.tolist())))
        return _from_counters(self.doc_count + other.doc_count, self.total_length + other.total_length, df, tf)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "doc_count": self.doc_count,
            "total_length": self.total_length,
            "avg_doc_length": self.avg_doc_length,
            "vocabulary": self.vocabulary,
            "doc_frequency": self.doc_frequency.tolist(),
            "term_frequency": self.term_frequency.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusModel":
        if data.get("format") != MODEL_FORMAT or data.get("version") != MODEL_VERSION:
            raise DataError("not a corpus model artifact (or unsupported version)")
        model = cls(data["doc_count"], data["total_length"], data["vocabulary"], data["doc_frequency"], data["term_frequency"])
        if model.avg_doc_length != data["avg_doc_length"]:
            raise ConsistencyError("stored avg_doc_length disagrees with total_length / doc_count")
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False))

    @classmethod
    def load(cls, path: str | Path) -> "CorpusModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _from_counters(doc_count: int, total_length: int, df: Counter, tf: Counter) -> CorpusModel:
    vocab = sorted(df)
    return CorpusModel(
        doc_count=doc_count,
        total_length=total_length,
        vocabulary=vocab,
        doc_frequency=np.fromiter((df[t] for t in vocab), dtype=np.int64, count=len(vocab)),
        term_frequency=np.fromiter((tf[t] for t in vocab), dtype=np.int64, count=len(vocab)),
    )


def build_corpus_model(docs: Iterable[TokenizedDoc]) -> CorpusModel:
    df: Counter = Counter()
    tf: Counter = Counter()
    n = 0
    total = 0
    for doc in docs:
        n += 1
        total += doc.length
        df.update(doc.token_counts.keys())
        tf.update(doc.token_counts)
    if n == 0:
        raise DataError("cannot build a corpus model from zero documents")
    return _from_counters(n, total, df, tf)


@dataclass
class SparseVector:
    indices: np.ndarray
    counts: np.ndarray
    oov: int = 0

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.indices.tolist(), self.counts.tolist()))


def vectorize(doc: TokenizedDoc, model: CorpusModel) -> SparseVector:
    """Project a document onto the model vocabulary; unseen tokens go to ``oov``."""
    known = []
    oov = 0
    for tok, cnt in doc.token_counts.items():
        idx = model.index.get(tok)
        if idx is None:
            oov += cnt
        else:
            known.append((idx, cnt))
    known.sort()
    return SparseVector(
        np.array([i for i, _ in known], dtype=np.int64),
        np.array([c for _, c in known], dtype=np.int64),
        oov,
    )


def vectorize_corpus(docs: Sequence[TokenizedDoc], model: CorpusModel) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Document-term count matrix (rows follow ``docs``) and per-row OOV tallies."""
    indptr = [0]
    indices: list[int] = []
    data: list[int] = []
    oov = np.zeros(len(docs), dtype=np.int64)
    for row, doc in enumerate(docs):
        vec = vectorize(doc, model)
        indices.extend(vec.indices.tolist())
        data.extend(vec.counts.tolist())
        indptr.append(len(indices))
        oov[row] = vec.oov
    mat = sparse.csr_matrix(
        (np.asarray(data, dtype=np.int64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(docs), len(model)),
    )
    return mat, oov
