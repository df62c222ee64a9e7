"""BM25 and Log Entropy rarity scores with per-token attributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np

from .errors import ConfigError, ConsistencyError
from .tokenizer import CorpusModel, TokenizedDoc, vectorize_corpus


@dataclass(frozen=True)
class ScoringParams:
    k: float = 1.5
    b: float = 0.75

    def __post_init__(self):
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise ConfigError(f"k must be a finite value >= 0, got {self.k}")
        if not 0 <= self.b <= 1:
            raise ConfigError(f"b must lie in [0, 1], got {self.b}")


@dataclass
class ScoreRecord:
    event_ref: str
    gram_mode: str
    bm25_score: float
    log_entropy_score: float
    # token -> (bm25 contribution, log-entropy contribution)
    token_attributions: dict[str, tuple[float, float]] = field(default_factory=dict)
    day: date | None = None

    def top_attributions(self, n: int = 10) -> list[tuple[str, float, float]]:
        ranked = sorted(self.token_attributions.items(), key=lambda kv: (-(kv[1][0] + kv[1][1]), kv[0]))
        return [(tok, bm, le) for tok, (bm, le) in ranked[:n]]


def tf_score(f_td: float, doc_len: float, params: ScoringParams, avg_dl: float) -> float:
    """Saturating term-frequency component of BM25."""
    if not avg_dl > 0:
        raise ConfigError(f"average document length must be positive, got {avg_dl}")
    if f_td == 0:
        return 0.0
    norm = params.k * (1 - params.b + params.b * doc_len / avg_dl)
    return f_td * (params.k + 1) / (f_td + norm)


def idf_score(n_t: int, N: int) -> float:
    if not 1 <= n_t <= N:
        raise ConsistencyError(f"document frequency {n_t} outside [1, {N}]")
    return math.log((N - n_t + 0.5) / (n_t + 0.5) + 1)


def log_entropy_weight(f_td: int, sum_f_t: int, f_t: int, D: int) -> float:
    """1 + (f_td / sum_f_t) * log(D / (1 + f_t))."""
    if sum_f_t <= 0:
        raise ConsistencyError("token has zero corpus-wide frequency")
    if f_td > sum_f_t or not 1 <= f_t <= D:
        raise ConsistencyError(f"inconsistent token statistics f_td={f_td} sum={sum_f_t} f_t={f_t} D={D}")
    return 1 + (f_td / sum_f_t) * math.log(D / (1 + f_t))


def _lookup(doc: TokenizedDoc, model: CorpusModel) -> list[tuple[str, int, int]]:
    out = []
    for tok, cnt in doc.token_counts.items():
        idx = model.index.get(tok)
        if idx is None:
            raise ConsistencyError(f"token {tok!r} of {doc.event_ref} is not in the corpus model")
        out.append((tok, cnt, idx))
    return out


def bm25_score(doc: TokenizedDoc, model: CorpusModel, params: ScoringParams) -> tuple[float, dict[str, float]]:
    """Score one document; returns (score, per-token contributions)."""
    contrib = {}
    for tok, cnt, idx in _lookup(doc, model):
        idf = idf_score(int(model.doc_frequency[idx]), model.doc_count)
        contrib[tok] = idf * tf_score(cnt, doc.length, params, model.avg_doc_length)
    return math.fsum(contrib.values()), contrib


def log_entropy_score(doc: TokenizedDoc, model: CorpusModel) -> tuple[float, dict[str, float]]:
    contrib = {}
    for tok, cnt, idx in _lookup(doc, model):
        contrib[tok] = log_entropy_weight(
            cnt, int(model.term_frequency[idx]), int(model.doc_frequency[idx]), model.doc_count
        )
    return math.fsum(contrib.values()), contrib


def score_corpus(
    docs: Sequence[TokenizedDoc],
    model: CorpusModel,
    params: ScoringParams,
    gram_mode: str,
    days: Sequence[date] | None = None,
) -> list[ScoreRecord]:
    """Vectorized BM25 + Log Entropy over every document of the model's corpus.

    All per-(doc, token) contributions are computed in one pass over the
    nonzeros of the document-term matrix; each document's score is the
    compensated sum of its row.
    """
    mat, oov = vectorize_corpus(docs, model)
    if oov.any():
        bad = int(np.flatnonzero(oov)[0])
        raise ConsistencyError(f"document {docs[bad].event_ref} has tokens missing from the corpus model")
    N = model.doc_count
    df = model.doc_frequency.astype(np.float64)
    total = model.term_frequency.astype(np.float64)
    if np.any(model.doc_frequency < 1) or np.any(model.doc_frequency > N):
        raise ConsistencyError("document frequencies outside [1, N]")

    lengths = np.diff(mat.indptr)
    doc_len = np.repeat(np.asarray([d.length for d in docs], dtype=np.float64), lengths)
    cols = mat.indices
    f = mat.data.astype(np.float64)

    idf = np.log((N - df + 0.5) / (df + 0.5) + 1)
    if model.total_length > 0:
        norm = params.k * (1 - params.b + params.b * doc_len / model.avg_doc_length)
        tf = f * (params.k + 1) / (f + norm)
    else:
        tf = np.zeros_like(f)
    bm = idf[cols] * tf
    le = 1 + (f / total[cols]) * np.log(N / (1 + df[cols]))

    records = []
    vocab = model.vocabulary
    for row, doc in enumerate(docs):
        lo, hi = mat.indptr[row], mat.indptr[row + 1]
        toks = [vocab[j] for j in cols[lo:hi]]
        b_row = bm[lo:hi].tolist()
        l_row = le[lo:hi].tolist()
        records.append(
            ScoreRecord(
                event_ref=doc.event_ref,
                gram_mode=gram_mode,
                bm25_score=math.fsum(b_row),
                log_entropy_score=math.fsum(l_row),
                token_attributions=dict(zip(toks, zip(b_row, l_row))),
                day=days[row] if days is not None else None,
            )
        )
    return records
