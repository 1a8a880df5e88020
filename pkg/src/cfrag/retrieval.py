"""TF-IDF retrieval over report text.

Vocabulary, document frequencies and inverse document frequency come from
the indexed corpus; queries are embedded with the same idf and scored by
cosine against L2-normalized document vectors.  Ranking is fully
deterministic: score ties fall back to doc_id order, and a query with no
in-vocabulary tokens is flagged and returns the corpus in doc_id order with
zero scores rather than failing.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Document

INDEX_FORMAT = "cfrag.tfidf.v1"


class RetrievalError(Exception):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens, single characters dropped."""
    out = []
    word = []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            if len(word) > 1:
                out.append("".join(word))
            word = []
    if len(word) > 1:
        out.append("".join(word))
    return out


@dataclass(frozen=True)
class TfIdfIndex:
    doc_ids: tuple  # sorted
    vocabulary: dict  # term -> column
    idf: np.ndarray  # (V,)
    doc_matrix: np.ndarray  # (N, V), rows L2-normalized (or all-zero)


@dataclass(frozen=True)
class Ranking:
    entries: list  # of (doc_id, score), best first
    zero_query: bool

    def doc_ids(self) -> list:
        return [doc_id for doc_id, _ in self.entries]


def build_index(documents: list[Document]) -> TfIdfIndex:
    if not documents:
        raise RetrievalError("cannot index an empty corpus")
    docs = sorted(documents, key=lambda d: d.doc_id)
    doc_tokens = [tokenize(d.raw_text) for d in docs]

    df: Counter = Counter()
    for tokens in doc_tokens:
        df.update(set(tokens))
    terms = sorted(df)
    vocabulary = {term: col for col, term in enumerate(terms)}

    n = len(docs)
    idf = np.array(
        [math.log((1.0 + n) / (1.0 + df[term])) + 1.0 for term in terms],
        dtype=np.float64,
    )

    matrix = np.zeros((n, len(terms)), dtype=np.float64)
    for row, tokens in enumerate(doc_tokens):
        for term, count in Counter(tokens).items():
            matrix[row, vocabulary[term]] = count
    matrix *= idf
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    np.divide(matrix, norms, out=matrix, where=norms > 0.0)

    return TfIdfIndex(
        doc_ids=tuple(d.doc_id for d in docs),
        vocabulary=vocabulary,
        idf=idf,
        doc_matrix=matrix,
    )


def embed_query(index: TfIdfIndex, text: str) -> np.ndarray:
    """Query vector under the index vocabulary; all-zero when nothing maps."""
    vec = np.zeros(len(index.vocabulary), dtype=np.float64)
    for term, count in Counter(tokenize(text)).items():
        col = index.vocabulary.get(term)
        if col is not None:
            vec[col] = count
    vec *= index.idf
    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec /= norm
    return vec


def retrieve(index: TfIdfIndex, query: str, k: int) -> Ranking:
    """Top-k documents by cosine similarity, ties broken by doc_id order."""
    if k < 1:
        raise RetrievalError(f"k must be positive, got {k}")
    vec = embed_query(index, query)
    zero_query = not vec.any()
    sims = np.clip(index.doc_matrix @ vec, 0.0, 1.0)
    order = np.argsort(-sims, kind="stable")[:k]
    entries = [(index.doc_ids[i], float(sims[i])) for i in order]
    return Ranking(entries=entries, zero_query=zero_query)


def hit_rate(rankings: dict, gold: dict, k: int) -> float:
    """Fraction of queries whose gold document appears in the top k.

    ``rankings`` maps query id -> ranked doc_id list; ``gold`` maps query
    id -> the gold doc_id.  Every ranked query must have a gold entry.
    """
    if k < 1:
        raise RetrievalError(f"k must be positive, got {k}")
    if not rankings:
        raise RetrievalError("no rankings to score")
    hits = 0
    for qa_id, ranked in rankings.items():
        if qa_id not in gold:
            raise RetrievalError(f"no gold document for query {qa_id!r}")
        hits += gold[qa_id] in ranked[:k]
    return hits / len(rankings)


# --- Serialization -----------------------------------------------------------


def save_index(path: str | Path, index: TfIdfIndex) -> None:
    terms = sorted(index.vocabulary, key=index.vocabulary.get)
    rows = []
    for row in index.doc_matrix:
        cols = np.nonzero(row)[0]
        rows.append([[int(c), float(row[c])] for c in cols])
    payload = {
        "format": INDEX_FORMAT,
        "doc_ids": list(index.doc_ids),
        "vocabulary": terms,
        "idf": [float(x) for x in index.idf],
        "rows": rows,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload), encoding="utf-8")


def load_index(path: str | Path) -> TfIdfIndex:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != INDEX_FORMAT:
        raise RetrievalError(
            f"unsupported index format {payload.get('format')!r}, "
            f"expected {INDEX_FORMAT!r}"
        )
    terms = payload["vocabulary"]
    matrix = np.zeros((len(payload["doc_ids"]), len(terms)), dtype=np.float64)
    for row, cells in enumerate(payload["rows"]):
        for col, weight in cells:
            matrix[row, col] = weight
    return TfIdfIndex(
        doc_ids=tuple(payload["doc_ids"]),
        vocabulary={term: col for col, term in enumerate(terms)},
        idf=np.array(payload["idf"], dtype=np.float64),
        doc_matrix=matrix,
    )
