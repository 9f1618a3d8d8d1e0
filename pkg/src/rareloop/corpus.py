"""Corpus storage: tokenization, pools, seeded sampling, exclusion.

A corpus is an immutable collection of documents plus an inverted index.
Pools (evaluation vs. sampling halves) are themselves corpora; exclusion
of already-labeled ids only ever affects sampling, never stored counts.
"""
from __future__ import annotations

import gzip
import json
import re
import sys
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "ANY",
    "Corpus",
    "Document",
    "PoolPair",
    "SampleResult",
    "sample_matching",
    "split_corpus",
    "tokenize",
]

# Word-ish runs, with #tags and @users kept whole; anything that is neither
# word nor whitespace forms a standalone punctuation-run token.
_TOKEN_RE = re.compile(r"[#@]\w+|\w+|[^\w\s]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, whitespace-split, punctuation runs standalone.

    ``#tag`` and ``@user`` chunks survive as single tokens, as does any
    whitespace-delimited chunk starting with ``http`` (URLs). Deterministic:
    equal text always yields equal tokens.
    """
    out: list[str] = []
    for chunk in text.lower().split():
        if chunk.startswith("http"):
            out.append(chunk)
        else:
            out.extend(_TOKEN_RE.findall(chunk))
    return out


@dataclass(slots=True)
class Document:
    id: str
    text: str
    tokens: list[str]


class _AnyMotif:
    """Sentinel selecting every document. Use the module-level ``ANY``."""

    def __repr__(self) -> str:  # pragma: no cover
        return "ANY"


ANY = _AnyMotif()


class Corpus:
    """A set of documents with a lazily built inverted index.

    The index maps token -> posting list of doc ids sorted ascending.
    ``excluded`` is a persistent id set consulted by the sampling helpers;
    index counts and ``len()`` are unaffected by exclusion.
    """

    def __init__(self) -> None:
        self._docs: dict[str, Document] = {}
        self._ids_sorted: list[str] | None = None
        self._index: dict[str, list[str]] | None = None
        self.excluded: set[str] = set()

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def __iter__(self) -> Iterator[Document]:
        for doc_id in self.ids_sorted():
            yield self._docs[doc_id]

    def get(self, doc_id: str) -> Document:
        return self._docs[doc_id]

    def add(self, doc_id: str, text: str) -> Document:
        if doc_id in self._docs:
            raise ValueError(f"duplicate document id: {doc_id!r}")
        doc = Document(doc_id, text, [sys.intern(t) for t in tokenize(text)])
        self._docs[doc_id] = doc
        self._ids_sorted = None
        self._index = None
        return doc

    def _add_doc(self, doc: Document) -> None:
        # internal: share an existing Document between pools
        if doc.id in self._docs:
            raise ValueError(f"duplicate document id: {doc.id!r}")
        self._docs[doc.id] = doc
        self._ids_sorted = None
        self._index = None

    def ids_sorted(self) -> list[str]:
        if self._ids_sorted is None:
            self._ids_sorted = sorted(self._docs)
        return self._ids_sorted

    @property
    def index(self) -> dict[str, list[str]]:
        if self._index is None:
            idx: dict[str, list[str]] = {}
            for doc_id in self.ids_sorted():
                for tok in set(self._docs[doc_id].tokens):
                    idx.setdefault(tok, []).append(doc_id)
            self._index = idx
        return self._index

    def candidate_ids(self) -> list[str]:
        """Sorted non-excluded ids."""
        if not self.excluded:
            return list(self.ids_sorted())
        return [i for i in self.ids_sorted() if i not in self.excluded]

    def exclude_ids(self, ids: Iterable[str]) -> "Corpus":
        """Add ids to the persistent exclusion set. Unknown ids are an error."""
        ids = list(ids)
        unknown = [i for i in ids if i not in self._docs]
        if unknown:
            raise KeyError(f"cannot exclude unknown ids: {unknown[:10]}")
        self.excluded.update(ids)
        return self

    @classmethod
    def from_documents(cls, docs: Iterable[Document]) -> "Corpus":
        corpus = cls()
        for doc in docs:
            corpus._add_doc(doc)
        return corpus

    @classmethod
    def from_jsonl(cls, path: str) -> "Corpus":
        """Ingest a JSONL file of ``{"id": ..., "text": ...}`` records.

        ``.gz`` paths are transparently decompressed. Malformed lines,
        missing/ill-typed fields and duplicate ids raise ValueError naming
        the 1-based line number.
        """
        corpus = cls()
        opener = gzip.open if str(path).endswith(".gz") else open
        with opener(path, "rt", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"line {lineno}: invalid JSON: {exc}") from None
                if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                    raise ValueError(f"line {lineno}: record must have 'id' and 'text'")
                if not isinstance(rec["id"], str) or not isinstance(rec["text"], str):
                    raise ValueError(f"line {lineno}: 'id' and 'text' must be strings")
                try:
                    corpus.add(rec["id"], rec["text"])
                except ValueError:
                    raise ValueError(
                        f"line {lineno}: duplicate document id {rec['id']!r}"
                    ) from None
        return corpus


@dataclass(slots=True)
class PoolPair:
    eval_pool: Corpus
    sample_pool: Corpus


def split_corpus(corpus: Corpus, ratio: float, seed) -> PoolPair:
    """Seeded disjoint split into an evaluation pool and a sampling pool.

    The evaluation pool receives ``round(ratio * N)`` documents chosen by a
    seeded shuffle of the id-sorted corpus; the rest form the sampling pool.
    Document objects are shared, indexes are per-pool.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    ids = corpus.ids_sorted()
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    n_eval = round(ratio * len(ids))
    eval_ids = {ids[j] for j in perm[:n_eval]}
    eval_pool, sample_pool = Corpus(), Corpus()
    for doc_id in ids:
        (eval_pool if doc_id in eval_ids else sample_pool)._add_doc(corpus.get(doc_id))
    return PoolPair(eval_pool, sample_pool)


@dataclass(slots=True)
class SampleResult:
    docs: list[Document]
    shortfall: bool


def sample_matching(pool: Corpus, motif, n: int, seed) -> SampleResult:
    """Seeded uniform sample of up to ``n`` non-excluded docs matching ``motif``.

    ``motif`` is ``ANY`` or any object with ``matching_ids(pool)``. Candidates
    are taken sorted ascending by id, shuffled with the seed, and the first
    ``n`` returned; fewer matches than ``n`` sets the shortfall flag.
    """
    if n < 0:
        raise ValueError("sample size must be non-negative")
    if motif is ANY:
        cand = pool.candidate_ids()
    else:
        excluded = pool.excluded
        cand = [i for i in motif.matching_ids(pool) if i not in excluded]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(cand))
    chosen = [cand[j] for j in perm[:n]]
    return SampleResult([pool.get(i) for i in chosen], shortfall=len(cand) < n)


def subsample_ids(ids: Sequence[str], n: int, seed) -> list[str]:
    """Seeded uniform pick of ``n`` ids from a sorted candidate list."""
    cand = sorted(ids)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(cand))
    return [cand[j] for j in perm[:n]]
