"""Ordered skip-gram enumeration, document-frequency indexing, lift mining.

A skip-gram of length n is an ordered combination of n document tokens with
unbounded gaps. Indexing counts document frequency (presence, one count per
doc), keeps grams whose tokens pass the vocabulary predicate, drops grams
with a repeated token, and floors frequency at ``min_freq``. Lift compares a
gram's share of a top-ranked doc set against its share of the whole pool.
"""
from __future__ import annotations

import itertools
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Corpus

__all__ = [
    "GramIndex",
    "LiftEntry",
    "TopLiftResult",
    "build_gram_index",
    "compute_lift",
    "enumerate_skipgrams",
    "read_gram_index",
    "select_top_lift",
    "write_gram_index",
    "write_lift_report",
]

SkipGram = tuple[str, ...]

# lowercase alphabetic runs, apostrophes allowed inside
_DEFAULT_VOCAB_RE = re.compile(r"[a-z']*[a-z][a-z']*")

_PACK_BITS = 21  # token ids per gram packed into one int64, 3 * 21 = 63 bits


def enumerate_skipgrams(tokens: Sequence[str], n: int) -> set[SkipGram]:
    """All ordered n-token combinations of a token list, as a set.

    A list of length L yields at most C(L, n) grams (fewer after the set
    deduplicates repeats). Shorter lists yield the empty set.
    """
    if n < 1:
        raise ValueError(f"gram length must be >= 1, got {n}")
    return set(itertools.combinations(tokens, n))


def _vocab_predicate(vocab) -> Callable[[str], bool]:
    if vocab is None:
        return lambda tok: _DEFAULT_VOCAB_RE.fullmatch(tok) is not None
    if callable(vocab):
        return vocab
    members = set(vocab)
    return lambda tok: tok in members


def _doc_grams(tokens: Sequence[str], n: int, pred) -> set[SkipGram]:
    """Grams of one doc under index semantics: vocab filter, no repeats."""
    kept = [t for t in tokens if pred(t)]
    grams = set(itertools.combinations(kept, n))
    return {g for g in grams if len(set(g)) == n}


@dataclass
class GramIndex:
    """Document-frequency index over qualifying grams of one length."""

    n: int
    counts: dict[SkipGram, int]
    n_docs: int
    min_freq: float

    def pool_freq(self, gram: SkipGram) -> float:
        return self.counts[gram] / self.n_docs

    def __len__(self) -> int:
        return len(self.counts)

    def __contains__(self, gram: SkipGram) -> bool:
        return gram in self.counts


def build_gram_index(
    pool: Corpus,
    n: int,
    vocab=None,
    min_freq: float = 1e-5,
    shards: int = 1,
) -> GramIndex:
    """Count document frequencies of ordered n-grams over a pool.

    ``vocab`` is None (default predicate: lowercase alphabetic with optional
    apostrophes), a container of allowed tokens, or a predicate. Grams with
    an out-of-vocabulary token or a repeated token never enter the index;
    grams with document frequency below ``min_freq`` are dropped at the end.
    ``shards`` only chunks the work; counts are shard-count invariant.
    """
    if n < 1:
        raise ValueError(f"gram length must be >= 1, got {n}")
    if shards < 1:
        raise ValueError("shards must be >= 1")
    if len(pool) == 0:
        raise ValueError("cannot index an empty pool")
    pred = _vocab_predicate(vocab)
    if n in (2, 3):
        counts = _count_packed(pool, n, pred, shards)
    else:
        counts = _count_tuples(pool, n, pred)
    n_docs = len(pool)
    kept = {g: c for g, c in counts.items() if c / n_docs >= min_freq}
    return GramIndex(n=n, counts=kept, n_docs=n_docs, min_freq=min_freq)


def _count_tuples(pool: Corpus, n: int, pred) -> dict[SkipGram, int]:
    counter: Counter[SkipGram] = Counter()
    for doc in pool:
        counter.update(_doc_grams(doc.tokens, n, pred))
    return dict(counter)


def _count_packed(pool: Corpus, n: int, pred, shards: int) -> dict[SkipGram, int]:
    # Token ids packed into int64 keys; per-doc dedup keeps document
    # frequency semantics, then a sort-based unique counts everything at
    # once without holding a dict of every distinct gram.
    tok_ids: dict[str, int] = {}
    vocab_cache: dict[str, bool] = {}
    comb_cache: dict[int, np.ndarray] = {}
    doc_keys: list[np.ndarray] = []
    ids = pool.ids_sorted()
    shard_bounds = np.linspace(0, len(ids), shards + 1).astype(int)
    shard_counts: list[tuple[np.ndarray, np.ndarray]] = []
    for s in range(shards):
        doc_keys.clear()
        for doc_id in ids[shard_bounds[s] : shard_bounds[s + 1]]:
            tokens = pool.get(doc_id).tokens
            kept: list[int] = []
            for tok in tokens:
                ok = vocab_cache.get(tok)
                if ok is None:
                    ok = vocab_cache[tok] = bool(pred(tok))
                if ok:
                    tid = tok_ids.get(tok)
                    if tid is None:
                        tid = tok_ids[tok] = len(tok_ids)
                    kept.append(tid)
            L = len(kept)
            if L < n:
                continue
            comb = comb_cache.get(L)
            if comb is None:
                comb = comb_cache[L] = np.fromiter(
                    itertools.chain.from_iterable(
                        itertools.combinations(range(L), n)
                    ),
                    dtype=np.int64,
                ).reshape(-1, n)
            arr = np.asarray(kept, dtype=np.int64)[comb]
            keys = arr[:, 0]
            for k in range(1, n):
                keys = (keys << _PACK_BITS) | arr[:, k]
            if L != len(set(kept)):
                mask = arr[:, 0] != arr[:, 1]
                if n == 3:
                    mask &= (arr[:, 0] != arr[:, 2]) & (arr[:, 1] != arr[:, 2])
                keys = np.unique(keys[mask])
            doc_keys.append(keys)
        if doc_keys:
            uniq, cnt = np.unique(np.concatenate(doc_keys), return_counts=True)
            shard_counts.append((uniq, cnt))
    if len(tok_ids) >= (1 << _PACK_BITS):
        raise ValueError("vocabulary too large for packed gram counting")
    if not shard_counts:
        return {}
    all_keys = np.concatenate([u for u, _ in shard_counts])
    all_cnts = np.concatenate([c for _, c in shard_counts])
    order = np.argsort(all_keys, kind="stable")
    all_keys, all_cnts = all_keys[order], all_cnts[order]
    uniq_keys, starts = np.unique(all_keys, return_index=True)
    sums = np.add.reduceat(all_cnts, starts)
    id_tok = {i: t for t, i in tok_ids.items()}
    mask = (1 << _PACK_BITS) - 1
    counts: dict[SkipGram, int] = {}
    for key, total in zip(uniq_keys.tolist(), sums.tolist()):
        parts = []
        for _ in range(n):
            parts.append(id_tok[key & mask])
            key >>= _PACK_BITS
        counts[tuple(reversed(parts))] = total
    return counts


@dataclass(slots=True)
class LiftEntry:
    gram: SkipGram
    top_freq: float
    pool_freq: float
    lift: float


def compute_lift(
    top_ids: Sequence[str], pool: Corpus, index: GramIndex
) -> list[LiftEntry]:
    """Lift of every indexed gram: share in the top docs over pool share.

    ``top_ids`` are the ids of the top-ranked docs (must be non-empty and in
    the pool). Grams absent from the top set carry lift 0. Entries come back
    sorted by gram for determinism.
    """
    if not top_ids:
        raise ValueError("top set must be non-empty")
    pred = _index_pred(index)
    top_counts: Counter[SkipGram] = Counter()
    for doc_id in top_ids:
        tokens = pool.get(doc_id).tokens
        grams = _doc_grams(tokens, index.n, pred)
        top_counts.update(g for g in grams if g in index.counts)
    t = len(top_ids)
    entries = []
    for gram in sorted(index.counts):
        top_freq = top_counts.get(gram, 0) / t
        pool_freq = index.pool_freq(gram)
        entries.append(
            LiftEntry(gram, top_freq, pool_freq, top_freq / pool_freq)
        )
    return entries


def _index_pred(index: GramIndex):
    # Tokens appearing in the index are exactly those that passed the build
    # predicate; membership in any indexed gram is the cheapest equivalent
    # filter when re-enumerating top docs.
    vocab = {tok for gram in index.counts for tok in gram}
    return lambda tok: tok in vocab


@dataclass(slots=True)
class TopLiftResult:
    grams: list[SkipGram]
    shortfall: bool


def select_top_lift(
    entries: list[LiftEntry],
    used_previous: Iterable[SkipGram] = (),
    k: int = 5,
) -> TopLiftResult:
    """Greedy top-k by lift, excluding used grams, one-gram-disjoint.

    Candidates sort by lift descending, ties lexicographic by tokens. A gram
    sharing any token with an already kept gram is skipped (the higher-lift
    gram wins). Grams with lift 0 are never selected; fewer than ``k``
    survivors sets the shortfall flag.
    """
    used = set(used_previous)
    cands = [e for e in entries if e.lift > 0 and e.gram not in used]
    cands.sort(key=lambda e: (-e.lift, e.gram))
    kept: list[SkipGram] = []
    seen_tokens: set[str] = set()
    for entry in cands:
        if seen_tokens.isdisjoint(entry.gram):
            kept.append(entry.gram)
            seen_tokens.update(entry.gram)
            if len(kept) == k:
                break
    return TopLiftResult(kept, shortfall=len(kept) < k)


# -- persistence --------------------------------------------------------------

def write_gram_index(index: GramIndex, path: str) -> None:
    """One line per gram: pipe-joined tokens, comma, count."""
    with open(path, "w", encoding="utf-8") as fh:
        for gram in sorted(index.counts):
            fh.write("|".join(gram) + f",{index.counts[gram]}\n")


def read_gram_index(path: str, n_docs: int, min_freq: float = 1e-5) -> GramIndex:
    counts: dict[SkipGram, int] = {}
    n = None
    with open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            gram_part, sep, count_part = line.rpartition(",")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'tokens,count'")
            gram = tuple(gram_part.split("|"))
            if n is None:
                n = len(gram)
            elif len(gram) != n:
                raise ValueError(f"line {lineno}: mixed gram lengths")
            counts[gram] = int(count_part)
    if n is None:
        raise ValueError("empty gram index file")
    return GramIndex(n=n, counts=counts, n_docs=n_docs, min_freq=min_freq)


def write_lift_report(entries: list[LiftEntry], path: str) -> None:
    """CSV: gram (pipe-joined), top_freq, pool_freq, lift."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gram,top_freq,pool_freq,lift\n")
        for e in sorted(entries, key=lambda e: (-e.lift, e.gram)):
            fh.write(
                "|".join(e.gram)
                + f",{e.top_freq!r},{e.pool_freq!r},{e.lift!r}\n"
            )
