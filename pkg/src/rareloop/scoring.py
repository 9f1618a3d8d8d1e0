"""Built-in relevance scorer and score-table plumbing.

The model is L2-regularized logistic regression over hashed unigram and
bigram presence features (fixed dimension and hash seed), trained by damped
Newton/IRLS with a conjugate-gradient inner solve. Several training seeds
are fitted and the one with the best held-out AUROC wins, ties going to the
lowest seed. Scores live in [0, 1], clipped away from the exact endpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence
from zlib import crc32

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import expit
from scipy.stats import rankdata

from .corpus import Corpus

__all__ = [
    "HASH_DIM",
    "LabeledExample",
    "ScoreTable",
    "TrainedScorer",
    "auroc",
    "feature_matrix",
    "fit_baseline_multiseed",
    "ingest_external_scores",
    "score_pool",
    "train_test_split",
]

HASH_DIM = 1 << 18
_HASH_MASK = HASH_DIM - 1
SCORE_FLOOR = 1e-9
SCORE_CEIL = 1.0 - 1e-9

_uni_cache: dict[str, int] = {}
_bi_cache: dict[tuple[str, str], int] = {}


def _hash_unigram(tok: str) -> int:
    idx = _uni_cache.get(tok)
    if idx is None:
        idx = _uni_cache[tok] = crc32(b"u\x00" + tok.encode("utf-8")) & _HASH_MASK
    return idx


def _hash_bigram(a: str, b: str) -> int:
    key = (a, b)
    idx = _bi_cache.get(key)
    if idx is None:
        idx = _bi_cache[key] = (
            crc32(b"b\x00" + a.encode("utf-8") + b"\x00" + b.encode("utf-8"))
            & _HASH_MASK
        )
    return idx


def doc_feature_indices(tokens: Sequence[str]) -> list[int]:
    """Sorted distinct hashed feature indices of one document."""
    feats = {_hash_unigram(t) for t in tokens}
    feats.update(_hash_bigram(a, b) for a, b in zip(tokens, tokens[1:]))
    return sorted(feats)


def feature_matrix(token_lists: Iterable[Sequence[str]]) -> sp.csr_matrix:
    """CSR presence matrix (rows follow input order) over the hashed space."""
    indptr = [0]
    indices: list[int] = []
    for tokens in token_lists:
        cols = doc_feature_indices(tokens)
        indices.extend(cols)
        indptr.append(len(indices))
    data = np.ones(len(indices), dtype=np.float32)
    return sp.csr_matrix(
        (data, np.asarray(indices, dtype=np.int32), np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, HASH_DIM),
    )


@dataclass(frozen=True, slots=True)
class LabeledExample:
    doc_id: str
    category: str
    positive: bool


class ScoreTable:
    """Scores for the non-excluded docs of one pool at one iteration.

    Stored as parallel arrays (ids ascending, float64 scores); ranking is by
    score descending with ties broken by ascending id.
    """

    def __init__(
        self, category: str, iteration: int, ids: list[str], values: np.ndarray
    ) -> None:
        values = np.asarray(values, dtype=np.float64)
        if len(ids) != len(values):
            raise ValueError("ids and values length mismatch")
        if len(values) and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        self.category = category
        self.iteration = iteration
        self.ids = ids
        self.values = values
        self._pos: dict[str, int] | None = None
        self._rank: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def _positions(self) -> dict[str, int]:
        if self._pos is None:
            self._pos = {doc_id: i for i, doc_id in enumerate(self.ids)}
        return self._pos

    def score_of(self, doc_id: str) -> float:
        return float(self.values[self._positions()[doc_id]])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.values.tolist()))

    def _rank_array(self) -> np.ndarray:
        # rank 1 = highest score; ties by ascending id (= ascending position)
        if self._rank is None:
            order = np.lexsort((np.arange(len(self.values)), -self.values))
            rank = np.empty(len(order), dtype=np.int64)
            rank[order] = np.arange(1, len(order) + 1)
            self._rank = rank
        return self._rank

    def ranked_ids(self) -> list[str]:
        order = np.lexsort((np.arange(len(self.values)), -self.values))
        return [self.ids[i] for i in order]

    def ranks_of(self, doc_ids: Sequence[str]) -> dict[str, int]:
        rank = self._rank_array()
        pos = self._positions()
        return {d: int(rank[pos[d]]) for d in doc_ids}

    def to_csv(self, path: str, header: bool = True) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if header:
                fh.write("doc_id,score\n")
            for doc_id, value in zip(self.ids, self.values):
                fh.write(f"{doc_id},{value:.9f}\n")


def train_test_split(
    examples: Sequence[LabeledExample], train_frac: float = 0.7, seed=0
) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Seeded stratified split.

    Per-label sizes are floors of ``train_frac`` with the remainder going to
    the largest fractional part (ties: positives first) so the train total
    hits ``round(train_frac * n)``; any label with at least two examples
    keeps at least one example on each side. Single-label input is an error.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    pos = [e for e in examples if e.positive]
    neg = [e for e in examples if not e.positive]
    if not pos or not neg:
        raise ValueError("both labels are required to split")
    rng = np.random.default_rng(seed)
    strata = []
    for members in (pos, neg):
        perm = rng.permutation(len(members))
        strata.append([members[j] for j in perm])
    n_train = round(train_frac * len(examples))
    exact = [train_frac * len(s) for s in strata]
    quota = [math.floor(x) for x in exact]
    remainder = n_train - sum(quota)
    by_frac = sorted(range(2), key=lambda i: (-(exact[i] - quota[i]), i))
    for i in by_frac[:remainder]:
        quota[i] += 1
    train: list[LabeledExample] = []
    test: list[LabeledExample] = []
    for members, q in zip(strata, quota):
        if len(members) >= 2:
            q = min(max(q, 1), len(members) - 1)
        train.extend(members[:q])
        test.extend(members[q:])
    return train, test


def auroc(pairs: Sequence[tuple[float, bool]]) -> float:
    """Probability a random positive outscores a random negative, ties 1/2.

    Rank-based, exactly equal to the pairwise count with half credit for
    tied pairs. Requires both labels present.
    """
    scores = np.asarray([s for s, _ in pairs], dtype=np.float64)
    y = np.asarray([bool(l) for _, l in pairs])
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs both labels")
    ranks = rankdata(scores, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass
class TrainedScorer:
    """Frozen fit: dense weight vector over the hashed space plus intercept."""

    weights: np.ndarray
    intercept: float
    seed: int
    test_auroc: float
    l2: float

    def decision(self, X: sp.csr_matrix) -> np.ndarray:
        return X @ self.weights + self.intercept

    def predict(self, X: sp.csr_matrix) -> np.ndarray:
        return np.clip(expit(self.decision(X)), SCORE_FLOOR, SCORE_CEIL)


def _fit_hashed_logistic(
    X: sp.csr_matrix,
    y: np.ndarray,
    l2: float,
    seed,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> tuple[np.ndarray, float]:
    """Damped Newton/IRLS on the active feature columns; returns (w, b).

    The L2 penalty keeps untouched coordinates at zero, so optimizing the
    active columns only is exact. The Newton system is solved by conjugate
    gradients on the regularized Hessian operator.
    """
    active = np.unique(X.indices)
    Xa = X[:, active].astype(np.float64)
    n, p = Xa.shape
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1e-6, p + 1)
    w[p] = 0.0

    def penalized_nll(wv: np.ndarray) -> float:
        z = Xa @ wv[:p] + wv[p]
        # log(1 + e^z) - y z, stable
        return float(
            np.logaddexp(0.0, z).sum() - y @ z + 0.5 * l2 * (wv[:p] @ wv[:p])
        )

    nll = penalized_nll(w)
    for _ in range(max_iter):
        z = Xa @ w[:p] + w[p]
        mu = expit(z)
        resid = y - mu
        grad = np.concatenate([Xa.T @ resid - l2 * w[:p], [resid.sum()]])
        wdiag = np.maximum(mu * (1.0 - mu), 1e-12)

        def hess_mv(v: np.ndarray) -> np.ndarray:
            zv = Xa @ v[:p] + v[p]
            wz = wdiag * zv
            return np.concatenate([Xa.T @ wz + l2 * v[:p], [wz.sum()]])

        op = LinearOperator((p + 1, p + 1), matvec=hess_mv, dtype=np.float64)
        step, info = cg(op, grad, rtol=1e-10, maxiter=500)
        if info != 0 and not np.all(np.isfinite(step)):
            break
        scale = 1.0
        improved = False
        while scale >= 2.0 ** -20:
            cand = w + scale * step
            cand_nll = penalized_nll(cand)
            if cand_nll <= nll + 1e-12:
                improved = True
                break
            scale /= 2.0
        if not improved:
            break
        delta = float(np.max(np.abs(cand - w)))
        w, nll = cand, cand_nll
        if delta < tol:
            break
    full = np.zeros(HASH_DIM, dtype=np.float64)
    full[active] = w[:p]
    return full, float(w[p])


def fit_baseline_multiseed(
    train: Sequence[LabeledExample],
    test: Sequence[LabeledExample],
    lookup,
    n_seeds: int = 15,
    l2: float = 1.0,
    base_seed=0,
) -> TrainedScorer:
    """Fit one model per training seed, keep the best held-out AUROC.

    Ties resolve to the lowest seed; with ``n_seeds=1`` selection is the
    identity. ``lookup`` resolves doc ids to token lists (a Corpus or a
    mapping). Both splits must contain both labels.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    for name, part in (("train", train), ("test", test)):
        labels = {e.positive for e in part}
        if labels != {True, False}:
            raise ValueError(f"{name} split must contain both labels")
    tokens_of = _token_lookup(lookup)
    Xtr = feature_matrix([tokens_of(e.doc_id) for e in train])
    ytr = np.asarray([e.positive for e in train], dtype=np.float64)
    Xte = feature_matrix([tokens_of(e.doc_id) for e in test])
    yte = [e.positive for e in test]
    best: TrainedScorer | None = None
    for s in range(n_seeds):
        w, b = _fit_hashed_logistic(Xtr, ytr, l2=l2, seed=_seed_list(base_seed, s))
        model = TrainedScorer(weights=w, intercept=b, seed=s, test_auroc=0.0, l2=l2)
        preds = model.predict(Xte)
        model.test_auroc = auroc(list(zip(preds.tolist(), yte)))
        if best is None or model.test_auroc > best.test_auroc:
            best = model
    return best


def _seed_list(base, extra: int) -> list[int]:
    if isinstance(base, (list, tuple)):
        return [*base, extra]
    return [int(base), extra]


def _token_lookup(lookup):
    if isinstance(lookup, Corpus):
        return lambda doc_id: lookup.get(doc_id).tokens
    if isinstance(lookup, Mapping):
        return lambda doc_id: lookup[doc_id]
    raise TypeError("lookup must be a Corpus or a mapping of id -> tokens")


def score_pool(
    model: TrainedScorer,
    pool: Corpus,
    category: str,
    iteration: int,
    X: sp.csr_matrix | None = None,
    shards: int = 1,
) -> ScoreTable:
    """One clipped score per non-excluded pool doc.

    ``X`` may carry a prebuilt feature matrix aligned with the pool's sorted
    ids to skip re-featurizing. ``shards`` chunks the matvec; results are
    shard-count invariant.
    """
    if shards < 1:
        raise ValueError("shards must be >= 1")
    all_ids = pool.ids_sorted()
    if X is None:
        X = feature_matrix([pool.get(i).tokens for i in all_ids])
    if X.shape[0] != len(all_ids):
        raise ValueError("feature matrix rows must match pool size")
    if pool.excluded:
        keep = np.asarray([i not in pool.excluded for i in all_ids])
        ids = [i for i, k in zip(all_ids, keep) if k]
        X = X[np.flatnonzero(keep)]
    else:
        ids = list(all_ids)
    parts = []
    bounds = np.linspace(0, X.shape[0], shards + 1).astype(int)
    for s in range(shards):
        parts.append(model.predict(X[bounds[s] : bounds[s + 1]]))
    values = np.concatenate(parts) if parts else np.empty(0)
    return ScoreTable(category, iteration, ids, values)


def ingest_external_scores(
    path: str, pool: Corpus, category: str = "external", iteration: int = 0
) -> ScoreTable:
    """Read a ``doc_id,score`` CSV into a ScoreTable over the pool.

    The header line is optional. Errors (with 1-based line numbers where
    sensible): unparseable rows, scores outside [0, 1], duplicate ids,
    unknown ids (first 10 listed), and missing coverage of non-excluded
    docs (first 10 listed).
    """
    raw: dict[str, float] = {}
    with open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            doc_id, sep, score_part = line.partition(",")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'doc_id,score'")
            if lineno == 1 and (doc_id, score_part.strip()) == ("doc_id", "score"):
                continue
            try:
                value = float(score_part)
            except ValueError:
                raise ValueError(
                    f"line {lineno}: score {score_part!r} is not a number"
                ) from None
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"line {lineno}: score {value} outside [0, 1]")
            if doc_id in raw:
                raise ValueError(f"line {lineno}: duplicate doc id {doc_id!r}")
            raw[doc_id] = value
    unknown = sorted(i for i in raw if i not in pool)
    if unknown:
        raise ValueError(f"unknown doc ids in score file: {unknown[:10]}")
    wanted = pool.candidate_ids()
    missing = [i for i in wanted if i not in raw]
    if missing:
        raise ValueError(f"score file misses non-excluded docs: {missing[:10]}")
    values = np.asarray([raw[i] for i in wanted], dtype=np.float64)
    return ScoreTable(category, iteration, wanted, values)
