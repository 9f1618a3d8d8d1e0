"""Evaluation under extreme imbalance: rank-scheduled labels and metrics.

Evaluation labels are drawn at fixed rank intervals of the scored evaluation
pool and accumulate across iterations. Metrics re-rank the pooled labels
under the current model: average precision over the pooled ranks, a
predicted-positive-count interval from the rank bins where the positive
share first drops below one half, and embedding diversity of the positives.
Bootstrap standard errors and Welch tests drive the convergence check.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence
from zlib import crc32

import numpy as np
from scipy.stats import t as student_t

__all__ = [
    "DEFAULT_RANK_SCHEDULE",
    "EvaluationSample",
    "MetricsRecord",
    "PredictedPositives",
    "average_precision",
    "bootstrap_se",
    "check_convergence",
    "diversity",
    "evaluation_sample",
    "hashed_embeddings",
    "load_embedding_file",
    "predicted_positives",
    "validate_schedule",
    "welch_test",
    "write_metrics_report",
]

# 16 interval groups, 170 ranks total: a dense head plus geometric sweeps.
DEFAULT_RANK_SCHEDULE: tuple[tuple[int, int], ...] = (
    (1, 20),
    (101, 110),
    (317, 326),
    (1001, 1010),
    (2155, 2164),
    (4642, 4651),
    (10001, 10010),
    (17783, 17792),
    (31623, 31632),
    (56235, 56244),
    (100001, 100010),
    (158490, 158499),
    (251189, 251198),
    (398108, 398117),
    (630958, 630967),
    (1000001, 1000010),
)


def validate_schedule(schedule: Sequence[tuple[int, int]]) -> None:
    prev_hi = 0
    for lo, hi in schedule:
        if lo < 1 or hi < lo:
            raise ValueError(f"bad rank interval ({lo}, {hi})")
        if lo <= prev_hi:
            raise ValueError("rank intervals must be ascending and disjoint")
        prev_hi = hi


@dataclass(slots=True)
class EvaluationSample:
    doc_ids: list[str]
    truncated: bool


def evaluation_sample(
    table, schedule: Sequence[tuple[int, int]] = DEFAULT_RANK_SCHEDULE
) -> EvaluationSample:
    """Doc ids at the scheduled ranks of a score table.

    Ranks are 1-based over score descending (ties by id). Intervals whose
    upper end exceeds the pool size are dropped entirely and flagged.
    """
    validate_schedule(schedule)
    ranked = table.ranked_ids()
    n = len(ranked)
    out: list[str] = []
    truncated = False
    for lo, hi in schedule:
        if hi > n:
            truncated = True
            continue
        out.extend(ranked[lo - 1 : hi])
    return EvaluationSample(out, truncated)


def _pooled_arrays(
    pool_labels, ranks: Mapping[str, int]
) -> tuple[np.ndarray, np.ndarray]:
    items = sorted(pool_labels.items()) if isinstance(pool_labels, Mapping) else list(pool_labels)
    if not items:
        raise ValueError("empty evaluation pool")
    missing = [d for d, _ in items if d not in ranks]
    if missing:
        raise ValueError(f"pooled docs without a current rank: {missing[:10]}")
    r = np.asarray([ranks[d] for d, _ in items], dtype=np.int64)
    y = np.asarray([bool(l) for _, l in items])
    return r, y


def average_precision(pool_labels, ranks: Mapping[str, int]) -> float:
    """AP over the pooled evaluation labels at their current ranks.

    Pooled docs are ordered by rank; precision at each positive counts the
    pooled docs at or above it; the mean over all pooled docs (positives
    contributing their precision, negatives zero) is returned.
    """
    r, y = _pooled_arrays(pool_labels, ranks)
    return _ap_from_arrays(r, y)


def _ap_from_arrays(r: np.ndarray, y: np.ndarray) -> float:
    order = np.argsort(r, kind="stable")
    ys = y[order].astype(np.float64)
    prec = np.cumsum(ys) / np.arange(1, len(ys) + 1)
    return float((prec * ys).sum() / len(ys))


@dataclass(slots=True)
class PredictedPositives:
    lower: float
    mid: float
    upper: float
    unbounded: bool = False


def predicted_positives(
    pool_labels,
    ranks: Mapping[str, int],
    n_ranked: int,
    bins: int = 20,
    strict: bool = True,
) -> PredictedPositives:
    """Bracket the positive count by binned positive share along the ranking.

    Pooled labels are sorted by current rank and cut into ``bins`` equal-size
    bins. The first bin whose positive share falls below one half (strictly
    by default; at-or-below with ``strict=False``) marks the crossing: the
    bounds are the mean ranks of the bins either side of it. Every bin below
    returns (1, 1, 1); no bin below returns an upper bound of ``n_ranked``
    flagged unbounded; a crossing in the very first bin uses rank 1 as the
    lower bound.
    """
    r, y = _pooled_arrays(pool_labels, ranks)
    if len(r) < bins:
        raise ValueError(f"need at least {bins} pooled labels, got {len(r)}")
    order = np.argsort(r, kind="stable")
    r, y = r[order], y[order]
    groups = np.array_split(np.arange(len(r)), bins)
    shares = np.asarray([y[g].mean() for g in groups])
    mean_ranks = np.asarray([r[g].mean() for g in groups])
    below = shares < 0.5 if strict else shares <= 0.5
    if below.all():
        return PredictedPositives(1.0, 1.0, 1.0)
    if not below.any():
        lower = float(mean_ranks[-1])
        upper = float(n_ranked)
        return PredictedPositives(lower, (lower + upper) / 2.0, upper, unbounded=True)
    crossing = int(np.argmax(below))
    lower = 1.0 if crossing == 0 else float(mean_ranks[crossing - 1])
    upper = float(mean_ranks[crossing])
    return PredictedPositives(lower, (lower + upper) / 2.0, upper)


def diversity(embeddings: np.ndarray) -> float:
    """Mean pairwise cosine distance over distinct unit embeddings.

    Exactly duplicated rows collapse to one (duplication leaves the value
    unchanged); fewer than two distinct rows return 0.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        if emb.size == 0:
            return 0.0
        raise ValueError("embeddings must be a 2-d array")
    if emb.shape[0] <= 1:
        return 0.0
    norms = np.linalg.norm(emb, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("embeddings must be unit vectors")
    uniq = np.unique(emb, axis=0)
    m = uniq.shape[0]
    if m <= 1:
        return 0.0
    gram = uniq @ uniq.T
    iu = np.triu_indices(m, k=1)
    return float(np.mean(1.0 - gram[iu]))


def bootstrap_se(
    items: Sequence, statistic: Callable, B: int = 1000, seed=0
) -> tuple[float, float]:
    """Bootstrap mean and standard error of a statistic.

    Each replicate resamples the items with replacement using its own seeded
    substream and applies ``statistic`` to the resampled list. Returns the
    mean and the sample standard deviation over replicates.
    """
    if not items:
        raise ValueError("cannot bootstrap an empty sample")
    if B < 2:
        raise ValueError("B must be >= 2")
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    n = len(items)
    stats = np.empty(B, dtype=np.float64)
    for b in range(B):
        rng = np.random.default_rng([*base, b])
        idx = rng.integers(0, n, n)
        stats[b] = statistic([items[i] for i in idx])
    return float(stats.mean()), float(stats.std(ddof=1))


def welch_test(
    m1: float, se1: float, n1: int, m2: float, se2: float, n2: int
) -> float:
    """Two-sided Welch p-value from summary means/SEs.

    Degrees of freedom by Welch-Satterthwaite with the given per-side counts.
    Zero variance on both sides degenerates to p=1 on equality, p=0 otherwise.
    """
    var = se1 * se1 + se2 * se2
    if var == 0.0:
        return 1.0 if m1 == m2 else 0.0
    tstat = (m1 - m2) / np.sqrt(var)
    d1 = (se1 ** 4) / (n1 - 1) if n1 > 1 else np.inf
    d2 = (se2 ** 4) / (n2 - 1) if n2 > 1 else np.inf
    if np.isinf(d1) and np.isinf(d2):
        return 1.0
    df = var * var / (d1 + d2)
    return float(2.0 * student_t.sf(abs(tstat), df))


@dataclass(slots=True)
class MetricsRecord:
    category: str
    strategy: str
    iteration: int
    ap: float
    ap_se: float
    e_lower: float
    e_mid: float
    e_upper: float
    e_unbounded: bool
    diversity: float
    diversity_se: float
    n_pooled: int
    n_positive: int
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "class": self.category,
            "strategy": self.strategy,
            "iteration": self.iteration,
            "ap": self.ap,
            "ap_se": self.ap_se,
            "e_lower": self.e_lower,
            "e_mid": self.e_mid,
            "e_upper": self.e_upper,
            "e_unbounded": self.e_unbounded,
            "diversity": self.diversity,
            "diversity_se": self.diversity_se,
            "n_pooled": self.n_pooled,
            "n_positive": self.n_positive,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRecord":
        return cls(
            category=d["class"],
            strategy=d["strategy"],
            iteration=d["iteration"],
            ap=d["ap"],
            ap_se=d["ap_se"],
            e_lower=d["e_lower"],
            e_mid=d["e_mid"],
            e_upper=d["e_upper"],
            e_unbounded=d["e_unbounded"],
            diversity=d["diversity"],
            diversity_se=d["diversity_se"],
            n_pooled=d["n_pooled"],
            n_positive=d["n_positive"],
            converged=d["converged"],
        )


def check_convergence(
    history: Sequence[MetricsRecord], window: int = 2, alpha: float = 0.05
) -> bool:
    """Stability over the last ``window`` iteration transitions.

    Converged when, for each consecutive pair in the window, the Welch tests
    on AP and diversity are both non-significant at ``alpha`` and the
    predicted-positive intervals overlap. Needs ``window + 1`` records.
    """
    if len(history) < window + 1:
        return False
    recent = list(history)[-(window + 1):]
    for a, b in zip(recent, recent[1:]):
        p_ap = welch_test(a.ap, a.ap_se, a.n_pooled, b.ap, b.ap_se, b.n_pooled)
        if p_ap < alpha:
            return False
        p_div = welch_test(
            a.diversity, a.diversity_se, a.n_positive,
            b.diversity, b.diversity_se, b.n_positive,
        )
        if p_div < alpha:
            return False
        if a.e_upper < b.e_lower or b.e_upper < a.e_lower:
            return False
    return True


def write_metrics_report(records: Sequence[MetricsRecord], path: str) -> None:
    """Canonical JSON array of per-(class, strategy, iteration) records."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(metrics_report_json(records))


def metrics_report_json(records: Sequence[MetricsRecord]) -> str:
    ordered = sorted(records, key=lambda r: (r.category, r.strategy, r.iteration))
    return json.dumps(
        [r.to_dict() for r in ordered], indent=2, sort_keys=True
    ) + "\n"


# -- embeddings ---------------------------------------------------------------

def hashed_embeddings(token_lists: Sequence[Sequence[str]], dim: int = 64) -> np.ndarray:
    """Deterministic hashed bag-of-tokens unit vectors.

    Each token adds +/-1 to one of ``dim`` coordinates (both chosen by a
    fixed hash); rows are L2-normalized. Empty documents map to a fixed unit
    vector so downstream cosine math stays defined.
    """
    if dim < 2 or dim & (dim - 1):
        raise ValueError("dim must be a power of two >= 2")
    out = np.zeros((len(token_lists), dim), dtype=np.float64)
    for i, tokens in enumerate(token_lists):
        for tok in tokens:
            h = crc32(b"e\x00" + tok.encode("utf-8"))
            sign = 1.0 if (h >> 20) & 1 else -1.0
            out[i, h % dim] += sign
    norms = np.linalg.norm(out, axis=1)
    zero = norms == 0.0
    out[zero, 0] = 1.0
    norms[zero] = 1.0
    return out / norms[:, None]


def load_embedding_file(path: str) -> dict[str, np.ndarray]:
    """CSV of doc_id followed by float coordinates; rows are L2-normalized."""
    out: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise ValueError(f"line {lineno}: expected doc_id and coordinates")
            doc_id = parts[0]
            try:
                vec = np.asarray([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ValueError(f"line {lineno}: non-numeric coordinate") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"line {lineno}: inconsistent dimension")
            if doc_id in out:
                raise ValueError(f"line {lineno}: duplicate doc id {doc_id!r}")
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise ValueError(f"line {lineno}: zero vector")
            out[doc_id] = vec / norm
    return out
