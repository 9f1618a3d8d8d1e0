"""Query strategies: how each iteration picks the docs to label next.

Five policies over the scored sampling pool: stratified seed sampling (the
baseline), uncertainty around 0.5, uncertainty around the calibrated
threshold, straight top-rank retrieval, and the exploit-explore mix of
random top-set draws plus docs matching freshly mined high-lift skip-grams.
Every batch records per-doc provenance and never returns an excluded doc.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .calibration import bootstrap_params, calibrated_threshold
from .corpus import Corpus, subsample_ids
from .motifs import Motif
from .skipgrams import GramIndex, SkipGram, compute_lift, select_top_lift
from .scoring import ScoreTable

__all__ = [
    "QueryBatch",
    "query_adaptive",
    "query_exploit_explore",
    "query_stratified",
    "query_uncertainty",
    "query_uncertainty_calibrated",
    "write_batch_manifest",
]


@dataclass(slots=True)
class QueryBatch:
    category: str
    iteration: int
    doc_ids: list[str]
    provenance: dict[str, str]
    shortfall: bool = False
    selected_grams: tuple[SkipGram, ...] = ()
    center: float | None = None


def _closest(table: ScoreTable, center: float, n: int) -> list[str]:
    dist = np.abs(table.values - center)
    order = np.lexsort((np.arange(len(dist)), dist))
    return [table.ids[i] for i in order[:n]]


def query_uncertainty(
    table: ScoreTable, n: int = 100, center: float = 0.5
) -> QueryBatch:
    """The n docs scoring closest to ``center`` (ties by ascending id)."""
    ids = _closest(table, center, n)
    return QueryBatch(
        category=table.category,
        iteration=table.iteration,
        doc_ids=ids,
        provenance={d: "uncertainty" for d in ids},
        shortfall=len(ids) < n,
        center=center,
    )


def query_uncertainty_calibrated(
    table: ScoreTable,
    eval_labels: Sequence[tuple[float, bool]],
    n: int = 100,
    B: int = 1000,
    seed=0,
) -> QueryBatch:
    """Uncertainty centered on the bootstrap-calibrated threshold.

    The threshold is derived from the labeled evaluation scores via the
    balanced bootstrap; the batch then mirrors plain uncertainty sampling
    around that point.
    """
    params = bootstrap_params(eval_labels, B=B, seed=seed)
    result = calibrated_threshold(params)
    batch = query_uncertainty(table, n=n, center=result.x_star)
    return batch


def query_adaptive(table: ScoreTable, n: int = 100) -> QueryBatch:
    """The n top-scoring docs (ties by ascending id)."""
    ids = table.ranked_ids()[:n]
    return QueryBatch(
        category=table.category,
        iteration=table.iteration,
        doc_ids=ids,
        provenance={d: "top" for d in ids},
        shortfall=len(ids) < n,
    )


def query_stratified(
    seeds: Sequence[Motif],
    pool: Corpus,
    category: str,
    iteration: int,
    n: int = 100,
    seed=0,
) -> QueryBatch:
    """Round-robin seeded sampling across the seed motifs.

    Each motif's matching non-excluded docs are shuffled independently, then
    picked one at a time in motif order, skipping docs already taken, until
    ``n`` docs are chosen or every motif is exhausted (shortfall). With k
    equally rich motifs each contributes ~n/k docs; exhausted motifs simply
    drop out, redistributing their share.
    """
    if not seeds:
        raise ValueError("stratified sampling needs at least one seed motif")
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    excluded = pool.excluded
    per_motif: list[tuple[Motif, list[str]]] = []
    for j, motif in enumerate(seeds):
        cand = [i for i in motif.matching_ids(pool) if i not in excluded]
        rng = np.random.default_rng([*base, j])
        perm = rng.permutation(len(cand))
        per_motif.append((motif, [cand[p] for p in perm]))
    chosen: list[str] = []
    provenance: dict[str, str] = {}
    cursors = [0] * len(per_motif)
    while len(chosen) < n:
        progressed = False
        for j, (motif, cand) in enumerate(per_motif):
            while cursors[j] < len(cand) and cand[cursors[j]] in provenance:
                cursors[j] += 1
            if cursors[j] >= len(cand):
                continue
            doc_id = cand[cursors[j]]
            cursors[j] += 1
            chosen.append(doc_id)
            provenance[doc_id] = f"seed:{motif.display}"
            progressed = True
            if len(chosen) == n:
                break
        if not progressed:
            break
    return QueryBatch(
        category=category,
        iteration=iteration,
        doc_ids=chosen,
        provenance=provenance,
        shortfall=len(chosen) < n,
    )


def query_exploit_explore(
    table: ScoreTable,
    pool: Corpus,
    indexes: Mapping[int, GramIndex],
    category: str,
    iteration: int,
    used_previous: Sequence[SkipGram] = (),
    n_exploit: int = 50,
    top_size: int = 10000,
    per_gram: int = 5,
    k_per_n: int = 5,
    seed=0,
) -> QueryBatch:
    """Random draws from the top set plus docs matching fresh high-lift grams.

    The top ``top_size`` ranked docs (truncated with a shortfall flag when
    the pool is smaller) supply a seeded uniform sample of ``n_exploit``
    docs. For each gram length, lift over that top set is computed and the
    top ``k_per_n`` disjoint unused grams are selected; each contributes up
    to ``per_gram`` seeded draws from its matching non-excluded docs, a doc
    already in the batch being replaced by the next candidate.
    """
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    ranked = table.ranked_ids()
    top_ids = ranked[:top_size]
    shortfall = len(top_ids) < top_size
    provenance: dict[str, str] = {}
    chosen: list[str] = []
    for doc_id in subsample_ids(top_ids, n_exploit, [*base, 0]):
        provenance[doc_id] = "exploit"
        chosen.append(doc_id)
    if len(top_ids) < n_exploit:
        shortfall = True
    selected: list[SkipGram] = []
    for n_len in sorted(indexes):
        entries = compute_lift(top_ids, pool, indexes[n_len])
        result = select_top_lift(entries, used_previous, k=k_per_n)
        shortfall = shortfall or result.shortfall
        selected.extend(result.grams)
    excluded = pool.excluded
    for j, gram in enumerate(selected):
        motif = Motif.ordered(gram)
        cand = [
            i
            for i in motif.matching_ids(pool)
            if i not in excluded and i not in provenance
        ]
        rng = np.random.default_rng([*base, 1 + j])
        perm = rng.permutation(len(cand))
        take = [cand[p] for p in perm[:per_gram]]
        if len(take) < per_gram:
            shortfall = True
        tag = "explore:" + "+".join(gram)
        for doc_id in take:
            provenance[doc_id] = tag
            chosen.append(doc_id)
    return QueryBatch(
        category=category,
        iteration=iteration,
        doc_ids=chosen,
        provenance=provenance,
        shortfall=shortfall,
        selected_grams=tuple(selected),
    )


def write_batch_manifest(
    batches: Sequence[QueryBatch], strategy: str, path: str
) -> None:
    """JSONL manifest: one record per queried doc with its provenance."""
    with open(path, "w", encoding="utf-8") as fh:
        for batch in batches:
            for doc_id in batch.doc_ids:
                rec = {
                    "doc_id": doc_id,
                    "class": batch.category,
                    "iteration": batch.iteration,
                    "strategy": strategy,
                    "provenance": batch.provenance[doc_id],
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
