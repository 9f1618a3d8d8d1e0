from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rareloop.corpus import Corpus
from rareloop.motifs import Motif
from rareloop.scoring import ScoreTable
from rareloop.skipgrams import build_gram_index
from rareloop.strategies import (
    query_adaptive,
    query_exploit_explore,
    query_stratified,
    query_uncertainty,
    query_uncertainty_calibrated,
    write_batch_manifest,
)


def _table(values, category="c", iteration=0):
    ids = tuple(f"d{i:04d}" for i in range(len(values)))
    return ScoreTable(category, iteration, ids, np.asarray(values, dtype=np.float64))


def test_uncertainty_picks_scores_closest_to_half():
    table = _table([0.1, 0.45, 0.52, 0.97, 0.5])
    batch = query_uncertainty(table, n=3)
    assert batch.doc_ids == ["d0004", "d0002", "d0001"]
    assert batch.center == 0.5
    assert set(batch.provenance.values()) == {"uncertainty"}
    assert not batch.shortfall


def test_uncertainty_tie_breaks_by_position_order():
    table = _table([0.4, 0.6, 0.4, 0.6])
    batch = query_uncertainty(table, n=2)
    assert batch.doc_ids == ["d0000", "d0001"]


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0.0, 1.0), min_size=1, max_size=50),
    st.integers(1, 10),
    st.floats(0.0, 1.0),
)
def test_uncertainty_brute_force_property(values, n, center):
    table = _table(values)
    batch = query_uncertainty(table, n=n, center=center)
    got = set(batch.doc_ids)
    dist = {d: abs(table.score_of(d) - center) for d in table.ids}
    # no unpicked doc sits strictly closer than a picked one
    worst_in = max(dist[d] for d in got)
    for d in table.ids:
        if d not in got:
            assert dist[d] >= worst_in - 1e-15
    assert len(batch.doc_ids) == min(n, len(values))
    assert batch.shortfall == (len(values) < n)


def test_uncertainty_calibrated_centers_on_threshold():
    # labeled eval scores balanced around 0.7
    rng = np.random.default_rng(3)
    eval_labels = [(float(np.clip(0.7 + 0.1 * rng.normal(), 0, 1)), True) for _ in range(50)]
    eval_labels += [(float(np.clip(0.7 - 0.1 * rng.normal(), 0, 1)), False) for _ in range(50)]
    table = _table(list(np.linspace(0.0, 1.0, 201)))
    batch = query_uncertainty_calibrated(table, eval_labels, n=5, B=30, seed=0)
    assert batch.center is not None
    picked = [table.score_of(d) for d in batch.doc_ids]
    assert all(abs(s - batch.center) < 0.05 for s in picked)
    assert batch.center == pytest.approx(0.7, abs=0.1)


def test_uncertainty_calibrated_deterministic():
    eval_labels = [(0.8, True), (0.9, True), (0.2, False), (0.3, False)]
    table = _table(list(np.linspace(0, 1, 50)))
    b1 = query_uncertainty_calibrated(table, eval_labels, n=4, B=10, seed=7)
    b2 = query_uncertainty_calibrated(table, eval_labels, n=4, B=10, seed=7)
    assert b1.doc_ids == b2.doc_ids and b1.center == b2.center


def test_adaptive_takes_top_ranks():
    table = _table([0.2, 0.9, 0.5, 0.9, 0.1])
    batch = query_adaptive(table, n=3)
    assert batch.doc_ids == ["d0001", "d0003", "d0002"]
    assert set(batch.provenance.values()) == {"top"}


def test_adaptive_shortfall_on_small_pool():
    batch = query_adaptive(_table([0.5, 0.6]), n=10)
    assert batch.shortfall and len(batch.doc_ids) == 2


def _seeded_pool():
    c = Corpus()
    for i in range(25):
        c.add(f"a{i:03d}", f"alpha marker text {i}")
    for i in range(25):
        c.add(f"b{i:03d}", f"beta marker text {i}")
    for i in range(25):
        c.add(f"c{i:03d}", f"gamma marker text {i}")
    for i in range(25):
        c.add(f"d{i:03d}", f"delta marker text {i}")
    for i in range(50):
        c.add(f"z{i:03d}", f"unrelated filler {i}")
    motifs = [Motif.literal("alpha"), Motif.literal("beta"),
              Motif.literal("gamma"), Motif.literal("delta")]
    return c, motifs


def test_stratified_round_robin_equal_shares():
    pool, motifs = _seeded_pool()
    batch = query_stratified(motifs, pool, "c", 0, n=100, seed=0)
    assert len(batch.doc_ids) == 100
    assert not batch.shortfall
    by_seed = {}
    for doc, prov in batch.provenance.items():
        by_seed.setdefault(prov, []).append(doc)
    assert {len(v) for v in by_seed.values()} == {25}
    assert set(by_seed) == {
        "seed:alpha", "seed:beta", "seed:gamma", "seed:delta"
    }
    # every sampled doc really matches its motif
    for prov, docs in by_seed.items():
        word = prov.split(":")[1]
        for d in docs:
            assert word in pool.get(d).tokens


def test_stratified_redistributes_exhausted_motifs():
    pool, motifs = _seeded_pool()
    # a motif matching only 5 docs: others absorb its share
    for i in range(5):
        pool.add(f"e{i:03d}", f"epsilon marker {i}")
    motifs = motifs[:2] + [Motif.literal("epsilon")]
    batch = query_stratified(motifs, pool, "c", 0, n=40, seed=1)
    assert len(batch.doc_ids) == 40
    counts = {}
    for prov in batch.provenance.values():
        counts[prov] = counts.get(prov, 0) + 1
    assert counts["seed:epsilon"] == 5
    assert counts["seed:alpha"] + counts["seed:beta"] == 35
    assert abs(counts["seed:alpha"] - counts["seed:beta"]) <= 1


def test_stratified_shortfall_when_all_exhausted():
    pool, _ = _seeded_pool()
    batch = query_stratified([Motif.literal("alpha")], pool, "c", 0, n=100)
    assert batch.shortfall
    assert len(batch.doc_ids) == 25


def test_stratified_skips_excluded_and_never_duplicates():
    pool, motifs = _seeded_pool()
    pool.exclude_ids([f"a{i:03d}" for i in range(20)])
    batch = query_stratified(motifs, pool, "c", 0, n=80, seed=2)
    assert len(batch.doc_ids) == len(set(batch.doc_ids)) == 80
    assert not any(d in pool.excluded for d in batch.doc_ids)


def test_stratified_deterministic_but_seed_sensitive():
    pool, motifs = _seeded_pool()
    b1 = query_stratified(motifs, pool, "c", 0, n=30, seed=5)
    b2 = query_stratified(motifs, pool, "c", 0, n=30, seed=5)
    b3 = query_stratified(motifs, pool, "c", 0, n=30, seed=6)
    assert b1.doc_ids == b2.doc_ids
    assert b1.doc_ids != b3.doc_ids


def test_stratified_overlapping_motifs_never_double_count():
    pool = Corpus()
    for i in range(30):
        pool.add(f"x{i:03d}", "alpha beta shared")
    motifs = [Motif.literal("alpha"), Motif.literal("beta")]
    batch = query_stratified(motifs, pool, "c", 0, n=20, seed=0)
    assert len(batch.doc_ids) == len(set(batch.doc_ids)) == 20


def test_stratified_empty_seed_list_errors():
    pool, _ = _seeded_pool()
    with pytest.raises(ValueError):
        query_stratified([], pool, "c", 0)


def _exploit_pool():
    rng = np.random.default_rng(40)
    c = Corpus()
    # 60 docs rich in a marker pair, 140 background docs
    for i in range(60):
        c.add(f"m{i:03d}", f"resume submitted today case {i}")
    for i in range(140):
        filler = " ".join(rng.choice(["the", "cat", "sat", "mat", "dog"], 5))
        c.add(f"f{i:03d}", f"{filler} {i}")
    return c


def test_exploit_explore_structure():
    pool = _exploit_pool()
    ids = pool.ids_sorted()
    # score marker docs high so the top set is enriched
    values = np.asarray([0.9 if i.startswith("m") else 0.1 for i in ids])
    table = ScoreTable("c", 1, tuple(ids), values)
    indexes = {2: build_gram_index(pool, 2, min_freq=0.0)}
    batch = query_exploit_explore(
        table, pool, indexes, "c", 1, n_exploit=10, top_size=60, per_gram=5,
        k_per_n=5, seed=0,
    )
    exploit = [d for d, p in batch.provenance.items() if p == "exploit"]
    explore = [d for d, p in batch.provenance.items() if p.startswith("explore:")]
    assert len(exploit) == 10
    # every selected gram comes from the enriched marker docs (equal-lift
    # ties break lexicographically, so the exact pair is not pinned)
    marker = {"resume", "submitted", "today", "case"}
    assert batch.selected_grams
    for gram in batch.selected_grams:
        assert set(gram) <= marker
    seen = [t for g in batch.selected_grams for t in g]
    assert len(seen) == len(set(seen))  # one-gram-disjoint
    assert explore  # the mined grams matched docs
    assert len(batch.doc_ids) == len(set(batch.doc_ids))
    # every explore doc matches its gram in order
    for doc_id, prov in batch.provenance.items():
        if prov.startswith("explore:"):
            gram = tuple(prov[len("explore:"):].split("+"))
            assert Motif.ordered(gram).match_tokens(pool.get(doc_id).tokens)


def test_exploit_explore_excludes_used_grams():
    pool = _exploit_pool()
    ids = pool.ids_sorted()
    values = np.asarray([0.9 if i.startswith("m") else 0.1 for i in ids])
    table = ScoreTable("c", 2, tuple(ids), values)
    indexes = {2: build_gram_index(pool, 2, min_freq=0.0)}
    batch = query_exploit_explore(
        table, pool, indexes, "c", 2, used_previous=[("resume", "case")],
        n_exploit=5, top_size=60, seed=0,
    )
    assert ("resume", "case") not in batch.selected_grams
    assert batch.selected_grams  # other grams still mined


def test_exploit_explore_small_pool_flags_shortfall():
    pool = _exploit_pool()
    ids = pool.ids_sorted()
    values = np.linspace(0, 1, len(ids))
    table = ScoreTable("c", 0, tuple(ids), values)
    indexes = {2: build_gram_index(pool, 2, min_freq=0.0)}
    batch = query_exploit_explore(
        table, pool, indexes, "c", 0, n_exploit=50, top_size=10000, seed=0
    )
    assert batch.shortfall  # top set truncated at pool size


def test_exploit_explore_never_returns_excluded():
    pool = _exploit_pool()
    pool.exclude_ids([f"m{i:03d}" for i in range(30)])
    ids = pool.candidate_ids()
    values = np.asarray([0.9 if i.startswith("m") else 0.1 for i in ids])
    table = ScoreTable("c", 1, tuple(ids), values)
    indexes = {2: build_gram_index(pool, 2, min_freq=0.0)}
    batch = query_exploit_explore(
        table, pool, indexes, "c", 1, n_exploit=10, top_size=30, seed=3
    )
    assert not set(batch.doc_ids) & pool.excluded


def test_exploit_explore_deterministic():
    pool = _exploit_pool()
    ids = pool.ids_sorted()
    values = np.asarray([0.9 if i.startswith("m") else 0.1 for i in ids])
    table = ScoreTable("c", 1, tuple(ids), values)
    indexes = {
        2: build_gram_index(pool, 2, min_freq=0.0),
        3: build_gram_index(pool, 3, min_freq=0.0),
    }
    b1 = query_exploit_explore(table, pool, indexes, "c", 1, seed=9)
    b2 = query_exploit_explore(table, pool, indexes, "c", 1, seed=9)
    assert b1.doc_ids == b2.doc_ids
    assert b1.selected_grams == b2.selected_grams


def test_exploit_explore_batch_size_bound():
    pool = _exploit_pool()
    ids = pool.ids_sorted()
    values = np.asarray([0.9 if i.startswith("m") else 0.1 for i in ids])
    table = ScoreTable("c", 1, tuple(ids), values)
    indexes = {
        2: build_gram_index(pool, 2, min_freq=0.0),
        3: build_gram_index(pool, 3, min_freq=0.0),
    }
    batch = query_exploit_explore(
        table, pool, indexes, "c", 1, n_exploit=50, top_size=60, seed=0
    )
    # 50 exploit + up to 10 grams x 5 docs
    assert len(batch.doc_ids) <= 100


def test_batch_manifest_format(tmp_path):
    table = _table([0.2, 0.9, 0.5])
    batch = query_adaptive(table, n=2)
    path = tmp_path / "batch.jsonl"
    write_batch_manifest([batch], "adaptive", str(path))
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec == {
        "class": "c",
        "doc_id": "d0001",
        "iteration": 0,
        "provenance": "top",
        "strategy": "adaptive",
    }
