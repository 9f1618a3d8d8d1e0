from __future__ import annotations

import gzip
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rareloop.corpus import (
    ANY,
    Corpus,
    sample_matching,
    split_corpus,
    tokenize,
)
from rareloop.motifs import Motif


def test_tokenize_lowercases_and_splits_punctuation_runs():
    assert tokenize("I just got FIRED today!") == [
        "i", "just", "got", "fired", "today", "!",
    ]


def test_tokenize_keeps_tags_users_urls_whole():
    assert tokenize("need a #job http://x.co") == ["need", "a", "#job", "http://x.co"]
    assert tokenize("ask @boss_man about it") == ["ask", "@boss_man", "about", "it"]


def test_tokenize_punctuation_runs_are_single_tokens():
    assert tokenize("what?!?") == ["what", "?!?"]
    assert tokenize("well... ok") == ["well", "...", "ok"]


def test_tokenize_apostrophes_split_as_punctuation():
    assert tokenize("don't") == ["don", "'", "t"]


def test_tokenize_empty_and_whitespace():
    assert tokenize("") == []
    assert tokenize("   \t\n ") == []


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_tokenize_roundtrip_stable(text):
    # retokenizing the joined token stream reproduces it exactly
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=80))
def test_tokenize_deterministic(text):
    assert tokenize(text) == tokenize(text)


def _corpus(n=10, fn=None):
    c = Corpus()
    for i in range(n):
        text = fn(i) if fn else f"doc number {i} filler words"
        c.add(f"d{i:04d}", text)
    return c


def test_add_rejects_duplicate_id():
    c = Corpus()
    c.add("a", "x")
    with pytest.raises(ValueError, match="duplicate"):
        c.add("a", "y")


def test_index_posting_lists_sorted_and_exact():
    c = _corpus(50, lambda i: f"tok{i % 7} shared word{i % 3}")
    for tok, postings in c.index.items():
        assert postings == sorted(postings)
        expected = sorted(d.id for d in c if tok in d.tokens)
        assert postings == expected


def test_index_exhaustive_consistency_random():
    rng = np.random.default_rng(7)
    vocab = [f"w{j}" for j in range(40)]
    c = Corpus()
    for i in range(500):
        toks = rng.choice(vocab, size=rng.integers(1, 12))
        c.add(f"r{i:05d}", " ".join(toks))
    for tok in vocab:
        expected = sorted(d.id for d in c if tok in d.tokens)
        assert c.index.get(tok, []) == expected


def test_split_is_seeded_partition():
    c = _corpus(101)
    pair = split_corpus(c, 0.5, seed=3)
    ids_e = set(pair.eval_pool.ids_sorted())
    ids_s = set(pair.sample_pool.ids_sorted())
    assert len(ids_e) == round(0.5 * 101)
    assert ids_e.isdisjoint(ids_s)
    assert ids_e | ids_s == set(c.ids_sorted())
    again = split_corpus(c, 0.5, seed=3)
    assert set(again.eval_pool.ids_sorted()) == ids_e
    other = split_corpus(c, 0.5, seed=4)
    assert set(other.eval_pool.ids_sorted()) != ids_e


def test_split_ratio_validation():
    c = _corpus(4)
    for ratio in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            split_corpus(c, ratio, seed=0)


def test_split_three_docs_half():
    c = _corpus(3)
    pair = split_corpus(c, 0.5, seed=0)
    sizes = {len(pair.eval_pool), len(pair.sample_pool)}
    assert sizes == {1, 2}


def test_sample_matching_any_and_determinism():
    c = _corpus(30)
    r1 = sample_matching(c, ANY, 10, seed=5)
    r2 = sample_matching(c, ANY, 10, seed=5)
    assert [d.id for d in r1.docs] == [d.id for d in r2.docs]
    assert not r1.shortfall
    r3 = sample_matching(c, ANY, 10, seed=6)
    assert [d.id for d in r3.docs] != [d.id for d in r1.docs]


def test_sample_matching_motif_and_shortfall():
    c = Corpus()
    for i in range(200):
        c.add(f"d{i:04d}", "i lost my job today" if i % 10 == 0 else "nothing here")
    motif = Motif.literal("lost my job")
    res = sample_matching(c, motif, 150, seed=0)
    assert res.shortfall  # only 20 matches exist
    assert len(res.docs) == 20
    assert all(motif.matches(d) for d in res.docs)
    res2 = sample_matching(c, motif, 5, seed=0)
    assert len(res2.docs) == 5 and not res2.shortfall


def test_sample_excludes_excluded_ids():
    c = _corpus(30)
    first = sample_matching(c, ANY, 10, seed=1)
    c.exclude_ids([d.id for d in first.docs])
    second = sample_matching(c, ANY, 30, seed=2)
    assert second.shortfall  # only 20 remain
    assert {d.id for d in second.docs}.isdisjoint({d.id for d in first.docs})


def test_exclusion_is_cumulative_and_validates():
    c = _corpus(5)
    c.exclude_ids(["d0000"])
    c.exclude_ids(["d0001"])
    assert c.excluded == {"d0000", "d0001"}
    with pytest.raises(KeyError):
        c.exclude_ids(["zz"])
    # counts unaffected by exclusion
    assert len(c) == 5


def test_from_jsonl_roundtrip(tmp_path):
    path = tmp_path / "corpus.jsonl"
    rows = [{"id": f"x{i}", "text": f"text number {i}"} for i in range(5)]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    c = Corpus.from_jsonl(str(path))
    assert len(c) == 5
    assert c.get("x3").text == "text number 3"
    assert c.get("x3").tokens == tokenize("text number 3")


def test_from_jsonl_gzip(tmp_path):
    path = tmp_path / "corpus.jsonl.gz"
    with gzip.open(path, "wt") as fh:
        fh.write(json.dumps({"id": "a", "text": "hello there"}) + "\n")
    c = Corpus.from_jsonl(str(path))
    assert len(c) == 1


def test_from_jsonl_duplicate_id_names_line(tmp_path):
    path = tmp_path / "dup.jsonl"
    path.write_text(
        json.dumps({"id": "a", "text": "one"})
        + "\n"
        + json.dumps({"id": "a", "text": "two"})
        + "\n"
    )
    with pytest.raises(ValueError, match="line 2"):
        Corpus.from_jsonl(str(path))


def test_from_jsonl_malformed_lines(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a"}\n')
    with pytest.raises(ValueError, match="line 1"):
        Corpus.from_jsonl(str(path))
    path.write_text('{"id": 3, "text": "x"}\n')
    with pytest.raises(ValueError, match="line 1"):
        Corpus.from_jsonl(str(path))
    path.write_text("not json\n")
    with pytest.raises(ValueError, match="line 1"):
        Corpus.from_jsonl(str(path))
