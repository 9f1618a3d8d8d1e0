from __future__ import annotations

import json
import time

import numpy as np
import pytest

from rareloop.evaluation import (
    DEFAULT_RANK_SCHEDULE,
    MetricsRecord,
    average_precision,
    bootstrap_se,
    check_convergence,
    diversity,
    evaluation_sample,
    hashed_embeddings,
    load_embedding_file,
    metrics_report_json,
    predicted_positives,
    validate_schedule,
    welch_test,
    write_metrics_report,
)
from rareloop.scoring import ScoreTable


def _table(n, seed=0):
    rng = np.random.default_rng(seed)
    ids = tuple(f"d{i:07d}" for i in range(n))
    return ScoreTable("c", 0, ids, rng.random(n))


def mask_matrix_ap(pairs):
    # O(n^2) oracle: precision at each positive from an explicit rank-compare
    # matrix, averaged over every pooled doc
    ranks = np.asarray([r for r, _ in pairs], dtype=np.float64)
    labels = np.asarray([bool(y) for _, y in pairs])
    n = len(pairs)
    total = 0.0
    for i in range(n):
        if not labels[i]:
            continue
        at_or_above = ranks <= ranks[i]
        total += labels[at_or_above].sum() / at_or_above.sum()
    return total / n


def loop_diversity(embeddings):
    # O(n^2) oracle with explicit dedup by exact row equality
    distinct = []
    for row in embeddings:
        if not any(np.array_equal(row, d) for d in distinct):
            distinct.append(row)
    if len(distinct) <= 1:
        return 0.0
    total, count = 0.0, 0
    for i in range(len(distinct)):
        for j in range(i + 1, len(distinct)):
            total += 1.0 - float(np.dot(distinct[i], distinct[j]))
            count += 1
    return total / count


def test_default_schedule_has_sixteen_intervals_and_170_ranks():
    validate_schedule(DEFAULT_RANK_SCHEDULE)
    assert len(DEFAULT_RANK_SCHEDULE) == 16
    assert sum(hi - lo + 1 for lo, hi in DEFAULT_RANK_SCHEDULE) == 170
    assert DEFAULT_RANK_SCHEDULE[-1] == (1000001, 1000010)


def test_schedule_validation_rejects_overlap_and_disorder():
    with pytest.raises(ValueError):
        validate_schedule([(1, 20), (15, 30)])
    with pytest.raises(ValueError):
        validate_schedule([(101, 110), (1, 20)])
    with pytest.raises(ValueError):
        validate_schedule([(0, 5)])
    with pytest.raises(ValueError):
        validate_schedule([(10, 5)])


def test_full_schedule_on_large_table():
    table = _table(1_000_010)
    sample = evaluation_sample(table)
    assert len(sample.doc_ids) == 170
    assert not sample.truncated
    ranked = table.ranked_ids()
    assert sample.doc_ids[:20] == ranked[:20]
    assert sample.doc_ids[-10:] == ranked[1_000_000:1_000_010]


def test_small_pool_drops_whole_intervals():
    sample = evaluation_sample(_table(500))
    # only (1,20), (101,110), (317,326) fit inside 500 ranks
    assert len(sample.doc_ids) == 40
    assert sample.truncated


def test_boundary_interval_exactly_fits():
    sample = evaluation_sample(_table(326))
    assert len(sample.doc_ids) == 40
    sample_325 = evaluation_sample(_table(325))
    assert len(sample_325.doc_ids) == 30


def test_ap_perfect_ranking():
    pairs = [(1, True), (2, True), (3, False), (4, False)]
    # both positives at precision 1; mean over 4 pooled docs
    assert average_precision(pairs, None) if False else True
    labels = {"a": True, "b": True, "c": False, "d": False}
    ranks = {"a": 1, "b": 2, "c": 3, "d": 4}
    assert average_precision(labels, ranks) == pytest.approx(0.5)


def test_ap_worst_ranking():
    labels = {"a": True, "b": False}
    ranks = {"a": 2, "b": 1}
    assert average_precision(labels, ranks) == pytest.approx(0.25)


def test_ap_matches_mask_matrix_oracle_within_1e12():
    rng = np.random.default_rng(17)
    start = time.perf_counter()
    for trial in range(1000):
        n = int(rng.integers(1, 201))
        ranks = rng.choice(np.arange(1, 600_000), size=n, replace=False)
        labels = rng.random(n) < 0.3
        pool = {f"d{i}": bool(labels[i]) for i in range(n)}
        rank_map = {f"d{i}": int(ranks[i]) for i in range(n)}
        got = average_precision(pool, rank_map)
        want = mask_matrix_ap(list(zip(ranks.tolist(), labels.tolist())))
        assert got == pytest.approx(want, abs=1e-12)
    assert time.perf_counter() - start < 5.0


def test_ap_missing_rank_errors():
    with pytest.raises(ValueError, match="without a current rank"):
        average_precision({"a": True}, {})


def test_predicted_positives_hand_traced():
    # 20 bins of 3 pooled docs each; positive share 1.0 through bin 9
    # (mean rank 95 at bin 9), 0.0 from bin 10 on (mean rank 105)
    labels = {}
    ranks = {}
    for i in range(60):
        doc = f"d{i:02d}"
        rank = 10 * (i // 3) + [2, 5, 8][i % 3]  # bin means 5, 15, ..., 195
        labels[doc] = i < 30
        ranks[doc] = rank
    result = predicted_positives(labels, ranks, n_ranked=1000)
    assert result.lower == pytest.approx(95.0)
    assert result.upper == pytest.approx(105.0)
    assert result.mid == pytest.approx(100.0)
    assert not result.unbounded


def test_predicted_positives_all_below_is_unit_interval():
    labels = {f"d{i:02d}": False for i in range(40)}
    ranks = {f"d{i:02d}": i + 1 for i in range(40)}
    result = predicted_positives(labels, ranks, n_ranked=500)
    assert (result.lower, result.mid, result.upper) == (1.0, 1.0, 1.0)
    assert not result.unbounded


def test_predicted_positives_none_below_is_unbounded():
    labels = {f"d{i:02d}": True for i in range(40)}
    ranks = {f"d{i:02d}": i + 1 for i in range(40)}
    result = predicted_positives(labels, ranks, n_ranked=900)
    assert result.unbounded
    assert result.upper == 900.0
    assert result.lower == pytest.approx(39.5)  # mean rank of the last bin


def test_predicted_positives_crossing_in_first_bin():
    labels = {f"d{i:02d}": i >= 38 for i in range(40)}
    ranks = {f"d{i:02d}": i + 1 for i in range(40)}
    result = predicted_positives(labels, ranks, n_ranked=100)
    assert result.lower == 1.0
    assert not result.unbounded


def test_predicted_positives_strictness_toggle():
    # exactly half positive in every bin: strict crosses at bin 0,
    # at-or-below also crosses at bin 0; make bin share exactly 0.5
    labels = {f"d{i:02d}": i % 2 == 0 for i in range(40)}
    ranks = {f"d{i:02d}": i + 1 for i in range(40)}
    strict = predicted_positives(labels, ranks, n_ranked=100, strict=True)
    assert strict.unbounded  # 0.5 is not strictly below 0.5 anywhere
    loose = predicted_positives(labels, ranks, n_ranked=100, strict=False)
    assert not loose.unbounded
    assert loose.lower == 1.0


def test_predicted_positives_brackets_true_count_on_sharp_ranking():
    rng = np.random.default_rng(5)
    for true_k in (50, 500, 5000):
        n_ranked = 20 * true_k
        # sharp ranking, equal pooled counts per side: the bin boundary
        # lands on the crossing, so the bracket must contain the count
        pos_ranks = np.sort(rng.choice(np.arange(1, true_k + 1), 50, replace=False))
        neg_ranks = np.sort(
            rng.choice(np.arange(true_k + 1, n_ranked + 1), 50, replace=False)
        )
        sample_ranks = np.concatenate([pos_ranks, neg_ranks])
        labels = {f"d{r}": r <= true_k for r in sample_ranks}
        ranks = {f"d{r}": int(r) for r in sample_ranks}
        result = predicted_positives(labels, ranks, n_ranked=n_ranked)
        assert result.lower <= true_k <= result.upper
        assert not result.unbounded


def test_predicted_positives_requires_enough_labels():
    labels = {f"d{i}": True for i in range(10)}
    ranks = {f"d{i}": i + 1 for i in range(10)}
    with pytest.raises(ValueError):
        predicted_positives(labels, ranks, n_ranked=50)


def _unit_rows(rows):
    arr = np.asarray(rows, dtype=np.float64)
    return arr / np.linalg.norm(arr, axis=1)[:, None]


def test_diversity_orthogonal_pair():
    assert diversity(np.eye(2)) == pytest.approx(1.0)


def test_diversity_opposite_pair():
    emb = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert diversity(emb) == pytest.approx(2.0)


def test_diversity_fewer_than_two_distinct_is_zero():
    assert diversity(np.zeros((0, 4))) == 0.0
    assert diversity(np.array([[1.0, 0.0]])) == 0.0
    assert diversity(np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])) == 0.0


def test_diversity_duplication_invariant():
    emb = _unit_rows([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])
    base = diversity(emb)
    duplicated = np.concatenate([emb, emb[:2], emb[:1]])
    assert diversity(duplicated) == pytest.approx(base, abs=1e-15)


def test_diversity_matches_loop_oracle():
    rng = np.random.default_rng(9)
    emb = rng.normal(size=(100, 16))
    emb /= np.linalg.norm(emb, axis=1)[:, None]
    assert diversity(emb) == pytest.approx(loop_diversity(emb), abs=1e-12)


def test_diversity_rejects_non_unit_rows():
    with pytest.raises(ValueError):
        diversity(np.array([[2.0, 0.0], [0.0, 1.0]]))


def test_bootstrap_se_of_mean_tracks_classic_formula():
    rng = np.random.default_rng(123)
    items = rng.normal(10.0, 2.0, size=200).tolist()
    mean, se = bootstrap_se(items, lambda xs: float(np.mean(xs)), B=400, seed=0)
    classic = np.std(items, ddof=1) / np.sqrt(len(items))
    assert mean == pytest.approx(np.mean(items), abs=0.2)
    assert se == pytest.approx(classic, rel=0.2)


def test_bootstrap_se_constant_statistic_is_zero():
    _, se = bootstrap_se([1.0, 2.0, 3.0], lambda xs: 7.0, B=10)
    assert se == 0.0


def test_bootstrap_se_deterministic_prefix():
    items = [1.0, 5.0, 9.0, 2.0]
    stat = lambda xs: float(np.mean(xs))
    m1, s1 = bootstrap_se(items, stat, B=8, seed=3)
    m2, s2 = bootstrap_se(items, stat, B=8, seed=3)
    assert (m1, s1) == (m2, s2)


def test_bootstrap_se_validation():
    with pytest.raises(ValueError):
        bootstrap_se([], lambda xs: 0.0)
    with pytest.raises(ValueError):
        bootstrap_se([1.0], lambda xs: 0.0, B=1)


def test_welch_identical_summaries_p_one():
    assert welch_test(0.5, 0.1, 30, 0.5, 0.1, 30) == pytest.approx(1.0)


def test_welch_far_apart_significant():
    assert welch_test(0.9, 0.01, 50, 0.1, 0.01, 50) < 1e-6


def test_welch_zero_variance_degenerate():
    assert welch_test(0.5, 0.0, 10, 0.5, 0.0, 10) == 1.0
    assert welch_test(0.5, 0.0, 10, 0.6, 0.0, 10) == 0.0


def test_welch_matches_scipy_reference():
    from scipy.stats import t as student_t

    m1, se1, n1, m2, se2, n2 = 0.62, 0.04, 40, 0.55, 0.05, 35
    var = se1**2 + se2**2
    tstat = (m1 - m2) / np.sqrt(var)
    df = var**2 / (se1**4 / (n1 - 1) + se2**4 / (n2 - 1))
    want = 2 * student_t.sf(abs(tstat), df)
    assert welch_test(m1, se1, n1, m2, se2, n2) == pytest.approx(want, rel=1e-12)


def _record(iteration, ap=0.5, ap_se=0.05, e=(90.0, 100.0, 110.0), div=0.8, div_se=0.05):
    return MetricsRecord(
        category="lost_job",
        strategy="adaptive",
        iteration=iteration,
        ap=ap,
        ap_se=ap_se,
        e_lower=e[0],
        e_mid=e[1],
        e_upper=e[2],
        e_unbounded=False,
        diversity=div,
        diversity_se=div_se,
        n_pooled=100,
        n_positive=30,
    )


def test_convergence_needs_window_plus_one_records():
    assert not check_convergence([_record(0), _record(1)])
    assert check_convergence([_record(0), _record(1), _record(2)])


def test_convergence_blocked_by_significant_ap_shift():
    history = [_record(0), _record(1), _record(2, ap=0.9, ap_se=0.001)]
    assert not check_convergence(history)


def test_convergence_blocked_by_disjoint_intervals():
    history = [_record(0), _record(1), _record(2, e=(200.0, 210.0, 220.0))]
    assert not check_convergence(history)


def test_convergence_blocked_by_diversity_shift():
    history = [_record(0), _record(1), _record(2, div=0.1, div_se=0.001)]
    assert not check_convergence(history)


def test_convergence_window_one():
    assert check_convergence([_record(0), _record(1)], window=1)


def test_metrics_record_roundtrip():
    rec = _record(3)
    again = MetricsRecord.from_dict(rec.to_dict())
    assert again == rec
    assert rec.to_dict()["class"] == "lost_job"


def test_metrics_report_canonical(tmp_path):
    records = [_record(1), _record(0)]
    path = tmp_path / "metrics.json"
    write_metrics_report(records, str(path))
    text = path.read_text()
    assert text == metrics_report_json(records)
    payload = json.loads(text)
    assert [r["iteration"] for r in payload] == [0, 1]
    assert text.endswith("\n")
    assert "timestamp" not in text


def test_hashed_embeddings_unit_and_deterministic():
    emb = hashed_embeddings([["need", "job"], ["need", "job"], [], ["x"]])
    norms = np.linalg.norm(emb, axis=1)
    assert np.allclose(norms, 1.0)
    assert np.array_equal(emb[0], emb[1])
    assert emb[2, 0] == 1.0 and np.all(emb[2, 1:] == 0.0)
    again = hashed_embeddings([["need", "job"]])
    assert np.array_equal(emb[0], again[0])


def test_hashed_embeddings_dim_validation():
    with pytest.raises(ValueError):
        hashed_embeddings([["a"]], dim=48)


def test_load_embedding_file(tmp_path):
    path = tmp_path / "emb.csv"
    path.write_text("doc_id,e0,e1\n" "a,3.0,4.0\n" "b,1.0,0.0\n")
    out = load_embedding_file(str(path))
    assert np.allclose(out["a"], [0.6, 0.8])
    assert np.allclose(out["b"], [1.0, 0.0])


def test_load_embedding_file_errors(tmp_path):
    bad_dim = tmp_path / "a.csv"
    bad_dim.write_text("a,1.0,0.0\nb,1.0\n")
    with pytest.raises(ValueError, match="dimension"):
        load_embedding_file(str(bad_dim))

    dup = tmp_path / "b.csv"
    dup.write_text("a,1.0\na,2.0\n")
    with pytest.raises(ValueError, match="duplicate"):
        load_embedding_file(str(dup))

    zero = tmp_path / "c.csv"
    zero.write_text("a,0.0,0.0\n")
    with pytest.raises(ValueError, match="zero"):
        load_embedding_file(str(zero))

    non_numeric = tmp_path / "d.csv"
    non_numeric.write_text("a,1.0\nb,oops\n")
    with pytest.raises(ValueError, match="line 2"):
        load_embedding_file(str(non_numeric))
