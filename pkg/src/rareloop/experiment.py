"""Experiment orchestration: initialization, iterations, labels, persistence.

The runner drives the retrieval loop over a fixed corpus split: fit the
scorer on the labeled sample-pool docs, score both pools, draw the rank
schedule's evaluation sample, query the next batch with the configured
strategy, collect labels (a deterministic oracle or human annotators over
the HTTP API), aggregate them, and record metrics. State persists as a
canonical JSON snapshot plus an append-only event log.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, PoolPair, sample_matching, split_corpus
from .evaluation import (
    DEFAULT_RANK_SCHEDULE,
    MetricsRecord,
    average_precision,
    bootstrap_se,
    check_convergence,
    diversity,
    evaluation_sample,
    hashed_embeddings,
    metrics_report_json,
    predicted_positives,
    validate_schedule,
)
from .motifs import (
    Motif,
    MotifStats,
    _motif_from_pattern,
    estimate_stats,
    expand_variants,
    select_seeds,
)
from .scoring import (
    LabeledExample,
    TrainedScorer,
    feature_matrix,
    fit_baseline_multiseed,
    score_pool,
    train_test_split,
)
from .skipgrams import build_gram_index
from .strategies import (
    QueryBatch,
    query_adaptive,
    query_exploit_explore,
    query_stratified,
    query_uncertainty,
    query_uncertainty_calibrated,
)

__all__ = [
    "ATTENTION_CHECKS",
    "AnnotationRecord",
    "AttentionCheck",
    "DEFAULT_CLASSES",
    "ExperimentConfig",
    "ExperimentRunner",
    "ExperimentState",
    "OracleLabeler",
    "QUESTION_TEXTS",
    "aggregate_annotations",
    "load_state",
    "motif_from_spec",
    "save_state",
]

DEFAULT_CLASSES = (
    "lost_job",
    "is_hired",
    "is_unemployed",
    "job_search",
    "job_offer",
)

QUESTION_TEXTS = {
    "is_unemployed": (
        "Does the tweet indicate that the person who wrote the tweet is "
        "currently (at the time of tweeting) unemployed? For example, "
        "tweeting “Now I am unemployed”, or “I just quit my "
        "job” is likely to indicate that the person who tweeted is "
        "currently unemployed."
    ),
    "lost_job": (
        "Does this tweet indicate that the person who wrote the tweet became "
        "unemployed within the last month? For example, tweeting “I "
        "lost my job today”, or “I was fired earlier this "
        "week” is likely to indicate that the person who tweeted became "
        "unemployed within the last month."
    ),
    "job_search": (
        "Does this tweet indicate that the person who wrote the tweet is "
        "currently searching for a job? For example, tweeting “I am "
        "looking for a job”, or “I am searching for a new "
        "position” is likely to indicate that the person who tweeted is "
        "currently searching for a job."
    ),
    "is_hired": (
        "Does this tweet indicate that the person who wrote the tweet was "
        "hired within the last month? For example, tweeting “I just "
        "found a job”, or “I got hired today” is likely to "
        "indicate that the person who tweeted was hired within the last "
        "month."
    ),
    "job_offer": (
        "Does this tweet contain a job offer? For example, tweeting "
        "“Looking for a new position?”, or “Here is a job "
        "opportunity you might be interested in” is likely to indicate "
        "that the tweet contains a job offer."
    ),
}

STRATEGIES = (
    "stratified",
    "uncertainty",
    "uncertainty_calibrated",
    "adaptive",
    "exploit_explore",
)


def question_text(category: str) -> str:
    """The annotation question shown for a category; bundled categories use
    their verbatim texts, anything else a generic membership question."""
    return QUESTION_TEXTS.get(
        category, f"Does this document belong to the “{category}” category?"
    )


@dataclass(frozen=True, slots=True)
class AttentionCheck:
    """A known-answer task injected into human batches, indistinguishable
    from a normal task on the wire."""

    check_id: str
    text: str
    key: Mapping[str, str]


ATTENTION_CHECKS = (
    AttentionCheck(
        check_id="t-9f3a71",
        text="I lost my job today",
        key={
            "lost_job": "yes",
            "is_unemployed": "yes",
            "is_hired": "no",
            "job_search": "no",
            "job_offer": "no",
        },
    ),
    AttentionCheck(
        check_id="t-4c08d2",
        text="I got hired today",
        key={
            "lost_job": "no",
            "is_unemployed": "no",
            "is_hired": "yes",
            "job_search": "no",
            "job_offer": "no",
        },
    ),
)


def motif_from_spec(spec: Mapping) -> Motif:
    """Build a motif from a config mapping of the form {kind, pattern}."""
    return _motif_from_pattern(spec["kind"], spec["pattern"])


def _motif_spec(motif: Motif) -> dict:
    """Serialize a motif back to the {kind, pattern} config form."""
    if motif.kind == "ordered":
        return {"kind": "ordered", "pattern": list(motif.tokens)}
    if motif.kind == "alternation":
        if motif.display and all(v.kind == "literal" for v in motif.variants):
            # compact literal syntax that expands back to the same variants
            if expand_variants(motif.display) == [v.display for v in motif.variants]:
                return {"kind": "literal", "pattern": motif.display}
        pattern = []
        for v in motif.variants:
            pattern.append(v.display if v.kind == "literal" else _motif_spec(v))
        return {"kind": "alternation", "pattern": pattern}
    return {"kind": "literal", "pattern": motif.display}


@dataclass
class ExperimentConfig:
    corpus_path: str = ""
    classes: tuple[str, ...] = DEFAULT_CLASSES
    strategy: str = "exploit_explore"
    seeds: dict[str, list[dict]] = field(default_factory=dict)
    oracle: dict[str, list[dict]] = field(default_factory=dict)
    labeler: str = "oracle"
    seed: int = 0
    batch_size: int = 100
    init_per_seed: int = 150
    eval_ratio: float = 0.5
    rank_schedule: tuple[tuple[int, int], ...] = DEFAULT_RANK_SCHEDULE
    calibration_B: int = 1000
    metrics_B: int = 1000
    n_fit_seeds: int = 15
    l2: float = 1.0
    min_specificity: float = 0.01
    min_product: float = 1e-7
    stats_sample: int = 20
    gram_min_freq: float = 1e-5
    used_gram_window: str = "previous"
    n_exploit: int = 50
    top_size: int = 10000
    per_gram: int = 5
    k_per_n: int = 5
    gram_lengths: tuple[int, ...] = (2, 3)
    embedding_dim: int = 64
    max_iterations: int = 5

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.labeler not in ("oracle", "human"):
            raise ValueError(f"unknown labeler mode {self.labeler!r}")
        if self.used_gram_window not in ("previous", "all"):
            raise ValueError(f"unknown gram window {self.used_gram_window!r}")
        validate_schedule(self.rank_schedule)
        for cls in self.seeds:
            if cls not in self.classes:
                raise ValueError(f"seeds given for unknown class {cls!r}")
        if self.labeler == "oracle":
            missing = [c for c in self.classes if c not in self.oracle]
            if missing:
                raise ValueError(f"oracle patterns missing for classes {missing}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        kwargs = dict(d)
        if "classes" in kwargs:
            kwargs["classes"] = tuple(kwargs["classes"])
        if "rank_schedule" in kwargs:
            kwargs["rank_schedule"] = tuple(
                (int(lo), int(hi)) for lo, hi in kwargs["rank_schedule"]
            )
        if "gram_lengths" in kwargs:
            kwargs["gram_lengths"] = tuple(int(n) for n in kwargs["gram_lengths"])
        unknown = set(kwargs) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path, "rt", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if name in ("classes", "gram_lengths"):
                value = list(value)
            elif name == "rank_schedule":
                value = [list(iv) for iv in value]
            out[name] = value
        return out


class OracleLabeler:
    """Deterministic labeler: per-class motif patterns decide yes/no."""

    def __init__(self, patterns: Mapping[str, Sequence[Motif]]):
        self.patterns = {c: tuple(ms) for c, ms in patterns.items()}

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "OracleLabeler":
        return cls(
            {
                c: [motif_from_spec(s) for s in config.oracle.get(c, [])]
                for c in config.classes
            }
        )

    def label(self, category: str, tokens: Sequence[str]) -> bool:
        return any(m.match_tokens(tokens) for m in self.patterns[category])

    def answers(self, tokens: Sequence[str]) -> dict[str, str]:
        return {c: ("yes" if self.label(c, tokens) else "no") for c in self.patterns}


@dataclass(frozen=True, slots=True)
class AnnotationRecord:
    doc_id: str
    annotator: str
    answers: Mapping[str, str]

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "annotator": self.annotator,
            "answers": dict(self.answers),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AnnotationRecord":
        return cls(d["doc_id"], d["annotator"], dict(d["answers"]))


@dataclass(slots=True)
class AggregationResult:
    labels: list[LabeledExample]
    dropped: list[dict]
    failed_annotators: list[str]


def aggregate_annotations(
    records: Sequence[AnnotationRecord],
    classes: Sequence[str],
    attention_keys: Mapping[str, Mapping[str, str]] = {},
    required_matches: int = 2,
) -> AggregationResult:
    """Raw annotations to labels: agreement rule plus attention screening.

    An annotator who answers any attention-check doc with other than its
    exact per-class key loses every record they submitted. Per (doc, class)
    over the surviving records: ``required_matches`` yes answers make a
    positive, as many no answers a negative, as many unsure answers drop the
    doc for that class, and anything short of agreement drops it as a
    disagreement.
    """
    valid = {"yes", "no", "unsure"}
    for rec in records:
        if set(rec.answers) != set(classes):
            raise ValueError(
                f"record for {rec.doc_id!r} must answer exactly classes {sorted(classes)}"
            )
        bad = {a for a in rec.answers.values() if a not in valid}
        if bad:
            raise ValueError(
                f"record for {rec.doc_id!r} has invalid answers {sorted(bad)}"
            )

    failed: set[str] = set()
    for rec in records:
        key = attention_keys.get(rec.doc_id)
        if key is not None and dict(rec.answers) != dict(key):
            failed.add(rec.annotator)

    by_doc: dict[str, list[AnnotationRecord]] = {}
    for rec in records:
        if rec.annotator in failed or rec.doc_id in attention_keys:
            continue
        by_doc.setdefault(rec.doc_id, []).append(rec)

    labels: list[LabeledExample] = []
    dropped: list[dict] = []
    for doc_id in sorted(by_doc):
        recs = by_doc[doc_id]
        for cls in classes:
            votes = [r.answers[cls] for r in recs]
            counts = {a: votes.count(a) for a in valid}
            if counts["yes"] >= required_matches:
                labels.append(LabeledExample(doc_id, cls, True))
            elif counts["no"] >= required_matches:
                labels.append(LabeledExample(doc_id, cls, False))
            elif counts["unsure"] >= required_matches:
                dropped.append({"doc_id": doc_id, "class": cls, "reason": "unsure"})
            else:
                dropped.append(
                    {"doc_id": doc_id, "class": cls, "reason": "disagreement"}
                )
    return AggregationResult(labels, dropped, sorted(failed))


@dataclass
class ExperimentState:
    """Everything the loop needs to resume: labels, queue, metrics, grams."""

    iteration: int = 0
    phase: str = "init_labeling"
    labeled: dict[str, dict[str, bool]] = field(default_factory=dict)
    eval_labels: dict[str, dict[str, bool]] = field(default_factory=dict)
    queue: list[dict] = field(default_factory=list)
    pending_records: list[AnnotationRecord] = field(default_factory=list)
    eval_ranks: dict[str, dict] = field(default_factory=dict)
    used_grams: dict[str, list[list[list[str]]]] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)
    metrics: list[MetricsRecord] = field(default_factory=list)
    scorer_meta: dict[str, list[dict]] = field(default_factory=dict)
    dropped: list[dict] = field(default_factory=list)
    failed_annotators: list[str] = field(default_factory=list)
    batch_log: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    retained_seeds: dict[str, list[dict]] = field(default_factory=dict)

    def queued_ids(self) -> list[str]:
        return [task["doc_id"] for task in self.queue]

    def to_payload(self) -> dict:
        return {
            "iteration": self.iteration,
            "phase": self.phase,
            "labeled": {c: dict(sorted(v.items())) for c, v in self.labeled.items()},
            "eval_labels": {
                c: dict(sorted(v.items())) for c, v in self.eval_labels.items()
            },
            "queue": sorted(self.queue, key=lambda t: t["doc_id"]),
            "pending_records": [
                r.to_dict()
                for r in sorted(
                    self.pending_records, key=lambda r: (r.doc_id, r.annotator)
                )
            ],
            "eval_ranks": self.eval_ranks,
            "used_grams": self.used_grams,
            "excluded": sorted(self.excluded),
            "metrics": [
                r.to_dict()
                for r in sorted(
                    self.metrics, key=lambda r: (r.category, r.strategy, r.iteration)
                )
            ],
            "scorer_meta": self.scorer_meta,
            "dropped": sorted(
                self.dropped, key=lambda d: (d["doc_id"], d.get("class", ""))
            ),
            "failed_annotators": sorted(self.failed_annotators),
            "batch_log": self.batch_log,
            "errors": self.errors,
            "retained_seeds": self.retained_seeds,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "ExperimentState":
        return cls(
            iteration=payload["iteration"],
            phase=payload["phase"],
            labeled={c: dict(v) for c, v in payload["labeled"].items()},
            eval_labels={c: dict(v) for c, v in payload["eval_labels"].items()},
            queue=[dict(t) for t in payload["queue"]],
            pending_records=[
                AnnotationRecord.from_dict(r) for r in payload["pending_records"]
            ],
            eval_ranks={c: dict(v) for c, v in payload["eval_ranks"].items()},
            used_grams={
                c: [[list(g) for g in grams] for grams in v]
                for c, v in payload["used_grams"].items()
            },
            excluded=list(payload["excluded"]),
            metrics=[MetricsRecord.from_dict(r) for r in payload["metrics"]],
            scorer_meta={
                c: [dict(m) for m in v] for c, v in payload["scorer_meta"].items()
            },
            dropped=[dict(d) for d in payload["dropped"]],
            failed_annotators=list(payload["failed_annotators"]),
            batch_log=[dict(b) for b in payload["batch_log"]],
            errors=[dict(e) for e in payload["errors"]],
            retained_seeds={
                c: [dict(s) for s in v] for c, v in payload["retained_seeds"].items()
            },
        )


def _canonical_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def save_state(state: ExperimentState, state_dir: str) -> str:
    os.makedirs(state_dir, exist_ok=True)
    path = os.path.join(state_dir, "state.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_json(state.to_payload()))
    return path


def load_state(state_dir: str) -> ExperimentState:
    path = os.path.join(state_dir, "state.json")
    with open(path, "rt", encoding="utf-8") as fh:
        return ExperimentState.from_payload(json.load(fh))


def append_event(state_dir: str, event: str, payload: Mapping = {}) -> None:
    os.makedirs(state_dir, exist_ok=True)
    rec = {"event": event, "ts": time.time(), **payload}
    with open(os.path.join(state_dir, "events.jsonl"), "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


class ExperimentRunner:
    """Binds a config to a corpus split and drives the loop.

    ``cache`` may be shared between runners built over the same corpus and
    split seed: it holds the pool feature matrices and gram indexes, which
    depend on neither exclusions nor labels.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        corpus: Corpus | None = None,
        state_dir: str | None = None,
        cache: dict | None = None,
    ):
        self.config = config
        self.state_dir = state_dir
        self.cache = cache if cache is not None else {}
        if corpus is None:
            if not config.corpus_path:
                raise ValueError("config has no corpus path and no corpus was given")
            corpus = Corpus.from_jsonl(config.corpus_path)
        self.corpus = corpus
        self.pools: PoolPair = split_corpus(
            corpus, config.eval_ratio, seed=[config.seed, 0]
        )
        self.seed_motifs: dict[str, list[Motif]] = {
            c: [motif_from_spec(s) for s in config.seeds.get(c, [])]
            for c in config.classes
        }
        self.oracle = (
            OracleLabeler.from_config(config) if config.labeler == "oracle" else None
        )
        self._models: dict[str, object] = {}

    def restore(self, state: ExperimentState) -> None:
        """Re-apply a loaded state's exclusions to this runner's pools."""
        if state.excluded:
            self.pools.sample_pool.exclude_ids(state.excluded)

    # -- caches ---------------------------------------------------------------

    def _eval_matrix(self):
        if "X_eval" not in self.cache:
            pool = self.pools.eval_pool
            self.cache["X_eval"] = feature_matrix(
                [pool.get(d).tokens for d in pool.ids_sorted()]
            )
        return self.cache["X_eval"]

    def _sample_matrix(self):
        if "X_sample" not in self.cache:
            pool = self.pools.sample_pool
            self.cache["X_sample"] = feature_matrix(
                [pool.get(d).tokens for d in pool.ids_sorted()]
            )
        return self.cache["X_sample"]

    def _gram_indexes(self):
        if "gram_indexes" not in self.cache:
            self.cache["gram_indexes"] = {
                n: build_gram_index(
                    self.pools.sample_pool,
                    n,
                    min_freq=self.config.gram_min_freq,
                    shards=8,
                )
                for n in self.config.gram_lengths
            }
        return self.cache["gram_indexes"]

    def _log(self, event: str, payload: Mapping = {}) -> None:
        if self.state_dir:
            append_event(self.state_dir, event, payload)

    # -- initialization -------------------------------------------------------

    def _retained_seeds(self, state: ExperimentState) -> dict[str, list[Motif]]:
        """Per-class seed motifs surviving the retention thresholds.

        Config seeds carrying measured stats are used as given; the rest are
        measured on the sampling pool against the oracle.
        """
        cfg = self.config
        retained: dict[str, list[Motif]] = {}
        for ci, cls in enumerate(cfg.classes):
            candidates: list[tuple[Motif, MotifStats]] = []
            for si, spec in enumerate(cfg.seeds.get(cls, [])):
                motif = self.seed_motifs[cls][si]
                if "specificity" in spec and "frequency" in spec:
                    stats = MotifStats(spec["specificity"], spec["frequency"], 0)
                else:
                    if self.oracle is None:
                        raise ValueError(
                            f"seed {motif.display!r} has no stats and there is "
                            "no oracle to measure them"
                        )
                    stats = estimate_stats(
                        motif,
                        self.pools.sample_pool,
                        lambda doc, c=cls: self.oracle.label(c, doc.tokens),
                        sample_n=cfg.stats_sample,
                        seed=[cfg.seed, 7, ci, si],
                    )
                if stats.frequency == 0.0 or stats.specificity is None:
                    self._log("seed_skipped", {"class": cls, "motif": motif.display})
                    continue
                candidates.append((motif, stats))
            kept = select_seeds(
                candidates,
                min_specificity=cfg.min_specificity,
                min_product=cfg.min_product,
            )
            retained[cls] = [m for m, _ in kept]
            state.retained_seeds[cls] = [
                {
                    **_motif_spec(m),
                    "specificity": st.specificity,
                    "frequency": st.frequency,
                }
                for m, st in kept
            ]
        if all(not v for v in retained.values()):
            raise ValueError("no seed motif was retained for any class")
        return retained

    def initialize(self) -> ExperimentState:
        """Sample per-seed docs from the sampling pool and queue them as the
        initial labeling round."""
        cfg = self.config
        state = ExperimentState(
            labeled={c: {} for c in cfg.classes},
            eval_labels={c: {} for c in cfg.classes},
            used_grams={c: [] for c in cfg.classes},
            scorer_meta={c: [] for c in cfg.classes},
        )
        retained = self._retained_seeds(state)
        queued: dict[str, dict] = {}
        for ci, cls in enumerate(cfg.classes):
            for si, motif in enumerate(retained[cls]):
                result = sample_matching(
                    self.pools.sample_pool,
                    motif,
                    cfg.init_per_seed,
                    seed=[cfg.seed, 1, ci, si],
                )
                for doc in result.docs:
                    if doc.id not in queued:
                        queued[doc.id] = {
                            "doc_id": doc.id,
                            "origin": f"init:{cls}:{motif.display}",
                            "iteration": 0,
                        }
        if not queued:
            raise ValueError("initial seed sampling produced no docs")
        state.queue = [queued[d] for d in sorted(queued)]
        self.pools.sample_pool.exclude_ids(sorted(queued))
        state.excluded = sorted(queued)
        self._log("initialized", {"queued": len(queued)})
        return state

    # -- labeling -------------------------------------------------------------

    def attention_keys(self) -> dict[str, dict[str, str]]:
        if self.config.labeler != "human":
            return {}
        return {
            c.check_id: {cls: c.key[cls] for cls in self.config.classes}
            for c in ATTENTION_CHECKS
            if set(self.config.classes) <= set(c.key)
        }

    def submit_records(
        self, state: ExperimentState, records: Sequence[AnnotationRecord]
    ) -> None:
        """Queue-validated, idempotent ingestion of raw annotations."""
        queued = set(state.queued_ids())
        checks = self.attention_keys()
        for rec in records:
            if rec.doc_id not in queued and rec.doc_id not in checks:
                raise KeyError(f"doc {rec.doc_id!r} is not in the labeling queue")
        for rec in records:
            state.pending_records = [
                r
                for r in state.pending_records
                if not (r.doc_id == rec.doc_id and r.annotator == rec.annotator)
            ]
            state.pending_records.append(rec)
        self._log("annotations", {"count": len(records)})

    def required_annotations(self) -> int:
        return 1 if self.config.labeler == "oracle" else 2

    def undecided_ids(self, state: ExperimentState) -> list[str]:
        need = self.required_annotations()
        counts: dict[str, int] = {}
        for rec in state.pending_records:
            counts[rec.doc_id] = counts.get(rec.doc_id, 0) + 1
        return [d for d in state.queued_ids() if counts.get(d, 0) < need]

    def label_pending_with_oracle(self, state: ExperimentState) -> None:
        if self.oracle is None:
            raise ValueError("runner is not in oracle labeler mode")
        records = []
        for task in state.queue:
            doc = self.corpus.get(task["doc_id"])
            records.append(
                AnnotationRecord(doc.id, "oracle", self.oracle.answers(doc.tokens))
            )
        self.submit_records(state, records)

    def _apply_pending(self, state: ExperimentState) -> None:
        undecided = self.undecided_ids(state)
        if undecided:
            raise ValueError(
                f"{len(undecided)} queued docs still lack enough annotations"
            )
        result = aggregate_annotations(
            state.pending_records,
            self.config.classes,
            attention_keys=self.attention_keys(),
            required_matches=self.required_annotations(),
        )
        eval_ids = {t["doc_id"] for t in state.queue if t["origin"].startswith("eval")}
        for ex in result.labels:
            if ex.doc_id in eval_ids:
                state.eval_labels[ex.category][ex.doc_id] = ex.positive
            else:
                state.labeled[ex.category][ex.doc_id] = ex.positive
        state.dropped.extend(result.dropped)
        for annotator in result.failed_annotators:
            if annotator not in state.failed_annotators:
                state.failed_annotators.append(annotator)
        state.pending_records = []
        state.queue = []
        self._log(
            "aggregated",
            {"labels": len(result.labels), "dropped": len(result.dropped)},
        )

    # -- iterations -----------------------------------------------------------

    def complete_init(self, state: ExperimentState) -> None:
        if state.phase != "init_labeling":
            raise ValueError(f"cannot complete init from phase {state.phase!r}")
        self._apply_pending(state)
        state.phase = "ready"
        self._log(
            "init_complete",
            {"labeled": {c: len(v) for c, v in state.labeled.items()}},
        )

    def fit_scorer(self, state: ExperimentState, cls: str) -> TrainedScorer:
        """The deterministic scorer refit for ``cls`` at the current iteration."""
        cfg = self.config
        ci = cfg.classes.index(cls)
        i = state.iteration
        examples = [
            LabeledExample(d, cls, pos)
            for d, pos in sorted(state.labeled[cls].items())
        ]
        train, test = train_test_split(
            examples, train_frac=0.7, seed=[cfg.seed, 2, ci, i]
        )
        return fit_baseline_multiseed(
            train,
            test,
            self.corpus,
            n_seeds=cfg.n_fit_seeds,
            l2=cfg.l2,
            base_seed=[cfg.seed, 8, ci, i],
        )

    def begin_iteration(self, state: ExperimentState) -> None:
        """Fit, score, draw the eval sample, and query the next batch."""
        if state.phase != "ready":
            raise ValueError(f"cannot begin an iteration from phase {state.phase!r}")
        cfg = self.config
        i = state.iteration
        eval_pool = self.pools.eval_pool
        sample_pool = self.pools.sample_pool
        queued: dict[str, dict] = {}
        state.eval_ranks = {}
        for ci, cls in enumerate(cfg.classes):
            try:
                model = self.fit_scorer(state, cls)
                self._models[cls] = model
                state.scorer_meta[cls].append(
                    {
                        "iteration": i,
                        "seed": model.seed,
                        "test_auroc": model.test_auroc,
                        "l2": model.l2,
                    }
                )
                table_e = score_pool(model, eval_pool, cls, i, X=self._eval_matrix())
                sample = evaluation_sample(table_e, cfg.rank_schedule)
                pooled = set(state.eval_labels[cls])
                for doc_id in sample.doc_ids:
                    if doc_id not in pooled and doc_id not in queued:
                        queued[doc_id] = {
                            "doc_id": doc_id,
                            "origin": f"eval:{cls}",
                            "iteration": i,
                        }
                rank_map = table_e.ranks_of(sorted(pooled | set(sample.doc_ids)))
                state.eval_ranks[cls] = {
                    "ranks": rank_map,
                    "n_ranked": len(table_e.ids),
                    "truncated": sample.truncated,
                }
                table_s = score_pool(
                    model, sample_pool, cls, i, X=self._sample_matrix()
                )
                batch = self._query(state, cls, ci, table_s, table_e)
                for doc_id in batch.doc_ids:
                    if doc_id not in queued:
                        queued[doc_id] = {
                            "doc_id": doc_id,
                            "origin": f"query:{batch.provenance[doc_id]}",
                            "iteration": i,
                        }
                new_excluded = sorted(set(batch.doc_ids) - set(state.excluded))
                sample_pool.exclude_ids(new_excluded)
                state.excluded.extend(new_excluded)
                for doc_id in batch.doc_ids:
                    state.batch_log.append(
                        {
                            "doc_id": doc_id,
                            "class": cls,
                            "iteration": i,
                            "strategy": cfg.strategy,
                            "provenance": batch.provenance[doc_id],
                        }
                    )
                if cfg.strategy == "exploit_explore":
                    state.used_grams[cls].append(
                        [list(g) for g in batch.selected_grams]
                    )
            except Exception as exc:  # keep other classes running
                state.errors.append({"class": cls, "iteration": i, "error": str(exc)})
        state.excluded = sorted(state.excluded)
        state.queue = [queued[d] for d in sorted(queued)]
        state.phase = "labeling"
        self._log("iteration_begun", {"iteration": i, "queued": len(queued)})

    def _query(self, state, cls, ci, table_s, table_e) -> QueryBatch:
        cfg = self.config
        i = state.iteration
        if cfg.strategy == "stratified":
            motifs = [motif_from_spec(s) for s in state.retained_seeds.get(cls, [])]
            return query_stratified(
                motifs,
                self.pools.sample_pool,
                cls,
                i,
                n=cfg.batch_size,
                seed=[cfg.seed, 3, ci, i],
            )
        if cfg.strategy == "uncertainty":
            return query_uncertainty(table_s, n=cfg.batch_size)
        if cfg.strategy == "uncertainty_calibrated":
            labels = state.eval_labels[cls]
            if not labels:
                raise ValueError("calibration needs labeled evaluation docs")
            score_of = dict(zip(table_e.ids, table_e.values))
            eval_pairs = [
                (float(score_of[d]), positive)
                for d, positive in sorted(labels.items())
            ]
            return query_uncertainty_calibrated(
                table_s,
                eval_pairs,
                n=cfg.batch_size,
                B=cfg.calibration_B,
                seed=[cfg.seed, 6, ci, i],
            )
        if cfg.strategy == "adaptive":
            return query_adaptive(table_s, n=cfg.batch_size)
        if cfg.strategy == "exploit_explore":
            history = state.used_grams[cls]
            if cfg.used_gram_window == "all":
                used = [tuple(g) for grams in history for g in grams]
            else:
                used = [tuple(g) for g in history[-1]] if history else []
            return query_exploit_explore(
                table_s,
                self.pools.sample_pool,
                self._gram_indexes(),
                cls,
                i,
                used_previous=used,
                n_exploit=cfg.n_exploit,
                top_size=cfg.top_size,
                per_gram=cfg.per_gram,
                k_per_n=cfg.k_per_n,
                seed=[cfg.seed, 3, ci, i],
            )
        raise ValueError(f"unknown strategy {cfg.strategy!r}")

    def complete_iteration(self, state: ExperimentState) -> None:
        """Aggregate the round's labels and record this iteration's metrics."""
        if state.phase != "labeling":
            raise ValueError(
                f"cannot complete an iteration from phase {state.phase!r}"
            )
        cfg = self.config
        i = state.iteration
        self._apply_pending(state)
        for cls in cfg.classes:
            if cls not in state.eval_ranks:
                continue  # the class errored during begin; no metrics
            try:
                state.metrics.append(self._metrics_for(state, cls, i))
            except Exception as exc:
                state.errors.append({"class": cls, "iteration": i, "error": str(exc)})
        state.iteration = i + 1
        state.phase = "ready"
        self._log("iteration_complete", {"iteration": i})

    def _metrics_for(self, state: ExperimentState, cls: str, i: int) -> MetricsRecord:
        cfg = self.config
        info = state.eval_ranks[cls]
        ranks = {d: int(r) for d, r in info["ranks"].items()}
        labels = state.eval_labels[cls]
        pooled = {d: labels[d] for d in labels if d in ranks}
        if not pooled:
            raise ValueError(f"no labeled evaluation docs carry ranks for {cls!r}")
        ap = average_precision(pooled, ranks)
        items = sorted(pooled.items())
        _, ap_se = bootstrap_se(
            items,
            lambda xs: average_precision(list(xs), ranks),
            B=cfg.metrics_B,
            seed=[cfg.seed, 4, i],
        )
        e = predicted_positives(pooled, ranks, n_ranked=info["n_ranked"])
        positives = [d for d, pos in sorted(pooled.items()) if pos]
        if len(positives) >= 2:
            emb = hashed_embeddings(
                [self.corpus.get(d).tokens for d in positives],
                dim=cfg.embedding_dim,
            )
            div = diversity(emb)
            rows = [emb[j] for j in range(emb.shape[0])]
            _, div_se = bootstrap_se(
                rows,
                lambda xs: diversity(np.asarray(xs)),
                B=cfg.metrics_B,
                seed=[cfg.seed, 5, i],
            )
        else:
            div, div_se = 0.0, 0.0
        record = MetricsRecord(
            category=cls,
            strategy=cfg.strategy,
            iteration=i,
            ap=ap,
            ap_se=ap_se,
            e_lower=e.lower,
            e_mid=e.mid,
            e_upper=e.upper,
            e_unbounded=e.unbounded,
            diversity=div,
            diversity_se=div_se,
            n_pooled=len(pooled),
            n_positive=len(positives),
        )
        history = [
            r for r in state.metrics if r.category == cls and r.strategy == cfg.strategy
        ] + [record]
        record.converged = check_convergence(history)
        return record

    # -- whole runs -----------------------------------------------------------

    def run(self, n_iterations: int | None = None) -> ExperimentState:
        """Oracle-mode convenience: initialize and run the full loop."""
        if self.oracle is None:
            raise ValueError("run() requires oracle labeler mode")
        n = n_iterations if n_iterations is not None else self.config.max_iterations
        state = self.initialize()
        self.label_pending_with_oracle(state)
        self.complete_init(state)
        for _ in range(n):
            self.begin_iteration(state)
            self.label_pending_with_oracle(state)
            self.complete_iteration(state)
        if self.state_dir:
            save_state(state, self.state_dir)
            with open(
                os.path.join(self.state_dir, "metrics.json"), "w", encoding="utf-8"
            ) as fh:
                fh.write(metrics_report_json(state.metrics))
        return state
