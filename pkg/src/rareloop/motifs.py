"""Seed motifs: matching, specificity/frequency estimation, retention.

A motif is a literal phrase (contiguous tokens), an ordered gram (tokens in
order, any gaps) or an alternation over sub-motifs. Matching is token-level,
never substring. Seeds are retained when specificity >= 0.01 and
specificity * frequency > 1e-7; the sum of retained products estimates the
base rate of the class.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .corpus import Corpus, Document, sample_matching, tokenize

__all__ = [
    "Motif",
    "MotifStats",
    "SeedEntry",
    "estimate_base_rate",
    "estimate_stats",
    "expand_variants",
    "load_seed_file",
    "select_seeds",
    "write_motif_report",
]

MIN_SPECIFICITY = 0.01
MIN_PRODUCT = 1e-7


@dataclass(frozen=True)
class Motif:
    """kind is one of ``literal``, ``ordered``, ``alternation``."""

    kind: str
    tokens: tuple[str, ...] = ()
    variants: tuple["Motif", ...] = ()
    display: str = ""

    def __post_init__(self):
        if self.kind not in ("literal", "ordered", "alternation"):
            raise ValueError(f"unknown motif kind: {self.kind!r}")
        if self.kind == "alternation":
            if not self.variants:
                raise ValueError("alternation needs at least one variant")
        elif not self.tokens:
            raise ValueError(f"{self.kind} motif needs at least one token")
        if not self.display:
            object.__setattr__(self, "display", self._default_display())

    def _default_display(self) -> str:
        if self.kind == "literal":
            return " ".join(self.tokens)
        if self.kind == "ordered":
            return "(" + ", ".join(self.tokens) + ")"
        return " | ".join(v.display for v in self.variants)

    @classmethod
    def literal(cls, phrase: str) -> "Motif":
        return cls("literal", tokens=tuple(tokenize(phrase)), display=phrase)

    @classmethod
    def ordered(cls, tokens) -> "Motif":
        return cls("ordered", tokens=tuple(tokens))

    @classmethod
    def alternation(cls, variants, display: str = "") -> "Motif":
        return cls("alternation", variants=tuple(variants), display=display)

    def matches(self, doc: Document) -> bool:
        return self.match_tokens(doc.tokens)

    def match_tokens(self, tokens: list[str] | tuple[str, ...]) -> bool:
        if self.kind == "literal":
            return _contains_contiguous(tokens, self.tokens)
        if self.kind == "ordered":
            return _contains_subsequence(tokens, self.tokens)
        return any(v.match_tokens(tokens) for v in self.variants)

    def matching_ids(self, pool: Corpus) -> list[str]:
        """Sorted ids of every doc in the pool matching this motif.

        Helped by the inverted index: candidates must hold every motif token,
        then order/contiguity is verified per candidate. Exclusion is not
        applied here; counts are over the whole pool.
        """
        if self.kind == "alternation":
            hits: set[str] = set()
            for v in self.variants:
                hits.update(v.matching_ids(pool))
            return sorted(hits)
        index = pool.index
        postings = []
        for tok in set(self.tokens):
            plist = index.get(tok)
            if plist is None:
                return []
            postings.append(plist)
        postings.sort(key=len)
        cand = set(postings[0])
        for plist in postings[1:]:
            cand.intersection_update(plist)
            if not cand:
                return []
        return sorted(i for i in cand if self.match_tokens(pool.get(i).tokens))


def _contains_contiguous(tokens, phrase) -> bool:
    k = len(phrase)
    if k == 0 or k > len(tokens):
        return False
    first = phrase[0]
    for i in range(len(tokens) - k + 1):
        if tokens[i] == first and tuple(tokens[i : i + k]) == tuple(phrase):
            return True
    return False


def _contains_subsequence(tokens, gram) -> bool:
    it = iter(tokens)
    return all(tok in it for tok in gram)


@dataclass(slots=True)
class MotifStats:
    """specificity is None when no matching doc could be sampled."""

    specificity: float | None
    frequency: float
    sample_n: int


def estimate_stats(
    motif: Motif,
    pool: Corpus,
    labels: Mapping[str, bool] | Callable[[Document], bool],
    sample_n: int = 20,
    seed=0,
) -> MotifStats:
    """Estimate specificity and frequency of a motif on a pool.

    Frequency is the share of pool docs matching the motif. Specificity is
    the share of positives in a seeded sample of up to ``sample_n`` matching
    docs; when fewer docs match, the achieved sample size is used and
    recorded. No matching docs leaves specificity undefined (None).

    ``labels`` maps doc id -> bool, or is a callable judging a Document.
    """
    if len(pool) == 0:
        raise ValueError("cannot estimate stats on an empty pool")
    n_match = len(motif.matching_ids(pool))
    frequency = n_match / len(pool)
    sample = sample_matching(pool, motif, sample_n, seed)
    if not sample.docs:
        return MotifStats(None, frequency, 0)
    if callable(labels):
        judged = [bool(labels(d)) for d in sample.docs]
    else:
        missing = [d.id for d in sample.docs if d.id not in labels]
        if missing:
            raise ValueError(f"labels missing for sampled docs: {missing[:10]}")
        judged = [bool(labels[d.id]) for d in sample.docs]
    return MotifStats(sum(judged) / len(judged), frequency, len(judged))


def select_seeds(
    candidates: list[tuple[Motif, MotifStats]],
    min_specificity: float = MIN_SPECIFICITY,
    min_product: float = MIN_PRODUCT,
) -> list[tuple[Motif, MotifStats]]:
    """Retain motifs with S >= min_specificity and S*F > min_product.

    Input order is preserved; undefined specificity is rejected.
    """
    out = []
    for motif, stats in candidates:
        s = stats.specificity
        if s is None:
            continue
        if s >= min_specificity and s * stats.frequency > min_product:
            out.append((motif, stats))
    return out


def estimate_base_rate(stats: list[MotifStats]) -> float:
    """Sum of S*F over retained motifs; errors on empty or undefined input."""
    if not stats:
        raise ValueError("base rate needs at least one retained motif")
    total = 0.0
    for st in stats:
        if st.specificity is None:
            raise ValueError("base rate over a motif with undefined specificity")
        total += st.specificity * st.frequency
    return total


# -- seed files ---------------------------------------------------------------

@dataclass(slots=True)
class SeedEntry:
    category: str
    motif: Motif
    specificity: float | None = None
    frequency: float | None = None

    @property
    def stats(self) -> MotifStats | None:
        if self.specificity is None or self.frequency is None:
            return None
        return MotifStats(self.specificity, self.frequency, 0)


def expand_variants(phrase: str) -> list[str]:
    """Expand compact alternation syntax in a literal phrase.

    Two forms, combinable across words: a bracket suffix set
    (``fired[o/a]`` -> ``firedo``, ``fireda``) and whole-word slashes
    (``work/job`` -> ``work``, ``job``). Returns all combinations in
    deterministic order; a plain phrase comes back as itself.
    """
    per_word: list[list[str]] = []
    for word in phrase.split():
        if "[" in word and word.endswith("]"):
            stem, _, rest = word.partition("[")
            options = rest[:-1].split("/")
            per_word.append([stem + opt for opt in options])
        elif "/" in word and not word.startswith("http"):
            per_word.append([w for w in word.split("/") if w])
        else:
            per_word.append([word])
    return [" ".join(combo) for combo in itertools.product(*per_word)]


def _motif_from_pattern(kind: str, pattern) -> Motif:
    if kind == "literal":
        if not isinstance(pattern, str):
            raise ValueError("literal pattern must be a string")
        variants = expand_variants(pattern)
        if len(variants) == 1:
            return Motif.literal(variants[0])
        return Motif.alternation(
            [Motif.literal(v) for v in variants], display=pattern
        )
    if kind == "ordered":
        if not isinstance(pattern, list) or not all(isinstance(t, str) for t in pattern):
            raise ValueError("ordered pattern must be a list of tokens")
        return Motif.ordered(pattern)
    if kind == "alternation":
        if not isinstance(pattern, list) or not pattern:
            raise ValueError("alternation pattern must be a non-empty list")
        subs = []
        for item in pattern:
            if isinstance(item, str):
                subs.append(_motif_from_pattern("literal", item))
            elif isinstance(item, dict):
                subs.append(_motif_from_pattern(item["kind"], item["pattern"]))
            else:
                raise ValueError("alternation items must be strings or objects")
        return Motif.alternation(subs)
    raise ValueError(f"unknown motif kind: {kind!r}")


def load_seed_file(path: str) -> list[SeedEntry]:
    """Load seed motifs from JSONL records.

    Required fields: ``class``, ``kind``, ``pattern``. Optional:
    ``specificity``, ``frequency`` (pre-measured stats). Compact alternation
    syntax inside literal patterns is normalized at load time.
    """
    entries: list[SeedEntry] = []
    with open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON: {exc}") from None
            try:
                motif = _motif_from_pattern(rec["kind"], rec["pattern"])
                entries.append(
                    SeedEntry(
                        category=rec["class"],
                        motif=motif,
                        specificity=rec.get("specificity"),
                        frequency=rec.get("frequency"),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    return entries


def write_motif_report(
    path: str, rows: list[tuple[Motif, MotifStats, bool]]
) -> None:
    """CSV report: motif display, S, F, retained flag."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["motif", "specificity", "frequency", "retained"])
        for motif, stats, retained in rows:
            s = "" if stats.specificity is None else repr(stats.specificity)
            writer.writerow([motif.display, s, repr(stats.frequency), int(retained)])
