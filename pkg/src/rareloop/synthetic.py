"""Synthetic corpus with planted template families for end-to-end runs.

The corpus plants twelve positive "template families" at a configurable
overall rate (default one in a thousand). Four families are reachable from
seed motifs: each has a characteristic oracle phrase, a looser seed pair
that also matches a block of same-vocabulary confuser docs, so initial
labels mix both classes. The other eight families are invisible to the
seeds; each carries an exclusive marker token pair (its characteristic
skip-gram). All positive and confuser docs share a small bank of support
tokens, which is what gap-tolerant gram mining can bridge across families;
background docs and job-ad confusers use disjoint vocabulary so nothing
else produces an oracle match.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus
from .experiment import ExperimentConfig

__all__ = [
    "SyntheticCorpus",
    "default_schedule",
    "experiment_config",
    "generate",
]

TARGET_CLASS = "planted"

SUPPORT = ("job", "work", "today", "week", "month")

# shared by seed-family positives and ads, absent from confusers: the
# initial model learns these as positive evidence, so promotional docs
# dominate early rankings until a strategy labels some of them
PROMO = ("please", "dm", "share", "retweet", "help")

BACKGROUND = (
    "the and was but with from they have this that when over under about "
    "after before again then once here there all some more most other such "
    "only just even still also quite rather really never always often slow "
    "rain river bridge stone market morning evening garden window street "
    "coffee paper train ticket music rehearsal weather cloud sunshine bird "
    "dog cat walk ride drive visit cousin friend neighbour family dinner "
    "lunch recipe kitchen garden game match score squad practice verse song "
    "guitar film series episode chapter novel library museum painting photo "
    "camera light shadow colour winter summer autumn spring holiday travel "
    "mountain valley coast island harbour boat ferry plane airport station "
    "road corner square tower clock bell letter postcard stamp drawer shelf "
    "candle lamp carpet chair table plate glass bottle basket blanket coat "
    "scarf boots umbrella puddle leaves branches roots seeds flower meadow "
    "field fence gate path trail footsteps voices laughter whisper silence"
).split()

AD_BANK = (
    "hiring apply online store team staff pay benefits crew shift click "
    "link immediately openings weekend bonus flexible hours join start now"
).split()


@dataclass(frozen=True, slots=True)
class Family:
    name: str
    oracle: dict
    size_weight: float
    seed: dict | None = None
    marker: tuple[str, str] | None = None


SEED_FAMILIES = (
    Family(
        name="need_job",
        oracle={"kind": "literal", "pattern": "need a job asap"},
        seed={"kind": "ordered", "pattern": ["need", "job"]},
        size_weight=1.0,
    ),
    Family(
        name="anyone_hiring",
        oracle={"kind": "literal", "pattern": "is anyone hiring around"},
        seed={"kind": "ordered", "pattern": ["anyone", "hiring"]},
        size_weight=1.0,
    ),
    Family(
        name="looking_gigs",
        oracle={"kind": "literal", "pattern": "looking for gigs tonight"},
        seed={"kind": "ordered", "pattern": ["looking", "gigs"]},
        size_weight=1.0,
    ),
    Family(
        name="applying_everywhere",
        oracle={"kind": "literal", "pattern": "applying everywhere no luck"},
        seed={"kind": "ordered", "pattern": ["applying", "everywhere"]},
        size_weight=1.0,
    ),
)

HIDDEN_FAMILIES = (
    Family(
        name="resume_submitted",
        oracle={"kind": "ordered", "pattern": ["resume", "submitted"]},
        marker=("resume", "submitted"),
        size_weight=1.0,
    ),
    Family(
        name="interview_lined",
        oracle={"kind": "ordered", "pattern": ["interview", "lined"]},
        marker=("interview", "lined"),
        size_weight=1.0,
    ),
    Family(
        name="unemployment_cheque",
        oracle={"kind": "ordered", "pattern": ["unemployment", "cheque"]},
        marker=("unemployment", "cheque"),
        size_weight=1.0,
    ),
    Family(
        name="redundancy_notice",
        oracle={"kind": "ordered", "pattern": ["redundancy", "notice"]},
        marker=("redundancy", "notice"),
        size_weight=1.0,
    ),
    Family(
        name="cv_recruiter",
        oracle={"kind": "ordered", "pattern": ["cv", "recruiter"]},
        marker=("cv", "recruiter"),
        size_weight=1.0,
    ),
    Family(
        name="internship_ended",
        oracle={"kind": "ordered", "pattern": ["internship", "ended"]},
        marker=("internship", "ended"),
        size_weight=1.0,
    ),
    Family(
        name="probation_cut",
        oracle={"kind": "ordered", "pattern": ["probation", "cut"]},
        marker=("probation", "cut"),
        size_weight=1.0,
    ),
    Family(
        name="vacancy_mailed",
        oracle={"kind": "ordered", "pattern": ["vacancy", "mailed"]},
        marker=("vacancy", "mailed"),
        size_weight=1.0,
    ),
)

# per-family exclusive filler vocabulary (texture plus a learnable surface)
FAMILY_FILLER = {
    "need_job": "badly honestly savings thin stretch rent".split(),
    "anyone_hiring": "town nearby asking village desperate folks".split(),
    "looking_gigs": "evenings driving deliveries weekends cash spare".split(),
    "applying_everywhere": "applications rejections inbox nothing waiting yet".split(),
    "resume_submitted": "finally warehouse portal uploaded fingers crossed".split(),
    "interview_lined": "nervous thursday prep questions suit ready".split(),
    "unemployment_cheque": "late payment queue paperwork stamped office".split(),
    "redundancy_notice": "plant closing consultation union floor shocked".split(),
    "cv_recruiter": "polished agency emailed callback pipeline promised".split(),
    "internship_ended": "unpaid semester mentor reference certificate done".split(),
    "probation_cut": "short manager meeting friday warning blindsided".split(),
    "vacancy_mailed": "posting circular newsletter branch applied enclosed".split(),
}

# seed-pair confuser sentences: match the seed pair and contain every token
# of the oracle phrase without ever completing it in order, so no single
# word separates a true positive from its confuser and a presence model
# must lean on the filler and promotional banks instead
CONFUSER_CORES = {
    "need_job": ["asap", "need", "a", "job", "for", "my", "cousin"],
    "anyone_hiring": ["is", "anyone", "hiring", "boats", "around", "the", "harbour"],
    "looking_gigs": ["tonight", "looking", "for", "gigs", "to", "watch", "downtown"],
    "applying_everywhere": ["no", "luck", "applying", "everywhere", "the", "rule", "allows"],
}

ORACLE_CORES = {
    "need_job": ["need", "a", "job", "asap"],
    "anyone_hiring": ["is", "anyone", "hiring", "around"],
    "looking_gigs": ["looking", "for", "gigs", "tonight"],
    "applying_everywhere": ["applying", "everywhere", "no", "luck"],
}


@dataclass(slots=True)
class SyntheticCorpus:
    corpus: Corpus
    positive_ids: dict[str, list[str]]   # family name -> doc ids
    confuser_ids: dict[str, list[str]]
    ad_ids: list[str]
    seed_specs: list[dict]
    oracle_specs: list[dict]
    marker_grams: set[tuple[str, ...]]
    n_docs: int
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def n_positive(self) -> int:
        return sum(len(v) for v in self.positive_ids.values())


def _check_vocabulary_banks() -> None:
    """Token bank hygiene.

    The planted ground truth only holds if no doc outside a family can
    complete that family's oracle pattern, so: marker tokens are exclusive
    to their family; support tokens never leak into background or ad text;
    family fillers stay out of every signal bank; and each seed pair keeps
    at least one token that occurs nowhere outside its own family's docs.
    """
    support, background, ads = set(SUPPORT), set(BACKGROUND), set(AD_BANK)
    promo = set(PROMO)
    markers = {t for f in HIDDEN_FAMILIES for t in f.marker}
    fillers = {n: set(v) for n, v in FAMILY_FILLER.items()}
    cores = {
        f.name: set(ORACLE_CORES[f.name]) | set(CONFUSER_CORES[f.name])
        for f in SEED_FAMILIES
    }

    assert not support & (background | ads | promo), "support tokens leak"
    assert not promo & (background | ads), "promo bank must be its own tokens"
    everything_else = support | background | ads | promo
    everything_else |= set().union(*cores.values())
    everything_else |= set().union(*fillers.values())
    assert not markers & everything_else, "marker tokens must be family-exclusive"
    marker_list = [t for f in HIDDEN_FAMILIES for t in f.marker]
    assert len(marker_list) == len(set(marker_list)), "marker pairs overlap"

    for name, fill in fillers.items():
        others = set().union(*(v for n, v in fillers.items() if n != name))
        assert not fill & others, f"{name} filler shared with another family"
        assert not fill & (support | ads | promo | markers), (
            f"{name} filler in a signal bank"
        )

    for fam in SEED_FAMILIES:
        pair = set(fam.seed["pattern"])
        outside = support | background | ads | promo | markers
        outside |= set().union(*(c for n, c in cores.items() if n != fam.name))
        outside |= set().union(*fillers.values())
        exclusive = pair - outside
        assert exclusive, f"seed pair for {fam.name} has no exclusive token"


def _support_draw(rng: np.random.Generator) -> list[str]:
    mask = rng.random(len(SUPPORT)) < 0.35
    out = [tok for tok, keep in zip(SUPPORT, mask) if keep]
    if not out:
        out = [SUPPORT[int(rng.integers(len(SUPPORT)))]]
    return out


def _bg_draw(rng: np.random.Generator, k: int) -> list[str]:
    return [BACKGROUND[i] for i in rng.integers(0, len(BACKGROUND), size=k)]


def _positive_text(fam: Family, rng: np.random.Generator) -> str:
    filler = FAMILY_FILLER[fam.name]
    fam_part = [filler[i] for i in rng.integers(0, len(filler), size=2)]
    if fam.marker is not None:
        core = list(fam.marker)
        promo: list[str] = []
    else:
        # seed-family positives mix promotional vocabulary in at random so
        # the promotional docs are plausible early hits instead of being
        # separable from the seed families by the promo bank alone
        core = list(ORACLE_CORES[fam.name])
        keep = rng.random(2) < 0.5
        picks = rng.choice(len(PROMO), size=2, replace=False)
        promo = [PROMO[p] for p, k in zip(picks, keep) if k]
    tail = _support_draw(rng) + fam_part + promo + _bg_draw(rng, 2)
    rng.shuffle(tail)
    head = _bg_draw(rng, int(rng.integers(0, 3)))
    return " ".join(head + core + tail)


def _confuser_text(fam: Family, rng: np.random.Generator) -> str:
    core = list(CONFUSER_CORES[fam.name])
    tail = _support_draw(rng) + _bg_draw(rng, 3)
    rng.shuffle(tail)
    return " ".join(core + tail)


def _ad_text(rng: np.random.Generator) -> str:
    picks = rng.choice(len(AD_BANK), size=5, replace=False)
    tokens = [AD_BANK[i] for i in picks] + list(PROMO) + ["job", "work"]
    rng.shuffle(tokens)
    return " ".join(tokens + _bg_draw(rng, 2))


def generate(
    n_docs: int = 1_000_000,
    positive_rate: float = 1e-3,
    seed: int = 0,
    confusers_per_seed_family: float = 1200.0,
    n_ads: float = 4000.0,
    seed_family_share: float = 0.16,
) -> SyntheticCorpus:
    """Plant the twelve families into a background corpus.

    Counts scale with ``n_docs``: positives at ``positive_rate``, with
    ``seed_family_share`` of them spread over the four seed-reachable
    families and the rest over the eight hidden ones; confusers and ads
    scale from their reference sizes at one million docs.
    """
    _check_vocabulary_banks()
    rng = np.random.default_rng([seed, 0])
    scale = n_docs / 1_000_000

    n_pos = int(round(n_docs * positive_rate))
    n_seed_pos = int(round(n_pos * seed_family_share))
    per_seed_fam = max(1, n_seed_pos // len(SEED_FAMILIES))
    per_hidden_fam = max(1, (n_pos - per_seed_fam * len(SEED_FAMILIES)) // len(HIDDEN_FAMILIES))
    n_conf = max(1, int(round(confusers_per_seed_family * scale)))
    n_ad = int(round(n_ads * scale))

    families = list(SEED_FAMILIES) + list(HIDDEN_FAMILIES)
    sizes = [per_seed_fam] * len(SEED_FAMILIES) + [per_hidden_fam] * len(HIDDEN_FAMILIES)
    n_special = sum(sizes) + n_conf * len(SEED_FAMILIES) + n_ad
    if n_special >= n_docs:
        raise ValueError("special blocks do not fit into the corpus size")

    slots = rng.choice(n_docs, size=n_special, replace=False)
    cursor = 0

    texts: dict[int, str] = {}
    positive_ids: dict[str, list[str]] = {}
    confuser_ids: dict[str, list[str]] = {}
    for fam, size in zip(families, sizes):
        ids = []
        for _ in range(size):
            pos = int(slots[cursor]); cursor += 1
            texts[pos] = _positive_text(fam, rng)
            ids.append(f"d{pos:07d}")
        positive_ids[fam.name] = sorted(ids)
    for fam in SEED_FAMILIES:
        ids = []
        for _ in range(n_conf):
            pos = int(slots[cursor]); cursor += 1
            texts[pos] = _confuser_text(fam, rng)
            ids.append(f"d{pos:07d}")
        confuser_ids[fam.name] = sorted(ids)
    ad_ids = []
    for _ in range(n_ad):
        pos = int(slots[cursor]); cursor += 1
        texts[pos] = _ad_text(rng)
        ad_ids.append(f"d{pos:07d}")

    corpus = Corpus()
    vocab = np.array(BACKGROUND)
    chunk = 100_000
    for start in range(0, n_docs, chunk):
        stop = min(start + chunk, n_docs)
        lengths = rng.integers(8, 13, size=stop - start)
        draws = rng.integers(0, len(vocab), size=(stop - start, 12))
        for j in range(stop - start):
            i = start + j
            special = texts.get(i)
            if special is not None:
                corpus.add(f"d{i:07d}", special)
            else:
                row = draws[j, : lengths[j]]
                corpus.add(f"d{i:07d}", " ".join(vocab[row]))

    seed_specs = []
    for fam in SEED_FAMILIES:
        # design stats: the seed pair hits its family plus one confuser block
        fam_n = len(positive_ids[fam.name])
        spec = dict(fam.seed)
        spec["specificity"] = fam_n / (fam_n + n_conf)
        spec["frequency"] = (fam_n + n_conf) / n_docs
        seed_specs.append(spec)
    oracle_specs = [dict(f.oracle) for f in families]
    marker_grams = {tuple(f.marker) for f in HIDDEN_FAMILIES}

    return SyntheticCorpus(
        corpus=corpus,
        positive_ids=positive_ids,
        confuser_ids=confuser_ids,
        ad_ids=sorted(ad_ids),
        seed_specs=seed_specs,
        oracle_specs=oracle_specs,
        marker_grams=marker_grams,
        n_docs=n_docs,
        counts={
            "positives": sum(sizes),
            "seed_positives": per_seed_fam * len(SEED_FAMILIES),
            "hidden_positives": per_hidden_fam * len(HIDDEN_FAMILIES),
            "confusers": n_conf * len(SEED_FAMILIES),
            "ads": n_ad,
        },
    )


def default_schedule(n_docs: int = 1_000_000) -> tuple[tuple[int, int], ...]:
    """Rank intervals for the planted corpus: dense where positives should
    end up, sparse in the tail. Scales the tail down with the corpus."""
    base = [(1, 20), (101, 110), (201, 210), (317, 326), (451, 460)]
    tail = [(1001, 1010), (3163, 3172), (31623, 31632)]
    eval_size = n_docs // 2
    out = [iv for iv in base if iv[1] <= eval_size]
    out += [iv for iv in tail if iv[1] <= eval_size]
    return tuple(out)


def experiment_config(
    data: SyntheticCorpus,
    strategy: str = "exploit_explore",
    seed: int = 7,
    n_iterations: int = 5,
    **overrides,
) -> ExperimentConfig:
    """The experiment configuration used for planted-corpus runs."""
    params = dict(
        classes=(TARGET_CLASS,),
        strategy=strategy,
        seeds={TARGET_CLASS: [dict(s) for s in data.seed_specs]},
        oracle={TARGET_CLASS: [dict(s) for s in data.oracle_specs]},
        labeler="oracle",
        seed=seed,
        batch_size=100,
        init_per_seed=150,
        eval_ratio=0.5,
        rank_schedule=default_schedule(data.n_docs),
        metrics_B=1000,
        calibration_B=1000,
        n_fit_seeds=15,
        l2=10.0,
        top_size=10000,
        n_exploit=50,
        per_gram=5,
        k_per_n=5,
        # floor sits between stray co-occurrence counts and planted family
        # document frequency, so mined grams are real family surfaces
        gram_min_freq=7e-5,
        max_iterations=n_iterations,
    )
    params.update(overrides)
    return ExperimentConfig(**params)
