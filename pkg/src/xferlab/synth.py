"""Synthetic two-domain review fixture.

Domains A and B share a polarity lexicon but draw their non-sentiment
vocabulary from disjoint word lists, so a classifier that learns the
shared lexicon transfers between them while domain-specific features do
not. Source domain A gets a large weakly labeled set (ratings) plus a
small clean fully labeled pool; target domain B gets a clean test split.

Rating noise is systematic rather than uniform: a designated "divisive"
slice of the lexicon attracts wrong ratings (rating/sentiment mismatch,
as happens with sarcastic or grudging reviews), and flips are assigned
to divisive-word reviews first until the requested total noise rate is
reached. Uniform symmetric flips would leave the optimal decision
boundary untouched at this sample size, which would make weak-only
training look as good as clean training; concentrated noise actually
corrupts part of the feature space the way bad ratings do.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import corpus
from .corpus import Dataset, RawReview, Sentiment, Split
from .errors import ValidationError

_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    wld_size: int = 5000
    fld_pool_size: int = 800
    fld_train_fraction: float = 0.375  # 800 -> 300 train / 500 test
    target_test_size: int = 500
    noise_rate: float = 0.20
    lexicon_size: int = 120  # words per polarity, shared across domains
    divisive_fraction: float = 0.09  # slice of each lexicon prone to bad ratings
    domain_vocab_size: int = 50
    filler_vocab_size: int = 30
    crosstalk: float = 0.05  # chance a polarity slot draws from the wrong lexicon
    pol_words_min: int = 2
    pol_words_max: int = 4
    three_star_extra: int = 100  # rated 3, excluded by the weak-label rule
    neutral_extra: int = 12  # gold-neutral rows, filtered from the FLD

    def __post_init__(self):
        if not 0.0 <= self.noise_rate < 0.5:
            raise ValidationError(f"noise_rate {self.noise_rate} outside [0, 0.5)")
        if self.wld_size < 1 or self.fld_pool_size < 2 or self.target_test_size < 1:
            raise ValidationError("fixture sizes must be positive")


@dataclass(frozen=True)
class Lexicons:
    positive: list[str]
    negative: list[str]
    divisive: set[str]  # subset of positive+negative with unreliable ratings
    domain_a: list[str]
    domain_b: list[str]
    filler: list[str]


def make_lexicons(spec: SynthSpec) -> Lexicons:
    pos = [f"nice{i:02d}" for i in range(spec.lexicon_size)]
    neg = [f"poor{i:02d}" for i in range(spec.lexicon_size)]
    n_div = round(spec.divisive_fraction * spec.lexicon_size)
    divisive = set(pos[:n_div]) | set(neg[:n_div])
    return Lexicons(
        positive=pos,
        negative=neg,
        divisive=divisive,
        domain_a=[f"acme{i:02d}" for i in range(spec.domain_vocab_size)],
        domain_b=[f"brio{i:02d}" for i in range(spec.domain_vocab_size)],
        filler=[f"item{i:02d}" for i in range(spec.filler_vocab_size)],
    )


def _decorate(word: str, rng: np.random.Generator) -> str:
    # light casing/punctuation so the fixture exercises preprocessing
    if rng.random() < 0.15:
        word = word.capitalize()
    r = rng.random()
    if r < 0.06:
        word += "!"
    elif r < 0.10:
        word += "."
    return word


def _compose_review(
    lex: Lexicons,
    domain_words: list[str],
    positive: bool,
    spec: SynthSpec,
    rng: np.random.Generator,
) -> tuple[str, list[str]]:
    """Returns (text, polarity words used)."""
    crosstalk = spec.crosstalk
    n_pol = int(rng.integers(spec.pol_words_min, spec.pol_words_max + 1))
    n_dom = int(rng.integers(3, 7))
    n_fill = int(rng.integers(2, 5))
    own, other = (lex.positive, lex.negative) if positive else (lex.negative, lex.positive)
    pol_words = [
        str(rng.choice(other if rng.random() < crosstalk else own)) for _ in range(n_pol)
    ]
    tokens = (
        pol_words
        + [str(rng.choice(domain_words)) for _ in range(n_dom)]
        + [str(rng.choice(lex.filler)) for _ in range(n_fill)]
    )
    rng.shuffle(tokens)
    return " ".join(_decorate(t, rng) for t in tokens), pol_words


@dataclass(frozen=True)
class SynthFixture:
    a_wld: Dataset
    a_fld_train: Dataset
    a_fld_test: Dataset
    b_fld_test: Dataset
    achieved_noise_rate: float
    lexicons: Lexicons


def build_fixture(spec: SynthSpec) -> SynthFixture:
    """Generate all four datasets deterministically from spec.seed."""
    lex = make_lexicons(spec)
    rng = np.random.default_rng([spec.seed & _U64, 0x53594E])

    next_id = 1

    def gen_labeled(n: int, domain: str, domain_words: list[str]):
        nonlocal next_id
        rows = []
        for _ in range(n):
            positive = bool(rng.random() < 0.5)
            text, pol_words = _compose_review(lex, domain_words, positive, spec, rng)
            rows.append((next_id, text, positive, pol_words))
            next_id += 1
        return rows

    # --- A: weakly labeled, ratings with concentrated noise
    wld_rows = gen_labeled(spec.wld_size, "A", lex.domain_a)
    n_flips = round(spec.noise_rate * spec.wld_size)
    divisive_idx = [
        i for i, (_, _, _, pol_words) in enumerate(wld_rows)
        if any(w in lex.divisive for w in pol_words)
    ]
    rng.shuffle(divisive_idx)
    flip_idx = set(divisive_idx[:n_flips])
    if len(flip_idx) < n_flips:
        rest = [i for i in range(len(wld_rows)) if i not in flip_idx]
        rng.shuffle(rest)
        flip_idx |= set(rest[: n_flips - len(flip_idx)])

    wld_reviews = []
    for i, (rid, text, positive, _) in enumerate(wld_rows):
        rated_positive = positive != (i in flip_idx)
        rating = int(rng.choice([4, 5] if rated_positive else [1, 2]))
        wld_reviews.append(RawReview(rid, text, rating=rating, domain="A"))
    # extra 3-star rows, dropped by the weak-label rule
    for rid, text, positive, _ in gen_labeled(spec.three_star_extra, "A", lex.domain_a):
        wld_reviews.append(RawReview(rid, text, rating=3, domain="A"))

    def gold_reviews(rows, domain: str, neutral_extra: int, domain_words):
        out = [
            RawReview(
                rid,
                text,
                gold_polarity=Sentiment.POSITIVE if positive else Sentiment.NEGATIVE,
                domain=domain,
            )
            for rid, text, positive, _ in rows
        ]
        for rid, text, _, _ in gen_labeled(neutral_extra, domain, domain_words):
            out.append(RawReview(rid, text, gold_polarity=Sentiment.NEUTRAL, domain=domain))
        return out

    # --- A: clean fully labeled pool, split into train/test
    a_pool = gold_reviews(
        gen_labeled(spec.fld_pool_size, "A", lex.domain_a), "A", spec.neutral_extra, lex.domain_a
    )
    a_fld_all = corpus.build_fld(a_pool, "A", name="a_fld")
    a_train, a_test = corpus.split(a_fld_all, spec.fld_train_fraction, spec.seed)

    # --- B: clean test split only
    b_pool = gold_reviews(
        gen_labeled(spec.target_test_size, "B", lex.domain_b), "B", spec.neutral_extra, lex.domain_b
    )
    b_test = replace(corpus.build_fld(b_pool, "B", name="b_fld"), split=Split.TEST)

    a_wld = corpus.build_wld(wld_reviews, "A", name="a_wld")
    return SynthFixture(
        a_wld=a_wld,
        a_fld_train=a_train,
        a_fld_test=a_test,
        b_fld_test=b_test,
        achieved_noise_rate=n_flips / spec.wld_size,
        lexicons=lex,
    )


def write_fixture(spec: SynthSpec, out_dir: str | Path) -> dict[str, Path]:
    """Write the fixture manifests plus a generation-metadata JSON.

    Returns a name -> manifest path map.
    """
    out_dir = Path(out_dir)
    manifest_dir = out_dir / "manifests"
    manifest_dir.mkdir(parents=True, exist_ok=True)
    fx = build_fixture(spec)
    paths = {
        "a_wld": manifest_dir / "a_wld.jsonl",
        "a_fld_train": manifest_dir / "a_fld_train.jsonl",
        "a_fld_test": manifest_dir / "a_fld_test.jsonl",
        "b_fld_test": manifest_dir / "b_fld_test.jsonl",
    }
    corpus.save_manifest(fx.a_wld, paths["a_wld"], seed=spec.seed)
    corpus.save_manifest(
        fx.a_fld_train, paths["a_fld_train"], seed=spec.seed,
        train_fraction=spec.fld_train_fraction,
    )
    corpus.save_manifest(
        fx.a_fld_test, paths["a_fld_test"], seed=spec.seed,
        train_fraction=spec.fld_train_fraction,
    )
    corpus.save_manifest(fx.b_fld_test, paths["b_fld_test"], seed=spec.seed)
    meta = {
        "seed": spec.seed,
        "sizes": {
            "a_wld": len(fx.a_wld),
            "a_fld_train": len(fx.a_fld_train),
            "a_fld_test": len(fx.a_fld_test),
            "b_fld_test": len(fx.b_fld_test),
        },
        "noise_rate": fx.achieved_noise_rate,
        "crosstalk": spec.crosstalk,
        "divisive_words": sorted(fx.lexicons.divisive),
    }
    with open(out_dir / "fixture.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return paths
