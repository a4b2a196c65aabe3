"""Review corpora: weak labels from star ratings, splits, manifests.

A corpus is a list of raw reviews carrying either a 1-5 star rating, a
gold sentiment label, or both.  Ratings are converted to binary polarity
by a fixed rule (4-5 stars positive, 1-2 negative, 3-star reviews
dropped), gold labels keep only the non-neutral reviews.  Datasets built
here are immutable and carry their split membership, so every downstream
artifact is reproducible from (source file, seed).
"""

from __future__ import annotations

import csv
import enum
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError


class Sentiment(enum.Enum):
    """Three-way gold annotation attached to fully labeled reviews."""

    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


class Polarity(enum.Enum):
    """Binary label used for training and evaluation. Neutral is filtered upstream."""

    NEGATIVE = "negative"
    POSITIVE = "positive"

    @property
    def index(self) -> int:
        """Class index used by the model head: negative=0, positive=1."""
        return 1 if self is Polarity.POSITIVE else 0

    @staticmethod
    def from_index(i: int) -> "Polarity":
        return Polarity.POSITIVE if i == 1 else Polarity.NEGATIVE


class Provenance(enum.Enum):
    WEAK = "weak"
    FULL = "full"


class DatasetKind(enum.Enum):
    WLD = "wld"  # weakly labeled: polarity derived from star ratings
    FLD = "fld"  # fully labeled: human-assigned polarity


class Split(enum.Enum):
    ALL = "all"
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class RawReview:
    """One source record: text plus a rating and/or a gold label."""

    id: int
    text: str
    rating: int | None = None
    gold_polarity: Sentiment | None = None
    domain: str = ""

    def __post_init__(self):
        if self.rating is None and self.gold_polarity is None:
            raise ValidationError(f"review {self.id}: needs a rating or a gold label")
        if self.rating is not None and not (
            isinstance(self.rating, int) and 1 <= self.rating <= 5
        ):
            raise ValidationError(
                f"review {self.id}: rating {self.rating!r} outside [1, 5]"
            )


@dataclass(frozen=True)
class Example:
    """A labeled training/evaluation unit."""

    review_id: int
    text: str
    label: Polarity
    provenance: Provenance
    domain: str


@dataclass(frozen=True)
class Dataset:
    name: str
    kind: DatasetKind
    domain: str
    examples: tuple[Example, ...]
    split: Split = Split.ALL

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        want = Provenance.WEAK if self.kind is DatasetKind.WLD else Provenance.FULL
        for ex in self.examples:
            if ex.domain != self.domain:
                raise ValidationError(
                    f"dataset {self.name}: example {ex.review_id} has domain "
                    f"{ex.domain!r}, dataset is {self.domain!r}"
                )
            if ex.provenance is not want:
                raise ValidationError(
                    f"dataset {self.name}: {self.kind.value} dataset cannot hold "
                    f"{ex.provenance.value}-provenance example {ex.review_id}"
                )

    def __len__(self) -> int:
        return len(self.examples)


@dataclass(frozen=True)
class DatasetStats:
    count: int
    positive_count: int
    negative_count: int

    @property
    def pn_ratio(self) -> float | None:
        """Positive/negative count ratio; None (undefined) when there are no negatives."""
        if self.negative_count == 0:
            return None
        return self.positive_count / self.negative_count


def weak_label(rating: int, review_id: int | None = None) -> Polarity | None:
    """Map a 1-5 star rating to a polarity; 3-star reviews map to None (excluded)."""
    if not isinstance(rating, (int, np.integer)) or not 1 <= rating <= 5:
        who = f" (review {review_id})" if review_id is not None else ""
        raise ValidationError(f"rating {rating!r} outside [1, 5]{who}")
    if rating >= 4:
        return Polarity.POSITIVE
    if rating <= 2:
        return Polarity.NEGATIVE
    return None


def build_wld(reviews: list[RawReview], domain: str, name: str | None = None) -> Dataset:
    """Weak-label every rated review, dropping the 3-star ones. Order is preserved."""
    examples = []
    for rv in reviews:
        if rv.rating is None:
            raise ValidationError(f"review {rv.id}: no rating, cannot weak-label")
        _check_domain(rv, domain)
        label = weak_label(rv.rating, review_id=rv.id)
        if label is None:
            continue
        examples.append(
            Example(rv.id, rv.text, label, Provenance.WEAK, domain)
        )
    if not examples:
        warnings.warn(f"weak-labeled dataset for {domain!r} is empty after filtering")
    return Dataset(name or f"{domain.lower()}_wld", DatasetKind.WLD, domain, tuple(examples))


def build_fld(reviews: list[RawReview], domain: str, name: str | None = None) -> Dataset:
    """Keep the non-neutral gold-labeled reviews. Order is preserved."""
    examples = []
    for rv in reviews:
        if rv.gold_polarity is None:
            raise ValidationError(f"review {rv.id}: no gold label")
        _check_domain(rv, domain)
        if rv.gold_polarity is Sentiment.NEUTRAL:
            continue
        label = (
            Polarity.POSITIVE
            if rv.gold_polarity is Sentiment.POSITIVE
            else Polarity.NEGATIVE
        )
        examples.append(Example(rv.id, rv.text, label, Provenance.FULL, domain))
    if not examples:
        warnings.warn(f"fully labeled dataset for {domain!r} is empty after filtering")
    return Dataset(name or f"{domain.lower()}_fld", DatasetKind.FLD, domain, tuple(examples))


def _check_domain(rv: RawReview, domain: str) -> None:
    if rv.domain and rv.domain != domain:
        raise ValidationError(
            f"review {rv.id}: tagged domain {rv.domain!r} != dataset domain {domain!r}"
        )


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split: floor(train_fraction*N) to train, rest to test.

    Weakly labeled datasets are never split; asking for one is an error.
    """
    if dataset.kind is DatasetKind.WLD:
        raise ValidationError("WLDs are not split; they are used whole for pretraining")
    if dataset.split is not Split.ALL:
        raise ValidationError(f"dataset {dataset.name} is already a {dataset.split.value} split")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction {train_fraction} outside (0, 1)")
    n = len(dataset)
    if n == 0:
        raise ValidationError(f"cannot split empty dataset {dataset.name}")
    order = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF).permutation(n)
    n_train = math.floor(train_fraction * n)
    train_ex = tuple(dataset.examples[i] for i in order[:n_train])
    test_ex = tuple(dataset.examples[i] for i in order[n_train:])
    return (
        Dataset(dataset.name, dataset.kind, dataset.domain, train_ex, Split.TRAIN),
        Dataset(dataset.name, dataset.kind, dataset.domain, test_ex, Split.TEST),
    )


def stats(dataset: Dataset) -> DatasetStats:
    pos = sum(1 for ex in dataset.examples if ex.label is Polarity.POSITIVE)
    return DatasetStats(len(dataset), pos, len(dataset) - pos)


# --- corpus files -----------------------------------------------------------
#
# Input corpora come as JSON-lines ({id, text, rating|label, domain?}) or CSV
# with header id,text,rating,label,domain (RFC 4180, empty cells for absent
# fields).  Prepared datasets are persisted as a JSONL manifest of examples
# plus a sidecar JSON header.


def load_corpus(path: str | Path, format: str = "jsonl") -> list[RawReview]:
    """Parse a raw corpus file. Raises FormatError naming the offending line."""
    path = Path(path)
    try:
        if format == "jsonl":
            return _load_jsonl(path)
        if format == "csv":
            return _load_csv(path)
    except OSError as err:
        raise ValidationError(f"cannot read corpus {path}: {err}") from None
    raise ValidationError(f"unknown corpus format {format!r}")


def _load_jsonl(path: Path) -> list[RawReview]:
    reviews = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as err:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({err.msg})") from None
            reviews.append(_review_from_row(row, path, lineno, seen))
    return reviews


def _load_csv(path: Path) -> list[RawReview]:
    reviews = []
    seen: set[int] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["id", "text", "rating", "label", "domain"]
        if reader.fieldnames != expected:
            raise FormatError(
                f"{path}: expected header {','.join(expected)}, got "
                f"{','.join(reader.fieldnames or [])}"
            )
        for row in reader:
            lineno = reader.line_num
            cleaned = {k: v for k, v in row.items() if v not in (None, "")}
            reviews.append(_review_from_row(cleaned, path, lineno, seen))
    return reviews


def _review_from_row(row: dict, path: Path, lineno: int, seen: set[int]) -> RawReview:
    def bad(msg: str):
        return FormatError(f"{path}:{lineno}: {msg}")

    try:
        rid = int(row["id"])
        text = str(row["text"])
    except (KeyError, TypeError, ValueError):
        raise bad("row needs integer 'id' and string 'text'") from None
    if rid in seen:
        raise bad(f"duplicate review id {rid}")
    seen.add(rid)

    rating = row.get("rating")
    if rating is not None:
        try:
            rating = int(rating)
        except (TypeError, ValueError):
            raise bad(f"rating {row['rating']!r} is not an integer") from None

    gold = None
    if row.get("label") is not None:
        try:
            gold = Sentiment(str(row["label"]).lower())
        except ValueError:
            raise bad(f"label {row['label']!r} not one of positive/negative/neutral") from None

    try:
        return RawReview(rid, text, rating, gold, str(row.get("domain", "")))
    except ValidationError as err:
        raise bad(str(err)) from None


def manifest_header_path(manifest_path: str | Path) -> Path:
    """Sidecar header next to the example JSONL: foo.jsonl -> foo.header.json."""
    p = Path(manifest_path)
    return p.with_name(p.stem + ".header.json")


def save_manifest(
    dataset: Dataset,
    path: str | Path,
    seed: int | None = None,
    train_fraction: float | None = None,
) -> None:
    """Write the examples as JSONL plus a sidecar header with dataset metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            fh.write(
                json.dumps(
                    {
                        "review_id": ex.review_id,
                        "text": ex.text,
                        "label": ex.label.value,
                        "provenance": ex.provenance.value,
                        "domain": ex.domain,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    st = stats(dataset)
    header = {
        "name": dataset.name,
        "kind": dataset.kind.value,
        "domain": dataset.domain,
        "split": dataset.split.value,
        "seed": seed,
        "train_fraction": train_fraction,
        "stats": stats_to_json(st),
    }
    with open(manifest_header_path(path), "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2)
        fh.write("\n")


def load_manifest(path: str | Path) -> Dataset:
    """Read a manifest written by save_manifest back into a Dataset."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"manifest {path} not found")
    header_path = manifest_header_path(path)
    if not header_path.exists():
        raise FormatError(f"manifest header {header_path} not found")
    with open(header_path, encoding="utf-8") as fh:
        header = json.load(fh)
    examples = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                ex = Example(
                    int(row["review_id"]),
                    str(row["text"]),
                    Polarity(row["label"]),
                    Provenance(row["provenance"]),
                    str(row["domain"]),
                )
            except (KeyError, ValueError, TypeError) as err:
                raise FormatError(f"{path}:{lineno}: bad manifest row ({err})") from None
            if ex.review_id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate review id {ex.review_id}")
            seen.add(ex.review_id)
            examples.append(ex)
    try:
        return Dataset(
            str(header["name"]),
            DatasetKind(header["kind"]),
            str(header["domain"]),
            tuple(examples),
            Split(header["split"]),
        )
    except (KeyError, ValueError) as err:
        raise FormatError(f"{header_path}: bad header ({err})") from None


def stats_to_json(st: DatasetStats) -> dict:
    return {
        "count": st.count,
        "positive_count": st.positive_count,
        "negative_count": st.negative_count,
        "pn_ratio": st.pn_ratio,
    }
