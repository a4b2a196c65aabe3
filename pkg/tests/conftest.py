import pytest

from xferlab.corpus import (
    Dataset,
    DatasetKind,
    Example,
    Polarity,
    Provenance,
    RawReview,
    Sentiment,
)


def rated_review(rid: int, rating: int, text: str = "some text", domain: str = "A") -> RawReview:
    return RawReview(rid, text, rating=rating, domain=domain)


def gold_review(rid: int, sentiment: Sentiment, text: str = "some text", domain: str = "A") -> RawReview:
    return RawReview(rid, text, gold_polarity=sentiment, domain=domain)


def example(rid: int, label: Polarity, provenance=Provenance.FULL, domain: str = "A", text: str = "t") -> Example:
    return Example(rid, text, label, provenance, domain)


def dataset_of(
    labels, kind=DatasetKind.FLD, domain: str = "A", name: str = "fixture", id_base: int = 1
) -> Dataset:
    prov = Provenance.WEAK if kind is DatasetKind.WLD else Provenance.FULL
    examples = tuple(
        example(id_base + i, lab, provenance=prov, domain=domain, text=f"text {i}")
        for i, lab in enumerate(labels)
    )
    return Dataset(name, kind, domain, examples)


@pytest.fixture
def pos():
    return Polarity.POSITIVE


@pytest.fixture
def neg():
    return Polarity.NEGATIVE
