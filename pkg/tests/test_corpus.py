import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dataset_of, gold_review, rated_review
from xferlab import corpus
from xferlab.corpus import (
    Dataset,
    DatasetKind,
    Example,
    Polarity,
    Provenance,
    RawReview,
    Sentiment,
    Split,
)
from xferlab.errors import FormatError, ValidationError


class TestWeakLabel:
    def test_exhaustive_rule(self):
        # the complete rating -> polarity table
        assert corpus.weak_label(1) is Polarity.NEGATIVE
        assert corpus.weak_label(2) is Polarity.NEGATIVE
        assert corpus.weak_label(3) is None
        assert corpus.weak_label(4) is Polarity.POSITIVE
        assert corpus.weak_label(5) is Polarity.POSITIVE

    @pytest.mark.parametrize("rating", [0, 6, -1, 100])
    def test_out_of_range_names_review(self, rating):
        with pytest.raises(ValidationError, match="review 42"):
            corpus.weak_label(rating, review_id=42)

    def test_low_and_high_bands_never_collide(self):
        lows = {corpus.weak_label(r) for r in (1, 2)}
        highs = {corpus.weak_label(r) for r in (4, 5)}
        assert lows == {Polarity.NEGATIVE}
        assert highs == {Polarity.POSITIVE}


class TestBuildWld:
    def test_three_star_dropped_order_preserved(self):
        reviews = [rated_review(i, r) for i, r in enumerate([5, 3, 1, 4], start=1)]
        ds = corpus.build_wld(reviews, "A")
        assert [ex.label for ex in ds.examples] == [
            Polarity.POSITIVE,
            Polarity.NEGATIVE,
            Polarity.POSITIVE,
        ]
        assert [ex.review_id for ex in ds.examples] == [1, 3, 4]
        assert ds.kind is DatasetKind.WLD
        assert all(ex.provenance is Provenance.WEAK for ex in ds.examples)

    def test_all_threes_empty_with_warning(self):
        reviews = [rated_review(i, 3) for i in range(1, 4)]
        with pytest.warns(UserWarning, match="empty"):
            ds = corpus.build_wld(reviews, "A")
        assert len(ds) == 0

    def test_two_of_each_rating(self):
        # brute-force oracle: count ratings in {1,2,4,5}, positives in {4,5}
        ratings = [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
        expected_kept = sum(1 for r in ratings if r in (1, 2, 4, 5))
        expected_pos = sum(1 for r in ratings if r in (4, 5))
        ds = corpus.build_wld([rated_review(i, r) for i, r in enumerate(ratings)], "A")
        st_ = corpus.stats(ds)
        assert st_.count == expected_kept == 8
        assert st_.positive_count == expected_pos
        assert st_.pn_ratio == 1.0

    def test_missing_rating_rejected(self):
        reviews = [gold_review(1, Sentiment.POSITIVE)]
        with pytest.raises(ValidationError, match="no rating"):
            corpus.build_wld(reviews, "A")

    @pytest.mark.filterwarnings("ignore:weak-labeled dataset")
    @given(st.lists(st.integers(min_value=1, max_value=5), min_size=1, max_size=60))
    def test_size_matches_brute_force(self, ratings):
        ds = corpus.build_wld(
            [rated_review(i, r) for i, r in enumerate(ratings)], "A"
        )
        assert len(ds) == sum(1 for r in ratings if r != 3)
        assert corpus.stats(ds).positive_count == sum(1 for r in ratings if r >= 4)


class TestBuildFld:
    def test_neutral_filtered(self):
        reviews = [
            gold_review(1, Sentiment.POSITIVE),
            gold_review(2, Sentiment.NEUTRAL),
            gold_review(3, Sentiment.NEGATIVE),
        ]
        ds = corpus.build_fld(reviews, "A")
        assert [ex.label for ex in ds.examples] == [Polarity.POSITIVE, Polarity.NEGATIVE]

    def test_all_neutral_empty_with_warning(self):
        with pytest.warns(UserWarning, match="empty"):
            ds = corpus.build_fld([gold_review(i, Sentiment.NEUTRAL) for i in range(3)], "A")
        assert len(ds) == 0

    def test_balanced_ratio(self):
        reviews = [
            gold_review(i, Sentiment.POSITIVE if i < 500 else Sentiment.NEGATIVE)
            for i in range(1000)
        ]
        assert corpus.stats(corpus.build_fld(reviews, "A")).pn_ratio == 1.0

    def test_missing_gold_rejected(self):
        with pytest.raises(ValidationError, match="no gold label"):
            corpus.build_fld([rated_review(1, 5)], "A")


class TestSplit:
    def test_85_15(self, pos):
        ds = dataset_of([pos] * 1000)
        train, test = corpus.split(ds, 0.85, seed=7)
        assert (len(train), len(test)) == (850, 150)
        assert train.split is Split.TRAIN and test.split is Split.TEST

    def test_floor_rounding(self, pos):
        train, test = corpus.split(dataset_of([pos] * 7), 0.85, seed=7)
        assert (len(train), len(test)) == (5, 2)

    def test_same_seed_identical(self, pos, neg):
        ds = dataset_of([pos, neg] * 20)
        a = corpus.split(ds, 0.85, seed=3)
        b = corpus.split(ds, 0.85, seed=3)
        assert a == b

    def test_wld_rejected(self, pos):
        ds = dataset_of([pos] * 10, kind=DatasetKind.WLD)
        with pytest.raises(ValidationError, match="not split"):
            corpus.split(ds, 0.85, seed=0)

    def test_empty_rejected(self):
        ds = Dataset("empty", DatasetKind.FLD, "A", ())
        with pytest.raises(ValidationError, match="empty"):
            corpus.split(ds, 0.85, seed=0)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_bad_fraction_rejected(self, pos, fraction):
        with pytest.raises(ValidationError, match="train_fraction"):
            corpus.split(dataset_of([pos] * 10), fraction, seed=0)

    def test_resplitting_a_split_rejected(self, pos):
        train, _ = corpus.split(dataset_of([pos] * 10), 0.5, seed=0)
        with pytest.raises(ValidationError, match="already"):
            corpus.split(train, 0.5, seed=0)

    @given(
        n=st.integers(min_value=1, max_value=200),
        fraction=st.floats(min_value=0.01, max_value=0.99),
        seed=st.integers(min_value=0, max_value=2**63 - 1),
    )
    @settings(max_examples=60)
    def test_partition_properties(self, n, fraction, seed):
        ds = dataset_of([Polarity.POSITIVE if i % 3 else Polarity.NEGATIVE for i in range(n)])
        train, test = corpus.split(ds, fraction, seed)
        assert len(train) == int(fraction * n // 1)
        train_ids = {ex.review_id for ex in train.examples}
        test_ids = {ex.review_id for ex in test.examples}
        assert train_ids.isdisjoint(test_ids)
        assert train_ids | test_ids == {ex.review_id for ex in ds.examples}


class TestStats:
    def test_small(self, pos, neg):
        st_ = corpus.stats(dataset_of([pos, pos, neg]))
        assert (st_.count, st_.positive_count, st_.negative_count) == (3, 2, 1)
        assert st_.pn_ratio == 2.0

    def test_sccd_like_proportions(self, pos, neg):
        ds = dataset_of([pos] * 525 + [neg] * 177)
        assert corpus.stats(ds).pn_ratio == pytest.approx(2.96, abs=0.01)

    def test_empty_ratio_undefined(self):
        st_ = corpus.stats(Dataset("d", DatasetKind.FLD, "A", ()))
        assert st_.count == 0
        assert st_.pn_ratio is None

    def test_all_positive_ratio_undefined(self, pos):
        assert corpus.stats(dataset_of([pos, pos])).pn_ratio is None


class TestDatasetInvariants:
    def test_domain_mismatch_rejected(self, pos):
        ex = Example(1, "t", pos, Provenance.FULL, "B")
        with pytest.raises(ValidationError, match="domain"):
            Dataset("d", DatasetKind.FLD, "A", (ex,))

    def test_provenance_mismatch_rejected(self, pos):
        ex = Example(1, "t", pos, Provenance.WEAK, "A")
        with pytest.raises(ValidationError, match="provenance"):
            Dataset("d", DatasetKind.FLD, "A", (ex,))

    def test_review_needs_some_label(self):
        with pytest.raises(ValidationError, match="rating or a gold label"):
            RawReview(1, "t")

    @pytest.mark.parametrize("rating", [0, 6])
    def test_review_rating_range(self, rating):
        with pytest.raises(ValidationError, match="outside"):
            RawReview(1, "t", rating=rating)


class TestCorpusFiles:
    def test_jsonl_three_rows(self, tmp_path):
        path = tmp_path / "raw.jsonl"
        rows = [
            {"id": 1, "text": "Loved it", "rating": 5, "domain": "A"},
            {"id": 2, "text": "meh", "rating": 3},
            {"id": 3, "text": "bad", "label": "negative"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        reviews = corpus.load_corpus(path, "jsonl")
        assert [rv.id for rv in reviews] == [1, 2, 3]
        assert reviews[0].rating == 5
        assert reviews[2].gold_polarity is Sentiment.NEGATIVE

    def test_jsonl_bad_rating_names_line(self, tmp_path):
        path = tmp_path / "raw.jsonl"
        path.write_text('{"id": 1, "text": "x", "rating": 5}\n{"id": 2, "text": "y", "rating": 6}\n')
        with pytest.raises(FormatError, match=r"raw\.jsonl:2"):
            corpus.load_corpus(path, "jsonl")

    def test_jsonl_duplicate_id(self, tmp_path):
        path = tmp_path / "raw.jsonl"
        path.write_text('{"id": 7, "text": "x", "rating": 5}\n{"id": 7, "text": "y", "rating": 1}\n')
        with pytest.raises(FormatError, match="duplicate review id 7"):
            corpus.load_corpus(path, "jsonl")

    def test_jsonl_malformed_names_line(self, tmp_path):
        path = tmp_path / "raw.jsonl"
        path.write_text('{"id": 1, "text": "x", "rating": 5}\nnot json\n')
        with pytest.raises(FormatError, match=":2"):
            corpus.load_corpus(path, "jsonl")

    def test_csv_round(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text(
            'id,text,rating,label,domain\n'
            '1,"Great, truly ""great""",5,,A\n'
            "2,awful,,negative,A\n"
        )
        reviews = corpus.load_corpus(path, "csv")
        assert reviews[0].text == 'Great, truly "great"'
        assert reviews[0].rating == 5 and reviews[0].gold_polarity is None
        assert reviews[1].rating is None and reviews[1].gold_polarity is Sentiment.NEGATIVE

    def test_csv_header_checked(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("id,text\n1,hello\n")
        with pytest.raises(FormatError, match="header"):
            corpus.load_corpus(path, "csv")

    def test_manifest_round_trip(self, tmp_path, pos, neg):
        ds = dataset_of([pos, neg, neg], name="round")
        train, test = corpus.split(ds, 0.5, seed=11)
        for part in (train, test):
            path = tmp_path / f"{part.split.value}.jsonl"
            corpus.save_manifest(part, path, seed=11, train_fraction=0.5)
            assert corpus.load_manifest(path) == part

    def test_manifest_header_contents(self, tmp_path, pos):
        ds = dataset_of([pos] * 4, name="hdr")
        corpus.save_manifest(ds, tmp_path / "hdr.jsonl", seed=5, train_fraction=0.85)
        header = json.loads((tmp_path / "hdr.header.json").read_text())
        assert header["name"] == "hdr"
        assert header["kind"] == "fld"
        assert header["seed"] == 5
        assert header["train_fraction"] == 0.85
        assert header["stats"]["count"] == 4

    def test_manifest_missing_header(self, tmp_path, pos):
        ds = dataset_of([pos], name="x")
        corpus.save_manifest(ds, tmp_path / "x.jsonl")
        (tmp_path / "x.header.json").unlink()
        with pytest.raises(FormatError, match="header"):
            corpus.load_manifest(tmp_path / "x.jsonl")
