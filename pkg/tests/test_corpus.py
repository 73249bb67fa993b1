import json

import pytest
from hypothesis import given, strategies as st

from gramscore.corpus import (
    ColumnMapping,
    CorpusFormatError,
    RowParseError,
    ScoreScale,
    denormalize_prediction,
    load_corpus,
    load_folds,
    load_scales,
    make_folds,
    normalize_score,
    tokenize,
    validate_folds,
)

MAPPING = ColumnMapping(grammar_score="grammar_score")


def test_load_fixture_corpus(fixtures_dir):
    essays = load_corpus(fixtures_dir / "tiny_corpus.tsv", MAPPING)
    assert len(essays) == 15
    first = essays[0]
    assert first.essay_id == "e01"
    assert first.prompt_id == 1
    assert first.raw_score == 4
    assert first.grammar_score == 2
    assert first.text.startswith("There is a book")
    assert first.word_count == len(first.tokens) > 0


def test_row_count_preserved_at_dataset_scale(tmp_path):
    # one Essay per row, checked at the size of a full prompt's file
    path = tmp_path / "big.tsv"
    rows = ["essay_id\tessay_set\tessay\tdomain1_score"]
    rows += [f"{i}\t1\tplain essay text number {i}\t{2 + i % 11}" for i in range(1, 1784)]
    path.write_text("\n".join(rows) + "\n")
    assert len(load_corpus(path)) == 1783


def test_text_preserved_verbatim(tmp_path):
    text = "Spaces  stay;  punctuation, too!"
    path = tmp_path / "c.tsv"
    path.write_text(f"essay_id\tessay_set\tessay\tdomain1_score\n9\t1\t{text}\t3\n")
    (essay,) = load_corpus(path)
    assert essay.text == text


def test_missing_column_named(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("essay_id\tessay\tdomain1_score\n1\thi there\t3\n")
    with pytest.raises(CorpusFormatError, match="essay_set"):
        load_corpus(path)


def test_empty_text_is_row_error(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("essay_id\tessay_set\tessay\tdomain1_score\n1\t1\t\t3\n")
    with pytest.raises(RowParseError, match="empty essay text, row 1"):
        load_corpus(path)


def test_non_integer_score_reports_row(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text(
        "essay_id\tessay_set\tessay\tdomain1_score\n"
        "1\t1\tfine essay text\t3\n"
        "2\t1\tanother essay\tabc\n"
    )
    with pytest.raises(RowParseError, match="row 2"):
        load_corpus(path)


class TestTokenize:
    def test_strips_edge_punctuation(self):
        assert tokenize("Hello, world!") == ("Hello", "world")

    def test_keeps_internal_apostrophe(self):
        assert tokenize("don't stop") == ("don't", "stop")

    def test_pure_punctuation_vanishes(self):
        assert tokenize("wait -- what ?!") == ("wait", "what")

    def test_deterministic(self):
        text = "One two, three. Four!"
        assert tokenize(text) == tokenize(text)


class TestScoreScale:
    SCALE = ScoreScale(prompt_id=1, min_score=2, max_score=12)

    def test_normalize_endpoints(self):
        assert normalize_score(2, self.SCALE) == -1.0
        assert normalize_score(12, self.SCALE) == 1.0

    def test_normalize_interior(self):
        # 2*(8-2)/10 - 1
        assert normalize_score(8, self.SCALE) == pytest.approx(0.2, abs=1e-12)

    def test_normalize_out_of_range(self):
        with pytest.raises(ValueError):
            normalize_score(13, self.SCALE)

    def test_denormalize_inverse(self):
        assert denormalize_prediction(0.2, self.SCALE) == 8

    def test_denormalize_clamps(self):
        assert denormalize_prediction(1.7, self.SCALE) == 12
        assert denormalize_prediction(-3.0, self.SCALE) == 2

    def test_denormalize_endpoint(self):
        assert denormalize_prediction(-1.0, self.SCALE) == 2

    def test_rounds_half_away_from_zero(self):
        # y=-0.5 on 0..2 maps to x=0.5; banker's rounding would give 0
        assert denormalize_prediction(-0.5, ScoreScale(1, 0, 2)) == 1

    def test_degenerate_scale_rejected(self):
        with pytest.raises(CorpusFormatError):
            ScoreScale(1, 5, 5)

    @given(
        bounds=st.tuples(st.integers(-20, 20), st.integers(-20, 20)).filter(
            lambda t: t[0] < t[1]
        ),
        data=st.data(),
    )
    def test_round_trip_every_integer(self, bounds, data):
        scale = ScoreScale(1, bounds[0], bounds[1])
        s = data.draw(st.integers(bounds[0], bounds[1]))
        assert denormalize_prediction(normalize_score(s, scale), scale) == s


class TestFolds:
    IDS = [f"e{i:03d}" for i in range(100)]

    def test_partition_and_proportions(self):
        folds = make_folds(self.IDS, seed=7)
        validate_folds(folds, set(self.IDS))
        assert len(folds) == 5
        for fold in folds:
            assert len(fold.train) == 60
            assert len(fold.dev) == 20
            assert len(fold.test) == 20

    def test_deterministic(self):
        assert make_folds(self.IDS, seed=3) == make_folds(self.IDS, seed=3)
        assert make_folds(self.IDS, seed=3) != make_folds(self.IDS, seed=4)

    def test_load_and_validate(self, tmp_path):
        folds = make_folds(self.IDS, seed=1)
        doc = {
            "folds": [
                {"train": sorted(f.train), "dev": sorted(f.dev), "test": sorted(f.test)}
                for f in folds
            ]
        }
        path = tmp_path / "folds.json"
        path.write_text(json.dumps(doc))
        loaded = load_folds(path)
        validate_folds(loaded, set(self.IDS))
        assert [f.fold_index for f in loaded] == [0, 1, 2, 3, 4]

    def test_overlap_rejected(self, tmp_path):
        path = tmp_path / "folds.json"
        path.write_text(
            json.dumps({"folds": [{"train": ["a", "b"], "dev": ["b"], "test": ["c"]}]})
        )
        with pytest.raises(CorpusFormatError, match="overlap"):
            load_folds(path)

    def test_incomplete_partition_rejected(self):
        folds = make_folds(self.IDS, seed=1)
        with pytest.raises(CorpusFormatError, match="partition"):
            validate_folds(folds, set(self.IDS) | {"extra"})


def test_load_scales(tmp_path):
    path = tmp_path / "scales.json"
    path.write_text(json.dumps({"1": {"min": 2, "max": 12}, "7": {"min": 0, "max": 30}}))
    scales = load_scales(path)
    assert scales[1] == ScoreScale(1, 2, 12)
    assert scales[7].max_score == 30
