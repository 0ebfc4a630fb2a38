import json

import numpy as np
import pytest

from wac.corpus import (
    Corpus,
    CorpusFormatError,
    RefExpr,
    is_relational,
    load_corpus,
    save_corpus,
    split_corpus,
    tokenize,
)


class TestTokenize:
    def test_punctuation_becomes_space(self):
        assert tokenize("Brown shirt, guy!") == ["brown", "shirt", "guy"]

    def test_internal_apostrophe_preserved(self):
        assert tokenize("woman's lap") == ["woman's", "lap"]

    def test_digits_kept_and_lowercased(self):
        assert tokenize("2nd FROM left") == ["2nd", "from", "left"]

    def test_internal_hyphen_preserved_dangling_stripped(self):
        assert tokenize("t-shirt -- on the left-") == ["t-shirt", "on", "the", "left"]

    def test_empty_output_allowed(self):
        assert tokenize("!!! ???") == []

    def test_idempotent_on_own_output(self):
        rng = np.random.default_rng(0)
        alphabet = list("abc'- XY2!,.é")
        for _ in range(200):
            raw = "".join(rng.choice(alphabet, size=rng.integers(0, 30)))
            once = tokenize(raw)
            again = tokenize(" ".join(once))
            assert once == again


class TestIsRelational:
    def test_bigram_next_to(self):
        assert is_relational(tokenize("the thing next to the woman with the blue shirt"))

    def test_right_alone_is_not_relational(self):
        assert not is_relational(tokenize("brown shirt guy on right"))

    def test_single_token_not(self):
        # membership check against the single-token entries
        assert is_relational(tokenize("not the red one"))

    def test_bigrams_do_not_match_substrings(self):
        assert not is_relational(tokenize("leftover pizza on the table"))
        assert is_relational(tokenize("pizza left of the table"))

    def test_invariant_under_retokenization(self):
        samples = [
            "the dog BEHIND the fence!",
            "guy, on the right",
            "box ontop of shelf",
            "red ball",
        ]
        for raw in samples:
            tokens = tokenize(raw)
            assert is_relational(tokens) == is_relational(tokenize(" ".join(tokens)))

    def test_accepts_refexpr(self):
        expr = RefExpr("i", "r", "under the tree", tuple(tokenize("under the tree")), "train")
        assert is_relational(expr)


class TestLoadCorpus:
    def test_valid_fixture_counts(self, corpus_files):
        paths = corpus_files()
        corpus = load_corpus(paths["images"], paths["regions"], paths["exprs"])
        assert corpus.counts() == (2, 3, 4)
        assert corpus.stats.total_dropped() == 0

    def test_unknown_region_dropped_and_counted(self, corpus_files):
        paths = corpus_files(
            exprs=[
                {"image_id": "img1", "region_id": "r1", "text": "a ball"},
                {"image_id": "img1", "region_id": "nope", "text": "ghost"},
            ]
        )
        corpus = load_corpus(paths["images"], paths["regions"], paths["exprs"])
        assert len(corpus.exprs) == 1
        assert corpus.stats.dropped_exprs_unknown_region == 1

    def test_out_of_bounds_box_clamped_with_warning(self, corpus_files):
        paths = corpus_files(
            regions=[
                {"image_id": "img1", "region_id": "r1", "x": 80, "y": 10, "w": 25, "h": 20},
            ]
        )
        corpus = load_corpus(paths["images"], paths["regions"], paths["exprs"])
        assert corpus.stats.clamped_boxes == 1
        region = corpus.regions[("img1", "r1")]
        assert region.x + region.w == pytest.approx(100.0)

    def test_empty_tokenization_dropped(self, corpus_files):
        paths = corpus_files(
            exprs=[{"image_id": "img1", "region_id": "r1", "text": "???"}]
        )
        corpus = load_corpus(paths["images"], paths["regions"], paths["exprs"])
        assert corpus.exprs == []
        assert corpus.stats.dropped_exprs_empty == 1

    def test_missing_file_raises(self, corpus_files):
        paths = corpus_files()
        with pytest.raises(FileNotFoundError):
            load_corpus(paths["images"], paths["regions"], "/nonexistent/exprs.jsonl")

    def test_malformed_line_reports_line_number(self, corpus_files, tmp_path):
        paths = corpus_files()
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"image_id": "a", "width": 5, "height": 5}\nnot json\n')
        with pytest.raises(CorpusFormatError, match=r":2:"):
            load_corpus(str(bad), paths["regions"], paths["exprs"])

    def test_missing_field_reports_line_number(self, corpus_files, tmp_path):
        paths = corpus_files()
        bad = tmp_path / "bad_regions.jsonl"
        bad.write_text('{"image_id": "img1", "region_id": "r1", "x": 1, "y": 1, "w": 2}\n')
        with pytest.raises(CorpusFormatError, match=r":1: missing field 'h'"):
            load_corpus(paths["images"], str(bad), paths["exprs"])

    def test_duplicate_image_id_raises(self, corpus_files):
        paths = corpus_files(
            images=[
                {"image_id": "img1", "width": 10, "height": 10},
                {"image_id": "img1", "width": 20, "height": 20},
            ]
        )
        with pytest.raises(CorpusFormatError, match="duplicate image_id"):
            load_corpus(paths["images"], paths["regions"], paths["exprs"])

    def test_region_fully_outside_image_dropped(self, corpus_files):
        paths = corpus_files(
            regions=[
                {"image_id": "img1", "region_id": "r1", "x": 500, "y": 500, "w": 10, "h": 10},
            ]
        )
        corpus = load_corpus(paths["images"], paths["regions"], paths["exprs"])
        assert ("img1", "r1") not in corpus.regions
        assert corpus.stats.dropped_regions_degenerate == 1

    def test_proposals_loaded_in_order(self, corpus_files):
        paths = corpus_files(
            proposals=[
                {"image_id": "img1", "boxes": [[0, 0, 10, 10], [5, 5, 20, 20]]},
            ]
        )
        corpus = load_corpus(
            paths["images"], paths["regions"], paths["exprs"], paths["proposals"]
        )
        assert corpus.proposals["img1"].boxes[0] == (0.0, 0.0, 10.0, 10.0)
        assert len(corpus.proposals["img1"].boxes) == 2


class TestSplitCorpus:
    def _make(self, n_images, exprs_per_image=2):
        images = {f"i{j}": None for j in range(n_images)}
        from wac.corpus import ImageRecord, RegionRecord

        images = {k: ImageRecord(k, 100, 100) for k in images}
        regions = {
            (k, "r0"): RegionRecord(k, "r0", 0.0, 0.0, 50.0, 50.0) for k in images
        }
        exprs = [
            RefExpr(k, "r0", "a thing", ("a", "thing"), "train")
            for k in images
            for _ in range(exprs_per_image)
        ]
        return Corpus(images, regions, exprs)

    def test_ninety_ten_split_exact_and_deterministic(self):
        corpus = self._make(100)
        a = split_corpus(corpus, (0.9, 0.0, 0.1), seed=7)
        b = split_corpus(corpus, (0.9, 0.0, 0.1), seed=7)
        tags_a = {e.image_id: e.split for e in a.exprs}
        tags_b = {e.image_id: e.split for e in b.exprs}
        assert tags_a == tags_b
        assert sum(1 for v in tags_a.values() if v == "train") == 90
        assert sum(1 for v in tags_a.values() if v == "test") == 10

    def test_degenerate_ratio_all_train(self):
        corpus = self._make(13)
        out = split_corpus(corpus, (1, 0, 0), seed=0)
        assert all(e.split == "train" for e in out.exprs)

    def test_expressions_of_one_image_never_split_apart(self):
        corpus = self._make(60, exprs_per_image=3)
        out = split_corpus(corpus, (0.5, 0.2, 0.3), seed=3)
        by_image = {}
        for e in out.exprs:
            by_image.setdefault(e.image_id, set()).add(e.split)
        assert all(len(tags) == 1 for tags in by_image.values())

    def test_partition_of_images(self):
        corpus = self._make(60)
        out = split_corpus(corpus, (0.5, 0.2, 0.3), seed=9)
        assignment = out.split_of_image
        assert set(assignment) == set(corpus.images)
        counts = {s: 0 for s in ("train", "val", "test")}
        for s in assignment.values():
            counts[s] += 1
        assert counts == {"train": 30, "val": 12, "test": 18}

    def test_bad_ratios_raise(self):
        corpus = self._make(4)
        with pytest.raises(ValueError, match="sum to 1"):
            split_corpus(corpus, (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(ValueError, match="nonnegative"):
            split_corpus(corpus, (1.5, -0.5, 0.0), seed=0)


class TestRoundTrip:
    def test_load_save_load_identical(self, corpus_files, tmp_path):
        paths = corpus_files(
            proposals=[{"image_id": "img2", "boxes": [[1, 2, 30, 40]]}]
        )
        first = load_corpus(
            paths["images"], paths["regions"], paths["exprs"], paths["proposals"]
        )
        out_dir = tmp_path / "roundtrip"
        written = save_corpus(first, out_dir)
        second = load_corpus(
            written["images"], written["regions"], written["exprs"], written["proposals"]
        )
        assert first == second

    def test_save_skips_proposals_when_absent(self, corpus_files, tmp_path):
        paths = corpus_files()
        corpus = load_corpus(paths["images"], paths["regions"], paths["exprs"])
        written = save_corpus(corpus, tmp_path / "nop")
        assert "proposals" not in written
