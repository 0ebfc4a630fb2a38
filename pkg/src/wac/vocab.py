"""Word counting over training expressions and vocabulary selection."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Corpus, is_relational


def count_words(corpus: Corpus, filter_relational: bool = True) -> Counter:
    """Token occurrence counts over train-split expressions.

    A token occurring twice in one expression counts twice. With the filter
    on, expressions containing RELWORDS entries contribute nothing.
    """
    counts: Counter = Counter()
    for expr in corpus.exprs:
        if expr.split != "train":
            continue
        if filter_relational and is_relational(expr):
            continue
        counts.update(expr.tokens)
    return counts


def select_words(counts, min_count: int = 40) -> set[str]:
    """Tokens at or above the occurrence threshold (inclusive)."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    return {w for w, c in counts.items() if c >= min_count}


def merge_counts(counts_list) -> Counter:
    """Pointwise sum of count maps (for mixing corpora)."""
    counts_list = list(counts_list)
    if not counts_list:
        raise ValueError("merge_counts needs at least one counts map")
    merged: Counter = Counter()
    for c in counts_list:
        merged.update(c)
    return merged


@dataclass
class Vocabulary:
    counts: dict[str, int]
    min_count: int
    selected: set[str] = field(init=False)

    def __post_init__(self):
        self.selected = select_words(self.counts, self.min_count)

    @classmethod
    def from_corpus(cls, corpus: Corpus, min_count: int = 40, filter_relational: bool = True):
        return cls(dict(count_words(corpus, filter_relational)), min_count)

    @classmethod
    def merged(cls, vocabs, min_count: int | None = None):
        vocabs = list(vocabs)
        counts = merge_counts([v.counts for v in vocabs])
        if min_count is None:
            min_count = vocabs[0].min_count
        return cls(dict(counts), min_count)

    def __len__(self) -> int:
        return len(self.selected)

    def to_json(self) -> dict:
        return {
            "min_count": self.min_count,
            "counts": dict(sorted(self.counts.items())),
            "selected": sorted(self.selected),
        }

    @classmethod
    def from_json(cls, obj: dict):
        return cls(dict(obj["counts"]), int(obj["min_count"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))
