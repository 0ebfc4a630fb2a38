"""Corpora of images, regions, region proposals, and referring expressions.

File formats are JSON Lines (UTF-8, one object per line):

  images file:      {"image_id": str, "width": int, "height": int}
  regions file:     {"image_id": str, "region_id": str, "x": num, "y": num, "w": num, "h": num}
  expressions file: {"image_id": str, "region_id": str, "text": str, "split": "train"|"val"|"test"?}
  proposals file:   {"image_id": str, "boxes": [[x, y, w, h], ...]}  # proposer score order

A corpus is immutable after load; ``split_corpus`` returns a re-tagged copy.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

Box = tuple[float, float, float, float]


class CorpusFormatError(ValueError):
    """A corpus file does not conform to the documented line format."""


# Landmark/relational markers. Single words match whole tokens; two-word
# entries match consecutive token pairs (never raw substrings, so e.g.
# "leftover" does not trigger "left of").
RELWORDS = (
    "below",
    "above",
    "between",
    "not",
    "behind",
    "under",
    "underneath",
    "front of",
    "right of",
    "left of",
    "ontop of",
    "next to",
    "middle of",
)

_REL_SINGLE = frozenset(w for w in RELWORDS if " " not in w)
_REL_BIGRAMS = frozenset(tuple(w.split()) for w in RELWORDS if " " in w)

_KEPT_PUNCT = frozenset("'-")


def tokenize(raw: str) -> list[str]:
    """Lowercase and split into word tokens.

    Characters other than letters, digits, apostrophe and hyphen become
    spaces; apostrophes/hyphens survive only word-internally ("woman's"
    stays intact, a dangling "-" is dropped). May return an empty list;
    callers drop such records.
    """
    lowered = raw.lower()
    cleaned = "".join(
        c if (c.isalnum() or c in _KEPT_PUNCT) else " " for c in lowered
    )
    tokens = []
    for chunk in cleaned.split():
        tok = chunk.strip("'-")
        if tok:
            tokens.append(tok)
    return tokens


def is_relational(expr_or_tokens) -> bool:
    """True iff the expression contains a RELWORDS entry.

    Accepts a RefExpr or a token list.
    """
    tokens = expr_or_tokens.tokens if isinstance(expr_or_tokens, RefExpr) else list(expr_or_tokens)
    if any(t in _REL_SINGLE for t in tokens):
        return True
    return any((a, b) in _REL_BIGRAMS for a, b in zip(tokens, tokens[1:]))


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int


@dataclass(frozen=True)
class RegionRecord:
    image_id: str
    region_id: str
    x: float
    y: float
    w: float
    h: float

    @property
    def bbox(self) -> Box:
        return (self.x, self.y, self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class RefExpr:
    image_id: str
    region_id: str
    raw: str
    tokens: tuple[str, ...]
    split: str = "train"


@dataclass(frozen=True)
class ProposalSet:
    image_id: str
    boxes: tuple[Box, ...]


@dataclass
class LoadStats:
    """Warning counters from the last load (not part of corpus identity)."""

    clamped_boxes: int = 0
    dropped_regions_unknown_image: int = 0
    dropped_regions_degenerate: int = 0
    dropped_exprs_unknown_region: int = 0
    dropped_exprs_empty: int = 0
    dropped_proposals_unknown_image: int = 0

    def total_dropped(self) -> int:
        return (
            self.dropped_regions_unknown_image
            + self.dropped_regions_degenerate
            + self.dropped_exprs_unknown_region
            + self.dropped_exprs_empty
            + self.dropped_proposals_unknown_image
        )


@dataclass
class Corpus:
    images: dict[str, ImageRecord]
    regions: dict[tuple[str, str], RegionRecord]
    exprs: list[RefExpr]
    proposals: dict[str, ProposalSet] = field(default_factory=dict)
    stats: LoadStats = field(default_factory=LoadStats, compare=False, repr=False)

    def __post_init__(self):
        by_image: dict[str, list[str]] = {}
        for (image_id, region_id) in self.regions:
            by_image.setdefault(image_id, []).append(region_id)
        self._regions_by_image = by_image

    def region_ids_of(self, image_id: str) -> list[str]:
        """Region ids of one image, in regions-file order."""
        return list(self._regions_by_image.get(image_id, []))

    def exprs_in(self, split: str) -> list[RefExpr]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}, expected one of {SPLITS}")
        return [e for e in self.exprs if e.split == split]

    def counts(self) -> tuple[int, int, int]:
        return (len(self.images), len(self.regions), len(self.exprs))


def _clamp_box(x, y, w, h, image: ImageRecord):
    """Clamp a box to image bounds. Returns (box or None, clamped?)."""
    x, y, w, h = float(x), float(y), float(w), float(h)
    W, H = float(image.width), float(image.height)
    if x >= 0 and y >= 0 and x + w <= W and y + h <= H:
        if w <= 0 or h <= 0:
            return None, False
        return (x, y, w, h), False
    x0, y0 = max(0.0, x), max(0.0, y)
    x1, y1 = min(x + w, W), min(y + h, H)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None, True
    return (x0, y0, x1 - x0, y1 - y0), True


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({err.msg})") from err
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _require(obj, keys, path, lineno):
    for key in keys:
        if key not in obj:
            raise CorpusFormatError(f"{path}:{lineno}: missing field {key!r}")


def load_corpus(
    images_path,
    regions_path,
    exprs_path,
    proposals_path=None,
) -> Corpus:
    """Load and cross-validate a corpus.

    Out-of-bounds boxes are clamped (counted in ``corpus.stats``); records
    referencing unknown images/regions and expressions that tokenize to
    nothing are dropped and counted. Missing files and malformed lines
    raise, with the offending line number in the message.
    """
    for p in (images_path, regions_path, exprs_path):
        if not os.path.exists(p):
            raise FileNotFoundError(f"corpus file not found: {p}")
    if proposals_path is not None and not os.path.exists(proposals_path):
        raise FileNotFoundError(f"corpus file not found: {proposals_path}")

    stats = LoadStats()

    images: dict[str, ImageRecord] = {}
    for lineno, obj in _read_jsonl(images_path):
        _require(obj, ("image_id", "width", "height"), images_path, lineno)
        rec = ImageRecord(str(obj["image_id"]), int(obj["width"]), int(obj["height"]))
        if rec.width < 1 or rec.height < 1:
            raise CorpusFormatError(
                f"{images_path}:{lineno}: non-positive image size for {rec.image_id!r}"
            )
        if rec.image_id in images:
            raise CorpusFormatError(
                f"{images_path}:{lineno}: duplicate image_id {rec.image_id!r}"
            )
        images[rec.image_id] = rec

    regions: dict[tuple[str, str], RegionRecord] = {}
    for lineno, obj in _read_jsonl(regions_path):
        _require(obj, ("image_id", "region_id", "x", "y", "w", "h"), regions_path, lineno)
        image_id = str(obj["image_id"])
        region_id = str(obj["region_id"])
        image = images.get(image_id)
        if image is None:
            stats.dropped_regions_unknown_image += 1
            continue
        key = (image_id, region_id)
        if key in regions:
            raise CorpusFormatError(
                f"{regions_path}:{lineno}: duplicate region {key!r}"
            )
        box, clamped = _clamp_box(obj["x"], obj["y"], obj["w"], obj["h"], image)
        if clamped:
            stats.clamped_boxes += 1
        if box is None:
            stats.dropped_regions_degenerate += 1
            continue
        regions[key] = RegionRecord(image_id, region_id, *box)

    exprs: list[RefExpr] = []
    for lineno, obj in _read_jsonl(exprs_path):
        _require(obj, ("image_id", "region_id", "text"), exprs_path, lineno)
        image_id = str(obj["image_id"])
        region_id = str(obj["region_id"])
        if (image_id, region_id) not in regions:
            stats.dropped_exprs_unknown_region += 1
            continue
        raw = str(obj["text"])
        tokens = tuple(tokenize(raw))
        if not tokens:
            stats.dropped_exprs_empty += 1
            continue
        split = obj.get("split", "train")
        if split not in SPLITS:
            raise CorpusFormatError(f"{exprs_path}:{lineno}: unknown split {split!r}")
        exprs.append(RefExpr(image_id, region_id, raw, tokens, split))

    proposals: dict[str, ProposalSet] = {}
    if proposals_path is not None:
        for lineno, obj in _read_jsonl(proposals_path):
            _require(obj, ("image_id", "boxes"), proposals_path, lineno)
            image_id = str(obj["image_id"])
            image = images.get(image_id)
            if image is None:
                stats.dropped_proposals_unknown_image += 1
                continue
            if image_id in proposals:
                raise CorpusFormatError(
                    f"{proposals_path}:{lineno}: duplicate proposals for {image_id!r}"
                )
            boxes = []
            for raw_box in obj["boxes"]:
                if len(raw_box) != 4:
                    raise CorpusFormatError(
                        f"{proposals_path}:{lineno}: box must have 4 numbers"
                    )
                box, clamped = _clamp_box(*raw_box, image)
                if clamped:
                    stats.clamped_boxes += 1
                if box is not None:
                    boxes.append(box)
            proposals[image_id] = ProposalSet(image_id, tuple(boxes))

    if stats.total_dropped() or stats.clamped_boxes:
        log.warning(
            "corpus load: %d boxes clamped, %d records dropped (%s)",
            stats.clamped_boxes,
            stats.total_dropped(),
            stats,
        )
    return Corpus(images, regions, exprs, proposals, stats)


def save_corpus(corpus: Corpus, out_dir, *, basenames=None) -> dict[str, str]:
    """Serialize back to the JSONL formats. Returns the written paths."""
    names = {
        "images": "images.jsonl",
        "regions": "regions.jsonl",
        "exprs": "expressions.jsonl",
        "proposals": "proposals.jsonl",
    }
    if basenames:
        names.update(basenames)
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, v) for k, v in names.items()}

    def dump(obj) -> str:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    with open(paths["images"], "w", encoding="utf-8") as fh:
        for rec in corpus.images.values():
            fh.write(dump({"image_id": rec.image_id, "width": rec.width, "height": rec.height}) + "\n")
    with open(paths["regions"], "w", encoding="utf-8") as fh:
        for rec in corpus.regions.values():
            fh.write(
                dump(
                    {
                        "image_id": rec.image_id,
                        "region_id": rec.region_id,
                        "x": rec.x,
                        "y": rec.y,
                        "w": rec.w,
                        "h": rec.h,
                    }
                )
                + "\n"
            )
    with open(paths["exprs"], "w", encoding="utf-8") as fh:
        for e in corpus.exprs:
            fh.write(
                dump(
                    {
                        "image_id": e.image_id,
                        "region_id": e.region_id,
                        "text": e.raw,
                        "split": e.split,
                    }
                )
                + "\n"
            )
    if corpus.proposals:
        with open(paths["proposals"], "w", encoding="utf-8") as fh:
            for ps in corpus.proposals.values():
                fh.write(
                    dump({"image_id": ps.image_id, "boxes": [list(b) for b in ps.boxes]}) + "\n"
                )
    else:
        paths.pop("proposals")
    return paths


def split_corpus(corpus: Corpus, ratios, seed: int) -> Corpus:
    """Assign train/val/test splits by image (expressions inherit).

    Quotas are exact (largest-remainder rounding), the shuffle is a seeded
    permutation of sorted image ids, so the result is deterministic.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValueError("ratios must be (train, val, test)")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be nonnegative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")

    image_ids = sorted(corpus.images)
    n = len(image_ids)
    quotas = [int(np.floor(r * n)) for r in ratios]
    remainders = [r * n - q for r, q in zip(ratios, quotas)]
    leftover = n - sum(quotas)
    # hand leftovers to the largest fractional remainders, ties by split order
    for idx in sorted(range(3), key=lambda i: (-remainders[i], i))[:leftover]:
        quotas[idx] += 1

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignment: dict[str, str] = {}
    cursor = 0
    for split, quota in zip(SPLITS, quotas):
        for j in order[cursor : cursor + quota]:
            assignment[image_ids[j]] = split
        cursor += quota

    exprs = [replace(e, split=assignment[e.image_id]) for e in corpus.exprs]
    out = Corpus(corpus.images, corpus.regions, exprs, corpus.proposals, corpus.stats)
    out.split_of_image = assignment  # by-image view, used by split-aware consumers
    return out


def image_split_map(corpus: Corpus) -> dict[str, str]:
    """Split tag per image, derived from its expressions.

    Images without expressions fall back to an explicit assignment recorded
    by split_corpus, else 'train'.
    """
    explicit = getattr(corpus, "split_of_image", None)
    out: dict[str, str] = dict(explicit) if explicit else {}
    for e in corpus.exprs:
        out.setdefault(e.image_id, e.split)
    for image_id in corpus.images:
        out.setdefault(image_id, "train")
    return out
