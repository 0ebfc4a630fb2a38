"""Region representations: positional features + precomputed visual features.

The visual block comes from a feature table on disk:

  manifest (JSON): {"dim": int, "count": int, "dtype": "f32le",
                    "layout": "row-major", "data_file": str,
                    "index": [{"image_id": str, "region_id": str, "row": int}, ...]}
  data file: raw little-endian 32-bit floats, row-major, count*dim values.

A full region vector is [visual || positional], positional block last, so
ablation masks are contiguous slices.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, ImageRecord, RegionRecord
from .validation import check_fitted, check_matrix

POSITIONAL_DIM = 7
POSITIONAL_FIELDS = (
    "x1_rel",
    "y1_rel",
    "x2_rel",
    "y2_rel",
    "area_rel",
    "dist_center",
    "orientation",
)

MASKS = ("full", "visual", "positional")


class FeatureTableError(ValueError):
    """Feature manifest/data files are inconsistent."""


@dataclass(frozen=True)
class PositionalFeatures:
    """The 7 box-relative-to-image features.

    Two relative corners, relative area, distance of the box center to the
    image center (relative coordinates), and image aspect ratio.
    """

    x1_rel: float
    y1_rel: float
    x2_rel: float
    y2_rel: float
    area_rel: float
    dist_center: float
    orientation: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [getattr(self, f) for f in POSITIONAL_FIELDS], dtype=np.float64
        )


def positional_features(region: RegionRecord, image: ImageRecord) -> PositionalFeatures:
    """Compute the 7 positional features for a (clamped) box."""
    W, H = float(image.width), float(image.height)
    if W <= 0 or H <= 0:
        raise ValueError(f"zero-area image {image.image_id!r}")
    x, y, w, h = region.bbox
    x1, y1 = x / W, y / H
    x2, y2 = (x + w) / W, (y + h) / H
    cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
    return PositionalFeatures(
        x1_rel=x1,
        y1_rel=y1,
        x2_rel=x2,
        y2_rel=y2,
        area_rel=(w * h) / (W * H),
        dist_center=math.hypot(cx - 0.5, cy - 0.5),
        orientation=W / H,
    )


def positional_for_box(box, image: ImageRecord) -> PositionalFeatures:
    """Positional features for a raw (x, y, w, h) box (e.g. a proposal)."""
    x, y, w, h = box
    return positional_features(
        RegionRecord(image.image_id, "_box", float(x), float(y), float(w), float(h)),
        image,
    )


@dataclass
class FeatureTable:
    """In-memory visual feature rows keyed by (image_id, region_id)."""

    dim: int
    rows: np.ndarray  # (count, dim) float32
    index: dict[tuple[str, str], int]

    def has(self, image_id: str, region_id: str) -> bool:
        return (image_id, region_id) in self.index

    def row(self, image_id: str, region_id: str) -> np.ndarray | None:
        i = self.index.get((image_id, region_id))
        return None if i is None else self.rows[i]

    @property
    def count(self) -> int:
        return self.rows.shape[0]


def load_feature_table(manifest_path) -> FeatureTable:
    """Load a feature table, validating sizes and index injectivity."""
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("dim", "count", "dtype", "layout", "data_file", "index"):
        if key not in manifest:
            raise FeatureTableError(f"{manifest_path}: manifest missing field {key!r}")
    dim, count = int(manifest["dim"]), int(manifest["count"])
    if dim < 1:
        raise FeatureTableError(f"{manifest_path}: dim mismatch (dim={dim})")
    if count < 0:
        raise FeatureTableError(f"{manifest_path}: bad count {count}")
    if manifest["dtype"] != "f32le":
        raise FeatureTableError(f"{manifest_path}: unsupported dtype {manifest['dtype']!r}")
    if manifest["layout"] != "row-major":
        raise FeatureTableError(f"{manifest_path}: unsupported layout {manifest['layout']!r}")

    data_path = os.path.join(os.path.dirname(os.path.abspath(manifest_path)), manifest["data_file"])
    if not os.path.exists(data_path):
        raise FileNotFoundError(f"feature data file not found: {data_path}")
    expected = count * dim * 4
    actual = os.path.getsize(data_path)
    if actual < expected:
        raise FeatureTableError(
            f"{data_path}: truncated data ({actual} bytes, expected {expected})"
        )
    if actual > expected:
        raise FeatureTableError(
            f"{data_path}: data file larger than count*dim ({actual} bytes, expected {expected})"
        )
    rows = np.fromfile(data_path, dtype="<f4").reshape(count, dim)

    index: dict[tuple[str, str], int] = {}
    for entry in manifest["index"]:
        key = (str(entry["image_id"]), str(entry["region_id"]))
        row = int(entry["row"])
        if key in index:
            raise FeatureTableError(f"{manifest_path}: duplicate index key {key!r}")
        if not (0 <= row < count):
            raise FeatureTableError(f"{manifest_path}: row {row} out of range for key {key!r}")
        index[key] = row
    return FeatureTable(dim=dim, rows=rows, index=index)


def write_feature_table(table: FeatureTable, manifest_path, data_filename=None) -> None:
    """Write manifest + raw f32 data. Round-trips bit-exactly."""
    manifest_path = os.path.abspath(manifest_path)
    if data_filename is None:
        base = os.path.basename(manifest_path)
        data_filename = os.path.splitext(base)[0] + ".f32"
    os.makedirs(os.path.dirname(manifest_path), exist_ok=True)
    data_path = os.path.join(os.path.dirname(manifest_path), data_filename)

    entries = sorted(
        ({"image_id": k[0], "region_id": k[1], "row": v} for k, v in table.index.items()),
        key=lambda e: e["row"],
    )
    manifest = {
        "dim": int(table.dim),
        "count": int(table.rows.shape[0]),
        "dtype": "f32le",
        "layout": "row-major",
        "data_file": data_filename,
        "index": entries,
    }
    rows = np.ascontiguousarray(table.rows, dtype="<f4")
    rows.tofile(data_path)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def assemble(visual: np.ndarray, pos: PositionalFeatures) -> np.ndarray:
    """Concatenate [visual || positional] into one float64 vector."""
    visual = np.asarray(visual, dtype=np.float64)
    if visual.ndim != 1:
        raise ValueError(f"visual row must be 1-d, got shape {visual.shape}")
    return np.concatenate([visual, pos.as_array()])


def mask_slice(mask: str, dim_visual: int) -> slice:
    """Contiguous slice of the full vector selected by a feature mask."""
    if mask == "full":
        return slice(0, dim_visual + POSITIONAL_DIM)
    if mask == "visual":
        return slice(0, dim_visual)
    if mask == "positional":
        return slice(dim_visual, dim_visual + POSITIONAL_DIM)
    raise ValueError(f"unknown feature mask {mask!r}, expected one of {MASKS}")


def mask_dim(mask: str, dim_visual: int) -> int:
    s = mask_slice(mask, dim_visual)
    return s.stop - s.start


class FeatureIndex:
    """Assembled full-dimension vectors for corpus regions, with a cache.

    Returns None for regions without a visual row; callers decide whether
    that is a skip or an error.
    """

    def __init__(self, corpus: Corpus, table: FeatureTable, cache: bool = True):
        self.corpus = corpus
        self.table = table
        self.dim_visual = table.dim
        self.dim = table.dim + POSITIONAL_DIM
        self._cache: dict[tuple[str, str], np.ndarray] | None = {} if cache else None

    def get(self, image_id: str, region_id: str) -> np.ndarray | None:
        key = (image_id, region_id)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        visual = self.table.row(image_id, region_id)
        if visual is None:
            return None
        region = self.corpus.regions.get(key)
        if region is None:
            return None
        vec = assemble(visual, positional_features(region, self.corpus.images[image_id]))
        if self._cache is not None:
            self._cache[key] = vec
        return vec

    def for_box(self, image_id: str, box, visual: np.ndarray) -> np.ndarray:
        """Assembled vector for an arbitrary box (proposal evaluation)."""
        image = self.corpus.images[image_id]
        return assemble(visual, positional_for_box(box, image))


class Standardizer:
    """Per-dimension zero-mean/unit-variance transform (fit on train only).

    Estimator-style: ``fit`` learns ``mean_``/``scale_``; ``transform``
    applies them. Constant dimensions get scale 1 to stay finite.
    """

    def __init__(self, eps: float = 1e-8):
        self.eps = eps
        self.mean_ = None
        self.scale_ = None

    def fit(self, X):
        X = check_matrix(X)
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale < self.eps] = 1.0
        self.scale_ = scale
        return self

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "mean_")
        X = check_matrix(X)
        return (X - self.mean_) / self.scale_

    def fit_transform(self, X) -> np.ndarray:
        return self.fit(X).transform(X)

    def get_params(self, deep: bool = True) -> dict:
        return {"eps": self.eps}

    def set_params(self, **params):
        for k, v in params.items():
            if k not in self.get_params():
                raise ValueError(f"invalid parameter {k!r} for Standardizer")
            setattr(self, k, v)
        return self
