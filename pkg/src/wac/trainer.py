"""Per-word classifier training: instance assembly, sampling, persistence.

One binary classifier per vocabulary word. Positives pair each occurrence
of the word in a train expression with its region's feature vector;
negatives are drawn uniformly (with replacement) from train regions whose
expressions never contain the word, at a fixed ratio per positive, so
classifiers carry no word-frequency effect.

Model files: a JSON manifest plus a raw little-endian float64 weights file
(offsets in float64 units, concatenated in manifest word order).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import Corpus, image_split_map, is_relational
from .estimator import L1LogisticRegression
from .features import FeatureIndex, FeatureTable, Standardizer, mask_dim, mask_slice
from .vocab import Vocabulary

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    neg_per_pos: int = 5
    min_count: int = 40
    l1: float = 1e-4
    max_epochs: int = 500
    tol: float = 1e-8
    seed: int = 0
    feature_mask: str = "full"
    filter_relational: bool = True
    exclude_same_image: bool = False
    standardize: bool = False

    def __post_init__(self):
        if self.neg_per_pos < 1:
            raise ValueError(f"neg_per_pos must be >= 1, got {self.neg_per_pos}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")


@dataclass
class WordClassifier:
    """Trained weight vector + bias for one word."""

    word: str
    weights: np.ndarray  # float64, length set by the feature mask
    bias: float
    n_pos: int
    n_neg: int

    def __eq__(self, other):
        if not isinstance(other, WordClassifier):
            return NotImplemented
        return (
            self.word == other.word
            and np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
            and self.n_pos == other.n_pos
            and self.n_neg == other.n_neg
        )


@dataclass
class ModelSet:
    """All word classifiers of one training run, plus its configuration."""

    classifiers: dict[str, WordClassifier]
    dim_visual: int
    mask: str
    config: TrainingConfig
    vocabulary: list[str] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def weight_dim(self) -> int:
        return mask_dim(self.mask, self.dim_visual)

    @property
    def full_dim(self) -> int:
        return self.dim_visual + 7

    def mask_slice(self) -> slice:
        return mask_slice(self.mask, self.dim_visual)

    def __contains__(self, word: str) -> bool:
        return word in self.classifiers

    def __eq__(self, other):
        if not isinstance(other, ModelSet):
            return NotImplemented
        return (
            self.classifiers == other.classifiers
            and self.dim_visual == other.dim_visual
            and self.mask == other.mask
            and self.config == other.config
            and self.vocabulary == other.vocabulary
            and self.failures == other.failures
        )

    def restricted_to(self, words) -> "ModelSet":
        """A view keeping only the given words (used by top-k ablation)."""
        keep = set(words)
        return ModelSet(
            classifiers={w: c for w, c in self.classifiers.items() if w in keep},
            dim_visual=self.dim_visual,
            mask=self.mask,
            config=self.config,
            vocabulary=[w for w in self.vocabulary if w in keep],
            failures=dict(self.failures),
        )


def word_seed(master_seed: int, word: str) -> int:
    """Stable per-word RNG seed, independent of scheduling order."""
    digest = hashlib.sha256(f"{master_seed}:{word}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def train_split_regions(corpus: Corpus, features: FeatureIndex) -> list[tuple[str, str]]:
    """(image_id, region_id) keys of train-split regions with a feature row, sorted."""
    split_of = image_split_map(corpus)
    keys = [
        key
        for key in corpus.regions
        if split_of.get(key[0]) == "train" and features.table.has(*key)
    ]
    keys.sort()
    return keys


def words_by_region(corpus: Corpus, filter_relational: bool) -> dict[tuple[str, str], set[str]]:
    """Word sets of each train region's surviving expressions."""
    out: dict[tuple[str, str], set[str]] = {}
    for expr in corpus.exprs:
        if expr.split != "train":
            continue
        if filter_relational and is_relational(expr):
            continue
        out.setdefault((expr.image_id, expr.region_id), set()).update(expr.tokens)
    return out


def assemble_positives(
    word: str,
    corpus: Corpus,
    features: FeatureIndex,
    filter_relational: bool = True,
) -> tuple[list[np.ndarray], int]:
    """One full-dim vector per occurrence of the word in train expressions.

    Returns (vectors, skipped) where skipped counts occurrences whose region
    has no feature row.
    """
    vectors: list[np.ndarray] = []
    skipped = 0
    for expr in corpus.exprs:
        if expr.split != "train":
            continue
        if filter_relational and is_relational(expr):
            continue
        occurrences = sum(1 for t in expr.tokens if t == word)
        if occurrences == 0:
            continue
        vec = features.get(expr.image_id, expr.region_id)
        if vec is None:
            skipped += occurrences
            continue
        vectors.extend([vec] * occurrences)
    return vectors, skipped


def eligible_negative_regions(
    word: str,
    corpus: Corpus,
    features: FeatureIndex,
    filter_relational: bool = True,
    exclude_same_image: bool = False,
    _train_regions=None,
    _region_words=None,
) -> list[tuple[str, str]]:
    """Train regions whose expressions (if any) never contain the word."""
    train_regions = (
        train_split_regions(corpus, features) if _train_regions is None else _train_regions
    )
    region_words = (
        words_by_region(corpus, filter_relational) if _region_words is None else _region_words
    )
    excluded_images = set()
    if exclude_same_image:
        excluded_images = {
            key[0] for key, words in region_words.items() if word in words
        }
    return [
        key
        for key in train_regions
        if word not in region_words.get(key, ())
        and key[0] not in excluded_images
    ]


def sample_negatives(
    word: str,
    corpus: Corpus,
    features: FeatureIndex,
    n_pos: int,
    config: TrainingConfig,
    rng: np.random.Generator,
    _eligible=None,
) -> list[np.ndarray]:
    """neg_per_pos * n_pos uniform draws (with replacement) from the eligible set."""
    eligible = (
        eligible_negative_regions(
            word,
            corpus,
            features,
            config.filter_relational,
            config.exclude_same_image,
        )
        if _eligible is None
        else _eligible
    )
    if not eligible:
        raise TrainingError(f"no eligible negative regions for word {word!r}")
    n_needed = config.neg_per_pos * n_pos
    draws = rng.integers(0, len(eligible), size=n_needed)
    return [features.get(*eligible[i]) for i in draws]


def train_word(
    word: str,
    positives,
    negatives,
    config: TrainingConfig,
    dim_visual: int,
    standardizer: Standardizer | None = None,
) -> WordClassifier:
    """Fit one classifier on already-masked or full-dim instance vectors.

    Full-dim inputs are sliced by the config's feature mask; an optional
    standardizer (fit on train rows) is applied and then folded back into
    (weights, bias), so the stored classifier scores raw features.
    """
    if len(positives) < 1 or len(negatives) < 1:
        raise TrainingError(f"word {word!r} needs at least 1 positive and 1 negative")
    sl = mask_slice(config.feature_mask, dim_visual)
    X = np.vstack([np.asarray(v, dtype=np.float64) for v in (*positives, *negatives)])
    if X.shape[1] == dim_visual + 7:
        X = X[:, sl]
    elif X.shape[1] != mask_dim(config.feature_mask, dim_visual):
        raise TrainingError(
            f"word {word!r}: instance dim {X.shape[1]} matches neither the full "
            f"dim {dim_visual + 7} nor the masked dim"
        )
    y = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])

    if standardizer is not None:
        X = standardizer.transform(X)

    est = L1LogisticRegression(l1=config.l1, max_epochs=config.max_epochs, tol=config.tol)
    try:
        est.fit(X, y)
    except FloatingPointError as err:
        raise TrainingError(f"word {word!r}: {err}") from err

    w, b = est.coef_, float(est.intercept_)
    if standardizer is not None:
        # fold (x - mu) / sigma into raw-space weights: w/sigma, b - w.mu/sigma
        w_scaled = w / standardizer.scale_
        b = b - float(w_scaled @ standardizer.mean_)
        w = w_scaled
    if not np.all(np.isfinite(w)) or not np.isfinite(b):
        raise TrainingError(f"word {word!r}: non-finite parameters after training")
    return WordClassifier(word, w, b, n_pos=len(positives), n_neg=len(negatives))


def train_all(
    corpus: Corpus,
    vocabulary: Vocabulary,
    features: FeatureIndex,
    config: TrainingConfig,
    jobs: int = 1,
) -> ModelSet:
    """Train one classifier per selected word.

    Per-word RNG seeds derive from (config.seed, word), so serial and
    parallel schedules produce bit-identical results. Per-word failures are
    collected; the run continues.
    """
    if not vocabulary.selected:
        raise TrainingError("vocabulary is empty; nothing to train")
    words = sorted(vocabulary.selected)
    dim_visual = features.dim_visual

    train_regions = train_split_regions(corpus, features)
    region_words = words_by_region(corpus, config.filter_relational)

    standardizer = None
    if config.standardize:
        if not train_regions:
            raise TrainingError("standardization requested but no train regions have features")
        rows = np.vstack([features.get(*key) for key in train_regions])
        standardizer = Standardizer().fit(rows[:, mask_slice(config.feature_mask, dim_visual)])

    def run_one(word: str):
        positives, skipped = assemble_positives(
            word, corpus, features, config.filter_relational
        )
        if skipped:
            log.debug("word %r: skipped %d positives without feature rows", word, skipped)
        if not positives:
            raise TrainingError(f"word {word!r} has no positive instances")
        eligible = eligible_negative_regions(
            word,
            corpus,
            features,
            config.filter_relational,
            config.exclude_same_image,
            _train_regions=train_regions,
            _region_words=region_words,
        )
        rng = np.random.default_rng(word_seed(config.seed, word))
        negatives = sample_negatives(
            word, corpus, features, len(positives), config, rng, _eligible=eligible
        )
        return train_word(word, positives, negatives, config, dim_visual, standardizer)

    classifiers: dict[str, WordClassifier] = {}
    failures: dict[str, str] = {}

    def collect(word, outcome):
        kind, value = outcome
        if kind == "ok":
            classifiers[word] = value
        else:
            failures[word] = value

    def safe_run(word):
        try:
            return ("ok", run_one(word))
        except TrainingError as err:
            return ("err", str(err))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for word, outcome in zip(words, pool.map(safe_run, words)):
                collect(word, outcome)
    else:
        for word in words:
            collect(word, safe_run(word))

    if failures:
        log.warning("training failed for %d word(s): %s", len(failures), sorted(failures))
    log.info("trained %d/%d word classifiers", len(classifiers), len(words))
    return ModelSet(
        classifiers=classifiers,
        dim_visual=dim_visual,
        mask=config.feature_mask,
        config=config,
        vocabulary=words,
        failures=failures,
    )


def save_model(model: ModelSet, manifest_path) -> None:
    """Write the JSON manifest + raw f64 weights file. Deterministic bytes."""
    manifest_path = os.path.abspath(manifest_path)
    os.makedirs(os.path.dirname(manifest_path), exist_ok=True)
    base = os.path.splitext(os.path.basename(manifest_path))[0]
    weights_filename = base + ".weights.f64"

    words_meta = []
    blocks = []
    offset = 0
    dim = model.weight_dim
    for word in sorted(model.classifiers):
        clf = model.classifiers[word]
        if clf.weights.shape != (dim,):
            raise TrainingError(
                f"word {word!r} has weight length {clf.weights.shape[0]}, expected {dim}"
            )
        words_meta.append(
            {
                "word": word,
                "n_pos": clf.n_pos,
                "n_neg": clf.n_neg,
                "offset": offset,
                "bias": clf.bias,
            }
        )
        blocks.append(np.asarray(clf.weights, dtype="<f8"))
        offset += dim

    manifest = {
        "version": MODEL_FORMAT_VERSION,
        "dim": dim,
        "dim_visual": model.dim_visual,
        "mask": model.mask,
        "weights_file": weights_filename,
        "words": words_meta,
        "vocabulary": list(model.vocabulary),
        "failures": dict(sorted(model.failures.items())),
        "config": asdict(model.config),
    }
    data = np.concatenate(blocks) if blocks else np.zeros(0, dtype="<f8")
    data.tofile(os.path.join(os.path.dirname(manifest_path), weights_filename))
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(manifest_path, feature_table: FeatureTable | None = None) -> ModelSet:
    """Load a model set; optionally validate against a feature table's dim."""
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    version = manifest.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise TrainingError(
            f"{manifest_path}: model format version {version}, expected {MODEL_FORMAT_VERSION}"
        )
    dim = int(manifest["dim"])
    dim_visual = int(manifest["dim_visual"])
    mask = manifest["mask"]
    if dim != mask_dim(mask, dim_visual):
        raise TrainingError(f"{manifest_path}: dim {dim} inconsistent with mask {mask!r}")
    if feature_table is not None and feature_table.dim != dim_visual:
        raise TrainingError(
            f"{manifest_path}: model expects dim_visual {dim_visual}, "
            f"feature table has {feature_table.dim}"
        )

    weights_path = os.path.join(
        os.path.dirname(os.path.abspath(manifest_path)), manifest["weights_file"]
    )
    data = np.fromfile(weights_path, dtype="<f8")
    classifiers: dict[str, WordClassifier] = {}
    for entry in manifest["words"]:
        offset = int(entry["offset"])
        if offset + dim > data.shape[0]:
            raise TrainingError(
                f"{manifest_path}: weight block for {entry['word']!r} missing "
                f"(offset {offset}, dim {dim}, file has {data.shape[0]} values)"
            )
        word = entry["word"]
        classifiers[word] = WordClassifier(
            word=word,
            weights=data[offset : offset + dim].astype(np.float64),
            bias=float(entry["bias"]),
            n_pos=int(entry["n_pos"]),
            n_neg=int(entry["n_neg"]),
        )
    config = TrainingConfig(**manifest["config"])
    return ModelSet(
        classifiers=classifiers,
        dim_visual=dim_visual,
        mask=mask,
        config=config,
        vocabulary=list(manifest.get("vocabulary", sorted(classifiers))),
        failures=dict(manifest.get("failures", {})),
    )
