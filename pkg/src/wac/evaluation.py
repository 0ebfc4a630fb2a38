"""Evaluation protocol: gold-region metrics, proposal metrics, ablations.

Gold evaluation presents every annotated region of an expression's image
as the candidate set and scores accuracy (rank-1 hit on the gold region),
mean reciprocal rank, average classifier coverage of tokens (arc), and the
>0 sub-corpus (expressions with at least one known word). Expressions whose
words are all unknown abstain and count as failures.

Proposal evaluation ranks automatically computed boxes and scores IoU
against the gold box (success at IoU >= threshold). Visual features for
proposal boxes come from the feature table under the key
(image_id, "prop_<j>") with j the 0-based index into the proposals file;
positional features are computed on the fly.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .corpus import Corpus, image_split_map, is_relational
from .features import FeatureIndex
from .semantics import CandidateSet, resolve
from .trainer import ModelSet, train_all, word_seed
from .vocab import Vocabulary

log = logging.getLogger(__name__)


def iou(box_a, box_b) -> float:
    """Intersection over union of two (x, y, w, h) boxes. Disjoint -> 0."""
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        return 0.0
    ix = max(ax, bx)
    iy = max(ay, by)
    ix2 = min(ax + aw, bx + bw)
    iy2 = min(ay + ah, by + bh)
    inter = max(0.0, ix2 - ix) * max(0.0, iy2 - iy)
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union


# ---------------------------------------------------------------------------
# gold-region evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExprOutcome:
    """Per-expression resolution outcome. rank is None on abstention."""

    rank: int | None
    tokens_known: int
    tokens_total: int

    @property
    def abstained(self) -> bool:
        return self.rank is None


@dataclass
class EvalReport:
    n_total: int
    pct_tst: float
    acc: float
    mrr: float
    arc: float
    frac_gt0: float
    acc_gt0: float
    n_skipped: int = 0
    variant: str = "full"

    CSV_COLUMNS = ("pct_tst", "acc", "mrr", "arc", "frac_gt0", "acc_gt0")

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "pct_tst": self.pct_tst,
            "acc": self.acc,
            "mrr": self.mrr,
            "arc": self.arc,
            "frac_gt0": self.frac_gt0,
            "acc_gt0": self.acc_gt0,
            "n_skipped": self.n_skipped,
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalReport":
        return cls(**obj)


def summarize(
    outcomes,
    n_unfiltered: int,
    mrr_exclude_abstained: bool = False,
    n_skipped: int = 0,
    variant: str = "full",
) -> EvalReport:
    """Aggregate per-expression outcomes into a report.

    Abstentions count as failures: 0 accuracy, 0 reciprocal rank (unless
    mrr_exclude_abstained averages mrr over the >0 subset only), 0 arc.
    """
    outcomes = list(outcomes)
    n = len(outcomes)
    if n == 0:
        return EvalReport(0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, n_skipped, variant)
    hits = sum(1 for o in outcomes if o.rank == 1)
    rr = [0.0 if o.abstained else 1.0 / o.rank for o in outcomes]
    arc = sum(o.tokens_known / o.tokens_total for o in outcomes) / n
    non_abstained = [o for o in outcomes if not o.abstained]
    n_gt0 = len(non_abstained)
    if mrr_exclude_abstained:
        mrr = sum(rr) / n_gt0 if n_gt0 else 0.0
    else:
        mrr = sum(rr) / n
    acc_gt0 = (sum(1 for o in non_abstained if o.rank == 1) / n_gt0) if n_gt0 else 0.0
    return EvalReport(
        n_total=n,
        pct_tst=(n / n_unfiltered) if n_unfiltered else 0.0,
        acc=hits / n,
        mrr=mrr,
        arc=arc,
        frac_gt0=n_gt0 / n,
        acc_gt0=acc_gt0,
        n_skipped=n_skipped,
        variant=variant,
    )


class _GoldCandidates:
    """Per-image candidate sets over annotated regions, built lazily."""

    def __init__(self, corpus: Corpus, features: FeatureIndex):
        self.corpus = corpus
        self.features = features
        self._cache: dict[str, CandidateSet | None] = {}
        self.missing_rows = 0

    def get(self, image_id: str) -> CandidateSet | None:
        if image_id in self._cache:
            return self._cache[image_id]
        ids, vectors = [], []
        for region_id in self.corpus.region_ids_of(image_id):
            vec = self.features.get(image_id, region_id)
            if vec is None:
                self.missing_rows += 1
                continue
            ids.append(region_id)
            vectors.append(vec)
        cs = CandidateSet(ids, np.vstack(vectors)) if ids else None
        self._cache[image_id] = cs
        return cs


def selected_exprs(corpus: Corpus, split: str, filter_relational: bool):
    """(selected expressions, unfiltered split size)."""
    split_exprs = corpus.exprs_in(split)
    if filter_relational:
        return [e for e in split_exprs if not is_relational(e)], len(split_exprs)
    return list(split_exprs), len(split_exprs)


def expression_outcomes(
    model: ModelSet,
    corpus: Corpus,
    features: FeatureIndex,
    split: str = "test",
    filter_relational: bool = False,
):
    """Per-expression outcomes on gold candidate sets.

    Returns (list of (RefExpr, ExprOutcome), n_unfiltered, n_skipped).
    Expressions whose gold region has no feature row are skipped, counted.
    """
    exprs, n_unfiltered = selected_exprs(corpus, split, filter_relational)
    candidates = _GoldCandidates(corpus, features)
    results = []
    n_skipped = 0
    for expr in exprs:
        cs = candidates.get(expr.image_id)
        if cs is None or expr.region_id not in cs.ids:
            n_skipped += 1
            continue
        res = resolve(expr, cs, model)
        outcome = ExprOutcome(
            rank=res.rank_of(expr.region_id),
            tokens_known=res.tokens_known,
            tokens_total=res.tokens_total,
        )
        results.append((expr, outcome))
    if n_skipped:
        log.warning("gold evaluation skipped %d expressions without features", n_skipped)
    return results, n_unfiltered, n_skipped


def evaluate_gold(
    model: ModelSet,
    corpus: Corpus,
    features: FeatureIndex,
    split: str = "test",
    filter_relational: bool = False,
    mrr_exclude_abstained: bool = False,
    variant: str | None = None,
) -> EvalReport:
    """Accuracy / mrr / arc / >0 metrics on gold candidate sets."""
    results, n_unfiltered, n_skipped = expression_outcomes(
        model, corpus, features, split, filter_relational
    )
    if variant is None:
        variant = "nr" if filter_relational else "full"
    return summarize(
        (o for _, o in results),
        n_unfiltered,
        mrr_exclude_abstained,
        n_skipped,
        variant,
    )


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def baseline_random(corpus: Corpus, split: str = "test", seed: int = 0) -> float:
    """Accuracy of picking a uniformly random gold region (seeded)."""
    rng = np.random.default_rng(seed)
    hits, n = 0, 0
    for expr in corpus.exprs_in(split):
        region_ids = corpus.region_ids_of(expr.image_id)
        if not region_ids:
            continue
        pick = region_ids[rng.integers(0, len(region_ids))]
        hits += pick == expr.region_id
        n += 1
    return hits / n if n else 0.0


def baseline_largest(corpus: Corpus, split: str = "test") -> float:
    """Accuracy of the 1-rule classifier picking the largest region."""
    hits, n = 0, 0
    for expr in corpus.exprs_in(split):
        region_ids = corpus.region_ids_of(expr.image_id)
        if not region_ids:
            continue
        best = max(
            region_ids,
            key=lambda rid: (corpus.regions[(expr.image_id, rid)].area, -region_ids.index(rid)),
        )
        hits += best == expr.region_id
        n += 1
    return hits / n if n else 0.0


# ---------------------------------------------------------------------------
# region-proposal evaluation
# ---------------------------------------------------------------------------


PROPOSAL_KEY = "prop_{index}"


@dataclass
class ProposalReport:
    p_at_1: float
    r_at_10: float | None
    rnd: float
    iou_threshold: float
    n_total: int = 0
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "p_at_1": self.p_at_1,
            "r_at_10": self.r_at_10,
            "rnd": self.rnd,
            "iou_threshold": self.iou_threshold,
            "n_total": self.n_total,
            "n_skipped": self.n_skipped,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ProposalReport":
        return cls(**obj)


def evaluate_proposals(
    model: ModelSet,
    corpus: Corpus,
    features: FeatureIndex,
    split: str = "test",
    iou_threshold: float = 0.5,
    relaxed_k: int | None = 10,
    seed: int = 0,
    filter_relational: bool = False,
) -> ProposalReport:
    """P@1 / R@k over proposal boxes, IoU-thresholded against the gold box.

    Expressions of images without proposals (or without proposal feature
    rows) are skipped and counted. Abstentions count as misses. The random
    baseline applies the P@1 criterion to one seeded uniform proposal pick.
    """
    exprs, _ = selected_exprs(corpus, split, filter_relational)
    rng = np.random.default_rng(seed)
    candidate_cache: dict[str, CandidateSet | None] = {}

    def proposal_candidates(image_id: str) -> CandidateSet | None:
        if image_id in candidate_cache:
            return candidate_cache[image_id]
        ps = corpus.proposals.get(image_id)
        cs = None
        if ps is not None and ps.boxes:
            ids, vectors = [], []
            for j, box in enumerate(ps.boxes):
                key = PROPOSAL_KEY.format(index=j)
                visual = features.table.row(image_id, key)
                if visual is None:
                    continue
                ids.append(key)
                vectors.append(features.for_box(image_id, box, visual))
            if ids:
                cs = CandidateSet(ids, np.vstack(vectors))
        candidate_cache[image_id] = cs
        return cs

    p1_hits = 0
    rk_hits = 0
    rnd_hits = 0
    n_total = 0
    n_skipped = 0
    for expr in exprs:
        ps = corpus.proposals.get(expr.image_id)
        cs = proposal_candidates(expr.image_id)
        if ps is None or cs is None:
            n_skipped += 1
            continue
        gold_box = corpus.regions[(expr.image_id, expr.region_id)].bbox
        boxes_by_id = {
            PROPOSAL_KEY.format(index=j): box for j, box in enumerate(ps.boxes)
        }
        n_total += 1

        rnd_box = ps.boxes[rng.integers(0, len(ps.boxes))]
        rnd_hits += iou(rnd_box, gold_box) >= iou_threshold

        res = resolve(expr, cs, model)
        if res.abstained:
            continue
        top = res.ranking[0]
        p1_hits += iou(boxes_by_id[top], gold_box) >= iou_threshold
        if relaxed_k is not None:
            rk_hits += any(
                iou(boxes_by_id[rid], gold_box) >= iou_threshold
                for rid in res.ranking[:relaxed_k]
            )

    if n_skipped:
        log.warning("proposal evaluation skipped %d expressions without proposals", n_skipped)
    denom = n_total if n_total else 1
    return ProposalReport(
        p_at_1=p1_hits / denom,
        r_at_10=(rk_hits / denom) if relaxed_k is not None else None,
        rnd=rnd_hits / denom,
        iou_threshold=iou_threshold,
        n_total=n_total,
        n_skipped=n_skipped,
    )


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------


def top_k_words(model: ModelSet, k: int) -> list[str]:
    """The k words with the most positive training instances (ties by word)."""
    if k > len(model.classifiers):
        log.warning(
            "top-k ablation: k=%d exceeds vocabulary size %d, using all words",
            k,
            len(model.classifiers),
        )
        k = len(model.classifiers)
    ranked = sorted(model.classifiers.values(), key=lambda c: (-c.n_pos, c.word))
    return [c.word for c in ranked[:k]]


def ablate(
    model: ModelSet,
    corpus: Corpus,
    features: FeatureIndex,
    variant: str,
    split: str = "test",
    filter_relational: bool = False,
    jobs: int = 1,
) -> EvalReport:
    """Evaluate a reduced model.

    variant: "positional" / "visual" retrain with that feature mask using
    the model's training config; "top:K" restricts the given model to the
    K words with most positive instances.
    """
    if variant.startswith("top:"):
        k = int(variant.split(":", 1)[1])
        reduced = model.restricted_to(top_k_words(model, k))
    elif variant in ("positional", "visual"):
        config = dc_replace(model.config, feature_mask=variant)
        vocabulary = Vocabulary.from_corpus(
            corpus, config.min_count, config.filter_relational
        )
        reduced = train_all(corpus, vocabulary, features, config, jobs=jobs)
    else:
        raise ValueError(
            f"unknown ablation variant {variant!r}; use 'positional', 'visual' or 'top:K'"
        )
    return evaluate_gold(
        reduced, corpus, features, split, filter_relational, variant=variant
    )


# ---------------------------------------------------------------------------
# error analysis
# ---------------------------------------------------------------------------


@dataclass
class LengthBucket:
    length: int
    accuracy: float
    fraction: float
    n: int


def accuracy_by_length(
    model: ModelSet,
    corpus: Corpus,
    features: FeatureIndex,
    split: str = "test",
    filter_relational: bool = False,
) -> list[LengthBucket]:
    """Accuracy and corpus share per exact expression token count."""
    results, _, _ = expression_outcomes(model, corpus, features, split, filter_relational)
    n = len(results)
    buckets: dict[int, list[ExprOutcome]] = {}
    for expr, outcome in results:
        buckets.setdefault(len(expr.tokens), []).append(outcome)
    out = []
    for length in sorted(buckets):
        outcomes = buckets[length]
        acc = sum(1 for o in outcomes if o.rank == 1) / len(outcomes)
        out.append(LengthBucket(length, acc, len(outcomes) / n, len(outcomes)))
    return out


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AP: mean of running precision at each positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.sum() == 0:
        raise ValueError("average_precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_labels = labels[order].astype(np.float64)
    cum_pos = np.cumsum(sorted_labels)
    precision_at = cum_pos / np.arange(1, len(sorted_labels) + 1)
    return float(precision_at[sorted_labels == 1].mean())


@dataclass
class APRow:
    word: str
    ap: float
    n_pos: int  # positive training instances of the classifier
    n_val_pos: int  # positive validation instances scored here


@dataclass
class APReport:
    rows: list[APRow] = field(default_factory=list)
    mean_ap: float = 0.0
    std_ap: float = 0.0
    n_omitted: int = 0

    def to_dict(self) -> dict:
        return {
            "mean_ap": self.mean_ap,
            "std_ap": self.std_ap,
            "n_omitted": self.n_omitted,
            "rows": [
                {"word": r.word, "ap": r.ap, "n_pos": r.n_pos, "n_val_pos": r.n_val_pos}
                for r in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "APReport":
        rows = [APRow(**r) for r in obj["rows"]]
        return cls(rows, obj["mean_ap"], obj["std_ap"], obj["n_omitted"])


def per_word_average_precision(
    model: ModelSet,
    corpus: Corpus,
    features: FeatureIndex,
    split: str = "val",
    neg_per_pos: int = 5,
    seed: int = 1,
    filter_relational: bool = False,
) -> APReport:
    """Per-classifier AP on a held-out split.

    Positives: regions referred to with the word in the split (one item per
    occurrence). Negatives: same sampling regime as training (fixed ratio,
    uniform over split regions whose expressions lack the word), fresh seed.
    Words without validation positives are omitted and counted.
    """
    split_of = image_split_map(corpus)
    split_regions = sorted(
        key
        for key in corpus.regions
        if split_of.get(key[0]) == split and features.table.has(*key)
    )
    region_words: dict[tuple[str, str], set[str]] = {}
    positives_of: dict[str, list[tuple[str, str]]] = {}
    for expr in corpus.exprs:
        if expr.split != split:
            continue
        if filter_relational and is_relational(expr):
            continue
        key = (expr.image_id, expr.region_id)
        region_words.setdefault(key, set()).update(expr.tokens)
        for token in expr.tokens:
            if token in model.classifiers:
                positives_of.setdefault(token, []).append(key)

    sl = model.mask_slice()
    rows: list[APRow] = []
    n_omitted = 0
    for word in sorted(model.classifiers):
        clf = model.classifiers[word]
        pos_keys = [k for k in positives_of.get(word, []) if features.table.has(*k)]
        if not pos_keys:
            n_omitted += 1
            continue
        eligible = [k for k in split_regions if word not in region_words.get(k, ())]
        if not eligible:
            n_omitted += 1
            continue
        rng = np.random.default_rng(word_seed(seed, word))
        draws = rng.integers(0, len(eligible), size=neg_per_pos * len(pos_keys))
        neg_keys = [eligible[i] for i in draws]
        X = np.vstack([features.get(*k) for k in (*pos_keys, *neg_keys)])[:, sl]
        labels = np.concatenate([np.ones(len(pos_keys)), np.zeros(len(neg_keys))])
        scores = X @ clf.weights + clf.bias
        rows.append(
            APRow(
                word=word,
                ap=average_precision(scores, labels),
                n_pos=clf.n_pos,
                n_val_pos=len(pos_keys),
            )
        )
    if n_omitted:
        log.info("AP report omitted %d words without validation positives", n_omitted)
    aps = np.array([r.ap for r in rows]) if rows else np.zeros(0)
    rows.sort(key=lambda r: (-r.ap, r.word))
    return APReport(
        rows=rows,
        mean_ap=float(aps.mean()) if len(aps) else 0.0,
        std_ap=float(aps.std()) if len(aps) else 0.0,
        n_omitted=n_omitted,
    )


# ---------------------------------------------------------------------------
# report export
# ---------------------------------------------------------------------------


def export_report(report, path, format: str = "json") -> None:
    """Serialize a report losslessly (json) or as a flat table (csv).

    CSV for EvalReport uses the standard column order
    (pct_tst, acc, mrr, arc, frac_gt0, acc_gt0); the per-word AP table
    carries word, ap, n_pos, n_val_pos rows.
    """
    if format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    if format != "csv":
        raise ValueError(f"unknown report format {format!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if isinstance(report, EvalReport):
            writer.writerow(EvalReport.CSV_COLUMNS)
            writer.writerow([getattr(report, c) for c in EvalReport.CSV_COLUMNS])
        elif isinstance(report, ProposalReport):
            writer.writerow(["p_at_1", "r_at_10", "rnd", "iou_threshold"])
            writer.writerow([report.p_at_1, report.r_at_10, report.rnd, report.iou_threshold])
        elif isinstance(report, APReport):
            writer.writerow(["word", "ap", "n_pos", "n_val_pos"])
            for r in report.rows:
                writer.writerow([r.word, r.ap, r.n_pos, r.n_val_pos])
        else:
            raise TypeError(f"cannot export report of type {type(report).__name__}")


def load_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        return EvalReport.from_dict(json.load(fh))
