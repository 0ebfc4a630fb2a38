"""Word denotations over candidate sets and their composition.

A word's intension is its classifier; applying it to every candidate and
sum-normalizing yields the word's extension, a distribution over the
candidates. Nominal composition multiplies extensions componentwise and
renormalizes; definite reference picks the argmax.

All normalization happens in log space (summed log scores + log-sum-exp),
so long expressions cannot underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import RefExpr
from .estimator import sigmoid
from .trainer import ModelSet, WordClassifier
from .validation import check_matrix


@dataclass
class CandidateSet:
    """Ordered candidates: ids plus one full-dimension row per candidate."""

    ids: list[str]
    vectors: np.ndarray  # (k, D) float64

    def __post_init__(self):
        self.vectors = check_matrix(self.vectors, "candidate vectors")
        if len(self.ids) < 1:
            raise ValueError("candidate set must contain at least one candidate")
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids vs {self.vectors.shape[0]} vector rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("candidate ids must be unique")

    @property
    def k(self) -> int:
        return len(self.ids)


@dataclass
class Distribution:
    """Normalized probabilities aligned with a CandidateSet's order."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1 or self.probs.shape[0] < 1:
            raise ValueError("distribution must be a nonempty vector")
        if np.any(self.probs < 0) or not np.all(np.isfinite(self.probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {self.probs.sum()}, not 1")

    @property
    def k(self) -> int:
        return self.probs.shape[0]


@dataclass
class ResolutionResult:
    ranking: list[str]  # candidate ids, most probable first; empty on abstention
    distribution: Distribution | None
    tokens_total: int
    tokens_known: int

    @property
    def abstained(self) -> bool:
        return self.tokens_known == 0

    def rank_of(self, candidate_id: str) -> int | None:
        """1-based rank of a candidate, None on abstention."""
        if self.abstained:
            return None
        return self.ranking.index(candidate_id) + 1


def _logsumexp(v: np.ndarray) -> float:
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def apply_word(classifier: WordClassifier, x: np.ndarray) -> float:
    """Classifier score for one candidate, sigmoid(w.x + b) in (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != classifier.weights.shape:
        raise ValueError(
            f"dimension mismatch: vector has shape {x.shape}, "
            f"classifier {classifier.word!r} expects {classifier.weights.shape}"
        )
    z = classifier.weights @ x + classifier.bias
    return float(sigmoid(z))


def _log_extension(classifier: WordClassifier, vectors: np.ndarray) -> np.ndarray:
    """Log of the word's normalized extension over candidate rows."""
    if vectors.shape[1] != classifier.weights.shape[0]:
        raise ValueError(
            f"dimension mismatch: candidates have dim {vectors.shape[1]}, "
            f"classifier {classifier.word!r} expects {classifier.weights.shape[0]}"
        )
    log_scores = _log_sigmoid(vectors @ classifier.weights + classifier.bias)
    return log_scores - _logsumexp(log_scores)


def word_extension(classifier: WordClassifier, candidates: CandidateSet) -> Distribution:
    """The word's extension: per-candidate scores, sum-normalized."""
    logp = _log_extension(classifier, candidates.vectors)
    p = np.exp(logp)
    return Distribution(p / p.sum())


def compose_nom(distributions) -> Distribution:
    """Multiplicative nominal composition: componentwise product, renormalized."""
    distributions = list(distributions)
    if not distributions:
        raise ValueError("compose_nom needs at least one distribution")
    k = distributions[0].k
    for d in distributions:
        if d.k != k:
            raise ValueError(f"length mismatch: {d.k} vs {k}")
    with np.errstate(divide="ignore"):  # zero probabilities map to -inf
        log_total = np.sum([np.log(d.probs) for d in distributions], axis=0)
    z = _logsumexp(log_total)
    if not np.isfinite(z):
        raise ValueError("composition has zero mass on every candidate")
    p = np.exp(log_total - z)
    return Distribution(p / p.sum())


# composition operators by construction type; only the multiplicative
# nominal one ships, but other construction types can register here
COMPOSITION_OPS = {"nom": compose_nom}


def get_composition(construction: str):
    op = COMPOSITION_OPS.get(construction)
    if op is None:
        known = sorted(COMPOSITION_OPS)
        raise KeyError(f"no composition operator for construction {construction!r}; known: {known}")
    return op


def select_the(dist: Distribution) -> int:
    """Definite reference: index of the most likely candidate.

    Ties break toward the lowest candidate position.
    """
    return int(np.argmax(dist.probs))


def resolve(expr, candidates: CandidateSet, model: ModelSet) -> ResolutionResult:
    """Resolve a referring expression against a candidate set.

    Tokens without a classifier are skipped (counted in tokens_total only);
    each occurrence of a known token contributes one extension factor. With
    no known token the result abstains: empty ranking, no distribution.
    """
    tokens = list(expr.tokens) if isinstance(expr, RefExpr) else list(expr)
    vectors = candidates.vectors
    if vectors.shape[1] != model.full_dim:
        raise ValueError(
            f"dimension mismatch: candidates have dim {vectors.shape[1]}, "
            f"model expects {model.full_dim} (visual {model.dim_visual} + 7)"
        )
    masked = vectors[:, model.mask_slice()]

    log_total = np.zeros(candidates.k)
    tokens_known = 0
    for token in tokens:
        clf = model.classifiers.get(token)
        if clf is None:
            continue
        tokens_known += 1
        log_total += _log_extension(clf, masked)

    if tokens_known == 0:
        return ResolutionResult(
            ranking=[], distribution=None, tokens_total=len(tokens), tokens_known=0
        )
    logp = log_total - _logsumexp(log_total)
    p = np.exp(logp)
    dist = Distribution(p / p.sum())
    order = np.argsort(-dist.probs, kind="stable")
    return ResolutionResult(
        ranking=[candidates.ids[i] for i in order],
        distribution=dist,
        tokens_total=len(tokens),
        tokens_known=tokens_known,
    )
