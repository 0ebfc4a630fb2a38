"""Words-as-classifiers reference resolution.

Train one binary classifier per word over image-region features, compose
word extensions multiplicatively into referring-expression denotations,
and resolve references by argmax over candidate regions.
"""

from .corpus import (
    Corpus,
    ImageRecord,
    ProposalSet,
    RefExpr,
    RegionRecord,
    RELWORDS,
    is_relational,
    load_corpus,
    save_corpus,
    split_corpus,
    tokenize,
)
from .estimator import L1LogisticRegression, logistic_loss_grad, sigmoid, soft_threshold
from .evaluation import (
    APReport,
    EvalReport,
    ProposalReport,
    ablate,
    accuracy_by_length,
    average_precision,
    baseline_largest,
    baseline_random,
    evaluate_gold,
    evaluate_proposals,
    export_report,
    iou,
    per_word_average_precision,
    summarize,
)
from .features import (
    FeatureIndex,
    FeatureTable,
    PositionalFeatures,
    Standardizer,
    assemble,
    load_feature_table,
    positional_features,
    write_feature_table,
)
from .semantics import (
    CandidateSet,
    Distribution,
    ResolutionResult,
    apply_word,
    compose_nom,
    resolve,
    select_the,
    word_extension,
)
from .synthworld import SynthConfig, SynthGold, generate, oracle_resolve, write_world
from .trainer import (
    ModelSet,
    TrainingConfig,
    WordClassifier,
    assemble_positives,
    load_model,
    sample_negatives,
    save_model,
    train_all,
    train_word,
)
from .vocab import Vocabulary, count_words, merge_counts, select_words

__version__ = "0.1.0"

__all__ = [
    "APReport",
    "CandidateSet",
    "Corpus",
    "Distribution",
    "EvalReport",
    "FeatureIndex",
    "FeatureTable",
    "ImageRecord",
    "L1LogisticRegression",
    "ModelSet",
    "PositionalFeatures",
    "ProposalReport",
    "ProposalSet",
    "RefExpr",
    "RegionRecord",
    "RELWORDS",
    "ResolutionResult",
    "Standardizer",
    "SynthConfig",
    "SynthGold",
    "TrainingConfig",
    "Vocabulary",
    "WordClassifier",
    "ablate",
    "accuracy_by_length",
    "apply_word",
    "assemble",
    "assemble_positives",
    "average_precision",
    "baseline_largest",
    "baseline_random",
    "compose_nom",
    "count_words",
    "evaluate_gold",
    "evaluate_proposals",
    "export_report",
    "generate",
    "iou",
    "is_relational",
    "load_corpus",
    "load_feature_table",
    "load_model",
    "logistic_loss_grad",
    "merge_counts",
    "oracle_resolve",
    "per_word_average_precision",
    "positional_features",
    "resolve",
    "sample_negatives",
    "save_corpus",
    "save_model",
    "select_the",
    "select_words",
    "sigmoid",
    "soft_threshold",
    "split_corpus",
    "summarize",
    "tokenize",
    "train_all",
    "train_word",
    "word_extension",
    "write_feature_table",
    "write_world",
]
