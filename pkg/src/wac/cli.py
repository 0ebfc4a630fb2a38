"""Command-line entry point.

Subcommands: synth, train, evaluate, resolve, ablate (evaluate --ablate),
inspect. A JSON config file can supply any long-option defaults; explicit
flags win. All randomness flows from --seed (sub-seeds by stable hashing).
Log verbosity via WAC_LOG={error|info|debug}.
"""

from __future__ import annotations

import argparse
import difflib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .corpus import load_corpus, tokenize
from .evaluation import (
    ablate,
    baseline_largest,
    baseline_random,
    evaluate_gold,
    evaluate_proposals,
    export_report,
    per_word_average_precision,
)
from .features import FeatureIndex, load_feature_table
from .semantics import CandidateSet, resolve
from .synthworld import SynthConfig, generate, write_world
from .trainer import TrainingConfig, load_model, save_model, train_all, word_seed
from .vocab import Vocabulary

log = logging.getLogger("wac")


class CliError(RuntimeError):
    pass


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("WAC_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _on_off(value: str) -> bool:
    if value in ("on", "true", "1", "yes"):
        return True
    if value in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--config",
        help="JSON file of option defaults (keys = long option names with "
        "underscores); explicit flags win",
    )


def _add_data_args(p: argparse.ArgumentParser, with_proposals: bool = True) -> None:
    p.add_argument("--data", help="directory holding the standard corpus files")
    p.add_argument("--images", help="images JSONL (overrides --data)")
    p.add_argument("--regions", help="regions JSONL (overrides --data)")
    p.add_argument("--expressions", help="expressions JSONL (overrides --data)")
    if with_proposals:
        p.add_argument("--proposals", help="proposals JSONL (overrides --data)")
    p.add_argument("--features", help="feature manifest (default <data>/features.json)")


def _load_data(args, need_proposals: bool = False):
    def pick(flag_value, default_name, required=True):
        if flag_value:
            return flag_value
        if args.data:
            candidate = os.path.join(args.data, default_name)
            if os.path.exists(candidate) or required:
                return candidate
            return None
        if required:
            raise CliError(
                f"no {default_name} given: pass --data DIR or the explicit flag"
            )
        return None

    images = pick(args.images, "images.jsonl")
    regions = pick(args.regions, "regions.jsonl")
    exprs = pick(args.expressions, "expressions.jsonl")
    proposals = pick(getattr(args, "proposals", None), "proposals.jsonl", required=need_proposals)
    manifest = pick(args.features, "features.json")
    if not os.path.exists(manifest):
        raise CliError(f"feature manifest not found: {manifest}")
    corpus = load_corpus(images, regions, exprs, proposals)
    table = load_feature_table(manifest)
    return corpus, FeatureIndex(corpus, table)


def _jobs(args) -> int:
    if getattr(args, "jobs", None):
        return max(1, args.jobs)
    return os.cpu_count() or 1


def _training_config(args) -> TrainingConfig:
    return TrainingConfig(
        neg_per_pos=args.neg_per_pos,
        min_count=args.min_count,
        l1=args.l1,
        max_epochs=args.max_epochs,
        tol=args.tol,
        seed=args.seed,
        feature_mask=args.mask,
        filter_relational=args.filter_relational,
        exclude_same_image=args.exclude_same_image,
        standardize=args.standardize,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_scenes=args.scenes,
        k=args.k,
        dim_visual=args.dim,
        noise_sigma=args.sigma,
        seed=args.seed,
        exprs_per_scene=args.exprs_per_scene,
        proposals_per_scene=args.proposals_per_scene,
    )
    corpus, table, gold = generate(cfg)
    paths = write_world(corpus, table, gold, args.out)
    n_img, n_reg, n_expr = corpus.counts()
    log.info(
        "synthesized %d images / %d regions / %d expressions into %s",
        n_img,
        n_reg,
        n_expr,
        args.out,
    )
    print(json.dumps({"out": args.out, "images": n_img, "regions": n_reg, "expressions": n_expr}))
    return 0


def cmd_train(args) -> int:
    corpus, features = _load_data(args)
    config = _training_config(args)
    vocabulary = Vocabulary.from_corpus(corpus, config.min_count, config.filter_relational)
    if not vocabulary.selected:
        raise CliError(
            f"no word reaches min_count={config.min_count} in the train split"
        )
    log.info("vocabulary: %d words at min_count=%d", len(vocabulary), config.min_count)
    model = train_all(corpus, vocabulary, features, config, jobs=_jobs(args))
    save_model(model, args.out)
    for word in sorted(model.classifiers):
        clf = model.classifiers[word]
        log.debug("word %r: %d positives, %d negatives", word, clf.n_pos, clf.n_neg)
    summary = {
        "model": args.out,
        "words_trained": len(model.classifiers),
        "words_failed": len(model.failures),
        "failures": model.failures,
    }
    print(json.dumps(summary, sort_keys=True))
    if model.failures and args.strict:
        log.error("failing due to --strict with %d failed words", len(model.failures))
        return 1
    return 0


def cmd_evaluate(args) -> int:
    # an explicit --proposals file implies proposal evaluation
    proposal_mode = args.proposals_eval or args.proposals is not None
    corpus, features = _load_data(args, need_proposals=proposal_mode)
    model = load_model(args.model, features.table)

    reports = {}
    if proposal_mode:
        report = evaluate_proposals(
            model,
            corpus,
            features,
            split=args.split,
            iou_threshold=args.iou_thresh,
            relaxed_k=args.topk if args.topk > 0 else None,
            seed=word_seed(args.seed, "proposal-baseline"),
            filter_relational=args.nr,
        )
        reports["proposals"] = report.to_dict()
        out_report = report
    elif args.ablate:
        variant = {"pos": "positional", "visual": "visual"}.get(args.ablate, args.ablate)
        report = ablate(
            model,
            corpus,
            features,
            variant,
            split=args.split,
            filter_relational=args.nr,
            jobs=_jobs(args),
        )
        reports[report.variant] = report.to_dict()
        out_report = report
    else:
        report = evaluate_gold(
            model,
            corpus,
            features,
            split=args.split,
            filter_relational=args.nr,
            mrr_exclude_abstained=args.mrr_exclude_abstained,
        )
        reports[report.variant] = report.to_dict()
        out_report = report
        if args.baselines:
            reports["baseline_random"] = baseline_random(
                corpus, args.split, seed=word_seed(args.seed, "random-baseline")
            )
            reports["baseline_largest"] = baseline_largest(corpus, args.split)

    if args.report:
        export_report(out_report, args.report, args.format)
        log.info("report written to %s", args.report)
    print(json.dumps(reports, sort_keys=True))
    return 0


def cmd_resolve(args) -> int:
    corpus, features = _load_data(args)
    model = load_model(args.model, features.table)
    image_id = args.image
    if image_id not in corpus.images:
        raise CliError(f"unknown image {image_id!r}")
    if args.regions_list:
        region_ids = [r.strip() for r in args.regions_list.split(",") if r.strip()]
    else:
        region_ids = corpus.region_ids_of(image_id)
    vectors = []
    for rid in region_ids:
        vec = features.get(image_id, rid)
        if vec is None:
            raise CliError(f"no feature row for region ({image_id!r}, {rid!r})")
        vectors.append(vec)
    if not vectors:
        raise CliError(f"image {image_id!r} has no candidate regions")
    candidates = CandidateSet(region_ids, np.vstack(vectors))
    tokens = tokenize(args.expr)
    result = resolve(tokens, candidates, model)
    payload = {
        "ranking": result.ranking,
        "probs": [] if result.abstained else result.distribution.probs.tolist(),
        "tokens_total": result.tokens_total,
        "tokens_known": result.tokens_known,
        "abstained": result.abstained,
    }
    print(json.dumps(payload))
    return 0


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    word = args.word
    if word not in model.classifiers:
        suggestions = difflib.get_close_matches(word, sorted(model.classifiers), n=5)
        raise CliError(
            f"no classifier for word {word!r}; nearest vocabulary entries: {suggestions}"
        )
    clf = model.classifiers[word]
    order = np.argsort(clf.weights)
    card = {
        "word": word,
        "n_pos": clf.n_pos,
        "n_neg": clf.n_neg,
        "bias": clf.bias,
        "dim": int(clf.weights.shape[0]),
        "nonzero_weights": int(np.count_nonzero(clf.weights)),
        "top_positive_weights": [
            {"index": int(i), "weight": float(clf.weights[i])} for i in order[::-1][:5]
        ],
        "top_negative_weights": [
            {"index": int(i), "weight": float(clf.weights[i])} for i in order[:5]
        ],
    }
    if args.data or (args.images and args.regions and args.expressions):
        corpus, features = _load_data(args)
        ap_report = per_word_average_precision(
            model, corpus, features, split=args.split, seed=word_seed(model.config.seed, "ap")
        )
        for row in ap_report.rows:
            if row.word == word:
                card["ap"] = row.ap
                card["n_val_pos"] = row.n_val_pos
                break
    if args.json:
        print(json.dumps(card, sort_keys=True))
    else:
        print(f"word: {card['word']}")
        print(f"  instances: {card['n_pos']} positive / {card['n_neg']} negative")
        print(f"  bias: {card['bias']:+.4f}")
        print(f"  nonzero weights: {card['nonzero_weights']}/{card['dim']}")
        tops = ", ".join(
            f"{e['index']}:{e['weight']:+.3f}" for e in card["top_positive_weights"]
        )
        bots = ", ".join(
            f"{e['index']}:{e['weight']:+.3f}" for e in card["top_negative_weights"]
        )
        print(f"  strongest positive weights: {tops}")
        print(f"  strongest negative weights: {bots}")
        if "ap" in card:
            print(f"  average precision ({args.split}): {card['ap']:.3f}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser, _ = _build_parser_with_subcommands()
    return parser


def _build_parser_with_subcommands():
    subcommands: dict[str, argparse.ArgumentParser] = {}
    parser = argparse.ArgumentParser(
        prog="wac",
        description="words-as-classifiers reference resolution",
    )
    parser.add_argument("--version", action="version", version=f"wac {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = subcommands["synth"] = sub.add_parser(
        "synth", help="generate a synthetic corpus + features"
    )
    _add_config_arg(p)
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exprs-per-scene", type=int, default=2)
    p.add_argument("--proposals-per-scene", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = subcommands["train"] = sub.add_parser(
        "train", help="train one classifier per vocabulary word"
    )
    _add_config_arg(p)
    _add_data_args(p)
    p.add_argument("--out", required=True, help="model manifest path")
    p.add_argument("--min-count", type=int, default=40)
    p.add_argument("--neg-per-pos", type=int, default=5)
    p.add_argument("--l1", type=float, default=1e-4)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask", choices=("full", "visual", "positional"), default="full")
    p.add_argument("--filter-relational", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--exclude-same-image", action="store_true")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads (default: available parallelism)")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_train)

    for name in ("evaluate", "ablate"):
        p = subcommands[name] = sub.add_parser(
            name,
            help="evaluate a model" if name == "evaluate" else "evaluate a reduced model",
        )
        _add_config_arg(p)
        _add_data_args(p)
        p.add_argument("--model", required=True)
        p.add_argument("--split", choices=("train", "val", "test"), default="test")
        p.add_argument("--nr", type=_on_off, default=False, metavar="{on,off}",
                       help="drop relational expressions from the testset")
        p.add_argument("--proposals-eval", action="store_true",
                       help="evaluate on region proposals instead of gold regions "
                       "(implied by an explicit --proposals file)")
        p.add_argument("--iou-thresh", type=float, default=0.5)
        p.add_argument("--topk", type=int, default=10, help="relaxed R@K for proposals")
        if name == "evaluate":
            p.add_argument("--ablate", default=None, metavar="{pos,visual,top:K}")
        else:
            p.add_argument("--ablate", required=True, metavar="{pos,visual,top:K}")
        p.add_argument("--mrr-exclude-abstained", action="store_true")
        p.add_argument("--baselines", action="store_true",
                       help="also report random/largest-region baselines")
        p.add_argument("--report", help="write the report to this path")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=None,
                       help="worker threads (default: available parallelism)")
        p.set_defaults(func=cmd_evaluate)

    p = subcommands["resolve"] = sub.add_parser(
        "resolve", help="resolve one expression against candidates"
    )
    _add_config_arg(p)
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--expr", required=True)
    p.add_argument("--regions-list", help="comma-separated region ids (default: all of the image)")
    p.set_defaults(func=cmd_resolve)

    p = subcommands["inspect"] = sub.add_parser(
        "inspect", help="show a word's classifier card"
    )
    _add_config_arg(p)
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="val")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    return parser, subcommands


def main(argv=None) -> int:
    _setup_logging()
    parser, subcommands = _build_parser_with_subcommands()
    args = parser.parse_args(argv)

    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            defaults = json.load(fh)
        sub = subcommands[args.command]
        valid = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - valid)
        if unknown:
            parser.error(f"config file sets unknown options for {args.command}: {unknown}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)  # explicit flags still win

    try:
        return args.func(args)
    except (CliError, FileNotFoundError, ValueError, RuntimeError) as err:
        log.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
