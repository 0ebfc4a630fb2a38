"""Acceptance suite: one test per release criterion, tolerances pinned.

Run with `pytest tests/test_acceptance.py -v` for one pass/fail line per
criterion. The real-data integration target is opt-in (see README) and
skips unless WAC_REFERIT_DIR points at prepared corpus files.
"""

import hashlib
import json
import os
import time

import numpy as np
import pytest

from wac.cli import main
from wac.corpus import Corpus, ImageRecord, RefExpr, RegionRecord, is_relational, tokenize
from wac.estimator import L1LogisticRegression, logistic_loss_grad
from wac.evaluation import (
    ExprOutcome,
    ablate,
    baseline_largest,
    baseline_random,
    evaluate_gold,
    iou,
    summarize,
)
from wac.features import FeatureIndex, FeatureTable
from wac.semantics import CandidateSet, Distribution, compose_nom, select_the, word_extension
from wac.synthworld import SynthConfig, generate
from wac.trainer import TrainingConfig, WordClassifier, train_all
from wac.vocab import Vocabulary


def report(name, detail):
    print(f"[acceptance] {name}: PASS ({detail})")


def random_distribution(rng, k):
    raw = rng.random(k) + 1e-6
    return Distribution(raw / raw.sum())


def test_c01_normalization_suite():
    """1000 randomized extensions/compositions all sum to 1 within 1e-9, <5s."""
    rng = np.random.default_rng(101)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(1, 9))
        n_words = int(rng.integers(1, 7))
        cands = CandidateSet([f"c{i}" for i in range(k)], rng.normal(size=(k, 5)))
        dists = []
        for j in range(n_words):
            clf = WordClassifier(f"w{j}", rng.normal(size=5), float(rng.normal()), 1, 5)
            ext = word_extension(clf, cands)
            worst = max(worst, abs(ext.probs.sum() - 1.0))
            dists.append(ext)
        comp = compose_nom(dists)
        worst = max(worst, abs(comp.probs.sum() - 1.0))
    elapsed = time.monotonic() - t0
    assert worst <= 1e-9
    assert elapsed < 5.0
    report("normalization suite", f"worst deviation {worst:.2e}, {elapsed:.2f}s")


def test_c02_argmax_invariance():
    """Scaling raw score vectors by c in (0.01, 100) never moves the argmax."""
    rng = np.random.default_rng(202)
    for _ in range(200):
        k = int(rng.integers(2, 9))
        n_words = int(rng.integers(1, 7))
        raws = [rng.random(k) + 1e-5 for _ in range(n_words)]
        base = compose_nom([Distribution(r / r.sum()) for r in raws])
        scales = [float(rng.uniform(0.01, 100.0)) for _ in raws]
        scaled = compose_nom(
            [Distribution((r * c) / (r * c).sum()) for r, c in zip(raws, scales)]
        )
        assert select_the(scaled) == select_the(base)
    report("argmax invariance", "200 random cases, exact match")


def test_c03_log_space_oracle():
    """compose_nom equals direct product+normalize within 1e-9."""
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(500):
        k = int(rng.integers(1, 9))
        n_words = int(rng.integers(1, 7))
        dists = [random_distribution(rng, k) for _ in range(n_words)]
        direct = np.ones(k)
        for d in dists:
            direct = direct * d.probs
        direct = direct / direct.sum()
        composed = compose_nom(dists).probs
        worst = max(worst, float(np.abs(composed - direct).max()))
    assert worst < 1e-9
    report("log-space oracle", f"max abs deviation {worst:.2e} over 500 cases")


def test_c04_gradient_check():
    """Analytic gradient vs central differences (h=1e-6), rel err < 1e-5."""
    rng = np.random.default_rng(404)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 201))
        d = int(rng.integers(2, 51))
        X = rng.normal(size=(n, d))
        y = (rng.random(n) < 0.5).astype(float)
        w = rng.normal(scale=0.5, size=d)
        b = float(rng.normal(scale=0.5))
        _, gw, gb = logistic_loss_grad(w, b, X, y, 0.0)
        fd = np.empty(d + 1)
        for i in range(d):
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            lp, _, _ = logistic_loss_grad(wp, b, X, y, 0.0)
            lm, _, _ = logistic_loss_grad(wm, b, X, y, 0.0)
            fd[i] = (lp - lm) / (2 * h)
        lp, _, _ = logistic_loss_grad(w, b + h, X, y, 0.0)
        lm, _, _ = logistic_loss_grad(w, b - h, X, y, 0.0)
        fd[d] = (lp - lm) / (2 * h)
        analytic = np.append(gw, gb)
        rel = np.linalg.norm(analytic - fd) / (np.linalg.norm(analytic) + 1e-12)
        worst = max(worst, rel)
    assert worst < 1e-5
    report("gradient check", f"worst relative error {worst:.2e} over 100 draws")


def test_c05_optimizer_on_separable_data():
    """n=400, D=20, one informative dim: acc >= 0.99; lambda=0.1 zeroes noise."""
    rng = np.random.default_rng(505)
    n, d = 400, 20
    y = np.concatenate([np.ones(n // 2), np.zeros(n // 2)])
    X = rng.normal(size=(n, d))
    X[:, 0] = np.where(y == 1, 1.0, -1.0) + 0.1 * rng.normal(size=n)

    t0 = time.monotonic()
    plain = L1LogisticRegression(l1=1e-4, max_epochs=500).fit(X, y)
    strong = L1LogisticRegression(l1=0.1, max_epochs=500).fit(X, y)
    elapsed = time.monotonic() - t0

    acc = plain.score(X, y)
    assert acc >= 0.99
    assert np.all(np.abs(strong.coef_[1:]) < 1e-3)
    assert strong.coef_[0] > 0.1
    assert elapsed < 10.0
    report(
        "optimizer",
        f"acc {acc:.3f}, informative weight {strong.coef_[0]:.2f}, "
        f"max noise |w| {np.abs(strong.coef_[1:]).max():.1e}, {elapsed:.2f}s",
    )


def test_c06_iou_pixel_oracle():
    """Analytic IoU vs pixel-counting oracle on 1000 integer boxes in 64x64."""
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(1000):
        ax, ay, bx, by = rng.integers(0, 60, size=4)
        aw, ah, bw, bh = rng.integers(1, 64, size=4)
        a = (int(ax), int(ay), int(min(aw, 64 - ax)), int(min(ah, 64 - ay)))
        b = (int(bx), int(by), int(min(bw, 64 - bx)), int(min(bh, 64 - by)))
        xs = np.arange(64)
        in_ax = (xs >= a[0]) & (xs < a[0] + a[2])
        in_bx = (xs >= b[0]) & (xs < b[0] + b[2])
        in_ay = (xs >= a[1]) & (xs < a[1] + a[3])
        in_by = (xs >= b[1]) & (xs < b[1] + b[3])
        count_a = in_ax.sum() * in_ay.sum()
        count_b = in_bx.sum() * in_by.sum()
        count_i = (in_ax & in_bx).sum() * (in_ay & in_by).sum()
        union = count_a + count_b - count_i
        expected = count_i / union if union else 0.0
        worst = max(worst, abs(iou(a, b) - expected))
    assert worst <= 2e-3
    report("iou oracle", f"max deviation {worst:.2e} over 1000 boxes")


def test_c07_metric_oracles():
    """acc/mrr/arc equal a brute-force reference on 500 random rank lists."""
    rng = np.random.default_rng(707)
    for _ in range(500):
        n = int(rng.integers(1, 30))
        entries = []
        for _ in range(n):
            total = int(rng.integers(1, 9))
            known = int(rng.integers(0, total + 1))
            rank = None if known == 0 else int(rng.integers(1, 12))
            entries.append((rank, known, total))
        got = summarize([ExprOutcome(r, k, t) for r, k, t in entries], n)
        acc = sum(1 for r, _, _ in entries if r == 1) / n
        mrr = sum(1.0 / r if r else 0.0 for r, _, _ in entries) / n
        arc = sum(k / t for _, k, t in entries) / n
        assert got.acc == acc and got.mrr == mrr and got.arc == arc
    ranks_124 = summarize(
        [ExprOutcome(r, 1, 1) for r in (1, 2, 4)], 3
    )
    assert ranks_124.mrr == pytest.approx(0.5833333333333334, abs=1e-15)
    report("metric oracles", "500 rank lists exact; mrr(1,2,4)=0.583333...")


ACCEPTANCE_WORLD = SynthConfig(
    n_scenes=2500,  # 2000 train / 500 test at the 0.8/0.2 split
    k=5,
    dim_visual=32,
    noise_sigma=0.1,
    seed=42,
)


def test_c08_end_to_end_synthetic():
    """Full pipeline on the synthetic world: accuracy, baselines, ablation."""
    t0 = time.monotonic()
    corpus, table, gold = generate(ACCEPTANCE_WORLD)
    train_scenes = {e.image_id for e in corpus.exprs if e.split == "train"}
    test_scenes = {e.image_id for e in corpus.exprs if e.split == "test"}
    assert len(train_scenes) == 2000 and len(test_scenes) == 500

    features = FeatureIndex(corpus, table)
    vocabulary = Vocabulary.from_corpus(corpus, min_count=40)
    model = train_all(corpus, vocabulary, features, TrainingConfig(seed=42))
    assert not model.failures

    full = evaluate_gold(model, corpus, features, "test")
    rnd = baseline_random(corpus, "test", seed=42)
    largest = baseline_largest(corpus, "test")
    positional = ablate(model, corpus, features, "positional", "test")
    elapsed = time.monotonic() - t0

    assert full.acc >= 0.85
    assert abs(rnd - 0.20) <= 0.04
    assert 0.0 <= largest <= 1.0  # reported alongside the headline numbers
    assert positional.acc - rnd >= 0.15
    assert elapsed < 300.0

    # qualitative check: short expressions fare at least as well as the longest
    from wac.evaluation import accuracy_by_length

    buckets = accuracy_by_length(model, corpus, features, "test")
    by_len = {b.length: b for b in buckets}
    shortest, longest = min(by_len), max(by_len)
    assert by_len[shortest].accuracy + 0.02 >= by_len[longest].accuracy
    assert abs(sum(b.fraction for b in buckets) - 1.0) <= 1e-9

    report(
        "end-to-end synthetic",
        f"acc {full.acc:.3f}, random {rnd:.3f}, largest {largest:.3f}, "
        f"positional-only {positional.acc:.3f}, "
        f"len-{shortest} acc {by_len[shortest].accuracy:.2f} vs "
        f"len-{longest} {by_len[longest].accuracy:.2f}, {elapsed:.0f}s",
    )


def _hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_c09_training_determinism_across_jobs(tmp_path):
    """CLI train with --jobs 1 vs --jobs 8 yields byte-identical model files."""
    world = tmp_path / "world"
    assert main(["synth", "--scenes", "300", "--seed", "12", "--out", str(world)]) == 0
    digests = []
    for run, jobs in (("a", "1"), ("b", "8"), ("c", "1")):
        model = tmp_path / run / "model.json"
        code = main(
            [
                "train",
                "--data",
                str(world),
                "--out",
                str(model),
                "--seed",
                "12",
                "--jobs",
                jobs,
            ]
        )
        assert code == 0
        digests.append((_hash(model), _hash(model.parent / "model.weights.f64")))
    assert digests[0] == digests[1] == digests[2]
    report("determinism", f"manifest sha {digests[0][0][:12]}..., jobs 1 == jobs 8")


def test_c10_relational_filter_share():
    """100 expressions, exactly 17 relational -> NR evaluation pct_tst = 0.83."""
    relational_texts = [
        "ball not red",
        "cup under the table",
        "thing next to the lamp",
        "box behind the chair",
        "toy between the shoes",
        "cat above the shelf",
        "bag below the window",
        "mug ontop of the stack",
        "bike left of the door",
        "car right of the tree",
        "sign in front of the wall",
        "book underneath the couch",
        "plant in the middle of the room",
        "dog not brown",
        "shoe under the bench",
        "hat next to the scarf",
        "bowl above the sink",
    ]
    plain_texts = [f"object number {i}" for i in range(83)]
    assert len(relational_texts) == 17
    texts = relational_texts + plain_texts
    assert sum(bool(is_relational(tokenize(t))) for t in texts) == 17

    images, regions, exprs = {}, {}, []
    for i, text in enumerate(texts):
        image_id = f"im{i}"
        images[image_id] = ImageRecord(image_id, 100, 100)
        regions[(image_id, "r")] = RegionRecord(image_id, "r", 0.0, 0.0, 50.0, 50.0)
        exprs.append(RefExpr(image_id, "r", text, tuple(tokenize(text)), "test"))
    corpus = Corpus(images, regions, exprs)
    keys = sorted(corpus.regions)
    table = FeatureTable(
        2,
        np.zeros((len(keys), 2), dtype=np.float32),
        {k: i for i, k in enumerate(keys)},
    )
    from wac.trainer import ModelSet

    empty_model = ModelSet(
        classifiers={},
        dim_visual=2,
        mask="full",
        config=TrainingConfig(min_count=1),
        vocabulary=[],
    )
    nr = evaluate_gold(empty_model, corpus, FeatureIndex(corpus, table), "test", True)
    assert nr.n_total == 83
    assert nr.pct_tst == pytest.approx(0.83, abs=1e-12)
    report("relational filter", f"pct_tst {nr.pct_tst:.2f} (83/100 retained)")


REFERIT_ENV = "WAC_REFERIT_DIR"


@pytest.mark.skipif(
    REFERIT_ENV not in os.environ,
    reason=f"optional integration target: set {REFERIT_ENV} to a directory with "
    "images/regions/expressions JSONL + a 1024-dim feature manifest (see README)",
)
def test_c11_real_data_integration():
    """Full-testset accuracy 0.65 +- 0.05 and NR 0.68 +- 0.05 on user data."""
    data_dir = os.environ[REFERIT_ENV]
    from wac.corpus import load_corpus
    from wac.features import load_feature_table

    corpus = load_corpus(
        os.path.join(data_dir, "images.jsonl"),
        os.path.join(data_dir, "regions.jsonl"),
        os.path.join(data_dir, "expressions.jsonl"),
    )
    table = load_feature_table(os.path.join(data_dir, "features.json"))
    features = FeatureIndex(corpus, table, cache=False)
    vocabulary = Vocabulary.from_corpus(corpus, min_count=40)
    model = train_all(corpus, vocabulary, features, TrainingConfig(seed=42), jobs=8)
    full = evaluate_gold(model, corpus, features, "test", False)
    nr = evaluate_gold(model, corpus, features, "test", True)
    assert abs(full.acc - 0.65) <= 0.05
    assert abs(nr.acc - 0.68) <= 0.05
    report("real-data integration", f"full acc {full.acc:.3f}, NR acc {nr.acc:.3f}")
