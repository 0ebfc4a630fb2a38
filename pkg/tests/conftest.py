import json
import os

import numpy as np
import pytest

from wac.features import FeatureIndex, FeatureTable
from wac.synthworld import SynthConfig, generate
from wac.trainer import TrainingConfig, train_all
from wac.vocab import Vocabulary


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return str(path)


@pytest.fixture
def corpus_files(tmp_path):
    """Write the standard 3-file fixture: 2 images, 3 regions, 4 expressions."""

    def _write(images=None, regions=None, exprs=None, proposals=None):
        images = images if images is not None else [
            {"image_id": "img1", "width": 100, "height": 100},
            {"image_id": "img2", "width": 200, "height": 150},
        ]
        regions = regions if regions is not None else [
            {"image_id": "img1", "region_id": "r1", "x": 10, "y": 10, "w": 30, "h": 30},
            {"image_id": "img1", "region_id": "r2", "x": 50, "y": 50, "w": 40, "h": 40},
            {"image_id": "img2", "region_id": "r1", "x": 0, "y": 0, "w": 100, "h": 80},
        ]
        exprs = exprs if exprs is not None else [
            {"image_id": "img1", "region_id": "r1", "text": "red ball", "split": "train"},
            {"image_id": "img1", "region_id": "r2", "text": "blue cube", "split": "train"},
            {"image_id": "img2", "region_id": "r1", "text": "the big one", "split": "test"},
            {"image_id": "img1", "region_id": "r1", "text": "red thing", "split": "test"},
        ]
        paths = {
            "images": write_jsonl(tmp_path / "images.jsonl", images),
            "regions": write_jsonl(tmp_path / "regions.jsonl", regions),
            "exprs": write_jsonl(tmp_path / "expressions.jsonl", exprs),
        }
        if proposals is not None:
            paths["proposals"] = write_jsonl(tmp_path / "proposals.jsonl", proposals)
        return paths

    return _write


TINY_WORLD_CONFIG = SynthConfig(
    n_scenes=400,
    k=4,
    colors=("red", "green", "blue"),
    types=("ball", "cube", "cone"),
    dim_visual=16,
    noise_sigma=0.0,
    seed=11,
    exprs_per_scene=2,
)


@pytest.fixture(scope="session")
def tiny_world():
    """A noiseless synthetic world: (corpus, table, gold, features)."""
    corpus, table, gold = generate(TINY_WORLD_CONFIG)
    return corpus, table, gold, FeatureIndex(corpus, table)


@pytest.fixture(scope="session")
def tiny_model(tiny_world):
    """Model trained on the tiny world with default-ish settings."""
    corpus, table, gold, features = tiny_world
    vocabulary = Vocabulary.from_corpus(corpus, min_count=40)
    config = TrainingConfig(seed=7)
    return train_all(corpus, vocabulary, features, config)


def make_feature_table(keys, dim=4, seed=0):
    """Dense random table over the given (image_id, region_id) keys."""
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(len(keys), dim)).astype(np.float32)
    return FeatureTable(dim=dim, rows=rows, index={k: i for i, k in enumerate(keys)})


@pytest.fixture
def seeded_rng():
    return np.random.default_rng(12345)


def _env_flag(name):
    return os.environ.get(name, "")
