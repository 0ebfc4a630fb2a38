"""Deterministic synthetic scenes with known latent structure.

Each scene holds k candidate boxes, one per cell of a 3x3 grid, each with a
latent (color, type, cell). The visual block is a fixed seeded random
projection of the color/type one-hot encoding plus Gaussian noise; position
is expressible only through the 7 positional features, so the
positional/visual ablation contrast is meaningful. Every generated
expression names an attribute subset that uniquely identifies its target
within the scene (ambiguous draws are rejected), so a latent-reading oracle
resolves every expression correctly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, ImageRecord, ProposalSet, RefExpr, RegionRecord, split_corpus
from .features import FeatureTable, write_feature_table
from .evaluation import PROPOSAL_KEY

# words a cell satisfies: outer rows/columns get edge words, the middle cell
# its own word; corner cells satisfy two words ("top left")
CELL_WORDS: dict[tuple[int, int], tuple[str, ...]] = {}
for _r in range(3):
    for _c in range(3):
        _words = []
        if _r == 0:
            _words.append("top")
        if _r == 2:
            _words.append("bottom")
        if _c == 0:
            _words.append("left")
        if _c == 2:
            _words.append("right")
        if (_r, _c) == (1, 1):
            _words.append("center")
        CELL_WORDS[(_r, _c)] = tuple(_words)

POSITION_WORDS = frozenset(w for ws in CELL_WORDS.values() for w in ws)

# template slots: "color", "type", "pos" (one cell word), "pos_full" (all
# cell words). Position-bearing templates are deliberately overweighted so
# a positional-only model has signal on a solid share of the corpus.
DEFAULT_TEMPLATES = (
    ("type",),
    ("color", "type"),
    ("pos", "type"),
    ("pos", "type"),
    ("pos", "color", "type"),
    ("pos_full", "color", "type"),
)


@dataclass(frozen=True)
class SynthConfig:
    n_scenes: int = 100
    k: int = 5
    colors: tuple[str, ...] = ("red", "green", "blue", "yellow", "black", "white")
    types: tuple[str, ...] = ("ball", "cube", "cone", "ring", "star", "disk")
    dim_visual: int = 32
    noise_sigma: float = 0.1
    seed: int = 0
    exprs_per_scene: int = 2
    templates: tuple[tuple[str, ...], ...] = DEFAULT_TEMPLATES
    split_ratios: tuple[float, float, float] = (0.8, 0.0, 0.2)
    proposals_per_scene: int = 0
    max_expr_attempts: int = 24
    max_scene_redraws: int = 60

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.k > 9:
            raise ValueError("k cannot exceed the 9 grid cells")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    def word_inventory(self) -> set[str]:
        return set(self.colors) | set(self.types) | set(POSITION_WORDS)


@dataclass(frozen=True)
class CandidateLatent:
    color: str
    type: str
    cell: tuple[int, int]

    def satisfies(self, token: str) -> bool:
        return token == self.color or token == self.type or token in CELL_WORDS[self.cell]


@dataclass
class SynthGold:
    """Latents per scene plus the target of every generated expression."""

    latents: dict[str, dict[str, CandidateLatent]]  # image_id -> region_id -> latent
    targets: list[tuple[str, str]]  # aligned with corpus.exprs: (image_id, region_id)
    scene_redraws: int = 0

    def to_json(self) -> dict:
        return {
            "scene_redraws": self.scene_redraws,
            "targets": [{"image_id": i, "region_id": r} for i, r in self.targets],
            "latents": {
                image_id: {
                    rid: {"color": la.color, "type": la.type, "cell": list(la.cell)}
                    for rid, la in sorted(cands.items())
                }
                for image_id, cands in sorted(self.latents.items())
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SynthGold":
        latents = {
            image_id: {
                rid: CandidateLatent(d["color"], d["type"], tuple(d["cell"]))
                for rid, d in cands.items()
            }
            for image_id, cands in obj["latents"].items()
        }
        targets = [(t["image_id"], t["region_id"]) for t in obj["targets"]]
        return cls(latents, targets, obj.get("scene_redraws", 0))


def oracle_resolve(tokens, scene_latents: dict[str, CandidateLatent]) -> str | None:
    """Brute-force resolution from latents: the candidate satisfying all tokens.

    Returns None when no candidate (or more than one) satisfies the tokens;
    generated expressions are unique by construction, so the oracle is exact
    on them.
    """
    matches = [
        rid
        for rid, latent in scene_latents.items()
        if all(latent.satisfies(t) for t in tokens)
    ]
    return matches[0] if len(matches) == 1 else None


def _draw_scene(cfg: SynthConfig, rng: np.random.Generator):
    """Candidates of one scene: latents + integer boxes inside their cells."""
    width = int(rng.integers(240, 400))
    height = int(rng.integers(240, 400))
    cells = [divmod(int(c), 3) for c in rng.choice(9, size=cfg.k, replace=False)]
    latents = []
    boxes = []
    for (row, col) in cells:
        color = cfg.colors[rng.integers(0, len(cfg.colors))]
        type_ = cfg.types[rng.integers(0, len(cfg.types))]
        latents.append(CandidateLatent(color, type_, (row, col)))
        cell_w, cell_h = width / 3.0, height / 3.0
        bw = max(8, int(rng.uniform(0.35, 0.85) * cell_w))
        bh = max(8, int(rng.uniform(0.35, 0.85) * cell_h))
        bx = int(col * cell_w + rng.uniform(0, cell_w - bw))
        by = int(row * cell_h + rng.uniform(0, cell_h - bh))
        boxes.append((bx, by, bw, bh))
    return width, height, latents, boxes


def _draw_expression(cfg, rng, latents, target_idx: int) -> list[str] | None:
    """Instantiate templates until the token set is unique in the scene."""
    target = latents[target_idx]
    for _ in range(cfg.max_expr_attempts):
        template = cfg.templates[rng.integers(0, len(cfg.templates))]
        tokens: list[str] = []
        for slot in template:
            if slot == "color":
                tokens.append(target.color)
            elif slot == "type":
                tokens.append(target.type)
            elif slot == "pos":
                words = CELL_WORDS[target.cell]
                tokens.append(words[rng.integers(0, len(words))])
            elif slot == "pos_full":
                tokens.extend(CELL_WORDS[target.cell])
            else:
                raise ValueError(f"unknown template slot {slot!r}")
        others = [la for i, la in enumerate(latents) if i != target_idx]
        if not any(all(o.satisfies(t) for t in tokens) for o in others):
            return tokens
    return None


def generate(cfg: SynthConfig) -> tuple[Corpus, FeatureTable, SynthGold]:
    """Generate a split-tagged corpus, feature table, and gold latents.

    Fully deterministic given cfg.seed (single-threaded by design).
    """
    rng = np.random.default_rng(cfg.seed)
    proj_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xFEA7]))
    n_attrs = len(cfg.colors) + len(cfg.types)
    projection = proj_rng.normal(
        0.0, 1.0 / np.sqrt(cfg.dim_visual), size=(cfg.dim_visual, n_attrs)
    )

    images: dict[str, ImageRecord] = {}
    regions: dict[tuple[str, str], RegionRecord] = {}
    exprs: list[RefExpr] = []
    proposals: dict[str, ProposalSet] = {}
    latents_by_image: dict[str, dict[str, CandidateLatent]] = {}
    targets: list[tuple[str, str]] = []
    feature_rows: list[np.ndarray] = []
    feature_index: dict[tuple[str, str], int] = {}
    scene_redraws = 0

    def visual_vector(latent: CandidateLatent) -> np.ndarray:
        onehot = np.zeros(n_attrs)
        onehot[cfg.colors.index(latent.color)] = 1.0
        onehot[len(cfg.colors) + cfg.types.index(latent.type)] = 1.0
        vec = projection @ onehot
        if cfg.noise_sigma > 0:
            vec = vec + rng.normal(0.0, cfg.noise_sigma, size=cfg.dim_visual)
        return vec.astype(np.float32)

    for scene_idx in range(cfg.n_scenes):
        image_id = f"scene{scene_idx:05d}"
        for attempt in range(cfg.max_scene_redraws):
            width, height, latents, boxes = _draw_scene(cfg, rng)
            scene_exprs = []
            ok = True
            for _ in range(cfg.exprs_per_scene):
                target_idx = int(rng.integers(0, cfg.k))
                tokens = _draw_expression(cfg, rng, latents, target_idx)
                if tokens is None:
                    ok = False
                    break
                scene_exprs.append((target_idx, tokens))
            if ok:
                break
            scene_redraws += 1
        else:
            raise RuntimeError(
                f"could not generate an unambiguous scene after "
                f"{cfg.max_scene_redraws} redraws; enlarge the attribute inventory"
            )

        images[image_id] = ImageRecord(image_id, width, height)
        latents_by_image[image_id] = {}
        for j, (latent, box) in enumerate(zip(latents, boxes)):
            region_id = f"r{j}"
            regions[(image_id, region_id)] = RegionRecord(
                image_id, region_id, float(box[0]), float(box[1]), float(box[2]), float(box[3])
            )
            latents_by_image[image_id][region_id] = latent
            feature_index[(image_id, region_id)] = len(feature_rows)
            feature_rows.append(visual_vector(latent))
        for target_idx, tokens in scene_exprs:
            region_id = f"r{target_idx}"
            exprs.append(
                RefExpr(image_id, region_id, " ".join(tokens), tuple(tokens), "train")
            )
            targets.append((image_id, region_id))

        if cfg.proposals_per_scene > 0:
            prop_boxes = _draw_proposals(cfg, rng, width, height, boxes)
            proposals[image_id] = ProposalSet(image_id, tuple(b for b, _ in prop_boxes))
            for j, (box, source) in enumerate(prop_boxes):
                key = (image_id, PROPOSAL_KEY.format(index=j))
                feature_index[key] = len(feature_rows)
                if source is None:
                    row = rng.normal(0.0, 1.0, size=cfg.dim_visual).astype(np.float32)
                else:
                    row = visual_vector(latents[source])
                feature_rows.append(row)

    table = FeatureTable(
        dim=cfg.dim_visual,
        rows=np.vstack(feature_rows) if feature_rows else np.zeros((0, cfg.dim_visual), "f4"),
        index=feature_index,
    )
    corpus = Corpus(images, regions, exprs, proposals)
    corpus = split_corpus(corpus, cfg.split_ratios, cfg.seed)
    gold = SynthGold(latents_by_image, targets, scene_redraws)
    return corpus, table, gold


def _draw_proposals(cfg, rng, width, height, gold_boxes):
    """Jittered copies of the gold boxes plus random background boxes.

    Returns [(box, source_candidate_or_None)] in synthetic score order.
    """
    entries = []
    for j, (x, y, w, h) in enumerate(gold_boxes):
        dx = rng.uniform(-0.12, 0.12) * w
        dy = rng.uniform(-0.12, 0.12) * h
        sw = w * rng.uniform(0.85, 1.15)
        sh = h * rng.uniform(0.85, 1.15)
        # half-pixel margin keeps float sums strictly inside the image
        bx = min(max(0.0, x + dx), width - 5.0)
        by = min(max(0.0, y + dy), height - 5.0)
        bw = min(max(4.0, sw), width - bx - 0.5)
        bh = min(max(4.0, sh), height - by - 0.5)
        score = 1.0 + rng.uniform(0.0, 0.5)
        entries.append((score, (bx, by, bw, bh), j))
    for _ in range(max(0, cfg.proposals_per_scene - len(gold_boxes))):
        bw = rng.uniform(12, width / 2)
        bh = rng.uniform(12, height / 2)
        bx = rng.uniform(0, width - bw)
        by = rng.uniform(0, height - bh)
        score = rng.uniform(0.0, 1.2)
        entries.append((score, (bx, by, bw, bh), None))
    entries.sort(key=lambda e: -e[0])
    return [(box, source) for _, box, source in entries]


def write_world(
    corpus: Corpus, table: FeatureTable, gold: SynthGold, out_dir
) -> dict[str, str]:
    """Write the corpus JSONL files, the feature table, and gold.json."""
    from .corpus import save_corpus

    os.makedirs(out_dir, exist_ok=True)
    paths = save_corpus(corpus, out_dir)
    manifest_path = os.path.join(out_dir, "features.json")
    write_feature_table(table, manifest_path, "features.f32")
    paths["features"] = manifest_path
    gold_path = os.path.join(out_dir, "gold.json")
    with open(gold_path, "w", encoding="utf-8") as fh:
        json.dump(gold.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["gold"] = gold_path
    return paths
