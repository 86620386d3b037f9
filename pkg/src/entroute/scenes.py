"""Seeded synthetic scenes with ground truth.

Large objects are placed uniformly; small objects fall in Gaussian
clusters. Rejection sampling keeps ground-truth boxes from overlapping
heavily, so every scene is a clean evaluation target.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, iou

SMALL_SIDE_RANGE = (6.0, 20.0)
LARGE_SIDE_RANGE = (48.0, 96.0)
MAX_GT_IOU = 0.3
MAX_REJECTIONS = 1000
NUM_CLASSES = 3


@dataclass
class SceneObject:
    box: Box
    class_id: int
    side_px: float


@dataclass
class SceneSpec:
    width: int = 640
    height: int = 640
    n_small: int = 12
    n_large: int = 3
    cluster_tightness: float = 0.15  # cluster sd as a fraction of image extent
    n_clusters: int = 2

    def __post_init__(self):
        if self.n_small < 0 or self.n_large < 0:
            raise ValueError("object counts must be nonnegative")
        if not 0.0 < self.cluster_tightness <= 1.0:
            raise ValueError(
                f"cluster_tightness must be in (0,1]: {self.cluster_tightness}")

    def to_json_dict(self) -> dict:
        return {"width": self.width, "height": self.height,
                "n_small": self.n_small, "n_large": self.n_large,
                "cluster_tightness": self.cluster_tightness,
                "n_clusters": self.n_clusters}


@dataclass
class SyntheticScene:
    width: int
    height: int
    objects: list[SceneObject]
    seed: int

    def to_json_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "seed": self.seed,
                "objects": [{"box": o.box.as_list(), "class": o.class_id}
                            for o in self.objects]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d: dict) -> "SyntheticScene":
        objects = []
        for o in d["objects"]:
            box = Box(*o["box"])
            objects.append(SceneObject(box, o["class"],
                                       max(box.width, box.height)))
        return cls(d["width"], d["height"], objects, d.get("seed", 0))

    @classmethod
    def from_json(cls, text: str) -> "SyntheticScene":
        return cls.from_json_dict(json.loads(text))


class SceneGenerationError(RuntimeError):
    pass


def _place(rng, side: float, center_sampler, width: int, height: int,
           placed: list[Box]) -> Box:
    for _ in range(MAX_REJECTIONS):
        cx, cy = center_sampler(rng)
        half = side / 2.0
        if cx - half < 0 or cy - half < 0 or cx + half > width or cy + half > height:
            continue
        box = Box(cx - half, cy - half, cx + half, cy + half)
        if all(iou(box, other) <= MAX_GT_IOU for other in placed):
            return box
    raise SceneGenerationError(
        f"could not place a {side:.0f}px object after {MAX_REJECTIONS} tries")


def generate_scene(spec: SceneSpec, seed: int) -> SyntheticScene:
    """Deterministic per (spec, seed)."""
    rng = np.random.default_rng(seed)
    w, h = spec.width, spec.height
    objects: list[SceneObject] = []
    placed: list[Box] = []

    def uniform_center(r):
        return r.uniform(0, w), r.uniform(0, h)

    for _ in range(spec.n_large):
        side = float(rng.uniform(*LARGE_SIDE_RANGE))
        box = _place(rng, side, uniform_center, w, h, placed)
        placed.append(box)
        objects.append(SceneObject(box, int(rng.integers(NUM_CLASSES)), side))

    n_clusters = max(1, min(spec.n_clusters, spec.n_small)) if spec.n_small else 0
    margin = 0.15
    centers = [(float(rng.uniform(margin * w, (1 - margin) * w)),
                float(rng.uniform(margin * h, (1 - margin) * h)))
               for _ in range(n_clusters)]
    sd = spec.cluster_tightness * max(w, h)
    for i in range(spec.n_small):
        cx0, cy0 = centers[i % n_clusters]

        def cluster_center(r, cx0=cx0, cy0=cy0):
            return r.normal(cx0, sd), r.normal(cy0, sd)

        side = float(rng.uniform(*SMALL_SIDE_RANGE))
        box = _place(rng, side, cluster_center, w, h, placed)
        placed.append(box)
        objects.append(SceneObject(box, int(rng.integers(NUM_CLASSES)), side))
    return SyntheticScene(w, h, objects, seed)


def write_dataset(out_dir, spec: SceneSpec, seeds: list[int]) -> str:
    """Write one scene JSON per seed plus a manifest; returns manifest path."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for seed in seeds:
        scene = generate_scene(spec, seed)
        path = os.path.join(out_dir, f"scene_{seed:06d}.json")
        with open(path, "w") as f:
            f.write(scene.to_json())
        paths.append(path)
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as f:
        json.dump({"scenes": paths, "spec": spec.to_json_dict()}, f, indent=1)
    return manifest_path


def load_dataset(manifest_path) -> list[SyntheticScene]:
    with open(manifest_path) as f:
        manifest = json.load(f)
    scenes = []
    for path in manifest["scenes"]:
        with open(path) as f:
            scenes.append(SyntheticScene.from_json(f.read()))
    return scenes
