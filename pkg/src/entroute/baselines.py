"""Equal-budget random window selection and uniform slicing baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attention import HeatMap
from .geometry import Box
from .routing import (RoutingConfig, WindowCandidate, generate_windows,
                      window_stats)


@dataclass
class SliceConfig:
    tile_fraction: float = 0.5
    overlap_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.tile_fraction <= 1.0:
            raise ValueError(f"tile_fraction must be in (0,1]: {self.tile_fraction}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError(
                f"overlap_fraction must be in [0,1): {self.overlap_fraction}")

    def to_json_dict(self) -> dict:
        return {"tile_fraction": self.tile_fraction,
                "overlap_fraction": self.overlap_fraction}

    @classmethod
    def from_json_dict(cls, d: dict) -> "SliceConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SliceConfig keys: {sorted(unknown)}")
        return cls(**d)


def random_selection(image_size: tuple[int, int], cfg: RoutingConfig, seed: int,
                     hm: Optional[HeatMap] = None,
                     count: Optional[int] = None) -> list[WindowCandidate]:
    """Uniform sample without replacement from the same window grid.

    count defaults to the top-K cap; the paired ablation passes the entropy
    arm's realized budget instead so both arms spend identical crops. Window
    stats are attached for reporting when a heatmap is given, but play no
    role in the selection.
    """
    grid = generate_windows(image_size, cfg)
    k = cfg.top_k if count is None else count
    k = min(k, len(grid))
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(len(grid), size=k, replace=False)) if k else []
    out = []
    for i in idx:
        box, scale = grid[i]
        if hm is not None:
            m, h_s = window_stats(hm, box)
        else:
            m, h_s = 0.0, 0.0
        out.append(WindowCandidate(box, scale, m, h_s, sigma=0.0, order=int(i)))
    return out


def uniform_slices(image_size: tuple[int, int], cfg: SliceConfig) -> list[Box]:
    """Regular overlapping tiling covering the whole image (budget-blind)."""
    h_img, w_img = image_size
    tw = int(math.floor(cfg.tile_fraction * w_img))
    th = int(math.floor(cfg.tile_fraction * h_img))
    tw, th = max(tw, 1), max(th, 1)
    sx = max(1.0, (1.0 - cfg.overlap_fraction) * tw)
    sy = max(1.0, (1.0 - cfg.overlap_fraction) * th)

    def positions(extent: int, size: int, stride: float) -> list[int]:
        pos, k = [], 0
        while True:
            p = int(math.floor(k * stride))
            if p + size > extent:
                break
            pos.append(p)
            k += 1
        flush = extent - size
        if pos and pos[-1] != flush:
            pos.append(flush)
        return pos

    return [Box(x, y, x + tw, y + th)
            for y in positions(h_img, th, sy)
            for x in positions(w_img, tw, sx)]
