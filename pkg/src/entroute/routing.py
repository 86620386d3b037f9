"""Early-exit gate, multi-scale window generation, window scoring, and
budgeted candidate selection on the attention heatmap.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np

from .attention import EPSILON, HeatMap
from .geometry import Box, iou

SCORING_VARIANTS = ("product", "mean_only", "entropy_only",
                    "gamma_sharpened", "soft_gated")


@dataclass
class RoutingConfig:
    tau_g: float = 0.7
    tau_w: float = 0.7
    mu: float = 0.3
    scales: tuple[float, ...] = (0.25, 0.5, 0.75)
    stride_fraction: float = 0.5
    min_window_px: int = 64
    top_k: int = 5
    window_nms_iou: float = 0.5
    scoring_variant: str = "product"
    gamma: float = 1.0
    soft_k: float = 10.0

    def __post_init__(self):
        for name in ("tau_g", "tau_w", "mu"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1]: {v}")
        self.scales = tuple(sorted(float(s) for s in self.scales))
        if any(not 0.0 < s < 1.0 for s in self.scales):
            raise ValueError(f"scales must lie in (0,1): {self.scales}")
        if not 0.0 < self.stride_fraction <= 1.0:
            raise ValueError(f"stride_fraction must be in (0,1]: {self.stride_fraction}")
        if self.top_k < 0:
            raise ValueError(f"top_k must be >= 0: {self.top_k}")
        if self.scoring_variant not in SCORING_VARIANTS:
            raise ValueError(f"unknown scoring variant: {self.scoring_variant}")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["scales"] = list(self.scales)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "RoutingConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown RoutingConfig keys: {sorted(unknown)}")
        d = dict(d)
        if "scales" in d:
            d["scales"] = tuple(d["scales"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RoutingConfig":
        return cls.from_json_dict(json.loads(text))


@dataclass
class WindowCandidate:
    box: Box
    scale: float
    m: float       # mean attention in the window
    h_s: float     # window-level normalized entropy
    sigma: float   # selection score
    order: int = 0  # emission index in generate_windows (tie-break)


def evaluate_gate(hm: HeatMap, cfg: RoutingConfig) -> bool:
    """Proceed to refinement iff the image is both ambiguous and evidenced."""
    return hm.sae_global >= cfg.tau_g and hm.mean_h >= cfg.mu


def _axis_positions(extent: int, size: int, stride: float) -> list[int]:
    positions = []
    k = 0
    while True:
        pos = int(math.floor(k * stride))
        if pos + size > extent:
            break
        positions.append(pos)
        k += 1
    flush = extent - size
    if positions and positions[-1] != flush:
        positions.append(flush)
    return positions


def generate_windows(image_size: tuple[int, int],
                     cfg: RoutingConfig) -> list[tuple[Box, float]]:
    """Sliding windows over the image, scale ascending then row-major.

    Window sizes floor to integer pixels; a scale is skipped entirely if
    either dimension would fall below min_window_px. A flush window at
    extent-size is appended per axis when the stepped grid stops short.
    """
    h_img, w_img = image_size
    if h_img < 1 or w_img < 1:
        raise ValueError(f"bad image size {image_size}")
    out: list[tuple[Box, float]] = []
    for s in cfg.scales:
        ww = int(math.floor(s * w_img))
        wh = int(math.floor(s * h_img))
        if ww < cfg.min_window_px or wh < cfg.min_window_px:
            continue
        sx = max(1.0, cfg.stride_fraction * ww)
        sy = max(1.0, cfg.stride_fraction * wh)
        for y in _axis_positions(h_img, wh, sy):
            for x in _axis_positions(w_img, ww, sx):
                out.append((Box(x, y, x + ww, y + wh), s))
    return out


def window_stats(hm: HeatMap, box: Box) -> tuple[float, float]:
    """Mean attention and normalized entropy of a window's pixels.

    The window's pixel values are smoothed and normalized to a distribution;
    the entropy normalizer is log(pixel count of that window) so scores stay
    comparable across scales.
    """
    x1, y1 = int(round(box.x1)), int(round(box.y1))
    x2, y2 = int(round(box.x2)), int(round(box.y2))
    patch = hm.h[y1:y2, x1:x2]
    n = patch.size
    if n < 2:
        raise ValueError(f"window {box} has fewer than 2 pixels")
    m = float(patch.mean())
    shifted = patch + EPSILON
    total = float(shifted.sum())
    # -sum(p log p) with p = shifted/total, folded to avoid forming p
    ent = math.log(total) - float(np.sum(shifted * np.log(shifted))) / total
    h_s = ent / math.log(n)
    return m, min(max(h_s, 0.0), 1.0)


def score_window(m: float, h_s: float, cfg: RoutingConfig) -> float:
    v = cfg.scoring_variant
    if v == "product":
        return m * h_s
    if v == "mean_only":
        return m
    if v == "entropy_only":
        return h_s
    if v == "gamma_sharpened":
        return (m ** cfg.gamma) * h_s
    if v == "soft_gated":
        phi = 1.0 / (1.0 + math.exp(-cfg.soft_k * (m - cfg.mu)))
        return phi * h_s
    raise ValueError(f"unknown scoring variant: {v}")


def select_candidates(hm: HeatMap, cfg: RoutingConfig) -> list[WindowCandidate]:
    """Filter, score, class-agnostic NMS on sigma, then top-K.

    The caller is responsible for the global gate (or for bypassing it in
    the random-selection ablation). Ties break by window emission order.
    """
    cands: list[WindowCandidate] = []
    for order, (box, scale) in enumerate(generate_windows(hm.shape, cfg)):
        m, h_s = window_stats(hm, box)
        if m < cfg.mu or h_s < cfg.tau_w:
            continue
        sigma = score_window(m, h_s, cfg)
        cands.append(WindowCandidate(box, scale, m, h_s, sigma, order))
    # stable sort keeps emission order among equal sigmas
    cands.sort(key=lambda c: (-c.sigma, c.order))
    kept: list[WindowCandidate] = []
    for cand in cands:
        if len(kept) >= cfg.top_k:
            break
        if all(iou(k.box, cand.box) <= cfg.window_nms_iou for k in kept):
            kept.append(cand)
    return kept
