"""Crop back-projection, entropy-aware score boost, and weighted fusion of
refined detections with the full-image pass.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Optional

from .geometry import Box, ScoredBox, iou, nms


@dataclass
class FusionConfig:
    alpha: float = 0.7
    final_nms_iou: float = 0.5
    confidence_threshold: float = 0.3
    boost_enabled: bool = True
    fusion_enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1]: {self.alpha}")

    @classmethod
    def from_json_dict(cls, d: dict) -> "FusionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown FusionConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class CropDetection:
    """Detection in crop-normalized center/size coordinates."""
    cx: float
    cy: float
    w: float
    h: float
    score: float
    class_id: int
    source_window: int = -1

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} outside [0,1]: {v}")


@dataclass
class Detection:
    """Image-frame detection plus provenance for reports."""
    box: Box
    score: float
    class_id: int
    origin: str = "full"          # "full" | "crop"
    window: Optional[int] = None  # source window index for crop detections

    def scored(self) -> ScoredBox:
        return ScoredBox(self.box, self.score, self.class_id)

    def to_json_dict(self) -> dict:
        return {"box": self.box.as_list(), "score": self.score,
                "class": self.class_id, "origin": self.origin,
                "window": self.window}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Detection":
        return cls(Box(*d["box"]), d["score"], d["class"],
                   d.get("origin", "full"), d.get("window"))


def detections_to_json(dets: list[Detection]) -> str:
    return json.dumps([d.to_json_dict() for d in dets])


def detections_from_json(text: str) -> list[Detection]:
    return [Detection.from_json_dict(d) for d in json.loads(text)]


def back_project(d: CropDetection, window: Box,
                 image_size: tuple[int, int]) -> ScoredBox:
    """Crop-normalized cxcywh -> image-frame xyxy, clipped to the image."""
    if window.area <= 0.0:
        raise ValueError(f"degenerate window {window}")
    h_img, w_img = image_size
    x1 = (d.cx - d.w / 2.0) * window.width + window.x1
    x2 = (d.cx + d.w / 2.0) * window.width + window.x1
    y1 = (d.cy - d.h / 2.0) * window.height + window.y1
    y2 = (d.cy + d.h / 2.0) * window.height + window.y1
    box = Box(x1, y1, x2, y2).clip(w_img, h_img)
    return ScoredBox(box, d.score, d.class_id)


def boost_score(s_r: float, h_s_w: float, enabled: bool = True) -> float:
    """Mild entropy-aware boost: s_r * (1 + 0.2*(h_s_w - 0.7)), clamped."""
    if not enabled:
        return s_r
    boosted = s_r * (1.0 + 0.2 * (h_s_w - 0.7))
    return min(max(boosted, 0.0), 1.0)


def fuse_detections(original: list[Detection], refined: list[Detection],
                    cfg: FusionConfig) -> list[Detection]:
    """Merge refined crops with the full-image pass.

    Each refined box pairs with the highest-IoU unused same-class original
    above the NMS threshold; the pair collapses to its higher-scoring box
    carrying the fused score. Then class-wise NMS and confidence filtering
    over the combined pool (filter last, so fusion can rescue a refined box).
    """
    pool: list[Detection] = list(original)
    used_originals: set[int] = set()
    if cfg.fusion_enabled:
        pool = []
        merged_refined: list[Detection] = []
        for r in sorted(refined, key=lambda d: -d.score):
            best_i, best_iou = -1, cfg.final_nms_iou
            for i, o in enumerate(original):
                if i in used_originals or o.class_id != r.class_id:
                    continue
                v = iou(o.box, r.box)
                if v > best_iou:
                    best_i, best_iou = i, v
            if best_i < 0:
                merged_refined.append(r)
                continue
            used_originals.add(best_i)
            o = original[best_i]
            s_f = cfg.alpha * o.score + (1.0 - cfg.alpha) * r.score
            winner = o if o.score >= r.score else r
            merged_refined.append(
                Detection(winner.box, s_f, winner.class_id, winner.origin,
                          winner.window))
        pool = [o for i, o in enumerate(original) if i not in used_originals]
        pool.extend(merged_refined)
    else:
        pool = list(original) + list(refined)

    scored = [d.scored() for d in pool]
    survivors = nms(scored, cfg.final_nms_iou, class_aware=True)
    # map survivors back to their provenance records
    by_key = {}
    for d in pool:
        by_key.setdefault((d.box, d.class_id), []).append(d)
    out: list[Detection] = []
    for sb in survivors:
        if sb.score < cfg.confidence_threshold:
            continue
        src = by_key[(sb.box, sb.class_id)][0]
        out.append(Detection(sb.box, sb.score, sb.class_id, src.origin,
                             src.window))
    return out
