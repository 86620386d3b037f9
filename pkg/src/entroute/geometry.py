"""Axis-aligned boxes, IoU, and non-maximum suppression.

Shared by window selection (class-agnostic) and detection fusion
(class-wise). Continuous-coordinate convention: area = (x2-x1)*(y2-y1),
no +1 correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

CLASS_AGNOSTIC = -1


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError("box coordinates must be finite")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"degenerate box ordering: {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def clip(self, w: float, h: float) -> "Box":
        return Box(
            min(max(self.x1, 0.0), w),
            min(max(self.y1, 0.0), h),
            min(max(self.x2, 0.0), w),
            min(max(self.y2, 0.0), h),
        )

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float
    class_id: int = CLASS_AGNOSTIC

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score outside [0,1]: {self.score}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when the union has zero area."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        inter = 0.0
    else:
        inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _nms_key(sb: ScoredBox):
    # Descending score, then a deterministic geometric/class tie-break so the
    # result does not depend on input ordering.
    b = sb.box
    return (-sb.score, b.y1, b.x1, b.x2, b.y2, sb.class_id)


def nms(items: list[ScoredBox], iou_threshold: float = 0.5,
        class_aware: bool = False) -> list[ScoredBox]:
    """Greedy score-descending NMS.

    When class_aware, only boxes of the same class suppress each other.
    Output is sorted by descending score (ties per _nms_key).
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0,1]: {iou_threshold}")
    ordered = sorted(items, key=_nms_key)
    kept: list[ScoredBox] = []
    for cand in ordered:
        ok = True
        for k in kept:
            if class_aware and k.class_id != cand.class_id:
                continue
            if iou(k.box, cand.box) > iou_threshold:
                ok = False
                break
        if ok:
            kept.append(cand)
    return kept
