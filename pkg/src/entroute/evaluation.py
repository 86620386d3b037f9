"""mAP@50 with area-bucketed AP (small/medium/large) over synthetic scenes.

AP uses 101-point interpolated precision per class, averaged over classes
that have ground truth. Matching is greedy per scene and class: predictions
in score-descending order each claim the unmatched ground-truth box of
highest IoU (>= 0.5).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fusion import Detection
from .geometry import iou
from .scenes import SyntheticScene

IOU_THRESHOLD = 0.5
AREA_BUCKETS = {"s": (0.0, 32.0 ** 2), "m": (32.0 ** 2, 96.0 ** 2),
                "l": (96.0 ** 2, float("inf"))}


@dataclass
class EvalResult:
    map50: float
    ap_s: float
    ap_m: float
    ap_l: float
    per_class: dict[int, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"map50": self.map50, "ap_s": self.ap_s, "ap_m": self.ap_m,
                "ap_l": self.ap_l,
                "per_class": {str(k): v for k, v in self.per_class.items()}}


def _bucket_of(area: float) -> str:
    for name, (lo, hi) in AREA_BUCKETS.items():
        if lo <= area < hi:
            return name
    return "l"


def average_precision(records: list[tuple[float, bool]], n_gt: int) -> float:
    """101-point interpolated AP from (score, is_tp) records."""
    if n_gt == 0:
        return 0.0
    if not records:
        return 0.0
    tps = np.array([tp for _, tp in records], dtype=np.float64)
    tp_cum = np.cumsum(tps)
    fp_cum = np.cumsum(1.0 - tps)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1e-12)
    # precision envelope: best precision at or beyond each recall level
    levels = np.linspace(0.0, 1.0, 101)
    ap = 0.0
    for r in levels:
        mask = recall >= r - 1e-12
        ap += float(precision[mask].max()) if mask.any() else 0.0
    return ap / 101.0


def _match_scene(preds: list[Detection], gts: list, order_base: int):
    """Greedy match; returns per-prediction (score, sort_key, gt_index|-1)."""
    ordered = sorted(range(len(preds)),
                     key=lambda i: (-preds[i].score, i))
    taken = [False] * len(gts)
    out = []
    for rank, i in enumerate(ordered):
        p = preds[i]
        best_j, best_v = -1, 0.0
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            v = iou(p.box, g.box)
            if v >= IOU_THRESHOLD and v > best_v:
                best_j, best_v = j, v
        if best_j >= 0:
            taken[best_j] = True
        out.append((p.score, (order_base, rank), best_j, p))
    return out


def evaluate_map(predictions: dict[object, list[Detection]],
                 ground_truth: dict[object, SyntheticScene]) -> EvalResult:
    if set(predictions) != set(ground_truth):
        raise ValueError("prediction and ground-truth scene ids differ")
    class_ids = sorted({o.class_id for sc in ground_truth.values()
                        for o in sc.objects})
    per_class: dict[int, float] = {}
    bucket_aps: dict[str, list[float]] = {b: [] for b in AREA_BUCKETS}
    scene_keys = sorted(ground_truth, key=str)
    for cid in class_ids:
        records: list[tuple[float, tuple, str]] = []  # score, key, outcome
        n_gt = 0
        bucket_gt = {b: 0 for b in AREA_BUCKETS}
        for si, key in enumerate(scene_keys):
            gts = [o for o in ground_truth[key].objects if o.class_id == cid]
            preds = [d for d in predictions[key] if d.class_id == cid]
            n_gt += len(gts)
            for g in gts:
                bucket_gt[_bucket_of(g.box.area)] += 1
            for score, order, gt_j, p in _match_scene(preds, gts, si):
                bucket = (_bucket_of(gts[gt_j].box.area) if gt_j >= 0
                          else _bucket_of(p.box.area))
                records.append((score, order, "tp" if gt_j >= 0 else "fp",
                                bucket))
        records.sort(key=lambda r: (-r[0], r[1]))
        per_class[cid] = average_precision(
            [(s, outcome == "tp") for s, _, outcome, _ in records], n_gt)
        for b in AREA_BUCKETS:
            if bucket_gt[b] == 0:
                continue
            # in-bucket TPs count; FPs count in the bucket of their own area;
            # predictions matched to out-of-bucket GT are ignored
            sub = [(s, outcome == "tp") for s, _, outcome, bk in records
                   if bk == b]
            bucket_aps[b].append(average_precision(sub, bucket_gt[b]))

    def mean_or_zero(vals):
        return float(np.mean(vals)) if vals else 0.0

    return EvalResult(
        map50=mean_or_zero(list(per_class.values())),
        ap_s=mean_or_zero(bucket_aps["s"]),
        ap_m=mean_or_zero(bucket_aps["m"]),
        ap_l=mean_or_zero(bucket_aps["l"]),
        per_class=per_class,
    )
