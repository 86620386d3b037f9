"""Per-image routing pipeline: base detect -> heatmap -> gate -> window
selection -> crop re-detection -> boost -> fusion.

Selection modes:
  entropy  ambiguity-saliency routing (the main method)
  random   equal-budget control: same gate, same grid, same realized
           budget as the entropy arm, windows drawn uniformly at random
  slices   budget-blind uniform tiling, boost disabled
  none     base detector only
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Optional

from .attention import HeatMap, build_heatmap
from .baselines import SliceConfig, random_selection, uniform_slices
from .bench import ImageTrace
from .detector import DetectionRequest
from .fusion import (CropDetection, Detection, FusionConfig, back_project,
                     boost_score, fuse_detections)
from .routing import (RoutingConfig, WindowCandidate, evaluate_gate,
                      select_candidates)
from .scenes import SyntheticScene

MODES = ("entropy", "random", "slices", "none")


@dataclass
class RouteResult:
    detections: list[Detection]
    trace: ImageTrace
    heatmap: Optional[HeatMap] = None


def _scene_id(ref) -> str:
    if isinstance(ref, SyntheticScene):
        return f"scene:{ref.seed}"
    return str(ref)


def _scene_size(ref) -> tuple[int, int]:
    if not isinstance(ref, SyntheticScene):
        with open(ref) as f:
            ref = SyntheticScene.from_json(f.read())
    return ref.height, ref.width


def _pair_seed(run_seed: int, image_ref) -> int:
    return zlib.crc32(f"{run_seed}:{_scene_id(image_ref)}".encode()) & 0x7FFFFFFF


def _redetect_windows(detector, image_ref, windows: list[WindowCandidate],
                      image_size, boost_enabled: bool,
                      crop_latencies: list[float]) -> list[Detection]:
    refined: list[Detection] = []
    for idx, cand in enumerate(windows):
        resp = detector.detect(DetectionRequest(image_ref, crop=cand.box))
        crop_latencies.append(resp.latency_ms)
        for det in resp.detections:
            if not isinstance(det, CropDetection):
                raise TypeError(f"crop request returned {type(det).__name__}")
            sb = back_project(det, cand.box, image_size)
            score = boost_score(sb.score, cand.h_s, boost_enabled)
            refined.append(Detection(sb.box, score, sb.class_id,
                                     origin="crop", window=idx))
    return refined


def route_image(detector, image_ref, routing_cfg: RoutingConfig,
                fusion_cfg: FusionConfig, mode: str = "entropy",
                run_seed: int = 0,
                slice_cfg: Optional[SliceConfig] = None,
                image_size: Optional[tuple[int, int]] = None) -> RouteResult:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    size = image_size or _scene_size(image_ref)
    want_attention = mode in ("entropy", "random")
    base = detector.detect(DetectionRequest(image_ref,
                                            want_attention=want_attention))
    original = list(base.detections)
    crop_latencies: list[float] = []
    heatmap = None
    selected: list[WindowCandidate] = []
    gate_passed = False
    refined: list[Detection] = []
    boost_enabled = fusion_cfg.boost_enabled

    if mode in ("entropy", "random"):
        heatmap = build_heatmap(base.attention, size)
        gate_passed = evaluate_gate(heatmap, routing_cfg)
        if gate_passed:
            entropy_pick = select_candidates(heatmap, routing_cfg)
            if mode == "entropy":
                selected = entropy_pick
            else:
                # paired control: identical crop budget, random placement
                seed = _pair_seed(run_seed, image_ref)
                selected = random_selection(size, routing_cfg, seed,
                                            hm=heatmap,
                                            count=len(entropy_pick))
    elif mode == "slices":
        tiles = uniform_slices(size, slice_cfg or SliceConfig())
        selected = [WindowCandidate(b, 0.0, 0.0, 0.0, 0.0, i)
                    for i, b in enumerate(tiles)]
        gate_passed = True
        boost_enabled = False  # no entropy signal for uniform tiles

    if selected:
        refined = _redetect_windows(detector, image_ref, selected, size,
                                    boost_enabled, crop_latencies)

    fused = fuse_detections(original, refined, fusion_cfg)
    trace = ImageTrace(
        scene_id=_scene_id(image_ref),
        gate_passed=gate_passed,
        k_selected=len(selected),
        base_latency_ms=base.latency_ms,
        crop_latencies_ms=crop_latencies,
        degenerate_heatmap=bool(heatmap and heatmap.degenerate),
        n_detections=len(fused),
    )
    return RouteResult(fused, trace, heatmap)
