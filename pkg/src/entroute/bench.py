"""Cost model, routing reports, and the end-to-end FPS benchmark routine."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence


def cost_model(k: int, r: float) -> float:
    """Worst-case total cost factor: 1 + K*r full-image-pass equivalents."""
    if k < 0:
        raise ValueError(f"K must be >= 0: {k}")
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must be in (0,1): {r}")
    return 1.0 + k * r


@dataclass
class ImageTrace:
    scene_id: str
    gate_passed: bool
    k_selected: int
    base_latency_ms: float
    crop_latencies_ms: list[float] = field(default_factory=list)
    degenerate_heatmap: bool = False
    n_detections: int = 0

    @property
    def total_latency_ms(self) -> float:
        return self.base_latency_ms + sum(self.crop_latencies_ms)


@dataclass
class RoutingReport:
    n_images: int
    gate_pass_rate: float
    mean_k_selected: float
    mean_crop_ratio: float        # r-bar: mean crop latency / base latency
    predicted_cost_factor: float  # 1 + K * r-bar (worst case)
    measured_cost_factor: float
    cost_bound_satisfied: bool
    traces: list[ImageTrace] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "gate_pass_rate": self.gate_pass_rate,
            "mean_k_selected": self.mean_k_selected,
            "mean_crop_ratio": self.mean_crop_ratio,
            "predicted_cost_factor": self.predicted_cost_factor,
            "measured_cost_factor": self.measured_cost_factor,
            "cost_bound_satisfied": self.cost_bound_satisfied,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["scene_id", "gate_passed", "k_selected",
                        "base_latency_ms", "crop_latency_ms_total",
                        "degenerate_heatmap", "n_detections"])
            for t in self.traces:
                w.writerow([t.scene_id, int(t.gate_passed), t.k_selected,
                            f"{t.base_latency_ms:.3f}",
                            f"{sum(t.crop_latencies_ms):.3f}",
                            int(t.degenerate_heatmap), t.n_detections])


def routing_report(traces: Sequence[ImageTrace], top_k: int,
                   bound_tolerance: float = 0.05) -> RoutingReport:
    if not traces:
        raise ValueError("routing_report needs at least one trace")
    ratios = [lat / t.base_latency_ms for t in traces
              for lat in t.crop_latencies_ms if t.base_latency_ms > 0]
    r_bar = sum(ratios) / len(ratios) if ratios else 0.0
    predicted = 1.0 + top_k * r_bar
    factors = [t.total_latency_ms / t.base_latency_ms for t in traces
               if t.base_latency_ms > 0]
    measured = sum(factors) / len(factors) if factors else 1.0
    return RoutingReport(
        n_images=len(traces),
        gate_pass_rate=sum(t.gate_passed for t in traces) / len(traces),
        mean_k_selected=sum(t.k_selected for t in traces) / len(traces),
        mean_crop_ratio=r_bar,
        predicted_cost_factor=predicted,
        measured_cost_factor=measured,
        cost_bound_satisfied=measured <= predicted * (1.0 + bound_tolerance),
        traces=list(traces),
    )


@dataclass
class BenchResult:
    fps: float
    ms_per_image: float
    warmup_count: int
    timed_count: int

    def to_json_dict(self) -> dict:
        return {"fps": self.fps, "ms_per_image": self.ms_per_image,
                "warmup_count": self.warmup_count,
                "timed_count": self.timed_count}


def run_fps_bench(pipeline: Callable[[object], object], images: Sequence,
                  warmup: int = 20, timed: int = 200) -> BenchResult:
    """Warm-up untimed, then time N full pipeline runs on a monotonic clock.

    Images are cycled when fewer than warmup+timed are provided. The
    pipeline call must complete (all crop detections drained) before it
    returns, so the stop-watch reads cover the whole route-refine-fuse path.
    """
    if timed <= 0:
        raise ValueError(f"timed iteration count must be positive: {timed}")
    if not images:
        raise ValueError("need at least one image")

    def image_at(i):
        return images[i % len(images)]

    for j in range(warmup):
        pipeline(image_at(j))
    total = 0.0
    for i in range(timed):
        img = image_at(warmup + i)
        start = time.perf_counter()
        pipeline(img)
        total += time.perf_counter() - start
    fps = timed / total
    return BenchResult(fps=fps, ms_per_image=1000.0 / fps,
                       warmup_count=warmup, timed_count=timed)
