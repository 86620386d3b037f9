"""Entropy-guided adaptive crop routing for transformer detectors."""

from .attention import (AttentionTensor, HeatMap, ProbabilityMap,
                        aggregate_attention, build_heatmap,
                        normalize_probability, spatial_attention_entropy)
from .baselines import SliceConfig, random_selection, uniform_slices
from .bench import (BenchResult, ImageTrace, RoutingReport, cost_model,
                    routing_report, run_fps_bench)
from .detector import (DetectionRequest, DetectionResponse, MockDetector,
                       MockDetectorParams, SubprocessDetector,
                       synthesize_attention)
from .evaluation import EvalResult, evaluate_map
from .fusion import (CropDetection, Detection, FusionConfig, back_project,
                     boost_score, fuse_detections)
from .geometry import CLASS_AGNOSTIC, Box, ScoredBox, iou, nms
from .pipeline import RouteResult, route_image
from .routing import (RoutingConfig, WindowCandidate, evaluate_gate,
                      generate_windows, score_window, select_candidates,
                      window_stats)
from .scenes import SceneSpec, SyntheticScene, generate_scene

__version__ = "0.1.0"
