"""Command-line entry point: route | ablate | bench | synth | eval.

Every run reads a JSON manifest, resolves defaults, and writes the
resolved copy next to its outputs so results stay auditable. All
randomness flows from the manifest seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

from .attention import write_pgm
from .baselines import SliceConfig
from .bench import routing_report, run_fps_bench
from .detector import MockDetector, MockDetectorParams, SubprocessDetector
from .evaluation import evaluate_map
from .fusion import FusionConfig, detections_from_json, detections_to_json
from .pipeline import MODES, route_image
from .routing import RoutingConfig
from .scenes import SceneSpec, SyntheticScene, load_dataset, write_dataset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3

SWEEPABLE = ("top_k", "tau_w", "tau_g", "alpha", "fusion_enabled",
             "scoring_variant")


class UsageError(ValueError):
    pass


class BackendError(RuntimeError):
    pass


@dataclass
class RunManifest:
    routing: RoutingConfig
    fusion: FusionConfig
    detector: dict
    dataset: Optional[str] = None
    seed: int = 0
    output_dir: str = "out"
    slices: SliceConfig = field(default_factory=SliceConfig)

    @classmethod
    def from_json_dict(cls, d: dict) -> "RunManifest":
        known = {"routing", "fusion", "detector", "dataset", "seed",
                 "output_dir", "slices"}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown manifest keys: {sorted(unknown)}")
        detector = d.get("detector", {"mock": {}})
        if len(detector) != 1 or next(iter(detector)) not in ("mock", "bridge"):
            raise UsageError("manifest needs exactly one detector backend "
                             "('mock' or 'bridge')")
        return cls(
            routing=RoutingConfig.from_json_dict(d.get("routing", {})),
            fusion=FusionConfig.from_json_dict(d.get("fusion", {})),
            detector=detector,
            dataset=d.get("dataset"),
            seed=int(d.get("seed", 0)),
            output_dir=d.get("output_dir", "out"),
            slices=SliceConfig.from_json_dict(d.get("slices", {})),
        )

    def to_json_dict(self) -> dict:
        from dataclasses import asdict
        return {"routing": self.routing.to_json_dict(),
                "fusion": asdict(self.fusion),
                "detector": self.detector,
                "dataset": self.dataset,
                "seed": self.seed,
                "output_dir": self.output_dir,
                "slices": self.slices.to_json_dict()}


def load_manifest(path: str) -> RunManifest:
    try:
        with open(path) as f:
            return RunManifest.from_json_dict(json.load(f))
    except FileNotFoundError as e:
        raise UsageError(f"manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"manifest is not valid JSON: {e}") from e


def build_detector(manifest: RunManifest):
    backend, params = next(iter(manifest.detector.items()))
    if backend == "mock":
        return MockDetector(MockDetectorParams.from_json_dict(
            dict(params, seed=params.get("seed", manifest.seed))))
    try:
        command = [params["command"]] + list(params.get("args", []))
        return SubprocessDetector(command,
                                  timeout=params.get("timeout_s", 30.0))
    except Exception as e:
        raise BackendError(f"bridge startup failed: {e}") from e


def _load_scenes(manifest: RunManifest):
    if not manifest.dataset:
        raise UsageError("manifest has no dataset")
    try:
        return load_dataset(manifest.dataset)
    except (OSError, json.JSONDecodeError) as e:
        raise BackendError(f"cannot read dataset {manifest.dataset}: {e}") from e


def run_route(manifest: RunManifest, mode: str, out_dir: str,
              emit_heatmaps: bool = False):
    """Route every scene; returns (predictions, ground truth, report)."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.resolved.json"), "w") as f:
        json.dump(manifest.to_json_dict(), f, indent=1)
    scenes = _load_scenes(manifest)
    detector = build_detector(manifest)
    predictions, gts, traces = {}, {}, []
    for scene in scenes:
        result = route_image(detector, scene, manifest.routing,
                             manifest.fusion, mode=mode,
                             run_seed=manifest.seed,
                             slice_cfg=manifest.slices)
        key = f"scene_{scene.seed:06d}"
        predictions[key] = result.detections
        gts[key] = scene
        traces.append(result.trace)
        if emit_heatmaps and result.heatmap is not None:
            write_pgm(os.path.join(out_dir, f"{key}.pgm"), result.heatmap)
    dets_path = os.path.join(out_dir, "detections.json")
    with open(dets_path, "w") as f:
        json.dump({k: json.loads(detections_to_json(v))
                   for k, v in predictions.items()}, f)
    report = None
    if traces:
        report = routing_report(traces, manifest.routing.top_k)
        with open(os.path.join(out_dir, "routing_report.json"), "w") as f:
            json.dump(report.to_json_dict(), f, indent=1)
        report.write_csv(os.path.join(out_dir, "routing_report.csv"))
    if hasattr(detector, "close"):
        detector.close()
    return predictions, gts, report


def _apply_sweep_value(manifest: RunManifest, param: str, value):
    from dataclasses import replace
    if param in ("top_k", "tau_w", "tau_g", "scoring_variant"):
        manifest.routing = replace(manifest.routing, **{param: value})
    elif param in ("alpha", "fusion_enabled"):
        manifest.fusion = replace(manifest.fusion, **{param: value})
    else:
        raise UsageError(f"unknown sweep parameter {param!r}; "
                         f"choose one of {SWEEPABLE}")


def _parse_sweep(text: str):
    if "=" not in text:
        raise UsageError("--sweep expects PARAM=V1,V2,...")
    param, _, values = text.partition("=")
    param = param.strip()
    if param not in SWEEPABLE:
        raise UsageError(f"unknown sweep parameter {param!r}; "
                         f"choose one of {SWEEPABLE}")
    parsed = []
    for raw in values.split(","):
        raw = raw.strip()
        if param in ("top_k",):
            parsed.append(int(raw))
        elif param in ("tau_w", "tau_g", "alpha"):
            parsed.append(float(raw))
        elif param == "fusion_enabled":
            parsed.append(raw.lower() in ("1", "true", "yes"))
        else:
            parsed.append(raw)
    return param, parsed


def run_ablate(manifest: RunManifest, mode: str, sweep: str, out_dir: str):
    param, values = _parse_sweep(sweep)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for value in values:
        sub = RunManifest.from_json_dict(manifest.to_json_dict())
        _apply_sweep_value(sub, param, value)
        run_dir = os.path.join(out_dir, f"{param}_{value}")
        preds, gts, report = run_route(sub, mode, run_dir)
        if report is None:
            raise UsageError("ablation needs a nonempty dataset")
        result = evaluate_map(preds, gts)
        mean_ms = (sum(t.total_latency_ms for t in report.traces)
                   / len(report.traces))
        rows.append({
            "param": param, "value": value,
            "map50": result.map50, "ap_s": result.ap_s,
            "ap_m": result.ap_m, "ap_l": result.ap_l,
            "mean_k_selected": report.mean_k_selected,
            "measured_cost_factor": report.measured_cost_factor,
            "model_fps": 1000.0 / mean_ms if mean_ms > 0 else 0.0,
        })
    with open(os.path.join(out_dir, "ablation.json"), "w") as f:
        json.dump(rows, f, indent=1)
    with open(os.path.join(out_dir, "ablation.csv"), "w") as f:
        cols = list(rows[0].keys()) if rows else []
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(str(row[c]) for c in cols) + "\n")
    return rows


def run_bench(manifest: RunManifest, mode: str, warmup: int, timed: int,
              out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    scenes = _load_scenes(manifest)
    detector = build_detector(manifest)

    def pipeline(scene):
        return route_image(detector, scene, manifest.routing, manifest.fusion,
                           mode=mode, run_seed=manifest.seed,
                           slice_cfg=manifest.slices)

    result = run_fps_bench(pipeline, scenes, warmup, timed)
    with open(os.path.join(out_dir, "bench.json"), "w") as f:
        json.dump(result.to_json_dict(), f, indent=1)
    return result


def run_eval(manifest: RunManifest, detections_path: str, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    scenes = _load_scenes(manifest)
    try:
        with open(detections_path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise BackendError(f"cannot read detections {detections_path}: {e}") from e
    preds = {k: detections_from_json(json.dumps(v)) for k, v in raw.items()}
    gts = {f"scene_{s.seed:06d}": s for s in scenes}
    result = evaluate_map(preds, gts)
    with open(os.path.join(out_dir, "eval.json"), "w") as f:
        json.dump(result.to_json_dict(), f, indent=1)
    return result


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entroute")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--manifest", required=True)
        sp.add_argument("--mode", choices=MODES, default="entropy")
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("route", help="run the routing pipeline over a dataset")
    common(sp)
    sp.add_argument("--emit-heatmaps", action="store_true")

    sp = sub.add_parser("ablate", help="sweep one parameter, tabulate results")
    common(sp)
    sp.add_argument("--sweep", required=True, metavar="PARAM=V1,V2,...")

    sp = sub.add_parser("bench", help="end-to-end FPS benchmark")
    common(sp)
    sp.add_argument("--warmup", type=int, default=20)
    sp.add_argument("--timed", type=int, default=200)

    sp = sub.add_parser("synth", help="generate a synthetic scene dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--width", type=int, default=640)
    sp.add_argument("--height", type=int, default=640)
    sp.add_argument("--n-small", type=int, default=12)
    sp.add_argument("--n-large", type=int, default=3)
    sp.add_argument("--cluster-tightness", type=float, default=0.15)

    sp = sub.add_parser("eval", help="score stored predictions against a dataset")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--detections", required=True)
    sp.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            spec = SceneSpec(width=args.width, height=args.height,
                             n_small=args.n_small, n_large=args.n_large,
                             cluster_tightness=args.cluster_tightness)
            seeds = list(range(args.seed, args.seed + args.count))
            path = write_dataset(args.out, spec, seeds)
            print(path)
            return EXIT_OK

        manifest = load_manifest(args.manifest)
        if getattr(args, "seed", None) is not None:
            manifest.seed = args.seed
        out_dir = args.out or manifest.output_dir

        if args.command == "route":
            preds, gts, report = run_route(manifest, args.mode, out_dir,
                                           emit_heatmaps=args.emit_heatmaps)
            if report is not None:
                print(json.dumps(report.to_json_dict()))
            return EXIT_OK
        if args.command == "ablate":
            rows = run_ablate(manifest, args.mode, args.sweep, out_dir)
            print(json.dumps(rows))
            return EXIT_OK
        if args.command == "bench":
            result = run_bench(manifest, args.mode, args.warmup, args.timed,
                               out_dir)
            print(json.dumps(result.to_json_dict()))
            return EXIT_OK
        if args.command == "eval":
            result = run_eval(manifest, args.detections, out_dir)
            print(json.dumps(result.to_json_dict()))
            return EXIT_OK
        raise UsageError(f"unknown command {args.command}")
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (BackendError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
