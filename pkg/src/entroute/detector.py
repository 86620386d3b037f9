"""Detector backends behind one contract: a seeded mock for desk-scale
experiments and a JSON-lines subprocess client for real models.

The mock's response model: an object's detection probability saturates
once its side length, magnified to the detector input resolution, reaches
full_visibility_px; below that it falls off quadratically (area-like loss
of evidence). Crops therefore recover small objects that the full-image
pass misses.
"""
from __future__ import annotations

import json
import math
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .attention import AttentionTensor, read_tensor_file
from .fusion import CropDetection, Detection
from .geometry import Box
from .scenes import SceneObject, SyntheticScene

KEY_GRID = (20, 20)


class DetectorError(RuntimeError):
    pass


class CapabilityError(DetectorError):
    """Attention requested from a backend that cannot provide it."""


@dataclass
class DetectionRequest:
    image_ref: Union[str, SyntheticScene]
    crop: Optional[Box] = None
    want_attention: bool = False


@dataclass
class DetectionResponse:
    detections: list            # Detection (full image) or CropDetection (crop)
    attention: Optional[AttentionTensor]
    latency_ms: float


@dataclass
class MockDetectorParams:
    input_size: int = 640
    full_visibility_px: float = 24.0
    score_noise_sd: float = 0.05
    base_latency_ms: float = 20.0
    crop_cost_ratio: float = 0.25
    seed: int = 0
    sleep: bool = False            # emulate wall-clock latency for benchmarks
    loc_jitter_frac: float = 0.04  # localization noise, shrinks with resolution
    attention_noise: float = 0.02  # background noise scale on the key grid
    blob_width_px: float = 40.0    # blob sigma = max(1, blob_width_px/side) keys

    def __post_init__(self):
        if self.input_size <= 0 or self.full_visibility_px <= 0:
            raise ValueError("input_size and full_visibility_px must be positive")
        if not 0.0 < self.crop_cost_ratio < 1.0:
            raise ValueError(
                f"crop_cost_ratio must be in (0,1): {self.crop_cost_ratio}")

    @classmethod
    def from_json_dict(cls, d: dict) -> "MockDetectorParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown MockDetectorParams keys: {sorted(unknown)}")
        return cls(**d)


def _load_scene(ref: Union[str, SyntheticScene]) -> SyntheticScene:
    if isinstance(ref, SyntheticScene):
        return ref
    with open(ref) as f:
        return SyntheticScene.from_json(f.read())


def _rng_for(params_seed: int, scene_seed: int, crop: Optional[Box],
             stream: int) -> np.random.Generator:
    if crop is None:
        crop_key = [0]
    else:
        crop_key = [1] + [int(round(v * 16)) for v in crop.as_list()]
    return np.random.default_rng([params_seed, scene_seed, stream] + crop_key)


def detection_probability(side_px: float, extent_px: float,
                          params: MockDetectorParams) -> float:
    """Quadratic-in-side visibility model at the detector input resolution."""
    side_eff = side_px * params.input_size / extent_px
    return min(1.0, (side_eff / params.full_visibility_px) ** 2)


class MockDetector:
    """Deterministic synthetic detector over scene files.

    Pure given (scene, crop, params, seed); safe for concurrent use.
    """

    supports_attention = True
    single_flight = False

    def __init__(self, params: Optional[MockDetectorParams] = None):
        self.params = params or MockDetectorParams()

    def detect(self, req: DetectionRequest) -> DetectionResponse:
        p = self.params
        scene = _load_scene(req.image_ref)
        crop = req.crop
        if crop is not None:
            if crop.area <= 0:
                raise DetectorError(f"degenerate crop {crop}")
            region = crop.clip(scene.width, scene.height)
            extent = max(region.width, region.height)
            latency = p.crop_cost_ratio * p.base_latency_ms
        else:
            region = Box(0, 0, scene.width, scene.height)
            extent = max(scene.width, scene.height)
            latency = p.base_latency_ms

        rng = _rng_for(p.seed, scene.seed, crop, stream=0)
        raw: list[tuple[Box, float, int]] = []
        for obj in scene.objects:
            b = obj.box
            ix = max(0.0, min(b.x2, region.x2) - max(b.x1, region.x1))
            iy = max(0.0, min(b.y2, region.y2) - max(b.y1, region.y1))
            visible = (ix * iy) / b.area if b.area > 0 else 0.0
            if visible < 0.5:
                continue
            prob = detection_probability(obj.side_px, extent, p)
            if rng.uniform() >= prob:
                continue
            side_eff = obj.side_px * p.input_size / extent
            jitter_sd = (p.loc_jitter_frac * obj.side_px
                         * p.full_visibility_px / max(side_eff, p.full_visibility_px))
            dx, dy = rng.normal(0.0, jitter_sd, size=2)
            jittered = Box(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy)
            jittered = Box(max(jittered.x1, region.x1), max(jittered.y1, region.y1),
                           min(jittered.x2, region.x2), min(jittered.y2, region.y2))
            if jittered.area <= 0:
                continue
            score = float(np.clip(prob + rng.normal(0.0, p.score_noise_sd), 0.0, 1.0))
            raw.append((jittered, score, obj.class_id))

        if crop is None:
            dets = [Detection(b, s, c, origin="full") for b, s, c in raw]
        else:
            dets = []
            for b, s, c in raw:
                cx = ((b.x1 + b.x2) / 2.0 - region.x1) / region.width
                cy = ((b.y1 + b.y2) / 2.0 - region.y1) / region.height
                dets.append(CropDetection(cx, cy, b.width / region.width,
                                          b.height / region.height, s, c))

        attention = None
        if req.want_attention:
            if crop is not None:
                raise CapabilityError("attention only available for full-image passes")
            attention = synthesize_attention(scene, p)
        if p.sleep and latency > 0:
            time.sleep(latency / 1000.0)
        return DetectionResponse(dets, attention, latency)


def synthesize_attention(scene: SyntheticScene,
                         params: MockDetectorParams) -> AttentionTensor:
    """Key-grid attention for a scene: one isotropic Gaussian per object.

    Smaller objects produce wider, more dispersed blobs (the attention
    dilution the routing exploits); background noise is exponential so an
    empty scene normalizes to a low-mean map and gets gated out.
    """
    hk, wk = KEY_GRID
    rng = _rng_for(params.seed, scene.seed, None, stream=1)
    grid = rng.exponential(params.attention_noise, size=(hk, wk))
    ys, xs = np.mgrid[0:hk, 0:wk]
    for obj in scene.objects:
        b = obj.box
        kx = (b.x1 + b.x2) / 2.0 / scene.width * wk - 0.5
        ky = (b.y1 + b.y2) / 2.0 / scene.height * hk - 0.5
        sigma = max(1.0, params.blob_width_px / obj.side_px)
        d2 = (xs - kx) ** 2 + (ys - ky) ** 2
        grid += np.exp(-d2 / (2.0 * sigma * sigma))
    # attention mass saturates where blobs stack; without this, a single
    # tall cluster peak drags the min-max-normalized mean under the gate
    grid = np.tanh(grid)
    values = grid.reshape(1, 1, 1, hk * wk)
    return AttentionTensor(values, KEY_GRID)


class SubprocessDetector:
    """JSON-lines client for an external detector bridge.

    Single-flight: requests are serialized over one stdin/stdout pipe pair.
    """

    single_flight = True

    def __init__(self, command: list[str], timeout: float = 30.0):
        self._timeout = timeout
        self._lock = threading.Lock()
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as e:
            raise DetectorError(f"failed to launch bridge {command}: {e}") from e
        hello = self._roundtrip({"op": "hello"})
        if hello.get("op") != "hello":
            raise DetectorError(f"bad handshake reply: {hello}")
        self.name = hello.get("name", "?")
        self.input_size = tuple(hello.get("input_size", (0, 0)))
        self.key_grid = tuple(hello.get("key_grid", (0, 0)))
        self.supports_attention = bool(hello.get("supports_attention", False))

    def _roundtrip(self, msg: dict) -> dict:
        with self._lock:
            if self._proc.poll() is not None:
                raise DetectorError("bridge process has exited")
            self._proc.stdin.write(json.dumps(msg) + "\n")
            self._proc.stdin.flush()
            line = self._read_line()
        try:
            return json.loads(line)
        except json.JSONDecodeError as e:
            raise DetectorError(f"malformed bridge reply: {line!r}") from e

    def _read_line(self) -> str:
        result: list[str] = []

        def reader():
            result.append(self._proc.stdout.readline())

        t = threading.Thread(target=reader, daemon=True)
        t.start()
        t.join(self._timeout)
        if t.is_alive() or not result or not result[0]:
            self._proc.kill()
            raise DetectorError("bridge timed out or closed the pipe")
        return result[0]

    def detect(self, req: DetectionRequest) -> DetectionResponse:
        if req.want_attention and not self.supports_attention:
            raise CapabilityError(f"bridge {self.name} does not export attention")
        self._next_id += 1
        msg = {"op": "detect", "id": self._next_id,
               "image": str(req.image_ref),
               "crop": req.crop.as_list() if req.crop else None,
               "return_attention": req.want_attention}
        t0 = time.monotonic()
        reply = self._roundtrip(msg)
        elapsed_ms = (time.monotonic() - t0) * 1000.0
        if reply.get("op") == "error":
            raise DetectorError(f"bridge error: {reply.get('message')}")
        if reply.get("op") != "result" or reply.get("id") != self._next_id:
            raise DetectorError(f"unexpected bridge reply: {reply}")
        dets = []
        for d in reply["detections"]:
            fmt = d.get("box_format", "cxcywh_norm")
            if fmt == "cxcywh_norm":
                cx, cy, w, h = d["box"]
                dets.append(CropDetection(cx, cy, w, h, d["score"], d["class"]))
            elif fmt == "xyxy_abs":
                dets.append(Detection(Box(*d["box"]), d["score"], d["class"],
                                      origin="crop" if req.crop else "full"))
            else:
                raise DetectorError(f"unknown box format {fmt!r}")
        attention = None
        if req.want_attention:
            path = reply.get("attention_file")
            if not path:
                raise DetectorError("bridge promised attention but sent no file")
            attention = read_tensor_file(path)
        return DetectionResponse(dets, attention,
                                 float(reply.get("latency_ms", elapsed_ms)))

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
