"""DETR backend: image -> detections + raw decoder cross-attention.

The default model is a tiny randomly initialized DETR (fixed seed, CPU,
eval mode), so the bridge runs without any weight download and repeated
requests are bitwise deterministic. Pass --model to load pretrained
weights from the hub instead when network access is available.

Attention is exported raw, one row per (layer, head, query) over the
encoder key grid; the client does its own aggregation.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from PIL import Image
from transformers import DetrConfig, DetrForObjectDetection
from transformers.models.resnet import ResNetConfig

# ImageNet statistics, the DETR preprocessing default
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass
class BridgeConfig:
    model: str = "tiny-random"   # builtin, or a hub checkpoint id
    input_size: int = 160
    device: str = "cpu"
    seed: int = 0
    score_threshold: float = 0.05
    num_labels: int = 3          # for the tiny builtin only

    def __post_init__(self):
        if self.input_size < 32:
            raise ValueError(f"input_size too small: {self.input_size}")
        if not 0.0 <= self.score_threshold < 1.0:
            raise ValueError(f"bad score_threshold: {self.score_threshold}")


@dataclass
class BackendResult:
    detections: list          # dicts in wire format
    attention: np.ndarray     # (L, Nh, Nq, Nk) float32
    key_grid: tuple[int, int]
    latency_ms: float


def _build_tiny(cfg: BridgeConfig) -> DetrForObjectDetection:
    backbone = ResNetConfig(num_channels=3, embedding_size=16,
                            hidden_sizes=[16, 32, 64, 128],
                            depths=[1, 1, 1, 1], out_features=["stage4"])
    detr_cfg = DetrConfig(use_timm_backbone=False, backbone_config=backbone,
                          backbone=None, use_pretrained_backbone=False,
                          num_labels=cfg.num_labels, num_queries=10,
                          d_model=32, encoder_layers=1, decoder_layers=2,
                          encoder_attention_heads=2, decoder_attention_heads=2,
                          encoder_ffn_dim=64, decoder_ffn_dim=64,
                          attn_implementation="eager")
    torch.manual_seed(cfg.seed)
    return DetrForObjectDetection(detr_cfg)


class DetrBackend:
    def __init__(self, cfg: Optional[BridgeConfig] = None):
        self.cfg = cfg or BridgeConfig()
        if self.cfg.model == "tiny-random":
            model = _build_tiny(self.cfg)
        else:
            model = DetrForObjectDetection.from_pretrained(
                self.cfg.model, attn_implementation="eager")
        self.model = model.to(self.cfg.device).eval()
        self.key_grid = self._probe_key_grid()

    def _probe_key_grid(self) -> tuple[int, int]:
        """Dry forward to read the encoder feature-map size."""
        s = self.cfg.input_size
        x = torch.zeros(1, 3, s, s, device=self.cfg.device)
        with torch.no_grad():
            feats = self.model.model.backbone(
                x, pixel_mask=torch.ones(1, s, s, dtype=torch.long,
                                         device=self.cfg.device))
        fmap = feats[0][-1][0]
        return int(fmap.shape[-2]), int(fmap.shape[-1])

    def _preprocess(self, image: Image.Image,
                    crop: Optional[list[float]]) -> torch.Tensor:
        if crop is not None:
            x1, y1, x2, y2 = crop
            x1 = max(0, int(round(x1)))
            y1 = max(0, int(round(y1)))
            x2 = min(image.width, int(round(x2)))
            y2 = min(image.height, int(round(y2)))
            if x2 <= x1 or y2 <= y1:
                raise ValueError(f"degenerate crop {crop}")
            image = image.crop((x1, y1, x2, y2))
        s = self.cfg.input_size
        image = image.convert("RGB").resize((s, s), Image.BILINEAR)
        arr = (np.asarray(image, dtype=np.float32) / 255.0 - _MEAN) / _STD
        return torch.from_numpy(arr.transpose(2, 0, 1))[None].to(self.cfg.device)

    def run(self, image_path: str, crop: Optional[list[float]]) -> BackendResult:
        t0 = time.perf_counter()
        with Image.open(image_path) as im:
            pixels = self._preprocess(im, crop)
        with torch.no_grad():
            out = self.model(pixel_values=pixels, output_attentions=True)
        # drop the trailing no-object logit before taking per-query classes
        probs = out.logits.softmax(-1)[0, :, :-1]
        scores, labels = probs.max(-1)
        boxes = out.pred_boxes[0]  # cxcywh, normalized to the crop
        dets = []
        for q in range(boxes.shape[0]):
            score = float(scores[q])
            if score < self.cfg.score_threshold:
                continue
            cx, cy, w, h = (float(v) for v in boxes[q])
            dets.append({"box": [cx, cy, w, h], "box_format": "cxcywh_norm",
                         "score": score, "class": int(labels[q])})
        attn = torch.stack(out.cross_attentions, dim=0)[:, 0]  # (L,Nh,Nq,Nk)
        latency_ms = (time.perf_counter() - t0) * 1000.0
        return BackendResult(dets, attn.cpu().numpy().astype(np.float32),
                             self.key_grid, latency_ms)
