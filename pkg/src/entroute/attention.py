"""Decoder cross-attention aggregation, normalized spatial entropy, and
heatmap construction.

The raw tensor is indexed [layer, head, query, key]; keys live on a
(H_k, W_k) grid. The image-level entropy is computed on the key-grid
distribution (before upsampling), the gate statistics on the normalized
full-resolution map.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

EPSILON = 1e-8

MAGIC = "VICROPAT1"


@dataclass
class AttentionTensor:
    values: np.ndarray          # (L, Nh, Nq, Nk), nonnegative
    key_grid: tuple[int, int]   # (Hk, Wk), Hk*Wk == Nk

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError(f"attention tensor must be 4-D, got shape {v.shape}")
        if min(v.shape) < 1:
            raise ValueError(f"all dims must be >= 1, got shape {v.shape}")
        hk, wk = self.key_grid
        if hk * wk != v.shape[3]:
            raise ValueError(
                f"key grid {self.key_grid} inconsistent with Nk={v.shape[3]}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("attention values must be finite and nonnegative")
        self.values = v

    @property
    def n_keys(self) -> int:
        return self.values.shape[3]


@dataclass
class ProbabilityMap:
    p: np.ndarray
    epsilon: float = EPSILON

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if np.any(p <= 0):
            raise ValueError("probabilities must be strictly positive")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()}")
        self.p = p


@dataclass
class HeatMap:
    h: np.ndarray          # (H, W) in [0,1]
    sae_global: float      # normalized entropy of the key distribution
    mean_h: float          # mean of the normalized map
    degenerate: bool = False  # constant raw map, forced to all-0.5

    @property
    def shape(self) -> tuple[int, int]:
        return self.h.shape  # type: ignore[return-value]


def aggregate_attention(t: AttentionTensor) -> np.ndarray:
    """Mean over (layer, head, query) of the attention to each key."""
    return t.values.mean(axis=(0, 1, 2))


def normalize_probability(a: np.ndarray, epsilon: float = EPSILON) -> ProbabilityMap:
    """Additively smoothed normalization to a probability distribution."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError("input must be finite and nonnegative")
    shifted = a + epsilon
    return ProbabilityMap(shifted / shifted.sum(), epsilon)


def spatial_attention_entropy(pm: ProbabilityMap) -> float:
    """Shannon entropy normalized by log(N_k), clamped to [0,1].

    Natural log throughout; the ratio is base-invariant anyway.
    """
    p = pm.p
    n = p.size
    if n < 2:
        raise ValueError("entropy normalizer undefined for a single key")
    h = -float(np.sum(p * np.log(p))) / math.log(n)
    return min(max(h, 0.0), 1.0)


def bilinear_resize(src: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Separable bilinear resize with half-pixel centers and edge clamping."""
    src = np.asarray(src, dtype=np.float64)
    sh, sw = src.shape
    oh, ow = out_shape
    if oh < 1 or ow < 1:
        raise ValueError(f"bad output shape {out_shape}")

    def axis_weights(n_src: int, n_out: int):
        centers = (np.arange(n_out) + 0.5) * (n_src / n_out) - 0.5
        centers = np.clip(centers, 0.0, n_src - 1.0)
        lo = np.floor(centers).astype(np.int64)
        lo = np.minimum(lo, n_src - 1)
        hi = np.minimum(lo + 1, n_src - 1)
        frac = centers - lo
        return lo, hi, frac

    ylo, yhi, fy = axis_weights(sh, oh)
    xlo, xhi, fx = axis_weights(sw, ow)
    rows = src[ylo, :] * (1.0 - fy)[:, None] + src[yhi, :] * fy[:, None]
    out = rows[:, xlo] * (1.0 - fx)[None, :] + rows[:, xhi] * fx[None, :]
    return out


def build_heatmap(t: AttentionTensor, image_size: tuple[int, int]) -> HeatMap:
    """Aggregate -> reshape to key grid -> bilinear upsample -> min-max norm.

    image_size is (H, W). The global entropy uses the aggregated key vector,
    not the upsampled map (upsampling would change the normalizer).
    """
    h_img, w_img = image_size
    if h_img < 1 or w_img < 1:
        raise ValueError(f"bad image size {image_size}")
    agg = aggregate_attention(t)
    if agg.size == 1:
        sae = 0.0  # a single key is perfectly focused by definition
    else:
        sae = spatial_attention_entropy(normalize_probability(agg))
    grid = agg.reshape(t.key_grid)
    up = bilinear_resize(grid, (h_img, w_img))
    lo, hi = float(up.min()), float(up.max())
    if hi - lo <= 0.0:
        # A constant map carries no routing signal; flag it for the report.
        h = np.full((h_img, w_img), 0.5)
        return HeatMap(h, sae, 0.5, degenerate=True)
    h = (up - lo) / (hi - lo)
    return HeatMap(h, sae, float(h.mean()), degenerate=False)


# --- attention tensor file format -------------------------------------------

def write_tensor_file(path, t: AttentionTensor) -> None:
    l, nh, nq, nk = t.values.shape
    header = {"L": l, "Nh": nh, "Nq": nq, "Nk": nk,
              "Hk": t.key_grid[0], "Wk": t.key_grid[1]}
    with open(path, "wb") as f:
        f.write(MAGIC.encode("ascii") + b"\n")
        f.write(json.dumps(header).encode("ascii") + b"\n")
        f.write(np.ascontiguousarray(t.values, dtype="<f4").tobytes())


def read_tensor_file(path) -> AttentionTensor:
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != MAGIC.encode("ascii"):
            raise ValueError(f"bad magic in {path!s}: {magic!r}")
        header = json.loads(f.readline())
        l, nh, nq, nk = header["L"], header["Nh"], header["Nq"], header["Nk"]
        raw = f.read()
    expected = 4 * l * nh * nq * nk
    if len(raw) != expected:
        raise ValueError(
            f"byte-count mismatch in {path!s}: got {len(raw)}, want {expected}")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    values = values.reshape(l, nh, nq, nk)
    return AttentionTensor(values, (header["Hk"], header["Wk"]))


def write_pgm(path, hm: HeatMap) -> None:
    """Binary 8-bit PGM export of the normalized map."""
    h, w = hm.shape
    data = np.clip(np.round(hm.h * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())
