"""Mask-constrained superpixel generation.

K-means clustering runs separately inside and outside the user-selected
region, so no superpixel ever straddles the semantic boundary. Each pixel
is embedded as (R, G, B, lambda * row/H, lambda * col/W); grayscale images
replicate their single channel into the three color features.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DimMismatch, TooFewPixels
from .imgcore import ImageTensor, RegionMask


@dataclass(frozen=True)
class SegmentationConfig:
    inner_k: int
    outer_k: int
    spatial_weight: float = 1.0
    max_iters: int = 50
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.inner_k < 1:
            raise ValueError("inner_k must be >= 1")
        if self.outer_k < 0:
            raise ValueError("outer_k must be >= 0")
        if self.spatial_weight < 0:
            raise ValueError("spatial_weight must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True)
class SuperpixelMap:
    """Per-pixel labels in [0, K) plus which labels lie inside the mask."""

    labels: np.ndarray
    num_superpixels: int
    inner_labels: frozenset
    region_mask: RegionMask

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.int32)
        if arr.ndim != 2:
            raise ValueError("labels must be (H, W)")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)
        object.__setattr__(self, "inner_labels", frozenset(int(l) for l in self.inner_labels))
        counts = np.bincount(arr.ravel(), minlength=self.num_superpixels)
        if len(counts) > self.num_superpixels or (counts == 0).any():
            raise ValueError("every label in [0, K) needs at least one pixel")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def pixel_counts(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.num_superpixels)

    def matches(self, img) -> None:
        if (self.height, self.width) != (img.height, img.width):
            raise DimMismatch(
                f"label grid {self.height}x{self.width} vs image {img.height}x{img.width}")

    def to_json_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "num_superpixels": self.num_superpixels,
            "inner_labels": sorted(self.inner_labels),
            "labels": self.labels.ravel().tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SuperpixelMap":
        labels = np.asarray(d["labels"], dtype=np.int32).reshape(d["height"], d["width"])
        inner = frozenset(int(l) for l in d["inner_labels"])
        mask = RegionMask(np.isin(labels, sorted(inner)))
        return cls(labels, int(d["num_superpixels"]), inner, mask)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def to_label_png(self) -> bytes:
        """Indexed PNG with a deterministic golden-angle palette (K <= 256)."""
        if self.num_superpixels > 256:
            raise ValueError("indexed PNG supports at most 256 labels")
        pil = Image.fromarray(self.labels.astype(np.uint8), mode="P")
        pil.putpalette(_label_palette())
        buf = io.BytesIO()
        pil.save(buf, format="PNG")
        return buf.getvalue()


def _label_palette() -> list:
    import colorsys

    pal = []
    for i in range(256):
        h = (i * 0.61803398875) % 1.0
        r, g, b = colorsys.hsv_to_rgb(h, 0.65, 0.95 if i % 2 == 0 else 0.70)
        pal.extend([int(r * 255), int(g * 255), int(b * 255)])
    return pal


def suggest_counts(mask: RegionMask, total_k: int) -> tuple[int, int]:
    """Split a total superpixel budget proportionally to mask area.

    inner = max(1, round_half_up(total_k * |mask| / (H * W))), outer gets
    the remainder; both stay >= 1 whenever both regions are nonempty so
    superpixels inside and outside come out roughly the same size.
    """
    if total_k < 2:
        raise ValueError("total_k must be >= 2")
    mask.require_selection()
    area = mask.count
    total_px = mask.height * mask.width
    inner = max(1, int(np.floor(total_k * area / total_px + 0.5)))
    if area < total_px and inner == total_k:
        inner = total_k - 1
    return inner, total_k - inner


def pixel_features(img: ImageTensor, rows: np.ndarray, cols: np.ndarray,
                   spatial_weight: float) -> np.ndarray:
    """Feature embedding (R, G, B, w*row/H, w*col/W) for the given pixels."""
    rgb = img.to_rgb().data[rows, cols]
    spatial = np.stack(
        [spatial_weight * rows / img.height, spatial_weight * cols / img.width], axis=1
    )
    return np.concatenate([rgb, spatial], axis=1)


def _kmeans_pp_init(feats: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = feats.shape[0]
    centroids = np.empty((k, feats.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = feats[first]
    d2 = ((feats - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a centroid; spread arbitrarily
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = feats[idx]
        d2 = np.minimum(d2, ((feats - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _assign(feats: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # ||x-c||^2 expansion keeps memory at (n, k) instead of (n, k, f)
    d2 = (
        (feats**2).sum(axis=1)[:, None]
        - 2.0 * feats @ centroids.T
        + (centroids**2).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    labels = d2.argmin(axis=1)
    return labels, d2


def _lloyd(feats: np.ndarray, k: int, max_iters: int, tol: float,
           rng: np.random.Generator) -> tuple[np.ndarray, float]:
    n = feats.shape[0]
    centroids = _kmeans_pp_init(feats, k, rng)
    prev_wcss = np.inf
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        labels, d2 = _assign(feats, centroids)
        own = d2[np.arange(n), labels]
        for j in range(k):
            if not (labels == j).any():
                victim = int(own.argmax())
                labels[victim] = j
                centroids[j] = feats[victim]
                own[victim] = 0.0
        wcss = float(own.sum())
        assert wcss <= prev_wcss * (1.0 + 1e-12) + 1e-9
        prev_wcss = wcss
        new_centroids = np.empty_like(centroids)
        for j in range(k):
            new_centroids[j] = feats[labels == j].mean(axis=0)
        shift = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if shift < tol:
            break
    labels, _ = _assign(feats, centroids)
    # final assignment may re-empty a cluster; repair once more for safety
    for j in range(k):
        if not (labels == j).any():
            d2 = ((feats - centroids[j]) ** 2).sum(axis=1)
            labels[int(d2.argmin())] = j
    score = 0.0
    for j in range(k):
        pts = feats[labels == j]
        score += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return labels, score


def kmeans(feats: np.ndarray, k: int, max_iters: int, tol: float, seed: int,
           n_init: int = 4) -> np.ndarray:
    """Best of ``n_init`` seeded k-means++ runs; deterministic given seed.

    A single k-means++ start can park in a poor local optimum even on clean
    inputs, so the restart with the lowest within-cluster sum of squares
    wins (the earliest run wins ties). Empty clusters are repaired by
    seizing the point currently farthest from its own centroid, and the
    objective is asserted non-increasing across iterations in debug runs.
    """
    n = feats.shape[0]
    if n < k:
        raise TooFewPixels(f"{n} pixels cannot form {k} clusters")
    if k == n:
        return np.arange(n, dtype=np.int32)
    best_labels, best_wcss = None, np.inf
    for stream in np.random.SeedSequence(seed).spawn(max(1, n_init)):
        labels, wcss = _lloyd(feats, k, max_iters, tol, np.random.default_rng(stream))
        if wcss < best_wcss * (1.0 - 1e-12):
            best_labels, best_wcss = labels, wcss
    return best_labels.astype(np.int32)


def segment_region(img: ImageTensor, region: np.ndarray, k: int,
                   cfg: SegmentationConfig) -> np.ndarray:
    """Cluster the pixels where ``region`` is True into k labels in [0, k).

    Returns an (H, W) int array with -1 outside the region.
    """
    region = np.asarray(region, dtype=bool)
    rows, cols = np.nonzero(region)
    if rows.size < k:
        raise TooFewPixels(f"region has {rows.size} pixels, need >= {k}")
    feats = pixel_features(img, rows, cols, cfg.spatial_weight)
    labels = kmeans(feats, k, cfg.max_iters, cfg.tol, cfg.seed)
    out = np.full(region.shape, -1, dtype=np.int32)
    out[rows, cols] = labels
    return out


def segment(img: ImageTensor, mask: RegionMask, cfg: SegmentationConfig) -> SuperpixelMap:
    """Mask-constrained segmentation: inner_k clusters inside the mask get
    labels [0, inner_k), outer_k clusters outside get [inner_k, K)."""
    mask.matches(img).require_selection()
    inside = mask.data
    outside = ~inside
    n_outside = int(outside.sum())
    if n_outside == 0 and cfg.outer_k > 0:
        raise TooFewPixels("mask covers the whole image but outer_k > 0")
    if n_outside > 0 and cfg.outer_k == 0:
        raise TooFewPixels("outer region is nonempty but outer_k == 0")

    labels = np.zeros(inside.shape, dtype=np.int32)
    inner = segment_region(img, inside, cfg.inner_k, cfg)
    labels[inside] = inner[inside]
    if cfg.outer_k > 0:
        outer = segment_region(img, outside, cfg.outer_k, cfg)
        labels[outside] = outer[outside] + cfg.inner_k
    k = cfg.inner_k + (cfg.outer_k if n_outside > 0 else 0)
    return SuperpixelMap(labels, k, frozenset(range(cfg.inner_k)), mask)


def auto_segment(img: ImageTensor, k: int, cfg: SegmentationConfig) -> SuperpixelMap:
    """Unconstrained K-means over the whole image (the no-human baseline)."""
    if img.height * img.width < k:
        raise TooFewPixels(f"image has {img.height * img.width} pixels, need >= {k}")
    whole = np.ones((img.height, img.width), dtype=bool)
    labels = segment_region(img, whole, k, cfg)
    empty = RegionMask(np.zeros((img.height, img.width), dtype=bool))
    return SuperpixelMap(labels, k, frozenset(), empty)
