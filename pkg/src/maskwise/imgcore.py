"""Canonical image, mask and label-map types plus codecs and resampling.

Internal convention: images are row-major float64 arrays of shape (H, W, C)
with values in [0, 1] and C in {1, 3}. 8-bit conversion happens only at
encode time via round(v * 255). Masks are (H, W) bool and only ever
resampled with nearest-neighbor so they stay boolean.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimMismatch, EmptyMask, MalformedImage, UnsupportedFormat

_DECODABLE = {"PNG", "JPEG"}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ImageTensor:
    """H x W x C floating image in [0, 1]; immutable after construction."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, C) with C in {{1, 3}}, got {arr.shape}")
        if arr.size == 0:
            raise ValueError("empty image")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]; use clip01 on raw data")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def to_rgb(self) -> "ImageTensor":
        if self.channels == 3:
            return self
        return ImageTensor(np.repeat(self.data, 3, axis=2))

    def to_gray(self) -> "ImageTensor":
        if self.channels == 1:
            return self
        return ImageTensor(self.data.mean(axis=2, keepdims=True))


@dataclass(frozen=True)
class RegionMask:
    """Per-pixel boolean selection; True marks the user-selected region."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.bool_:
            raise ValueError("mask data must be boolean")
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"expected nonempty (H, W) mask, got {arr.shape}")
        object.__setattr__(self, "data", _freeze(arr.copy()))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def require_selection(self) -> "RegionMask":
        """Masks consumed as selections need at least one True pixel."""
        if not self.data.any():
            raise EmptyMask("mask selects zero pixels")
        return self

    def matches(self, img: ImageTensor) -> "RegionMask":
        if (self.height, self.width) != (img.height, img.width):
            raise DimMismatch(
                f"mask {self.height}x{self.width} vs image {img.height}x{img.width}"
            )
        return self


@dataclass(frozen=True)
class TrinaryMask:
    """Per-pixel influence map with values in {-1, 0, +1}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.int8)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"expected nonempty (H, W) map, got {arr.shape}")
        if not np.isin(arr, (-1, 0, 1)).all():
            raise ValueError("trinary values must be in {-1, 0, +1}")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def decode_image(raw: bytes) -> ImageTensor:
    """Decode PNG or JPEG bytes to an ImageTensor scaled to [0, 1].

    Grayscale sources yield channels=1; anything with color (palette,
    RGB, RGBA) is converted to 3 channels. Alpha is dropped.
    """
    try:
        pil = Image.open(io.BytesIO(raw))
        pil.load()
    except UnidentifiedImageError as exc:
        raise MalformedImage(f"cannot decode image: {exc}") from exc
    except OSError as exc:
        raise MalformedImage(f"truncated or corrupt image: {exc}") from exc
    if pil.format not in _DECODABLE:
        raise UnsupportedFormat(f"expected PNG or JPEG, got {pil.format}")
    if pil.mode in ("1", "L", "I", "I;16"):
        pil = pil.convert("L")
        arr = np.asarray(pil, dtype=np.float64)[:, :, None] / 255.0
    elif pil.mode == "LA":
        arr = np.asarray(pil.convert("L"), dtype=np.float64)[:, :, None] / 255.0
    else:
        pil = pil.convert("RGB")
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    return ImageTensor(arr)


def encode_png(img: ImageTensor) -> bytes:
    """Encode losslessly as PNG; 8-bit conversion is round(v * 255)."""
    arr = np.round(img.data * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def decode_mask(raw: bytes, dims: tuple[int, int]) -> RegionMask:
    """Decode an uploaded mask image to a boolean RegionMask of shape dims.

    A pixel is selected iff any channel exceeds 0.5 after scaling to [0, 1]
    (tolerates anti-aliased, hand-drawn edges). Size mismatches resample
    with nearest-neighbor to keep the mask boolean.
    """
    img = decode_image(raw)
    selected = (img.data > 0.5).any(axis=2)
    if selected.shape != tuple(dims):
        selected = _resample_nearest(selected, dims)
    mask = RegionMask(selected)
    return mask.require_selection()


def encode_mask_png(mask: RegionMask) -> bytes:
    arr = np.where(mask.data, 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def encode_trinary_png(tri: TrinaryMask) -> bytes:
    """Trinary PNG convention: -1 -> 0, 0 -> 128, +1 -> 255 (8-bit gray)."""
    arr = ((tri.data.astype(np.int16) + 1) * 255 // 2).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_trinary_png(raw: bytes) -> TrinaryMask:
    img = decode_image(raw)
    gray = img.data[:, :, 0]
    tri = np.zeros(gray.shape, dtype=np.int8)
    tri[gray < 0.25] = -1
    tri[gray > 0.75] = 1
    return TrinaryMask(tri)


def _src_centers(n_dst: int, n_src: int) -> np.ndarray:
    # half-pixel-center alignment: dst center j maps to (j + .5) * scale - .5
    return (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5


def _resample_nearest(arr: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    h, w = dims
    sh, sw = arr.shape[:2]
    rows = np.clip(np.floor((np.arange(h) + 0.5) * sh / h).astype(int), 0, sh - 1)
    cols = np.clip(np.floor((np.arange(w) + 0.5) * sw / w).astype(int), 0, sw - 1)
    return arr[np.ix_(rows, cols)]


def _resample_bilinear(arr: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    h, w = dims
    sh, sw = arr.shape[:2]
    ry = np.clip(_src_centers(h, sh), 0.0, sh - 1.0)
    rx = np.clip(_src_centers(w, sw), 0.0, sw - 1.0)
    y0 = np.floor(ry).astype(int)
    x0 = np.floor(rx).astype(int)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    fy = (ry - y0)[:, None, None]
    fx = (rx - x0)[None, :, None]
    top = arr[np.ix_(y0, x0)] * (1 - fx) + arr[np.ix_(y0, x1)] * fx
    bot = arr[np.ix_(y1, x0)] * (1 - fx) + arr[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def resample(img: ImageTensor, dims: tuple[int, int], method: str = "bilinear") -> ImageTensor:
    """Resample to (height, width); values are clipped back into [0, 1].

    Identical target dims return the input object unchanged (bitwise
    identity; safe because ImageTensor is immutable).
    """
    h, w = int(dims[0]), int(dims[1])
    if h <= 0 or w <= 0:
        raise ValueError("target dims must be positive")
    if (h, w) == (img.height, img.width):
        return img
    if method == "nearest":
        out = _resample_nearest(img.data, (h, w))
    elif method == "bilinear":
        out = _resample_bilinear(img.data, (h, w))
    else:
        raise ValueError(f"unknown resample method {method!r}")
    return clip01(out)


def clip01(img: ImageTensor | np.ndarray) -> ImageTensor:
    """Clamp every value into [0, 1] and return a valid ImageTensor."""
    arr = img.data if isinstance(img, ImageTensor) else np.asarray(img, dtype=np.float64)
    return ImageTensor(np.clip(arr, 0.0, 1.0))


def rasterize_polygon(vertices, dims: tuple[int, int]) -> RegionMask:
    """Even-odd fill of a closed polygon given in (x, y) pixel coordinates.

    A pixel (r, c) is inside iff a ray from its center (c + .5, r + .5)
    crosses the polygon boundary an odd number of times. Server-side
    rasterization keeps UI and CLI masks bit-identical for equal vertices.
    """
    verts = np.asarray(vertices, dtype=np.float64)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise ValueError("polygon needs at least 3 (x, y) vertices")
    h, w = dims
    px = np.arange(w) + 0.5
    py = np.arange(h) + 0.5
    cx, cy = np.meshgrid(px, py)
    inside = np.zeros((h, w), dtype=bool)
    n = verts.shape[0]
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        if y0 == y1:
            continue
        crosses = (cy >= min(y0, y1)) & (cy < max(y0, y1))
        xint = x0 + (cy - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (cx < xint)
    return RegionMask(inside)
