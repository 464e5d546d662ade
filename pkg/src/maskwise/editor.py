"""Declarative region edits: color offsets, shift, rotate, remove, expand.

Geometric ops move the selected region's pixels, update the mask footprint,
and biharmonic-inpaint whatever source pixels the move uncovered. Region
content is resampled with bilinear interpolation; footprints always move
with nearest-neighbor so masks stay boolean. Values are clipped into
[0, 1] after every op, matching what an interactive user sees step by step.

Coordinate conventions: x = column (positive right), y = row (positive
down). Rotation angles are in degrees, positive turning the +x axis toward
+y (clockwise on screen), about the mask centroid rounded to the
half-pixel grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, RegionLeftImage
from .imgcore import ImageTensor, RegionMask, clip01
from .inpaint import biharmonic_fill


@dataclass(frozen=True)
class ColorEdit:
    dr: float = 0.0
    dg: float = 0.0
    db: float = 0.0

    def __post_init__(self):
        for v in (self.dr, self.dg, self.db):
            if not -1.0 <= v <= 1.0:
                raise ValueError("color offsets must lie in [-1, 1]")


@dataclass(frozen=True)
class Shift:
    dx: float
    dy: float


@dataclass(frozen=True)
class Rotate:
    angle: float


@dataclass(frozen=True)
class Remove:
    pass


@dataclass(frozen=True)
class Expand:
    power: float

    def __post_init__(self):
        if self.power <= 0:
            raise ValueError("power must be > 0")


EditOp = ColorEdit | Shift | Rotate | Remove | Expand


@dataclass(frozen=True)
class EditResult:
    image: ImageTensor
    mask: RegionMask
    inpainted_pixels: int


def parse_edit_spec(items: list) -> list[EditOp]:
    """Parse the wire-format JSON list into typed ops (order preserved)."""
    ops: list[EditOp] = []
    for item in items:
        kind = item.get("op")
        if kind == "color":
            ops.append(ColorEdit(float(item.get("dr", 0.0)), float(item.get("dg", 0.0)),
                                 float(item.get("db", 0.0))))
        elif kind == "shift":
            ops.append(Shift(float(item["dx"]), float(item["dy"])))
        elif kind == "rotate":
            ops.append(Rotate(float(item["angle"])))
        elif kind == "remove":
            ops.append(Remove())
        elif kind == "expand":
            ops.append(Expand(float(item["power"])))
        else:
            raise ValueError(f"unknown edit op {kind!r}")
    return ops


def edit_spec_to_json(ops: list[EditOp]) -> list:
    out = []
    for op in ops:
        if isinstance(op, ColorEdit):
            out.append({"op": "color", "dr": op.dr, "dg": op.dg, "db": op.db})
        elif isinstance(op, Shift):
            out.append({"op": "shift", "dx": op.dx, "dy": op.dy})
        elif isinstance(op, Rotate):
            out.append({"op": "rotate", "angle": op.angle})
        elif isinstance(op, Remove):
            out.append({"op": "remove"})
        elif isinstance(op, Expand):
            out.append({"op": "expand", "power": op.power})
        else:
            raise TypeError(f"not an edit op: {op!r}")
    return out


def _centroid(mask: np.ndarray) -> tuple[float, float]:
    rows, cols = np.nonzero(mask)
    cy = np.floor(rows.mean() * 2.0 + 0.5) / 2.0  # half-pixel grid
    cx = np.floor(cols.mean() * 2.0 + 0.5) / 2.0
    return cy, cx


def _bilinear_at(arr: np.ndarray, rr: np.ndarray, cc: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    rr = np.clip(rr, 0.0, h - 1.0)
    cc = np.clip(cc, 0.0, w - 1.0)
    r0 = np.floor(rr).astype(int)
    c0 = np.floor(cc).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rr - r0)[:, None]
    fc = (cc - c0)[:, None]
    return (arr[r0, c0] * (1 - fr) * (1 - fc) + arr[r0, c1] * (1 - fr) * fc
            + arr[r1, c0] * fr * (1 - fc) + arr[r1, c1] * fr * fc)


def _affine_move(arr: np.ndarray, mask: np.ndarray, fwd: np.ndarray,
                 center: tuple[float, float], shift: tuple[float, float]):
    """Move region content under dst = fwd @ (src - center) + center + shift.

    Returns (new array, new footprint, inpainted pixel count). Source
    pixels uncovered by the move are biharmonic-inpainted after the moved
    content is pasted, so the fill borrows from both background and the
    piece's new location.
    """
    h, w = arr.shape[:2]
    inv = np.linalg.inv(fwd)
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    dr = rr - center[0] - shift[0]
    dc = cc - center[1] - shift[1]
    src_r = inv[0, 0] * dr + inv[0, 1] * dc + center[0]
    src_c = inv[1, 0] * dr + inv[1, 1] * dc + center[1]

    near_r = np.rint(src_r).astype(int)
    near_c = np.rint(src_c).astype(int)
    inside = (near_r >= 0) & (near_r < h) & (near_c >= 0) & (near_c < w)
    new_mask = np.zeros_like(mask)
    ok = inside.ravel()
    new_mask.ravel()[ok] = mask[near_r.ravel()[ok], near_c.ravel()[ok]]
    if not new_mask.any():
        raise RegionLeftImage("every region pixel mapped outside the image")

    out = arr.copy()
    dst_idx = np.nonzero(new_mask)
    out[dst_idx] = _bilinear_at(arr, src_r[dst_idx], src_c[dst_idx])

    exposed = mask & ~new_mask
    inpainted = int(exposed.sum())
    if inpainted:
        out, _ = biharmonic_fill(out, exposed)
    return out, new_mask, inpainted


def _apply_one(arr: np.ndarray, mask: np.ndarray, op: EditOp):
    if not mask.any():
        raise EmptyMask("edit requires a nonempty region")
    if isinstance(op, ColorEdit):
        out = arr.copy()
        if arr.shape[2] == 1:
            out[mask, 0] += (op.dr + op.dg + op.db) / 3.0
        else:
            out[mask] += np.array([op.dr, op.dg, op.db])
        return out, mask, 0
    if isinstance(op, Shift):
        return _affine_move(arr, mask, np.eye(2), _centroid(mask), (op.dy, op.dx))
    if isinstance(op, Rotate):
        t = np.deg2rad(op.angle)
        # (row, col) frame: +angle turns +x (col) toward +y (row)
        fwd = np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])
        return _affine_move(arr, mask, fwd, _centroid(mask), (0.0, 0.0))
    if isinstance(op, Expand):
        fwd = np.eye(2) * op.power
        return _affine_move(arr, mask, fwd, _centroid(mask), (0.0, 0.0))
    if isinstance(op, Remove):
        filled, _ = biharmonic_fill(arr, mask)
        return filled, np.zeros_like(mask), int(mask.sum())
    raise TypeError(f"not an edit op: {op!r}")


def apply_edits(img: ImageTensor, mask: RegionMask, spec: list[EditOp]) -> EditResult:
    """Apply ops in list order; empty spec is the identity on (image, mask)."""
    mask.matches(img).require_selection()
    if not spec:
        return EditResult(img, mask, 0)
    arr = img.data.copy()
    cur = mask.data.copy()
    total_inpainted = 0
    for op in spec:
        if not cur.any():
            break  # a removed region cannot be edited further
        arr, cur, n = _apply_one(arr, cur, op)
        np.clip(arr, 0.0, 1.0, out=arr)
        total_inpainted += n
    return EditResult(clip01(arr), RegionMask(cur), total_inpainted)


def rotate_region(img: ImageTensor, mask: RegionMask, angle: float) -> EditResult:
    return apply_edits(img, mask, [Rotate(angle)])


def remove_region(img: ImageTensor, mask: RegionMask) -> EditResult:
    return apply_edits(img, mask, [Remove()])


def expand_region(img: ImageTensor, mask: RegionMask, power: float) -> EditResult:
    return apply_edits(img, mask, [Expand(power)])


def shift_region(img: ImageTensor, mask: RegionMask, dx: float, dy: float) -> EditResult:
    return apply_edits(img, mask, [Shift(dx, dy)])
