"""Biharmonic hole filling on the pixel grid.

Solves the discrete fourth-order equation grad^4 u = 0 on the hole pixels,
channel by channel, with all known pixels acting as Dirichlet data. The
operator is the 13-point stencil obtained by squaring the 5-point
Laplacian:

              1
          2  -8   2
      1  -8  20  -8   1
          2  -8   2
              1

Stencil taps that fall outside the image are reflected back in
(symmetric half-sample reflection), so holes touching the border remain
well posed. Coefficients folded onto the same pixel accumulate, which
keeps every row sum at zero: constants are reproduced exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg, splu

from .errors import EmptyMask, MaskCoversEverything, SolverDiverged
from .imgcore import ImageTensor, RegionMask, clip01

# (dr, dc, coefficient) for the squared 5-point Laplacian
_STENCIL = (
    (0, 0, 20.0),
    (-1, 0, -8.0), (1, 0, -8.0), (0, -1, -8.0), (0, 1, -8.0),
    (-1, -1, 2.0), (-1, 1, 2.0), (1, -1, 2.0), (1, 1, 2.0),
    (-2, 0, 1.0), (2, 0, 1.0), (0, -2, 1.0), (0, 2, 1.0),
)

_DENSE_LIMIT = 2000


@dataclass(frozen=True)
class InpaintInfo:
    num_unknowns: int
    residual_inf: float
    method: str


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    idx = idx.copy()
    while True:
        neg = idx < 0
        idx[neg] = -idx[neg] - 1
        over = idx >= n
        idx[over] = 2 * n - 1 - idx[over]
        if not (neg.any() or over.any()):
            return idx


def _build_system(hole: np.ndarray):
    """Assemble A (unknowns x unknowns) and B (unknowns x all pixels).

    Row i of the solve reads: sum_j A[i,j] u_j = -(B @ known_values)[i].
    """
    h, w = hole.shape
    idx_map = np.full(h * w, -1, dtype=np.int64)
    flat_hole = hole.ravel()
    m = int(flat_hole.sum())
    idx_map[flat_hole] = np.arange(m)
    rows, cols = np.nonzero(hole)

    a_i, a_j, a_v = [], [], []
    b_i, b_j, b_v = [], [], []
    eq = np.arange(m)
    for dr, dc, coef in _STENCIL:
        nr = _reflect(rows + dr, h)
        nc = _reflect(cols + dc, w)
        flat = nr * w + nc
        unknown = flat_hole[flat]
        a_i.append(eq[unknown])
        a_j.append(idx_map[flat[unknown]])
        a_v.append(np.full(int(unknown.sum()), coef))
        known = ~unknown
        b_i.append(eq[known])
        b_j.append(flat[known])
        b_v.append(np.full(int(known.sum()), coef))

    A = coo_matrix(
        (np.concatenate(a_v), (np.concatenate(a_i), np.concatenate(a_j))), shape=(m, m)
    ).tocsr()
    B = coo_matrix(
        (np.concatenate(b_v), (np.concatenate(b_i), np.concatenate(b_j))), shape=(m, h * w)
    ).tocsr()
    return A, B


def biharmonic_fill(arr: np.ndarray, hole: np.ndarray, tol: float = 1e-6) -> tuple[np.ndarray, InpaintInfo]:
    """Fill ``hole`` pixels of a raw (H, W, C) array; values are NOT clipped.

    Returns the filled array and solver diagnostics. Raises SolverDiverged
    when no solve path reaches an infinity-norm residual below ``tol``.
    """
    arr = np.asarray(arr, dtype=np.float64)
    hole = np.asarray(hole, dtype=bool)
    if not hole.any():
        raise EmptyMask("hole selects zero pixels")
    if hole.all():
        raise MaskCoversEverything("no known pixels left to anchor the fill")

    A, B = _build_system(hole)
    m = A.shape[0]
    flat = arr.reshape(-1, arr.shape[2])
    out = arr.copy()
    worst = 0.0
    method = "dense" if m <= _DENSE_LIMIT else "cg"
    dense_a = A.toarray() if m <= _DENSE_LIMIT else None
    lu = None
    for ch in range(arr.shape[2]):
        rhs = -(B @ flat[:, ch])
        if dense_a is not None:
            u = np.linalg.solve(dense_a, rhs)
        else:
            u, info = cg(A, rhs, rtol=0.0, atol=tol * 1e-3, maxiter=max(2000, 20 * m))
            if info != 0 or np.abs(A @ u - rhs).max() >= tol:
                lu = lu if lu is not None else splu(A.tocsc())
                u = lu.solve(rhs)
                method = "splu"
        resid = float(np.abs(A @ u - rhs).max())
        if resid >= tol:
            raise SolverDiverged(f"residual {resid:.3e} >= {tol:.1e} on {m} unknowns")
        worst = max(worst, resid)
        out.reshape(-1, arr.shape[2])[hole.ravel(), ch] = u
    return out, InpaintInfo(m, worst, method)


def inpaint_biharmonic(img: ImageTensor, hole: RegionMask, tol: float = 1e-6) -> ImageTensor:
    """Replace the hole pixels of an image by the biharmonic fill.

    All pixels outside the hole are bit-identical to the input; fill values
    are clipped into [0, 1] to satisfy the image invariant.
    """
    hole.matches(img)
    filled, _ = biharmonic_fill(img.data, hole.data, tol=tol)
    return clip01(filled)
