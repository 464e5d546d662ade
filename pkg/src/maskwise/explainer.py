"""Local surrogate explanations over superpixel inclusion vectors.

The pipeline: sample binary inclusion vectors (which superpixels stay),
render each vector by occluding the dropped superpixels, score every
rendering with the black-box predictor, weight samples by similarity to
the unperturbed prediction, then fit a weighted ridge model whose
coefficients rank the superpixels. Positive coefficients support the
target class, negative ones oppose it.

Determinism: everything downstream of an ExplainConfig seed is reproducible
bit for bit, including the sample matrix and the fitted weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import LengthMismatch, SingularSystem
from .imgcore import ImageTensor, TrinaryMask
from .predictor import Predictor, ProbabilityVector
from .segmentation import SuperpixelMap

_OCCLUSIONS = ("mean-color", "constant-gray")
_DISTANCES = ("class", "vector")
_RENDER_CHUNK = 64
_GRAY = 0.5


@dataclass(frozen=True)
class ExplainConfig:
    num_samples: int = 1000
    num_features: int = 5
    kernel_width: float = 0.25
    ridge_alpha: float = 1.0
    occlusion: str = "mean-color"
    target_class: int | None = None
    distance_mode: str = "class"
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if not self.kernel_width > 0:
            raise ValueError("kernel_width must be > 0")
        if self.ridge_alpha < 0:
            raise ValueError("ridge_alpha must be >= 0")
        if self.occlusion not in _OCCLUSIONS:
            raise ValueError(f"occlusion must be one of {_OCCLUSIONS}")
        if self.distance_mode not in _DISTANCES:
            raise ValueError(f"distance_mode must be one of {_DISTANCES}")


@dataclass(frozen=True)
class Explanation:
    target_class: int
    class_names: tuple
    baseline_probs: np.ndarray
    weights: np.ndarray
    picked: tuple
    intercept: float
    r2: float

    def __post_init__(self):
        bp = np.asarray(self.baseline_probs, dtype=np.float64)
        wt = np.asarray(self.weights, dtype=np.float64)
        bp.setflags(write=False)
        wt.setflags(write=False)
        object.__setattr__(self, "baseline_probs", bp)
        object.__setattr__(self, "weights", wt)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "picked", tuple(int(i) for i in self.picked))

    def coverage(self, spmap: SuperpixelMap) -> dict:
        """Percent of image area covered by picked-positive, picked-negative
        and remaining superpixels. The three values sum to 100."""
        counts = spmap.pixel_counts()
        total = counts.sum()
        pos = sum(counts[i] for i in self.picked if self.weights[i] > 0)
        neg = sum(counts[i] for i in self.picked if self.weights[i] < 0)
        return {
            "positive_pct": float(100.0 * pos / total),
            "negative_pct": float(100.0 * neg / total),
            "neutral_pct": float(100.0 * (total - pos - neg) / total),
        }

    def to_json_dict(self, spmap: SuperpixelMap) -> dict:
        return {
            "target_class": self.target_class,
            "class_names": list(self.class_names),
            "baseline_probs": self.baseline_probs.tolist(),
            "weights": self.weights.tolist(),
            "picked": list(self.picked),
            "intercept": self.intercept,
            "r2": self.r2,
            "coverage": self.coverage(spmap),
        }


def generate_perturbations(num_samples: int, num_superpixels: int,
                           rng: np.random.Generator) -> np.ndarray:
    """(num_samples, K) 0/1 inclusion matrix; row 0 keeps everything."""
    inc = (rng.random((num_samples, num_superpixels)) < 0.5).astype(np.float64)
    inc[0, :] = 1.0
    return inc


def _occlusion_colors(img: ImageTensor, spmap: SuperpixelMap, occlusion: str) -> np.ndarray:
    """(K, C) replacement color per superpixel."""
    k = spmap.num_superpixels
    if occlusion == "constant-gray":
        return np.full((k, img.channels), _GRAY)
    flat = img.data.reshape(-1, img.channels)
    labels = spmap.labels.ravel()
    sums = np.zeros((k, img.channels))
    np.add.at(sums, labels, flat)
    counts = spmap.pixel_counts().astype(np.float64)
    return sums / counts[:, None]


def render_perturbed(img: ImageTensor, spmap: SuperpixelMap, inclusion: np.ndarray,
                     occlusion: str = "mean-color") -> ImageTensor:
    """Render one inclusion vector: dropped superpixels get their fill color."""
    spmap.matches(img)
    inclusion = np.asarray(inclusion)
    if inclusion.shape != (spmap.num_superpixels,):
        raise LengthMismatch(f"inclusion has {inclusion.shape}, map has {spmap.num_superpixels}")
    colors = _occlusion_colors(img, spmap, occlusion)
    out = img.data.copy()
    dropped = np.flatnonzero(inclusion < 0.5)
    for lbl in dropped:
        out[spmap.labels == lbl] = colors[lbl]
    return ImageTensor(out)


def _render_batch(img: ImageTensor, spmap: SuperpixelMap, inc_rows: np.ndarray,
                  colors: np.ndarray) -> list[ImageTensor]:
    labels = spmap.labels
    out = []
    for row in inc_rows:
        arr = img.data.copy()
        for lbl in np.flatnonzero(row < 0.5):
            arr[labels == lbl] = colors[lbl]
        out.append(ImageTensor(arr))
    return out


def similarity_scores(distances: np.ndarray, kernel_width: float) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    return np.exp(-(d ** 2) / (kernel_width ** 2))


def fit_surrogate(inclusion: np.ndarray, targets: np.ndarray, sample_weights: np.ndarray,
                  alpha: float):
    """Weighted ridge regression; the intercept column is not penalized.

    Minimizes sum_i w_i (y_i - b0 - b.x_i)^2 + alpha * ||b||^2 and returns
    (intercept, coefficients, weighted r2).
    """
    x = np.asarray(inclusion, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    w = np.asarray(sample_weights, dtype=np.float64)
    n, k = x.shape
    if y.shape != (n,) or w.shape != (n,):
        raise LengthMismatch("targets/sample_weights do not match inclusion rows")
    if w.sum() <= 0:
        raise SingularSystem("all sample weights vanished; widen the kernel")

    design = np.hstack([np.ones((n, 1)), x])
    wd = design * w[:, None]
    lhs = design.T @ wd
    lhs[1:, 1:] += alpha * np.eye(k)
    rhs = design.T @ (w * y)
    try:
        beta = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"normal equations are singular: {exc}") from exc
    if not np.isfinite(beta).all():
        raise SingularSystem("surrogate coefficients are non-finite")

    pred = design @ beta
    w_mean = (w * y).sum() / w.sum()
    ss_res = (w * (y - pred) ** 2).sum()
    ss_tot = (w * (y - w_mean) ** 2).sum()
    if ss_tot < 1e-15:
        r2 = 1.0 if ss_res < 1e-12 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(beta[0]), beta[1:], float(r2)


def pick_top(weights: np.ndarray, num_features: int) -> tuple:
    """Indices of the largest-magnitude coefficients, ties to lower index."""
    order = sorted(range(len(weights)), key=lambda i: (-abs(weights[i]), i))
    return tuple(order[:min(num_features, len(weights))])


def explain(img: ImageTensor, spmap: SuperpixelMap, predictor: Predictor,
            config: ExplainConfig = ExplainConfig()) -> Explanation:
    """Full pipeline: sample, render, predict, weight, fit, pick."""
    spmap.matches(img)
    k = spmap.num_superpixels
    if config.num_samples < 4 * k:
        warnings.warn(
            f"num_samples={config.num_samples} is below 4x the superpixel count ({k}); "
            "surrogate weights may be unstable", stacklevel=2)

    rng = np.random.default_rng(config.seed)
    inclusion = generate_perturbations(config.num_samples, k, rng)
    colors = _occlusion_colors(img, spmap, config.occlusion)

    probs = np.empty((config.num_samples, 0))
    rows: list[np.ndarray] = []
    names: tuple = ()
    for start in range(0, config.num_samples, _RENDER_CHUNK):
        batch = _render_batch(img, spmap, inclusion[start:start + _RENDER_CHUNK], colors)
        for pv in predictor.predict_batch(batch):
            rows.append(pv.values)
            names = pv.class_names
    probs = np.asarray(rows)

    baseline = probs[0]
    target = int(baseline.argmax()) if config.target_class is None else int(config.target_class)
    if not 0 <= target < probs.shape[1]:
        raise IndexError(f"target_class {target} out of range for {probs.shape[1]} classes")

    if config.distance_mode == "class":
        dist = np.abs(baseline[target] - probs[:, target])
    else:
        dist = np.sqrt(((probs - baseline) ** 2).sum(axis=1))
    sim = similarity_scores(dist, config.kernel_width)
    intercept, weights, r2 = fit_surrogate(inclusion, probs[:, target], sim,
                                           config.ridge_alpha)
    picked = pick_top(weights, config.num_features)
    return Explanation(target_class=target, class_names=names, baseline_probs=baseline,
                       weights=weights, picked=picked, intercept=intercept, r2=r2)


def trinary_mask(spmap: SuperpixelMap, explanation: Explanation) -> TrinaryMask:
    """+1 over picked-positive superpixels, -1 over picked-negative, 0 rest."""
    values = np.zeros(spmap.num_superpixels, dtype=np.int8)
    for i in explanation.picked:
        w = explanation.weights[i]
        if w > 0:
            values[i] = 1
        elif w < 0:
            values[i] = -1
    return TrinaryMask(values[spmap.labels])


def render_overlay(img: ImageTensor, spmap: SuperpixelMap, explanation: Explanation,
                   alpha: float = 0.4) -> ImageTensor:
    """Tint picked superpixels green (supporting) or red (opposing)."""
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must be in [0, 1]")
    base = img.to_rgb().data.copy()
    tri = trinary_mask(spmap, explanation).data
    green = np.array([0.0, 1.0, 0.0])
    red = np.array([1.0, 0.0, 0.0])
    base[tri == 1] = (1 - alpha) * base[tri == 1] + alpha * green
    base[tri == -1] = (1 - alpha) * base[tri == -1] + alpha * red
    return ImageTensor(base)


def compare_predictions(before: ProbabilityVector, after: ProbabilityVector) -> list[dict]:
    """Per-class probability shift table, sorted by the original ranking."""
    if before.class_names != after.class_names:
        raise LengthMismatch("probability vectors disagree on class names")
    b = before.values
    a = after.values
    rank_before = {int(i): r for r, i in enumerate(np.argsort(-b, kind="stable"))}
    rank_after = {int(i): r for r, i in enumerate(np.argsort(-a, kind="stable"))}
    rows = []
    for idx in sorted(rank_before, key=rank_before.get):
        rows.append({
            "class_index": idx,
            "class_name": before.class_names[idx],
            "original_pct": 100.0 * float(b[idx]),
            "edited_pct": 100.0 * float(a[idx]),
            "delta_pct": 100.0 * float(a[idx] - b[idx]),
            "rank_change": rank_before[idx] - rank_after[idx],
        })
    return rows
