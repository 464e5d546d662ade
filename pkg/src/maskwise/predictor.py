"""Black-box model abstraction: batch of images -> class probability vectors.

Three interchangeable predictor kinds sit behind one contract:

* ``builtin-linear`` -- softmax over a single linear map; handy as a toy
  model with closed-form behavior in tests.
* ``builtin-mlp`` -- one-hidden-layer MLP (flatten -> rectifier -> softmax)
  trained here with deterministic mini-batch gradient descent.
* ``remote`` -- JSON-over-HTTP client for any external model server.

Probability vectors are validated at every boundary, builtin and remote
alike. Inputs are resampled to the predictor's native size internally and
channel counts are adapted (gray replicated, color averaged).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import requests

from .errors import (
    NonFiniteLoss,
    NonFiniteOutput,
    ProtocolViolation,
    RemoteUnavailable,
    ShapeMismatch,
)
from .imgcore import ImageTensor, resample

_SUM_TOL = 1e-5
_REMOTE_SUM_TOL = 1e-3


@dataclass(frozen=True)
class ProbabilityVector:
    values: np.ndarray
    class_names: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        names = tuple(str(n) for n in self.class_names)
        if vals.ndim != 1 or len(vals) != len(names):
            raise ShapeMismatch(f"{len(vals)} probabilities for {len(names)} classes")
        if not np.isfinite(vals).all():
            raise NonFiniteOutput("probabilities contain non-finite values")
        if vals.min() < -1e-12 or vals.max() > 1.0 + 1e-12:
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(vals.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {vals.sum():.8f}, not 1")
        vals = np.clip(vals, 0.0, 1.0)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "class_names", names)

    @property
    def argmax(self) -> int:
        return int(self.values.argmax())


@dataclass(frozen=True)
class PredictorSpec:
    kind: str
    input_dims: tuple
    endpoint: str | None = None
    batch_limit: int = 128

    def __post_init__(self):
        h, w, c = self.input_dims
        if h <= 0 or w <= 0 or c not in (1, 3):
            raise ValueError(f"bad input_dims {self.input_dims}")
        if self.batch_limit < 1:
            raise ValueError("batch_limit must be >= 1")
        object.__setattr__(self, "input_dims", (int(h), int(w), int(c)))

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dims": list(self.input_dims),
            "endpoint": self.endpoint,
            "batch_limit": self.batch_limit,
        }


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Predictor:
    """Base class; subclasses implement ``_logits`` over flattened batches."""

    spec: PredictorSpec
    class_names: tuple

    def _flatten(self, imgs: Sequence[ImageTensor]) -> np.ndarray:
        h, w, c = self.spec.input_dims
        rows = []
        for img in imgs:
            img = resample(img, (h, w))
            if img.channels != c:
                img = img.to_rgb() if c == 3 else img.to_gray()
            rows.append(img.data.ravel())
        return np.asarray(rows)

    def _logits(self, flat: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_batch(self, imgs: Sequence[ImageTensor]) -> list[ProbabilityVector]:
        """One ProbabilityVector per input, order preserving."""
        if not imgs:
            return []
        out: list[ProbabilityVector] = []
        lim = self.spec.batch_limit
        for start in range(0, len(imgs), lim):
            flat = self._flatten(imgs[start:start + lim])
            probs = _softmax(self._logits(flat))
            if not np.isfinite(probs).all():
                raise NonFiniteOutput("model produced non-finite probabilities")
            out.extend(ProbabilityVector(p, self.class_names) for p in probs)
        return out


def predict_batch(p: Predictor, imgs: Sequence[ImageTensor]) -> list[ProbabilityVector]:
    return p.predict_batch(imgs)


class LinearPredictor(Predictor):
    def __init__(self, weights: np.ndarray, bias: np.ndarray, class_names,
                 input_dims, batch_limit: int = 128):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.class_names = tuple(str(n) for n in class_names)
        d = int(np.prod(input_dims))
        if self.weights.shape != (len(self.class_names), d):
            raise ShapeMismatch(f"weights {self.weights.shape} vs (C={len(self.class_names)}, D={d})")
        self.spec = PredictorSpec("builtin-linear", tuple(input_dims), batch_limit=batch_limit)

    def _logits(self, flat: np.ndarray) -> np.ndarray:
        return flat @ self.weights.T + self.bias

    @classmethod
    def uniform(cls, num_classes: int, input_dims, class_names=None) -> "LinearPredictor":
        """All-zero weights: every input maps to the uniform distribution."""
        names = class_names or [f"class_{i}" for i in range(num_classes)]
        d = int(np.prod(input_dims))
        return cls(np.zeros((num_classes, d)), np.zeros(num_classes), names, input_dims)

    @classmethod
    def random(cls, num_classes: int, input_dims, seed: int = 0) -> "LinearPredictor":
        rng = np.random.default_rng(seed)
        d = int(np.prod(input_dims))
        w = rng.normal(0.0, 1.0 / np.sqrt(d), size=(num_classes, d))
        b = rng.normal(0.0, 0.01, size=num_classes)
        names = [f"class_{i}" for i in range(num_classes)]
        return cls(w, b, names, input_dims)


class MlpPredictor(Predictor):
    """Flatten -> hidden rectifier layer -> softmax readout."""

    def __init__(self, w1, b1, w2, b2, class_names, input_dims, batch_limit: int = 128):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.class_names = tuple(str(n) for n in class_names)
        d = int(np.prod(input_dims))
        if self.w1.shape[0] != d or self.w2.shape != (self.w1.shape[1], len(self.class_names)):
            raise ShapeMismatch("mlp parameter shapes are inconsistent")
        self.spec = PredictorSpec("builtin-mlp", tuple(input_dims), batch_limit=batch_limit)

    def _logits(self, flat: np.ndarray) -> np.ndarray:
        hidden = np.maximum(flat @ self.w1 + self.b1, 0.0)
        return hidden @ self.w2 + self.b2


def mlp_loss_and_grads(params: dict, x: np.ndarray, y: np.ndarray, smooth: float = 0.0):
    """Mean cross-entropy and analytic gradients for the one-hidden MLP.

    x is (N, D); y is (N,) integer labels. ``smooth`` blends the one-hot
    targets toward uniform, which keeps the trained softmax away from
    0/1 saturation. Kept standalone so tests can difference it against
    finite-difference estimates.
    """
    w1, b1, w2, b2 = params["w1"], params["b1"], params["w2"], params["b2"]
    n = x.shape[0]
    classes = w2.shape[1]
    z1 = x @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ w2 + b2
    probs = _softmax(logits)
    eps = 1e-12
    targets = np.full((n, classes), smooth / classes)
    targets[np.arange(n), y] += 1.0 - smooth
    loss = -(targets * np.log(probs + eps)).sum(axis=1).mean()
    dlogits = (probs - targets) / n
    grads = {
        "w2": a1.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    da1 = dlogits @ w2.T
    dz1 = da1 * (z1 > 0)
    grads["w1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return float(loss), grads


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 128
    epochs: int = 40
    lr: float = 0.25
    batch_size: int = 32
    # Half of each minibatch gets Gaussian noise at a per-row level drawn
    # uniformly from [0, noise_sigma], so the model degrades gracefully on
    # corrupted inputs instead of collapsing.
    noise_sigma: float = 0.8
    # label smoothing keeps output probabilities off the 0/1 rails, so
    # occlusion-style probing sees a responsive model instead of a step
    label_smooth: float = 0.1
    seed: int = 0


def _accuracy(pred: MlpPredictor, flat: np.ndarray, y: np.ndarray) -> float:
    return float((_softmax(pred._logits(flat)).argmax(axis=1) == y).mean())


def train_builtin_mlp(train, hyper: TrainConfig, test=None, class_names=None):
    """Train the builtin MLP with seeded mini-batch gradient descent.

    ``train``/``test`` are (images, labels) pairs where images are float
    arrays in [0, 1] shaped (N, H, W) or (N, H, W, C). Returns the trained
    predictor plus a metrics dict with final train/test accuracy.
    """
    x, y = train
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., None]
    n, h, w, c = x.shape
    y = np.asarray(y, dtype=np.int64)
    classes = int(y.max()) + 1 if class_names is None else len(class_names)
    if classes < 2:
        raise ValueError("need at least 2 classes")
    names = class_names or [str(i) for i in range(classes)]
    flat = x.reshape(n, -1)
    d = flat.shape[1]

    rng = np.random.default_rng(hyper.seed)
    params = {
        "w1": rng.normal(0.0, np.sqrt(2.0 / d), size=(d, hyper.hidden)),
        "b1": np.zeros(hyper.hidden),
        "w2": rng.normal(0.0, np.sqrt(2.0 / hyper.hidden), size=(hyper.hidden, classes)),
        "b2": np.zeros(classes),
    }
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            xb = flat[idx]
            if hyper.noise_sigma > 0:
                # corrupt half of each batch, each row at its own level up to
                # noise_sigma, so accuracy degrades gracefully across the whole
                # range while clean inputs stay well fit
                noisy = rng.random(len(xb)) < 0.5
                levels = rng.uniform(0.0, hyper.noise_sigma, size=(len(xb), 1))
                xb = xb.copy()
                xb[noisy] = np.clip(
                    xb[noisy] + rng.normal(0.0, 1.0, size=xb.shape)[noisy] * levels[noisy],
                    0.0, 1.0)
            loss, grads = mlp_loss_and_grads(params, xb, y[idx], smooth=hyper.label_smooth)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss}; lower the learning rate")
            for key in params:
                params[key] = params[key] - hyper.lr * grads[key]

    pred = MlpPredictor(params["w1"], params["b1"], params["w2"], params["b2"],
                        names, (h, w, c))
    metrics = {"train_accuracy": _accuracy(pred, flat, y)}
    if test is not None:
        tx, ty = test
        tx = np.asarray(tx, dtype=np.float64)
        if tx.ndim == 3:
            tx = tx[..., None]
        metrics["test_accuracy"] = _accuracy(pred, tx.reshape(tx.shape[0], -1),
                                             np.asarray(ty, dtype=np.int64))
    return pred, metrics


def save_predictor(pred: Predictor, path: str) -> None:
    meta = {
        "class_names": np.asarray(pred.class_names),
        "input_dims": np.asarray(pred.spec.input_dims),
        "batch_limit": pred.spec.batch_limit,
    }
    # pass a handle so numpy honors the exact filename (no .npz appended)
    with open(path, "wb") as fh:
        if isinstance(pred, MlpPredictor):
            np.savez(fh, kind="builtin-mlp", w1=pred.w1, b1=pred.b1, w2=pred.w2,
                     b2=pred.b2, **meta)
        elif isinstance(pred, LinearPredictor):
            np.savez(fh, kind="builtin-linear", weights=pred.weights, bias=pred.bias, **meta)
        else:
            raise TypeError("only builtin predictors can be saved")


def load_predictor(path: str) -> Predictor:
    with np.load(path, allow_pickle=False) as z:
        kind = str(z["kind"])
        names = [str(s) for s in z["class_names"]]
        dims = tuple(int(v) for v in z["input_dims"])
        lim = int(z["batch_limit"])
        if kind == "builtin-mlp":
            return MlpPredictor(z["w1"], z["b1"], z["w2"], z["b2"], names, dims, lim)
        if kind == "builtin-linear":
            return LinearPredictor(z["weights"], z["bias"], names, dims, lim)
    raise ValueError(f"unknown predictor kind {kind!r}")


def _images_payload(imgs: Sequence[ImageTensor]) -> dict:
    return {
        "images": [
            {
                "height": im.height,
                "width": im.width,
                "channels": im.channels,
                "data": im.data.ravel().tolist(),
            }
            for im in imgs
        ]
    }


def remote_predict(endpoint: str, imgs: Sequence[ImageTensor], batch_limit: int = 128,
                   retries: int = 3, timeout: float = 30.0) -> list[ProbabilityVector]:
    """POST image batches to ``{endpoint}/predict`` and validate the reply.

    Connection failures and 5xx responses are retried (predict is
    idempotent) up to ``retries`` attempts per batch; contract breaches in
    a successful reply raise ProtocolViolation immediately.
    """
    url = endpoint.rstrip("/") + "/predict"
    out: list[ProbabilityVector] = []
    for start in range(0, len(imgs), batch_limit):
        chunk = imgs[start:start + batch_limit]
        payload = _images_payload(chunk)
        last_err: Exception | None = None
        for _ in range(max(1, retries)):
            try:
                resp = requests.post(url, json=payload, timeout=timeout)
            except requests.RequestException as exc:
                last_err = exc
                continue
            if resp.status_code >= 500:
                last_err = RemoteUnavailable(f"server returned {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise RemoteUnavailable(f"server returned {resp.status_code}: {resp.text[:200]}")
            out.extend(_parse_remote_reply(resp, len(chunk)))
            last_err = None
            break
        if last_err is not None:
            raise RemoteUnavailable(f"{url} unreachable after {retries} attempts: {last_err}")
    return out


def _parse_remote_reply(resp, expected: int) -> list[ProbabilityVector]:
    try:
        body = resp.json()
        names = tuple(str(n) for n in body["class_names"])
        rows = body["probabilities"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolViolation(f"malformed prediction response: {exc}") from exc
    if len(rows) != expected:
        raise ProtocolViolation(f"expected {expected} rows, got {len(rows)}")
    out = []
    for row in rows:
        vals = np.asarray(row, dtype=np.float64)
        if vals.shape != (len(names),):
            raise ProtocolViolation(f"row arity {vals.shape} vs {len(names)} classes")
        if not np.isfinite(vals).all():
            raise ProtocolViolation("non-finite probability in response")
        total = vals.sum()
        if abs(total - 1.0) > _REMOTE_SUM_TOL or vals.min() < -_REMOTE_SUM_TOL:
            raise ProtocolViolation(f"probability row sums to {total:.6f}")
        out.append(ProbabilityVector(np.clip(vals, 0.0, None) / max(total, 1e-12), names))
    return out


class RemotePredictor(Predictor):
    """Client-side predictor speaking the wire protocol above."""

    def __init__(self, endpoint: str, input_dims, batch_limit: int = 128, retries: int = 3):
        self.spec = PredictorSpec("remote", tuple(input_dims), endpoint=endpoint,
                                  batch_limit=batch_limit)
        self.retries = retries
        self.class_names = ()

    def predict_batch(self, imgs: Sequence[ImageTensor]) -> list[ProbabilityVector]:
        if not imgs:
            return []
        h, w, c = self.spec.input_dims
        prepared = []
        for img in imgs:
            img = resample(img, (h, w))
            if img.channels != c:
                img = img.to_rgb() if c == 3 else img.to_gray()
            prepared.append(img)
        vectors = remote_predict(self.spec.endpoint, prepared,
                                 batch_limit=self.spec.batch_limit, retries=self.retries)
        if vectors:
            self.class_names = vectors[0].class_names
        return vectors


def parse_predictor_spec(text: str) -> Predictor:
    """CLI predictor spec: ``mlp:PATH``, ``linear:PATH``, ``uniform:C@HxWxC``
    or ``remote:URL@HxWxC`` (optionally ``...@HxWxC!BATCH``)."""
    kind, _, rest = text.partition(":")
    if kind in ("mlp", "linear"):
        return load_predictor(rest)
    if kind == "uniform":
        c_str, _, dims = rest.partition("@")
        return LinearPredictor.uniform(int(c_str), _parse_dims(dims))
    if kind == "remote":
        url, _, tail = rest.rpartition("@")
        if not url:
            raise ValueError("remote spec needs URL@HxWxC")
        dims_str, _, batch = tail.partition("!")
        lim = int(batch) if batch else 128
        return RemotePredictor(url, _parse_dims(dims_str), batch_limit=lim)
    raise ValueError(f"unknown predictor spec {text!r}")


def _parse_dims(text: str) -> tuple:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ValueError(f"dims must be HxWxC, got {text!r}")
    return tuple(int(p) for p in parts)
