"""Digit datasets: IDX file parsing and a self-contained training corpus.

``read_idx``/``write_idx`` speak the classic big-endian IDX format used by
the MNIST distribution (magic 0x00000803 for image stacks, 0x00000801 for
label vectors), transparently handling ``.gz`` compression. If a directory
already holds the four standard files they are loaded as-is, so a real
MNIST download drops in unchanged.

When no files are present, ``ensure_dataset`` synthesizes a corpus from the
1797 scikit-learn handwritten digit scans: each 8x8 original is upscaled,
slightly rotated, jittered in position and intensity, and pasted onto a
28x28 canvas. Train and test draw from disjoint source scans so the test
split measures generalization, not memorization. The synthetic corpus is
written back out as IDX files, keeping every downstream path identical.
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np
from scipy import ndimage

from .errors import MalformedImage
from .imgcore import _resample_bilinear

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801

_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _open_maybe_gzip(path: str, mode: str):
    if path.endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def read_idx(path: str) -> np.ndarray:
    """Read one IDX file into a uint8 array (labels 1-D, images 3-D)."""
    with _open_maybe_gzip(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise MalformedImage(f"{path}: truncated IDX header")
    magic = struct.unpack(">i", raw[:4])[0]
    if magic == _LABEL_MAGIC:
        ndim = 1
    elif magic == _IMAGE_MAGIC:
        ndim = 3
    else:
        raise MalformedImage(f"{path}: bad IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise MalformedImage(f"{path}: truncated IDX dimensions")
    dims = struct.unpack(f">{ndim}i", raw[4:header])
    expected = int(np.prod(dims))
    body = np.frombuffer(raw, dtype=np.uint8, offset=header)
    if len(body) != expected:
        raise MalformedImage(f"{path}: payload {len(body)} bytes, expected {expected}")
    return body.reshape(dims).copy()


def write_idx(path: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim == 1:
        magic = _LABEL_MAGIC
    elif arr.ndim == 3:
        magic = _IMAGE_MAGIC
    else:
        raise ValueError(f"IDX arrays are 1-D or 3-D, got {arr.ndim}-D")
    with _open_maybe_gzip(path, "wb") as fh:
        fh.write(struct.pack(">i", magic))
        fh.write(struct.pack(f">{arr.ndim}i", *arr.shape))
        fh.write(arr.tobytes())


def _find_file(root: str, stem: str) -> str | None:
    for name in (stem, stem + ".gz"):
        path = os.path.join(root, name)
        if os.path.isfile(path):
            return path
    return None


def load_dataset(root: str):
    """Load the four IDX files under ``root``.

    Returns ((train_x, train_y), (test_x, test_y)) with images as float64
    in [0, 1] shaped (N, H, W) and labels as int64.
    """
    paths = {}
    for key, stem in _FILES.items():
        found = _find_file(root, stem)
        if found is None:
            raise FileNotFoundError(f"{root}: missing {stem}[.gz]")
        paths[key] = found
    out = []
    for part in ("train", "test"):
        x = read_idx(paths[f"{part}_images"]).astype(np.float64) / 255.0
        y = read_idx(paths[f"{part}_labels"]).astype(np.int64)
        if len(x) != len(y):
            raise MalformedImage(f"{root}: {part} images/labels length mismatch")
        out.append((x, y))
    return tuple(out)


def _paste_variant(base: np.ndarray, rng: np.random.Generator, canvas: int = 28) -> np.ndarray:
    """One augmented 28x28 digit from an 8x8 source scan in [0, 1]."""
    size = int(rng.integers(16, 22))
    patch = _resample_bilinear(base[:, :, None], (size, size))[:, :, 0]
    angle = float(rng.uniform(-12.0, 12.0))
    patch = ndimage.rotate(patch, angle, reshape=False, order=1, cval=0.0)
    patch = np.clip(patch * float(rng.uniform(0.75, 1.0)), 0.0, 1.0)
    img = np.zeros((canvas, canvas))
    free = canvas - size
    r0 = int(np.clip(free // 2 + rng.integers(-3, 4), 0, free))
    c0 = int(np.clip(free // 2 + rng.integers(-3, 4), 0, free))
    img[r0:r0 + size, c0:c0 + size] = patch
    return img


def build_synthetic_corpus(n_train: int = 10000, n_test: int = 2000, seed: int = 0):
    """Augmented digit corpus from the scikit-learn scans, leakage-free."""
    from sklearn.datasets import load_digits

    bundle = load_digits()
    images = bundle.images / 16.0
    labels = bundle.target.astype(np.int64)
    rng = np.random.default_rng(seed)

    # Hold out one sixth of the source scans, stratified by digit, before
    # any augmentation so no test variant shares a source with training.
    test_src = np.zeros(len(labels), dtype=bool)
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        held = rng.choice(idx, size=max(1, len(idx) // 6), replace=False)
        test_src[held] = True

    def synth(pool: np.ndarray, count: int):
        xs = np.empty((count, 28, 28))
        ys = np.empty(count, dtype=np.int64)
        for i in range(count):
            j = int(rng.choice(pool))
            xs[i] = _paste_variant(images[j], rng)
            ys[i] = labels[j]
        return xs, ys

    train = synth(np.flatnonzero(~test_src), n_train)
    test = synth(np.flatnonzero(test_src), n_test)
    return train, test


def save_dataset(root: str, train, test) -> None:
    os.makedirs(root, exist_ok=True)
    for part, (x, y) in (("train", train), ("test", test)):
        x8 = np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)
        write_idx(os.path.join(root, _FILES[f"{part}_images"]), x8)
        write_idx(os.path.join(root, _FILES[f"{part}_labels"]), np.asarray(y, dtype=np.uint8))


def ensure_dataset(root: str, n_train: int = 10000, n_test: int = 2000, seed: int = 0):
    """Load the IDX dataset under ``root``, synthesizing it first if absent."""
    try:
        return load_dataset(root)
    except FileNotFoundError:
        pass
    train, test = build_synthetic_corpus(n_train=n_train, n_test=n_test, seed=seed)
    save_dataset(root, train, test)
    return load_dataset(root)


def load_png_dataset(root: str):
    """Load a flat PNG directory with a ``labels.csv`` of filename,label rows.

    Returns (x, y) with images float64 in [0, 1] shaped (N, H, W); color
    sources are averaged to one channel. All images must share one size.
    """
    import csv as _csv

    from .imgcore import decode_image

    index = os.path.join(root, "labels.csv")
    if not os.path.isfile(index):
        raise FileNotFoundError(f"{root}: no labels.csv")
    xs, ys = [], []
    with open(index, newline="") as fh:
        for row in _csv.reader(fh):
            if not row or row[0].strip().lower() in ("filename", "file"):
                continue
            name, label = row[0].strip(), int(row[1])
            with open(os.path.join(root, name), "rb") as img_fh:
                img = decode_image(img_fh.read()).to_gray()
            xs.append(img.data[:, :, 0])
            ys.append(label)
    if not xs:
        raise MalformedImage(f"{root}: labels.csv lists no images")
    shapes = {a.shape for a in xs}
    if len(shapes) != 1:
        raise MalformedImage(f"{root}: mixed image sizes {sorted(shapes)}")
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


def load_any_dataset(root: str):
    """IDX layout when present, else PNG directory split 80/20.

    Returns ((train_x, train_y), (test_x, test_y)) either way.
    """
    try:
        return load_dataset(root)
    except FileNotFoundError:
        pass
    x, y = load_png_dataset(root)
    cut = max(1, int(len(x) * 0.8)) if len(x) > 1 else 1
    return (x[:cut], y[:cut]), (x[cut:], y[cut:])
