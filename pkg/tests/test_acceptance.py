"""Acceptance gate: one test per shipped guarantee, at pinned tolerances.

conftest prints a PASS/FAIL line per criterion after the run. The noise
study trains the builtin MLP and sweeps ten digits, so this file takes a
few minutes end to end; everything else finishes in seconds.
"""

import base64
import itertools
import json
import subprocess
import sys
import time

import numpy as np
from fastapi.testclient import TestClient

from maskwise.digits import load_dataset
from maskwise.explainer import fit_surrogate
from maskwise.imgcore import ImageTensor, RegionMask, encode_png
from maskwise.inpaint import biharmonic_fill
from maskwise.predictor import (LinearPredictor, TrainConfig, mlp_loss_and_grads,
                                save_predictor, train_builtin_mlp)
from maskwise.robustness import SweepConfig, add_gaussian_noise, run_sweep
from maskwise.segmentation import SegmentationConfig, segment, suggest_counts
from maskwise.service import create_app

from test_inpaint import STENCIL, oracle_fill, random_hole


def test_robustness_ordering(dataset_root):
    started = time.monotonic()
    train, test = load_dataset(dataset_root)
    predictor, metrics = train_builtin_mlp(train, TrainConfig(), test=test)
    assert metrics["test_accuracy"] >= 0.90, metrics

    xs = np.asarray(test[0], dtype=np.float64)[:10]
    images = [ImageTensor(x[:, :, None]) for x in xs]
    cfg = SweepConfig()
    records, summary = run_sweep(images, predictor, cfg, jobs=1)
    elapsed = time.monotonic() - started

    assert len(records) == 10 * 2 * len(cfg.sigmas)
    masked = {s: cell["mean"] for s, cell in summary["masked"].items()}
    auto = {s: cell["mean"] for s, cell in summary["auto"].items()}
    # region-guided explanations drift less once the noise is strong
    assert masked["0.6"] <= auto["0.6"], (masked, auto)
    assert masked["0.8"] <= auto["0.8"], (masked, auto)
    # and stay comparable while the noise is still mild
    a, b = masked["0.2"], auto["0.2"]
    assert abs(a - b) <= 0.25 * min(a, b), (a, b)
    assert elapsed < 900.0


def full_design(k: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.float64)


def test_surrogate_oracle_equivalence():
    rng = np.random.default_rng(11)
    for k in (4, 8, 10):
        design = full_design(k)
        y = rng.uniform(0.0, 1.0, size=len(design))
        ones = np.ones(len(design))
        x1 = np.hstack([ones[:, None], design])
        beta = np.linalg.solve(x1.T @ x1, x1.T @ y)
        intercept, coef, _ = fit_surrogate(design, y, ones, alpha=0.0)
        assert abs(intercept - beta[0]) < 1e-6
        assert np.max(np.abs(coef - beta[1:])) < 1e-6

    design = full_design(10)
    y = 0.6 * design[:, 3] + 0.1
    intercept, coef, r2 = fit_surrogate(design, y, np.ones(len(design)), alpha=0.0)
    assert abs(coef[3] - 0.6) <= 1e-6
    assert abs(intercept - 0.1) <= 1e-6
    others = np.delete(coef, 3)
    assert np.max(np.abs(others)) < 1e-6
    assert r2 > 1.0 - 1e-9


def proper_random_mask(h: int, w: int, rng) -> RegionMask:
    r0 = int(rng.integers(0, h - 1))
    r1 = int(rng.integers(r0 + 1, h + 1))
    c0 = int(rng.integers(0, w - 1))
    c1 = int(rng.integers(c0 + 1, w + 1))
    m = np.zeros((h, w), dtype=bool)
    m[r0:r1, c0:c1] = True
    if m.all():
        m[0, 0] = False  # keep the complement nonempty
    return RegionMask(m)


def test_segmentation_invariants():
    rng = np.random.default_rng(202)
    for case in range(1000):
        h = int(rng.integers(6, 15))
        w = int(rng.integers(6, 15))
        chans = 3 if case % 2 else 1
        img = ImageTensor(rng.random((h, w, chans)))
        mask = proper_random_mask(h, w, rng)
        inner_k = int(rng.integers(1, min(3, mask.count) + 1))
        outer_k = int(rng.integers(1, min(3, h * w - mask.count) + 1))
        cfg = SegmentationConfig(inner_k, outer_k,
                                 spatial_weight=float(rng.uniform(0.0, 4.0)),
                                 seed=int(rng.integers(0, 1000)))
        sp = segment(img, mask, cfg)
        k = inner_k + outer_k
        labels = sp.labels
        assert labels.shape == (h, w)
        # every label present exactly once in 0..k-1, none empty
        assert set(np.unique(labels)) == set(range(k))
        assert sorted(sp.inner_labels) == list(range(inner_k))
        # no cluster straddles the drawn boundary
        assert np.all(labels[mask.data] < inner_k)
        assert np.all(labels[~mask.data] >= inner_k)
        if case % 10 == 0:
            assert np.array_equal(segment(img, mask, cfg).labels, labels)

    for _ in range(100):
        h = int(rng.integers(4, 40))
        w = int(rng.integers(4, 40))
        mask = proper_random_mask(h, w, rng)
        total = int(rng.integers(2, 30))
        expect_inner = max(1, int(np.floor(total * mask.count / (h * w) + 0.5)))
        if expect_inner == total:
            expect_inner = total - 1
        assert suggest_counts(mask, total) == (expect_inner, total - expect_inner)


def stencil_residual(filled: np.ndarray, hole: np.ndarray) -> float:
    """Max |fourth-difference| over hole pixels whose taps stay in-bounds."""
    h, w, _ = filled.shape
    worst = 0.0
    for r, c in zip(*np.nonzero(hole)):
        if not (2 <= r < h - 2 and 2 <= c < w - 2):
            continue
        acc = np.zeros(filled.shape[2])
        for dr, dc, coeff in STENCIL:
            acc += coeff * filled[r + dr, c + dc]
        worst = max(worst, float(np.max(np.abs(acc))))
    return worst


def test_biharmonic_inpainting():
    arr = np.full((10, 12, 3), 0.42)
    hole = np.zeros((10, 12), dtype=bool)
    hole[2:7, 3:10] = True
    filled, _ = biharmonic_fill(arr, hole)
    assert np.max(np.abs(filled - 0.42)) < 1e-6
    assert stencil_residual(filled, hole) < 1e-6

    yy, xx = np.mgrid[0:12, 0:14]
    ramp = (0.1 + 0.3 * xx / 13.0 + 0.5 * yy / 11.0)[:, :, None]
    hole = np.zeros((12, 14), dtype=bool)
    hole[3:9, 4:10] = True
    filled, _ = biharmonic_fill(ramp, hole)
    assert np.max(np.abs(filled - oracle_fill(ramp, hole))) < 1e-3
    assert stencil_residual(filled, hole) < 1e-6

    rng = np.random.default_rng(77)
    for _ in range(5):
        img = rng.random((11, 13, 3))
        hole = random_hole(11, 13, rng)
        filled, _ = biharmonic_fill(img, hole)
        assert stencil_residual(filled, hole) < 1e-6


def test_mlp_gradient_check():
    rng = np.random.default_rng(7)
    d, hidden, classes, n = 8, 6, 4, 5
    params = {
        "w1": rng.normal(0.0, 0.8, size=(d, hidden)),
        "b1": rng.normal(0.0, 0.3, size=hidden),
        "w2": rng.normal(0.0, 0.8, size=(hidden, classes)),
        "b2": rng.normal(0.0, 0.3, size=classes),
    }
    x = rng.normal(0.0, 1.0, size=(n, d))
    y = rng.integers(0, classes, size=n)
    _, grads = mlp_loss_and_grads(params, x, y, smooth=0.1)
    eps = 1e-5
    worst = 0.0
    for key in params:
        flat = params[key].ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi, _ = mlp_loss_and_grads(params, x, y, smooth=0.1)
            flat[i] = keep - eps
            lo, _ = mlp_loss_and_grads(params, x, y, smooth=0.1)
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * eps)
            analytic = grads[key].ravel()[i]
            # coordinates below 1 in magnitude are compared absolutely so a
            # pair of near-zero gradients cannot divide by ~0
            scale = max(1.0, abs(analytic), abs(numeric))
            worst = max(worst, abs(analytic - numeric) / scale)
    assert worst < 1e-4, worst


def test_noise_statistics():
    flat = ImageTensor(np.full((100, 100, 1), 0.5))
    noisy = add_gaussian_noise(flat, 0.2, np.random.default_rng(31))
    sd = float(np.std(noisy.data - 0.5))
    assert 0.9 * 0.2 <= sd <= 1.1 * 0.2, sd
    assert noisy.data.min() >= 0.0 and noisy.data.max() <= 1.0

    wild = add_gaussian_noise(ImageTensor(np.random.default_rng(5).random((40, 40, 3))),
                              0.8, np.random.default_rng(6))
    assert wild.data.min() >= 0.0 and wild.data.max() <= 1.0
    assert (wild.data == 0.0).any() and (wild.data == 1.0).any()

    same = add_gaussian_noise(flat, 0.0, np.random.default_rng(31))
    assert same is flat


def test_end_to_end_determinism(tmp_path):
    img = tmp_path / "scene.png"
    arr = np.full((16, 16, 3), 0.15)
    arr[3:11, 4:12] = (0.9, 0.7, 0.2)
    img.write_bytes(encode_png(ImageTensor(arr)))
    msk = tmp_path / "mask.png"
    m = np.zeros((16, 16, 1))
    m[2:12, 3:13] = 1.0
    msk.write_bytes(encode_png(ImageTensor(m)))
    model = tmp_path / "model.npz"
    save_predictor(LinearPredictor.random(3, (16, 16, 3), seed=4), str(model))

    out = tmp_path / "out"
    argv = [sys.executable, "-m", "maskwise.cli", "explain",
            "--image", str(img), "--mask", str(msk),
            "--predictor", f"linear:{model}", "--inner-k", "2", "--outer-k", "4",
            "--samples", "200", "--seed", "3", "--out", str(out), "--json"]

    def run_once() -> dict:
        proc = subprocess.run(argv, capture_output=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        return {
            "stdout": proc.stdout,
            "explanation.json": (out / "explanation.json").read_bytes(),
            "overlay.png": (out / "overlay.png").read_bytes(),
            "trinary.png": (out / "trinary.png").read_bytes(),
        }

    first = run_once()
    second = run_once()
    assert first == second
    json.loads(first["explanation.json"])  # and it is well-formed


def gray_png_b64(arr01: np.ndarray) -> str:
    return base64.b64encode(encode_png(ImageTensor(arr01[:, :, None]))).decode()


def test_service_contract():
    client = TestClient(create_app(LinearPredictor.random(3, (16, 16, 1), seed=2)))
    scene = np.full((16, 16), 0.1)
    scene[4:12, 4:12] = 0.9
    square = [[4.0, 4.0], [12.0, 4.0], [12.0, 12.0], [4.0, 12.0]]

    def new_session() -> str:
        resp = client.post("/api/session", json={"image": gray_png_b64(scene)})
        assert resp.status_code == 200
        return resp.json()["session_id"]

    # guards: nothing downstream runs before its prerequisite
    a = new_session()
    resp = client.post(f"/api/session/{a}/segment", json={"total_k": 6})
    assert resp.status_code == 409 and resp.json()["code"] == "mask_required"
    resp = client.post(f"/api/session/{a}/edit", json={"edits": [{"op": "remove"}]})
    assert resp.status_code == 409 and resp.json()["code"] == "mask_required"
    resp = client.post(f"/api/session/{a}/explain", json={})
    assert resp.status_code == 409 and resp.json()["code"] == "segment_required"

    # isolation: progress in one session does not unlock another
    b = new_session()
    assert client.put(f"/api/session/{a}/mask",
                      json={"polygon": square}).status_code == 200
    resp = client.post(f"/api/session/{b}/segment", json={"total_k": 6})
    assert resp.status_code == 409 and resp.json()["code"] == "mask_required"

    # delegation: quarter coverage with total_k=20 splits 5 inside, 15 outside
    resp = client.post(f"/api/session/{a}/segment",
                       json={"total_k": 20, "spatial_weight": 2.0})
    assert resp.status_code == 200
    body = resp.json()
    assert (body["inner_k"], body["outer_k"]) == (5, 15)
    assert body["superpixels"]["num_superpixels"] == 20
    assert body["superpixels"]["inner_labels"] == list(range(5))

    # each session keeps its own parameters and artifacts
    assert client.put(f"/api/session/{b}/mask",
                      json={"polygon": square}).status_code == 200
    resp = client.post(f"/api/session/{b}/segment", json={"total_k": 6})
    assert resp.status_code == 200
    assert (resp.json()["inner_k"], resp.json()["outer_k"]) == (2, 4)
    for sid, k in ((a, 20), (b, 6)):
        resp = client.post(f"/api/session/{sid}/explain",
                           json={"num_samples": 96, "num_features": 2})
        assert resp.status_code == 200
        assert len(resp.json()["explanation"]["weights"]) == k
        art = client.get(f"/api/session/{sid}/artifact/overlay.png")
        assert art.status_code == 200
        assert art.content[:8] == b"\x89PNG\r\n\x1a\n"

    assert client.get("/api/session/no-such-session").status_code == 404
