"""Surrogate explanation pipeline: sampling, fitting, rendering, reporting."""

import numpy as np
import pytest

from maskwise.errors import LengthMismatch, SingularSystem
from maskwise.explainer import (
    ExplainConfig,
    Explanation,
    compare_predictions,
    explain,
    fit_surrogate,
    generate_perturbations,
    pick_top,
    render_overlay,
    render_perturbed,
    similarity_scores,
    trinary_mask,
)
from maskwise.imgcore import ImageTensor, RegionMask
from maskwise.predictor import LinearPredictor, ProbabilityVector
from maskwise.segmentation import SuperpixelMap

from conftest import rgb_image


def quadrant_map(h=8, w=8):
    labels = np.zeros((h, w), dtype=np.int32)
    labels[: h // 2, w // 2:] = 1
    labels[h // 2:, : w // 2] = 2
    labels[h // 2:, w // 2:] = 3
    return SuperpixelMap(labels, 4, frozenset({0, 1}), RegionMask(labels < 2))


def quadrant_image():
    """Quadrant 0 dark, 3 bright, 1 and 2 exactly the gray fill value."""
    arr = np.full((8, 8, 1), 0.5)
    arr[:4, :4] = 0.0
    arr[4:, 4:] = 1.0
    return ImageTensor(arr)


def brightness_predictor(scale=8.0):
    """p(class 1) increases with mean brightness; exact linear logit."""
    d = 64
    w = np.vstack([np.zeros(d), np.full(d, scale / d)])
    return LinearPredictor(w, np.zeros(2), ["dim", "bright"], (8, 8, 1))


def test_perturbations_row0_and_keep_rate(rng):
    inc = generate_perturbations(2000, 10, rng)
    assert inc.shape == (2000, 10)
    assert np.array_equal(inc[0], np.ones(10))
    assert set(np.unique(inc)) == {0.0, 1.0}
    assert abs(inc[1:].mean() - 0.5) < 0.02


def test_perturbations_reproducible():
    a = generate_perturbations(50, 6, np.random.default_rng(7))
    b = generate_perturbations(50, 6, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_similarity_closed_form():
    w = 0.3
    got = similarity_scores(np.array([0.0, w, 2 * w]), w)
    want = np.array([1.0, np.exp(-1.0), np.exp(-4.0)])
    assert np.abs(got - want).max() < 1e-15


def test_fit_surrogate_matches_augmented_lstsq(rng):
    n, k = 50, 6
    x = (rng.random((n, k)) < 0.5).astype(float)
    y = rng.normal(0.0, 1.0, size=n)
    w = rng.uniform(0.1, 2.0, size=n)
    alpha = 0.7
    intercept, coef, r2 = fit_surrogate(x, y, w, alpha)

    # oracle: augmented rows turn ridge into plain least squares
    design = np.hstack([np.ones((n, 1)), x])
    top = design * np.sqrt(w)[:, None]
    bottom = np.sqrt(alpha) * np.hstack([np.zeros((k, 1)), np.eye(k)])
    a = np.vstack([top, bottom])
    b = np.concatenate([np.sqrt(w) * y, np.zeros(k)])
    beta, *_ = np.linalg.lstsq(a, b, rcond=None)
    assert abs(intercept - beta[0]) < 1e-8
    assert np.abs(coef - beta[1:]).max() < 1e-8

    # weighted r2 recomputed from scratch
    pred = design @ beta
    mean = (w * y).sum() / w.sum()
    want_r2 = 1.0 - (w * (y - pred) ** 2).sum() / (w * (y - mean) ** 2).sum()
    assert abs(r2 - want_r2) < 1e-8


def test_fit_surrogate_alpha0_uniform_is_plain_lstsq(rng):
    n, k = 40, 5
    x = (rng.random((n, k)) < 0.5).astype(float)
    y = rng.normal(size=n)
    intercept, coef, _ = fit_surrogate(x, y, np.ones(n), 0.0)
    design = np.hstack([np.ones((n, 1)), x])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    assert abs(intercept - beta[0]) < 1e-8
    assert np.abs(coef - beta[1:]).max() < 1e-8


def test_fit_surrogate_weight_scale_invariant_at_alpha0(rng):
    n, k = 30, 4
    x = (rng.random((n, k)) < 0.5).astype(float)
    y = rng.normal(size=n)
    w = rng.uniform(0.5, 1.5, size=n)
    i1, c1, r1 = fit_surrogate(x, y, w, 0.0)
    i2, c2, r2 = fit_surrogate(x, y, 5.0 * w, 0.0)
    assert abs(i1 - i2) < 1e-8
    assert np.abs(c1 - c2).max() < 1e-8
    assert abs(r1 - r2) < 1e-8


def test_fit_surrogate_exact_linear_target(rng):
    n, k = 64, 5
    x = (rng.random((n, k)) < 0.5).astype(float)
    y = 0.6 * x[:, 3] + 0.1
    intercept, coef, r2 = fit_surrogate(x, y, np.ones(n), 0.0)
    assert abs(coef[3] - 0.6) < 1e-9
    assert abs(intercept - 0.1) < 1e-9
    assert np.abs(np.delete(coef, 3)).max() < 1e-9
    assert abs(r2 - 1.0) < 1e-12


def test_fit_surrogate_failure_modes(rng):
    x = (rng.random((10, 3)) < 0.5).astype(float)
    y = rng.normal(size=10)
    with pytest.raises(SingularSystem):
        fit_surrogate(x, y, np.zeros(10), 1.0)
    with pytest.raises(LengthMismatch):
        fit_surrogate(x, y[:5], np.ones(10), 1.0)
    with pytest.raises(LengthMismatch):
        fit_surrogate(x, y, np.ones(4), 1.0)


def test_pick_top_ties_break_to_lower_index():
    assert pick_top(np.array([0.5, -0.5, 0.3]), 2) == (0, 1)
    assert pick_top(np.array([0.1, -0.9, 0.9]), 2) == (1, 2)
    assert pick_top(np.array([0.2, 0.1]), 5) == (0, 1)


def test_render_perturbed_modes():
    img = rgb_image(8, 8, seed=6)
    spmap = quadrant_map()
    keep_all = render_perturbed(img, spmap, np.ones(4))
    assert np.array_equal(keep_all.data, img.data)

    drop0 = render_perturbed(img, spmap, np.array([0, 1, 1, 1.0]))
    q0 = spmap.labels == 0
    mean0 = img.data[q0].mean(axis=0)
    assert np.abs(drop0.data[q0] - mean0).max() < 1e-12
    assert np.array_equal(drop0.data[~q0], img.data[~q0])

    gray = render_perturbed(img, spmap, np.array([0, 1, 1, 1.0]), occlusion="constant-gray")
    assert np.abs(gray.data[q0] - 0.5).max() < 1e-12

    with pytest.raises(LengthMismatch):
        render_perturbed(img, spmap, np.ones(5))


def test_explain_signs_match_brightness_oracle():
    # occluding the bright quadrant must hurt class "bright", occluding the
    # dark quadrant must help it; gray quadrants are occlusion-invisible
    img = quadrant_image()
    spmap = quadrant_map()
    pred = brightness_predictor()
    cfg = ExplainConfig(num_samples=400, num_features=2, occlusion="constant-gray",
                        kernel_width=2.0, ridge_alpha=0.01, seed=3)
    exp = explain(img, spmap, pred, cfg)
    assert exp.target_class == 1
    assert set(exp.picked) == {0, 3}
    assert exp.weights[3] > 0.01
    assert exp.weights[0] < -0.01
    # the logit is linear but the probability is not, so irrelevant columns
    # pick up a little residual correlation; they stay an order down
    assert abs(exp.weights[1]) < 0.005
    assert abs(exp.weights[2]) < 0.005
    assert exp.r2 > 0.8

    tri = trinary_mask(spmap, exp)
    assert np.all(tri.data[spmap.labels == 3] == 1)
    assert np.all(tri.data[spmap.labels == 0] == -1)
    assert np.all(tri.data[(spmap.labels == 1) | (spmap.labels == 2)] == 0)

    cov = exp.coverage(spmap)
    assert abs(cov["positive_pct"] - 25.0) < 1e-9
    assert abs(cov["negative_pct"] - 25.0) < 1e-9
    assert abs(cov["positive_pct"] + cov["negative_pct"] + cov["neutral_pct"] - 100.0) < 1e-9


def test_explain_is_deterministic():
    img = quadrant_image()
    spmap = quadrant_map()
    pred = brightness_predictor()
    cfg = ExplainConfig(num_samples=100, seed=11, num_features=4)
    a = explain(img, spmap, pred, cfg)
    b = explain(img, spmap, pred, cfg)
    assert np.array_equal(a.weights, b.weights)
    assert a.picked == b.picked
    assert a.intercept == b.intercept
    c = explain(img, spmap, pred, ExplainConfig(num_samples=100, seed=12, num_features=4))
    assert not np.array_equal(a.weights, c.weights)


def test_vector_distance_equals_rescaled_class_distance_for_two_classes():
    # with two classes the probability deltas mirror, so the vector distance
    # is exactly sqrt(2) times the class distance
    img = quadrant_image()
    spmap = quadrant_map()
    pred = brightness_predictor()
    kw = 0.8
    vec = explain(img, spmap, pred, ExplainConfig(num_samples=200, seed=5,
                                                  distance_mode="vector", kernel_width=kw))
    cls = explain(img, spmap, pred, ExplainConfig(num_samples=200, seed=5,
                                                  distance_mode="class",
                                                  kernel_width=kw / np.sqrt(2.0)))
    assert np.abs(vec.weights - cls.weights).max() < 1e-9


def test_target_class_override():
    img = quadrant_image()
    spmap = quadrant_map()
    pred = brightness_predictor()
    exp = explain(img, spmap, pred, ExplainConfig(num_samples=100, target_class=0, seed=2))
    assert exp.target_class == 0
    # what supports "bright" opposes "dim"
    assert exp.weights[3] < 0
    with pytest.raises(IndexError):
        explain(img, spmap, pred, ExplainConfig(num_samples=100, target_class=7))


def test_explain_warns_on_scarce_samples():
    img = quadrant_image()
    spmap = quadrant_map()
    with pytest.warns(UserWarning, match="below 4x"):
        explain(img, spmap, brightness_predictor(),
                ExplainConfig(num_samples=8, seed=0))


def test_overlay_blend_is_exact():
    img = quadrant_image()
    spmap = quadrant_map()
    exp = Explanation(target_class=1, class_names=("a", "b"),
                      baseline_probs=np.array([0.5, 0.5]),
                      weights=np.array([-0.4, 0.0, 0.0, 0.7]),
                      picked=(3, 0), intercept=0.0, r2=1.0)
    out = render_overlay(img, spmap, exp, alpha=0.4)
    rgb = img.to_rgb().data
    q3 = spmap.labels == 3
    q0 = spmap.labels == 0
    want3 = 0.6 * rgb[q3] + 0.4 * np.array([0.0, 1.0, 0.0])
    want0 = 0.6 * rgb[q0] + 0.4 * np.array([1.0, 0.0, 0.0])
    assert np.abs(out.data[q3] - want3).max() < 1e-12
    assert np.abs(out.data[q0] - want0).max() < 1e-12
    rest = ~(q3 | q0)
    assert np.array_equal(out.data[rest], rgb[rest])
    with pytest.raises(ValueError):
        render_overlay(img, spmap, exp, alpha=1.5)


def test_explanation_json_dict():
    spmap = quadrant_map()
    exp = Explanation(target_class=0, class_names=("a", "b"),
                      baseline_probs=np.array([0.9, 0.1]),
                      weights=np.array([0.3, -0.2, 0.0, 0.0]),
                      picked=(0, 1), intercept=0.5, r2=0.8)
    d = exp.to_json_dict(spmap)
    assert d["target_class"] == 0
    assert d["weights"] == [0.3, -0.2, 0.0, 0.0]
    assert d["picked"] == [0, 1]
    assert abs(sum(d["coverage"].values()) - 100.0) < 1e-9


def test_compare_predictions_table():
    before = ProbabilityVector([0.7, 0.2, 0.1], ("x", "y", "z"))
    after = ProbabilityVector([0.1, 0.3, 0.6], ("x", "y", "z"))
    rows = compare_predictions(before, after)
    assert [r["class_index"] for r in rows] == [0, 1, 2]
    assert rows[0]["original_pct"] == pytest.approx(70.0)
    assert rows[0]["edited_pct"] == pytest.approx(10.0)
    assert rows[0]["delta_pct"] == pytest.approx(-60.0)
    assert rows[0]["rank_change"] == -2
    assert rows[1]["rank_change"] == 0
    assert rows[2]["rank_change"] == 2
    with pytest.raises(LengthMismatch):
        compare_predictions(before, ProbabilityVector([0.5, 0.5], ("x", "y")))


def test_config_validation():
    with pytest.raises(ValueError):
        ExplainConfig(num_samples=0)
    with pytest.raises(ValueError):
        ExplainConfig(kernel_width=0.0)
    with pytest.raises(ValueError):
        ExplainConfig(ridge_alpha=-1.0)
    with pytest.raises(ValueError):
        ExplainConfig(occlusion="checkerboard")
    with pytest.raises(ValueError):
        ExplainConfig(distance_mode="cosine")
