import numpy as np
import pytest

from camstats.cams import (
    eigen_cam,
    eigen_cam_map,
    grad_cam,
    grad_cam_map,
    layer_cam,
    layer_cam_map,
    score_cam,
    score_cam_map,
    score_cam_map_from_scores,
    xgrad_cam,
    xgrad_cam_map,
)
from camstats.errors import ConfigurationError, DimensionError
from camstats.focus import top_fraction_region
from camstats.tensorops import minmax_normalize


class ConstantOracle:
    """Scores every masked input identically."""

    def __init__(self, value=0.5):
        self.value = value

    def score(self, image, class_idx):
        return self.value


def test_grad_cam_unit_weights():
    acts = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    grads = np.ones_like(acts)
    assert np.allclose(grad_cam_map(acts, grads), [[1.0, 2.0], [3.0, 4.0]])


def test_grad_cam_negative_weights_zeroed():
    acts = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    grads = -np.ones_like(acts)
    assert np.all(grad_cam_map(acts, grads) == 0.0)


def test_grad_cam_two_channels_hand_values():
    acts = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 2.0], [2.0, 0.0]]])
    grads = np.stack([np.ones((2, 2)), np.full((2, 2), 0.5)])
    assert np.allclose(grad_cam_map(acts, grads), np.ones((2, 2)))


def test_xgrad_cam_hand_values():
    acts = np.array([[[1.0, 3.0], [0.0, 0.0]]])
    grads = np.array([[[2.0, 0.0], [0.0, 0.0]]])
    assert np.allclose(xgrad_cam_map(acts, grads), [[0.5, 1.5], [0.0, 0.0]])


def test_xgrad_cam_uniform_grads_reduces_to_grad_cam():
    rng = np.random.default_rng(3)
    acts = np.abs(rng.normal(size=(4, 5, 5)))
    grads = np.ones_like(acts)
    assert np.allclose(xgrad_cam_map(acts, grads), grad_cam_map(acts, grads))


def test_xgrad_cam_zero_mass_channel_guard():
    acts = np.array([[[0.0, 0.0], [0.0, 0.0]], [[1.0, 1.0], [1.0, 1.0]]])
    grads = np.ones_like(acts)
    out = xgrad_cam_map(acts, grads)
    assert np.isfinite(out).all()
    assert np.allclose(out, np.ones((2, 2)))


def test_grad_xgrad_identity_constant_grads():
    rng = np.random.default_rng(7)
    acts = np.abs(rng.normal(size=(6, 4, 4)))
    per_channel = rng.normal(size=6)
    grads = np.broadcast_to(per_channel[:, None, None], acts.shape).copy()
    a = grad_cam(acts, grads, (16, 16))
    b = xgrad_cam(acts, grads, (16, 16))
    assert np.allclose(a, b, atol=1e-6)


def test_layer_cam_hand_values():
    acts = np.array([[[1.0, 2.0]]])
    grads = np.array([[[-1.0, 3.0]]])
    assert np.allclose(layer_cam_map(acts, grads), [[0.0, 6.0]])


def test_layer_cam_negative_grads_zero():
    rng = np.random.default_rng(11)
    acts = np.abs(rng.normal(size=(3, 4, 4)))
    grads = -np.abs(rng.normal(size=(3, 4, 4)))
    assert np.all(layer_cam_map(acts, grads) == 0.0)


def test_layer_cam_unit_grads_reduction():
    rng = np.random.default_rng(13)
    acts = np.abs(rng.normal(size=(3, 4, 4)))
    grads = np.ones_like(acts)
    assert np.allclose(layer_cam_map(acts, grads), acts.sum(axis=0))


def test_score_cam_single_channel():
    rng = np.random.default_rng(17)
    acts = np.abs(rng.normal(size=(1, 4, 4)))
    image = rng.random((8, 8))
    out = score_cam(acts, image, 1, ConstantOracle())
    want = minmax_normalize(
        np.asarray(
            score_cam_map_from_scores(acts, np.array([0.0])), dtype=np.float64
        )
    )
    # K=1: softmax weight is 1 regardless of the score
    assert np.allclose(out, minmax_normalize(grad_cam(acts, np.ones_like(acts), (8, 8))))
    assert out.shape == (8, 8)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_score_cam_equal_scores_average():
    rng = np.random.default_rng(19)
    acts = np.abs(rng.normal(size=(2, 3, 3)))
    image = rng.random((6, 6))
    out_map = score_cam_map(acts, image, 0, ConstantOracle(0.7))
    assert np.allclose(out_map, 0.5 * acts[0] + 0.5 * acts[1])


def test_score_cam_constant_channel_no_nan():
    calls = []

    class RecordingOracle:
        def score(self, image, class_idx):
            calls.append(image.copy())
            return 0.3

    acts = np.stack([np.full((3, 3), 2.0), np.arange(9.0).reshape(3, 3)])
    image = np.random.default_rng(23).random((6, 6))
    out = score_cam(acts, image, 1, RecordingOracle())
    assert np.isfinite(out).all()
    assert len(calls) == 2
    assert np.all(calls[0] == 0.0)  # constant channel normalizes to a zero mask


def test_score_cam_missing_oracle():
    acts = np.abs(np.random.default_rng(29).normal(size=(2, 3, 3)))
    with pytest.raises(ConfigurationError):
        score_cam(acts, np.random.random((6, 6)), 0, None)


def test_score_cam_precomputed_scores_match_oracle():
    rng = np.random.default_rng(31)
    acts = np.abs(rng.normal(size=(3, 4, 4)))
    scores = rng.random(3)

    class TableOracle:
        def __init__(self):
            self.i = 0

        def score(self, image, class_idx):
            v = scores[self.i]
            self.i += 1
            return v

    image = rng.random((8, 8))
    via_oracle = score_cam_map(acts, image, 0, TableOracle())
    via_table = score_cam_map_from_scores(acts, scores)
    assert np.allclose(via_oracle, via_table)


def test_eigen_cam_single_channel():
    rng = np.random.default_rng(37)
    acts = np.abs(rng.normal(size=(1, 5, 5)))
    out = eigen_cam(acts, (5, 5))
    assert np.allclose(out, minmax_normalize(acts[0]), atol=1e-8)


def test_eigen_cam_two_identical_channels_match_single():
    rng = np.random.default_rng(41)
    single = np.abs(rng.normal(size=(1, 4, 4)))
    doubled = np.concatenate([single, single], axis=0)
    assert np.allclose(eigen_cam(single, (8, 8)), eigen_cam(doubled, (8, 8)), atol=1e-6)


def test_eigen_cam_stack_duplication_invariance():
    # duplicating every channel rescales the Gram matrix uniformly, so the
    # principal direction (and the normalized map) is unchanged
    rng = np.random.default_rng(42)
    acts = np.abs(rng.normal(size=(3, 4, 4)))
    dup = np.concatenate([acts, acts], axis=0)
    assert np.allclose(eigen_cam(acts, (8, 8)), eigen_cam(dup, (8, 8)), atol=1e-6)


def test_eigen_cam_permutation_invariance():
    rng = np.random.default_rng(43)
    acts = np.abs(rng.normal(size=(4, 4, 4)))
    perm = acts[[2, 0, 3, 1]]
    assert np.allclose(eigen_cam(acts, (8, 8)), eigen_cam(perm, (8, 8)), atol=1e-6)


def test_eigen_cam_matches_svd_oracle():
    rng = np.random.default_rng(47)
    for _ in range(20):
        acts = np.abs(rng.normal(size=(3, 4, 4)))
        m = acts.reshape(3, 16).T
        _, _, vt = np.linalg.svd(m, full_matrices=False)
        want = (m @ vt[0]).reshape(4, 4)
        if want.sum() < 0:
            want = -want
        want = np.maximum(want, 0.0)
        assert np.allclose(eigen_cam_map(acts), want, atol=1e-6)


def test_focus_region_invariant_under_gradient_scaling():
    rng = np.random.default_rng(53)
    acts = np.abs(rng.normal(size=(5, 7, 7)))
    grads = rng.normal(size=(5, 7, 7))
    for cam in (grad_cam, xgrad_cam, layer_cam):
        base = top_fraction_region(cam(acts, grads, (28, 28)), 0.05)
        for c in (0.1, 10.0):
            scaled = top_fraction_region(cam(acts, c * grads, (28, 28)), 0.05)
            assert np.array_equal(base, scaled), cam.__name__


def test_all_maps_bounded_and_shaped():
    rng = np.random.default_rng(59)
    acts = np.abs(rng.normal(size=(4, 6, 6)))
    grads = rng.normal(size=(4, 6, 6))
    image = rng.random((24, 24))
    outs = [
        grad_cam(acts, grads, (24, 24)),
        xgrad_cam(acts, grads, (24, 24)),
        layer_cam(acts, grads, (24, 24)),
        eigen_cam(acts, (24, 24)),
        score_cam(acts, image, 0, ConstantOracle()),
    ]
    for out in outs:
        assert out.shape == (24, 24)
        assert np.isfinite(out).all()
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_dimension_mismatch_raises():
    acts = np.ones((2, 3, 3))
    grads = np.ones((2, 4, 4))
    for cam in (grad_cam_map, xgrad_cam_map, layer_cam_map):
        with pytest.raises(DimensionError):
            cam(acts, grads)
