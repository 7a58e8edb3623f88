"""The five CAM variants mapping target-layer activations to input-resolution
saliency maps.

Every method builds a feature-resolution map (combination + ReLU), which is
then bilinearly upsampled to the image shape and minmax-normalized.  The
*_map functions expose the feature-resolution stage; the full functions
return the final [0, 1] saliency map.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .errors import ConfigurationError, DimensionError, ParameterError
from .tensorops import bilinear_resize, minmax_normalize, relu

_EIGEN_TOL = 1e-10
_EIGEN_MAX_ITER = 1000


class ModelOracle(Protocol):
    """Deterministic scoring interface required by Score-CAM."""

    def score(self, image: np.ndarray, class_idx: int) -> float: ...


def _check_acts(acts) -> np.ndarray:
    a = np.asarray(acts, dtype=np.float64)
    if a.ndim != 3:
        raise DimensionError(f"activations must be K x h x w, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise ParameterError("activations must be finite")
    return a


def _check_grads(acts: np.ndarray, grads) -> np.ndarray:
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != acts.shape:
        raise DimensionError(
            f"gradients {g.shape} do not match activations {acts.shape}"
        )
    if not np.isfinite(g).all():
        raise ParameterError("gradients must be finite")
    return g


def finalize_map(feature_map: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Upsample a feature-resolution map to image shape and rescale to [0, 1]."""
    resized = bilinear_resize(feature_map, out_shape[0], out_shape[1])
    return minmax_normalize(resized)


def grad_cam_map(acts, grads) -> np.ndarray:
    """ReLU(sum_k alpha_k A^k) with alpha_k the spatial mean of the gradients."""
    a = _check_acts(acts)
    g = _check_grads(a, grads)
    alpha = g.mean(axis=(1, 2))
    return relu(np.tensordot(alpha, a, axes=1))


def grad_cam(acts, grads, out_shape: tuple[int, int]) -> np.ndarray:
    return finalize_map(grad_cam_map(acts, grads), out_shape)


def xgrad_cam_map(acts, grads) -> np.ndarray:
    """ReLU(sum_k w_k A^k), w_k = sum(grads_k * A^k) / sum(A^k).

    Channels with zero activation mass get w_k = 0 instead of dividing by
    zero; they carry nothing to redistribute.
    """
    a = _check_acts(acts)
    g = _check_grads(a, grads)
    mass = a.sum(axis=(1, 2))
    weighted = (g * a).sum(axis=(1, 2))
    w = np.divide(weighted, mass, out=np.zeros_like(mass), where=mass != 0)
    return relu(np.tensordot(w, a, axes=1))


def xgrad_cam(acts, grads, out_shape: tuple[int, int]) -> np.ndarray:
    return finalize_map(xgrad_cam_map(acts, grads), out_shape)


def layer_cam_map(acts, grads) -> np.ndarray:
    """ReLU(sum_k ReLU(grads_k) * A^k), elementwise positive-gradient weighting."""
    a = _check_acts(acts)
    g = _check_grads(a, grads)
    return relu((relu(g) * a).sum(axis=0))


def layer_cam(acts, grads, out_shape: tuple[int, int]) -> np.ndarray:
    return finalize_map(layer_cam_map(acts, grads), out_shape)


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = np.exp(scores - scores.max())
    return z / z.sum()


def score_cam_weights(
    acts: np.ndarray, image: np.ndarray, class_idx: int, oracle: ModelOracle
) -> np.ndarray:
    """Softmax over the oracle scores of the per-channel masked inputs.

    Each channel map is upsampled to image size, minmax-normalized and
    multiplied into the image; a constant channel masks the image to zero
    but is still scored, so no channel is silently dropped.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"input image must be 2-D, got ndim={img.ndim}")
    scores = np.empty(acts.shape[0])
    for k in range(acts.shape[0]):
        mask = minmax_normalize(bilinear_resize(acts[k], img.shape[0], img.shape[1]))
        scores[k] = oracle.score(img * mask, class_idx)
    return _softmax(scores)


def score_cam_map_from_scores(acts, channel_scores) -> np.ndarray:
    """Score-CAM combination given precomputed per-channel oracle scores."""
    a = _check_acts(acts)
    s = np.asarray(channel_scores, dtype=np.float64)
    if s.shape != (a.shape[0],):
        raise DimensionError(
            f"expected {a.shape[0]} channel scores, got shape {s.shape}"
        )
    w = _softmax(s)
    return relu(np.tensordot(w, a, axes=1))


def score_cam_map(acts, image, class_idx: int, oracle: ModelOracle) -> np.ndarray:
    a = _check_acts(acts)
    if oracle is None:
        raise ConfigurationError("Score-CAM needs a model oracle or a score table")
    w = score_cam_weights(a, image, class_idx, oracle)
    return relu(np.tensordot(w, a, axes=1))


def score_cam(acts, image, class_idx: int, oracle: ModelOracle) -> np.ndarray:
    img = np.asarray(image)
    fmap = score_cam_map(acts, image, class_idx, oracle)
    return finalize_map(fmap, (img.shape[0], img.shape[1]))


def _principal_direction(m: np.ndarray) -> np.ndarray:
    """First right-singular vector of m via power iteration on m^T m."""
    gram = m.T @ m
    k = gram.shape[0]
    v = np.full(k, 1.0 / np.sqrt(k))
    for _ in range(_EIGEN_MAX_ITER):
        nxt = gram @ v
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            return v
        nxt /= norm
        if np.abs(nxt - v).max() < _EIGEN_TOL:
            return nxt
        v = nxt
    return v


def eigen_cam_map(acts) -> np.ndarray:
    """Projection of the activations onto their first principal direction,
    sign-fixed so the map's sum is nonnegative, then ReLU."""
    a = _check_acts(acts)
    k, h, w = a.shape
    m = a.reshape(k, h * w).T
    v = _principal_direction(m)
    fmap = (m @ v).reshape(h, w)
    if fmap.sum() < 0:
        fmap = -fmap
    return relu(fmap)


def eigen_cam(acts, out_shape: tuple[int, int]) -> np.ndarray:
    return finalize_map(eigen_cam_map(acts), out_shape)


CAM_METHODS = ("grad-cam", "xgrad-cam", "score-cam", "eigen-cam", "layer-cam")
