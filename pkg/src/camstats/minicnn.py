"""A miniature CNN with explicit forward and backward passes.

conv(8, 3x3) -> ReLU -> maxpool2 -> conv(16, 3x3) -> ReLU -> maxpool2
-> global average pool -> fc(16 -> 2)

The explanation layer is the conv2 post-ReLU activation stack, taken before
the second max-pool (16 x H/2 x W/2).  Parameters are float64 in memory so
finite-difference gradient checks are meaningful; checkpoints round to the
float32 bundle format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bundle import read_bundle, write_bundle
from .errors import DegenerateClassError, DimensionError, ParameterError
from .rng import Xoshiro256StarStar, derive_seed

PARAM_SHAPES = {
    "conv1.w": (8, 1, 3, 3),
    "conv1.b": (8,),
    "conv2.w": (16, 8, 3, 3),
    "conv2.b": (16,),
    "fc.w": (2, 16),
    "fc.b": (2,),
}


@dataclass
class MiniCnnModel:
    params: dict[str, np.ndarray]

    def copy(self) -> "MiniCnnModel":
        return MiniCnnModel({k: v.copy() for k, v in self.params.items()})


@dataclass
class TrainConfig:
    lr: float = 0.001
    momentum: float = 0.9
    decay_factor: float = 0.9
    patience: int = 10
    epochs: int = 100
    seed: int = 0
    batch_size: int = 16

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must be in [0, 1)")
        if not 0 < self.decay_factor < 1:
            raise ParameterError("decay_factor must be in (0, 1)")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")


class PlateauSchedule:
    """Multiply the learning rate by `factor` after `patience` epochs
    without a strict improvement of the monitored loss."""

    def __init__(self, lr: float, factor: float, patience: int):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.best = math.inf
        self.stale = 0

    def step(self, loss: float) -> float:
        if loss < self.best:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr *= self.factor
                self.stale = 0
        return self.lr


def init_model(seed: int) -> MiniCnnModel:
    """Uniform init in +-sqrt(6 / fan_in), drawn from the seeded generator
    in a fixed parameter order."""
    gen = Xoshiro256StarStar(seed)
    params = {}
    fan_in = {
        "conv1.w": 9,
        "conv1.b": 9,
        "conv2.w": 72,
        "conv2.b": 72,
        "fc.w": 16,
        "fc.b": 16,
    }
    for name, shape in PARAM_SHAPES.items():
        bound = math.sqrt(6.0 / fan_in[name])
        n = int(np.prod(shape))
        vals = np.fromiter(
            ((2.0 * gen.next_float() - 1.0) * bound for _ in range(n)),
            dtype=np.float64,
            count=n,
        )
        params[name] = vals.reshape(shape)
    return MiniCnnModel(params)


# ---------------------------------------------------------------------------
# layer primitives (batched, NCHW)


def _conv3x3_forward(x, w, b):
    n, c, h, wd = x.shape
    f = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 9, h, wd), dtype=x.dtype)
    for idx in range(9):
        di, dj = divmod(idx, 3)
        cols[:, :, idx] = xp[:, :, di : di + h, dj : dj + wd]
    cols_mat = cols.reshape(n, c * 9, h * wd)
    out = np.matmul(w.reshape(f, c * 9), cols_mat).reshape(n, f, h, wd)
    out += b[None, :, None, None]
    return out, cols_mat


def _conv3x3_backward(dout, cols_mat, w, x_shape):
    n, c, h, wd = x_shape
    f = w.shape[0]
    db = dout.sum(axis=(0, 2, 3))
    dout_mat = dout.reshape(n, f, h * wd)
    # fold the batch axis into one big matmul for dw
    dw = (
        dout_mat.transpose(1, 0, 2).reshape(f, n * h * wd)
        @ cols_mat.transpose(0, 2, 1).reshape(n * h * wd, c * 9)
    ).reshape(f, c, 3, 3)
    dcols = np.matmul(w.reshape(f, c * 9).T, dout_mat).reshape(n, c, 9, h, wd)
    dxp = np.zeros((n, c, h + 2, wd + 2), dtype=dout.dtype)
    for idx in range(9):
        di, dj = divmod(idx, 3)
        dxp[:, :, di : di + h, dj : dj + wd] += dcols[:, :, idx]
    return dxp[:, :, 1 : h + 1, 1 : wd + 1], dw, db


def _maxpool2_forward(x):
    # four strided corner views instead of a reshape/transpose copy
    tl = x[:, :, 0::2, 0::2]
    tr = x[:, :, 0::2, 1::2]
    bl = x[:, :, 1::2, 0::2]
    br = x[:, :, 1::2, 1::2]
    out = np.maximum(np.maximum(tl, tr), np.maximum(bl, br))
    # ties go to the first maximum in row-major window order
    am = np.where(
        tl == out, 0, np.where(tr == out, 1, np.where(bl == out, 2, 3))
    ).astype(np.int8)
    return out, am


def _maxpool2_backward(dout, am, x_shape):
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, 0::2, 0::2] = dout * (am == 0)
    dx[:, :, 0::2, 1::2] = dout * (am == 1)
    dx[:, :, 1::2, 0::2] = dout * (am == 2)
    dx[:, :, 1::2, 1::2] = dout * (am == 3)
    return dx


def _as_batch(images) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, None]
    elif x.ndim == 3:
        # (N, H, W) batch or a single (1, H, W) image; both become NCHW
        x = x[:, None] if x.shape[0] != 1 else x[None]
    elif x.ndim != 4:
        raise DimensionError(f"expected image/batch, got ndim={x.ndim}")
    if x.shape[1] != 1:
        raise DimensionError(f"model is single-channel, got {x.shape[1]} channels")
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise DimensionError(
            f"image sides must be divisible by 4, got {x.shape[2]}x{x.shape[3]}"
        )
    return x


def _forward_batch(model: MiniCnnModel, x: np.ndarray) -> dict:
    p = model.params
    z1, cols1 = _conv3x3_forward(x, p["conv1.w"], p["conv1.b"])
    a1 = np.maximum(z1, 0.0)
    p1, am1 = _maxpool2_forward(a1)
    z2, cols2 = _conv3x3_forward(p1, p["conv2.w"], p["conv2.b"])
    a2 = np.maximum(z2, 0.0)  # explanation layer
    p2, am2 = _maxpool2_forward(a2)
    feat = p2.mean(axis=(2, 3))
    logits = feat @ p["fc.w"].T + p["fc.b"]
    return {
        "x": x, "z1": z1, "cols1": cols1, "a1": a1, "am1": am1, "p1": p1,
        "z2": z2, "cols2": cols2, "a2": a2, "am2": am2, "p2": p2,
        "feat": feat, "logits": logits,
    }


def _backward_batch(model: MiniCnnModel, cache: dict, dlogits: np.ndarray):
    """Gradients of sum(dlogits * logits) w.r.t. parameters and the
    explanation-layer activations."""
    p = model.params
    grads = {}
    grads["fc.w"] = dlogits.T @ cache["feat"]
    grads["fc.b"] = dlogits.sum(axis=0)
    dfeat = dlogits @ p["fc.w"]
    n, c, h2, w2 = cache["p2"].shape
    dp2 = np.broadcast_to(
        dfeat[:, :, None, None] / (h2 * w2), cache["p2"].shape
    ).astype(np.float64)
    da2 = _maxpool2_backward(dp2, cache["am2"], cache["a2"].shape)
    dz2 = da2 * (cache["z2"] > 0)
    dp1, grads["conv2.w"], grads["conv2.b"] = _conv3x3_backward(
        dz2, cache["cols2"], p["conv2.w"], cache["p1"].shape
    )
    da1 = _maxpool2_backward(dp1, cache["am1"], cache["a1"].shape)
    dz1 = da1 * (cache["z1"] > 0)
    _, grads["conv1.w"], grads["conv1.b"] = _conv3x3_backward(
        dz1, cache["cols1"], p["conv1.w"], cache["x"].shape
    )
    return grads, da2


# ---------------------------------------------------------------------------
# public surface


def forward(model: MiniCnnModel, image) -> tuple[np.ndarray, np.ndarray]:
    """Logits (2,) and the explanation-layer activations (16, H/2, W/2)."""
    x = _as_batch(image)
    if x.shape[0] != 1:
        raise DimensionError("forward takes a single image; use train for batches")
    cache = _forward_batch(model, x)
    return cache["logits"][0], cache["a2"][0]


def forward_from_activations(model: MiniCnnModel, acts) -> np.ndarray:
    """Logits recomputed from explanation-layer activations (the head path:
    maxpool -> GAP -> fc).  Used by finite-difference checks."""
    a = np.asarray(acts, dtype=np.float64)
    if a.ndim != 3:
        raise DimensionError(f"activations must be K x h x w, got ndim={a.ndim}")
    p2, _ = _maxpool2_forward(a[None])
    feat = p2.mean(axis=(2, 3))
    return (feat @ model.params["fc.w"].T + model.params["fc.b"])[0]


def backward_to_activations(model: MiniCnnModel, image, class_idx: int) -> np.ndarray:
    """Gradient of the pre-softmax logit for class_idx w.r.t. the
    explanation-layer activations."""
    if class_idx not in (0, 1):
        raise ParameterError(f"class_idx must be 0 or 1, got {class_idx}")
    x = _as_batch(image)
    cache = _forward_batch(model, x)
    dlogits = np.zeros_like(cache["logits"])
    dlogits[0, class_idx] = 1.0
    _, da2 = _backward_batch(model, cache, dlogits)
    return da2[0]


def logit_param_grads(model: MiniCnnModel, image, class_idx: int) -> dict:
    """Gradient of the pre-softmax logit for class_idx w.r.t. every
    parameter tensor."""
    if class_idx not in (0, 1):
        raise ParameterError(f"class_idx must be 0 or 1, got {class_idx}")
    x = _as_batch(image)
    cache = _forward_batch(model, x)
    dlogits = np.zeros_like(cache["logits"])
    dlogits[0, class_idx] = 1.0
    grads, _ = _backward_batch(model, cache, dlogits)
    return grads


def predict_proba(model: MiniCnnModel, image) -> float:
    """Softmax probability of class 1."""
    logits, _ = forward(model, image)
    z = logits - logits.max()
    e = np.exp(z)
    return float(e[1] / e.sum())


def predict_proba_batch(model: MiniCnnModel, images) -> np.ndarray:
    x = _as_batch(images)
    logits = _forward_batch(model, x)["logits"]
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e[:, 1] / e.sum(axis=1)


class MiniCnnOracle:
    """Score-CAM oracle backed by an in-process model: the softmax
    probability of the requested class."""

    def __init__(self, model: MiniCnnModel):
        self.model = model

    def score(self, image, class_idx: int) -> float:
        p1 = predict_proba(self.model, image)
        return p1 if class_idx == 1 else 1.0 - p1


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights, one per class, normalized to mean 1."""
    n = labels.size
    counts = np.array([(labels == 0).sum(), (labels == 1).sum()], dtype=np.float64)
    if (counts == 0).any():
        raise DegenerateClassError("training data contains a single class")
    return n / (2.0 * counts)


def _mean_ce_loss(logits: np.ndarray, labels: np.ndarray, weights=None) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    per_sample = logsumexp - z[np.arange(labels.size), labels]
    if weights is not None:
        per_sample = per_sample * weights[labels]
    return float(per_sample.mean())


def train(train_set, val_set, cfg: TrainConfig) -> MiniCnnModel:
    """SGD with momentum on class-weighted cross-entropy.

    The learning rate decays by cfg.decay_factor whenever the validation
    loss fails to improve for cfg.patience consecutive epochs; the returned
    parameters are the snapshot with the best validation loss.
    """
    x_train = _as_batch(train_set[0])
    y_train = np.asarray(train_set[1], dtype=np.int64)
    x_val = _as_batch(val_set[0])
    y_val = np.asarray(val_set[1], dtype=np.int64)
    weights = class_weights(y_train)

    model = init_model(derive_seed(cfg.seed, 0))
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    shuffler = Xoshiro256StarStar(derive_seed(cfg.seed, 1))
    schedule = PlateauSchedule(cfg.lr, cfg.decay_factor, cfg.patience)

    best_loss = math.inf
    best_params = model.copy()
    n = x_train.shape[0]
    lr = cfg.lr
    for _ in range(cfg.epochs):
        order = list(range(n))
        shuffler.shuffle(order)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            cache = _forward_batch(model, xb)
            z = cache["logits"] - cache["logits"].max(axis=1, keepdims=True)
            softmax = np.exp(z)
            softmax /= softmax.sum(axis=1, keepdims=True)
            dlogits = softmax
            dlogits[np.arange(yb.size), yb] -= 1.0
            dlogits *= weights[yb][:, None] / yb.size
            grads, _ = _backward_batch(model, cache, dlogits)
            for name, g in grads.items():
                velocity[name] = cfg.momentum * velocity[name] + g
                model.params[name] -= lr * velocity[name]
        val_logits = _forward_batch(model, x_val)["logits"]
        val_loss = _mean_ce_loss(val_logits, y_val)
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = model.copy()
        lr = schedule.step(val_loss)
    return best_params


def save_checkpoint(model: MiniCnnModel, path) -> None:
    write_bundle(path, {k: v.astype(np.float32) for k, v in model.params.items()})


def load_checkpoint(path) -> MiniCnnModel:
    entries = read_bundle(path)
    params = {}
    for name, shape in PARAM_SHAPES.items():
        if name not in entries:
            raise ParameterError(f"checkpoint is missing tensor {name!r}")
        if entries[name].shape != shape:
            raise DimensionError(
                f"checkpoint tensor {name!r} has shape {entries[name].shape}, "
                f"expected {shape}"
            )
        params[name] = entries[name].astype(np.float64)
    return MiniCnnModel(params)
