"""From-scratch neural nets: conv autoencoder, linear classifier head, Adam.

Everything runs in float64 numpy with hand-written backprop so gradients can
be checked against finite differences.  The encoder compresses a 5 x n
feature window into a 5-dimensional latent; the classifier head maps that
latent to softmax confidences over (left, right, straight).
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LEFT",
    "RIGHT",
    "STRAIGHT",
    "CLASS_NAMES",
    "ConfidenceVector",
    "TrainConfig",
    "TrainingDiverged",
    "ModelFormatError",
    "build_encoder",
    "build_decoder",
    "build_classifier_head",
    "encode",
    "decode",
    "classify",
    "softmax",
    "train_autoencoder",
    "train_classifier",
    "save_models",
    "load_models",
]

LEFT, RIGHT, STRAIGHT = 0, 1, 2
CLASS_NAMES = ("left", "right", "straight")

MODEL_FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when a training loss stops being finite."""


class ModelFormatError(RuntimeError):
    """Raised for unreadable or version-mismatched model files."""


# ---------------------------------------------------------------------------
# Layers


class Layer:
    params: list[np.ndarray]
    grads: list[np.ndarray]

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out))
        self.b = np.zeros(n_out)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        self.grads[0][...] = self._x.T @ dy
        self.grads[1][...] = dy.sum(axis=0)
        return dy @ self.w.T


class Conv1D(Layer):
    """1-D convolution over the sample axis, stride 1, zero 'same' padding."""

    flip_kernel = False  # transposed convolutions correlate with the flipped kernel

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        assert kernel % 2 == 1
        self.kernel = kernel
        self.w = rng.normal(0.0, np.sqrt(2.0 / (c_in * kernel)), (c_out, c_in, kernel))
        self.b = np.zeros(c_out)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def _kernel_view(self):
        return self.w[:, :, ::-1] if self.flip_kernel else self.w

    def forward(self, x):
        # x: (B, C_in, N); im2col + GEMM so the whole correlation is one matmul
        b, _, n = x.shape
        pad = self.kernel // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        xw = np.lib.stride_tricks.sliding_window_view(xp, self.kernel, axis=2)
        self._cols = np.ascontiguousarray(xw.transpose(0, 2, 1, 3)).reshape(b * n, -1)
        self._wm = np.ascontiguousarray(self._kernel_view()).reshape(self.w.shape[0], -1)
        out = self._cols @ self._wm.T
        out += self.b
        return out.reshape(b, n, -1).transpose(0, 2, 1)

    def backward(self, dy):
        b, c_out, n = dy.shape
        pad = self.kernel // 2
        dym = np.ascontiguousarray(dy.transpose(0, 2, 1)).reshape(b * n, c_out)
        dw = (dym.T @ self._cols).reshape(self.w.shape[0], -1, self.kernel)
        if self.flip_kernel:
            dw = dw[:, :, ::-1]
        # fold the column gradient back onto the (overlapping) input windows
        dxw = (dym @ self._wm).reshape(b, n, -1, self.kernel).transpose(0, 2, 1, 3)
        dxp = np.zeros((b, dxw.shape[1], n + 2 * pad))
        for t in range(self.kernel):
            dxp[:, :, t : t + n] += dxw[:, :, :, t]
        self.grads[0][...] = dw
        self.grads[1][...] = dy.sum(axis=(0, 2))
        return dxp[:, :, pad : pad + n]


class ConvTranspose1D(Conv1D):
    flip_kernel = True


class ReLU(Layer):
    params: list[np.ndarray] = []
    grads: list[np.ndarray] = []

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class Flatten(Layer):
    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Reshape(Layer):
    def __init__(self, channels: int, n: int):
        self.channels = channels
        self.n = n
        self.params = []
        self.grads = []

    def forward(self, x):
        return x.reshape(x.shape[0], self.channels, self.n)

    def backward(self, dy):
        return dy.reshape(dy.shape[0], -1)


class Sequential:
    """Plain layer chain; owns its architecture config for serialisation."""

    def __init__(self, layers: list[Layer], config: dict):
        self.layers = layers
        self.config = dict(config)

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self) -> list[np.ndarray]:
        return [p for l in self.layers for p in l.params]

    def grads(self) -> list[np.ndarray]:
        return [g for l in self.layers for g in l.grads]

    def state(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def load_state(self, state: list[np.ndarray]) -> None:
        for p, s in zip(self.params(), state, strict=True):
            p[...] = s


# ---------------------------------------------------------------------------
# Architectures

CONV_CHANNELS = (5, 16, 32, 32)
FC_WIDTHS = (128, 64)
KERNEL = 3

# Per-channel weighting of the reconstruction objective, applied by scaling
# windows on the way into the encoder (and unscaling decoder output).  The
# curvature row carries the behaviour signal the classifier depends on but
# only ~12% of the raw window variance, so an unweighted MSE starves it.
CHANNEL_LOSS_SCALE = np.array([1.0, 1.0, 1.0, 1.0, 2.0])


def _scale(batch: np.ndarray) -> np.ndarray:
    return batch * CHANNEL_LOSS_SCALE[:, None]


def build_encoder(n: int = 12, latent: int = 5, seed: int = 0) -> Sequential:
    """3 convolutions then 3 fully-connected layers down to the latent width."""
    rng = np.random.default_rng(seed)
    c = CONV_CHANNELS
    layers: list[Layer] = []
    for i in range(3):
        layers += [Conv1D(c[i], c[i + 1], KERNEL, rng), ReLU()]
    layers.append(Flatten())
    widths = (c[3] * n, *FC_WIDTHS, latent)
    for i in range(3):
        layers.append(Dense(widths[i], widths[i + 1], rng))
        if i < 2:
            layers.append(ReLU())
    return Sequential(layers, {"kind": "encoder", "n": n, "latent": latent, "seed": seed})


def build_decoder(n: int = 12, latent: int = 5, seed: int = 1) -> Sequential:
    """Mirror of the encoder: 3 fully-connected then 3 transposed convolutions."""
    rng = np.random.default_rng(seed)
    c = CONV_CHANNELS
    widths = (latent, *reversed(FC_WIDTHS), c[3] * n)
    layers: list[Layer] = []
    for i in range(3):
        layers += [Dense(widths[i], widths[i + 1], rng), ReLU()]
    layers.append(Reshape(c[3], n))
    rev = tuple(reversed(c))
    for i in range(3):
        layers.append(ConvTranspose1D(rev[i], rev[i + 1], KERNEL, rng))
        if i < 2:
            layers.append(ReLU())
    return Sequential(layers, {"kind": "decoder", "n": n, "latent": latent, "seed": seed})


def build_classifier_head(latent: int = 5, classes: int = 3, seed: int = 2) -> Sequential:
    rng = np.random.default_rng(seed)
    return Sequential(
        [Dense(latent, classes, rng)],
        {"kind": "classifier", "latent": latent, "classes": classes, "seed": seed},
    )


# ---------------------------------------------------------------------------
# Inference


@dataclass(frozen=True)
class ConfidenceVector:
    """Softmax confidences over (left, right, straight); sums to 1."""

    left: float
    right: float
    straight: float

    def as_array(self) -> np.ndarray:
        return np.array([self.left, self.right, self.straight])

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.as_array()))

    def of_class(self, cls: int) -> float:
        return float(self.as_array()[cls])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(w: np.ndarray, n: int) -> tuple[np.ndarray, bool]:
    w = np.asarray(w, dtype=float)
    if w.shape == (5, n):
        return w[None], True
    if w.ndim == 3 and w.shape[1] == 5 and w.shape[2] == n:
        return w, False
    raise ValueError(f"expected a 5x{n} window or a batch of them, got shape {w.shape}")


def encode(model: Sequential, w: np.ndarray) -> np.ndarray:
    """Latent vector(s) for one window or a batch of windows."""
    batch, single = _as_batch(w, model.config["n"])
    z = model.forward(_scale(batch))
    return z[0] if single else z


def decode(model: Sequential, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    out = model.forward(z[None] if single else z) / CHANNEL_LOSS_SCALE[:, None]
    return out[0] if single else out


def classify(head: Sequential, z: np.ndarray) -> ConfidenceVector:
    z = np.asarray(z, dtype=float)
    if z.shape != (head.config["latent"],):
        raise ValueError(f"latent must have length {head.config['latent']}")
    probs = softmax(head.forward(z[None])[0])
    return ConfidenceVector(float(probs[LEFT]), float(probs[RIGHT]), float(probs[STRAIGHT]))


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 300
    val_fraction: float = 0.2
    seed: int = 0


class Adam:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bias1 = 1.0 - c.beta1**self.t
        bias2 = 1.0 - c.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + c.eps)


def _split(n: int, cfg: TrainConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    return perm[n_val:], perm[:n_val]


def autoencoder_loss_and_grads(
    encoder: Sequential, decoder: Sequential, batch: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean squared reconstruction error and gradients for all parameters."""
    z = encoder.forward(batch)
    out = decoder.forward(z)
    diff = out - batch
    loss = float(np.mean(diff**2))
    dy = 2.0 * diff / diff.size
    dz = decoder.backward(dy)
    encoder.backward(dz)
    return loss, encoder.grads() + decoder.grads()


def train_autoencoder(
    dataset: np.ndarray, config: TrainConfig | None = None
) -> tuple[Sequential, Sequential, dict]:
    """Train encoder + decoder on feature windows with Adam.

    ``dataset`` is (N, 5, n).  Returns the best-validation checkpoint of
    both models and a history dict with per-epoch losses and the final
    per-channel validation RMSE.
    """
    cfg = config or TrainConfig()
    X = np.asarray(dataset, dtype=float)
    if X.ndim != 3 or X.shape[1] != 5 or len(X) == 0:
        raise ValueError("dataset must be a non-empty (N, 5, n) array")
    X = _scale(X)
    n = X.shape[2]
    rng = np.random.default_rng(cfg.seed)
    encoder = build_encoder(n=n, seed=cfg.seed)
    decoder = build_decoder(n=n, seed=cfg.seed + 1)
    train_idx, val_idx = _split(len(X), cfg, rng)
    if len(train_idx) == 0:
        train_idx = val_idx
    Xtr, Xval = X[train_idx], X[val_idx]

    opt = Adam(encoder.params() + decoder.params(), cfg)
    history = {"train_loss": [], "val_loss": [], "best_val_loss": []}
    best = np.inf
    best_state = (encoder.state(), decoder.state())
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(Xtr))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = Xtr[order[lo : lo + cfg.batch_size]]
            loss, grads = autoencoder_loss_and_grads(encoder, decoder, batch)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"autoencoder loss became non-finite at epoch {epoch} "
                    f"(batch offset {lo}, lr {cfg.learning_rate})"
                )
            opt.step(grads)
            losses.append(loss)
        val_out = decoder.forward(encoder.forward(Xval))
        val_loss = float(np.mean((val_out - Xval) ** 2))
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"validation loss non-finite at epoch {epoch}")
        if val_loss < best:
            best = val_loss
            best_state = (encoder.state(), decoder.state())
        history["train_loss"].append(float(np.mean(losses)))
        history["val_loss"].append(val_loss)
        history["best_val_loss"].append(best)
    encoder.load_state(best_state[0])
    decoder.load_state(best_state[1])
    # report the RMSE in original window units, undoing the loss weighting
    val_out = decoder.forward(encoder.forward(Xval))
    history["channel_rmse"] = list(
        np.sqrt(np.mean((val_out - Xval) ** 2, axis=(0, 2))) / CHANNEL_LOSS_SCALE
    )
    history["train_seconds"] = time.perf_counter() - t0
    return encoder, decoder, history


def classifier_loss_and_grads(
    head: Sequential, z: np.ndarray, labels: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Cross-entropy loss and head gradients on a latent batch."""
    logits = head.forward(z)
    probs = softmax(logits)
    eps = 1e-300
    loss = float(-np.mean(np.log(probs[np.arange(len(labels)), labels] + eps)))
    dy = probs.copy()
    dy[np.arange(len(labels)), labels] -= 1.0
    dy /= len(labels)
    head.backward(dy)
    return loss, head.grads()


def train_classifier(
    encoder: Sequential,
    dataset: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig | None = None,
) -> tuple[Sequential, dict]:
    """Train the 5 -> 3 head on frozen-encoder latents; returns head + metrics."""
    cfg = config or TrainConfig()
    labels = np.asarray(labels, dtype=int)
    if labels.min() < 0 or labels.max() > 2:
        raise ValueError("labels must be in {0: left, 1: right, 2: straight}")
    X = np.asarray(dataset, dtype=float)
    Z = encode(encoder, X)
    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = _split(len(Z), cfg, rng)
    if len(train_idx) == 0:
        train_idx = val_idx
    Ztr, ytr = Z[train_idx], labels[train_idx]
    Zval, yval = Z[val_idx], labels[val_idx]

    head = build_classifier_head(latent=Z.shape[1], seed=cfg.seed + 2)
    opt = Adam(head.params(), cfg)
    history = {"train_loss": [], "val_accuracy": []}
    best = -1.0
    best_state = head.state()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(Ztr))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            loss, grads = classifier_loss_and_grads(head, Ztr[idx], ytr[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"classifier loss non-finite at epoch {epoch}")
            opt.step(grads)
            losses.append(loss)
        pred = np.argmax(head.forward(Zval), axis=1)
        acc = float(np.mean(pred == yval))
        if acc > best:
            best = acc
            best_state = head.state()
        history["train_loss"].append(float(np.mean(losses)))
        history["val_accuracy"].append(acc)
    head.load_state(best_state)
    pred = np.argmax(head.forward(Zval), axis=1)
    per_class = {}
    for cls, name in enumerate(CLASS_NAMES):
        mask = yval == cls
        per_class[name] = float(np.mean(pred[mask] == cls)) if mask.any() else float("nan")
    metrics = {
        "per_class_accuracy": per_class,
        "average_accuracy": float(np.mean([v for v in per_class.values() if np.isfinite(v)])),
        "overall_accuracy": float(np.mean(pred == yval)),
        "history": history,
    }
    return head, metrics


# ---------------------------------------------------------------------------
# Serialisation


def _builder_for(config: dict) -> Sequential:
    kind = config.get("kind")
    if kind == "encoder":
        return build_encoder(n=config["n"], latent=config["latent"], seed=config["seed"])
    if kind == "decoder":
        return build_decoder(n=config["n"], latent=config["latent"], seed=config["seed"])
    if kind == "classifier":
        return build_classifier_head(
            latent=config["latent"], classes=config["classes"], seed=config["seed"]
        )
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_models(path, **models: Sequential) -> None:
    """Persist named models (weights + architecture config) as versioned npz."""
    arrays = {}
    meta = {"format": "sharedwalk-models", "version": MODEL_FORMAT_VERSION, "models": {}}
    for name, model in models.items():
        meta["models"][name] = model.config
        for i, p in enumerate(model.params()):
            arrays[f"{name}/{i}"] = p
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_models(path) -> dict[str, Sequential]:
    try:
        data = np.load(path)
        meta = json.loads(bytes(data["__meta__"]).decode())
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt or unreadable model file: {exc}") from exc
    if meta.get("format") != "sharedwalk-models" or meta.get("version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError("model file version mismatch")
    out = {}
    for name, config in meta["models"].items():
        model = _builder_for(config)
        try:
            state = [np.asarray(data[f"{name}/{i}"]) for i in range(len(model.params()))]
        except KeyError as exc:
            raise ModelFormatError(f"model file missing arrays for {name!r}") from exc
        model.load_state(state)
        out[name] = model
    return out
