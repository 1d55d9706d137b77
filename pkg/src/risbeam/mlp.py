"""From-scratch dense regressor for beam selection.

Plain numpy forward/backward passes: ReLU hidden layers with inverted
dropout, a linear output layer, mean-squared-error loss with an L2 weight
penalty, and mini-batch gradient descent with momentum under a stepped
learning-rate schedule.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import TrainingSample
from .ris import Codebook
from .seeding import derive_seed

MODEL_FILE_MAGIC = b"RISM1\x00"


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer widths [input, hidden..., output] plus the dropout rate.

    At least two hidden layers are required; dropout applies after every
    hidden activation, never at the output.
    """

    layer_widths: tuple[int, ...]
    dropout_rate: float = 0.5

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 4:
            raise ValueError("need input, >= 2 hidden and output widths")
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def num_hidden(self) -> int:
        return len(self.layer_widths) - 2


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 49
    batch_size: int = 500
    l2_coefficient: float = 1e-4
    initial_lr: float = 0.1
    lr_drop_period_epochs: int = 8
    lr_drop_factor: float = 0.5
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1 or self.lr_drop_period_epochs < 1:
            raise ValueError("epochs, batch size and drop period must be >= 1")
        if self.l2_coefficient < 0 or self.initial_lr < 0 or self.momentum < 0:
            raise ValueError("l2, learning rate and momentum must be >= 0")
        if not 0.0 < self.lr_drop_factor <= 1.0:
            raise ValueError("lr_drop_factor must lie in (0, 1]")

    def learning_rate(self, epoch: int) -> float:
        return self.initial_lr * self.lr_drop_factor ** (epoch // self.lr_drop_period_epochs)


class MlpModel:
    """Dense network parameters; ``mode`` gates run-time prediction."""

    def __init__(self, architecture: MlpArchitecture, weights, biases, mode: str = "train"):
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        widths = architecture.layer_widths
        if len(weights) != len(widths) - 1 or len(biases) != len(widths) - 1:
            raise ValueError("need one weight and bias array per layer transition")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (widths[i], widths[i + 1]) or b.shape != (widths[i + 1],):
                raise ValueError(f"parameter shapes at layer {i} do not match widths")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")
        self.architecture = architecture
        self.weights = list(weights)
        self.biases = list(biases)
        self.mode = mode


@dataclass
class TrainReport:
    """Per-epoch learning rate and clean (dropout-off) train/test MSE."""

    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    learning_rate: list[float] = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


def init_model(arch: MlpArchitecture, seed: int) -> MlpModel:
    """Uniform Glorot weights, U(+-sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    widths = arch.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(arch, weights, biases, mode="train")


def _forward_batch(
    model: MlpModel,
    inputs: np.ndarray,
    dropout_rng: np.random.Generator | None,
    cache: list | None = None,
) -> np.ndarray:
    """Batch forward pass; masks drawn from dropout_rng when given.

    When ``cache`` is supplied it collects (pre-activation, activation,
    mask) per hidden layer for the backward pass.
    """
    rate = model.architecture.dropout_rate
    activation = inputs
    for layer in range(model.architecture.num_hidden):
        pre = activation @ model.weights[layer] + model.biases[layer]
        activation = np.maximum(pre, 0.0)
        mask = None
        if dropout_rng is not None and rate > 0.0:
            keep = 1.0 - rate
            mask = (dropout_rng.random(activation.shape) < keep) / keep
            activation = activation * mask
        if cache is not None:
            cache.append((pre, activation, mask))
    return activation @ model.weights[-1] + model.biases[-1]


def forward(
    model: MlpModel, inputs: np.ndarray, training_mode: bool = False, seed: int = 0
) -> np.ndarray:
    """Network output for one flattened input (or a batch of rows).

    With training_mode the hidden activations are dropped out with the
    architecture's rate and rescaled by the keep probability (inverted
    dropout), so inference needs no correction.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == 1
    batch = inputs.reshape(1, -1) if single else inputs
    if batch.shape[1] != model.architecture.input_width:
        raise ValueError(
            f"input width {batch.shape[1]} does not match {model.architecture.input_width}"
        )
    rng = np.random.default_rng(seed) if training_mode else None
    out = _forward_batch(model, batch, rng)
    return out[0] if single else out


def loss(prediction: np.ndarray, target: np.ndarray, model: MlpModel, l2: float) -> float:
    """Mean squared error over output units plus l2/2 * sum of squared weights."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ValueError("prediction and target must have equal shape")
    mse = float(np.mean((prediction - target) ** 2))
    penalty = 0.5 * l2 * sum(float(np.sum(w * w)) for w in model.weights)
    return mse + penalty


def loss_gradients(
    model: MlpModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    l2: float,
    dropout_rng: np.random.Generator | None = None,
):
    """Loss value and its gradients w.r.t. every weight and bias.

    The MSE is averaged over all batch entries and output units, matching
    :func:`loss` on a single sample.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    cache: list = []
    prediction = _forward_batch(model, inputs, dropout_rng, cache)

    n_entries = prediction.size
    residual = prediction - targets
    value = float(np.mean(residual**2)) + 0.5 * l2 * sum(
        float(np.sum(w * w)) for w in model.weights
    )

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    delta = 2.0 * residual / n_entries
    last_hidden = cache[-1][1] if cache else inputs
    grad_w[-1] = last_hidden.T @ delta + l2 * model.weights[-1]
    grad_b[-1] = delta.sum(axis=0)

    upstream = delta @ model.weights[-1].T
    for layer in range(model.architecture.num_hidden - 1, -1, -1):
        pre, _, mask = cache[layer]
        if mask is not None:
            upstream = upstream * mask
        upstream = upstream * (pre > 0.0)
        below = cache[layer - 1][1] if layer > 0 else inputs
        grad_w[layer] = below.T @ upstream + l2 * model.weights[layer]
        grad_b[layer] = upstream.sum(axis=0)
        if layer > 0:
            upstream = upstream @ model.weights[layer].T
    return value, grad_w, grad_b


def _stack_samples(samples: list[TrainingSample]) -> tuple[np.ndarray, np.ndarray]:
    inputs = np.stack([s.flat_input for s in samples])
    targets = np.stack([s.target for s in samples])
    return inputs, targets


def train(
    model: MlpModel,
    train_set: list[TrainingSample],
    test_set: list[TrainingSample],
    config: TrainConfig,
) -> tuple[MlpModel, TrainReport]:
    """Mini-batch SGD with momentum; returns the model in inference mode.

    Batches are reshuffled every epoch from a seed-derived stream, and the
    learning rate steps down by lr_drop_factor every lr_drop_period_epochs.
    Reported losses are plain MSE with dropout disabled, evaluated after
    each epoch.  A non-finite loss aborts with TrainingDivergedError.
    """
    if not train_set or not test_set:
        raise ValueError("train and test sets must be non-empty")
    x_train, y_train = _stack_samples(train_set)
    x_test, y_test = _stack_samples(test_set)
    if x_train.shape[1] != model.architecture.input_width:
        raise ValueError("training inputs do not match the architecture input width")
    if y_train.shape[1] != model.architecture.output_width:
        raise ValueError("training targets do not match the architecture output width")

    shuffle_rng = np.random.default_rng(derive_seed(config.seed, "batch-shuffle"))
    dropout_rng = (
        np.random.default_rng(derive_seed(config.seed, "dropout"))
        if model.architecture.dropout_rate > 0.0
        else None
    )
    velocity_w = [np.zeros_like(w) for w in model.weights]
    velocity_b = [np.zeros_like(b) for b in model.biases]
    l2 = config.l2_coefficient
    report = TrainReport()

    n = x_train.shape[0]
    for epoch in range(config.max_epochs):
        lr = config.learning_rate(epoch)
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            value, grad_w, grad_b = loss_gradients(
                model, x_train[batch], y_train[batch], l2, dropout_rng
            )
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}"
                )
            for i in range(len(model.weights)):
                velocity_w[i] = config.momentum * velocity_w[i] - lr * grad_w[i]
                velocity_b[i] = config.momentum * velocity_b[i] - lr * grad_b[i]
                model.weights[i] = model.weights[i] + velocity_w[i]
                model.biases[i] = model.biases[i] + velocity_b[i]

        train_mse = float(np.mean((_forward_batch(model, x_train, None) - y_train) ** 2))
        test_mse = float(np.mean((_forward_batch(model, x_test, None) - y_test) ** 2))
        if not (np.isfinite(train_mse) and np.isfinite(test_mse)):
            raise TrainingDivergedError(f"non-finite epoch loss at epoch {epoch}")
        report.train_loss.append(train_mse)
        report.test_loss.append(test_mse)
        report.learning_rate.append(lr)

    model.mode = "infer"
    return model, report


def predict_beam(
    model: MlpModel, history_input: np.ndarray, codebook: Codebook
) -> tuple[int, np.ndarray]:
    """Pick the codebook entry with the highest predicted rate.

    Runs a deterministic forward pass (no dropout) on the flattened
    history and returns the first argmax with its interaction vector.
    """
    if model.mode != "infer":
        raise ValueError("model must be in inference mode")
    if model.architecture.output_width != codebook.p_size:
        raise ValueError(
            f"output width {model.architecture.output_width} does not match "
            f"codebook size {codebook.p_size}"
        )
    flat = np.asarray(history_input, dtype=np.float64).reshape(-1)
    scores = forward(model, flat, training_mode=False)
    index = int(np.argmax(scores))
    return index, codebook.vectors[:, index]


def save_model(model: MlpModel, path) -> None:
    """Binary checkpoint: versioned header, widths, dropout, parameters."""
    arch = model.architecture
    with open(path, "wb") as fh:
        fh.write(MODEL_FILE_MAGIC)
        fh.write(struct.pack("<I", len(arch.layer_widths)))
        fh.write(struct.pack(f"<{len(arch.layer_widths)}I", *arch.layer_widths))
        fh.write(struct.pack("<d", arch.dropout_rate))
        fh.write(struct.pack("<B", 1 if model.mode == "infer" else 0))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype=np.float64).tobytes())
            fh.write(np.ascontiguousarray(b, dtype=np.float64).tobytes())


def load_model(path) -> MlpModel:
    """Restore a checkpoint written by :func:`save_model`, bit-exact."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_FILE_MAGIC))
        if magic != MODEL_FILE_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        (n_widths,) = struct.unpack("<I", fh.read(4))
        widths = struct.unpack(f"<{n_widths}I", fh.read(4 * n_widths))
        (dropout_rate,) = struct.unpack("<d", fh.read(8))
        (mode_byte,) = struct.unpack("<B", fh.read(1))
        arch = MlpArchitecture(layer_widths=widths, dropout_rate=dropout_rate)
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype=np.float64)
            b = np.frombuffer(fh.read(8 * fan_out), dtype=np.float64)
            if w.size != fan_in * fan_out or b.size != fan_out:
                raise ValueError(f"{path}: checkpoint truncated")
            weights.append(w.reshape(fan_in, fan_out).copy())
            biases.append(b.copy())
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after parameters")
    return MlpModel(arch, weights, biases, mode="infer" if mode_byte else "train")
