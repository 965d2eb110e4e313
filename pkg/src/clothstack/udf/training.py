"""Clamped distance-field fitting objective and Adam training loop.

The loss is the mean squared difference of clamp-limited prediction and
ground truth: both sides are min(. , delta), which zeroes gradients for
samples already far from the surface and focuses capacity near it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, InvalidInputError
from .model import MlpUdf, forward_with_cache
from .sampling import SampleSet


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4096
    iterations: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.iterations < 0:
            raise InvalidInputError("iterations must be >= 0")


def udf_loss(model: MlpUdf, batch: SampleSet, delta: float | None = None):
    """Loss and exact parameter gradients for one batch.

    Returns (loss, grads) with grads shaped like model.parameters().
    The clamp passes gradient only where the raw prediction is below delta;
    the query-time non-negativity guard is not part of the training path.
    """
    if len(batch) == 0:
        raise InvalidInputError("empty batch")
    if delta is None:
        delta = model.clamp
    if delta <= 0:
        raise InvalidInputError("delta must be positive")

    raw, (activations, pre) = forward_with_cache(model, batch.points)
    pred_c = np.minimum(raw, delta)
    gt_c = np.minimum(batch.gt, delta)
    resid = pred_c - gt_c
    n = len(batch)
    loss = float(np.mean(resid ** 2))

    # d loss / d raw: clamp blocks gradient where the prediction saturates
    dout = (2.0 / n) * resid * (raw < delta)
    grads = []
    delta_z = dout[:, None]
    n_layers = len(model.weights)
    for li in range(n_layers - 1, -1, -1):
        a_prev = activations[li]
        gw = a_prev.T @ delta_z
        gb = delta_z.sum(axis=0)
        grads.append(gb)
        grads.append(gw)
        if li > 0:
            delta_z = (delta_z @ model.weights[li].T) * (pre[li - 1] > 0.0)
    grads.reverse()
    return loss, grads


def train_udf(model: MlpUdf, samples: SampleSet, config: TrainConfig):
    """Adam over shuffled mini-batches; deterministic given config.seed.

    Returns (trained model, per-step loss history). The input model is not
    modified. Raises DivergenceError naming the step if the loss goes
    non-finite.
    """
    if len(samples) == 0:
        raise InvalidInputError("no training samples")
    model = model.copy()
    params = model.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(config.seed)
    history = np.empty(config.iterations)

    order = np.empty(0, dtype=np.int64)
    cursor = 0
    for step in range(config.iterations):
        if cursor + config.batch_size > len(order):
            order = rng.permutation(len(samples))
            cursor = 0
        take = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size

        loss, grads = udf_loss(model, samples.subset(take), model.clamp)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}",
                                  step=step)
        history[step] = loss

        t = step + 1
        bc1 = 1.0 - config.beta1 ** t
        bc2 = 1.0 - config.beta2 ** t
        for p, g, mi, vi in zip(params, grads, m, v):
            mi *= config.beta1
            mi += (1.0 - config.beta1) * g
            vi *= config.beta2
            vi += (1.0 - config.beta2) * g * g
            p -= config.learning_rate * (mi / bc1) / (np.sqrt(vi / bc2)
                                                      + config.eps)
    return model, history


def save_loss_history(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(history):
            writer.writerow([step, f"{loss:.12e}"])


def load_loss_history(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        return np.array([float(row[1]) for row in reader])
