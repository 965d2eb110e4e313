"""Neural unsigned distance field: a small fully-connected network over
sine/cosine positional encodings, with ReLU hidden layers and a raw scalar
output that is clamped to be non-negative at query time."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError, InvalidInputError

DEFAULT_PE_COUNT = 4
DEFAULT_HIDDEN = (128, 256, 256, 128)
DEFAULT_CLAMP = 0.01  # loss clamp delta (meters)

_CKPT_MAGIC = b"CSUD"
_CKPT_VERSION = 1


def positional_encode(x, pe_count: int) -> np.ndarray:
    """[x, sin(2^0 x), cos(2^0 x), ..., sin(2^(N-1) x), cos(2^(N-1) x)],
    applied componentwise; output width 3 + 6 N."""
    if pe_count < 0:
        raise InvalidInputError("pe_count must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x.reshape(-1, 3)
    parts = [pts]
    for i in range(pe_count):
        scaled = (2.0 ** i) * pts
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    out = np.concatenate(parts, axis=1)
    return out[0] if single else out


@dataclass
class MlpUdf:
    """MLP distance field f(x) = max(raw(PE(x)), 0)."""

    pe_count: int
    weights: list = field(repr=False)
    biases: list = field(repr=False)
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        if self.clamp <= 0:
            raise InvalidInputError("clamp must be positive")
        widths = self.widths
        if widths[0] != 3 + 6 * self.pe_count:
            raise InvalidInputError(
                f"input width {widths[0]} != 3 + 6*{self.pe_count}")
        if widths[-1] != 1:
            raise InvalidInputError("output width must be 1")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise InvalidInputError("bias/weight shape mismatch")

    @property
    def widths(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def create(cls, pe_count: int = DEFAULT_PE_COUNT,
               hidden=DEFAULT_HIDDEN, clamp: float = DEFAULT_CLAMP,
               seed: int = 0) -> "MlpUdf":
        """Seeded uniform(+-sqrt(1/fan_in)) initialization.

        The output layer is scaled down so the initial field starts near
        zero: if the raw output began above the loss clamp everywhere, the
        clamped objective would have zero gradient and training could never
        move.
        """
        rng = np.random.default_rng(seed)
        widths = [3 + 6 * pe_count] + list(hidden) + [1]
        weights, biases = [], []
        last = len(widths) - 2
        for li, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = np.sqrt(1.0 / fan_in)
            if li == last:
                bound *= 0.01
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(pe_count=pe_count, weights=weights, biases=biases,
                   clamp=clamp)

    def copy(self) -> "MlpUdf":
        return MlpUdf(pe_count=self.pe_count,
                      weights=[w.copy() for w in self.weights],
                      biases=[b.copy() for b in self.biases],
                      clamp=self.clamp)

    def parameters(self) -> list:
        """Flat list of parameter arrays, weights and biases interleaved."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def forward_raw(model: MlpUdf, points) -> np.ndarray:
    """Raw (unclamped) network output per point."""
    raw, _ = forward_with_cache(model, points)
    return raw


def forward_with_cache(model: MlpUdf, points):
    """Raw output plus the per-layer pre-activations needed for backprop."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    a = positional_encode(pts, model.pe_count)
    activations = [a]
    pre = []
    n_layers = len(model.weights)
    for li, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if li < n_layers - 1 else z
        activations.append(a)
    return activations[-1][:, 0], (activations, pre)


def udf_eval_many(model: MlpUdf, points) -> np.ndarray:
    """Evaluate the field: distances are max(raw, 0), hence >= 0."""
    return np.maximum(forward_raw(model, points), 0.0)


def udf_eval(model: MlpUdf, point) -> float:
    return float(udf_eval_many(model, np.asarray(point,
                                                 dtype=np.float64).reshape(1, 3))[0])


def save_model(path, model: MlpUdf) -> None:
    """Versioned checkpoint: header (magic, version, N, widths, clamp) then
    row-major float32 weights and biases per layer."""
    widths = model.widths
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<III", _CKPT_VERSION, model.pe_count,
                             len(widths)))
        fh.write(struct.pack(f"<{len(widths)}I", *widths))
        fh.write(struct.pack("<d", model.clamp))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_model(path) -> MlpUdf:
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise FormatError("not a model checkpoint (bad magic)",
                              path=str(path))
        version, pe_count, n_widths = struct.unpack("<III", fh.read(12))
        if version != _CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}",
                              path=str(path))
        widths = struct.unpack(f"<{n_widths}I", fh.read(4 * n_widths))
        clamp, = struct.unpack("<d", fh.read(8))
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            wb = fh.read(4 * fan_in * fan_out)
            bb = fh.read(4 * fan_out)
            if len(wb) != 4 * fan_in * fan_out or len(bb) != 4 * fan_out:
                raise FormatError("truncated checkpoint", path=str(path))
            weights.append(np.frombuffer(wb, dtype="<f4")
                           .reshape(fan_in, fan_out).astype(np.float64))
            biases.append(np.frombuffer(bb, dtype="<f4").astype(np.float64))
    return MlpUdf(pe_count=pe_count, weights=weights, biases=biases,
                  clamp=clamp)
