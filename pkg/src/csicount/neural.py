"""From-scratch neural network engine: LSTM, conv, pool, dense, softmax.

Everything runs in float64 with hand-derived backward passes, so gradients
can be validated against central finite differences to tight tolerances.
Parameters use scaled-uniform fan-in initialization from a seeded
generator; forward passes are deterministic given (parameters, input,
seed).  Softmax cross-entropy is the only supported loss and its gradient
is propagated from the logits (the Softmax layer's backward is the fused
identity), trained with plain mini-batch SGD.

Checkpoints are versioned binaries: a JSON architecture descriptor
followed by the raw float64 parameter arrays in layer order.

Counting architecture (sequence input, window_len x 360):

    LSTM(64) -> dropout(0.1) -> conv 6@5x5/1 + maxpool 2x2/2
    -> conv 10@5x3/3 -> flatten -> dense 1000 -> dense 200 -> dense 5
    -> softmax

whose block output shapes on a 200 x 360 window are 200x64, 98x30x6,
32x10x10, 3200, 1000, 200, 5.  The fully-connected baseline takes the
per-column window means (a 360-vector) through dense 300 -> 100 -> 5.
"""

from __future__ import annotations

import json
import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHECKPOINT_MAGIC = b"CSNN"
CHECKPOINT_VERSION = 1

PROB_CLAMP = 1e-12


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


class Layer:
    """Base layer: forward/backward pair plus parameter bookkeeping."""

    trace_point = True  # whether shape_trace records this layer's output

    def initialize(self, rng) -> None:
        """Allocate parameters (draws from rng in a fixed order)."""

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list:
        """[(name, value, grad)] with grads accumulated in place."""
        return []

    def descriptor(self) -> dict:
        raise NotImplementedError

    @property
    def name(self) -> str:
        return type(self).__name__

    def _bad_shape(self, x, expected: str):
        return ValueError(f"{self.name}: expected input {expected}, got {x.shape}")


class Lstm(Layer):
    """Single-direction LSTM returning the full hidden sequence.

    Gate pre-activations are z = x W + h U + b with gate order
    [input, forget, output, candidate]; cells follow

        c_t = f * c_{t-1} + i * tanh-candidate,   h_t = o * tanh(c_t)

    Input (batch, time, in_dim) -> output (batch, time, cells).
    """

    def __init__(self, in_dim: int, cells: int):
        self.in_dim = in_dim
        self.cells = cells

    def initialize(self, rng) -> None:
        n = self.cells
        self.W = _uniform(rng, self.in_dim, (self.in_dim, 4 * n))
        self.U = _uniform(rng, n, (n, 4 * n))
        self.b = np.zeros(4 * n)
        self.dW = np.zeros_like(self.W)
        self.dU = np.zeros_like(self.U)
        self.db = np.zeros_like(self.b)

    def forward(self, x, training):
        if x.ndim != 3 or x.shape[2] != self.in_dim:
            raise self._bad_shape(x, f"(batch, time, {self.in_dim})")
        b, t_len, _ = x.shape
        n = self.cells
        xw = (x.reshape(b * t_len, self.in_dim) @ self.W).reshape(b, t_len, 4 * n)
        gates_i = np.empty((b, t_len, n))
        gates_f = np.empty((b, t_len, n))
        gates_o = np.empty((b, t_len, n))
        gates_g = np.empty((b, t_len, n))
        cells = np.empty((b, t_len, n))
        hidden = np.empty((b, t_len, n))
        h = np.zeros((b, n))
        c = np.zeros((b, n))
        for t in range(t_len):
            z = xw[:, t] + h @ self.U + self.b
            sig = _sigmoid(z[:, : 3 * n])
            g = np.tanh(z[:, 3 * n :])
            i, f, o = sig[:, :n], sig[:, n : 2 * n], sig[:, 2 * n :]
            c = f * c + i * g
            h = o * np.tanh(c)
            gates_i[:, t] = i
            gates_f[:, t] = f
            gates_o[:, t] = o
            gates_g[:, t] = g
            cells[:, t] = c
            hidden[:, t] = h
        self._cache = (x, gates_i, gates_f, gates_o, gates_g, cells, hidden)
        return hidden

    def backward(self, dout):
        x, gi, gf, go, gg, cells, hidden = self._cache
        b, t_len, n = dout.shape
        tanh_c = np.tanh(cells)
        dz_all = np.empty((b, t_len, 4 * n))
        dh_rec = np.zeros((b, n))
        dc_rec = np.zeros((b, n))
        u_t = self.U.T
        for t in range(t_len - 1, -1, -1):
            i, f, o, g, th = gi[:, t], gf[:, t], go[:, t], gg[:, t], tanh_c[:, t]
            dh = dout[:, t] + dh_rec
            do = dh * th
            dc = dc_rec + dh * o * (1.0 - th * th)
            di = dc * g
            dg = dc * i
            df = dc * cells[:, t - 1] if t > 0 else np.zeros((b, n))
            dc_rec = dc * f
            dz = dz_all[:, t]
            dz[:, :n] = di * i * (1.0 - i)
            dz[:, n : 2 * n] = df * f * (1.0 - f)
            dz[:, 2 * n : 3 * n] = do * o * (1.0 - o)
            dz[:, 3 * n :] = dg * (1.0 - g * g)
            dh_rec = dz @ u_t
        dz_flat = dz_all.reshape(b * t_len, 4 * n)
        self.dW += x.reshape(b * t_len, self.in_dim).T @ dz_flat
        h_prev = np.concatenate([np.zeros((b, 1, n)), hidden[:, :-1]], axis=1)
        self.dU += h_prev.reshape(b * t_len, n).T @ dz_flat
        self.db += dz_flat.sum(axis=0)
        self._cache = None
        return (dz_flat @ self.W.T).reshape(b, t_len, self.in_dim)

    def params(self):
        return [("W", self.W, self.dW), ("U", self.U, self.dU), ("b", self.b, self.db)]

    def descriptor(self):
        return {"kind": "lstm", "in_dim": self.in_dim, "cells": self.cells}


class Dropout(Layer):
    """Inverted dropout on activations; identity outside training."""

    trace_point = False

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self._rng = None

    def bind_rng(self, rng) -> None:
        self._rng = rng

    def forward(self, x, training):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self._rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask

    def descriptor(self):
        return {"kind": "dropout", "rate": self.rate}


class AsImage(Layer):
    """Append a singleton channel axis: (b, h, w) -> (b, h, w, 1)."""

    trace_point = False

    def forward(self, x, training):
        if x.ndim != 3:
            raise self._bad_shape(x, "(batch, height, width)")
        return x[..., None]

    def backward(self, dout):
        return dout[..., 0]

    def descriptor(self):
        return {"kind": "as_image"}


class Conv2d(Layer):
    """Valid-padding 2-D convolution with optional fused ReLU.

    Input (batch, h, w, in_channels); filters (kh, kw, in, out) applied at
    the given stride in both directions.
    """

    def __init__(self, in_channels, out_channels, kh, kw, stride=1, activation="relu"):
        if activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {activation!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kh = kh
        self.kw = kw
        self.stride = stride
        self.activation = activation

    def initialize(self, rng):
        fan_in = self.kh * self.kw * self.in_channels
        self.W = _uniform(rng, fan_in, (self.kh, self.kw, self.in_channels, self.out_channels))
        self.b = np.zeros(self.out_channels)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def forward(self, x, training):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise self._bad_shape(x, f"(batch, h, w, {self.in_channels})")
        b, h, w, c = x.shape
        if h < self.kh or w < self.kw:
            raise self._bad_shape(x, f"at least {self.kh} x {self.kw} spatially")
        s = self.stride
        ho = (h - self.kh) // s + 1
        wo = (w - self.kw) // s + 1
        sw = sliding_window_view(x, (self.kh, self.kw), axis=(1, 2))[:, ::s, ::s]
        patches = np.ascontiguousarray(sw.transpose(0, 1, 2, 4, 5, 3)).reshape(
            b * ho * wo, self.kh * self.kw * c
        )
        z = patches @ self.W.reshape(-1, self.out_channels) + self.b
        z = z.reshape(b, ho, wo, self.out_channels)
        if self.activation == "relu":
            mask = z > 0
            out = np.where(mask, z, 0.0)
        else:
            mask = None
            out = z
        self._cache = (patches, x.shape, mask)
        return out

    def backward(self, dout):
        patches, x_shape, mask = self._cache
        b, h, w, c = x_shape
        _, ho, wo, f = dout.shape
        s = self.stride
        dz = dout * mask if mask is not None else dout
        dz_flat = dz.reshape(b * ho * wo, f)
        self.dW += (patches.T @ dz_flat).reshape(self.W.shape)
        self.db += dz_flat.sum(axis=0)
        dx = np.zeros(x_shape)
        for di in range(self.kh):
            for dj in range(self.kw):
                contrib = dz @ self.W[di, dj].T  # (b, ho, wo, c)
                dx[:, di : di + s * ho : s, dj : dj + s * wo : s, :] += contrib
        self._cache = None
        return dx

    def params(self):
        return [("W", self.W, self.dW), ("b", self.b, self.db)]

    def descriptor(self):
        return {
            "kind": "conv2d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kh": self.kh,
            "kw": self.kw,
            "stride": self.stride,
            "activation": self.activation,
        }


class MaxPool2d(Layer):
    """Non-overlapping max pooling (stride = window size).

    Requires spatial dimensions divisible by the size; gradient routes to
    the first maximal element of each window.
    """

    def __init__(self, size: int = 2):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self.size = size

    def forward(self, x, training):
        if x.ndim != 4:
            raise self._bad_shape(x, "(batch, h, w, channels)")
        b, h, w, c = x.shape
        s = self.size
        if h % s or w % s:
            raise self._bad_shape(x, f"spatial dims divisible by {s}")
        ho, wo = h // s, w // s
        xr = (
            x.reshape(b, ho, s, wo, s, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(b, ho, wo, c, s * s)
        )
        self._argmax = xr.argmax(axis=4)
        self._in_shape = x.shape
        return np.take_along_axis(xr, self._argmax[..., None], axis=4)[..., 0]

    def backward(self, dout):
        b, h, w, c = self._in_shape
        s = self.size
        ho, wo = h // s, w // s
        dxr = np.zeros((b, ho, wo, c, s * s))
        np.put_along_axis(dxr, self._argmax[..., None], dout[..., None], axis=4)
        dx = (
            dxr.reshape(b, ho, wo, c, s, s)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(b, h, w, c)
        )
        self._argmax = None
        return dx

    def descriptor(self):
        return {"kind": "maxpool2d", "size": self.size}


class Flatten(Layer):
    """Collapse all non-batch axes."""

    def forward(self, x, training):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._in_shape)

    def descriptor(self):
        return {"kind": "flatten"}


class Dense(Layer):
    """Affine map with optional fused ReLU: y = act(x W + b)."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "linear"):
        if activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation

    def initialize(self, rng):
        self.W = _uniform(rng, self.in_dim, (self.in_dim, self.out_dim))
        self.b = np.zeros(self.out_dim)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def forward(self, x, training):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise self._bad_shape(x, f"(batch, {self.in_dim})")
        z = x @ self.W + self.b
        if self.activation == "relu":
            mask = z > 0
            out = np.where(mask, z, 0.0)
        else:
            mask = None
            out = z
        self._cache = (x, mask)
        return out

    def backward(self, dout):
        x, mask = self._cache
        dz = dout * mask if mask is not None else dout
        self.dW += x.T @ dz
        self.db += dz.sum(axis=0)
        self._cache = None
        return dz @ self.W.T

    def params(self):
        return [("W", self.W, self.dW), ("b", self.b, self.db)]

    def descriptor(self):
        return {
            "kind": "dense",
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "activation": self.activation,
        }


class SummaryInput(Layer):
    """Standardize each row of a (batch, dim) summary vector to zero mean
    and unit variance; constant rows become zeros."""

    def __init__(self, dim: int):
        self.dim = dim

    def forward(self, x, training):
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise self._bad_shape(x, f"(batch, {self.dim})")
        mean = x.mean(axis=1, keepdims=True)
        std = x.std(axis=1, keepdims=True)
        ok = std > 1e-12
        safe = np.where(ok, std, 1.0)
        y = np.where(ok, (x - mean) / safe, 0.0)
        self._cache = (y, safe, ok)
        return y

    def backward(self, dout):
        y, std, ok = self._cache
        g_mean = dout.mean(axis=1, keepdims=True)
        gy_mean = (dout * y).mean(axis=1, keepdims=True)
        dx = np.where(ok, (dout - g_mean - y * gy_mean) / std, 0.0)
        self._cache = None
        return dx

    def descriptor(self):
        return {"kind": "summary_input", "dim": self.dim}


class Softmax(Layer):
    """Row-wise softmax with max subtraction.

    backward() passes the gradient through unchanged: this engine always
    pairs softmax with cross-entropy, whose fused gradient with respect to
    the logits is computed by the loss and fed in directly.
    """

    trace_point = False

    def forward(self, x, training):
        if x.ndim != 2:
            raise self._bad_shape(x, "(batch, classes)")
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def backward(self, dout):
        return dout

    def descriptor(self):
        return {"kind": "softmax"}


_LAYER_KINDS = {
    "lstm": lambda d: Lstm(d["in_dim"], d["cells"]),
    "dropout": lambda d: Dropout(d["rate"]),
    "as_image": lambda d: AsImage(),
    "conv2d": lambda d: Conv2d(
        d["in_channels"], d["out_channels"], d["kh"], d["kw"], d["stride"], d["activation"]
    ),
    "maxpool2d": lambda d: MaxPool2d(d["size"]),
    "flatten": lambda d: Flatten(),
    "dense": lambda d: Dense(d["in_dim"], d["out_dim"], d["activation"]),
    "summary_input": lambda d: SummaryInput(d["dim"]),
    "softmax": lambda d: Softmax(),
}


class Network:
    """An ordered stack of layers trained with softmax cross-entropy.

    input_kind is "sequence" (samples are window_len x n_features matrices)
    or "summary" (samples are flat feature vectors); it tells training and
    inference code which part of a sample to feed.
    """

    def __init__(self, layers, input_kind: str = "sequence", seed: int = 0):
        if input_kind not in ("sequence", "summary"):
            raise ValueError(f"unknown input_kind {input_kind!r}")
        self.layers = list(layers)
        self.input_kind = input_kind
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.initialize(self.rng)
            if isinstance(layer, Dropout):
                layer.bind_rng(self.rng)

    def forward(self, x, training: bool = False, check_finite: bool = True) -> np.ndarray:
        out = np.asarray(x, dtype=np.float64)
        for i, layer in enumerate(self.layers):
            out = layer.forward(out, training)
            if check_finite and not np.isfinite(out).all():
                raise FloatingPointError(f"non-finite output at layer {i} ({layer.name})")
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def params(self) -> list:
        out = []
        for i, layer in enumerate(self.layers):
            for name, value, grad in layer.params():
                out.append((f"layer{i}.{name}", value, grad))
        return out

    @property
    def n_parameters(self) -> int:
        return sum(v.size for _, v, _ in self.params())

    def zero_grads(self) -> None:
        for _, _, grad in self.params():
            grad[...] = 0.0

    def loss_and_gradients(self, x, labels, training: bool = True):
        """Mean cross-entropy over the batch plus parameter gradients.

        `labels` holds 1-based class labels.  Returns (loss, probabilities);
        gradients are left in the layers' grad buffers.
        """
        self.zero_grads()
        probs = self.forward(x, training=training)
        batch, n_classes = probs.shape
        idx = np.asarray(labels, dtype=np.int64) - 1
        if idx.shape != (batch,) or idx.min() < 0 or idx.max() >= n_classes:
            raise ValueError(f"labels must be {batch} values in 1..{n_classes}")
        rows = np.arange(batch)
        loss = -np.log(np.clip(probs[rows, idx], PROB_CLAMP, None)).mean()
        dlogits = probs.copy()
        dlogits[rows, idx] -= 1.0
        dlogits /= batch
        self.backward(dlogits)
        return loss, probs

    def sgd_step(self, lr: float) -> None:
        """theta <- theta - lr * grad, then clear the gradients."""
        for _, value, grad in self.params():
            value -= lr * grad
            grad[...] = 0.0

    def get_param_vector(self) -> np.ndarray:
        return np.concatenate([v.ravel() for _, v, _ in self.params()] or [np.zeros(0)])

    def set_param_vector(self, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        off = 0
        for _, value, _ in self.params():
            value[...] = vector[off : off + value.size].reshape(value.shape)
            off += value.size
        if off != vector.size:
            raise ValueError("parameter vector length mismatch")

    def shape_trace(self, input_shape) -> list:
        """Output shapes (batch axis dropped) at each traced layer."""
        out = np.zeros((1, *input_shape))
        shapes = []
        for layer in self.layers:
            out = layer.forward(out, training=False)
            if layer.trace_point:
                shapes.append(out.shape[1:])
        return shapes

    def descriptor(self) -> dict:
        return {
            "input_kind": self.input_kind,
            "seed": self.seed,
            "layers": [
                dict(layer.descriptor(), trace=bool(layer.trace_point))
                for layer in self.layers
            ],
        }


def build_cnn_lstm(seed: int = 0, window_len: int = 200, n_features: int = 360) -> Network:
    """The full counting network (see module docstring for the stack)."""
    conv1 = Conv2d(1, 6, 5, 5, stride=1, activation="relu")
    conv1.trace_point = False  # the block's shape is read after its pool
    layers = [
        Lstm(n_features, 64),
        Dropout(0.1),
        AsImage(),
        conv1,
        MaxPool2d(2),
        Conv2d(6, 10, 5, 3, stride=3, activation="relu"),
        Flatten(),
        Dense(3200, 1000, "relu"),
        Dense(1000, 200, "relu"),
        Dense(200, 5, "linear"),
        Softmax(),
    ]
    return Network(layers, input_kind="sequence", seed=seed)


def build_fcbp(seed: int = 0, n_features: int = 360) -> Network:
    """Fully-connected baseline on per-window feature means: 360-300-100-5."""
    layers = [
        SummaryInput(n_features),
        Dense(n_features, 300, "relu"),
        Dense(300, 100, "relu"),
        Dense(100, 5, "linear"),
        Softmax(),
    ]
    return Network(layers, input_kind="summary", seed=seed)


def build_cnn_lstm_toy(seed: int = 0) -> Network:
    """The counting stack shrunk to a 12 x 20 input for fast gradient checks."""
    conv1 = Conv2d(1, 3, 3, 3, stride=1, activation="relu")
    conv1.trace_point = False
    layers = [
        Lstm(20, 16),
        Dropout(0.1),
        AsImage(),
        conv1,
        MaxPool2d(2),
        Conv2d(3, 4, 3, 3, stride=2, activation="relu"),
        Flatten(),
        Dense(24, 16, "relu"),
        Dense(16, 10, "relu"),
        Dense(10, 5, "linear"),
        Softmax(),
    ]
    return Network(layers, input_kind="sequence", seed=seed)


def data_loss(net: Network, x, labels) -> float:
    """Cross-entropy of a forward pass without touching gradients."""
    probs = net.forward(x, training=False)
    batch = probs.shape[0]
    idx = np.asarray(labels, dtype=np.int64) - 1
    return float(-np.log(np.clip(probs[np.arange(batch), idx], PROB_CLAMP, None)).mean())


def finite_difference_check(
    net: Network,
    x,
    labels,
    eps: float = 1e-5,
    max_per_array: int | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout is disabled (training=False on both routes).  When
    max_per_array is given, only the entries with the largest-magnitude
    analytic gradients in each parameter array are probed: those carry
    the training signal, while near-zero gradients sit below the
    floating-point noise floor of a central difference on an O(1) loss
    and cannot be verified at any eps.  The relative error of a parameter
    is |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    x = np.asarray(x, dtype=np.float64)
    net.loss_and_gradients(x, labels, training=False)
    analytic = [(value, grad.copy()) for _, value, grad in net.params()]
    worst = 0.0
    for value, grad in analytic:
        flat = value.ravel()
        gflat = grad.ravel()
        if max_per_array is not None and flat.size > max_per_array:
            idxs = np.argpartition(np.abs(gflat), -max_per_array)[-max_per_array:]
            idxs = np.sort(idxs)
        else:
            idxs = np.arange(flat.size)
        for k in idxs:
            orig = flat[k]
            flat[k] = orig + eps
            up = data_loss(net, x, labels)
            flat[k] = orig - eps
            down = data_loss(net, x, labels)
            flat[k] = orig
            numeric = (up - down) / (2.0 * eps)
            a = gflat[k]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            if rel > worst:
                worst = rel
    return worst


def finetune_last_dense(net: Network, x, label: int, lr: float = 0.01, steps: int = 5) -> None:
    """Run `steps` SGD steps on the final dense layer only.

    Every other parameter array is left bitwise untouched: activations up
    to the last dense layer are computed once (inference mode) and reused,
    and only that layer's weights and bias are updated against the softmax
    cross-entropy toward `label` (1-based).
    """
    dense_indices = [i for i, l in enumerate(net.layers) if isinstance(l, Dense)]
    if not dense_indices:
        raise ValueError("network has no dense layer to fine-tune")
    last = dense_indices[-1]
    layer = net.layers[last]
    out = np.asarray(x, dtype=np.float64)
    for front in net.layers[:last]:
        out = front.forward(out, training=False)
    batch = out.shape[0]
    idx = int(label) - 1
    if not 0 <= idx < layer.out_dim:
        raise ValueError(f"label must be in 1..{layer.out_dim}")
    onehot = np.zeros((batch, layer.out_dim))
    onehot[:, idx] = 1.0
    for _ in range(steps):
        z = out @ layer.W + layer.b
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / batch
        layer.W -= lr * (out.T @ g)
        layer.b -= lr * g.sum(axis=0)


def save_network(net: Network, path) -> None:
    """Checkpoint: magic, version, JSON architecture, then f64 parameters."""
    arch = json.dumps(net.descriptor()).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHI", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(arch)))
        fh.write(arch)
        for _, value, _ in net.params():
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.Struct("<4sHI")
    if len(raw) < head.size:
        raise ValueError("checkpoint shorter than its header")
    magic, version, arch_len = head.unpack(raw[: head.size])
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = head.size + arch_len
    arch = json.loads(raw[head.size : off].decode("utf-8"))
    layers = []
    for entry in arch["layers"]:
        layer = _LAYER_KINDS[entry["kind"]](entry)
        layer.trace_point = entry.get("trace", layer.trace_point)
        layers.append(layer)
    net = Network(layers, input_kind=arch["input_kind"], seed=arch["seed"])
    for _, value, _ in net.params():
        n = value.size
        if off + 8 * n > len(raw):
            raise ValueError("checkpoint payload shorter than the architecture needs")
        value[...] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(
            value.shape
        )
        off += 8 * n
    if off != len(raw):
        raise ValueError("trailing bytes after checkpoint parameters")
    return net
