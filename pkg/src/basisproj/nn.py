"""Residual 1d-CNN multi-label classifier with a swappable front layer.

Inputs are ``(batch, T, F)`` arrays: ``T`` is retention time and ``F`` the
m/z axis. The front layer maps every element (F-vector) to ``C`` values,
then the element axis becomes the convolution channel axis and ``T`` is
convolved. Every layer keeps what its backward pass needs on ``self``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bpl import BasisSet, bpl_backward, bpl_forward
from .errors import InvalidArgumentError, StateError

FRONTS = ("identity", "unit_vectorization", "fully_connected", "bpl")


def unit_vectorize(x) -> np.ndarray:
    """Scale each element (last axis) to unit 2-norm; zero elements stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def relu(x):
    return np.maximum(x, 0.0)


# -- layers ---------------------------------------------------------------


class Conv1d:
    """Same-length cross-correlation over the last axis with zero padding."""

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        out_c, in_c, k = self.weight.shape
        if k % 2 != 1:
            raise InvalidArgumentError("kernel_size must be odd")
        if self.bias.shape != (out_c,):
            raise InvalidArgumentError("bias length must equal out_channels")
        self._flat = None

    @classmethod
    def init(cls, in_channels, out_channels, kernel_size, rng, gain=1.0):
        std = gain * math.sqrt(2.0 / (in_channels * kernel_size))
        w = rng.normal(0.0, std, size=(out_channels, in_channels, kernel_size))
        return cls(w, np.zeros(out_channels))

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def kernel_size(self):
        return self.weight.shape[2]

    def forward(self, x):
        """(batch, C_in, T) -> (batch, C_out, T)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise InvalidArgumentError(f"conv expects (batch, {self.in_channels}, T), got {x.shape}")
        return self.forward_tc(x.transpose(0, 2, 1)).transpose(0, 2, 1)

    def backward(self, g):
        dx, gw, gb = self.backward_tc(np.asarray(g).transpose(0, 2, 1))
        return dx.transpose(0, 2, 1), gw, gb

    def forward_tc(self, x):
        """Channels-last variant, (batch, T, C_in) -> (batch, T, C_out).

        The zero-padded batch is flattened into one long sequence so every
        kernel tap is a row-offset view; rows straddling two samples are
        computed and then discarded.
        """
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise InvalidArgumentError(f"conv expects (batch, T, {self.in_channels}), got {x.shape}")
        b, t, c = x.shape
        k = self.kernel_size
        pad = (k - 1) // 2
        tp = t + 2 * pad
        xp = np.zeros((b, tp, c))
        xp[:, pad:pad + t] = x
        flat = xp.reshape(b * tp, c)
        rows = b * tp - 2 * pad
        taps = np.ascontiguousarray(self.weight.transpose(2, 1, 0))  # k, in, out
        y = flat[0:rows] @ taps[0]
        for j in range(1, k):
            y += flat[j:j + rows] @ taps[j]
        self._flat, self._shape = flat, x.shape
        out = np.empty((b * tp, self.out_channels))
        out[:rows] = y
        out = out.reshape(b, tp, self.out_channels)[:, :t]
        out += self.bias
        return out

    def backward_tc(self, g):
        if self._flat is None:
            raise StateError("conv backward called before forward")
        b, t, c = self._shape
        k = self.kernel_size
        pad = (k - 1) // 2
        tp = t + 2 * pad
        rows = b * tp - 2 * pad
        gfull = np.zeros((b, tp, self.out_channels))
        gfull[:, :t] = g
        gflat = gfull.reshape(b * tp, self.out_channels)[:rows]
        flat = self._flat
        taps_t = np.ascontiguousarray(self.weight.transpose(2, 0, 1))  # k, out, in
        grad_taps = np.empty((k, self.out_channels, c))
        dflat = np.zeros_like(flat)
        for j in range(k):
            grad_taps[j] = gflat.T @ flat[j:j + rows]
            dflat[j:j + rows] += gflat @ taps_t[j]
        grad_w = np.ascontiguousarray(grad_taps.transpose(1, 2, 0))
        grad_b = g.reshape(-1, self.out_channels).sum(axis=0)
        return dflat.reshape(b, tp, c)[:, pad:pad + t], grad_w, grad_b


class ResidualBlock:
    def __init__(self, conv1: Conv1d, conv2: Conv1d):
        if not (conv1.in_channels == conv1.out_channels == conv2.in_channels == conv2.out_channels):
            raise InvalidArgumentError("residual block convs must keep the channel count")
        self.conv1, self.conv2 = conv1, conv2

    def forward(self, h):
        """Channels-last (batch, T, C)."""
        a1 = self.conv1.forward_tc(h)
        self._mask1 = a1 > 0
        a2 = self.conv2.forward_tc(relu(a1))
        out = a2 + h
        self._mask_out = out > 0
        return relu(out)

    def backward(self, g):
        g = g * self._mask_out
        d_h1, gw2, gb2 = self.conv2.backward_tc(g)
        d_a1 = d_h1 * self._mask1
        d_h, gw1, gb1 = self.conv1.backward_tc(d_a1)
        return d_h + g, (gw1, gb1, gw2, gb2)


class Dense:
    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)

    def forward(self, x):
        self._x = x
        x2 = x.reshape(-1, x.shape[-1])
        return (x2 @ self.weight.T + self.bias).reshape(*x.shape[:-1], -1)

    def backward(self, g):
        x = self._x.reshape(-1, self._x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        return (g2 @ self.weight).reshape(*g.shape[:-1], -1), g2.T @ x, g2.sum(axis=0)


# -- model ----------------------------------------------------------------


@dataclass
class LossValue:
    value: float
    grad: np.ndarray  # d value / d logits

    def scaled(self, factor: float) -> "LossValue":
        return LossValue(self.value * factor, self.grad * factor)


def bce_loss(logits, labels) -> LossValue:
    """Mean sigmoid binary cross-entropy over batch and classes."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise InvalidArgumentError(f"logits {z.shape} and labels {y.shape} differ in shape")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidArgumentError("labels must be 0 or 1")
    terms = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (sigmoid(z) - y) / z.size
    return LossValue(float(terms.mean()), grad)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class ClassifierModel:
    """Front layer, stem conv, residual blocks, average pooling, dense head.

    With the default eight blocks the stack has 17 convolution layers.
    """

    def __init__(self, front, in_dim, n_classes, *, n_bases=None, width=64, n_blocks=8,
                 kernel_size=3, basis_set: Optional[BasisSet] = None, rng=None):
        if front not in FRONTS:
            raise InvalidArgumentError(f"unknown front {front!r}; expected one of {FRONTS}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.front = front
        self.in_dim = in_dim
        self.n_classes = n_classes
        self.basis_set = None
        self.fc = None

        if front == "bpl":
            if basis_set is None:
                raise InvalidArgumentError("bpl front requires a BasisSet")
            if basis_set.element_dim != in_dim:
                raise InvalidArgumentError(f"bases have element_dim {basis_set.element_dim}, input has {in_dim}")
            self.basis_set = basis_set
            channels = basis_set.n_bases
        elif front == "fully_connected":
            if not n_bases:
                raise InvalidArgumentError("fully_connected front requires n_bases")
            w = rng.normal(0.0, 1.0 / math.sqrt(in_dim), size=(n_bases, in_dim))
            self.fc = Dense(w, np.zeros(n_bases))
            channels = n_bases
        else:
            channels = in_dim

        self.stem = Conv1d.init(channels, width, kernel_size, rng)
        self.blocks = [
            ResidualBlock(
                Conv1d.init(width, width, kernel_size, rng),
                Conv1d.init(width, width, kernel_size, rng, gain=1.0 / math.sqrt(n_blocks)),
            )
            for _ in range(n_blocks)
        ]
        self.head = Dense(rng.normal(0.0, 1.0 / math.sqrt(width), size=(n_classes, width)), np.zeros(n_classes))
        self._cache = None

    @property
    def n_conv_layers(self) -> int:
        return 1 + 2 * len(self.blocks)

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        """Live views of every trainable array, keyed by a stable name."""
        p = OrderedDict()
        if self.front == "bpl":
            p["front.bases"] = self.basis_set.bases
        elif self.front == "fully_connected":
            p["front.weight"] = self.fc.weight
            p["front.bias"] = self.fc.bias
        p["stem.weight"] = self.stem.weight
        p["stem.bias"] = self.stem.bias
        for i, blk in enumerate(self.blocks):
            p[f"blocks.{i}.conv1.weight"] = blk.conv1.weight
            p[f"blocks.{i}.conv1.bias"] = blk.conv1.bias
            p[f"blocks.{i}.conv2.weight"] = blk.conv2.weight
            p[f"blocks.{i}.conv2.bias"] = blk.conv2.bias
        p["head.weight"] = self.head.weight
        p["head.bias"] = self.head.bias
        return p

    def load_parameters(self, values) -> None:
        """Copy arrays into the model in place (shapes must match)."""
        live = self.parameters()
        missing = set(live) - set(values)
        if missing:
            raise InvalidArgumentError(f"missing parameters: {sorted(missing)}")
        for name, arr in live.items():
            src = np.asarray(values[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise InvalidArgumentError(f"{name}: shape {src.shape} != {arr.shape}")
            arr[...] = src

    def front_forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[-1] != self.in_dim:
            raise InvalidArgumentError(f"expected input (batch, T, {self.in_dim}), got {x.shape}")
        if self.front == "identity":
            return x
        if self.front == "unit_vectorization":
            return unit_vectorize(x)
        if self.front == "fully_connected":
            return self.fc.forward(x)
        self._bpl_cache = bpl_forward(x, self.basis_set)
        return self._bpl_cache.coefficients

    def forward(self, x) -> np.ndarray:
        h = self.front_forward(x)
        a = self.stem.forward_tc(h)
        self._stem_mask = a > 0
        h = relu(a)
        for blk in self.blocks:
            h = blk.forward(h)
        self._t = h.shape[1]
        pooled = h.mean(axis=1)
        self._cache = True
        return self.head.forward(pooled)

    def backward(self, grad_logits) -> "OrderedDict[str, np.ndarray]":
        if self._cache is None:
            raise StateError("backward called before forward")
        grads = {}
        d_pool, grads["head.weight"], grads["head.bias"] = self.head.backward(grad_logits)
        g = np.repeat(d_pool[:, None, :] / self._t, self._t, axis=1)
        for i in reversed(range(len(self.blocks))):
            g, (gw1, gb1, gw2, gb2) = self.blocks[i].backward(g)
            grads[f"blocks.{i}.conv1.weight"], grads[f"blocks.{i}.conv1.bias"] = gw1, gb1
            grads[f"blocks.{i}.conv2.weight"], grads[f"blocks.{i}.conv2.bias"] = gw2, gb2
        g = g * self._stem_mask
        g, grads["stem.weight"], grads["stem.bias"] = self.stem.backward_tc(g)
        if self.front == "fully_connected":
            _, grads["front.weight"], grads["front.bias"] = self.fc.backward(g)
        elif self.front == "bpl":
            _, grads["front.bases"] = bpl_backward(g, self._bpl_cache)
        return OrderedDict((name, grads[name]) for name in self.parameters())


def model_forward(x, model: ClassifierModel) -> np.ndarray:
    return model.forward(x)


def model_backward(loss: LossValue, model: ClassifierModel):
    return model.backward(loss.grad)
