"""Full-precision reference for the dense, convolutional and pooling layers.

Deliberately naive. Every weighted sum is accumulated in ascending synapse
order (for convolutions: input channel, then window row, then window column)
in float64, so results are reproducible bit for bit. Images are planar
``(channels, height, width)`` here; flattening into a dense layer follows the
pixel-major ``(height, width, channels)`` order used by the hardware stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError
from .topology import CONV, FC, MAXPOOL, LayerSpec

SIGN = "sign"


def batchnorm(a, gamma, mu, inv_std, beta):
    return gamma * (a - mu) * inv_std + beta


def sign(x):
    """+1 where x >= 0, -1 elsewhere."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


@dataclass
class RealLayer:
    weights: np.ndarray  # (N, Y) or (N, S, J, K)
    bias: Optional[np.ndarray] = None
    bn: Optional[object] = None  # anything with gamma/mu/inv_std/beta arrays
    activation: Optional[str] = SIGN
    pad: int = 0
    pad_value: float = 1.0

    def normalize(self, pre):
        if self.bn is None:
            return pre
        shape = (-1,) + (1,) * (pre.ndim - 1)
        b = self.bn
        return batchnorm(
            pre,
            np.asarray(b.gamma, dtype=np.float64).reshape(shape),
            np.asarray(b.mu, dtype=np.float64).reshape(shape),
            np.asarray(b.inv_std, dtype=np.float64).reshape(shape),
            np.asarray(b.beta, dtype=np.float64).reshape(shape),
        )

    def activate(self, pre):
        out = self.normalize(pre)
        return sign(out) if self.activation == SIGN else out


def fc_preactivation(layer: RealLayer, x) -> np.ndarray:
    w = np.asarray(layer.weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if w.ndim != 2 or w.shape[1] != x.size:
        raise DimensionError(f"weights {w.shape} cannot take an input of length {x.size}")
    acc = np.zeros(w.shape[0])
    for s in range(w.shape[1]):
        acc += w[:, s] * x[s]
    if layer.bias is not None:
        acc += np.asarray(layer.bias, dtype=np.float64)
    return acc


def fc_forward(layer: RealLayer, x) -> np.ndarray:
    return layer.activate(fc_preactivation(layer, x))


def conv_preactivation(layer: RealLayer, images) -> np.ndarray:
    w = np.asarray(layer.weights, dtype=np.float64)
    p = np.asarray(images, dtype=np.float64)
    if w.ndim != 4 or p.ndim != 3 or w.shape[1] != p.shape[0]:
        raise DimensionError(f"weights {w.shape} do not match images {p.shape}")
    if layer.pad:
        p = np.pad(p, ((0, 0), (layer.pad, layer.pad), (layer.pad, layer.pad)),
                   constant_values=layer.pad_value)
    n, s_in, jj, kk = w.shape
    rows = p.shape[1] - jj + 1
    cols = p.shape[2] - kk + 1
    if rows < 1 or cols < 1:
        raise DimensionError("window larger than image")
    acc = np.zeros((n, rows, cols))
    for s in range(s_in):
        for j in range(jj):
            for k in range(kk):
                acc += w[:, s, j, k][:, None, None] * p[s, j:j + rows, k:k + cols][None]
    if layer.bias is not None:
        acc += np.asarray(layer.bias, dtype=np.float64)[:, None, None]
    return acc


def conv_forward(layer: RealLayer, images) -> np.ndarray:
    return layer.activate(conv_preactivation(layer, images))


def _tiles(images, k):
    images = np.asarray(images)
    c, h, w = images.shape
    if h % k or w % k:
        raise DimensionError(f"{h}x{w} image not divisible by pool window {k}")
    return images.reshape(c, h // k, k, w // k, k)


def maxpool_int(images, k):
    return _tiles(images, k).max(axis=(2, 4))


def minpool_int(images, k):
    return _tiles(images, k).min(axis=(2, 4))


def avgpool_int(images, k):
    return _tiles(images, k).sum(axis=(2, 4)) / float(k * k)


def upper_median_pool(images, k):
    """Per-tile (k*k // 2 + 1)-th smallest element, i.e. the upper median."""
    t = _tiles(images, k)
    c, h, _, w, _ = t.shape
    flat = t.transpose(0, 1, 3, 2, 4).reshape(c, h, w, k * k)
    return np.sort(flat, axis=-1)[..., (k * k) // 2]


def real_layer(trained) -> RealLayer:
    spec: LayerSpec = trained.spec
    return RealLayer(
        weights=np.asarray(trained.weights, dtype=np.float64),
        bias=None if trained.bias is None else np.asarray(trained.bias, dtype=np.float64),
        bn=trained.bn,
        activation=SIGN if spec.thresholded else None,
        pad=spec.pad,
        pad_value=float(getattr(trained, "pad_value", 1)),
    )


def _flatten_hwc(x):
    x = np.asarray(x)
    return x.transpose(1, 2, 0).reshape(-1) if x.ndim == 3 else x.reshape(-1)


def forward_network(layers: Sequence, x) -> list[np.ndarray]:
    """Run trained layers on one input; return the activation after each layer.

    Pooling follows the training-time order: integer pre-activations of the
    preceding convolution are pooled, then batch-normalised and binarised.
    ``x`` is a flat vector for dense networks or ``(H, W, C)`` for images.
    """
    x = np.asarray(x)
    cur = x.transpose(2, 0, 1) if x.ndim == 3 else x
    outputs = []
    pending = None  # (RealLayer, pre-activation) of a conv awaiting a pool
    for trained in layers:
        kind = trained.spec.kind
        if kind == FC:
            rl = real_layer(trained)
            cur = fc_forward(rl, _flatten_hwc(cur))
            pending = None
        elif kind == CONV:
            rl = real_layer(trained)
            pre = conv_preactivation(rl, cur)
            cur = rl.activate(pre)
            pending = (rl, pre)
        elif kind == MAXPOOL:
            k = trained.spec.kernel
            if pending is not None:
                rl, pre = pending
                cur = rl.activate(maxpool_int(pre, k))
            else:
                cur = maxpool_int(cur, k)
            pending = None
        else:
            raise DimensionError(f"unknown layer kind {kind!r}")
        outputs.append(cur)
    return outputs
