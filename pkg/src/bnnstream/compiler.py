"""Turn trained bipolar layers into execution-ready packed layers.

The passes here are: batchnorm-to-threshold conversion (with weight-sign
flipping for neurons whose batchnorm slope is negative), filter-matrix packing
in the sliding-window column order, and channel interleaving of images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bitcore import BitMatrix, FixedPointTensor, InterleavedFrame
from .errors import CompileError, DimensionError
from .topology import CONV, FC, MAXPOOL, LayerSpec, NetworkTopology


@dataclass(frozen=True)
class BatchNormParams:
    """Per-neuron batchnorm parameters; each field is a length-N array."""

    gamma: np.ndarray
    mu: np.ndarray
    inv_std: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(getattr(self, f), dtype=np.float64))
                  for f in ("gamma", "mu", "inv_std", "beta")]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise DimensionError("batchnorm parameter arrays must share one 1-D shape")
        for name, a in zip(("gamma", "mu", "inv_std", "beta"), arrays):
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return self.gamma.size

    def __getitem__(self, n):
        return (float(self.gamma[n]), float(self.mu[n]), float(self.inv_std[n]), float(self.beta[n]))

    @classmethod
    def identity(cls, n: int) -> "BatchNormParams":
        return cls(np.ones(n), np.zeros(n), np.ones(n), np.zeros(n))

    def apply(self, a):
        """Batchnorm of pre-activations ``a`` (neurons along axis 0)."""
        a = np.asarray(a, dtype=np.float64)
        shape = (-1,) + (1,) * (a.ndim - 1)
        return (self.gamma.reshape(shape) * (a - self.mu.reshape(shape))
                * self.inv_std.reshape(shape) + self.beta.reshape(shape))

    def with_bias(self, bias) -> "BatchNormParams":
        """Absorb a per-neuron bias: BN(a + b) == BN'(a)."""
        bias = np.asarray(bias, dtype=np.float64)
        return BatchNormParams(self.gamma, self.mu, self.inv_std,
                               self.beta + self.gamma * self.inv_std * bias)


@dataclass
class TrainedLayer:
    """A layer as it comes out of training: +/-1 weights and batchnorm params."""

    spec: LayerSpec
    weights: Optional[np.ndarray] = None  # (N, Y) for fc, (N, S, J, K) for conv
    bn: Optional[BatchNormParams] = None
    bias: Optional[np.ndarray] = None
    pad_value: int = 1

    def __post_init__(self):
        s = self.spec
        if s.kind == MAXPOOL:
            if self.weights is not None or self.bn is not None:
                raise DimensionError("pooling layers carry no parameters")
            return
        w = np.asarray(self.weights)
        want = (s.out_channels, s.in_channels) if s.kind == FC else (
            s.out_channels, s.in_channels, s.kernel, s.kernel)
        if w.shape != want:
            raise DimensionError(f"{s.kind} weights have shape {w.shape}, expected {want}")
        if not np.all((w == 1) | (w == -1)):
            raise ValueError("trained weights must be bipolar (+1/-1)")
        self.weights = w.astype(np.int8)
        if self.bn is not None and len(self.bn) != s.out_channels:
            raise DimensionError("one batchnorm tuple per neuron required")
        if self.bias is not None and np.shape(self.bias) != (s.out_channels,):
            raise DimensionError("one bias per neuron required")
        if self.pad_value not in (1, -1):
            raise ValueError("pad value must be +1 or -1")


def accumulator_bits(fanin: int) -> int:
    """T = 1 + ceil(log2(Y)) (two bits for a single synapse)."""
    return max(2, 1 + math.ceil(math.log2(fanin)))


def _fires(theta, a: float, flip: bool) -> bool:
    gamma, mu, inv_std, beta = theta
    a = -a if flip else a
    return gamma * (a - mu) * inv_std + beta >= 0


def real_threshold(theta) -> tuple[float, bool]:
    """Solve BatchNorm(tau) == 0; negate when the slope gamma*i is negative."""
    gamma, mu, inv_std, beta = theta
    slope = gamma * inv_std
    if slope == 0 or not math.isfinite(slope):
        raise CompileError("degenerate batchnorm (gamma * inv_std == 0)")
    tau = mu - beta / slope
    flip = slope < 0
    return (-tau if flip else tau), flip


def derive_threshold(theta, fanin: int) -> tuple[int, bool]:
    """Popcount-domain threshold ``tau_plus`` and the weight-flip flag.

    For every popcount ``c`` in ``[0, Y]`` (counted against the possibly
    flipped weights), ``c >= tau_plus`` equals ``Sign(BatchNorm(2c - Y))`` on
    the original weights, ties firing. The result lies in ``[0, Y + 1]``;
    ``Y + 1`` never fires.
    """
    tau, flip = real_threshold(theta)
    y = fanin
    if math.isinf(tau):
        tp = 0 if tau < 0 else y + 1
    else:
        tp = math.ceil((tau + y) / 2)
    tp = min(max(tp, 0), y + 1)
    # repair float rounding right at the boundary; firing is monotone in c
    while tp > 0 and _fires(theta, 2 * (tp - 1) - y, flip):
        tp -= 1
    while tp <= y and not _fires(theta, 2 * tp - y, flip):
        tp += 1
    return tp, flip


def derive_fixed_threshold(theta, lo: int, hi: int) -> tuple[int, bool]:
    """Signed integer threshold for accumulators known to lie in ``[lo, hi]``."""
    tau, flip = real_threshold(theta)
    if math.isinf(tau):
        t = lo if tau < 0 else hi + 1
    else:
        t = min(max(math.ceil(tau), lo), hi + 1)
    while t > lo and _fires(theta, t - 1, flip):
        t -= 1
    while t <= hi and not _fires(theta, t, flip):
        t += 1
    return t, flip


def interleave_channels(planes) -> InterleavedFrame:
    """``(C, H, W)`` planar bits -> pixel-major interleaved frame."""
    planes = np.asarray(planes, dtype=bool)
    if planes.ndim != 3:
        raise DimensionError("expected C planes of H x W bits")
    return InterleavedFrame.from_array(planes.transpose(1, 2, 0))


def deinterleave_channels(frame: InterleavedFrame) -> np.ndarray:
    return frame.to_array().transpose(2, 0, 1).copy()


def filter_columns_order(weights) -> np.ndarray:
    """``(N, S, J, K)`` -> ``(N, J*K*S)``: window-position-major, channel-minor."""
    w = np.asarray(weights)
    return w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)


def pack_filter_matrix(weights) -> BitMatrix:
    return BitMatrix.from_bipolar(filter_columns_order(weights))


@dataclass(frozen=True, eq=False)
class CompiledLayer:
    """An MVTU-executable layer (dense or lowered convolution).

    ``thresholds`` are unsigned popcount thresholds for binary-input layers and
    signed accumulator thresholds for fixed-point-input layers; ``None`` for a
    non-thresholded output layer.
    """

    spec: LayerSpec
    weights: BitMatrix
    thresholds: Optional[np.ndarray]
    acc_bits: int
    flips: np.ndarray
    pad_value: int = 1

    @property
    def fanin(self) -> int:
        return self.weights.cols

    @property
    def neurons(self) -> int:
        return self.weights.rows

    @property
    def binary_input(self) -> bool:
        return self.spec.binary_input

    @property
    def thresholded(self) -> bool:
        return self.thresholds is not None

    @property
    def output_bits(self) -> int:
        """Width of raw accumulator outputs when thresholding is removed."""
        return max(16, self.acc_bits + 1)

    def __eq__(self, other):
        if not isinstance(other, CompiledLayer):
            return NotImplemented
        same_thr = (self.thresholds is None and other.thresholds is None) or (
            self.thresholds is not None and other.thresholds is not None
            and np.array_equal(self.thresholds, other.thresholds))
        return (self.spec == other.spec and self.weights == other.weights and same_thr
                and self.acc_bits == other.acc_bits and np.array_equal(self.flips, other.flips)
                and self.pad_value == other.pad_value)


@dataclass(frozen=True, eq=False)
class CompiledPool:
    """Binary max-pool; channels whose producer neuron was flipped pool with AND."""

    spec: LayerSpec
    and_channels: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, CompiledPool):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.and_channels, other.and_channels)


@dataclass(eq=False)
class CompiledNetwork:
    topology: NetworkTopology
    layers: list = field(default_factory=list)
    folding: Optional[dict] = None
    options: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.layers)

    def __eq__(self, other):
        if not isinstance(other, CompiledNetwork):
            return NotImplemented
        return (self.topology == other.topology and len(self.layers) == len(other.layers)
                and all(a == b for a, b in zip(self.layers, other.layers))
                and self.folding == other.folding and self.options == other.options)


def _input_range(spec: LayerSpec) -> tuple[int, int]:
    lo, hi = FixedPointTensor.value_range(spec.input_bits, spec.input_signed)
    return lo, hi


def fixed_accumulator_bits(spec: LayerSpec) -> int:
    return spec.input_bits + math.ceil(math.log2(spec.fanin)) + 1


def compile_layer(trained: TrainedLayer, index: Optional[int] = None, prev=None):
    spec = trained.spec
    if spec.kind == MAXPOOL:
        if isinstance(prev, CompiledLayer) and prev.spec.kind == CONV:
            mask = prev.flips.copy()
        else:
            mask = np.zeros(spec.in_channels, dtype=bool)
        return CompiledPool(spec, mask)

    y = spec.fanin
    w = trained.weights if spec.kind == FC else filter_columns_order(trained.weights)
    matrix = BitMatrix.from_bipolar(w)
    n = spec.out_channels

    if not spec.thresholded:
        if trained.bn is not None or trained.bias is not None:
            raise CompileError("non-thresholded layers cannot carry batchnorm or bias", layer=index)
        if not spec.binary_input:
            raise CompileError("fixed-point input layers must be thresholded", layer=index)
        return CompiledLayer(spec, matrix, None, accumulator_bits(y),
                             np.zeros(n, dtype=bool), trained.pad_value)

    bn = trained.bn if trained.bn is not None else BatchNormParams.identity(n)
    if trained.bias is not None:
        bn = bn.with_bias(trained.bias)

    flips = np.zeros(n, dtype=bool)
    if spec.binary_input:
        thr = np.zeros(n, dtype=np.uint32)
        acc = accumulator_bits(y)
        for k in range(n):
            try:
                thr[k], flips[k] = derive_threshold(bn[k], y)
            except CompileError as e:
                raise CompileError(str(e), layer=index, neuron=k) from None
    else:
        lo_in, hi_in = _input_range(spec)
        bound = y * max(abs(lo_in), abs(hi_in))
        thr = np.zeros(n, dtype=np.int32)
        acc = fixed_accumulator_bits(spec)
        for k in range(n):
            try:
                thr[k], flips[k] = derive_fixed_threshold(bn[k], -bound, bound)
            except CompileError as e:
                raise CompileError(str(e), layer=index, neuron=k) from None
    return CompiledLayer(spec, matrix.flip_rows(flips), thr, acc, flips, trained.pad_value)


def compile_network(trained: Sequence[TrainedLayer], name: str = "custom",
                    topology: Optional[NetworkTopology] = None) -> CompiledNetwork:
    specs = tuple(t.spec for t in trained)
    if topology is None:
        topology = NetworkTopology(name, specs)
    elif topology.layers != specs:
        raise CompileError("trained layers do not match the requested topology")
    layers = []
    prev = None
    for i, t in enumerate(trained):
        prev = compile_layer(t, i, prev)
        layers.append(prev)
    return CompiledNetwork(topology, layers)


def random_trained_network(topology: NetworkTopology, seed: int = 0) -> list[TrainedLayer]:
    """Seeded random +/-1 weights with batchnorm params that put thresholds
    inside the realistic pre-activation range (both slope signs occur)."""
    rng = np.random.default_rng(seed)
    out = []
    for spec in topology.layers:
        if spec.kind == MAXPOOL:
            out.append(TrainedLayer(spec))
            continue
        n, y = spec.out_channels, spec.fanin
        shape = (n, spec.in_channels) if spec.kind == FC else (
            n, spec.in_channels, spec.kernel, spec.kernel)
        w = rng.choice(np.array([-1, 1], dtype=np.int8), size=shape)
        bn = None
        if spec.thresholded:
            lo, hi = (-1, 1) if spec.binary_input else _input_range(spec)
            scale = math.sqrt(y) * max(abs(lo), abs(hi))
            gamma = rng.uniform(0.25, 2.0, n) * rng.choice([-1.0, 1.0], n)
            inv_std = rng.uniform(0.25, 2.0, n)
            mu = rng.normal(0.0, 0.5 * scale, n)
            beta = rng.normal(0.0, 0.5, n)
            bn = BatchNormParams(gamma, mu, inv_std, beta)
        out.append(TrainedLayer(spec, w, bn))
    return out
