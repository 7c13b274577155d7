"""Folded execution of the matrix-vector-threshold, sliding-window and pooling units.

All kernels return ``(result, cycles)`` where cycles counts MVTU tile steps:
``F^n * F^s`` for a matrix-vector product, times ``F^m`` output pixels for a
convolution. Pooling and window generation report no MVTU cycles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .bitcore import (
    BipolarBitVector,
    FixedPointTensor,
    InterleavedFrame,
    masked_xnor,
    pack_bits,
    unpack_bits,
)
from .compiler import CompiledLayer, CompiledNetwork, CompiledPool
from .errors import AccumulatorOverflowError, DimensionError
from .folding import check_fold
from .topology import CONV

PAD_MODES = {"none": None, "+1": 1, "-1": -1}


@dataclass(frozen=True)
class MVTUConfig:
    pe: int
    simd: int
    acc_bits: Optional[int] = None  # defaults to the layer's T

    @classmethod
    def fully_parallel(cls, layer: CompiledLayer) -> "MVTUConfig":
        return cls(layer.neurons, layer.fanin)


@dataclass(frozen=True)
class PoolSpec:
    k: int
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if self.k < 1 or self.height % self.k or self.width % self.k:
            raise DimensionError(
                f"{self.height}x{self.width} image not divisible into {self.k}x{self.k} windows"
            )


def _folded_accumulate(partials: np.ndarray, pe: int, acc_bits: int, signed: bool):
    """Walk the P x S tiles in hardware order and accumulate per PE.

    ``partials`` is ``(batch, X, F^s)``: the SIMD-lane reduction of each tile
    column. Returns the per-neuron totals and the number of tile steps.
    """
    batch, rows, fs = partials.shape
    fn = rows // pe
    acc = np.zeros((batch, rows), dtype=np.int64)
    cycles = 0
    for nf in range(fn):
        tile_rows = slice(nf * pe, (nf + 1) * pe)
        for sf in range(fs):
            acc[:, tile_rows] += partials[:, tile_rows, sf]
            cycles += 1
    running = np.cumsum(partials, axis=2) if fs > 1 else partials
    if signed:
        lo, hi = -(1 << (acc_bits - 1)), (1 << (acc_bits - 1)) - 1
    else:
        lo, hi = 0, (1 << acc_bits) - 1
    if running.size and (running.min() < lo or running.max() > hi):
        raise AccumulatorOverflowError(
            f"accumulator left the {acc_bits}-bit range [{lo}, {hi}]"
        )
    return acc, cycles


def _binary_partials(layer: CompiledLayer, in_words: np.ndarray, simd: int) -> np.ndarray:
    """Popcounts of XNOR(weights, input) per (column, neuron, synapse-fold)."""
    y = layer.fanin
    xn = masked_xnor(layer.weights.words[None, :, :], in_words[:, None, :], y)
    fs = y // simd
    if fs == 1:
        return np.bitwise_count(xn).sum(axis=-1, dtype=np.int64)[..., None]
    if simd % 64 == 0:
        per = simd // 64
        return np.bitwise_count(xn).reshape(*xn.shape[:2], fs, per).sum(axis=-1, dtype=np.int64)
    bits = unpack_bits(xn, y)
    return bits.reshape(*bits.shape[:2], fs, simd).sum(axis=-1, dtype=np.int64)


def _check_cfg(layer: CompiledLayer, cfg: Optional[MVTUConfig]) -> MVTUConfig:
    cfg = cfg or MVTUConfig.fully_parallel(layer)
    check_fold(layer.neurons, layer.fanin, cfg.pe, cfg.simd)
    return cfg


def _binary_mvtu(layer: CompiledLayer, in_words: np.ndarray, cfg: MVTUConfig):
    partials = _binary_partials(layer, in_words, cfg.simd)
    return _folded_accumulate(partials, cfg.pe, cfg.acc_bits or layer.acc_bits, signed=False)


def _threshold(layer: CompiledLayer, acc: np.ndarray) -> np.ndarray:
    return acc >= layer.thresholds.astype(np.int64)[None, :]


def _require_vector(layer: CompiledLayer, v: BipolarBitVector):
    if not isinstance(v, BipolarBitVector):
        raise TypeError("binary MVTU input must be a BipolarBitVector")
    if v.length != layer.fanin:
        raise DimensionError(f"input length {v.length} != layer fan-in {layer.fanin}")


def mvtu_execute(layer: CompiledLayer, vector: BipolarBitVector,
                 cfg: Optional[MVTUConfig] = None) -> tuple[BipolarBitVector, int]:
    """Thresholded XNOR-popcount matrix-vector product.

    Output bit n is ``popcount(XNOR(row n, input)) >= tau_plus[n]``.
    """
    if not layer.binary_input or not layer.thresholded:
        raise DimensionError("mvtu_execute needs a binary-input, thresholded layer")
    _require_vector(layer, vector)
    cfg = _check_cfg(layer, cfg)
    acc, cycles = _binary_mvtu(layer, vector.bits[None, :], cfg)
    return BipolarBitVector.from_bits(_threshold(layer, acc)[0]), cycles


def mvtu_execute_nonthresholded(layer: CompiledLayer, vector: BipolarBitVector,
                                cfg: Optional[MVTUConfig] = None) -> tuple[FixedPointTensor, int]:
    """Raw signed dot products ``2 * popcount - Y`` (no activation)."""
    if not layer.binary_input:
        raise DimensionError("mvtu_execute_nonthresholded needs a binary-input layer")
    _require_vector(layer, vector)
    cfg = _check_cfg(layer, cfg)
    acc, cycles = _binary_mvtu(layer, vector.bits[None, :], cfg)
    return FixedPointTensor(2 * acc[0] - layer.fanin, layer.output_bits), cycles


def _fixed_partials(layer: CompiledLayer, values: np.ndarray, simd: int) -> np.ndarray:
    w = layer.weights.to_bipolar().astype(np.int64)
    y = layer.fanin
    prods = w[None, :, :] * values[:, None, :]
    return prods.reshape(values.shape[0], w.shape[0], y // simd, simd).sum(axis=-1)


def _check_fixed_input(layer: CompiledLayer, t: FixedPointTensor):
    if not isinstance(t, FixedPointTensor):
        raise TypeError("fixed-point MVTU input must be a FixedPointTensor")
    lo, hi = FixedPointTensor.value_range(layer.spec.input_bits, layer.spec.input_signed)
    if t.values.size and (t.values.min() < lo or t.values.max() > hi):
        raise AccumulatorOverflowError(
            f"input values exceed the layer's declared {layer.spec.input_bits}-bit input range"
        )


def mvtu_execute_fixedpoint_input(layer: CompiledLayer, tensor: FixedPointTensor,
                                  cfg: Optional[MVTUConfig] = None) -> tuple[BipolarBitVector, int]:
    """Multiply-add with +/-1 weights on integer inputs, then signed threshold."""
    if layer.binary_input or not layer.thresholded:
        raise DimensionError("layer is not a thresholded fixed-point-input layer")
    _check_fixed_input(layer, tensor)
    values = tensor.values.reshape(-1)
    if values.size != layer.fanin:
        raise DimensionError(f"input length {values.size} != layer fan-in {layer.fanin}")
    cfg = _check_cfg(layer, cfg)
    partials = _fixed_partials(layer, values[None, :], cfg.simd)
    acc, cycles = _folded_accumulate(partials, cfg.pe, cfg.acc_bits or layer.acc_bits, signed=True)
    return BipolarBitVector.from_bits(_threshold(layer, acc)[0]), cycles


def _pad_value(pad) -> Optional[int]:
    if pad in (None, 0):
        return None
    if isinstance(pad, str):
        try:
            return PAD_MODES[pad]
        except KeyError:
            raise ValueError(f"pad mode must be one of {sorted(PAD_MODES)}") from None
    if pad in (1, -1):
        return int(pad)
    raise ValueError(f"bad pad mode {pad!r}")


def lower(image: np.ndarray, window: int, pad_width: int = 0, pad_value=1) -> np.ndarray:
    """``(H, W, C)`` array -> ``(out_pixels, J*K*C)`` image-matrix columns.

    Columns come out in row-major output-pixel order; each column is
    window-position-major with channels innermost.
    """
    if pad_width:
        fill = pad_value if image.dtype != bool else pad_value == 1
        image = np.pad(image, ((pad_width, pad_width), (pad_width, pad_width), (0, 0)),
                       constant_values=fill)
    h, w, c = image.shape
    if window > h or window > w:
        raise DimensionError(f"{window}x{window} window larger than {h}x{w} (padded) image")
    win = sliding_window_view(image, (window, window), axis=(0, 1))  # (R, C', ch, J, K)
    rows, cols = win.shape[:2]
    return win.transpose(0, 1, 3, 4, 2).reshape(rows * cols, window * window * c)


def sliding_window(frame: InterleavedFrame, window: int, pad="none",
                   pad_width: Optional[int] = None) -> list[BipolarBitVector]:
    """Image-matrix columns for a stride-1 ``window x window`` convolution.

    ``pad`` is ``"none"``, ``"+1"`` or ``"-1"``; padded runs default to a
    border of ``(window - 1) // 2`` pixels.
    """
    value = _pad_value(pad)
    width = 0 if value is None else ((window - 1) // 2 if pad_width is None else pad_width)
    cols = lower(frame.to_array(), window, width, value if value is not None else 1)
    words = pack_bits(cols)
    return [BipolarBitVector(cols.shape[1], w) for w in words]


def conv_layer_execute(layer: CompiledLayer, frame, cfg: Optional[MVTUConfig] = None):
    """Lowered convolution: SWU columns fed one by one through the MVTU.

    ``frame`` is an :class:`InterleavedFrame` for binary layers, or a
    ``(H, W, C)`` :class:`FixedPointTensor` for a fixed-point-input layer.
    Returns the interleaved output frame (or accumulators if the layer is not
    thresholded) and ``F^m * F^n * F^s`` cycles.
    """
    spec = layer.spec
    if spec.kind != CONV:
        raise DimensionError("conv_layer_execute needs a convolution layer")
    cfg = _check_cfg(layer, cfg)
    k, pad = spec.kernel, spec.pad
    if layer.binary_input:
        if not isinstance(frame, InterleavedFrame):
            raise TypeError("binary convolution input must be an InterleavedFrame")
        if frame.shape != (spec.in_height, spec.in_width, spec.in_channels):
            raise DimensionError(f"frame {frame.shape} does not match layer input")
        cols = lower(frame.to_array(), k, pad, layer.pad_value)
        acc, fold = _binary_mvtu(layer, pack_bits(cols), cfg)
    else:
        if not isinstance(frame, FixedPointTensor):
            raise TypeError("fixed-point convolution input must be a FixedPointTensor")
        if frame.shape != (spec.in_height, spec.in_width, spec.in_channels):
            raise DimensionError(f"tensor {frame.shape} does not match layer input")
        _check_fixed_input(layer, frame)
        cols = lower(frame.values, k, pad, layer.pad_value)
        partials = _fixed_partials(layer, cols, cfg.simd)
        acc, fold = _folded_accumulate(partials, cfg.pe, cfg.acc_bits or layer.acc_bits, signed=True)
    cycles = fold * cols.shape[0]
    shape = (spec.out_height, spec.out_width, spec.out_channels)
    if not layer.thresholded:
        return FixedPointTensor((2 * acc - layer.fanin).reshape(shape), layer.output_bits), cycles
    return InterleavedFrame.from_array(_threshold(layer, acc).reshape(shape)), cycles


def _stream_pool(frame: InterleavedFrame, k: int, reduce_window) -> InterleavedFrame:
    """Row-streamed pooling through C * k line buffers of D_W bits.

    Once k rows are buffered, each channel is reduced over k consecutive bits
    of every line, then across the k lines, and one output row is emitted.
    """
    spec = PoolSpec(k, frame.height, frame.width, frame.channels)
    image = frame.to_array()
    lines = np.zeros((k, spec.width, spec.channels), dtype=bool)
    out_rows = []
    for r in range(spec.height):
        lines[r % k] = image[r]
        if r % k == k - 1:
            tiles = lines.reshape(k, spec.width // k, k, spec.channels)
            out_rows.append(reduce_window(tiles))
    return InterleavedFrame.from_array(np.stack(out_rows))


def _or_window(tiles):
    return tiles.any(axis=2).any(axis=0)


def _and_window(tiles):
    return tiles.all(axis=2).all(axis=0)


def _majority_window(tiles):
    k = tiles.shape[0]
    ones = tiles.sum(axis=(0, 2))
    return 2 * ones >= k * k  # ties resolve to 1


def or_pool(frame: InterleavedFrame, k: int = 2) -> InterleavedFrame:
    return _stream_pool(frame, k, _or_window)


def and_pool(frame: InterleavedFrame, k: int = 2) -> InterleavedFrame:
    return _stream_pool(frame, k, _and_window)


def majority_pool(frame: InterleavedFrame, k: int = 2) -> InterleavedFrame:
    return _stream_pool(frame, k, _majority_window)


def pool_execute(pool: CompiledPool, frame: InterleavedFrame) -> InterleavedFrame:
    """Binary max-pool: OR per channel, AND where the producing neuron was flipped."""
    spec = pool.spec
    if frame.shape != (spec.in_height, spec.in_width, spec.in_channels):
        raise DimensionError(f"frame {frame.shape} does not match pooling input")
    if not pool.and_channels.any():
        return or_pool(frame, spec.kernel)
    ored = or_pool(frame, spec.kernel).to_array()
    anded = and_pool(frame, spec.kernel).to_array()
    return InterleavedFrame.from_array(np.where(pool.and_channels[None, None, :], anded, ored))


@dataclass
class NetworkRun:
    outputs: list
    cycles: list[int]

    @property
    def result(self):
        return self.outputs[-1]


def _as_vector(x) -> BipolarBitVector:
    if isinstance(x, BipolarBitVector):
        return x
    if isinstance(x, InterleavedFrame):
        return x.data
    raise TypeError(f"cannot feed {type(x).__name__} to a dense binary layer")


def run_network(net: CompiledNetwork, x, configs: Optional[Sequence[Optional[MVTUConfig]]] = None) -> NetworkRun:
    """Execute every layer in order; ``configs`` has one entry per MVTU layer.

    ``x`` is a :class:`BipolarBitVector` for dense networks, an
    :class:`InterleavedFrame` for binary images, or a :class:`FixedPointTensor`
    (flat or ``(H, W, C)``) when the first layer takes fixed-point input.
    """
    mvtu_count = sum(isinstance(l, CompiledLayer) for l in net.layers)
    if configs is None:
        configs = [None] * mvtu_count
    elif len(configs) != mvtu_count:
        raise DimensionError(f"{len(configs)} MVTU configs for {mvtu_count} MVTU layers")
    cfg_iter = iter(configs)
    outputs, cycles = [], []
    cur = x
    for layer in net.layers:
        if isinstance(layer, CompiledPool):
            cur = pool_execute(layer, cur)
            outputs.append(cur)
            cycles.append(0)
            continue
        cfg = next(cfg_iter)
        spec = layer.spec
        if spec.kind == CONV:
            cur, c = conv_layer_execute(layer, cur, cfg)
        elif not layer.binary_input:
            cur, c = mvtu_execute_fixedpoint_input(layer, cur, cfg)
        elif layer.thresholded:
            cur, c = mvtu_execute(layer, _as_vector(cur), cfg)
        else:
            cur, c = mvtu_execute_nonthresholded(layer, _as_vector(cur), cfg)
        outputs.append(cur)
        cycles.append(c)
    return NetworkRun(outputs, cycles)
