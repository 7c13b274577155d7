"""Model files, dataset readers and input binarization.

A model file is a short text preamble followed by a raw little-endian blob::

    BNNSTREAM-MODEL <version>
    <header byte count>
    <JSON header>
    <blob>

The JSON header carries the topology, folding config, compile options and,
for every layer, the list of blob sections (name, dtype, shape, offset,
byte count). Binary-input layers store their weight rows packed into 64-bit
words and unsigned 32-bit thresholds; the fixed-point-input layer stores
weights as signed 16-bit values and signed 32-bit thresholds. Batchnorm
parameters may be kept alongside as float64.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .bitcore import BipolarBitVector, BitMatrix, FixedPointTensor
from .compiler import BatchNormParams, CompiledLayer, CompiledNetwork, CompiledPool
from .errors import (
    DatasetFormatError,
    HeaderMismatchError,
    ModelFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .folding import FoldingConfig
from .topology import MAXPOOL, NetworkTopology

MAGIC = "BNNSTREAM-MODEL"
FORMAT_VERSION = 1

_DTYPES = {"u64": "<u8", "u32": "<u4", "i32": "<i4", "i16": "<i2", "u8": "u1", "f64": "<f8"}

PathLike = Union[str, Path]


@dataclass(eq=False)
class ModelFile:
    network: CompiledNetwork
    batchnorm: Optional[list] = None  # per layer: BatchNormParams or None

    def __eq__(self, other):
        if not isinstance(other, ModelFile):
            return NotImplemented
        if self.network != other.network:
            return False
        # an all-None list carries the same information as no list
        a, b = (bn if bn and any(x is not None for x in bn) else None
                for bn in (self.batchnorm, other.batchnorm))
        if a is None or b is None:
            return a is None and b is None
        return len(a) == len(b) and all(_bn_equal(x, y) for x, y in zip(a, b))


def _bn_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("gamma", "mu", "inv_std", "beta"))


class _BlobWriter:
    def __init__(self):
        self.parts: list[bytes] = []
        self.offset = 0

    def add(self, name: str, dtype: str, array) -> dict:
        data = np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes()
        entry = {"name": name, "dtype": dtype, "shape": list(np.shape(array)),
                 "offset": self.offset, "nbytes": len(data)}
        self.parts.append(data)
        self.offset += len(data)
        return entry


def _layer_sections(layer, bn, blob: _BlobWriter) -> dict:
    if isinstance(layer, CompiledPool):
        return {"type": "pool", "sections": [blob.add("and_channels", "u8", layer.and_channels)]}
    sections = []
    if layer.binary_input:
        sections.append(blob.add("weights", "u64", layer.weights.words))
        if layer.thresholded:
            sections.append(blob.add("thresholds", "u32", layer.thresholds))
    else:
        sections.append(blob.add("weights", "i16", layer.weights.to_bipolar()))
        if layer.thresholded:
            sections.append(blob.add("thresholds", "i32", layer.thresholds))
    sections.append(blob.add("flips", "u8", layer.flips))
    if bn is not None:
        sections.append(blob.add("batchnorm", "f64",
                                 np.stack([bn.gamma, bn.mu, bn.inv_std, bn.beta])))
    return {"type": "mvtu", "acc_bits": layer.acc_bits, "pad_value": layer.pad_value,
            "sections": sections}


def dumps_model(model: Union[ModelFile, CompiledNetwork]) -> bytes:
    if isinstance(model, CompiledNetwork):
        model = ModelFile(model)
    net = model.network
    bns = model.batchnorm or [None] * len(net.layers)
    if len(bns) != len(net.layers):
        raise ValueError("need one batchnorm entry (or None) per layer")
    blob = _BlobWriter()
    records = [_layer_sections(l, bn, blob) for l, bn in zip(net.layers, bns)]
    header = {
        "version": FORMAT_VERSION,
        "topology": net.topology.to_dict(),
        "folding": net.folding,
        "options": net.options,
        "layers": records,
        "blob_bytes": blob.offset,
    }
    text = json.dumps(header, indent=1, sort_keys=True).encode()
    pre = f"{MAGIC} {FORMAT_VERSION}\n{len(text)}\n".encode()
    return pre + text + b"\n" + b"".join(blob.parts)


def save_model(model: Union[ModelFile, CompiledNetwork], path: PathLike) -> None:
    Path(path).write_bytes(dumps_model(model))


def _read_line(data: bytes, pos: int) -> tuple[str, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        raise TruncatedFileError("file ends inside the preamble")
    return data[pos:end].decode("ascii", errors="replace"), end + 1


def _section(blob: bytes, entry: dict, layer: int) -> np.ndarray:
    try:
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        shape = tuple(int(s) for s in entry["shape"])
        off, nbytes = int(entry["offset"]), int(entry["nbytes"])
    except (KeyError, TypeError, ValueError):
        raise HeaderMismatchError(f"layer {layer}: malformed section record") from None
    if int(np.prod(shape)) * dtype.itemsize != nbytes:
        raise HeaderMismatchError(
            f"layer {layer}: section {entry['name']} shape {shape} needs "
            f"{int(np.prod(shape)) * dtype.itemsize} bytes, header says {nbytes}")
    if off < 0 or off + nbytes > len(blob):
        raise HeaderMismatchError(f"layer {layer}: section {entry['name']} lies outside the blob")
    return np.frombuffer(blob, dtype=dtype, count=int(np.prod(shape)), offset=off).reshape(shape)


def _expect(arr: np.ndarray, shape: tuple, what: str, layer: int) -> np.ndarray:
    if arr.shape != shape:
        raise HeaderMismatchError(f"layer {layer}: {what} has shape {arr.shape}, expected {shape}")
    return arr


def _decode_layer(spec, rec: dict, blob: bytes, index: int):
    secs = {e.get("name"): _section(blob, e, index) for e in rec.get("sections", [])}
    if spec.kind == MAXPOOL:
        if rec.get("type") != "pool" or "and_channels" not in secs:
            raise HeaderMismatchError(f"layer {index}: pool record expected")
        mask = _expect(secs["and_channels"], (spec.in_channels,), "and_channels", index)
        return CompiledPool(spec, mask.astype(bool)), None
    if rec.get("type") != "mvtu" or "weights" not in secs or "flips" not in secs:
        raise HeaderMismatchError(f"layer {index}: MVTU record is missing sections")
    rows, cols = spec.neurons, spec.fanin
    if spec.binary_input:
        words = _expect(secs["weights"], (rows, (cols + 63) // 64), "weights", index)
        weights = BitMatrix(rows, cols, words.astype(np.uint64))
        thr_type = np.uint32
    else:
        w = _expect(secs["weights"], (rows, cols), "weights", index)
        if not np.all((w == 1) | (w == -1)):
            raise ModelFormatError(f"layer {index}: stored weights are not +/-1")
        weights = BitMatrix.from_bipolar(w)
        thr_type = np.int32
    thresholds = None
    if spec.thresholded:
        if "thresholds" not in secs:
            raise HeaderMismatchError(f"layer {index}: thresholds missing")
        thresholds = _expect(secs["thresholds"], (rows,), "thresholds", index).astype(thr_type)
    elif "thresholds" in secs:
        raise HeaderMismatchError(f"layer {index}: thresholds stored for a non-thresholded layer")
    flips = _expect(secs["flips"], (rows,), "flips", index).astype(bool)
    bn = None
    if "batchnorm" in secs:
        g, mu, inv, beta = _expect(secs["batchnorm"], (4, rows), "batchnorm", index).copy()
        bn = BatchNormParams(g, mu, inv, beta)
    layer = CompiledLayer(spec, weights, thresholds, int(rec["acc_bits"]), flips,
                          int(rec.get("pad_value", 1)))
    return layer, bn


def loads_model(data: bytes) -> ModelFile:
    first, pos = _read_line(data, 0)
    magic, _, ver = first.partition(" ")
    if magic != MAGIC:
        raise ModelFormatError("not a bnnstream model file")
    try:
        version = int(ver)
    except ValueError:
        raise ModelFormatError(f"unreadable format version {ver!r}") from None
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"file format version {version}, this reader supports {FORMAT_VERSION}")
    size_line, pos = _read_line(data, pos)
    try:
        hlen = int(size_line)
    except ValueError:
        raise HeaderMismatchError(f"header length field {size_line!r} is not a number") from None
    if hlen < 0:
        raise HeaderMismatchError("negative header length")
    if pos + hlen + 1 > len(data):
        raise TruncatedFileError("file ends inside the header")
    if data[pos + hlen:pos + hlen + 1] != b"\n":
        raise HeaderMismatchError("header length field does not match the header")
    try:
        header = json.loads(data[pos:pos + hlen])
    except ValueError:
        raise HeaderMismatchError("header length field does not match the header") from None
    blob = data[pos + hlen + 1:]
    if header.get("version") != FORMAT_VERSION:
        raise VersionMismatchError(f"header declares version {header.get('version')}")
    expected = header.get("blob_bytes")
    if not isinstance(expected, int):
        raise HeaderMismatchError("header lacks a blob size")
    if len(blob) < expected:
        raise TruncatedFileError(f"blob has {len(blob)} bytes, header declares {expected}")
    if len(blob) > expected:
        raise HeaderMismatchError(f"blob has {len(blob)} bytes, header declares {expected}")

    try:
        topology = NetworkTopology.from_dict(header["topology"])
    except (KeyError, TypeError, ValueError) as e:
        raise HeaderMismatchError(f"bad topology record: {e}") from None
    records = header.get("layers", [])
    if len(records) != len(topology.layers):
        raise HeaderMismatchError(f"{len(records)} layer records for {len(topology.layers)} layers")
    layers, bns = [], []
    for i, (spec, rec) in enumerate(zip(topology.layers, records)):
        layer, bn = _decode_layer(spec, rec, blob, i)
        layers.append(layer)
        bns.append(bn)
    net = CompiledNetwork(topology, layers, header.get("folding"), header.get("options") or {})
    return ModelFile(net, bns if any(b is not None for b in bns) else None)


def load_model(path: PathLike) -> ModelFile:
    return loads_model(Path(path).read_bytes())


def save_folding(config: FoldingConfig, path: PathLike) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")


def load_folding(path: PathLike) -> FoldingConfig:
    return FoldingConfig.from_dict(json.loads(Path(path).read_text()))


def binarize_input(image, t: int = 128) -> BipolarBitVector:
    """Pixels >= ``t`` become +1, the rest -1; the image is flattened row-major
    (channel-minor for colour images, i.e. interleaved order)."""
    return BipolarBitVector.from_bits(np.asarray(image).reshape(-1) >= t)


def image_to_fixed(image, bits: int = 8) -> FixedPointTensor:
    """An (H, W) or (H, W, C) byte image as an unsigned fixed-point tensor."""
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[:, :, None]
    return FixedPointTensor(img.astype(np.int64), bits, signed=False)


def _open(path: PathLike) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def read_idx(path: PathLike) -> np.ndarray:
    """Read an unsigned-byte IDX file of any rank."""
    data = _open(path)
    if len(data) < 4:
        raise DatasetFormatError(f"{path}: too short for an IDX header")
    zero, dtype, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or dtype != 0x08:
        raise DatasetFormatError(f"{path}: bad IDX magic 0x{int.from_bytes(data[:4], 'big'):08x}")
    if len(data) < 4 + 4 * ndim:
        raise DatasetFormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:4 + 4 * ndim])
    count = int(np.prod(dims)) if dims else 1
    body = data[4 + 4 * ndim:]
    if len(body) < count:
        raise DatasetFormatError(f"{path}: {len(body)} data bytes, header promises {count}")
    return np.frombuffer(body, dtype=np.uint8, count=count).reshape(dims)


def write_idx(path: PathLike, array) -> None:
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    head = struct.pack(">HBB", 0, 0x08, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(head + arr.tobytes())


def load_idx(images_path: PathLike, labels_path: PathLike) -> tuple[np.ndarray, np.ndarray]:
    """MNIST-layout image (magic 0x803) and label (magic 0x801) files."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise DatasetFormatError(f"{images_path}: expected a rank-3 image file (magic 0x803)")
    if labels.ndim != 1:
        raise DatasetFormatError(f"{labels_path}: expected a rank-1 label file (magic 0x801)")
    if len(images) != len(labels):
        raise DatasetFormatError(f"{len(images)} images but {len(labels)} labels")
    return images, labels


def _pnm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping comments."""
    out, pos = [], 2
    while len(out) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.find(b"\n", pos)
            if pos < 0:
                break
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise DatasetFormatError("malformed PNM header")
        out.append(int(data[start:pos]))
    if len(out) < count:
        raise DatasetFormatError("truncated PNM header")
    return out, pos + 1  # single whitespace byte before the raster


def read_pnm(path: PathLike) -> np.ndarray:
    """Binary PGM (P5) -> (H, W) or PPM (P6) -> (H, W, 3); 8- or 16-bit samples."""
    data = Path(path).read_bytes()
    kind = data[:2]
    if kind not in (b"P5", b"P6"):
        raise DatasetFormatError(f"{path}: only binary PGM/PPM (P5/P6) is supported")
    (width, height, maxval), pos = _pnm_tokens(data, 3)
    if not 0 < maxval < 65536:
        raise DatasetFormatError(f"{path}: bad maxval {maxval}")
    channels = 3 if kind == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = width * height * channels
    if len(data) - pos < count * dtype.itemsize:
        raise DatasetFormatError(f"{path}: truncated raster")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    arr = arr.reshape((height, width, channels) if channels == 3 else (height, width))
    return arr.astype(np.uint16 if maxval > 255 else np.uint8)


def write_pnm(path: PathLike, image) -> None:
    img = np.asarray(image, dtype=np.uint8)
    kind = "P6" if img.ndim == 3 else "P5"
    if img.ndim == 3 and img.shape[2] != 3:
        raise ValueError("colour images must have 3 channels")
    Path(path).write_bytes(f"{kind}\n{img.shape[1]} {img.shape[0]}\n255\n".encode() + img.tobytes())


def load_images(paths: Sequence[PathLike]) -> np.ndarray:
    imgs = [read_pnm(p) for p in paths]
    if len({i.shape for i in imgs}) > 1:
        raise DatasetFormatError("images differ in size")
    return np.stack(imgs) if imgs else np.zeros((0,), dtype=np.uint8)


def save_trained(layers: Sequence, path: PathLike) -> None:
    """Trained +/-1 weights, batchnorm and biases as an ``.npz`` archive."""
    arrays = {}
    for i, t in enumerate(layers):
        if t.weights is None:
            continue
        arrays[f"w{i}"] = np.asarray(t.weights, dtype=np.int8)
        if t.bn is not None:
            arrays[f"bn{i}"] = np.stack([t.bn.gamma, t.bn.mu, t.bn.inv_std, t.bn.beta])
        if t.bias is not None:
            arrays[f"b{i}"] = np.asarray(t.bias, dtype=np.float64)
        arrays[f"pad{i}"] = np.array(t.pad_value)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_trained(path: PathLike, topology: NetworkTopology) -> list:
    from .compiler import TrainedLayer

    try:
        data = np.load(path)
    except ValueError as e:
        raise ModelFormatError(f"{path}: not a parameter archive ({e})") from None
    out = []
    with data:
        for i, spec in enumerate(topology.layers):
            if spec.kind == MAXPOOL:
                out.append(TrainedLayer(spec))
                continue
            if f"w{i}" not in data:
                raise HeaderMismatchError(f"{path}: no weights for layer {i}")
            bn = None
            if f"bn{i}" in data:
                bn = BatchNormParams(*data[f"bn{i}"])
            bias = data[f"b{i}"] if f"b{i}" in data else None
            pad = int(data[f"pad{i}"]) if f"pad{i}" in data else 1
            out.append(TrainedLayer(spec, data[f"w{i}"], bn, bias, pad))
    return out
