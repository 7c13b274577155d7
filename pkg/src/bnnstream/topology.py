"""Layer graph descriptions and the built-in SFC / LFC / CNV networks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import DimensionError

FC = "fc"
CONV = "conv"
MAXPOOL = "maxpool"
KINDS = (FC, CONV, MAXPOOL)


@dataclass(frozen=True)
class LayerSpec:
    """Dimensions of one layer.

    For ``fc`` layers ``in_channels`` is the fan-in and ``out_channels`` the
    neuron count; height/width are 1. For ``conv`` the input is
    ``in_height x in_width x in_channels`` and the window ``kernel x kernel``.
    ``input_bits`` > 1 marks a layer fed with non-binary (fixed-point) inputs;
    ``thresholded=False`` marks a layer producing raw accumulators.
    """

    kind: str
    in_channels: int
    out_channels: int
    in_height: int = 1
    in_width: int = 1
    kernel: int = 1
    pad: int = 0
    input_bits: int = 1
    input_signed: bool = False
    thresholded: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DimensionError(f"unknown layer kind {self.kind!r}")
        if min(self.in_channels, self.out_channels, self.in_height, self.in_width, self.kernel) < 1:
            raise DimensionError(f"non-positive dimension in {self}")
        if self.kind == MAXPOOL:
            if self.in_channels != self.out_channels:
                raise DimensionError("pooling keeps the channel count")
            if self.in_height % self.kernel or self.in_width % self.kernel:
                raise DimensionError(
                    f"{self.in_height}x{self.in_width} image not divisible by pool window {self.kernel}"
                )
        if self.kind == CONV and (
            self.kernel > self.in_height + 2 * self.pad or self.kernel > self.in_width + 2 * self.pad
        ):
            raise DimensionError("convolution window larger than the padded image")

    @property
    def binary_input(self) -> bool:
        return self.input_bits == 1

    @property
    def out_height(self) -> int:
        if self.kind == FC:
            return 1
        if self.kind == MAXPOOL:
            return self.in_height // self.kernel
        return self.in_height + 2 * self.pad - self.kernel + 1

    @property
    def out_width(self) -> int:
        if self.kind == FC:
            return 1
        if self.kind == MAXPOOL:
            return self.in_width // self.kernel
        return self.in_width + 2 * self.pad - self.kernel + 1

    @property
    def fanin(self) -> int:
        """Synapses per neuron (Y), i.e. the weight matrix width."""
        if self.kind == CONV:
            return self.in_channels * self.kernel * self.kernel
        if self.kind == FC:
            return self.in_channels
        return 0

    @property
    def neurons(self) -> int:
        """Weight matrix height (X); zero for pooling."""
        return 0 if self.kind == MAXPOOL else self.out_channels

    @property
    def matrix_fold(self) -> int:
        """Output pixels per frame; the inherent fold of a lowered convolution."""
        return self.out_height * self.out_width if self.kind == CONV else 1

    @property
    def input_size(self) -> int:
        return self.in_height * self.in_width * self.in_channels

    @property
    def output_size(self) -> int:
        return self.out_height * self.out_width * self.out_channels

    @property
    def is_mvtu(self) -> bool:
        return self.kind in (FC, CONV)

    def to_dict(self) -> dict:
        return asdict(self)


def fc(fanin, neurons, **kw) -> LayerSpec:
    return LayerSpec(FC, fanin, neurons, **kw)


def conv(in_channels, out_channels, size, kernel=3, pad=0, **kw) -> LayerSpec:
    h, w = (size, size) if isinstance(size, int) else size
    return LayerSpec(CONV, in_channels, out_channels, h, w, kernel, pad, **kw)


def maxpool(channels, size, k=2) -> LayerSpec:
    h, w = (size, size) if isinstance(size, int) else size
    return LayerSpec(MAXPOOL, channels, channels, h, w, k)


@dataclass(frozen=True)
class NetworkTopology:
    name: str
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if nxt.kind == FC:
                if prev.output_size != nxt.in_channels:
                    raise DimensionError(
                        f"layer {i + 1}: fc fan-in {nxt.in_channels} != previous output {prev.output_size}"
                    )
            elif (prev.out_height, prev.out_width, prev.out_channels) != (
                nxt.in_height,
                nxt.in_width,
                nxt.in_channels,
            ):
                raise DimensionError(f"layer {i + 1}: input shape does not match layer {i} output")
            if not prev.thresholded:
                raise DimensionError(f"layer {i}: only the last layer may skip thresholding")
            if not nxt.binary_input:
                raise DimensionError(f"layer {i + 1}: only the first layer may take non-binary input")

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    @property
    def mvtu_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if l.is_mvtu]

    @property
    def input_shape(self) -> tuple[int, int, int]:
        first = self.layers[0]
        return (first.in_height, first.in_width, first.in_channels)

    def to_dict(self) -> dict:
        return {"name": self.name, "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkTopology":
        return cls(d["name"], tuple(LayerSpec(**l) for l in d["layers"]))


def fc_network(n_in: int, hidden: list[int], n_out: int, name: Optional[str] = None,
               raw_output: bool = True) -> NetworkTopology:
    """Dense stack; with ``raw_output`` the last layer returns accumulators (class scores)."""
    widths = [n_in, *hidden, n_out]
    layers = [fc(a, b) for a, b in zip(widths, widths[1:])]
    if raw_output:
        layers[-1] = fc(widths[-2], n_out, thresholded=False)
    return NetworkTopology(name or f"fc{'x'.join(map(str, hidden))}", tuple(layers))


def sfc() -> NetworkTopology:
    return fc_network(784, [256, 256, 256], 10, "sfc")


def lfc() -> NetworkTopology:
    return fc_network(784, [1024, 1024, 1024], 10, "lfc")


def cnv() -> NetworkTopology:
    """Three (conv3x3, conv3x3, maxpool2x2) blocks, then FC 512, 512, 10.

    All convolutions are unpadded. The first layer takes 8-bit RGB pixels and
    the last layer returns raw accumulators.
    """
    layers = [
        conv(3, 64, 32, input_bits=8),
        conv(64, 64, 30),
        maxpool(64, 28),
        conv(64, 128, 14),
        conv(128, 128, 12),
        maxpool(128, 10),
        conv(128, 256, 5),
        conv(256, 256, 3),
        fc(256, 512),
        fc(512, 512),
        fc(512, 10, thresholded=False),
    ]
    return NetworkTopology("cnv", tuple(layers))


BUILTIN = {"sfc": sfc, "lfc": lfc, "cnv": cnv}


def builtin(name: str) -> NetworkTopology:
    try:
        return BUILTIN[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown topology {name!r}; choose from {sorted(BUILTIN)}") from None
