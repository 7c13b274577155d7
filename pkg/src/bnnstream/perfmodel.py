"""Roofline, op/parameter counting and resource estimates for streaming BNN accelerators."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .folding import FoldingConfig, LayerFold
from .topology import CONV, FC, NetworkTopology

# LUTs and DSPs consumed by one operation at each precision (bits)
DEFAULT_OP_COST = {
    1: (2.5, 0.0),
    8: (40.0, 0.0),
    16: (8.0, 0.5),
}


@dataclass(frozen=True)
class OpCost:
    luts: float
    dsps: float = 0.0

    def __post_init__(self):
        if self.luts < 0 or self.dsps < 0:
            raise ValueError("operation costs must be nonnegative")


@dataclass(frozen=True)
class DeviceModel:
    name: str
    luts: int
    brams: int  # 36 kb blocks
    dsps: int
    bandwidth: float  # off-chip bytes/s
    f_clk: float  # Hz
    utilization: float = 0.9
    op_costs: dict = field(default_factory=lambda: {p: OpCost(*c) for p, c in DEFAULT_OP_COST.items()})

    def __post_init__(self):
        if min(self.luts, self.bandwidth, self.f_clk) <= 0 or self.brams < 0 or self.dsps < 0:
            raise ValueError(f"device {self.name}: resources must be positive")
        if not 0 < self.utilization <= 1:
            raise ValueError("utilization must be in (0, 1]")

    def with_utilization(self, utilization: float) -> "DeviceModel":
        return replace(self, utilization=utilization)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["op_costs"] = {str(p): [c.luts, c.dsps] for p, c in self.op_costs.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceModel":
        d = dict(d)
        if "op_costs" in d:
            d["op_costs"] = {int(p): OpCost(*c) for p, c in d["op_costs"].items()}
        return cls(**d)


ZU19EG = DeviceModel("zu19eg", luts=522720, brams=984, dsps=1968, bandwidth=4.8e9, f_clk=350e6)
ZC706 = DeviceModel("zc706", luts=218600, brams=545, dsps=900, bandwidth=1.6e9, f_clk=200e6)

DEVICES = {"zu19eg": ZU19EG, "zc706": ZC706, "z7045": ZC706}


def load_device(name_or_path: str) -> DeviceModel:
    """Look up a built-in device, or read one from a JSON / key=value text file.

    The text format is one ``key = value`` per line (``#`` comments allowed)
    with keys matching :class:`DeviceModel` fields; op costs are given as
    ``op_cost.<bits> = <luts>,<dsps>``.
    """
    key = name_or_path.lower()
    if key in DEVICES:
        return DEVICES[key]
    path = Path(name_or_path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        return DeviceModel.from_dict(json.loads(text))
    fields: dict = {}
    costs: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        k, _, v = (s.strip() for s in line.partition("="))
        if k.startswith("op_cost."):
            luts, _, dsps = v.partition(",")
            costs[int(k.split(".", 1)[1])] = OpCost(float(luts), float(dsps or 0))
        elif k == "name":
            fields[k] = v
        elif k in ("luts", "brams", "dsps"):
            fields[k] = int(float(v))
        else:
            fields[k] = float(v)
    if costs:
        fields["op_costs"] = costs
    return DeviceModel(**fields)


def peak_compute(device: DeviceModel, precision: int) -> float:
    """Peak ops/s: the binding one of the LUT and DSP limits, times the clock."""
    try:
        cost = device.op_costs[precision]
    except KeyError:
        raise KeyError(f"no op cost for {precision}-bit precision on {device.name}") from None
    limits = []
    if cost.luts > 0:
        limits.append(device.luts * device.utilization / cost.luts)
    if cost.dsps > 0:
        limits.append(device.dsps * device.utilization / cost.dsps)
    if not limits:
        raise ValueError("an op that costs nothing has no finite peak")
    return min(limits) * device.f_clk


def ridge_point(device: DeviceModel, precision: int) -> float:
    return peak_compute(device, precision) / device.bandwidth


def roofline_point(device: DeviceModel, precision: int, intensity: float) -> float:
    """Attainable ops/s = min(compute peak, intensity * bandwidth)."""
    if intensity <= 0:
        raise ValueError("arithmetic intensity must be positive")
    return min(peak_compute(device, precision), intensity * device.bandwidth)


def frames_per_second(ops_per_second: float, ops_per_frame: float, efficiency: float = 1.0) -> float:
    return efficiency * ops_per_second / ops_per_frame


def gpu_peak_reference(cores: int = 2880, clock: float = 875e6, ops_per_group: int = 64,
                       cycles_per_group: int = 6) -> float:
    """Binary ops/s of a GPU doing 32 synapses (64 ops) per 6 cycles per core."""
    return cores * clock * ops_per_group / cycles_per_group


@dataclass(frozen=True)
class WorkloadModel:
    synapses: int
    neurons: int
    ops: int  # per frame, 2 per synapse evaluation
    offchip_bytes: Optional[int] = None

    @property
    def params(self) -> int:
        """Weights plus one threshold (or bias) per neuron."""
        return self.synapses + self.neurons


# Off-chip traffic per frame for the built-in networks, as tabulated; no
# accounting rule is derived for them.
OFFCHIP_BYTES = {"sfc": 112, "lfc": 112, "cnv": 3092}


def count_ops_params(topology: NetworkTopology, offchip_bytes: Optional[int] = None) -> WorkloadModel:
    synapses = neurons = evals = 0
    for layer in topology.layers:
        if layer.kind not in (FC, CONV):
            continue
        per = layer.neurons * layer.fanin
        synapses += per
        neurons += layer.neurons
        evals += per * layer.matrix_fold
    if offchip_bytes is None:
        offchip_bytes = OFFCHIP_BYTES.get(topology.name)
    return WorkloadModel(synapses, neurons, 2 * evals, offchip_bytes)


def arithmetic_intensity(workload: WorkloadModel) -> float:
    if not workload.offchip_bytes:
        raise ValueError("off-chip byte count must be positive")
    return workload.ops / workload.offchip_bytes


def runtime_efficiency(fps: float, ops_per_frame: float, f_clk: float,
                       pe_simd: Sequence[float]) -> float:
    """Achieved ops per cycle over the design's peak synaptic ops per cycle (sum 2*P*S)."""
    if fps <= 0 or ops_per_frame <= 0 or f_clk <= 0 or not pe_simd:
        raise ValueError("runtime efficiency needs positive inputs")
    return (fps * ops_per_frame / f_clk) / sum(2 * ps for ps in pe_simd)


# Calibration points: 128-bit popcount-accumulate, threshold compare, MVU control
POPCOUNT_128_LUTS = 376
POPCOUNT_128_FFS = 29
THRESHOLD_LUTS = 6
MVU_CONTROL_LUTS = 850
BRAM_BITS = 36 * 1024
BRAM_MAX_WIDTH = 72
LUTRAM_BITS = 64
LUTRAM_MAX_BITS = BRAM_BITS // 64


@dataclass(frozen=True)
class ResourceEstimate:
    luts: float
    ffs: float
    brams: int
    lutram_memories: int = 0

    def luts_per_op(self, ops_per_cycle: float) -> float:
        return self.luts / ops_per_cycle


def _pe_memory_bits(fold: LayerFold, acc_bits: int) -> tuple[int, int]:
    weight_bits = fold.rows * fold.cols // fold.pe
    threshold_bits = fold.neuron_fold * acc_bits
    return weight_bits, threshold_bits


def layer_resources(fold: LayerFold, lutram_max_bits: int = LUTRAM_MAX_BITS,
                    acc_bits: Optional[int] = None) -> ResourceEstimate:
    """LUT / FF / BRAM estimate for one MVTU.

    Each PE pays a popcount scaled linearly from the 128-bit calibration point
    plus a threshold comparator; the MVU pays a fixed control cost. Every PE
    owns its weight and threshold memory, rounded up to whole 36 kb blocks (at
    least one, and one per 72 bits of read width). Memories of at most
    ``lutram_max_bits`` bits are mapped to LUTRAM instead; pass 0 to disable.
    """
    if acc_bits is None:
        acc_bits = max(2, 1 + math.ceil(math.log2(fold.cols)))
    pe_luts = POPCOUNT_128_LUTS * fold.simd / 128 + THRESHOLD_LUTS
    pe_ffs = POPCOUNT_128_FFS * fold.simd / 128 + acc_bits
    weight_bits, threshold_bits = _pe_memory_bits(fold, acc_bits)
    per_pe_bits = weight_bits + threshold_bits
    luts = MVU_CONTROL_LUTS + fold.pe * pe_luts
    if per_pe_bits <= lutram_max_bits:
        depth = fold.neuron_fold * fold.synapse_fold
        luts += fold.pe * (fold.simd + acc_bits) * math.ceil(depth / LUTRAM_BITS)
        return ResourceEstimate(luts, fold.pe * pe_ffs, 0, fold.pe)
    per_pe_brams = max(1, math.ceil(per_pe_bits / BRAM_BITS), math.ceil(fold.simd / BRAM_MAX_WIDTH))
    return ResourceEstimate(luts, fold.pe * pe_ffs, fold.pe * per_pe_brams, 0)


def bram_lut_estimate(config: FoldingConfig, lutram_max_bits: int = LUTRAM_MAX_BITS) -> ResourceEstimate:
    parts = [layer_resources(l, lutram_max_bits) for l in config.layers]
    return ResourceEstimate(
        sum(p.luts for p in parts),
        sum(p.ffs for p in parts),
        sum(p.brams for p in parts),
        sum(p.lutram_memories for p in parts),
    )


@dataclass(frozen=True)
class RooflineReport:
    device: str
    precision: int
    peak_ops: float
    ridge: float
    ops_per_frame: int
    params: int
    intensity: Optional[float]
    attainable_ops: Optional[float]
    fps_bound: Optional[float]

    def as_dict(self) -> dict:
        return asdict(self)


def roofline_report(device: DeviceModel, topology: NetworkTopology, precision: int = 1) -> RooflineReport:
    wl = count_ops_params(topology)
    peak = peak_compute(device, precision)
    ai = arithmetic_intensity(wl) if wl.offchip_bytes else None
    attain = roofline_point(device, precision, ai) if ai else None
    return RooflineReport(device.name, precision, peak, peak / device.bandwidth, wl.ops, wl.params,
                          ai, attain, attain / wl.ops if attain else None)
