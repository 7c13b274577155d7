"""Neuron/synapse folding and rate balancing across a streaming pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import DimensionError, InfeasibleTargetError
from .topology import LayerSpec, NetworkTopology


def divisors(n: int) -> list[int]:
    small, large = [], []
    for d in range(1, math.isqrt(n) + 1):
        if n % d == 0:
            small.append(d)
            if d != n // d:
                large.append(n // d)
    return small + large[::-1]


def check_fold(rows: int, cols: int, pe: int, simd: int) -> tuple[int, int]:
    """Return (neuron fold, synapse fold) or raise if P, S do not divide X, Y."""
    if pe < 1 or simd < 1:
        raise DimensionError(f"P and S must be positive, got P={pe}, S={simd}")
    if rows % pe or cols % simd:
        raise DimensionError(
            f"P={pe}, S={simd} do not evenly divide a {rows}x{cols} matrix"
        )
    return rows // pe, cols // simd


@dataclass(frozen=True)
class LayerFold:
    rows: int  # X, neurons
    cols: int  # Y, synapses per neuron
    pe: int
    simd: int
    matrix_fold: int = 1  # F^m, output pixels for a convolution

    def __post_init__(self):
        check_fold(self.rows, self.cols, self.pe, self.simd)
        if self.matrix_fold < 1:
            raise DimensionError("matrix fold must be positive")

    @property
    def neuron_fold(self) -> int:
        return self.rows // self.pe

    @property
    def synapse_fold(self) -> int:
        return self.cols // self.simd

    @property
    def total_fold(self) -> int:
        return self.matrix_fold * self.neuron_fold * self.synapse_fold

    @classmethod
    def for_layer(cls, spec: LayerSpec, pe: int, simd: int) -> "LayerFold":
        return cls(spec.neurons, spec.fanin, pe, simd, spec.matrix_fold)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "pe": self.pe, "simd": self.simd,
                "matrix_fold": self.matrix_fold}


def fold_of(spec_or_rows, pe: int, simd: int, cols: Optional[int] = None,
            matrix_fold: int = 1) -> int:
    """Total fold F = F^m * (X / P) * (Y / S).

    Accepts either a :class:`LayerSpec` or explicit ``rows, pe, simd, cols``.
    """
    if isinstance(spec_or_rows, LayerSpec):
        return LayerFold.for_layer(spec_or_rows, pe, simd).total_fold
    return LayerFold(spec_or_rows, cols, pe, simd, matrix_fold).total_fold


@dataclass(frozen=True)
class ThroughputTarget:
    fps: float
    f_clk: float = 200e6
    caps: Mapping[int, int] = field(default_factory=dict)  # MVTU index -> minimum II

    def __post_init__(self):
        if self.fps <= 0 or self.f_clk <= 0:
            raise ValueError("FPS target and clock must be positive")
        if any(ii < 1 for ii in self.caps.values()):
            raise ValueError("bottleneck II must be >= 1")

    @property
    def cycle_budget(self) -> int:
        return int(math.floor(self.f_clk / self.fps + 1e-9))


@dataclass(frozen=True)
class FoldingConfig:
    """Per-MVTU-layer (P, S) choice for a network."""

    layers: tuple[LayerFold, ...]
    caps: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "caps", {int(k): int(v) for k, v in dict(self.caps).items()})

    @property
    def folds(self) -> list[int]:
        return [l.total_fold for l in self.layers]

    @property
    def initiation_intervals(self) -> list[int]:
        return [max(l.total_fold, self.caps.get(i, 1)) for i, l in enumerate(self.layers)]

    @property
    def max_ii(self) -> int:
        return max(self.initiation_intervals)

    def achieved_fps(self, f_clk: float) -> float:
        return f_clk / self.max_ii

    @property
    def bottleneck_bound(self) -> bool:
        """True when a supplied II cap, not a fold, limits throughput."""
        return any(c > max(self.folds) for c in self.caps.values())

    def pe_simd_products(self) -> list[int]:
        return [l.pe * l.simd for l in self.layers]

    def to_dict(self) -> dict:
        return {"layers": [l.to_dict() for l in self.layers],
                "caps": {str(k): v for k, v in self.caps.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldingConfig":
        return cls(tuple(LayerFold(**l) for l in d["layers"]),
                   {int(k): v for k, v in d.get("caps", {}).items()})

    @classmethod
    def for_topology(cls, topology: NetworkTopology, pe_simd: Sequence[tuple[int, int]],
                     caps: Optional[Mapping[int, int]] = None) -> "FoldingConfig":
        mvtus = topology.mvtu_layers
        if len(pe_simd) != len(mvtus):
            raise DimensionError(f"{len(pe_simd)} (P, S) pairs for {len(mvtus)} MVTU layers")
        return cls(tuple(LayerFold.for_layer(s, p, q) for s, (p, q) in zip(mvtus, pe_simd)),
                   caps or {})

    @classmethod
    def fully_parallel(cls, topology: NetworkTopology) -> "FoldingConfig":
        return cls.for_topology(topology, [(s.neurons, s.fanin) for s in topology.mvtu_layers])


def legal_folds(rows: int, cols: int, matrix_fold: int = 1) -> dict[int, tuple[int, int]]:
    """Every reachable total fold mapped to its preferred (P, S).

    Among pairs giving the same fold the widest SIMD wins, which for a fixed
    P * S product also means the fewest PEs.
    """
    best: dict[int, tuple[int, int]] = {}
    for pe in divisors(rows):
        for simd in divisors(cols):
            f = matrix_fold * (rows // pe) * (cols // simd)
            cur = best.get(f)
            if cur is None or simd > cur[1] or (simd == cur[1] and pe < cur[0]):
                best[f] = (pe, simd)
    return best


def choose_fold(rows: int, cols: int, budget: int, matrix_fold: int = 1) -> LayerFold:
    """Largest legal fold not exceeding ``budget`` cycles."""
    options = legal_folds(rows, cols, matrix_fold)
    fitting = [f for f in options if f <= budget]
    if not fitting:
        nearest = min(options)
        raise InfeasibleTargetError(
            f"{rows}x{cols} layer needs at least {nearest} cycles, budget is {budget}",
            max_fps=float("nan"),
        )
    f = max(fitting)
    pe, simd = options[f]
    return LayerFold(rows, cols, pe, simd, matrix_fold)


def solve_folding(topology: NetworkTopology, target: ThroughputTarget) -> FoldingConfig:
    """Pick (P, S) per MVTU layer so every layer fits the target cycle budget.

    Each layer gets the largest legal fold F <= floor(F_clk / FPS), i.e. the
    least hardware that still keeps up. A supplied per-layer II cap that
    exceeds the budget becomes the new budget for all layers, so the fast
    layers are not over-provisioned for a rate the bottleneck cannot sustain.
    """
    mvtus = topology.mvtu_layers
    if not mvtus:
        raise DimensionError("topology has no matrix-vector layers to fold")
    bad = [i for i in target.caps if not 0 <= i < len(mvtus)]
    if bad:
        raise DimensionError(f"II caps refer to unknown MVTU layers {bad}")
    budget = target.cycle_budget
    floor_ii = max(s.matrix_fold for s in mvtus)
    if target.caps:
        floor_ii = max(floor_ii, max(target.caps.values()))
        budget = max(budget, max(target.caps.values()))
    if budget < 1 or max(s.matrix_fold for s in mvtus) > budget:
        raise InfeasibleTargetError(
            f"target {target.fps:.6g} FPS at {target.f_clk:.6g} Hz is out of reach",
            max_fps=target.f_clk / floor_ii,
        )
    layers = tuple(choose_fold(s.neurons, s.fanin, budget, s.matrix_fold) for s in mvtus)
    return FoldingConfig(layers, dict(target.caps))


@dataclass(frozen=True)
class BalanceRow:
    layer: int
    fold: int
    ratio: float
    flagged: bool


def rate_balance_report(config, threshold: float = 0.5) -> list[BalanceRow]:
    """Per-layer F / max F; rows under ``threshold`` are flagged as idle-heavy."""
    folds = config.initiation_intervals if isinstance(config, FoldingConfig) else list(config)
    top = max(folds)
    return [BalanceRow(i, f, f / top, f / top < threshold) for i, f in enumerate(folds)]
