"""Timing model of a layer-per-engine streaming pipeline.

Two views of the same pipeline: closed-form throughput/latency from the
per-stage initiation intervals, and a token simulation in which frames move
through stages separated by bounded FIFOs. The simulation advances an integer
cycle clock from event to event; a stage starts a frame once the frame has
arrived, the stage's initiation interval has elapsed since its previous start,
and it has room to hold the frame. A finished frame leaves the stage only when
the downstream FIFO has a free slot, otherwise the stage stalls.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import DimensionError


@dataclass(frozen=True)
class Stage:
    name: str
    ii: int  # cycles between successive frames
    depth: Optional[int] = None  # cycles from start to finish; defaults to ii

    def __post_init__(self):
        if self.ii < 1:
            raise DimensionError(f"stage {self.name}: II must be >= 1")
        if self.depth is not None and self.depth < 1:
            raise DimensionError(f"stage {self.name}: depth must be >= 1")

    @property
    def latency(self) -> int:
        return self.ii if self.depth is None else self.depth


@dataclass(frozen=True)
class PipelineModel:
    stages: tuple[Stage, ...]
    fifo_capacity: tuple[int, ...] = ()  # one per link; default 1 frame each

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise DimensionError("pipeline needs at least one stage")
        fifos = tuple(self.fifo_capacity) or (1,) * (len(stages) - 1)
        if len(fifos) != len(stages) - 1:
            raise DimensionError(f"{len(fifos)} FIFOs for {len(stages)} stages")
        if any(c < 1 for c in fifos):
            raise DimensionError("FIFO capacity must be at least one frame")
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "fifo_capacity", fifos)

    @classmethod
    def from_iis(cls, iis: Sequence[int], overrides: Optional[Mapping[int, int]] = None,
                 depths: Optional[Sequence[int]] = None, fifo_capacity: Sequence[int] = (),
                 names: Optional[Sequence[str]] = None) -> "PipelineModel":
        """Stages with the given IIs; ``overrides`` replaces the II of chosen stages
        (e.g. a sliding-window bottleneck) without changing their depth."""
        overrides = dict(overrides or {})
        stages = []
        for i, ii in enumerate(iis):
            depth = depths[i] if depths is not None else int(ii)
            stages.append(Stage(names[i] if names else f"L{i}", int(overrides.get(i, ii)), depth))
        return cls(tuple(stages), tuple(fifo_capacity))

    @property
    def iis(self) -> list[int]:
        return [s.ii for s in self.stages]

    @property
    def max_ii(self) -> int:
        return max(self.iis)


def analytic_throughput(model: PipelineModel, f_clk: float) -> float:
    return f_clk / model.max_ii


def analytic_latency_cycles(model: PipelineModel) -> int:
    return sum(s.latency for s in model.stages)


def analytic_latency(model: PipelineModel, f_clk: float) -> float:
    """Seconds for one frame through an empty pipeline."""
    return analytic_latency_cycles(model) / f_clk


@dataclass
class SimReport:
    fps: float
    latency: float
    latency_cycles: int
    total_cycles: int
    busy: list[float]
    blocked_stalls: list[int]
    starved_stalls: list[int]
    n_frames: int
    exit_times: list[int] = field(repr=False, default_factory=list)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("exit_times")
        return d

    def to_text(self) -> str:
        lines = [
            f"frames           {self.n_frames}",
            f"throughput       {self.fps:.6g} FPS",
            f"latency          {self.latency * 1e6:.6g} us ({self.latency_cycles} cycles)",
            f"total cycles     {self.total_cycles}",
        ]
        for i, (b, bl, st) in enumerate(zip(self.busy, self.blocked_stalls, self.starved_stalls)):
            lines.append(f"stage {i:<3} busy {b:6.3f}  blocked {bl:<6d} starved {st}")
        return "\n".join(lines)

    def to_kv(self) -> str:
        kv = {
            "frames": self.n_frames,
            "fps": f"{self.fps:.10g}",
            "latency_s": f"{self.latency:.10g}",
            "latency_cycles": self.latency_cycles,
            "total_cycles": self.total_cycles,
        }
        for i, (b, bl, st) in enumerate(zip(self.busy, self.blocked_stalls, self.starved_stalls)):
            kv[f"stage{i}.busy"] = f"{b:.6f}"
            kv[f"stage{i}.blocked"] = bl
            kv[f"stage{i}.starved"] = st
        return "\n".join(f"{k}={v}" for k, v in kv.items())


def token_simulate(model: PipelineModel, f_clk: float, n_frames: int) -> SimReport:
    """Push ``n_frames`` tokens through the pipeline; frames are always available at the input.

    Per stage ``i`` and frame ``f`` the simulation resolves, in cycles,
    ``start`` (input present, II elapsed, stage has a free slot), ``done``
    (``start + depth``) and ``leave`` (``done`` delayed until FIFO ``i`` has a
    slot, i.e. stage ``i+1`` has started frame ``f - capacity``). Frames are
    processed in order, so each quantity depends only on already resolved ones.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    stages = model.stages
    n = len(stages)
    slots = [max(1, math.ceil(s.latency / s.ii)) for s in stages]
    start = [[0] * n_frames for _ in range(n)]
    leave = [[0] * n_frames for _ in range(n)]
    blocked = [0] * n
    starved = [0] * n

    for f in range(n_frames):
        for i, st in enumerate(stages):
            arrive = leave[i - 1][f] if i else 0
            ready = 0
            if f:
                ready = start[i][f - 1] + st.ii
            if f >= slots[i]:
                ready = max(ready, leave[i][f - slots[i]])
            if arrive > ready and f:
                starved[i] += 1
            s = max(arrive, ready)
            start[i][f] = s
            done = s + st.latency
            if i < n - 1:
                cap = model.fifo_capacity[i]
                # frame f - cap must have been taken by the next stage; that
                # start time is already known because it precedes frame f
                room = start[i + 1][f - cap] if f >= cap else 0
                if room > done:
                    blocked[i] += 1
                leave[i][f] = max(done, room)
            else:
                leave[i][f] = done

    exits = leave[-1]
    first = exits[0]
    if n_frames > 1:
        half = max(1, (n_frames - 1) // 2)
        span = exits[-1] - exits[-1 - half]
        fps = f_clk * half / span
    else:
        fps = f_clk / first
    busy = []
    for i, st in enumerate(stages):
        window = start[i][-1] + st.ii - start[i][0]
        busy.append(min(1.0, n_frames * st.ii / window))
    return SimReport(
        fps=fps,
        latency=first / f_clk,
        latency_cycles=first,
        total_cycles=exits[-1],
        busy=busy,
        blocked_stalls=blocked,
        starved_stalls=starved,
        n_frames=n_frames,
        exit_times=list(exits),
    )
