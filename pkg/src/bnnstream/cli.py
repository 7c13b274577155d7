"""Command-line front end: compile, infer, fold, estimate, simulate, verify."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import modelio, perfmodel, streamsim, verify
from .bitcore import BipolarBitVector, FixedPointTensor, InterleavedFrame, unpack
from .compiler import compile_network, random_trained_network
from .errors import (
    AccumulatorOverflowError,
    CompileError,
    DatasetFormatError,
    DimensionError,
    InfeasibleTargetError,
    ModelFormatError,
)
from .folding import FoldingConfig, ThroughputTarget, rate_balance_report, solve_folding
from .kernels import run_network
from .topology import BUILTIN, FC, NetworkTopology, fc_network

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIMENSION = 4
EXIT_INFEASIBLE = 5


class UsageError(Exception):
    pass


def parse_topology(text: str) -> NetworkTopology:
    """A built-in name, ``fc:IN,H1,...,OUT`` or a JSON topology file."""
    if text.lower() in BUILTIN:
        return BUILTIN[text.lower()]()
    if text.startswith("fc:"):
        try:
            widths = [int(w) for w in text[3:].split(",")]
        except ValueError:
            raise UsageError(f"bad fc topology {text!r}") from None
        if len(widths) < 2:
            raise UsageError("fc topology needs at least input and output widths")
        return fc_network(widths[0], widths[1:-1], widths[-1], name=text)
    path = Path(text)
    if not path.exists():
        raise UsageError(f"unknown topology {text!r}: not a built-in name, fc:... spec or file")
    return NetworkTopology.from_dict(json.loads(path.read_text()))


def parse_caps(items: Sequence[str]) -> dict[int, int]:
    caps = {}
    for item in items or ():
        layer, sep, ii = item.partition("=")
        if not sep:
            raise UsageError(f"expected LAYER=II, got {item!r}")
        try:
            caps[int(layer)] = int(ii)
        except ValueError:
            raise UsageError(f"expected integers in {item!r}") from None
    return caps


def emit(args, values: dict, text: Optional[str] = None) -> None:
    if args.format == "kv":
        for k, v in values.items():
            print(f"{k}={v}")
    else:
        print(text if text is not None else "\n".join(f"{k:<20} {v}" for k, v in values.items()))


def _fmt(x: float) -> str:
    return f"{x:.10g}"


# -- compile ------------------------------------------------------------------

def cmd_compile(args) -> int:
    topo = parse_topology(args.topology)
    if args.params.startswith("random:"):
        try:
            seed = int(args.params.split(":", 1)[1])
        except ValueError:
            raise UsageError("--params random:SEED needs an integer seed") from None
        trained = random_trained_network(topo, seed)
    else:
        trained = modelio.load_trained(args.params, topo)
    net = compile_network(trained, topo.name, topo)
    if args.fps:
        cfg = solve_folding(topo, ThroughputTarget(args.fps, args.clock * 1e6))
        net.folding = cfg.to_dict()
    net.options = {"params": args.params}
    bns = [t.bn for t in trained] if args.keep_batchnorm else None
    data = modelio.dumps_model(modelio.ModelFile(net, bns))
    Path(args.out).write_bytes(data)
    emit(args, {
        "topology": topo.name,
        "layers": len(net.layers),
        "bytes": len(data),
        "sha256": hashlib.sha256(data).hexdigest(),
        "out": args.out,
    })
    return EXIT_OK


# -- infer --------------------------------------------------------------------

def _load_images(paths: Sequence[str]) -> np.ndarray:
    if len(paths) == 1 and Path(paths[0]).suffix.lower() not in (".pgm", ".ppm", ".pnm"):
        return modelio.read_idx(paths[0])
    return modelio.load_images(paths)


def _network_input(topo: NetworkTopology, image: np.ndarray, t: int):
    first = topo.layers[0]
    if not first.binary_input:
        img = image.reshape(topo.input_shape) if image.size == np.prod(topo.input_shape) else image
        tensor = modelio.image_to_fixed(img, first.input_bits)
        if tensor.shape != topo.input_shape:
            raise DimensionError(f"image {image.shape} does not fit input {topo.input_shape}")
        return tensor
    if first.kind == FC:
        if image.size != first.in_channels:
            raise DimensionError(f"image with {image.size} pixels for a {first.in_channels}-input network")
        return modelio.binarize_input(image, t)
    if image.size != np.prod(topo.input_shape):
        raise DimensionError(f"image {image.shape} does not fit input {topo.input_shape}")
    return InterleavedFrame.from_array(image.reshape(topo.input_shape) >= t)


def _scores(out) -> np.ndarray:
    if isinstance(out, FixedPointTensor):
        return out.values.reshape(-1)
    if isinstance(out, BipolarBitVector):
        return unpack(out).astype(np.int64)
    if isinstance(out, InterleavedFrame):
        return np.where(out.to_array(), 1, -1).reshape(-1)
    raise TypeError(type(out))


def infer_images(model: modelio.ModelFile, images: np.ndarray, threshold: int = 128,
                 workers: int = 1) -> list[np.ndarray]:
    """Final-layer outputs for each image, in input order."""
    net = model.network

    def one(img):
        return _scores(run_network(net, _network_input(net.topology, img, threshold)).result)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, images))
    return [one(img) for img in images]


def cmd_infer(args) -> int:
    model = modelio.load_model(args.model)
    images = _load_images(args.images)
    labels = modelio.read_idx(args.labels) if args.labels else None
    if labels is not None and len(labels) != len(images):
        raise DatasetFormatError(f"{len(images)} images but {len(labels)} labels")
    outputs = infer_images(model, images, args.threshold, args.batch)
    preds = [int(np.argmax(o)) for o in outputs]
    values: dict = {"images": len(preds)}
    lines = []
    for i, (o, p) in enumerate(zip(outputs, preds)):
        values[f"image.{i}.pred"] = p
        values[f"image.{i}.scores"] = ",".join(str(int(v)) for v in o)
        lines.append(f"{i:6d}  pred {p}  scores {' '.join(str(int(v)) for v in o)}")
    if labels is not None:
        if preds:
            acc = sum(int(p == l) for p, l in zip(preds, labels)) / len(preds)
            values["accuracy"] = f"{acc:.4f}"
        else:
            values["accuracy"] = "undefined"
        lines.append(f"accuracy {values['accuracy']}")
    emit(args, values, "\n".join(lines) if lines else "no images")
    return EXIT_OK


# -- fold ---------------------------------------------------------------------

def cmd_fold(args) -> int:
    topo = parse_topology(args.topology)
    f_clk = args.clock * 1e6
    cfg = solve_folding(topo, ThroughputTarget(args.fps, f_clk, parse_caps(args.cap)))
    achieved = cfg.achieved_fps(f_clk)
    values: dict = {
        "target_fps": _fmt(args.fps),
        "achieved_fps": _fmt(achieved),
        "max_ii": cfg.max_ii,
        "bottleneck_bound": int(cfg.bottleneck_bound),
    }
    rows = ["layer  rows   cols     P     S        F   ratio"]
    for l, b in zip(cfg.layers, rate_balance_report(cfg, args.balance)):
        i = b.layer
        values.update({f"layer{i}.pe": l.pe, f"layer{i}.simd": l.simd, f"layer{i}.fold": l.total_fold,
                       f"layer{i}.ratio": f"{b.ratio:.4f}", f"layer{i}.flagged": int(b.flagged)})
        flag = "  idle" if b.flagged else ""
        rows.append(f"{i:5d} {l.rows:5d} {l.cols:6d} {l.pe:5d} {l.simd:5d} {l.total_fold:8d}  {b.ratio:.3f}{flag}")
    rows.append(f"achieved {achieved:.0f} FPS (target {args.fps:g}), max II {cfg.max_ii} cycles")
    if args.out:
        modelio.save_folding(cfg, args.out)
    emit(args, values, "\n".join(rows))
    return EXIT_OK


# -- estimate -----------------------------------------------------------------

def cmd_estimate(args) -> int:
    device = perfmodel.load_device(args.device)
    if args.utilization is not None:
        device = device.with_utilization(args.utilization)
    values: dict = {
        "device": device.name,
        "precision": args.precision,
        "peak_ops": _fmt(perfmodel.peak_compute(device, args.precision)),
        "ridge_ops_per_byte": _fmt(perfmodel.ridge_point(device, args.precision)),
    }
    if args.topology:
        topo = parse_topology(args.topology)
        rep = perfmodel.roofline_report(device, topo, args.precision)
        values.update({"ops_per_frame": rep.ops_per_frame, "params": rep.params})
        if rep.intensity is not None:
            values.update({"intensity": _fmt(rep.intensity), "attainable_ops": _fmt(rep.attainable_ops),
                           "fps_bound": _fmt(rep.fps_bound)})
        if args.folds:
            cfg = modelio.load_folding(args.folds)
            res = perfmodel.bram_lut_estimate(cfg)
            values.update({"luts": _fmt(res.luts), "ffs": _fmt(res.ffs), "brams": res.brams})
    lines = [f"{k:<20} {v}" for k, v in values.items()]
    lines.insert(2, f"{'peak':<20} {float(values['peak_ops']) / 1e12:.2f} TOPS")
    emit(args, values, "\n".join(lines))
    return EXIT_OK


# -- simulate -----------------------------------------------------------------

def _sim_iis(args) -> list[int]:
    if args.folds:
        path = Path(args.folds)
        if path.exists():
            return FoldingConfig.from_dict(json.loads(path.read_text())).initiation_intervals
        try:
            return [int(v) for v in args.folds.split(",")]
        except ValueError:
            raise UsageError(f"--folds is neither a file nor a comma list: {args.folds!r}") from None
    if args.model:
        folding = modelio.load_model(args.model).network.folding
        if not folding:
            raise UsageError("model carries no folding config; pass --folds")
        return FoldingConfig.from_dict(folding).initiation_intervals
    if args.topology and args.fps:
        topo = parse_topology(args.topology)
        return solve_folding(topo, ThroughputTarget(args.fps, args.clock * 1e6)).initiation_intervals
    raise UsageError("simulate needs --folds, --model with a folding, or --topology with --fps")


def cmd_simulate(args) -> int:
    iis = _sim_iis(args)
    n = len(iis)
    model = streamsim.PipelineModel.from_iis(
        iis, parse_caps(args.override), fifo_capacity=[args.fifo] * (n - 1))
    f_clk = args.clock * 1e6
    rep = streamsim.token_simulate(model, f_clk, args.frames)
    analytic = {
        "analytic_fps": _fmt(streamsim.analytic_throughput(model, f_clk)),
        "analytic_latency_s": _fmt(streamsim.analytic_latency(model, f_clk)),
    }
    if args.format == "kv":
        print(rep.to_kv())
        for k, v in analytic.items():
            print(f"{k}={v}")
    else:
        print(rep.to_text())
        print(f"analytic         {float(analytic['analytic_fps']):.6g} FPS, "
              f"{float(analytic['analytic_latency_s']) * 1e6:.6g} us")
    return EXIT_OK


# -- verify -------------------------------------------------------------------

def cmd_verify(args) -> int:
    results = verify.run_suite(args.suite)
    values = {}
    for r in results:
        key = r.name.replace(" ", "_")
        values[f"{key}.passed"] = int(r.passed)
        values[f"{key}.mismatches"] = r.mismatches
    ok = all(r.passed for r in results)
    values["passed"] = int(ok)
    emit(args, values, "\n".join(r.line() for r in results))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "kv"), default="text")

    p = argparse.ArgumentParser(prog="bnnstream", description="Streaming binarized neural network toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", parents=[common], help="compile a network to a model file")
    c.add_argument("--topology", required=True, help="sfc|lfc|cnv, fc:IN,...,OUT or a JSON file")
    c.add_argument("--params", required=True, help="random:SEED or an .npz parameter archive")
    c.add_argument("--out", required=True)
    c.add_argument("--fps", type=float, help="also solve and store a folding for this target")
    c.add_argument("--clock", type=float, default=200.0, help="MHz")
    c.add_argument("--keep-batchnorm", action="store_true")
    c.set_defaults(func=cmd_compile)

    i = sub.add_parser("infer", parents=[common], help="classify images with a model file")
    i.add_argument("--model", required=True)
    i.add_argument("--images", required=True, nargs="+", help="one IDX file or PGM/PPM files")
    i.add_argument("--labels")
    i.add_argument("--batch", type=int, default=1, help="worker threads")
    i.add_argument("--threshold", type=int, default=128, help="binarization threshold")
    i.set_defaults(func=cmd_infer)

    f = sub.add_parser("fold", parents=[common], help="solve per-layer folding for a target rate")
    f.add_argument("--topology", required=True)
    f.add_argument("--fps", type=float, required=True)
    f.add_argument("--clock", type=float, default=200.0, help="MHz")
    f.add_argument("--cap", action="append", metavar="LAYER=II", help="bottleneck II for an MVTU layer")
    f.add_argument("--balance", type=float, default=0.5, help="flag layers below this F/max F")
    f.add_argument("--out", help="write the folding config as JSON")
    f.set_defaults(func=cmd_fold)

    e = sub.add_parser("estimate", parents=[common], help="roofline, ops and resource estimate")
    e.add_argument("--device", required=True, help="zu19eg|zc706 or a device file")
    e.add_argument("--topology")
    e.add_argument("--precision", type=int, default=1)
    e.add_argument("--utilization", type=float)
    e.add_argument("--folds", help="folding JSON for a LUT/BRAM estimate")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", parents=[common], help="token simulation of the layer pipeline")
    s.add_argument("--model")
    s.add_argument("--topology")
    s.add_argument("--fps", type=float)
    s.add_argument("--folds", help="folding JSON file or comma-separated IIs")
    s.add_argument("--clock", type=float, default=200.0, help="MHz")
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--fifo", type=int, default=1, help="FIFO capacity in frames")
    s.add_argument("--override", action="append", metavar="STAGE=II", help="per-stage II override")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", parents=[common], help="run built-in equivalence and table checks")
    v.add_argument("--suite", required=True, choices=sorted(verify.SUITES))
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleTargetError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ModelFormatError, DatasetFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (DimensionError, CompileError, AccumulatorOverflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIMENSION
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
