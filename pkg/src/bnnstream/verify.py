"""Self-checks of the compiled path against the reference model and of the
performance model against reference figures.

Every check returns a :class:`CheckResult`; the CLI ``verify`` command and the
acceptance tests both run them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracle
from .bitcore import (
    BipolarBitVector,
    FixedPointTensor,
    InterleavedFrame,
    masked_xnor,
    pack_bits,
    popcount_words,
    unpack,
)
from .compiler import (
    BatchNormParams,
    CompiledLayer,
    CompiledPool,
    TrainedLayer,
    compile_layer,
    compile_network,
    derive_threshold,
    random_trained_network,
)
from .folding import ThroughputTarget, divisors, solve_folding
from .kernels import (
    MVTUConfig,
    and_pool,
    conv_layer_execute,
    majority_pool,
    mvtu_execute,
    pool_execute,
    run_network,
    sliding_window,
)
from .perfmodel import ZU19EG, count_ops_params, gpu_peak_reference, peak_compute
from .errors import HeaderMismatchError, ModelFormatError, TruncatedFileError, VersionMismatchError
from .modelio import ModelFile, dumps_model, loads_model
from .streamsim import (
    PipelineModel,
    analytic_latency,
    analytic_latency_cycles,
    analytic_throughput,
    token_simulate,
)
from .topology import builtin, conv, fc, fc_network, maxpool


@dataclass
class CheckResult:
    name: str
    passed: bool
    trials: int = 0
    mismatches: int = 0
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.trials} trials, {self.mismatches} mismatches{extra} [{self.seconds:.2f}s]"


def _timed(fn: Callable[..., CheckResult]) -> Callable[..., CheckResult]:
    def run(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


# -- thresholds ---------------------------------------------------------------

def random_batchnorm(rng: np.random.Generator, n: int, fanin: int) -> BatchNormParams:
    """Both slope signs; zero-crossings spread over (and slightly past) [-Y, Y]."""
    gamma = rng.uniform(0.1, 3.0, n) * rng.choice([-1.0, 1.0], n)
    inv_std = rng.uniform(0.1, 3.0, n)
    mu = rng.uniform(-1.2 * fanin, 1.2 * fanin, n)
    beta = rng.normal(0.0, 1.0, n)
    return BatchNormParams(gamma, mu, inv_std, beta)


@_timed
def check_threshold_theorem(n: int = 1000, seed: int = 0, y_range=(4, 64)) -> CheckResult:
    """c >= tau_plus on (possibly flipped) weights == Sign(BatchNorm(2c - Y)), every c."""
    rng = np.random.default_rng(seed)
    bad = flips = 0
    for _ in range(n):
        y = int(rng.integers(y_range[0], y_range[1] + 1))
        theta = random_batchnorm(rng, 1, y)[0]
        tp, flip = derive_threshold(theta, y)
        flips += flip
        c = np.arange(y + 1)
        ref = oracle.sign(oracle.batchnorm(2.0 * c - y, *theta)) > 0
        got = ((y - c) if flip else c) >= tp
        bad += int(np.count_nonzero(ref != got))
    ok = bad == 0 and 0 < flips < n
    return CheckResult("threshold theorem", ok, n, bad, f"{flips} negative slopes")


# -- XNOR-popcount ------------------------------------------------------------

def _all_vectors(y: int) -> np.ndarray:
    codes = np.arange(1 << y, dtype=np.uint64)
    return ((codes[:, None] >> np.arange(y, dtype=np.uint64)) & np.uint64(1)).astype(bool)


@_timed
def check_xnor_exhaustive(max_len: int = 12) -> CheckResult:
    """popcount(XNOR(w, a)) vs the bipolar dot product, all pairs for Y <= max_len."""
    trials = bad = 0
    for y in range(1, max_len + 1):
        bits = _all_vectors(y)
        bip = np.where(bits, 1, -1).astype(np.int32)
        words = pack_bits(bits)[:, 0]
        chunk = max(1, (1 << 22) >> y)
        for lo in range(0, len(bits), chunk):
            w = words[lo:lo + chunk]
            pc = popcount_words(masked_xnor(w[:, None, None], words[None, :, None], y))
            dot = bip[lo:lo + chunk] @ bip.T
            bad += int(np.count_nonzero(2 * pc.astype(np.int32) - y != dot))
            trials += dot.size
    return CheckResult("xnor-popcount exhaustive", bad == 0, trials, bad, f"Y <= {max_len}")


@_timed
def check_xnor_random(trials: int = 100_000, length: int = 1024, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    step = 10_000
    for lo in range(0, trials, step):
        m = min(step, trials - lo)
        w = rng.integers(0, 2, (m, length), dtype=np.int8).astype(bool)
        a = rng.integers(0, 2, (m, length), dtype=np.int8).astype(bool)
        pc = popcount_words(masked_xnor(pack_bits(w), pack_bits(a), length))
        dot = (np.where(w, 1, -1) * np.where(a, 1, -1)).sum(axis=1)
        bad += int(np.count_nonzero(2 * pc - length != dot))
    return CheckResult("xnor-popcount random", bad == 0, trials, bad, f"Y = {length}")


# -- pooling ------------------------------------------------------------------

def _popcount_images(rng, pattern: np.ndarray, fanin: int, taus, flips) -> np.ndarray:
    """Integer popcounts (C, H, W) whose compiled activation equals ``pattern``."""
    c = np.empty(pattern.shape, dtype=np.int64)
    for ch in range(pattern.shape[0]):
        tp, flip = int(taus[ch]), bool(flips[ch])
        # compiled bit is (c' >= tp) with c' = Y - c when flipped
        fire_lo, fire_hi = (0, fanin - tp) if flip else (tp, fanin)
        quiet_lo, quiet_hi = (fanin - tp + 1, fanin) if flip else (0, tp - 1)
        fire = rng.integers(fire_lo, fire_hi + 1, pattern.shape[1:])
        quiet = rng.integers(quiet_lo, quiet_hi + 1, pattern.shape[1:])
        c[ch] = np.where(pattern[ch], fire, quiet)
    return c


def _interior_batchnorm(rng, n: int, fanin: int) -> tuple[BatchNormParams, np.ndarray, np.ndarray]:
    """Batchnorm params whose popcount threshold lies strictly inside [1, Y]."""
    thetas, taus, flips = [], [], []
    while len(thetas) < n:
        theta = random_batchnorm(rng, 1, fanin)[0]
        tp, flip = derive_threshold(theta, fanin)
        if 1 <= tp <= fanin:
            thetas.append(theta)
            taus.append(tp)
            flips.append(flip)
    g, mu, inv, beta = (np.array(v) for v in zip(*thetas))
    return BatchNormParams(g, mu, inv, beta), np.array(taus), np.array(flips)


def _pool_case(rng, pattern: np.ndarray, fanin: int, k: int) -> int:
    """Compiled threshold-then-pool vs oracle maxpool-then-threshold; mismatching bits."""
    ch = pattern.shape[0]
    bn, taus, flips = _interior_batchnorm(rng, ch, fanin)
    c = _popcount_images(rng, pattern, fanin, taus, flips)
    pre = 2 * c - fanin
    ref = oracle.sign(bn.apply(oracle.maxpool_int(pre, k)))
    # compiled side: threshold each pixel, then the binary pool
    cprime = np.where(flips[:, None, None], fanin - c, c)
    bits = cprime >= taus[:, None, None]
    frame = InterleavedFrame.from_array(bits.transpose(1, 2, 0))
    spec = maxpool(ch, (pattern.shape[1], pattern.shape[2]), k)
    got = pool_execute(CompiledPool(spec, flips.astype(bool)), frame).to_array().transpose(2, 0, 1)
    return int(np.count_nonzero(got != (ref > 0)))


def _analogue_case(pattern: np.ndarray, pre: np.ndarray, tau: np.ndarray, k: int) -> int:
    """AND vs min-pool and majority vs upper-median / bipolar average; mismatching bits."""
    bits = pre >= tau[:, None, None]
    assert np.array_equal(bits, pattern)
    frame = InterleavedFrame.from_array(bits.transpose(1, 2, 0))
    bad = 0
    got_and = and_pool(frame, k).to_array().transpose(2, 0, 1)
    bad += int(np.count_nonzero(got_and != (oracle.minpool_int(pre, k) >= tau[:, None, None])))
    got_maj = majority_pool(frame, k).to_array().transpose(2, 0, 1)
    bad += int(np.count_nonzero(got_maj != (oracle.upper_median_pool(pre, k) >= tau[:, None, None])))
    bip_avg = oracle.avgpool_int(np.where(bits, 1, -1), k)
    bad += int(np.count_nonzero(got_maj != (oracle.sign(bip_avg) > 0)))
    return bad


def _pre_from_pattern(rng, pattern: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tau = rng.integers(-20, 21, pattern.shape[0])
    up = rng.integers(0, 30, pattern.shape)
    down = rng.integers(1, 30, pattern.shape)
    return np.where(pattern, tau[:, None, None] + up, tau[:, None, None] - down), tau


@_timed
def check_pooling(seed: int = 0, random_trials: int = 200, fanin: int = 32) -> CheckResult:
    """Exhaustive 4x4 binary patterns (one per channel) plus random 8x8 images."""
    rng = np.random.default_rng(seed)
    patterns = _all_vectors(16).reshape(-1, 4, 4)
    bad = 0
    for lo in range(0, len(patterns), 4096):
        pat = patterns[lo:lo + 4096]
        bad += _pool_case(rng, pat, fanin, 2)
        bad += _analogue_case(pat, *_pre_from_pattern(rng, pat), 2)
    for _ in range(random_trials):
        pat = rng.integers(0, 2, (8, 8, 8)).astype(bool)
        bad += _pool_case(rng, pat, fanin, 2)
        bad += _analogue_case(pat, *_pre_from_pattern(rng, pat), 2)
    return CheckResult("pooling equivalence", bad == 0, len(patterns) + random_trials, bad,
                       "OR/AND/majority")


# -- lowering -----------------------------------------------------------------

@_timed
def check_lowering(instances: int = 200, seed: int = 0) -> CheckResult:
    """Interleaved sliding window + packed filter matrix vs direct convolution."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(instances):
        h = w = int(rng.integers(3, 9))
        ch = int(rng.integers(1, 5))
        n = int(rng.integers(1, 9))
        pad = int(rng.integers(0, 2))
        pad_value = int(rng.choice([-1, 1]))
        spec = conv(ch, n, h, kernel=3, pad=pad, thresholded=False)
        weights = rng.choice(np.array([-1, 1], dtype=np.int8), (n, ch, 3, 3))
        trained = TrainedLayer(spec, weights, pad_value=pad_value)
        layer = compile_layer(trained)
        img = rng.integers(0, 2, (h, w, ch)).astype(bool)
        frame = InterleavedFrame.from_array(img)
        out, _ = conv_layer_execute(layer, frame)
        ref = oracle.conv_preactivation(oracle.real_layer(trained), np.where(img, 1, -1).transpose(2, 0, 1))
        bad += int(np.count_nonzero(out.values.transpose(2, 0, 1) != ref))
        # the streaming sliding-window unit emits the same columns
        mode = "none" if pad == 0 else ("+1" if pad_value == 1 else "-1")
        cols = sliding_window(frame, 3, mode)
        matrix = layer.weights
        for p, col in enumerate(cols):
            r, cc = divmod(p, spec.out_width)
            for k in range(n):
                dot = 2 * int(popcount_words(masked_xnor(matrix.words[k], col.bits, col.length))) - col.length
                bad += int(dot != ref[k, r, cc])
    return CheckResult("lowering equivalence", bad == 0, instances, bad)


# -- folding ------------------------------------------------------------------

def _random_fc_layer(rows: int, cols: int, seed: int) -> CompiledLayer:
    spec = fc(cols, rows)
    rng = np.random.default_rng(seed)
    w = rng.choice(np.array([-1, 1], dtype=np.int8), (rows, cols))
    bn = random_batchnorm(rng, rows, cols)
    return compile_layer(TrainedLayer(spec, w, bn))


@_timed
def check_fold_invariance(sizes=(96, 256), seed: int = 0, vectors: int = 2) -> CheckResult:
    """Output identical over every (P, S) divisor pair; cycles == F^n * F^s."""
    rng = np.random.default_rng(seed)
    bad = trials = 0
    for size in sizes:
        layer = _random_fc_layer(size, size, int(rng.integers(1 << 31)))
        for _ in range(vectors):
            v = BipolarBitVector.from_bits(rng.integers(0, 2, size).astype(bool))
            ref, _ = mvtu_execute(layer, v, MVTUConfig(1, 1))
            for p in divisors(size):
                for s in divisors(size):
                    out, cycles = mvtu_execute(layer, v, MVTUConfig(p, s))
                    trials += 1
                    bad += int(out != ref) + int(cycles != (size // p) * (size // s))
    small = _random_fc_layer(6, 4, seed)
    _, cycles = mvtu_execute(small, BipolarBitVector.ones(4), MVTUConfig(3, 2))
    bad += int(cycles != 4)
    return CheckResult("fold invariance", bad == 0, trials + 1, bad, f"6x4 P=3 S=2 -> {cycles} cycles")


# -- end to end ---------------------------------------------------------------

def _as_planar(out) -> np.ndarray:
    if isinstance(out, InterleavedFrame):
        return np.where(out.to_array(), 1, -1).transpose(2, 0, 1)
    if isinstance(out, BipolarBitVector):
        return unpack(out)
    if isinstance(out, FixedPointTensor):
        v = out.values
        return v.transpose(2, 0, 1) if v.ndim == 3 else v
    raise TypeError(type(out))


def random_network_input(topology, rng):
    """A random input in the form ``run_network`` expects, plus the oracle form."""
    first = topology.layers[0]
    if not first.binary_input:
        lo, hi = FixedPointTensor.value_range(first.input_bits, first.input_signed)
        img = rng.integers(lo, hi + 1, topology.input_shape)
        return FixedPointTensor(img, first.input_bits, signed=first.input_signed), img
    if first.kind == "fc":
        bits = rng.integers(0, 2, first.in_channels).astype(bool)
        return BipolarBitVector.from_bits(bits), np.where(bits, 1, -1)
    bits = rng.integers(0, 2, topology.input_shape).astype(bool)
    return InterleavedFrame.from_array(bits), np.where(bits, 1, -1)


@_timed
def check_end_to_end(name: str, inputs: int = 100, seed: int = 0) -> CheckResult:
    """Compiled network vs oracle, every layer bit-exact."""
    topo = builtin(name)
    trained = random_trained_network(topo, seed)
    net = compile_network(trained, name, topo)
    rng = np.random.default_rng(seed + 1)
    bad = 0
    for _ in range(inputs):
        x, xref = random_network_input(topo, rng)
        run = run_network(net, x)
        ref = oracle.forward_network(trained, xref)
        for got, want in zip(run.outputs, ref):
            got = _as_planar(got).reshape(-1)
            want = np.asarray(want).reshape(-1)
            bad += int(got.shape != want.shape or np.count_nonzero(got != want) > 0)
    return CheckResult(f"end-to-end {name}", bad == 0, inputs, bad, f"{len(topo.layers)} layers each")


# -- reference tables ---------------------------------------------------------

TABLE1 = {
    128: (134_794, 268_800),
    256: (335_114, 668_672),
    512: (932_362, 1_861_632),
    1024: (2_913_290, 5_820_416),
    2048: (10_020_874, 20_029_440),
    4096: (36_818_954, 73_613_312),
}

TABLE2_INTENSITY = {"sfc": 5970, "lfc": 51968}
CNV_OPS = 112.5e6

TABLE2_FOLDS = {
    "sfc-max": [13, 16, 16, 16],
    "sfc-fix": [12544, 16384, 16384, 2560],
    "lfc-max": [104, 128, 128, 128],
    "lfc-fix": [13312, 16384, 16384, 10240],
    "cnv-max": [8100, 7056, 5184, 7200, 5184, 4608, 8192, 8192, 1280],
    "cnv-fix": [16200, 14112, 10368, 14400, 10368, 9216, 16384, 16384, 1280],
}


@_timed
def check_table1() -> CheckResult:
    bad = []
    for w, (params, ops) in TABLE1.items():
        wl = count_ops_params(fc_network(784, [w, w, w], 10))
        if (wl.params, wl.ops) != (params, ops):
            bad.append(f"w={w}: {wl.params}/{wl.ops}")
    return CheckResult("table 1 params/ops", not bad, 2 * len(TABLE1), 2 * len(bad), "; ".join(bad))


@_timed
def check_table2() -> CheckResult:
    bad = []
    for name, want in TABLE2_INTENSITY.items():
        wl = count_ops_params(builtin(name))
        ai = wl.ops / wl.offchip_bytes
        if int(ai) != want:
            bad.append(f"{name} {ai:.2f}")
    cnv_ops = count_ops_params(builtin("cnv")).ops
    dev = (cnv_ops - CNV_OPS) / CNV_OPS
    if abs(dev) > 0.10:
        bad.append("cnv ops")
    detail = f"CNV ops {cnv_ops / 1e6:.2f} M vs 112.5 M ({dev:+.1%})"
    if bad:
        detail += "; " + ", ".join(bad)
    return CheckResult("table 2 intensity", not bad, 3, len(bad), detail)


# (prototype, quantity, reference value, relative tolerance)
TABLE3 = [
    ("sfc-fix", "fps", 12207, 0.01),
    ("sfc-max", "fps", 12_361_000, 0.02),
    ("lfc-max", "fps", 1_561_000, 0.02),
    ("sfc-max", "latency_us", 0.31, 0.03),
    ("lfc-max", "latency_us", 2.44, 0.01),
    ("sfc-fix", "latency_us", 240, 0.01),
    ("lfc-fix", "latency_us", 282, 0.01),
    ("cnv-max", "latency_us", 283, 0.05),
]


def table3_values(f_clk: float = 200e6) -> dict:
    out = {}
    for name, folds in TABLE2_FOLDS.items():
        m = PipelineModel.from_iis(folds)
        out[name] = {"fps": analytic_throughput(m, f_clk), "latency_us": analytic_latency(m, f_clk) * 1e6}
    return out


@_timed
def check_table3(f_clk: float = 200e6) -> CheckResult:
    vals = table3_values(f_clk)
    bad = []
    for name, qty, want, tol in TABLE3:
        got = vals[name][qty]
        if _rel(got, want) > tol:
            bad.append(f"{name} {qty} {got:.6g} vs {want}")
    return CheckResult("table 3 timing", not bad, len(TABLE3), len(bad), "; ".join(bad))


@_timed
def check_roofline() -> CheckResult:
    dev = ZU19EG
    p1, p8, p16 = (peak_compute(dev, b) for b in (1, 8, 16))
    alexnet = 0.75 * p1 / 1.4e9
    gpu = gpu_peak_reference()
    checks = [
        ("1-bit peak", _rel(p1, 66e12) <= 0.05),
        ("1:8 ratio", abs(p1 / p8 - 16) <= 1),
        ("1:16 ratio", abs(p1 / p16 - 53) <= 3),
        ("alexnet fps", _rel(alexnet, 35000) <= 0.02),
        ("gpu peak", _rel(gpu, 26e12) <= 0.05),
    ]
    bad = [n for n, ok in checks if not ok]
    detail = (f"peak {p1 / 1e12:.2f} TOPS, 1:8 {p1 / p8:.2f}, 1:16 {p1 / p16:.2f}, "
              f"AlexNet {alexnet:.0f} FPS, GPU {gpu / 1e12:.2f} TOPS")
    return CheckResult("roofline", not bad, len(checks), len(bad), detail)


@_timed
def check_rate_balance(fps: float = 9000, f_clk: float = 200e6) -> CheckResult:
    topo = fc_network(256, [], 256, name="fc256")
    cfg = solve_folding(topo, ThroughputTarget(fps, f_clk))
    achieved = cfg.achieved_fps(f_clk)
    ratio = achieved / fps
    ok = cfg.folds == [16384] and int(achieved) == 12207 and 1.25 <= ratio <= 1.40
    return CheckResult("rate balancing", ok, 1, int(not ok),
                       f"F={cfg.folds[0]}, {achieved:.0f} FPS, x{ratio:.3f}")


def random_topology(rng: np.random.Generator, name: str = "rand"):
    """A small random network: optional conv/pool front end, then fc layers."""
    from .topology import NetworkTopology

    layers = []
    if rng.random() < 0.5:
        ch = int(rng.integers(1, 4))
        size = int(rng.choice([4, 6, 8]))
        bits = int(rng.choice([1, 8]))
        out = int(rng.integers(1, 6))
        pad = int(rng.integers(0, 2))
        layers.append(conv(ch, out, size, pad=pad, input_bits=bits))
        h = size + 2 * pad - 2
        if h % 2 == 0 and rng.random() < 0.5:
            layers.append(maxpool(out, h))
            h //= 2
        n_in = h * h * out
    else:
        n_in = int(rng.integers(1, 200))
        if rng.random() < 0.3:
            layers.append(fc(n_in, int(rng.integers(1, 40)), input_bits=8, input_signed=bool(rng.random() < 0.5)))
            n_in = layers[-1].out_channels
    for _ in range(int(rng.integers(0, 3))):
        n_out = int(rng.integers(1, 80))
        layers.append(fc(n_in, n_out))
        n_in = n_out
    layers.append(fc(n_in, int(rng.integers(1, 12)), thresholded=bool(rng.random() < 0.5)))
    return NetworkTopology(name, tuple(layers))


def random_model(seed: int) -> ModelFile:
    """A compiled random network; roughly half keep their batchnorm and folding."""
    rng = np.random.default_rng(seed)
    topo = random_topology(rng, f"rand{seed}")
    trained = random_trained_network(topo, seed)
    net = compile_network(trained, topo.name, topo)
    bns = None
    if rng.random() < 0.5:
        net.folding = {"layers": [{"pe": 1, "simd": 1} for _ in topo.mvtu_layers]}
        net.options = {"seed": seed, "keep_batchnorm": True}
        bns = [t.bn if t.weights is not None else None for t in trained]
    return ModelFile(net, bns)


@_timed
def check_model_roundtrip(n: int = 100, seed: int = 0) -> CheckResult:
    bad = []
    for k in range(n):
        model = random_model(seed * 100_000 + k)
        data = dumps_model(model)
        back = loads_model(data)
        if back != model or dumps_model(back) != data:
            bad.append(k)
    empty = ModelFile(compile_network([], "empty"))
    if loads_model(dumps_model(empty)) != empty:
        bad.append("empty")
    return CheckResult("model round trip", not bad, n + 1, len(bad),
                       f"failing models {bad[:5]}" if bad else f"{n} random models byte-identical")


def corrupted_models(data: bytes) -> list[tuple[str, bytes, type]]:
    """(label, corrupted bytes, expected error class) for one valid model file."""
    first, _, rest = data.partition(b"\n")
    hlen_line, _, body = rest.partition(b"\n")
    hlen = int(hlen_line)
    header = body[:hlen]
    cases = [
        ("bad magic", b"XX" + data[2:], ModelFormatError),
        ("newer version", data.replace(first, first[:-1] + b"9", 1), VersionMismatchError),
        ("truncated blob", data[:-1], TruncatedFileError),
        ("truncated header", data[:len(first) + len(hlen_line) + 2 + hlen // 2], TruncatedFileError),
        ("header length off", first + b"\n" + str(hlen - 1).encode() + b"\n" + body, HeaderMismatchError),
        ("header length garbage", first + b"\nabc\n" + body, HeaderMismatchError),
        ("trailing bytes", data + b"\0", HeaderMismatchError),
    ]
    # widen one declared shape without moving the data
    import json

    hdr = json.loads(header)
    for rec in hdr["layers"]:
        for sec in rec["sections"]:
            if sec["name"] == "weights":
                sec["shape"][0] += 1
                break
        else:
            continue
        break
    else:
        return cases
    text = json.dumps(hdr, indent=1, sort_keys=True).encode()
    cases.append(("dimension mismatch", first + b"\n" + str(len(text)).encode() + b"\n" + text
                  + body[hlen:], HeaderMismatchError))
    return cases


@_timed
def check_model_corruption(seed: int = 0) -> CheckResult:
    data = dumps_model(compile_network(random_trained_network(builtin("sfc"), seed), "sfc", builtin("sfc")))
    bad = []
    cases = corrupted_models(data)
    for label, blob, err in cases:
        try:
            loads_model(blob)
        except err:
            continue
        except Exception as e:  # wrong class
            bad.append(f"{label}: {type(e).__name__}")
        else:
            bad.append(f"{label}: accepted")
    return CheckResult("model corruption", not bad, len(cases), len(bad),
                       "; ".join(bad) or f"{len(cases)} corruptions rejected with the right error")


@_timed
def check_pipeline_sim(vectors: int = 50, frames: int = 200, seed: int = 0,
                       f_clk: float = 200e6) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad, worst = [], 0.0
    for k in range(vectors):
        iis = rng.integers(1, 20_000, int(rng.integers(1, 12))).tolist()
        m = PipelineModel.from_iis(iis)
        rep = token_simulate(m, f_clk, frames)
        err = _rel(rep.fps, analytic_throughput(m, f_clk))
        worst = max(worst, err)
        if err > 0.01 or rep.latency_cycles != analytic_latency_cycles(m):
            bad.append(k)
    return CheckResult("pipeline simulation", not bad, vectors, len(bad),
                       f"worst FPS deviation {worst:.2e}, latency exact in {vectors - len(bad)}/{vectors}")


SUITES: dict[str, list[Callable[[], CheckResult]]] = {
    "thresholds": [check_threshold_theorem],
    "kernels": [check_xnor_exhaustive, check_xnor_random, check_fold_invariance],
    "pooling": [check_pooling],
    "lowering": [check_lowering],
    "folding": [check_fold_invariance, check_rate_balance],
    "modelio": [check_model_roundtrip, check_model_corruption],
    "streaming": [check_pipeline_sim],
    "tables": [check_table1, check_table2, check_table3, check_roofline, check_rate_balance],
}


def run_suite(name: str) -> list[CheckResult]:
    try:
        checks = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    return [c() for c in checks]
