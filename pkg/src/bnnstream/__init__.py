"""Compile, run and size streaming binarized neural network accelerators."""

from .bitcore import (
    BipolarBitVector,
    BitMatrix,
    FixedPointTensor,
    InterleavedFrame,
    pack,
    popcount,
    unpack,
    xnor_popcount,
)
from .compiler import (
    BatchNormParams,
    CompiledLayer,
    CompiledNetwork,
    CompiledPool,
    TrainedLayer,
    compile_layer,
    compile_network,
    derive_threshold,
    random_trained_network,
)
from .errors import (
    AccumulatorOverflowError,
    BNNError,
    CompileError,
    DatasetFormatError,
    DimensionError,
    HeaderMismatchError,
    InfeasibleTargetError,
    ModelFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .folding import FoldingConfig, LayerFold, ThroughputTarget, fold_of, solve_folding
from .kernels import MVTUConfig, mvtu_execute, run_network
from .modelio import ModelFile, load_model, save_model
from .streamsim import PipelineModel, analytic_latency, analytic_throughput, token_simulate
from .topology import LayerSpec, NetworkTopology

__version__ = "0.1.0"
