"""Exception hierarchy shared by the compiler, kernels and file formats."""


class BNNError(Exception):
    """Base class for every error raised by bnnstream."""


class DimensionError(BNNError, ValueError):
    """Shapes, lengths or fold factors do not agree."""


class CompileError(BNNError, ValueError):
    """A trained layer cannot be turned into an executable one."""

    def __init__(self, message, layer=None, neuron=None):
        where = []
        if layer is not None:
            where.append(f"layer {layer}")
        if neuron is not None:
            where.append(f"neuron {neuron}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.layer = layer
        self.neuron = neuron


class AccumulatorOverflowError(BNNError, OverflowError):
    """An accumulator left the range of its declared bit width."""


class InfeasibleTargetError(BNNError, ValueError):
    """No folding configuration reaches the requested frame rate."""

    def __init__(self, message, max_fps):
        super().__init__(f"{message} (max achievable {max_fps:.6g} FPS)")
        self.max_fps = max_fps


class ModelFormatError(BNNError):
    """Base class for model-file decoding problems."""


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedFileError(ModelFormatError):
    pass


class HeaderMismatchError(ModelFormatError, DimensionError):
    """Header dimensions disagree with the byte counts found in the blob."""


class DatasetFormatError(BNNError, ValueError):
    pass
