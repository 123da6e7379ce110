"""Streaming time-frequency neural speech codec runtime.

Causal STFT front end, ConvNeXt/attention encoder and decoder, a 6-stage
residual vector quantizer at 1 kbps per stage, the VOC1 wire format, loss
functions for training-objective checks, and analytic complexity
accounting.
"""

from .bitstream import StreamHeader, pack, strip_layers, unpack
from .complexity import count_graph, count_params, latency_budget
from .dsp import DEFAULT_STFT, StftConfig, build_features, istft, spectrum_from_head, stft
from .model import (
    DEFAULT_CONFIG,
    ModelConfig,
    codec_roundtrip,
    decode,
    encode,
    encode_codes,
    init_weights,
    streaming_session,
)
from .nn import WeightStore
from .rvq import CodebookSet, dequantize, fit_codebooks, quantize

__all__ = [
    "CodebookSet", "DEFAULT_CONFIG", "DEFAULT_STFT", "ModelConfig", "StftConfig", "StreamHeader",
    "WeightStore", "build_features", "codec_roundtrip", "count_graph", "count_params", "decode",
    "dequantize", "encode", "encode_codes", "fit_codebooks", "init_weights", "istft",
    "latency_budget", "pack", "quantize", "spectrum_from_head", "stft", "streaming_session",
    "strip_layers", "unpack",
]
