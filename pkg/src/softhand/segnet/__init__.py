"""Encoder-decoder segmentation CNN: inference, training, quantization."""

from .network import (
    NetShape,
    SegNetWeights,
    ResourceLedger,
    ForwardResult,
    SegNetError,
    conv2d_3x3_same,
    maxpool_4x4,
    upsample_4x,
    concat_channels,
    forward,
    resource_ledger,
    conv_macs,
)
from .training import TrainConfig, TrainResult, train, bce_loss
from .quantize import (
    QuantizedWeights,
    quantize,
    dequantize,
    save_weights,
    load_weights,
)

__all__ = [
    "NetShape",
    "SegNetWeights",
    "ResourceLedger",
    "ForwardResult",
    "SegNetError",
    "conv2d_3x3_same",
    "maxpool_4x4",
    "upsample_4x",
    "concat_channels",
    "forward",
    "resource_ledger",
    "conv_macs",
    "TrainConfig",
    "TrainResult",
    "train",
    "bce_loss",
    "QuantizedWeights",
    "quantize",
    "dequantize",
    "save_weights",
    "load_weights",
]
