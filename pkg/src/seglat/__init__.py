"""seglat: segmented-latent transformer for multichannel physiological signals.

Tokens are split into contiguous segments; each segment owns one latent
state that cross-attends only to its own tokens, and the segment states then
exchange information through self-attention.

Usage::

    from seglat import (
        StftConfig, TokenizerConfig, ModelConfig, Recording,
        build_psd_input, init_model, predict,
    )

    rec = Recording(samples=hbo, sample_rate_hz=10.0, label=0)   # C x L
    image = build_psd_input(rec, StftConfig())                   # 224 x 224 x C
    tok = TokenizerConfig()
    params = init_model(ModelConfig(), tok.token_width(image.shape[-1], image.shape[:2]))
    label, probs = predict(params, image, tok, n_segments=32)
"""

from seglat.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from seglat.config import RunConfig, build_run_config
from seglat.dataset import DatasetManifest, ManifestEntry, generate_synthetic_dataset
from seglat.errors import (
    ConfigurationError,
    ContractViolation,
    DataError,
    DimensionError,
    FormatError,
    NonFiniteError,
    RangeError,
    SeglatError,
    TrainingAborted,
    UnsupportedInputError,
    UsageError,
    VerificationError,
)
from seglat.metrics import compute_metrics, metrics_from_confusion
from seglat.model import ModelConfig, ModelParams, forward, init_model, predict
from seglat.profiler import benchmark, count_params, estimate_flops
from seglat.reports import CostReport, EpochRecord, Metrics
from seglat.signals import (
    Recording,
    StftConfig,
    build_psd_input,
    build_waveform_input,
    compute_psd_spectrogram,
    resize_bilinear,
    stack_fusion,
)
from seglat.tensorcore import Tensor, backward, count_flops, grad_check, no_grad
from seglat.tokenizer import TokenizerConfig, segment, tokenize
from seglat.train import TrainConfig, adamw_step, evaluate, lr_at_epoch, train

__version__ = "0.1.0"

__all__ = [
    # Tensor engine
    "Tensor",
    "backward",
    "grad_check",
    "no_grad",
    "count_flops",
    # Signals
    "Recording",
    "StftConfig",
    "compute_psd_spectrogram",
    "resize_bilinear",
    "build_waveform_input",
    "build_psd_input",
    "stack_fusion",
    # Data
    "DatasetManifest",
    "ManifestEntry",
    "generate_synthetic_dataset",
    # Tokens and model
    "TokenizerConfig",
    "tokenize",
    "segment",
    "ModelConfig",
    "ModelParams",
    "init_model",
    "forward",
    "predict",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    # Training
    "TrainConfig",
    "lr_at_epoch",
    "adamw_step",
    "train",
    "evaluate",
    "compute_metrics",
    "metrics_from_confusion",
    # Profiling
    "count_params",
    "estimate_flops",
    "benchmark",
    # Records and config
    "Metrics",
    "EpochRecord",
    "CostReport",
    "RunConfig",
    "build_run_config",
    # Errors
    "SeglatError",
    "DimensionError",
    "ConfigurationError",
    "DataError",
    "UnsupportedInputError",
    "RangeError",
    "FormatError",
    "UsageError",
    "VerificationError",
    "ContractViolation",
    "NonFiniteError",
    "TrainingAborted",
]
