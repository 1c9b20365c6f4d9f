"""Segmented-latent transformer.

Every segment owns one latent state; all states start from the shared
learnable seed. Each layer runs per-segment cross-attention (segments are
batch elements, each latent attending only to its own tokens) followed by
``R`` self-attention blocks across the segment states. The final states are
pooled, normalized and projected to class logits.

Setting ``ModelConfig.num_latents`` switches to the unsegmented baseline:
an ``M x d`` latent array attending to all tokens at once.

Parameter names::

    latent_seed | latents
    layers.{i}.cross.{q_norm,ctx_norm,ffn_norm}.{gain,bias}
    layers.{i}.cross.{wq,wk,wv,wo,bo}
    layers.{i}.cross.ffn.{w1,b1,w2,b2}
    layers.{i}.self.{j}.{norm,ffn_norm}.{gain,bias}
    layers.{i}.self.{j}.{wq,wk,wv,wo,bo}
    layers.{i}.self.{j}.ffn.{w1,b1,w2,b2}
    head.norm.{gain,bias}, head.w, head.b
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Mapping
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import softmax as np_softmax
from scipy.stats import truncnorm

from seglat import tensorcore as tc
from seglat.errors import ConfigurationError, ContractViolation, DimensionError
from seglat.seeding import substream
from seglat.tensorcore import Tensor
from seglat.tokenizer import SegmentedTokens, TokenizerConfig, segment, tokenize

logger = logging.getLogger("seglat.model")

INIT_STD = 0.02


class ModelConfig(BaseModel):
    """Architecture hyperparameters; defaults follow the reference table."""

    model_config = ConfigDict(extra="forbid")

    depth: int = Field(default=4, ge=0)
    latent_dim: int = Field(default=128, ge=1)
    cross_heads: int = Field(default=1, ge=1)
    cross_head_dim: int = Field(default=64, ge=1)
    self_heads: int = Field(default=8, ge=1)
    self_head_dim: int = Field(default=64, ge=1)
    self_per_cross: int = Field(default=8, ge=0)
    n_classes: int = Field(default=3, ge=1)
    ffn_multiplier: int = Field(default=1, ge=1)
    pooling: Literal["mean", "last"] = "mean"
    num_latents: int | None = Field(default=None, ge=1)
    norm_eps: float = Field(default=1e-5, gt=0)

    @property
    def segmented(self) -> bool:
        return self.num_latents is None

    @property
    def cross_inner(self) -> int:
        return self.cross_heads * self.cross_head_dim

    @property
    def self_inner(self) -> int:
        return self.self_heads * self.self_head_dim

    @property
    def ffn_hidden(self) -> int:
        return self.ffn_multiplier * self.latent_dim


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


def parameter_shapes(cfg: ModelConfig, token_width: int) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map of every learnable tensor."""
    d, h = cfg.latent_dim, cfg.ffn_hidden
    shapes: dict[str, tuple[int, ...]] = {}
    if cfg.segmented:
        shapes["latent_seed"] = (d,)
    else:
        shapes["latents"] = (cfg.num_latents or 1, d)

    def _norm(prefix: str, width: int) -> None:
        shapes[f"{prefix}.gain"] = (width,)
        shapes[f"{prefix}.bias"] = (width,)

    def _attention(prefix: str, ctx_width: int, inner: int) -> None:
        shapes[f"{prefix}.wq"] = (d, inner)
        shapes[f"{prefix}.wk"] = (ctx_width, inner)
        shapes[f"{prefix}.wv"] = (ctx_width, inner)
        shapes[f"{prefix}.wo"] = (inner, d)
        shapes[f"{prefix}.bo"] = (d,)

    def _ffn(prefix: str) -> None:
        _norm(f"{prefix}.ffn_norm", d)
        shapes[f"{prefix}.ffn.w1"] = (d, h)
        shapes[f"{prefix}.ffn.b1"] = (h,)
        shapes[f"{prefix}.ffn.w2"] = (h, d)
        shapes[f"{prefix}.ffn.b2"] = (d,)

    for i in range(cfg.depth):
        cross = f"layers.{i}.cross"
        _norm(f"{cross}.q_norm", d)
        _norm(f"{cross}.ctx_norm", token_width)
        _attention(cross, token_width, cfg.cross_inner)
        _ffn(cross)
        for j in range(cfg.self_per_cross):
            blk = f"layers.{i}.self.{j}"
            _norm(f"{blk}.norm", d)
            _attention(blk, d, cfg.self_inner)
            _ffn(blk)

    _norm("head.norm", d)
    shapes["head.w"] = (d, cfg.n_classes)
    shapes["head.b"] = (cfg.n_classes,)
    return shapes


class ModelParams(Mapping[str, Tensor]):
    """Named learnable tensors of one model, in definition order."""

    def __init__(self, cfg: ModelConfig, token_width: int, tensors: dict[str, Tensor]) -> None:
        expected = parameter_shapes(cfg, token_width)
        if list(tensors) != list(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ConfigurationError(f"parameter names mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {tensors[name].shape}")
        self.cfg = cfg
        self.token_width = token_width
        self._tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def block(self, prefix: str) -> dict[str, Tensor]:
        """Tensors under ``prefix.`` keyed by their local name."""
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self._tensors.items() if k.startswith(prefix + ".")}

    def n_elements(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def copy(self) -> ModelParams:
        """Detached deep copy (new leaves, no gradients)."""
        tensors = {k: Tensor(v.data, requires_grad=True, name=k) for k, v in self._tensors.items()}
        return ModelParams(self.cfg, self.token_width, tensors)


def _initial_value(name: str, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "gain":
        return np.ones(shape)
    if leaf == "bias" or leaf.startswith("b"):
        return np.zeros(shape)
    return truncnorm.rvs(-2.0, 2.0, scale=INIT_STD, size=shape, random_state=rng)


def init_model(cfg: ModelConfig, token_width: int, seed: int = 0) -> ModelParams:
    """Truncated-normal (std 0.02) weights, zero biases, unit norm gains."""
    if token_width < 1:
        raise ConfigurationError(f"token width must be >= 1, got {token_width}")
    rng = substream(seed, "init")
    tensors = {
        name: Tensor(_initial_value(name, shape, rng), requires_grad=True, name=name)
        for name, shape in parameter_shapes(cfg, token_width).items()
    }
    params = ModelParams(cfg, token_width, tensors)
    logger.debug(
        "Initialized %d parameters (C'=%d, seed=%d)", params.n_elements(), token_width, seed
    )
    return params


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------


def _split_heads(x: Tensor, heads: int, head_dim: int) -> Tensor:
    # (..., n, heads*dh) -> (..., heads, n, dh)
    lead = x.shape[:-1]
    x = tc.reshape(x, lead + (heads, head_dim))
    k = len(lead) - 1
    axes = list(range(k)) + [k + 1, k, k + 2]
    return tc.permute(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    # (..., heads, n, dh) -> (..., n, heads*dh)
    k = x.ndim - 3
    axes = list(range(k)) + [k + 1, k, k + 2]
    x = tc.permute(x, axes)
    return tc.reshape(x, x.shape[:-2] + (x.shape[-2] * x.shape[-1],))


def feedforward(x: Tensor, block: Mapping[str, Tensor], eps: float) -> Tensor:
    """Pre-norm GELU MLP with residual."""
    h = tc.layer_norm(x, block["ffn_norm.gain"], block["ffn_norm.bias"], eps)
    h = tc.gelu(tc.add(tc.matmul(h, block["ffn.w1"]), block["ffn.b1"]))
    h = tc.add(tc.matmul(h, block["ffn.w2"]), block["ffn.b2"])
    return tc.add(x, h)


def attend(
    queries: Tensor,
    context: Tensor | None,
    mask: np.ndarray | None,
    block: Mapping[str, Tensor],
    *,
    heads: int,
    head_dim: int,
    eps: float = 1e-5,
) -> Tensor:
    """One pre-norm attention block followed by its feedforward block.

    Args:
        queries: ``(..., n_q, d)`` latent states.
        context: ``(..., n_c, d_ctx)`` keys/values source, or ``None`` for
            self-attention over *queries*.
        mask: Boolean ``(..., n_c)``, ``True`` for real context rows.
        block: Block tensors by local name (see module docstring).
        heads: Number of attention heads.
        head_dim: Width of each head.

    Returns:
        Updated ``(..., n_q, d)`` states.
    """
    if context is None:
        xn = tc.layer_norm(queries, block["norm.gain"], block["norm.bias"], eps)
        cn = xn
    else:
        xn = tc.layer_norm(queries, block["q_norm.gain"], block["q_norm.bias"], eps)
        cn = tc.layer_norm(context, block["ctx_norm.gain"], block["ctx_norm.bias"], eps)

    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != cn.shape[:-1]:
            raise DimensionError(f"mask shape {mask.shape} does not match context {cn.shape}")
        if not np.all(mask.any(axis=-1)):
            raise ContractViolation("attention context has no unmasked rows")

    q = _split_heads(tc.matmul(xn, block["wq"]), heads, head_dim)
    k = _split_heads(tc.matmul(cn, block["wk"]), heads, head_dim)
    v = _split_heads(tc.matmul(cn, block["wv"]), heads, head_dim)

    scores = tc.scale(tc.matmul(q, tc.swap_last(k)), 1.0 / math.sqrt(head_dim))
    if mask is not None:
        scores = tc.add_mask_bias(scores, mask)
    weights = tc.softmax(scores, axis=-1)
    attended = _merge_heads(tc.matmul(weights, v))

    out = tc.add(tc.matmul(attended, block["wo"]), block["bo"])
    x = tc.add(queries, out)
    return feedforward(x, block, eps)


# ---------------------------------------------------------------------------
# Forward / predict
# ---------------------------------------------------------------------------


def forward_batch(params: ModelParams, segments: np.ndarray, mask: np.ndarray) -> Tensor:
    """Logits ``(B, n_classes)`` for a batch of segmented inputs.

    Args:
        params: Model parameters.
        segments: ``(B, S, n_s, C')`` token segments.
        mask: ``(B, S, n_s)`` real-token mask.
    """
    cfg = params.cfg
    segments = np.asarray(segments, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if segments.ndim != 4:
        raise DimensionError(f"segments must be (B, S, n_s, C'), got {segments.shape}")
    if mask.shape != segments.shape[:3]:
        raise ContractViolation(f"mask {mask.shape} does not match segments {segments.shape}")
    if segments.shape[-1] != params.token_width:
        raise DimensionError(
            f"token width {segments.shape[-1]} != model token width {params.token_width}"
        )
    batch, n_seg = segments.shape[:2]
    d = cfg.latent_dim
    tokens = Tensor(segments)

    if cfg.segmented:
        # the shared seed, repeated as one query per segment
        state = tc.expand(params["latent_seed"], (batch, n_seg, 1, d))
        rows = n_seg
    else:
        if n_seg != 1:
            raise ConfigurationError(f"the unsegmented baseline expects S=1 inputs, got S={n_seg}")
        rows = cfg.num_latents or 1
        state = tc.expand(params["latents"], (batch, 1, rows, d))

    for i in range(cfg.depth):
        if i > 0:
            state = tc.reshape(state, (batch, n_seg, -1, d))
        state = attend(
            state,
            tokens,
            mask,
            params.block(f"layers.{i}.cross"),
            heads=cfg.cross_heads,
            head_dim=cfg.cross_head_dim,
            eps=cfg.norm_eps,
        )
        state = tc.reshape(state, (batch, rows, d))
        for j in range(cfg.self_per_cross):
            state = attend(
                state,
                None,
                None,
                params.block(f"layers.{i}.self.{j}"),
                heads=cfg.self_heads,
                head_dim=cfg.self_head_dim,
                eps=cfg.norm_eps,
            )

    state = tc.reshape(state, (batch, rows, d))
    if cfg.pooling == "mean":
        pooled = tc.mean(state, axis=1)
    else:
        pooled = tc.take(state, rows - 1, axis=1)
    pooled = tc.layer_norm(pooled, params["head.norm.gain"], params["head.norm.bias"], cfg.norm_eps)
    return tc.add(tc.matmul(pooled, params["head.w"]), params["head.b"])


def forward(params: ModelParams, seg: SegmentedTokens) -> Tensor:
    """Logits ``(n_classes,)`` for one segmented input."""
    logits = forward_batch(params, seg.segments[None], seg.mask[None])
    return tc.reshape(logits, (params.cfg.n_classes,))


def segment_input(
    data: np.ndarray, tokenizer: TokenizerConfig, n_segments: int, cfg: ModelConfig
) -> SegmentedTokens:
    """Tokenize and segment *data*; the unsegmented baseline always uses one segment."""
    return segment(tokenize(data, tokenizer), n_segments if cfg.segmented else 1)


def predict(
    params: ModelParams,
    data: np.ndarray,
    tokenizer: TokenizerConfig,
    n_segments: int,
) -> tuple[int, np.ndarray]:
    """Class index (lowest index wins ties) and class probabilities."""
    seg = segment_input(data, tokenizer, n_segments, params.cfg)
    with tc.no_grad():
        logits = forward(params, seg).data
    probs = np_softmax(logits)
    return int(np.argmax(logits)), probs
