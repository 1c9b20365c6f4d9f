"""Tensorcore: dense float64 tensors with reverse-mode automatic differentiation.

Every operation builds a node holding its output array, its parent tensors and
a closure that maps the output adjoint to one adjoint per parent. ``backward``
walks the graph once in reverse topological order, accumulates gradients into
``requires_grad`` leaves and then frees the graph.

Broadcasting is limited to what the architecture needs: an operand whose
shape is a suffix of the other's (bias add, mask rows) and scalars.

FLOP convention (used by :func:`count_flops` and mirrored by
:func:`seglat.profiler.estimate_flops`): matmul ``2mkn``; elementwise
add/sub/mul/scale/mask-bias one per output element; ``sum``/``mean`` one per
input element; ``layer_norm`` 5, ``softmax`` 5 and ``gelu`` 8 per element;
shape ops are free.
"""

from __future__ import annotations

import contextlib
import logging
import math
from collections.abc import Callable, Iterator, Sequence
from contextvars import ContextVar
from typing import Any

import numpy as np
from scipy.special import ndtr

from seglat.errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    NonFiniteError,
    UsageError,
    VerificationError,
)

logger = logging.getLogger("seglat.tensorcore")

MASK_BIAS = -1e9

LAYER_NORM_FLOPS = 5
SOFTMAX_FLOPS = 5
GELU_FLOPS = 8

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_grad_enabled: ContextVar[bool] = ContextVar("seglat_grad_enabled", default=True)
_flop_counter: ContextVar[FlopCounter | None] = ContextVar("seglat_flop_counter", default=None)


# ---------------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------------


class Tensor:
    """An n-dimensional float64 array with optional gradient tracking.

    Args:
        data: Anything ``numpy.asarray`` accepts. Copied to a contiguous
            float64 array.
        requires_grad: Mark this tensor as a leaf that receives gradients.
        name: Optional label used in error messages and checkpoints.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data: Any, requires_grad: bool = False, *, name: str = "") -> None:
        arr = np.array(data, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"tensor {name or '<anonymous>'} contains NaN or Inf")
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._op = "leaf"

    # -- Introspection -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array."""
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        grad = self.requires_grad
        return f"Tensor(shape={self.shape}, op={self._op}{label}, requires_grad={grad})"

    # -- Operators -----------------------------------------------------------

    def __add__(self, other: Tensor | float) -> Tensor:
        return add(self, other)

    def __radd__(self, other: float) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor | float) -> Tensor:
        return sub(self, other)

    def __mul__(self, other: Tensor | float) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: float) -> Tensor:
        return mul(self, other)

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


def as_tensor(value: Tensor | np.ndarray | float) -> Tensor:
    """Wrap *value* as an untracked tensor unless it already is one."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


# ---------------------------------------------------------------------------
# Graph construction, grad mode and FLOP accounting
# ---------------------------------------------------------------------------


class FlopCounter:
    """Running FLOP tally, broken down by operation name."""

    def __init__(self) -> None:
        self.total = 0
        self.by_op: dict[str, int] = {}

    def add(self, op: str, flops: int) -> None:
        self.total += flops
        self.by_op[op] = self.by_op.get(op, 0) + flops


@contextlib.contextmanager
def count_flops() -> Iterator[FlopCounter]:
    """Tally the FLOPs of every operation executed inside the block."""
    counter = FlopCounter()
    token = _flop_counter.set(counter)
    try:
        yield counter
    finally:
        _flop_counter.reset(token)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording a graph."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def make_op(
    op: str,
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: BackwardFn,
    *,
    flops: int = 0,
) -> Tensor:
    """Create the output node of an operation.

    ``backward_fn`` receives the adjoint of the output and returns one adjoint
    (or ``None``) per parent, in order. Custom operations may be built with
    this function; the gradient checker treats them like any other op.
    """
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced NaN or Inf")
    counter = _flop_counter.get()
    if counter is not None and flops:
        counter.add(op, int(flops))

    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=np.float64)
    out.grad = None
    out.name = ""
    out._op = op
    track = _grad_enabled.get() and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or b.ndim == 0 or a.ndim == 0:
        return
    short, long = (a, b) if a.ndim < b.ndim else (b, a)
    if short.ndim <= long.ndim and long.shape[long.ndim - short.ndim :] == short.shape:
        return
    raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum *grad* over the leading axes that broadcasting added."""
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    reduced = grad.sum(axis=tuple(range(lead))) if lead > 0 else grad
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and reduced.shape[i] != 1)
    if keep:
        reduced = reduced.sum(axis=keep, keepdims=True)
    return reduced.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor | float, b: Tensor | float) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast("add", ta, tb)
    out = ta.data + tb.data

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)

    return make_op("add", out, (ta, tb), _backward, flops=out.size)


def sub(a: Tensor | float, b: Tensor | float) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", ta, tb)
    out = ta.data - tb.data

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, ta.shape), -_unbroadcast(g, tb.shape)

    return make_op("sub", out, (ta, tb), _backward, flops=out.size)


def mul(a: Tensor | float, b: Tensor | float) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", ta, tb)
    out = ta.data * tb.data

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * tb.data, ta.shape), _unbroadcast(g * ta.data, tb.shape)

    return make_op("mul", out, (ta, tb), _backward, flops=out.size)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a Python constant."""
    out = x.data * factor

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * factor,)

    return make_op("scale", out, (x,), _backward, flops=out.size)


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = np.asarray(x.data.sum())

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_op("sum", out, (x,), _backward, flops=x.size)


def mean(x: Tensor, axis: int) -> Tensor:
    """Mean over one axis (the axis is removed)."""
    axis = _normalize_axis(axis, x.ndim)
    n = x.shape[axis]
    out = x.data.mean(axis=axis)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy(),)

    return make_op("mean", out, (x,), _backward, flops=x.size)


# ---------------------------------------------------------------------------
# Shape operations (free)
# ---------------------------------------------------------------------------


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from exc

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(x.shape),)

    return make_op("reshape", out, (x,), _backward)


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"permute: {axes} is not a permutation of rank {x.ndim}")
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(x.data, axes))

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.transpose(g, inverse),)

    return make_op("permute", out, (x,), _backward)


def swap_last(x: Tensor) -> Tensor:
    """Transpose the last two axes."""
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return permute(x, axes)


def expand(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Broadcast *x* to *shape* by repeating it along new leading axes."""
    shape = tuple(shape)
    if shape[len(shape) - x.ndim :] != x.shape:
        raise DimensionError(f"expand: {x.shape} is not a suffix of {shape}")
    out = np.broadcast_to(x.data, shape).copy()

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (_unbroadcast(g, x.shape),)

    return make_op("expand", out, (x,), _backward)


def take(x: Tensor, index: int, axis: int) -> Tensor:
    """Select one position along *axis* (the axis is removed)."""
    axis = _normalize_axis(axis, x.ndim)
    out = np.take(x.data, index, axis=axis)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        sl: list[Any] = [slice(None)] * x.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return make_op("take", out, (x,), _backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise UsageError("concat needs at least one tensor")
    axis = _normalize_axis(axis, tensors[0].ndim)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, bounds, axis=axis)

    return make_op("concat", out, tuple(tensors), _backward)


# ---------------------------------------------------------------------------
# Linear algebra and nonlinearities
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``a`` is ``(..., m, k)``. ``b`` is either ``(k, n)`` (shared across the
    leading axes of ``a``) or ``(..., k, n)`` with the same leading axes.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul leading extents differ: {a.shape} x {b.shape}")

    out = np.matmul(a.data, b.data)
    m, k = a.shape[-2], a.shape[-1]
    n = b.shape[-1]
    batch = math.prod(a.shape[:-2])

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            gb = np.matmul(a.data.reshape(-1, k).T, g.reshape(-1, n))
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return make_op("matmul", out, (a, b), _backward, flops=2 * batch * m * k * n)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along *axis* (row max subtracted first)."""
    axis = _normalize_axis(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op("softmax", y, (x,), _backward, flops=SOFTMAX_FLOPS * y.size)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gain * x_hat + bias``."""
    if eps <= 0:
        raise ConfigurationError(f"layer_norm eps must be > 0, got {eps}")
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match last extent {width}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    x_hat = centered * rstd
    out = x_hat * gain.data + bias.data

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d_hat = g * gain.data
        dx = rstd * (
            d_hat
            - d_hat.mean(axis=-1, keepdims=True)
            - x_hat * (d_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, width)
        d_gain = (flat_g * x_hat.reshape(-1, width)).sum(axis=0)
        d_bias = flat_g.sum(axis=0)
        return dx, d_gain, d_bias

    return make_op("layer_norm", out, (x, gain, bias), _backward, flops=LAYER_NORM_FLOPS * x.size)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF."""
    cdf = ndtr(x.data)
    out = x.data * cdf

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
        return (g * (cdf + x.data * pdf),)

    return make_op("gelu", out, (x,), _backward, flops=GELU_FLOPS * x.size)


def add_mask_bias(scores: Tensor, key_mask: np.ndarray) -> Tensor:
    """Add :data:`MASK_BIAS` to attention scores at masked-out keys.

    ``scores`` is ``(..., heads, n_q, n_c)`` and ``key_mask`` is a boolean
    ``(..., n_c)`` array (``True`` = real key) sharing the leading axes.
    """
    key_mask = np.asarray(key_mask, dtype=bool)
    lead = scores.shape[:-3]
    if key_mask.shape != lead + (scores.shape[-1],):
        raise DimensionError(
            f"mask shape {key_mask.shape} does not match scores {scores.shape}"
        )
    bias = np.where(key_mask, 0.0, MASK_BIAS)[..., None, None, :]
    out = scores.data + bias

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g,)

    return make_op("mask_bias", out, (scores,), _backward, flops=out.size)


def cross_entropy(logits: Tensor, labels: Sequence[int] | np.ndarray) -> Tensor:
    """Mean negative log-likelihood of *labels* under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects (batch, classes) logits, got {logits.shape}")
    batch, n_classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (batch,):
        raise DimensionError(f"cross_entropy: {labels.shape[0]} labels for batch of {batch}")
    bad = np.flatnonzero((labels < 0) | (labels >= n_classes))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"label {int(labels[i])} at index {i} outside [0, {n_classes})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(batch)
    out = np.asarray(-log_p[rows, labels].mean())

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.exp(log_p)
        grad[rows, labels] -= 1.0
        return (grad * (g / batch),)

    return make_op("cross_entropy", out, (logits,), _backward)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable tracked leaf."""
    if loss.size != 1 or loss.ndim != 0:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("backward on a tensor that was not produced by tracked operations")

    order = _topological_order(loss)
    adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = adjoints.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = adjoints.get(id(parent))
            adjoints[id(parent)] = pg if prev is None else prev + pg

    # Free the graph.
    for node in order:
        if node._backward is not None:
            node._parents = ()
            node._backward = None


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
) -> float:
    """Compare analytic gradients with central finite differences.

    Args:
        f: Zero-argument callable that rebuilds the scalar loss from
            *params* (closed over) on every call.
        params: Leaves whose elements are perturbed.
        step: Finite-difference step.

    Returns:
        ``max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`` over
        every element of every parameter.
    """
    if step <= 0:
        raise ConfigurationError(f"grad_check step must be > 0, got {step}")

    def _value() -> float:
        with no_grad():
            return f().item()

    base = _value()
    if _value() != base:
        raise VerificationError("loss function is not deterministic")

    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a_grad in zip(params, analytic):
        original = p.data
        work = original.copy()
        p.data = work
        flat = work.reshape(-1)
        try:
            for i in range(flat.size):
                x0 = flat[i]
                flat[i] = x0 + step
                plus = _value()
                flat[i] = x0 - step
                minus = _value()
                flat[i] = x0
                numeric = (plus - minus) / (2.0 * step)
                analytic_i = a_grad.reshape(-1)[i]
                denom = max(abs(analytic_i), abs(numeric), 1e-8)
                worst = max(worst, abs(analytic_i - numeric) / denom)
        finally:
            p.data = original
        p.zero_grad()

    logger.debug("grad_check over %d tensors: max relative error %.3e", len(params), worst)
    return worst
