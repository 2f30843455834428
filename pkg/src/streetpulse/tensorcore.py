"""A small deterministic layer library for the emotion CNN.

Tensors are numpy arrays. Layers work on single samples (``C x H x W`` or a
vector) as well as batches with a leading sample axis. Everything defaults
to float32; float64 inputs stay float64, which is what gradient checking
uses.

Forward accumulation in ``conv2d_forward`` and ``dense_forward`` runs in a
fixed order (input channel, then kernel row, then kernel column, ascending,
into one accumulator) so results are reproducible bit for bit and match a
naive loop exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

__all__ = [
    "LayerSpec",
    "ModelWeights",
    "WeightsFormatError",
    "GradCheckReport",
    "conv2d_forward",
    "conv2d_backward",
    "relu_forward",
    "relu_backward",
    "maxpool2_forward",
    "maxpool2_backward",
    "dense_forward",
    "dense_backward",
    "softmax",
    "softmax_backward",
    "cross_entropy",
    "cross_entropy_backward",
    "param_shapes",
    "output_shape",
    "init_weights",
    "forward",
    "backward",
    "loss_and_grads",
    "sgd_step",
    "zeros_like_weights",
    "gradient_check",
    "network_gradient_check",
    "save_weights",
    "load_weights",
]

LAYER_KINDS = ("conv2d", "relu", "maxpool2", "flatten", "dense", "softmax")
_KIND_TAGS = {kind: tag for tag, kind in enumerate(LAYER_KINDS, start=1)}
_TAG_KINDS = {tag: kind for kind, tag in _KIND_TAGS.items()}
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a sequential network.

    ``shape`` holds the kind-specific extents: ``(c_in, c_out, k)`` for
    conv2d, ``(n_in, n_out)`` for dense, and nothing for the rest.
    """

    kind: str
    shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        expected = {"conv2d": 3, "dense": 2}.get(self.kind, 0)
        if len(self.shape) != expected or any(int(s) < 1 for s in self.shape):
            raise ValueError(f"{self.kind} layer needs {expected} positive extents, got {self.shape}")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @classmethod
    def conv2d(cls, c_in: int, c_out: int, k: int) -> "LayerSpec":
        return cls("conv2d", (c_in, c_out, k))

    @classmethod
    def dense(cls, n_in: int, n_out: int) -> "LayerSpec":
        return cls("dense", (n_in, n_out))


# Per-layer tuple of parameter arrays (kernel/weight, bias); empty for
# parameterless layers.
ModelWeights = list


class WeightsFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# layer primitives


def _batched(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise ValueError(f"expected a {ndim}-D tensor or a batch of them, got shape {x.shape}")


def _float(x) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float32)
    return x


@numba.njit(cache=True)
def _conv_accumulate(x, k, b):
    n_batch, n_in, height, width = x.shape
    n_out = k.shape[0]
    size = k.shape[2]
    out_h = height - size + 1
    out_w = width - size + 1
    out = np.zeros((n_batch, n_out, out_h, out_w), dtype=x.dtype)
    for n in range(n_batch):
        for o in range(n_out):
            acc = out[n, o]
            for c in range(n_in):
                for i in range(size):
                    for j in range(size):
                        w = k[o, c, i, j]
                        for y in range(out_h):
                            for xx in range(out_w):
                                acc[y, xx] += x[n, c, y + i, xx + j] * w
            bo = b[o]
            for y in range(out_h):
                for xx in range(out_w):
                    acc[y, xx] += bo
    return out


@numba.njit(cache=True)
def _dense_accumulate(x, w_t, b):
    n_batch, n_in = x.shape
    n_out = w_t.shape[1]
    out = np.zeros((n_batch, n_out), dtype=x.dtype)
    for n in range(n_batch):
        acc = out[n]
        for j in range(n_in):
            xj = x[n, j]
            for m in range(n_out):
                acc[m] += xj * w_t[j, m]
        for m in range(n_out):
            acc[m] += b[m]
    return out


def conv2d_forward(x, kernels, bias) -> np.ndarray:
    """Valid, stride-1 cross-correlation.

    ``out[o, y, x] = bias[o] + sum_{c,i,j} x[c, y+i, x+j] * kernels[o, c, i, j]``
    """
    x, single = _batched(_float(x), 3)
    dtype = x.dtype
    kernels = np.ascontiguousarray(kernels, dtype=dtype)
    bias = np.ascontiguousarray(bias, dtype=dtype)
    if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
        raise ValueError(f"kernels must be C_out x C_in x K x K, got {kernels.shape}")
    n_out, n_in, size, _ = kernels.shape
    if x.shape[1] != n_in:
        raise ValueError(f"input has {x.shape[1]} channels, kernels expect {n_in}")
    if bias.shape != (n_out,):
        raise ValueError(f"bias shape {bias.shape} does not match {n_out} output channels")
    if size > x.shape[2] or size > x.shape[3]:
        raise ValueError(f"kernel {size}x{size} larger than input {x.shape[2]}x{x.shape[3]}")
    out = _conv_accumulate(np.ascontiguousarray(x), kernels, bias)
    return out[0] if single else out


def conv2d_backward(grad_out, x, kernels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of ``conv2d_forward`` w.r.t. input, kernels and bias."""
    x, single = _batched(_float(x), 3)
    grad_out, _ = _batched(np.asarray(grad_out, dtype=x.dtype), 3)
    kernels = np.asarray(kernels, dtype=x.dtype)
    n_out, n_in, size, _ = kernels.shape
    out_h, out_w = x.shape[2] - size + 1, x.shape[3] - size + 1
    if grad_out.shape != (x.shape[0], n_out, out_h, out_w):
        raise ValueError(f"grad_out shape {grad_out.shape} inconsistent with the forward call")
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    grad_kernels = np.empty_like(kernels)
    grad_x = np.zeros_like(x)
    for i in range(size):
        for j in range(size):
            patch = x[:, :, i : i + out_h, j : j + out_w]
            grad_kernels[:, :, i, j] = np.tensordot(grad_out, patch, axes=([0, 2, 3], [0, 2, 3]))
            back = np.tensordot(grad_out, kernels[:, :, i, j], axes=([1], [0]))
            grad_x[:, :, i : i + out_h, j : j + out_w] += back.transpose(0, 3, 1, 2)
    return (grad_x[0] if single else grad_x), grad_kernels, grad_bias


def relu_forward(x) -> np.ndarray:
    x = _float(x)
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(grad_out, x) -> np.ndarray:
    # subgradient at exactly 0 is 0
    x = np.asarray(x)
    return np.where(x > 0, grad_out, 0).astype(np.result_type(grad_out, x.dtype), copy=False)


def maxpool2_forward(x) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling, stride 2.

    Returns the pooled tensor and, per output cell, the row-major position
    (0..3) of the winning input inside its window. Ties go to the first.
    """
    x, single = _batched(_float(x), 3)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even extents, got {h}x{w}")
    windows = _pool_windows(x)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    if single:
        return out[0], idx[0]
    return out, idx


def _pool_windows(x: np.ndarray) -> np.ndarray:
    *lead, h, w = x.shape
    nd = len(lead)
    perm = tuple(range(nd)) + (nd, nd + 2, nd + 1, nd + 3)
    return x.reshape(*lead, h // 2, 2, w // 2, 2).transpose(perm).reshape(*lead, h // 2, w // 2, 4)


def _pool_gather(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(_pool_windows(x), idx[..., None], axis=-1)[..., 0]


def maxpool2_backward(grad_out, indices) -> np.ndarray:
    grad_out = np.asarray(grad_out)
    indices = np.asarray(indices)
    if grad_out.shape != indices.shape:
        raise ValueError("grad_out and indices shapes differ")
    onehot = indices[..., None] == np.arange(4)
    windows = np.where(onehot, grad_out[..., None], 0).astype(grad_out.dtype, copy=False)
    *lead, ho, wo, _ = windows.shape
    windows = windows.reshape(*lead, ho, wo, 2, 2)
    nd = len(lead)
    perm = tuple(range(nd)) + (nd, nd + 2, nd + 1, nd + 3)
    return windows.transpose(perm).reshape(*lead, 2 * ho, 2 * wo)


def dense_forward(x, weight, bias) -> np.ndarray:
    """``weight @ x + bias`` accumulated in ascending input order."""
    x, single = _batched(_float(x), 1)
    dtype = x.dtype
    weight = np.asarray(weight, dtype=dtype)
    bias = np.ascontiguousarray(bias, dtype=dtype)
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ValueError(f"weight shape {weight.shape} incompatible with input length {x.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"bias shape {bias.shape} does not match {weight.shape[0]} outputs")
    out = _dense_accumulate(np.ascontiguousarray(x), np.ascontiguousarray(weight.T), bias)
    return out[0] if single else out


def dense_backward(grad_out, x, weight) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, single = _batched(_float(x), 1)
    grad_out, _ = _batched(np.asarray(grad_out, dtype=x.dtype), 1)
    weight = np.asarray(weight, dtype=x.dtype)
    if grad_out.shape != (x.shape[0], weight.shape[0]):
        raise ValueError(f"grad_out shape {grad_out.shape} inconsistent with the forward call")
    grad_x = grad_out @ weight
    grad_w = grad_out.T @ x
    grad_b = grad_out.sum(axis=0)
    return (grad_x[0] if single else grad_x), grad_w, grad_b


def softmax(logits) -> np.ndarray:
    """Softmax over the last axis, with the max subtracted first."""
    z = _float(logits)
    if z.shape[-1] < 1:
        raise ValueError("softmax needs at least one logit")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(grad_out, probs) -> np.ndarray:
    probs = np.asarray(probs)
    dot = (grad_out * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_out - dot)


def _labels(probs: np.ndarray, true_class) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(true_class))
    k = probs.shape[-1]
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("class labels must be integers")
    if np.any(labels < 0) or np.any(labels >= k):
        raise IndexError(f"class index out of range for {k} classes")
    return labels


def cross_entropy(probs, true_class) -> float:
    """``-ln p[true_class]`` with ``p`` floored at 1e-12; batch input gives the mean."""
    probs = np.asarray(probs)
    p2 = probs.reshape(-1, probs.shape[-1])
    labels = _labels(probs, true_class)
    if labels.shape[0] != p2.shape[0]:
        raise ValueError("one label per distribution required")
    picked = p2[np.arange(p2.shape[0]), labels].astype(np.float64)
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def cross_entropy_backward(probs, true_class) -> np.ndarray:
    """Gradient of softmax + cross-entropy w.r.t. the logits: ``probs - onehot``.

    For a batch this is the gradient of the mean loss.
    """
    probs = np.asarray(probs)
    labels = _labels(probs, true_class)
    grad = probs.copy()
    if probs.ndim == 1:
        grad[labels[0]] -= 1
        return grad
    grad[np.arange(probs.shape[0]), labels] -= 1
    return grad / probs.shape[0]


# ---------------------------------------------------------------------------
# networks


def param_shapes(layer: LayerSpec) -> list[tuple[int, ...]]:
    if layer.kind == "conv2d":
        c_in, c_out, k = layer.shape
        return [(c_out, c_in, k, k), (c_out,)]
    if layer.kind == "dense":
        n_in, n_out = layer.shape
        return [(n_out, n_in), (n_out,)]
    return []


def output_shape(specs: Sequence[LayerSpec], input_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Shape after every layer for one sample; raises on incompatible stacks."""
    shape = tuple(input_shape)
    shapes = []
    for pos, layer in enumerate(specs):
        if layer.kind == "conv2d":
            c_in, c_out, k = layer.shape
            if len(shape) != 3 or shape[0] != c_in or shape[1] < k or shape[2] < k:
                raise ValueError(f"layer {pos}: conv2d{layer.shape} cannot take input {shape}")
            shape = (c_out, shape[1] - k + 1, shape[2] - k + 1)
        elif layer.kind == "maxpool2":
            if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                raise ValueError(f"layer {pos}: maxpool2 cannot take input {shape}")
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        elif layer.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif layer.kind == "dense":
            n_in, n_out = layer.shape
            if shape != (n_in,):
                raise ValueError(f"layer {pos}: dense{layer.shape} cannot take input {shape}")
            shape = (n_out,)
        elif layer.kind == "softmax" and len(shape) != 1:
            raise ValueError(f"layer {pos}: softmax needs a vector, got {shape}")
        shapes.append(shape)
    return shapes


def init_weights(specs: Sequence[LayerSpec], seed: int) -> ModelWeights:
    """He-uniform weights (bound ``sqrt(6 / fan_in)``) and zero biases."""
    rng = np.random.default_rng(seed)
    weights = []
    for layer in specs:
        shapes = param_shapes(layer)
        if not shapes:
            weights.append(())
            continue
        w_shape, b_shape = shapes
        fan_in = int(np.prod(w_shape[1:]))
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=w_shape).astype(np.float32)
        weights.append((w, np.zeros(b_shape, dtype=np.float32)))
    return weights


@dataclass
class _Tape:
    inputs: list = field(default_factory=list)
    extras: list = field(default_factory=list)
    output: np.ndarray | None = None


def forward(specs: Sequence[LayerSpec], weights: ModelWeights, x, keep: bool = False, frozen: _Tape | None = None):
    """Run the network on ``x`` (one sample or a batch).

    Returns the output, or ``(output, tape)`` when ``keep`` is set; the tape
    feeds ``backward``. Passing the tape of an earlier call as ``frozen``
    reuses its ReLU masks and pooling winners instead of recomputing them,
    which makes the network smooth around that earlier input.
    """
    x = _float(x)
    tape = _Tape()
    batched = x.ndim == 4 or (x.ndim == 2 and specs and specs[0].kind == "dense")
    for pos, (layer, params) in enumerate(zip(specs, weights)):
        if keep:
            tape.inputs.append(x)
        extra = None
        if layer.kind == "conv2d":
            x = conv2d_forward(x, *params)
        elif layer.kind == "relu":
            if frozen is None:
                x = relu_forward(x)
            else:
                x = np.where(frozen.inputs[pos] > 0, x, 0).astype(x.dtype, copy=False)
        elif layer.kind == "maxpool2":
            if frozen is None:
                x, extra = maxpool2_forward(x)
            else:
                extra = frozen.extras[pos]
                x = _pool_gather(x, extra)
        elif layer.kind == "flatten":
            x = x.reshape(x.shape[0], -1) if batched else x.reshape(-1)
        elif layer.kind == "dense":
            x = dense_forward(x, *params)
        elif layer.kind == "softmax":
            x = softmax(x)
        tape.extras.append(extra)
    tape.output = x
    return (x, tape) if keep else x


def backward(specs: Sequence[LayerSpec], weights: ModelWeights, tape: _Tape, grad, skip_softmax: bool = False):
    """Backpropagate ``grad`` (w.r.t. the network output) through the tape.

    With ``skip_softmax`` a trailing softmax layer is bypassed, i.e. ``grad``
    is already w.r.t. the logits (the fused cross-entropy path).

    Returns ``(grad_input, grads)`` where ``grads`` mirrors ``weights``.
    """
    grads: list = [()] * len(specs)
    for pos in range(len(specs) - 1, -1, -1):
        layer = specs[pos]
        x = tape.inputs[pos]
        if layer.kind == "conv2d":
            grad, gk, gb = conv2d_backward(grad, x, weights[pos][0])
            grads[pos] = (gk, gb)
        elif layer.kind == "relu":
            grad = relu_backward(grad, x)
        elif layer.kind == "maxpool2":
            grad = maxpool2_backward(grad, tape.extras[pos])
        elif layer.kind == "flatten":
            grad = grad.reshape(x.shape)
        elif layer.kind == "dense":
            grad, gw, gb = dense_backward(grad, x, weights[pos][0])
            grads[pos] = (gw, gb)
        elif layer.kind == "softmax":
            if not (skip_softmax and pos == len(specs) - 1):
                probs = tape.output if pos == len(specs) - 1 else tape.inputs[pos + 1]
                grad = softmax_backward(grad, probs)
    return grad, grads


def loss_and_grads(specs, weights, x, labels):
    """Mean cross-entropy of a softmax-terminated network and its gradients.

    Returns ``(loss, probs, grad_input, grads)``.
    """
    if not specs or specs[-1].kind != "softmax":
        raise ValueError("network must end in a softmax layer")
    probs, tape = forward(specs, weights, x, keep=True)
    loss = cross_entropy(probs, labels)
    grad_in, grads = backward(specs, weights, tape, cross_entropy_backward(probs, labels), skip_softmax=True)
    return loss, probs, grad_in, grads


def zeros_like_weights(weights: ModelWeights) -> ModelWeights:
    return [tuple(np.zeros_like(p) for p in params) for params in weights]


def sgd_step(weights: ModelWeights, grads: ModelWeights, lr: float, momentum: float, velocity: ModelWeights | None = None):
    """Momentum SGD: ``v <- momentum * v - lr * g``, ``w <- w + v``.

    Returns new ``(weights, velocity)``; inputs are left untouched.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if not 0 <= momentum < 1:
        raise ValueError("momentum must lie in [0, 1)")
    if velocity is None:
        velocity = zeros_like_weights(weights)
    new_w, new_v = [], []
    for params, gparams, vparams in zip(weights, grads, velocity):
        layer_w, layer_v = [], []
        for w, g, v in zip(params, gparams, vparams):
            dtype = w.dtype
            v = (dtype.type(momentum) * v - dtype.type(lr) * g.astype(dtype, copy=False)).astype(dtype, copy=False)
            layer_v.append(v)
            layer_w.append((w + v).astype(dtype, copy=False))
        new_w.append(tuple(layer_w))
        new_v.append(tuple(layer_v))
    return new_w, new_v


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: str = ""
    errors: list[float] = field(default_factory=list, repr=False)

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(f: Callable[[np.ndarray], float], x, analytic, eps: float = 1e-3, indices=None, label: str = "x") -> GradCheckReport:
    """Compare ``analytic`` against central differences of scalar ``f`` at ``x``.

    ``x`` is perturbed in place (and restored), so ``f`` may close over it.
    ``indices`` limits the check to selected flat coordinates.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x)
    analytic = np.asarray(analytic).reshape(-1)
    flat = x.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    worst, worst_at, errors = 0.0, "", []
    for idx in indices:
        orig = flat[idx]
        flat[idx] = orig + eps
        f_plus = f(x)
        flat[idx] = orig - eps
        f_minus = f(x)
        flat[idx] = orig
        numeric = (f_plus - f_minus) / (2 * eps)
        err = relative_error(float(analytic[idx]), float(numeric))
        errors.append(err)
        if err >= worst:
            worst, worst_at = err, f"{label}[{idx}]"
    return GradCheckReport(worst, len(errors), worst_at, errors)


def network_gradient_check(
    specs, weights, x, label: int, eps: float = 1e-3, samples: int = 25, seed: int = 0, freeze_kinks: bool = True
) -> GradCheckReport:
    """Gradient-check a softmax/cross-entropy network in float64.

    Checks ``samples`` random coordinates of the input and of every
    parameter tensor. Float32 central differences are too noisy at
    ``eps=1e-3``, so everything is promoted to float64 first.

    With ``freeze_kinks`` the perturbed forward passes keep the ReLU masks
    and pooling winners of the unperturbed pass. That function has the same
    gradient at ``x`` but no kinks within ``eps``; without it a step of 1e-3
    routinely crosses a ReLU hinge somewhere among tens of thousands of units
    and the difference quotient stops being a derivative estimate.
    """
    rng = np.random.default_rng(seed)
    x64 = np.array(x, dtype=np.float64)
    w64 = [tuple(np.array(p, dtype=np.float64) for p in params) for params in weights]
    _, tape = forward(specs, w64, x64, keep=True)
    grad_in, grads = backward(specs, w64, tape, cross_entropy_backward(tape.output, label), skip_softmax=True)
    frozen = tape if freeze_kinks else None

    def loss() -> float:
        return cross_entropy(forward(specs, w64, x64, frozen=frozen), label)

    targets = [("input", x64, grad_in)]
    for pos, (params, gparams) in enumerate(zip(w64, grads)):
        for which, (p, g) in enumerate(zip(params, gparams)):
            targets.append((f"layer{pos}.{'wb'[which]}", p, g))
    reports = []
    for name, arr, grad in targets:
        count = min(samples, arr.size)
        idx = rng.choice(arr.size, size=count, replace=False)
        reports.append(gradient_check(lambda _: loss(), arr, grad, eps, idx, label=name))
    worst = max(reports, key=lambda r: r.max_rel_error)
    errors = [e for r in reports for e in r.errors]
    return GradCheckReport(worst.max_rel_error, len(errors), worst.worst, errors)


# ---------------------------------------------------------------------------
# SPW1 weight files

_MAGIC = b"SPW"
_VERSION = b"1"


def save_weights(specs: Sequence[LayerSpec], weights: ModelWeights) -> bytes:
    """Serialize a network.

    Layout (little-endian): ``b"SPW1"``, u32 layer count, then per layer a
    kind tag byte, u32 extent count, the u32 extents, and the float32
    parameters (weights then bias, row-major).
    """
    if len(specs) != len(weights):
        raise ValueError("one weight tuple per layer required")
    chunks = [_MAGIC + _VERSION, struct.pack("<I", len(specs))]
    for layer, params in zip(specs, weights):
        shapes = param_shapes(layer)
        if [tuple(np.shape(p)) for p in params] != shapes:
            raise ValueError(f"{layer.kind} parameters do not match shapes {shapes}")
        chunks.append(struct.pack("<BI", _KIND_TAGS[layer.kind], len(layer.shape)))
        chunks.append(struct.pack(f"<{len(layer.shape)}I", *layer.shape))
        for p in params:
            chunks.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightsFormatError(f"truncated payload at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(data: bytes) -> tuple[list[LayerSpec], ModelWeights]:
    data = bytes(data)
    if data[:3] != _MAGIC:
        raise WeightsFormatError(f"bad magic {data[:4]!r}")
    if data[3:4] != _VERSION:
        raise WeightsFormatError(f"version mismatch: {data[3:4]!r}")
    reader = _Reader(data)
    reader.pos = 4
    (count,) = reader.unpack("<I")
    specs, weights = [], []
    for _ in range(count):
        tag, n_ext = reader.unpack("<BI")
        if tag not in _TAG_KINDS:
            raise WeightsFormatError(f"unknown layer tag {tag}")
        if n_ext > 8:
            raise WeightsFormatError(f"shape inconsistency: {n_ext} extents")
        extents = reader.unpack(f"<{n_ext}I")
        try:
            layer = LayerSpec(_TAG_KINDS[tag], extents)
        except ValueError as exc:
            raise WeightsFormatError(f"shape inconsistency: {exc}") from None
        params = []
        for shape in param_shapes(layer):
            n = int(np.prod(shape))
            arr = np.frombuffer(reader.take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
            params.append(arr)
        specs.append(layer)
        weights.append(tuple(params))
    if reader.pos != len(data):
        raise WeightsFormatError(f"{len(data) - reader.pos} trailing bytes after last layer")
    return specs, weights
