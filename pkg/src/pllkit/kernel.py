"""Differentiable array kernel.

Forward operations with analytic reverse-mode backward passes, SGD with
momentum/weight decay, and a central-finite-difference gradient checker.
Values are float64 numpy arrays throughout; only the operations needed by
the 1-D conv backbone and the partial-label losses are provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Floor applied before every log so losses stay finite for any finite logits.
EPS_LOG = 1e-7
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class KernelError(ValueError):
    """Shape mismatch, invalid mode, or a broken numeric invariant."""


class Tensor:
    """Graph node: a float64 array plus reverse-mode plumbing.

    Leaves created with requires_grad=True accumulate gradients in .grad
    when backward() runs on a scalar loss. Interior nodes hold a closure
    routing the incoming gradient to their parents. Construction rejects
    non-finite values, so a diverging forward pass fails loudly.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise KernelError("non-finite value entered the graph")
        self.value = arr
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise KernelError(f"item() on tensor of shape {self.value.shape}")
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """Wrap an array as a non-trainable graph leaf."""
    return Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    # Sum a gradient back down to `shape` after numpy broadcasting.
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / linear algebra


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.value + b.value

    def bwd(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    return Tensor(out, parents=(a, b), backward=bwd)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.value - b.value

    def bwd(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(-g, b.value.shape))

    return Tensor(out, parents=(a, b), backward=bwd)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.value * b.value

    def bwd(g):
        _accum(a, _unbroadcast(g * b.value, a.value.shape))
        _accum(b, _unbroadcast(g * a.value, b.value.shape))

    return Tensor(out, parents=(a, b), backward=bwd)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.value / b.value

    def bwd(g):
        _accum(a, _unbroadcast(g / b.value, a.value.shape))
        _accum(b, _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    return Tensor(out, parents=(a, b), backward=bwd)


def neg(a) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        _accum(a, -g)

    return Tensor(-a.value, parents=(a,), backward=bwd)


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.value)

    def bwd(g):
        _accum(a, g * out)

    return Tensor(out, parents=(a,), backward=bwd)


def log(a) -> Tensor:
    a = _wrap(a)
    out = np.log(a.value)

    def bwd(g):
        _accum(a, g / a.value)

    return Tensor(out, parents=(a,), backward=bwd)


def log_guarded(a) -> Tensor:
    """log after flooring at EPS_LOG, the standard guard for probability logs."""
    return log(clamp(a, EPS_LOG, 1.0))


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out = np.sqrt(a.value)

    def bwd(g):
        _accum(a, g * 0.5 / np.maximum(out, 1e-150))

    return Tensor(out, parents=(a,), backward=bwd)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise KernelError(f"matmul expects 2-D operands, got {a.value.shape} @ {b.value.shape}")
    if a.value.shape[1] != b.value.shape[0]:
        raise KernelError(f"matmul shape mismatch: {a.value.shape} @ {b.value.shape}")
    out = a.value @ b.value

    def bwd(g):
        _accum(a, g @ b.value.T)
        _accum(b, a.value.T @ g)

    return Tensor(out, parents=(a, b), backward=bwd)


def transpose(a) -> Tensor:
    a = _wrap(a)
    if a.value.ndim != 2:
        raise KernelError(f"transpose expects a 2-D tensor, got shape {a.value.shape}")

    def bwd(g):
        _accum(a, g.T)

    return Tensor(a.value.T, parents=(a,), backward=bwd)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = a.value.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.value.shape))

    return Tensor(out, parents=(a,), backward=bwd)


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        _accum(a, _expand_reduced(g, a.value.shape, axis, keepdims).copy())

    return Tensor(out, parents=(a,), backward=bwd)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out = a.value.mean(axis=axis, keepdims=keepdims)
    count = a.value.size / out.size

    def bwd(g):
        _accum(a, _expand_reduced(g, a.value.shape, axis, keepdims) / count)

    return Tensor(out, parents=(a,), backward=bwd)


# ---------------------------------------------------------------------------
# neural-net primitives


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise KernelError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    a = _wrap(a)
    factor = np.where(a.value >= 0.0, 1.0, slope)
    out = a.value * factor

    def bwd(g):
        _accum(a, g * factor)

    return Tensor(out, parents=(a,), backward=bwd)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    pos = a.value >= 0
    z = np.exp(np.where(pos, -a.value, a.value))
    out = np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))

    def bwd(g):
        _accum(a, g * out * (1.0 - out))

    return Tensor(out, parents=(a,), backward=bwd)


def softmax(a) -> Tensor:
    """Max-shifted softmax over the last axis; rows sum to 1."""
    a = _wrap(a)
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        _accum(a, (g - inner) * out)

    return Tensor(out, parents=(a,), backward=bwd)


def clamp(a, lo: float, hi: float) -> Tensor:
    """Saturate at [lo, hi]; gradient passes only strictly inside the bounds."""
    a = _wrap(a)
    out = np.clip(a.value, lo, hi)
    interior = (a.value > lo) & (a.value < hi)

    def bwd(g):
        _accum(a, g * interior)

    return Tensor(out, parents=(a,), backward=bwd)


def dense(x, weights, bias) -> Tensor:
    """Affine map W.x + b for a single vector (D_in,) or a batch (B, D_in)."""
    x, weights, bias = _wrap(x), _wrap(weights), _wrap(bias)
    w, b = weights.value, bias.value
    if w.ndim != 2 or b.shape != (w.shape[0],):
        raise KernelError(f"dense expects weights (D_out, D_in) and bias (D_out,), got {w.shape} / {b.shape}")
    single = x.value.ndim == 1
    xv = x.value[None, :] if single else x.value
    if xv.ndim != 2 or xv.shape[1] != w.shape[1]:
        raise KernelError(f"dense input shape {x.value.shape} incompatible with weights {w.shape}")
    out2 = xv @ w.T + b

    def bwd(g):
        g2 = g[None, :] if single else g
        _accum(x, (g2 @ w)[0] if single else g2 @ w)
        _accum(weights, g2.T @ xv)
        _accum(bias, g2.sum(axis=0))

    return Tensor(out2[0] if single else out2, parents=(x, weights, bias), backward=bwd)


def conv1d(x, kernel, bias) -> Tensor:
    """Valid cross-correlation: (C_in, L) or (B, C_in, L) -> (..., C_out, L - W + 1)."""
    x, kernel, bias = _wrap(x), _wrap(kernel), _wrap(bias)
    k, b = kernel.value, bias.value
    if k.ndim != 3:
        raise KernelError(f"conv1d kernel must be (C_out, C_in, W), got {k.shape}")
    c_out, c_in, width = k.shape
    if b.shape != (c_out,):
        raise KernelError(f"conv1d bias shape {b.shape} does not match C_out={c_out}")
    single = x.value.ndim == 2
    xv = x.value[None] if single else x.value
    if xv.ndim != 3 or xv.shape[1] != c_in:
        raise KernelError(f"conv1d input shape {x.value.shape} incompatible with kernel {k.shape}")
    length = xv.shape[2]
    if length < width:
        raise KernelError(f"conv1d input length {length} shorter than kernel width {width}")
    l_out = length - width + 1
    acc = np.zeros((xv.shape[0], l_out, c_out))
    for tap in range(width):
        acc += np.tensordot(xv[:, :, tap:tap + l_out], k[:, :, tap], axes=([1], [1]))
    out3 = np.ascontiguousarray(acc.transpose(0, 2, 1)) + b[None, :, None]

    def bwd(g):
        g3 = g[None] if single else g
        dk = np.empty_like(k)
        for tap in range(width):
            dk[:, :, tap] = np.tensordot(g3, xv[:, :, tap:tap + l_out], axes=([0, 2], [0, 2]))
        _accum(kernel, dk)
        _accum(bias, g3.sum(axis=(0, 2)))
        if x.requires_grad:
            dx = np.zeros_like(xv)
            for tap in range(width):
                dx[:, :, tap:tap + l_out] += np.tensordot(
                    g3, k[:, :, tap], axes=([1], [0])).transpose(0, 2, 1)
            _accum(x, dx[0] if single else dx)

    return Tensor(out3[0] if single else out3, parents=(x, kernel, bias), backward=bwd)


def batchnorm1d(x, scale, shift, running_mean, running_var, *, training,
                eps: float = BN_EPS, momentum: float = BN_MOMENTUM,
                update_running: bool = True) -> Tensor:
    """Per-channel batch normalization over (B, C, L).

    Train mode normalizes with batch statistics (biased variance) and, when
    update_running is set, folds them into the running stats by exponential
    moving average. Eval mode normalizes with the running stats; before any
    train step those are the initial mean 0 / var 1.
    """
    x, scale, shift = _wrap(x), _wrap(scale), _wrap(shift)
    xv = x.value
    if xv.ndim != 3:
        raise KernelError(f"batchnorm1d expects (B, C, L), got shape {xv.shape}")
    channels = xv.shape[1]
    for name, t in (("scale", scale), ("shift", shift),
                    ("running_mean", running_mean), ("running_var", running_var)):
        if t.value.shape != (channels,):
            raise KernelError(f"batchnorm1d {name} shape {t.value.shape} != ({channels},)")

    if training:
        n = xv.shape[0] * xv.shape[2]
        if n < 2:
            raise KernelError("train-mode batchnorm needs at least 2 values per channel")
        mu = xv.mean(axis=(0, 2))
        var = xv.var(axis=(0, 2))
        if update_running:
            running_mean.value = (1.0 - momentum) * running_mean.value + momentum * mu
            running_var.value = (1.0 - momentum) * running_var.value + momentum * var
    else:
        mu = running_mean.value
        var = running_var.value

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu[None, :, None]) * inv[None, :, None]
    out = scale.value[None, :, None] * xhat + shift.value[None, :, None]

    if training:
        n_per_channel = xv.shape[0] * xv.shape[2]

        def bwd(g):
            _accum(shift, g.sum(axis=(0, 2)))
            _accum(scale, (g * xhat).sum(axis=(0, 2)))
            if x.requires_grad:
                dxhat = g * scale.value[None, :, None]
                s1 = dxhat.sum(axis=(0, 2), keepdims=True)
                s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
                dx = (inv[None, :, None] / n_per_channel) * (n_per_channel * dxhat - s1 - xhat * s2)
                _accum(x, dx)
    else:

        def bwd(g):
            _accum(shift, g.sum(axis=(0, 2)))
            _accum(scale, (g * xhat).sum(axis=(0, 2)))
            _accum(x, g * (scale.value * inv)[None, :, None])

    return Tensor(out, parents=(x, scale, shift), backward=bwd)


def dropout(x, rate: float, *, training, rng=None) -> Tensor:
    """Zero each element with probability `rate` in train mode, scaling survivors."""
    if not 0.0 <= rate < 1.0:
        raise KernelError(f"dropout rate must lie in [0, 1), got {rate}")
    x = _wrap(x)
    if not training or rate == 0.0:
        def bwd_id(g):
            _accum(x, g)

        return Tensor(x.value, parents=(x,), backward=bwd_id)
    if rng is None:
        raise KernelError("train-mode dropout needs an rng")
    keep = (rng.random(x.value.shape) >= rate) / (1.0 - rate)

    def bwd(g):
        _accum(x, g * keep)

    return Tensor(x.value * keep, parents=(x,), backward=bwd)


def l2_normalize(x, axis=-1) -> Tensor:
    """Divide by the L2 norm (plus EPS_LOG, guarding the zero vector)."""
    sq = tsum(mul(x, x), axis=axis, keepdims=True)
    norm = sqrt(add(sq, 1e-24))
    return div(x, add(norm, EPS_LOG))


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; gradients accumulate on leaves."""
    if loss.value.shape != ():
        raise KernelError(f"backward expects a scalar loss, got shape {loss.value.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    loss.grad = np.ones(())
    for node in reversed(order):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)


class ParameterSet:
    """Named tensor collection; names are unique, running stats are frozen."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._tensors:
            raise KernelError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=trainable)
        self._tensors[name] = t
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def trainable_items(self):
        return [(n, t) for n, t in self._tensors.items() if self._trainable[n]]

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def state_dict(self) -> dict:
        return {n: t.value.copy() for n, t in self._tensors.items()}

    def load_state_dict(self, state: dict) -> None:
        for name, t in self._tensors.items():
            if name not in state:
                raise KernelError(f"missing parameter {name!r} in state dict")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.value.shape:
                raise KernelError(f"shape mismatch for {name!r}: {arr.shape} != {t.value.shape}")
            t.value = arr.copy()

    def clone(self) -> "ParameterSet":
        out = ParameterSet()
        for name, t in self._tensors.items():
            out.add(name, t.value.copy(), trainable=self._trainable[name])
        return out


def collect_grads(params: ParameterSet) -> dict:
    """Gradient per trainable entry after backward(); untouched entries get zeros."""
    grads = {}
    for name, t in params.trainable_items():
        g = t.grad if t.grad is not None else np.zeros_like(t.value)
        if not np.all(np.isfinite(g)):
            raise KernelError(f"non-finite gradient for {name!r}")
        grads[name] = np.array(g, dtype=np.float64)
    return grads


def grads_of(loss: Tensor, params: ParameterSet) -> dict:
    params.zero_grad()
    backward(loss)
    return collect_grads(params)


# ---------------------------------------------------------------------------
# optimization


@dataclass
class OptimizerState:
    """SGD with momentum and weight decay, optionally cosine-annealed per epoch."""

    lr: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    schedule: str = "none"  # "none" | "cosine"
    total_epochs: int = 30
    velocities: dict = field(default_factory=dict)
    base_lr: float = field(default=None)

    def __post_init__(self):
        if self.lr <= 0:
            raise KernelError(f"learning rate must be positive, got {self.lr}")
        if self.schedule not in ("none", "cosine"):
            raise KernelError(f"unknown schedule {self.schedule!r}")
        if self.base_lr is None:
            self.base_lr = self.lr

    def lr_for_epoch(self, epoch: int) -> float:
        if self.schedule == "cosine":
            return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / self.total_epochs))
        return self.base_lr

    def set_epoch(self, epoch: int) -> None:
        self.lr = self.lr_for_epoch(epoch)


def sgd_step(params: ParameterSet, grads: dict, state: OptimizerState) -> None:
    """v <- m.v + (g + wd.theta); theta <- theta - lr.v, per trainable entry."""
    for name, tensor in params.trainable_items():
        if name not in grads:
            raise KernelError(f"missing gradient for {name!r}")
        g = grads[name]
        if g.shape != tensor.value.shape:
            raise KernelError(f"gradient shape {g.shape} != parameter shape {tensor.value.shape} for {name!r}")
        v = state.velocities.get(name)
        if v is None:
            v = np.zeros_like(tensor.value)
            state.velocities[name] = v
        v *= state.momentum
        v += g
        if state.weight_decay:
            v += state.weight_decay * tensor.value
        tensor.value -= state.lr * v
        if not np.all(np.isfinite(tensor.value)):
            raise KernelError(f"parameter {name!r} diverged during sgd_step")


# ---------------------------------------------------------------------------
# finite-difference verification


def gradcheck(loss_fn, params: ParameterSet, eps: float = 1e-4, *,
              max_coords_per_param=None, rng=None) -> float:
    """Compare analytic gradients against central finite differences.

    loss_fn(params) must rebuild the loss graph deterministically and without
    side effects (eval-mode batch norm, dropout off, any noise pre-drawn);
    a value change between two evaluations at the same point is rejected.
    Per checked coordinate the error is |analytic - numeric| relative to
    max(1, |analytic|, |numeric|); the worst one is returned. With
    max_coords_per_param set, that many coordinates are sampled per tensor,
    keeping large dense layers affordable.
    """
    first = loss_fn(params)
    if first.value.shape != ():
        raise KernelError("gradcheck loss_fn must return a scalar")
    again = loss_fn(params)
    if float(first.value) != float(again.value):
        raise KernelError("loss_fn is not deterministic; fix rng/augmentation state first")

    analytic = grads_of(loss_fn(params), params)
    if rng is None:
        rng = np.random.default_rng(0)

    worst = 0.0
    for name, tensor in params.trainable_items():
        flat = tensor.value.reshape(-1)
        size = flat.size
        if max_coords_per_param is not None and size > max_coords_per_param:
            coords = rng.choice(size, size=max_coords_per_param, replace=False)
        else:
            coords = range(size)
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn(params).value)
            flat[i] = orig - eps
            f_minus = float(loss_fn(params).value)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(a_flat[i])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if rel > worst:
                worst = rel
    return worst
