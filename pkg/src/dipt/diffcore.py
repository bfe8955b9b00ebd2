"""Dense tensors with reverse-mode autodiff and an Adam optimizer.

A ``Tensor`` wraps a float numpy array (float32 by default). Operations
record onto the innermost active ``Tape``; ``Tape.backward`` replays the
recorded ops in reverse and deposits gradients on every ``requires_grad``
tensor that took part. Without an active tape nothing is recorded and the
ops are plain numpy math, which is what evaluation paths use.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "Adam",
    "grad_check",
    "matmul",
    "add",
    "sub",
    "multiply",
    "scale",
    "concat",
    "reshape",
    "transpose",
    "broadcast_to",
    "tensor_sum",
    "mean",
    "softmax",
    "layer_norm",
    "gelu",
    "leaky_relu",
    "cross_entropy",
]

_GELU_C = math.sqrt(2.0 / math.pi)


class ShapeError(ValueError):
    """Incompatible operand shapes; remembers the op and both shapes."""

    def __init__(self, op: str, expected, actual):
        self.op = op
        self.expected = expected
        self.actual = actual
        super().__init__(f"{op}: expected {expected}, got {actual}")


class Tensor:
    """Dense float array with optional gradient accumulation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: "Tape | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Run reverse-mode on the tape this tensor was recorded on."""
        if self._tape is None:
            if self.data.ndim != 0:
                raise ShapeError("backward", "scalar loss", self.data.shape)
            return  # constant scalar: nothing reachable, all grads are zero
        self._tape.backward(self)

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _TapeOp:
    __slots__ = ("inputs", "output", "vjp")

    def __init__(self, inputs, output, vjp):
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


_LOCAL = threading.local()


def _tape_stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive ops for one forward pass.

    Use as a context manager; ops executed inside record themselves when
    any input requires grad. ``backward`` may be called once per tape.
    """

    def __init__(self):
        self.ops: list[_TapeOp] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted: exiting a non-innermost tape")
        stack.pop()

    def record(self, inputs: tuple, output: Tensor, vjp: Callable) -> None:
        output._tape = self
        self.ops.append(_TapeOp(inputs, output, vjp))

    def backward(self, loss: Tensor) -> None:
        if self.consumed:
            raise RuntimeError("backward called twice on the same tape")
        if loss._tape is not self:
            raise RuntimeError("loss was not produced on this tape")
        if loss.data.ndim != 0:
            raise ShapeError("backward", "scalar loss", loss.data.shape)
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
        produced = {id(op.output) for op in self.ops}
        for op in reversed(self.ops):
            out_grad = grads.pop(id(op.output), None)
            if out_grad is None:
                continue  # not reachable from the loss
            for inp, g in zip(op.inputs, op.vjp(out_grad)):
                if g is None:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
        # Deposit: every requires_grad tensor seen as an op input gets a
        # gradient; tape leaves unreachable from the loss get zeros.
        seen: set[int] = set()
        for op in self.ops:
            for inp in op.inputs:
                key = id(inp)
                if key in seen or not inp.requires_grad:
                    continue
                seen.add(key)
                if id(inp) in produced:
                    continue  # intermediate, not a leaf
                g = grads.get(key)
                if g is None:
                    g = np.zeros_like(inp.data)
                else:
                    g = np.asarray(g, dtype=inp.data.dtype).reshape(inp.data.shape)
                inp.grad = g if inp.grad is None else inp.grad + g


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(inputs: tuple[Tensor, ...], data: np.ndarray, vjp: Callable) -> Tensor:
    tape = active_tape()
    recorded = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=recorded)
    if recorded:
        tape.record(inputs, out, vjp)
    return out


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError("add", a.data.shape, b.data.shape) from None

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _make((a, b), data, vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError("sub", a.data.shape, b.data.shape) from None

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape))

    return _make((a, b), data, vjp)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError("multiply", a.data.shape, b.data.shape) from None

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make((a, b), data, vjp)


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def vjp(g):
        return (g * c,)

    return _make((a,), a.data * np.asarray(c, dtype=a.data.dtype), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; operands must be at least 2-d, leading dims broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", "operands with ndim >= 2", (a.data.shape, b.data.shape))
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError("matmul", f"inner dim {a.data.shape[-1]}", b.data.shape)
    data = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _make((a, b), data, vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", "at least one tensor", 0)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", tensors[0].data.shape, [t.data.shape for t in tensors]) from None
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(tuple(tensors), data, vjp)


def _getitem(a: Tensor, key) -> Tensor:
    data = a.data[key]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[key] += g
        return (ga,)

    return _make((a,), data, vjp)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", shape, a.data.shape) from None

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _make((a,), data, vjp)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = np.argsort(axes)
    data = a.data.transpose(axes)

    def vjp(g):
        return (g.transpose(inv),)

    return _make((a,), data, vjp)


def broadcast_to(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", shape, a.data.shape) from None

    def vjp(g):
        return (_unbroadcast(g, a.data.shape),)

    return _make((a,), data, vjp)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make((a,), data, vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims, dtype=a.data.dtype)
    count = a.data.size if axis is None else a.data.size // data.size

    def vjp(g):
        if axis is None:
            gg = np.broadcast_to(g, a.data.shape) / count
            return (gg.astype(a.data.dtype, copy=False),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        gg = np.broadcast_to(g, a.data.shape) / count
        return (gg.astype(a.data.dtype, copy=False),)

    return _make((a,), data, vjp)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _make((a,), y, vjp)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale/shift by gamma/beta."""
    a, gamma, beta = _as_tensor(a), _as_tensor(gamma), _as_tensor(beta)
    m = a.data.shape[-1]
    if gamma.data.shape != (m,) or beta.data.shape != (m,):
        raise ShapeError("layer_norm", (m,), (gamma.data.shape, beta.data.shape))
    mu = a.data.mean(axis=-1, keepdims=True, dtype=a.data.dtype)
    var = a.data.var(axis=-1, keepdims=True, dtype=a.data.dtype)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=a.data.dtype))
    xhat = (a.data - mu) * inv
    y = gamma.data * xhat + beta.data

    def vjp(g):
        reduce_axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=reduce_axes) if g.ndim > 1 else g * xhat
        dbeta = g.sum(axis=reduce_axes) if g.ndim > 1 else g.copy()
        dxhat = g * gamma.data
        da = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return (da.astype(a.data.dtype, copy=False), dgamma, dbeta)

    return _make((a, gamma, beta), y, vjp)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    a = _as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
        return ((g * da).astype(a.data.dtype, copy=False),)

    return _make((a,), y.astype(x.dtype, copy=False), vjp)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    a = _as_tensor(a)
    pos = a.data > 0
    y = np.where(pos, a.data, slope * a.data)

    def vjp(g):
        return (np.where(pos, g, slope * g).astype(a.data.dtype, copy=False),)

    return _make((a,), y.astype(a.data.dtype, copy=False), vjp)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of integer labels; logits (C,) or (B, C)."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels)
    squeeze = logits.ndim == 1
    z = logits.data[None, :] if squeeze else logits.data
    if z.ndim != 2:
        raise ShapeError("cross_entropy", "(B, C) logits", logits.data.shape)
    lab = labels.reshape(-1).astype(np.int64)
    if lab.shape[0] != z.shape[0]:
        raise ShapeError("cross_entropy", f"{z.shape[0]} labels", lab.shape)
    if lab.min() < 0 or lab.max() >= z.shape[1]:
        raise ShapeError("cross_entropy", f"labels in [0, {z.shape[1]})", (int(lab.min()), int(lab.max())))
    shifted = z - z.max(axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logsumexp
    n = z.shape[0]
    loss = -logp[np.arange(n), lab].mean(dtype=z.dtype)

    def vjp(g):
        grad = np.exp(logp)
        grad[np.arange(n), lab] -= 1.0
        grad *= g / n
        if squeeze:
            grad = grad[0]
        return (grad.astype(logits.data.dtype, copy=False),)

    return _make((logits,), np.asarray(loss, dtype=z.dtype), vjp)


# ---------------------------------------------------------------------------
# optimizer and gradient checking


class Adam:
    """Adam with bias correction; moments match parameter shapes."""

    def __init__(self, params: Sequence[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                name = p.name or f"param{i}"
                raise FloatingPointError(f"non-finite gradient in parameter '{name}'")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1**self.t)
            v_hat = self.v[i] / (1.0 - self.beta2**self.t)
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def grad_check(fn: Callable[..., Tensor], points, h: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` must return a scalar Tensor; ``points`` is one Tensor or a
    sequence of Tensors whose coordinates are perturbed in place.
    """
    pts = [points] if isinstance(points, Tensor) else list(points)
    for p in pts:
        p.grad = None
        p.requires_grad = True
    with Tape() as tp:
        out = fn(*pts)
    if out.data.ndim != 0:
        raise ShapeError("grad_check", "scalar output", out.data.shape)
    if not np.isfinite(out.data):
        raise FloatingPointError("grad_check: non-finite function value")
    if out._tape is tp:
        tp.backward(out)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in pts]

    worst = 0.0
    for p, ana in zip(pts, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn(*pts).data)
            flat[i] = orig - h
            f_minus = float(fn(*pts).data)
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise FloatingPointError("grad_check: non-finite function value")
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(ana.reshape(-1)[i])
            rel = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-8)
            worst = max(worst, rel)
    return worst
