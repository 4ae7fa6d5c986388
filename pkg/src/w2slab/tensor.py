"""Minimal dense tensor engine with reverse-mode automatic differentiation.

Every primitive that sees an input with ``requires_grad`` appends a
:class:`Node` to the active :class:`Tape` (if any) and links the node to its
output tensor, so gradients can be obtained either by replaying an explicit
tape or by a topological sort of the graph hanging off the loss.

Data lives in numpy arrays. Training runs in float32; gradient checks use
float64 inputs, and every op preserves the dtype of its operands.
"""

from __future__ import annotations

import logging
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, NumericError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

_ACTIVE_TAPES: list["Tape"] = []


class Node:
    """One executed primitive: inputs, output and the vector-Jacobian product."""

    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op: str, inputs: tuple["Tensor", ...], output: "Tensor",
                 vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp

    def __repr__(self) -> str:
        return f"Node({self.op}, out={self.output.shape})"


class Tape:
    """Ordered record of executed primitives.

    Use as a context manager to record every differentiable op executed inside
    the block::

        with Tape() as tape:
            loss = model(x).sum()
        backward(loss, tape)
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPES.remove(self)

    @classmethod
    def from_graph(cls, root: "Tensor") -> "Tape":
        """Rebuild a tape (topological order) from the graph reachable from ``root``."""
        tape = cls()
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            node = t._node
            if node is None:
                continue
            if expanded:
                tape.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((t, True))
            for inp in reversed(node.inputs):
                if inp._node is not None and id(inp._node) not in seen:
                    stack.append((inp, False))
        return tape


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, (np.ndarray, np.generic)):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        return arr
    return np.asarray(data, dtype=dtype or DEFAULT_DTYPE)


class Tensor:
    """Dense row-major array with an optional gradient accumulator."""

    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: Node | None = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis: int | None = None) -> "Tensor":
        return tsum(self, axis)

    def mean(self) -> "Tensor":
        return mean(self)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE), requires_grad=False)


def _make(op: str, out_data: np.ndarray, inputs: Sequence[Tensor],
          vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]) -> Tensor:
    out = Tensor(out_data, requires_grad=False)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(op, tuple(inputs), out, vjp)
        out._node = node
        for tape in _ACTIVE_TAPES:
            tape.record(node)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data + b.data
    return _make("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data - b.data
    return _make("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data * b.data
    return _make("mul", out, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    return _make("relu", out, (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)
    return _make("log", out, (x,), lambda g: (g / x.data,))


def clamp(x: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip into [lo, hi]; gradient passes only where the input was inside the range."""
    out = np.clip(x.data, lo, hi)
    inside = np.ones(x.shape, dtype=bool)
    if lo is not None:
        inside &= x.data >= lo
    if hi is not None:
        inside &= x.data <= hi
    return _make("clamp", out, (x,), lambda g: (g * inside,))


# -- reductions and shape ------------------------------------------------------

def tsum(x: Tensor, axis: int | None = None) -> Tensor:
    out = np.sum(x.data, axis=axis)
    out = np.asarray(out, dtype=x.dtype)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(x.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).astype(x.dtype),)

    return _make("sum", out, (x,), vjp)


def mean(x: Tensor) -> Tensor:
    n = x.size
    out = np.asarray(np.sum(x.data) / n, dtype=x.dtype)
    return _make("mean", out, (x,), lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(tuple(shape))
    return _make("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Pick ``x[i, index[i]]`` for every row; the index itself carries no gradient."""
    if x.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-d tensor, got shape {x.shape}")
    index = np.asarray(index, dtype=np.int64)
    if index.shape != (x.shape[0],):
        raise ShapeError(f"index shape {index.shape} does not match rows {x.shape[0]}")
    rows = np.arange(x.shape[0])
    out = x.data[rows, index]

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[rows, index] = g
        return (gx,)

    return _make("gather", out, (x,), vjp)


# -- linear algebra ------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _lift(a)
    b = _lift(b, a)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {list(a.shape)} x {list(b.shape)}")
    out = a.data @ b.data
    return _make("matmul", out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def _conv_out(size: int, k: int, stride: int, pad: int, axis: str) -> int:
    span = size + 2 * pad - k
    if span < 0 or span % stride != 0:
        from .errors import ConfigError
        raise ConfigError(
            f"conv2d: ({axis}={size} + 2*{pad} - {k}) / {stride} + 1 is not a positive integer")
    return span // stride + 1


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0,
           bias: Tensor | None = None) -> Tensor:
    """2-d cross-correlation (no kernel flip) with zero padding.

    ``x`` is [N, C, H, W] and ``kernel`` is [O, C, kh, kw]; an optional ``bias``
    of shape [O] is added per output channel.
    """
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"conv2d shape mismatch: input {list(x.shape)}, kernel {list(kernel.shape)}")
    if stride < 1 or pad < 0:
        from .errors import ConfigError
        raise ConfigError(f"conv2d needs stride >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    ho = _conv_out(h, kh, stride, pad, "H")
    wo = _conv_out(w, kw, stride, pad, "W")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = np.empty((n, ho, wo, c, kh, kw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
            cols[:, :, :, :, i, j] = patch.transpose(0, 2, 3, 1)
    cols = cols.reshape(n * ho * wo, c * kh * kw)
    kmat = kernel.data.reshape(o, -1)
    out = cols @ kmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def vjp(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gk = (gmat.T @ cols).reshape(kernel.shape)
        gcols = (gmat @ kmat).reshape(n, ho, wo, c, kh, kw)
        gxp = np.zeros(xp.shape, dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
        grads = [gx, gk]
        if bias is not None:
            grads.append(gmat.sum(axis=0))
        return tuple(grads)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _make("conv2d", np.ascontiguousarray(out), inputs, vjp)


# -- softmax family --------------------------------------------------------------

def _check_finite(x: Tensor, op: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"{op}: non-finite input")


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise, max-shifted log-softmax of an [N, K] tensor."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"log_softmax expects [N, K>=2], got {list(logits.shape)}")
    _check_finite(logits, "log_softmax")
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)
    return _make("log_softmax", out, (logits,),
                 lambda g: (g - soft * g.sum(axis=1, keepdims=True),))


def softmax(logits: Tensor) -> Tensor:
    if logits.ndim != 2:
        raise ShapeError(f"softmax expects [N, K], got {list(logits.shape)}")
    _check_finite(logits, "softmax")
    z = logits.data
    e = np.exp(z - z.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)
    return _make("softmax", out, (logits,),
                 lambda g: (out * (g - (g * out).sum(axis=1, keepdims=True)),))


# -- backward ----------------------------------------------------------------------

def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every requires-grad tensor reachable from ``loss``.

    When ``tape`` is omitted the graph attached to ``loss`` is sorted
    topologically and replayed instead.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    if tape is None:
        tape = Tape.from_graph(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        _accumulate(node.output, g)
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp._node is None:
                _accumulate(inp, gi)
            else:
                key = id(inp)
                grads[key] = grads[key] + gi if key in grads else gi
    # the loss itself was never an input; leaves-only graphs end up here
    if loss._node is None:
        _accumulate(loss, np.ones_like(loss.data))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=t.dtype).reshape(t.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


# -- gradient check ------------------------------------------------------------------

def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               floor: float = 1e-4) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``fn`` maps ``inputs`` to a scalar tensor. Only inputs with
    ``requires_grad`` are checked; they should be float64. The relative error
    of a coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    checked = [t for t in inputs if t.requires_grad]
    for t in checked:
        if t.dtype != np.float64:
            logger.warning("grad_check on %s input; float64 recommended", t.dtype)
        t.grad = None
    loss = fn(*inputs)
    backward(loss)
    worst = 0.0
    for t in checked:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        flat = t.data.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = fn(*inputs).item()
            flat[idx] = orig - eps
            f_minus = fn(*inputs).item()
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            a = float(analytic.reshape(-1)[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
