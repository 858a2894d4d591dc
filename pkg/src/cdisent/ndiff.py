"""
Minimal dense-tensor arithmetic with reverse-mode differentiation.

Every operation returns a new immutable :class:`Tensor`. When any input
requires a gradient the operation records its parents and a backward
closure; :func:`backward` replays those records in reverse topological order
and fills the gradient buffers of a :class:`ParamSet`.

The op vocabulary is deliberately small (matmul, elementwise arithmetic,
exp/log, tanh/relu/softplus/sigmoid, softmax/log-softmax/logsumexp,
sum/mean, slicing, concat, reshape) and covers MLP encoders and decoders.
"""

import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logsumexp as _np_logsumexp

from .constant import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, LOG_CLAMP_MIN
from .logger import get_logger
from .utils import atomic_write_bytes


class NDiffError(Exception):
    """Base error for tensor operations."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ShapeError(NDiffError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(NDiffError):
    """Raised when an operation produces NaN or Inf from its inputs."""


class CheckpointFormatError(NDiffError):
    """Raised when a parameter checkpoint cannot be decoded."""


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


class Tensor:
    """An immutable n-dimensional array that may take part in differentiation."""

    __slots__ = ("data", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        array = np.array(data, dtype=dtype if dtype is not None else None, copy=True)
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float64)
        if not np.all(np.isfinite(array)):
            raise NonFiniteError("Tensor values must be finite")
        array.setflags(write=False)
        self.data = array
        self.requires_grad = requires_grad
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._op = "leaf"

    @classmethod
    def _from_op(cls, value: np.ndarray, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"Operation '{op}' produced non-finite values")
        out = cls.__new__(cls)
        value = np.asarray(value)
        value.setflags(write=False)
        out.data = value
        out._op = op
        track = _grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, power: float):
        return power_(self, power)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)


def as_tensor(value: ArrayLike, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype if dtype is not None else np.float64))


def _pair(a: ArrayLike, b: ArrayLike) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum grad over the axes that broadcasting added or stretched."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._from_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._from_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._from_op(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise a / b; denominators below 1e-12 are clamped (zero gradient there)."""
    a, b = _pair(a, b)
    clamped = b.data < LOG_CLAMP_MIN
    if np.any(clamped):
        get_logger().debug("ndiff", f"division clamped {int(clamped.sum())} denominators at {LOG_CLAMP_MIN}")
    denom = np.where(clamped, np.asarray(LOG_CLAMP_MIN, dtype=b.dtype), b.data)
    value = a.data / denom

    def backward(g):
        ga = g / denom
        gb = np.where(clamped, 0.0, -g * value / denom)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb.astype(b.dtype), b.shape)

    return Tensor._from_op(value, (a, b), backward, "div")


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def power_(a: Tensor, p: float) -> Tensor:
    a = as_tensor(a)
    value = a.data ** p
    return Tensor._from_op(value, (a,), lambda g: (g * p * a.data ** (p - 1),), "pow")


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim not in (1, 2) or b.ndim != 2:
        raise ShapeError(f"matmul supports (n,k)@(k,m) or (k,)@(k,m), got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        if a.ndim == 1:
            return g @ b.data.T, np.outer(a.data, g)
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    value = np.exp(a.data)
    return Tensor._from_op(value, (a,), lambda g: (g * value,), "exp")


def log(a: Tensor) -> Tensor:
    """Natural log with inputs clamped at 1e-12 (zero gradient where clamped)."""
    a = as_tensor(a)
    clamped = a.data < LOG_CLAMP_MIN
    if np.any(clamped):
        get_logger().debug("ndiff", f"log input clamped at {LOG_CLAMP_MIN} for {int(clamped.sum())} entries")
    safe = np.where(clamped, np.asarray(LOG_CLAMP_MIN, dtype=a.dtype), a.data)
    return Tensor._from_op(
        np.log(safe), (a,),
        lambda g: (np.where(clamped, 0.0, g / safe).astype(a.dtype),),
        "log",
    )


def sqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    clamped = a.data < LOG_CLAMP_MIN
    safe = np.where(clamped, np.asarray(LOG_CLAMP_MIN, dtype=a.dtype), a.data)
    value = np.sqrt(safe)
    return Tensor._from_op(
        value, (a,),
        lambda g: (np.where(clamped, 0.0, 0.5 * g / value).astype(a.dtype),),
        "sqrt",
    )


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    value = np.tanh(a.data)
    return Tensor._from_op(value, (a,), lambda g: (g * (1.0 - value * value),), "tanh")


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._from_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    value = expit(a.data)
    return Tensor._from_op(value, (a,), lambda g: (g * value * (1.0 - value),), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    a = as_tensor(a)
    value = np.logaddexp(np.zeros_like(a.data), a.data)
    return Tensor._from_op(value, (a,), lambda g: (g * expit(a.data),), "softplus")


def clip(a: Tensor, low: float, high: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)
    return Tensor._from_op(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), "clip")


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    value = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return Tensor._from_op(np.asarray(value, dtype=a.dtype), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), np.asarray(1.0 / count, dtype=a.dtype))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    value = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (value * (g - np.sum(g * value, axis=axis, keepdims=True)),)

    return Tensor._from_op(value, (a,), backward, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    lse = _np_logsumexp(a.data, axis=axis, keepdims=True)
    value = a.data - lse
    probs = np.exp(value)

    def backward(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return Tensor._from_op(value.astype(a.dtype), (a,), backward, "log_softmax")


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    lse = _np_logsumexp(a.data, axis=axis, keepdims=True)
    probs = np.exp(a.data - lse)
    value = lse if keepdims else np.squeeze(lse, axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * probs,)

    return Tensor._from_op(np.asarray(value, dtype=a.dtype), (a,), backward, "logsumexp")


def getitem(a: Tensor, index) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        grad = np.zeros(a.shape, dtype=a.dtype)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor._from_op(np.array(a.data[index]), (a,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    value = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(value, tensors, backward, "concat")


class Activation(str, Enum):
    TANH = "tanh"
    RELU = "relu"
    SOFTPLUS = "softplus"


_ACTIVATIONS: Dict[Activation, Callable[[Tensor], Tensor]] = {
    Activation.TANH: tanh,
    Activation.RELU: relu,
    Activation.SOFTPLUS: softplus,
}


class ParamSet:
    """
    Named trainable parameters with gradient buffers of identical shape.

    Parameters are stored as leaf tensors. Updating a parameter replaces its
    leaf tensor; tensors handed out earlier keep their values.

    Args:
        dtype: Value type of every parameter (float32 or float64).
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: Dict[str, Tensor] = {}
        self._grads: Dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        """Register a new parameter. Names must be unique."""
        if name in self._params:
            raise ValueError(f"Parameter '{name}' already exists")
        tensor = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)
        self._params[name] = tensor
        self._grads[name] = np.zeros(tensor.shape, dtype=self.dtype)
        return tensor

    def set(self, name: str, value: np.ndarray):
        """Replace the value of an existing parameter; the shape must not change."""
        current = self[name]
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != current.shape:
            raise ShapeError(f"Parameter '{name}' has shape {current.shape}, got {value.shape}")
        self._params[name] = Tensor(value, requires_grad=True)

    def __getitem__(self, name: str) -> Tensor:
        if name not in self._params:
            raise KeyError(f"Parameter '{name}' is not defined. Available parameters: {list(self._params)}")
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def value(self, name: str) -> np.ndarray:
        return self[name].data

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def set_grad(self, name: str, grad: np.ndarray):
        if grad.shape != self[name].shape:
            raise ShapeError(f"Gradient for '{name}' has shape {grad.shape}, expected {self[name].shape}")
        self._grads[name] = np.asarray(grad, dtype=self.dtype)

    def zero_grad(self):
        for name in self._grads:
            self._grads[name] = np.zeros(self[name].shape, dtype=self.dtype)

    @property
    def num_entries(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet(dtype)
        for name, tensor in self._params.items():
            out.add(name, tensor.data)
        return out

    def copy(self) -> "ParamSet":
        return self.astype(self.dtype)

    def state(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._params.items()}


@dataclass(frozen=True)
class MlpArch:
    """Layer sizes (input first, output last), hidden activation and parameter name prefix."""
    sizes: Tuple[int, ...]
    activation: Activation = Activation.TANH
    prefix: str = "mlp"

    def __post_init__(self):
        if len(self.sizes) < 2 or any(s <= 0 for s in self.sizes):
            raise ValueError(f"MLP needs at least two positive layer sizes, got {self.sizes}")

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def weight(self, layer: int) -> str:
        return f"{self.prefix}.w{layer}"

    def bias(self, layer: int) -> str:
        return f"{self.prefix}.b{layer}"


def init_mlp(params: ParamSet, arch: MlpArch, rng: np.random.Generator, zero_last: bool = False):
    """Register Glorot-normal weights and zero biases for arch."""
    for layer in range(arch.n_layers):
        fan_in, fan_out = arch.sizes[layer], arch.sizes[layer + 1]
        if zero_last and layer == arch.n_layers - 1:
            weight = np.zeros((fan_in, fan_out))
        else:
            weight = rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))
        params.add(arch.weight(layer), weight)
        params.add(arch.bias(layer), np.zeros(fan_out))


def mlp_forward(params: ParamSet, x: ArrayLike, arch: MlpArch) -> Tensor:
    """Apply the MLP described by arch; the last layer is linear."""
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=params.dtype))
    if x.ndim == 0 or x.shape[-1] != arch.sizes[0]:
        raise ShapeError(f"MLP '{arch.prefix}' expects last dimension {arch.sizes[0]}, got input shape {x.shape}")
    act = _ACTIVATIONS[Activation(arch.activation)]
    h = x
    for layer in range(arch.n_layers):
        h = matmul(h, params[arch.weight(layer)]) + params[arch.bias(layer)]
        if layer < arch.n_layers - 1:
            h = act(h)
    return h


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
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


def backward(loss: Tensor, params: ParamSet) -> ParamSet:
    """Fill the gradient buffers of params with d(loss)/d(param).

    Parameters that the loss does not depend on receive a zero gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: Dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    for node in reversed(_topological_order(loss)):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, parent_grad in zip(node._parents, node._backward(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad
    for name in params:
        grad = grads.get(id(params[name]))
        if grad is None:
            grad = np.zeros(params[name].shape, dtype=params.dtype)
        elif not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"Gradient of parameter '{name}' is not finite")
        params.set_grad(name, np.asarray(grad, dtype=params.dtype))
    return params


def grad_check(
    fn: Callable[[ParamSet], Tensor],
    params: ParamSet,
    eps: float,
    grads: Optional[Dict[str, np.ndarray]] = None,
) -> float:
    """Compare analytic gradients against fourth-order central differences in 64-bit.

    Args:
        fn: Maps a ParamSet to a scalar loss. Must be deterministic.
        params: Point at which gradients are checked (converted to float64).
        eps: Finite-difference step, must be positive.
        grads: Analytic gradients to check. Computed with backward() when omitted.

    Returns:
        max over entries of |analytic - cd| / max(|analytic|, |cd|, 1e-8)
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    probe = params.astype(np.float64)
    if grads is None:
        backward(fn(probe), probe)
        grads = {name: probe.grad(name).copy() for name in probe}

    max_err = 0.0
    for name in probe.names():
        base = probe.value(name).copy()
        analytic = np.asarray(grads[name], dtype=np.float64)
        for j in range(base.size):
            values = {}
            for step in (-2, -1, 1, 2):
                shifted = base.copy()
                shifted.flat[j] = base.flat[j] + step * eps
                probe.set(name, shifted)
                values[step] = fn(probe).item()
            # fourth-order central stencil
            cd = (values[-2] - 8.0 * values[-1] + 8.0 * values[1] - values[2]) / (12.0 * eps)
            if not np.isfinite(cd):
                raise NonFiniteError(f"Central difference for '{name}'[{j}] is not finite")
            a = float(analytic.flat[j])
            err = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
            max_err = max(max_err, err)
        probe.set(name, base)
    return max_err


@dataclass
class AdamState:
    """First/second moment buffers, step counter and Adam hyperparameters."""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, params: ParamSet, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999),
               eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
        for name in params:
            state.m[name] = np.zeros(params[name].shape, dtype=params.dtype)
            state.v[name] = np.zeros(params[name].shape, dtype=params.dtype)
        return state


def adam_step(params: ParamSet, state: AdamState) -> Tuple[ParamSet, AdamState]:
    """Apply one bias-corrected Adam update using the gradients stored in params."""
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name in params:
        grad = params.grad(name)
        if state.m[name].shape != grad.shape:
            raise ShapeError(f"Adam moments for '{name}' have shape {state.m[name].shape}, gradient {grad.shape}")
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad * grad
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        params.set(name, params.value(name) - update)
    return params, state


def encode_checkpoint(params: ParamSet) -> bytes:
    """Serialize params as: magic, version u32, then (name, rank, extents, f32 payload) records."""
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    for name in params:
        value = params.value(name)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_checkpoint(payload: bytes) -> ParamSet:
    if payload[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"Bad checkpoint magic {payload[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    if len(payload) < 8:
        raise CheckpointFormatError("Checkpoint truncated inside the header")
    (version,) = struct.unpack_from("<I", payload, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")

    params = ParamSet(np.float32)
    offset = 8

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(payload):
            raise CheckpointFormatError(f"Checkpoint truncated at byte {offset}, needed {n} more bytes")
        chunk = payload[offset:offset + n]
        offset += n
        return chunk

    while offset < len(payload):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        value = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        params.add(name, value.astype(np.float32))
    return params


def save_checkpoint(params: ParamSet, path: Union[str, Path]):
    atomic_write_bytes(path, encode_checkpoint(params))


def load_checkpoint(path: Union[str, Path]) -> ParamSet:
    return decode_checkpoint(Path(path).read_bytes())
