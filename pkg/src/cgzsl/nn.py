"""Minimal reverse-mode autodiff over float64 matrices, dense nets and Adam.

Only the operations the generator/discriminator pair needs are provided.
Every value is a numpy ``float64`` array; matrices are 2-D, losses are 0-d.
Gradients are built by recording each operation's parents and a closure
mapping the output gradient onto the parents' gradients; :func:`backward`
orders the recorded graph topologically and replays it in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

DTYPE = np.float64
NORM_EPS = 1e-12
LEAKY_SLOPE = 0.2
ACTIVATIONS = ("linear", "leaky-relu", "relu")


class Tensor:
    """A value in the computation graph.

    Leaves created with ``requires_grad=True`` are parameters; their ``grad``
    is filled by :func:`backward`. Interior nodes carry their parents and a
    backward closure.
    """

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")
    # make ``ndarray <op> Tensor`` dispatch to the reflected Tensor method
    __array_ufunc__ = None

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], Sequence[np.ndarray]] | None = None,
    ):
        self.value = np.asarray(value, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: float):
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(np.array(value, dtype=DTYPE), requires_grad=True, name=name)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value: np.ndarray, parents: tuple[Tensor, ...], fn) -> Tensor:
    if not any(p.requires_grad for p in parents):
        return Tensor(value)
    return Tensor(value, requires_grad=True, _parents=parents, _backward=fn)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise and structural operations


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return _node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return _node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return _node(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def scale(a, c: float) -> Tensor:
    a = _lift(a)
    return _node(a.value * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Matrix product ``a @ b`` of an m×k and a k×n matrix."""
    a, b = _lift(a), _lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return _node(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def transpose(a) -> Tensor:
    a = _lift(a)
    return _node(a.value.T, (a,), lambda g: (g.T,))


def concat_cols(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"cannot concatenate {a.shape} and {b.shape} column-wise")
    k = a.shape[1]
    return _node(
        np.concatenate([a.value, b.value], axis=1),
        (a, b),
        lambda g: (g[:, :k], g[:, k:]),
    )


def take_rows(a, index) -> Tensor:
    """Gather rows ``a[index]``; repeated indices accumulate gradient."""
    a = _lift(a)
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.value[index], (a,), back)


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a, slope: float = LEAKY_SLOPE) -> Tensor:
    a = _lift(a)
    factor = np.where(a.value > 0, 1.0, slope)
    return _node(a.value * factor, (a,), lambda g: (g * factor,))


def log(a) -> Tensor:
    a = _lift(a)
    return _node(np.log(a.value), (a,), lambda g: (g / a.value,))


def square(a) -> Tensor:
    a = _lift(a)
    return _node(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp into ``[lo, hi]``; gradient passes only where the input is inside."""
    a = _lift(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return _node(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def total(a) -> Tensor:
    a = _lift(a)
    return _node(np.asarray(a.value.sum()), (a,), lambda g: (np.full_like(a.value, g),))


def mean(a) -> Tensor:
    a = _lift(a)
    n = a.value.size
    if n == 0:
        raise ContractError("mean of an empty tensor")
    return _node(np.asarray(a.value.mean()), (a,), lambda g: (np.full_like(a.value, g / n),))


# ---------------------------------------------------------------------------
# geometry and classification kernels


def l2_normalize_rows(m) -> Tensor:
    """Scale each row to unit Euclidean norm.

    Rows whose norm is below ``1e-12`` are passed through unchanged (and so is
    their gradient).
    """
    m = _lift(m)
    norms = np.sqrt(np.sum(m.value * m.value, axis=1, keepdims=True))
    degenerate = norms < NORM_EPS
    safe = np.where(degenerate, 1.0, norms)
    out = m.value / safe

    def back(g):
        proj = np.sum(g * out, axis=1, keepdims=True)
        gin = (g - out * proj) / safe
        return (np.where(degenerate, g, gin),)

    return _node(out, (m,), back)


def cosine_matrix(x, p) -> Tensor:
    """Cosine similarity between every row of ``x`` (m×d) and of ``p`` (c×d).

    The result is clamped to ``[-1, 1]``; a zero row on either side yields 0.
    """
    x, p = _lift(x), _lift(p)
    if x.value.ndim != 2 or p.value.ndim != 2 or x.shape[1] != p.shape[1]:
        raise ShapeError(f"cosine_matrix feature dims differ: {x.shape} vs {p.shape}")
    sims = matmul(l2_normalize_rows(x), transpose(l2_normalize_rows(p)))
    return clip(sims, -1.0, 1.0)


def softmax_cross_entropy(scores, labels, temperature: float = 1.0) -> Tensor:
    """Mean of ``-log softmax(temperature * scores)[label]`` over rows."""
    scores = _lift(scores)
    if temperature <= 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    labels = np.asarray(labels, dtype=np.intp)
    m, c = scores.shape
    if labels.shape != (m,):
        raise ShapeError(f"expected {m} labels, got shape {labels.shape}")
    if m == 0:
        raise ContractError("softmax_cross_entropy on an empty batch")
    if labels.min() < 0 or labels.max() >= c:
        raise IndexError(f"label out of range [0, {c})")
    z = temperature * scores.value
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    rows = np.arange(m)
    loss = -logp[rows, labels].mean()

    def back(g):
        probs = np.exp(logp)
        probs[rows, labels] -= 1.0
        return (probs * (g * temperature / m),)

    return _node(np.asarray(loss), (scores,), back)


# ---------------------------------------------------------------------------
# reverse pass


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> list[np.ndarray]:
    """Accumulate d(loss)/d(leaf) into every reachable parameter's ``grad``.

    Returns the gradients for ``params`` (zeros for parameters the loss does
    not depend on), in the given order.
    """
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    params = list(params) if params is not None else []
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    for p in params:
        if p.grad is None:
            p.zero_grad()
    return [p.grad for p in params]


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# dense networks


@dataclass
class Layer:
    weight: Tensor  # (fan_in, fan_out)
    bias: Tensor  # (fan_out,)
    activation: str


def _activate(x: Tensor, tag: str) -> Tensor:
    if tag == "linear":
        return x
    if tag == "leaky-relu":
        return leaky_relu(x)
    if tag == "relu":
        return relu(x)
    raise ContractError(f"unknown activation {tag!r}")


class DenseNet:
    """Stack of fully connected layers ``y = act(x @ W + b)``."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ContractError("a DenseNet needs at least one layer")
        for i, layer in enumerate(layers):
            if layer.activation not in ACTIVATIONS:
                raise ContractError(f"layer {i}: unsupported activation {layer.activation!r}")
            w, b = layer.weight.shape, layer.bias.shape
            if len(w) != 2 or b != (w[1],):
                raise ShapeError(f"layer {i}: weight {w} and bias {b} disagree")
            if i and layers[i - 1].weight.shape[1] != w[0]:
                raise ShapeError(f"layer {i}: input {w[0]} does not chain onto {layers[i - 1].weight.shape[1]}")
        self.layers = layers

    @classmethod
    def initialize(
        cls, sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator
    ) -> "DenseNet":
        """Glorot-uniform weights, zero biases."""
        if len(sizes) != len(activations) + 1:
            raise ContractError("need one activation per layer")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            layers.append(Layer(parameter(w), parameter(np.zeros(fan_out)), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def __call__(self, x) -> Tensor:
        x = _lift(x)
        if x.value.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"network expects (n, {self.input_dim}) input, got {x.shape}")
        for layer in self.layers:
            x = _activate(x @ layer.weight + layer.bias, layer.activation)
        return x

    def copy(self) -> "DenseNet":
        return DenseNet(
            [
                Layer(parameter(l.weight.value.copy()), parameter(l.bias.value.copy()), l.activation)
                for l in self.layers
            ]
        )


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with coupled L2 weight decay (``g + wd * w`` feeds the moments)."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 0.005,
        weight_decay: float = 1e-5,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.steps = 0

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def step(self, grads: Sequence[np.ndarray] | None = None) -> None:
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.value) for p in self.params]
        if len(grads) != len(self.params):
            raise ShapeError(f"{len(grads)} gradients for {len(self.params)} parameters")
        self.steps += 1
        bc1 = 1.0 - self.beta1**self.steps
        bc2 = 1.0 - self.beta2**self.steps
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.value.shape:
                raise ShapeError(f"gradient {g.shape} does not match parameter {p.value.shape}")
            if self.weight_decay:
                g = g + self.weight_decay * p.value
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
