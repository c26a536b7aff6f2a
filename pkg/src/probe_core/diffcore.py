"""
Reverse-mode differentiation over dense numpy tensors.

Every operation builds a Node that records its primitive and parent nodes. Values are
computed eagerly as the graph is built, and `evaluate` recomputes the whole graph from
the current leaf values. Finite-difference checks and frozen-noise replays both rely
on that: noise lives in constant leaves, so re-evaluating replays the same draw.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from collections.abc import Iterable, Sequence
from typing import Any, Union

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

ArrayLike = Union[float, int, Sequence[Any], np.ndarray]


class Node:
    """
    A tensor in the computation graph.

    Leaves carry data (optionally trainable); interior nodes carry the primitive that
    produced them and their parents. `value` always holds the latest forward result.
    """

    __slots__ = ("value", "primitive", "parents", "trainable", "label")

    def __init__(
        self,
        value: ArrayLike,
        primitive: Primitive | None = None,
        parents: tuple[Node, ...] = (),
        trainable: bool = False,
        label: str | None = None,
    ):
        self.value = np.array(value, dtype=np.float64)
        self.primitive = primitive
        self.parents = parents
        self.trainable = trainable
        self.label = label
        if primitive is None and not np.all(np.isfinite(self.value)):
            raise NonFiniteError(f"Leaf {self.describe()} holds non-finite values")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def is_leaf(self) -> bool:
        return self.primitive is None

    def describe(self) -> str:
        op = self.primitive.name if self.primitive else ("param" if self.trainable else "const")
        return f"'{self.label}' ({op})" if self.label else f"<{op} {self.shape}>"

    def named(self, label: str) -> Node:
        self.label = label
        return self

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __add__(self, other: Node | ArrayLike) -> Node:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Node:
        return add(other, self)

    def __sub__(self, other: Node | ArrayLike) -> Node:
        return add(self, neg(other))

    def __rsub__(self, other: ArrayLike) -> Node:
        return add(other, neg(self))

    def __mul__(self, other: Node | ArrayLike) -> Node:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Node:
        return mul(other, self)

    def __neg__(self) -> Node:
        return neg(self)

    def __truediv__(self, other: ArrayLike) -> Node:
        if isinstance(other, Node):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other: Node | ArrayLike) -> Node:
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> Node:
        return matmul(other, self)

    def __pow__(self, exponent: ArrayLike) -> Node:
        return power(self, exponent)

    def __repr__(self) -> str:
        return f"Node({self.describe()}, shape={self.shape})"


Expression = Node


class Primitive(ABC):
    """
    Base class for graph primitives.

    Subclasses implement `forward` over parent values and `backward`, which maps the
    gradient of the output to one gradient per parent (None where no gradient flows).
    """

    name: str = "base"

    def __init__(self, **attrs: Any):
        self.attrs = attrs

    @abstractmethod
    def forward(self, *values: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def backward(
        self, grad: np.ndarray, out: np.ndarray, *values: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        pass


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Add(Primitive):
    name = "add"

    def forward(self, a, b):
        return a + b

    def backward(self, grad, out, a, b):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Mul(Primitive):
    name = "mul"

    def forward(self, a, b):
        return a * b

    def backward(self, grad, out, a, b):
        return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)


class MatMul(Primitive):
    name = "matmul"

    def forward(self, a, b):
        return np.matmul(a, b)

    def backward(self, grad, out, a, b):
        if a.ndim == 1 and b.ndim == 1:
            return grad * b, grad * a
        a2 = a[None, :] if a.ndim == 1 else a
        b2 = b[:, None] if b.ndim == 1 else b
        g = grad
        if a.ndim == 1:
            g = np.expand_dims(g, -2)
        if b.ndim == 1:
            g = np.expand_dims(g, -1)
        ga = np.matmul(g, np.swapaxes(b2, -1, -2))
        gb = np.matmul(np.swapaxes(a2, -1, -2), g)
        ga = _unbroadcast(ga, a2.shape).reshape(a.shape)
        gb = _unbroadcast(gb, b2.shape).reshape(b.shape)
        return ga, gb


class Power(Primitive):
    """x ** p for strictly positive x and a constant exponent p."""

    name = "power"

    def forward(self, a):
        if np.any(a <= 0):
            raise DomainError("power requires a strictly positive base; route signs explicitly")
        return np.power(a, self.attrs["exponent"])

    def backward(self, grad, out, a):
        p = self.attrs["exponent"]
        return (_unbroadcast(grad * p * np.power(a, p - 1.0), a.shape),)


class Exp(Primitive):
    name = "exp"

    def forward(self, a):
        return np.exp(a)

    def backward(self, grad, out, a):
        return (grad * out,)


class Log(Primitive):
    name = "log"

    def forward(self, a):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(a)

    def backward(self, grad, out, a):
        return (grad / a,)


class Sigmoid(Primitive):
    name = "sigmoid"

    def forward(self, a):
        return expit(a)

    def backward(self, grad, out, a):
        return (grad * out * (1.0 - out),)


class Tanh(Primitive):
    name = "tanh"

    def forward(self, a):
        return np.tanh(a)

    def backward(self, grad, out, a):
        return (grad * (1.0 - out * out),)


class Softmax(Primitive):
    name = "softmax"

    def forward(self, a):
        shifted = np.exp(a - a.max(axis=-1, keepdims=True))
        return shifted / shifted.sum(axis=-1, keepdims=True)

    def backward(self, grad, out, a):
        return (out * (grad - (grad * out).sum(axis=-1, keepdims=True)),)


class Concat(Primitive):
    name = "concat"

    def forward(self, *values):
        return np.concatenate(values, axis=self.attrs["axis"])

    def backward(self, grad, out, *values):
        axis = self.attrs["axis"]
        bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
        return tuple(np.split(grad, bounds, axis=axis))


class Take(Primitive):
    """Index-select along one axis with a 1-D integer index."""

    name = "take"

    def forward(self, a):
        return np.take(a, self.attrs["indices"], axis=self.attrs["axis"])

    def backward(self, grad, out, a):
        axis = self.attrs["axis"]
        full = np.zeros_like(a)
        np.add.at(np.moveaxis(full, axis, 0), self.attrs["indices"], np.moveaxis(grad, axis, 0))
        return (full,)


class Sum(Primitive):
    name = "sum"

    def forward(self, a):
        return a.sum(axis=self.attrs["axis"], keepdims=self.attrs["keepdims"])

    def backward(self, grad, out, a):
        axis = self.attrs["axis"]
        if axis is not None and not self.attrs["keepdims"]:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).copy(),)


class Mean(Primitive):
    name = "mean"

    def forward(self, a):
        return a.mean(axis=self.attrs["axis"], keepdims=self.attrs["keepdims"])

    def backward(self, grad, out, a):
        axis = self.attrs["axis"]
        count = a.size if axis is None else a.shape[axis]
        if axis is not None and not self.attrs["keepdims"]:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad / count, a.shape).copy(),)


class MaxLast(Primitive):
    """
    Max over the last axis.

    The gradient goes to the first maximal entry, so ties resolve toward the lowest
    index. With `stop_gradient` the value is treated as a constant.
    """

    name = "max"

    def forward(self, a):
        return a.max(axis=-1, keepdims=self.attrs["keepdims"])

    def backward(self, grad, out, a):
        if self.attrs["stop_gradient"]:
            return (None,)
        if not self.attrs["keepdims"]:
            grad = np.expand_dims(grad, -1)
        mask = np.zeros_like(a)
        np.put_along_axis(mask, a.argmax(axis=-1)[..., None], 1.0, axis=-1)
        return (mask * grad,)


class Indicator(Primitive):
    """0/1 mask of `a > 0`, `a < 0` or `a == 0`; carries no gradient."""

    name = "indicator"

    def forward(self, a):
        relation = self.attrs["relation"]
        if relation == "gt":
            return (a > 0).astype(np.float64)
        if relation == "lt":
            return (a < 0).astype(np.float64)
        return (a == 0).astype(np.float64)

    def backward(self, grad, out, a):
        return (None,)


class Reshape(Primitive):
    name = "reshape"

    def forward(self, a):
        return a.reshape(self.attrs["shape"])

    def backward(self, grad, out, a):
        return (grad.reshape(a.shape),)


PRIMITIVES: dict[str, type[Primitive]] = {
    cls.name: cls
    for cls in (
        Add,
        Mul,
        MatMul,
        Power,
        Exp,
        Log,
        Sigmoid,
        Tanh,
        Softmax,
        Concat,
        Take,
        Sum,
        Mean,
        MaxLast,
        Indicator,
        Reshape,
    )
}


def _as_node(x: Node | ArrayLike) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _run(primitive: Primitive, parents: Sequence[Node], label: str | None = None) -> np.ndarray:
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            value = primitive.forward(*(p.value for p in parents))
    except ValueError as e:
        shapes = ", ".join(str(p.shape) for p in parents)
        raise ShapeError(f"{primitive.name} cannot combine shapes {shapes}: {e}") from e
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        where = f"'{label}' ({primitive.name})" if label else f"{primitive.name} node"
        raise NonFiniteError(
            f"Non-finite value produced by {where} from parents "
            f"{[p.describe() for p in parents]}",
            op=primitive.name,
            label=label,
        )
    return value


def apply(primitive: Primitive, *parents: Node | ArrayLike) -> Node:
    """Build a node for `primitive` over `parents` and compute its value."""
    nodes = tuple(_as_node(p) for p in parents)
    node = Node.__new__(Node)
    node.primitive = primitive
    node.parents = nodes
    node.trainable = False
    node.label = None
    node.value = _run(primitive, nodes)
    return node


def constant(value: ArrayLike, label: str | None = None) -> Node:
    return Node(value, label=label)


def parameter(value: ArrayLike, label: str | None = None) -> Node:
    return Node(value, trainable=True, label=label)


def add(a: Node | ArrayLike, b: Node | ArrayLike) -> Node:
    return apply(Add(), a, b)


def mul(a: Node | ArrayLike, b: Node | ArrayLike) -> Node:
    return apply(Mul(), a, b)


def neg(a: Node | ArrayLike) -> Node:
    return apply(Mul(), a, -1.0)


def matmul(a: Node | ArrayLike, b: Node | ArrayLike) -> Node:
    return apply(MatMul(), a, b)


def power(a: Node | ArrayLike, exponent: ArrayLike) -> Node:
    return apply(Power(exponent=np.asarray(exponent, dtype=np.float64)), a)


def exp(a: Node | ArrayLike) -> Node:
    return apply(Exp(), a)


def log(a: Node | ArrayLike) -> Node:
    return apply(Log(), a)


def sigmoid(a: Node | ArrayLike) -> Node:
    return apply(Sigmoid(), a)


def tanh(a: Node | ArrayLike) -> Node:
    return apply(Tanh(), a)


def softmax(a: Node | ArrayLike) -> Node:
    return apply(Softmax(), a)


def concat(nodes: Sequence[Node | ArrayLike], axis: int = -1) -> Node:
    return apply(Concat(axis=axis), *nodes)


def take(a: Node | ArrayLike, indices: Sequence[int] | np.ndarray, axis: int = 0) -> Node:
    return apply(Take(indices=np.asarray(indices, dtype=np.intp).reshape(-1), axis=axis), a)


def reduce_sum(a: Node | ArrayLike, axis: int | None = None, keepdims: bool = False) -> Node:
    return apply(Sum(axis=axis, keepdims=keepdims), a)


def reduce_mean(a: Node | ArrayLike, axis: int | None = None, keepdims: bool = False) -> Node:
    return apply(Mean(axis=axis, keepdims=keepdims), a)


def max_last(a: Node | ArrayLike, keepdims: bool = False, stop_gradient: bool = False) -> Node:
    return apply(MaxLast(keepdims=keepdims, stop_gradient=stop_gradient), a)


def indicator(a: Node | ArrayLike, relation: str = "gt") -> Node:
    if relation not in ("gt", "lt", "eq"):
        raise ValueError(f"Unknown relation: {relation}")
    return apply(Indicator(relation=relation), a)


def reshape(a: Node | ArrayLike, shape: Sequence[int]) -> Node:
    return apply(Reshape(shape=tuple(shape)), a)


def stack(nodes: Sequence[Node | ArrayLike], axis: int = 0) -> Node:
    """Stack equally-shaped nodes along a new axis."""
    parts = [_as_node(n) for n in nodes]
    expanded = []
    for p in parts:
        shape = list(p.shape)
        shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
        expanded.append(reshape(p, shape))
    return concat(expanded, axis=axis)


def log_softmax(a: Node | ArrayLike) -> Node:
    """Numerically stable log-softmax over the last axis."""
    shifted = add(a, neg(max_last(a, keepdims=True, stop_gradient=True)))
    return add(shifted, neg(log(reduce_sum(exp(shifted), axis=-1, keepdims=True))))


def _topological_order(root: Node) -> list[Node]:
    """Parents-first order of every node reachable from `root` (iterative DFS)."""
    order: list[Node] = []
    visited: set[int] = set()
    stack_: list[tuple[Node, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack_.append((parent, False))
    return order


def evaluate(expr: Node) -> np.ndarray:
    """
    Recompute `expr` from the current values of its leaves.

    Deterministic: the same leaf values always give bit-identical results.
    """
    for node in _topological_order(expr):
        if not node.is_leaf:
            node.value = _run(node.primitive, node.parents, node.label)  # type: ignore[arg-type]
    return expr.value


def gradient(
    expr: Node, wrt: Iterable[Node], allow_unused: bool = False
) -> dict[Node, np.ndarray]:
    """
    Reverse-accumulate d(expr)/d(leaf) for each requested leaf.

    Args:
        expr: Scalar-valued root.
        wrt: Leaves to differentiate with respect to.
        allow_unused: Return zeros for leaves outside the graph instead of raising.

    Returns:
        Mapping from each leaf to a gradient array of the leaf's shape.
    """
    wrt = list(wrt)
    if expr.size != 1:
        raise GraphError(f"gradient needs a scalar root, got shape {expr.shape}")

    order = _topological_order(expr)
    in_graph = {id(n) for n in order}
    for leaf in wrt:
        if id(leaf) not in in_graph and not allow_unused:
            raise GraphError(f"Leaf {leaf.describe()} is not part of the expression graph")

    grads: dict[int, np.ndarray] = {id(expr): np.ones_like(expr.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.is_leaf:
            continue
        parent_grads = node.primitive.backward(  # type: ignore[union-attr]
            g, node.value, *(p.value for p in node.parents)
        )
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
        if node is not expr:
            del grads[id(node)]

    return {leaf: grads.get(id(leaf), np.zeros_like(leaf.value)).copy() for leaf in wrt}


def check_gradient(expr: Node, wrt: Iterable[Node], step: float = 1e-4) -> float:
    """
    Compare analytic gradients with central finite differences.

    Returns the worst component-wise relative error, using the denominator
    max(|analytic|, |numeric|, 1e-8). Leaves outside the graph contribute zero error.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    wrt = list(wrt)
    analytic = gradient(expr, wrt, allow_unused=True)
    worst = 0.0
    try:
        for leaf in wrt:
            flat = leaf.value.reshape(-1)
            expected = analytic[leaf].reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + step
                upper = float(evaluate(expr).reshape(-1)[0])
                flat[i] = original - step
                lower = float(evaluate(expr).reshape(-1)[0])
                flat[i] = original
                numeric = (upper - lower) / (2.0 * step)
                denom = max(abs(expected[i]), abs(numeric), 1e-8)
                worst = max(worst, abs(expected[i] - numeric) / denom)
    finally:
        evaluate(expr)
    logger.debug(f"Gradient check over {len(wrt)} leaves: worst relative error {worst:.3e}")
    return worst


class ShapeError(Exception):
    """Raised when a primitive receives incompatible operand shapes."""

    pass


class DomainError(Exception):
    """Raised when a primitive is applied outside its domain."""

    pass


class NonFiniteError(Exception):
    """Raised when a node produces NaN or infinite values."""

    def __init__(self, message: str, op: str | None = None, label: str | None = None):
        super().__init__(message)
        self.op = op
        self.label = label


class GraphError(Exception):
    """Raised for malformed gradient requests."""

    pass
