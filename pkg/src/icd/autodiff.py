"""Small reverse-mode autodiff over float64 numpy arrays.

A ``Node`` wraps a value array, an accumulated gradient and the closure that
pushes its gradient to the nodes it was computed from. Broadcasting is limited
to identical shapes or a scalar operand; bias addition goes through ``linear``.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    pass


class ContractError(ValueError):
    pass


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Evaluate without recording backward closures (frozen / target passes)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Node:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents: Sequence["Node"] = (), backward_fn=None,
                 requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = backward_fn
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Node{tag}(shape={self.shape})"

    # operator sugar
    def __add__(self, other):
        return add(self, _as_node(other))

    def __radd__(self, other):
        return add(_as_node(other), self)

    def __sub__(self, other):
        return sub(self, _as_node(other))

    def __rsub__(self, other):
        return sub(_as_node(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _as_node(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, _as_node(other))


def parameter(value, name: str | None = None) -> Node:
    return Node(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def constant(value) -> Node:
    return Node(value)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _make(value, parents, backward_fn) -> Node:
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Node(value, parents, backward_fn, requires_grad=True)
    return Node(value)


def _is_scalar(a: np.ndarray) -> bool:
    return a.ndim == 0 or a.size == 1 and a.ndim <= 1


def _check_broadcast(a: Node, b: Node, op: str) -> None:
    if a.shape == b.shape or _is_scalar(a.value) or _is_scalar(b.value):
        return
    raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, like: np.ndarray) -> np.ndarray:
    if grad.shape == like.shape:
        return grad
    return np.full(like.shape, grad.sum())


# ----------------------------------------------------------------------------
# operations


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions disagree for {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        return g @ bv.T, av.T @ g

    return _make(av @ bv, (a, b), back)


def linear(x: Node, w: Node, b: Node) -> Node:
    """x @ w + b with b of shape (out,) added to every row."""
    if x.value.ndim != 2 or w.value.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear: inner dimensions disagree for {x.shape} @ {w.shape}")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"linear: bias shape {b.shape} does not match {w.shape}")
    xv, wv = x.value, w.value

    def back(g):
        return g @ wv.T, xv.T @ g, g.sum(axis=0)

    return _make(xv @ wv + b.value, (x, w, b), back)


def add(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "add")
    av, bv = a.value, b.value

    def back(g):
        return _reduce_to(g, av), _reduce_to(g, bv)

    return _make(av + bv, (a, b), back)


def sub(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "sub")
    av, bv = a.value, b.value

    def back(g):
        return _reduce_to(g, av), _reduce_to(-g, bv)

    return _make(av - bv, (a, b), back)


def mul(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value

    def back(g):
        return _reduce_to(g * bv, av), _reduce_to(g * av, bv)

    return _make(av * bv, (a, b), back)


def scale(a: Node, k: float) -> Node:
    return _make(a.value * k, (a,), lambda g: (g * k,))


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def square(a: Node) -> Node:
    av = a.value
    return _make(av * av, (a,), lambda g: (2.0 * av * g,))


def concat(nodes: Sequence[Node], axis: int = 1) -> Node:
    values = [n.value for n in nodes]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[v.shape for v in values]}") from exc
    cuts = np.cumsum([v.shape[axis] for v in values])[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(out, tuple(nodes), back)


def sqrt(a: Node) -> Node:
    y = np.sqrt(a.value)
    return _make(y, (a,), lambda g: (g * 0.5 / y,))


def row_sum(a: Node) -> Node:
    """(B, D) -> (B,)"""
    if a.value.ndim != 2:
        raise DimensionError(f"row_sum needs a matrix, got {a.shape}")
    d = a.shape[1]
    return _make(a.value.sum(axis=1), (a,), lambda g: (np.repeat(g[:, None], d, axis=1),))


def total(a: Node) -> Node:
    shape = a.shape
    return _make(a.value.sum(), (a,), lambda g: (np.full(shape, float(g)),))


def mean(a: Node) -> Node:
    shape, n = a.shape, a.value.size
    return _make(a.value.sum() / n, (a,), lambda g: (np.full(shape, float(g) / n),))


def stop_gradient(a: Node) -> Node:
    return Node(a.value)


# ----------------------------------------------------------------------------
# backward


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node."""
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ----------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float = 1e-3) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    Parameters missing from ``grads`` are treated as having zero gradient.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif g.shape != p.shape:
            raise DimensionError(f"adam: grad for {name!r} has shape {g.shape}, param {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def grads_of(nodes: dict[str, Node]) -> dict[str, np.ndarray]:
    return {k: n.grad for k, n in nodes.items() if n.grad is not None}


def zero_grads(nodes: Iterable[Node]) -> None:
    for n in nodes:
        n.grad = None


# ----------------------------------------------------------------------------
# checking


def gradcheck(fn, inputs: list[np.ndarray], h: float = 1e-6) -> float:
    """Worst relative error between backward() and central differences.

    ``fn`` maps a list of parameter Nodes to a scalar Node. The relative
    error per input is ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
    """
    nodes = [parameter(np.array(x, dtype=np.float64)) for x in inputs]
    backward(fn(nodes))
    worst = 0.0
    for node in nodes:
        analytic = np.zeros_like(node.value) if node.grad is None else node.grad
        numeric = np.zeros_like(node.value)
        flat = node.value.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            with no_grad():
                flat[i] = old + h
                up = float(fn(nodes).value)
                flat[i] = old - h
                down = float(fn(nodes).value)
            flat[i] = old
            numeric.reshape(-1)[i] = (up - down) / (2 * h)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return worst
