"""Compact reverse-mode autodiff over dense float64 arrays.

A Graph is a tape, rebuilt on every training step (define-by-run). Each
operation appends one node holding its kind, input node ids, the cached
forward value, and a closure that maps the output adjoint to input adjoints.
Node inputs always have smaller ids than the node itself, so a single reverse
sweep over ids is a valid reverse-topological order.
"""

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError


class _Node:
    __slots__ = ("op", "inputs", "value", "vjp")

    def __init__(self, op, inputs, value, vjp):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.vjp = vjp


class Tensor:
    """A float64 array, optionally attached to a graph node."""

    __slots__ = ("data", "graph", "node_id")

    def __init__(self, data, graph=None, node_id=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.graph = graph
        self.node_id = node_id

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, node={self.node_id})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return multiply(self, -1.0)


class Graph:
    """Append-only tape of operations."""

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, data):
        value = np.asarray(data, dtype=np.float64)
        return self._append("leaf", (), value, None)

    def _append(self, op, inputs, value, vjp):
        if not np.isfinite(value).all():
            raise NonFiniteError(f"op '{op}' produced a non-finite value")
        self.nodes.append(_Node(op, inputs, value, vjp))
        return Tensor(value, self, len(self.nodes) - 1)


def _lift(x, graph):
    if isinstance(x, Tensor):
        return x
    return graph.leaf(x)


def _pick_graph(*xs):
    graph = None
    for x in xs:
        if isinstance(x, Tensor) and x.graph is not None:
            if graph is None:
                graph = x.graph
            elif x.graph is not graph:
                raise ValueError("operands belong to different graphs")
    if graph is None:
        raise ValueError("at least one operand must be attached to a graph")
    return graph


def _unbroadcast(grad, shape):
    # reduce a broadcast adjoint back down to the operand's shape
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary(op, a, b, forward, vjp_factory):
    graph = _pick_graph(a, b)
    a = _lift(a, graph)
    b = _lift(b, graph)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None
    value = forward(a.data, b.data)
    return graph._append(op, (a.node_id, b.node_id), value, vjp_factory(a, b))


def add(a, b):
    return _binary(
        "add", a, b, np.add,
        lambda a, b: lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def subtract(a, b):
    return _binary(
        "subtract", a, b, np.subtract,
        lambda a, b: lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def multiply(a, b):
    return _binary(
        "multiply", a, b, np.multiply,
        lambda a, b: lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def matmul(a, b):
    graph = _pick_graph(a, b)
    a = _lift(a, graph)
    b = _lift(b, graph)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return graph._append(
        "matmul", (a.node_id, b.node_id), ad @ bd,
        lambda g: (g @ bd.T, ad.T @ g),
    )


def concat(parts):
    """Concatenate along the last axis."""
    if len(parts) == 0:
        raise ValueError("concat needs at least one tensor")
    graph = _pick_graph(*parts)
    parts = [_lift(p, graph) for p in parts]
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeMismatchError(
                f"concat: leading shape {p.shape} differs from {parts[0].shape}"
            )
    widths = [p.shape[-1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=-1))

    value = np.concatenate([p.data for p in parts], axis=-1)
    return graph._append("concat", tuple(p.node_id for p in parts), value, vjp)


def _unary(op, x, forward, vjp_factory):
    if not isinstance(x, Tensor) or x.graph is None:
        raise TypeError(f"{op} expects a graph-attached Tensor")
    value = forward(x.data)
    return x.graph._append(op, (x.node_id,), value, vjp_factory(x.data, value))


def relu(x):
    return _unary("relu", x, lambda d: np.maximum(d, 0.0),
                  lambda d, v: lambda g: (g * (d > 0.0),))


def tanh(x):
    return _unary("tanh", x, np.tanh,
                  lambda d, v: lambda g: (g * (1.0 - v * v),))


def square(x):
    return _unary("square", x, np.square,
                  lambda d, v: lambda g: (g * (2.0 * d),))


def _spread(g, shape, axis, keepdims):
    # inverse of a reduction: restore the reduced axis, then broadcast
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def reduce_sum(x, axis=None, keepdims=False):
    def vjp_factory(d, v):
        # broadcast view is safe: adjoints are never mutated in place
        return lambda g: (_spread(g, d.shape, axis, keepdims),)

    return _unary("reduce_sum", x, lambda d: d.sum(axis=axis, keepdims=keepdims), vjp_factory)


def reduce_mean(x, axis=None, keepdims=False):
    def vjp_factory(d, v):
        count = d.size if axis is None else d.shape[axis]
        return lambda g: (_spread(g, d.shape, axis, keepdims) / count,)

    return _unary("reduce_mean", x, lambda d: d.mean(axis=axis, keepdims=keepdims), vjp_factory)


def reduce_max(x, axis=None, keepdims=False):
    """Max reduction; the adjoint is routed to the first argmax on ties."""

    def forward(d):
        return d.max(axis=axis, keepdims=keepdims)

    def vjp_factory(d, v):
        if axis is None:
            flat_idx = int(d.argmax())

            def vjp(g):
                out = np.zeros_like(d)
                out.flat[flat_idx] = np.asarray(g).reshape(-1)[0]
                return (out,)

        else:
            idx = np.expand_dims(d.argmax(axis=axis), axis)

            def vjp(g):
                out = np.zeros_like(d)
                gg = g if keepdims else np.expand_dims(g, axis)
                np.put_along_axis(out, idx, gg, axis)
                return (out,)

        return vjp

    return _unary("reduce_max", x, forward, vjp_factory)


def gather_rows(x, indices):
    """Select rows of a 2-D tensor; duplicated indices accumulate gradient."""
    if not isinstance(x, Tensor) or x.graph is None:
        raise TypeError("gather_rows expects a graph-attached Tensor")
    if x.data.ndim != 2:
        raise ShapeMismatchError(f"gather_rows: input must be 2-D, got {x.shape}")
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1:
        raise ShapeMismatchError(f"gather_rows: indices must be 1-D, got {indices.shape}")
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[0]):
        raise ValueError("gather_rows: index out of range")
    d = x.data

    def vjp(g):
        out = np.zeros_like(d)
        np.add.at(out, indices, g)
        return (out,)

    return x.graph._append("gather_rows", (x.node_id,), d[indices], vjp)


def backward(graph, root):
    """Accumulate adjoints from a scalar root back to every graph node.

    Returns a node-id -> Tensor map with an entry for every reached node and a
    zero entry for every leaf the root does not depend on.
    """
    if not isinstance(root, Tensor) or root.graph is not graph or root.node_id is None:
        raise ValueError("root must be a tensor of this graph")
    if root.data.shape != ():
        raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
    adjoints = {root.node_id: np.ones(())}
    for nid in range(root.node_id, -1, -1):
        g = adjoints.get(nid)
        node = graph.nodes[nid]
        if g is None or node.vjp is None:
            continue
        for input_id, gi in zip(node.inputs, node.vjp(g)):
            if input_id in adjoints:
                adjoints[input_id] = adjoints[input_id] + gi
            else:
                adjoints[input_id] = gi
    grads = {nid: Tensor(g) for nid, g in adjoints.items()}
    for nid, node in enumerate(graph.nodes):
        if node.vjp is None and nid not in grads:
            grads[nid] = Tensor(np.zeros_like(node.value))
    return grads


def grad_check(f, x, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `f` takes one Tensor and returns a scalar Tensor; it is re-evaluated on
    fresh graphs for each perturbed coordinate.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)

    graph = Graph()
    t = graph.leaf(x)
    y = f(t)
    if not isinstance(y, Tensor) or y.data.shape != ():
        raise ValueError("f must return a scalar Tensor")
    analytic = backward(graph, y)[t.node_id].data

    def eval_at(values):
        g = Graph()
        return float(f(g.leaf(values)).data)

    worst = 0.0
    flat = x.ravel()
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + eps
        hi = eval_at(bumped.reshape(x.shape))
        bumped[i] = flat[i] - eps
        lo = eval_at(bumped.reshape(x.shape))
        numeric = (hi - lo) / (2.0 * eps)
        err = abs(analytic.ravel()[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
