"""
Reverse-mode automatic differentiation on a recorded tape.

Values are float64 numpy arrays. Every primitive records a node on the tape
that produced it; nodes are appended in execution order, so the tape is
topologically sorted by construction.

Backward passes can themselves be recorded (``create_graph=True``). The
returned gradients are then ordinary tape nodes and may be differentiated
again, which is what training on input-gradient residuals needs::

    tape = Tape()
    x = tape.variable(X)
    W = tape.variable(W0)
    phi = sum_(tanh(x @ W))
    (dx,) = grad(phi, [x], create_graph=True)   # nodes on the tape
    loss = sum_(square(dx))
    (dW,) = grad(loss, [W])                      # numpy arrays

Only the primitives needed by a tanh MLP and Gaussian NLL losses are
provided. Broadcasting is explicit: the only implicit broadcast is between a
0-d node and an array node in ``mul``/``add``/``sub``.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

__all__ = [
    "Tape",
    "Node",
    "no_grad",
    "grad",
    "grad_wrt_inputs",
    "grad_wrt_params",
    "add",
    "sub",
    "neg",
    "mul",
    "scale",
    "add_const",
    "matmul",
    "transpose",
    "add_bias",
    "sum_rows",
    "broadcast_rows",
    "sum_",
    "fill",
    "tanh",
    "exp",
    "log",
    "square",
    "reciprocal",
    "column",
]


class _State(threading.local):
    def __init__(self):
        self.recording = True


_state = _State()


@contextlib.contextmanager
def no_grad():
    """Evaluate primitives without recording them on any tape."""
    prev = _state.recording
    _state.recording = False
    try:
        yield
    finally:
        _state.recording = prev


class Node:
    __slots__ = ("value", "op", "parents", "attrs", "tape", "index")

    def __init__(self, value, op=None, parents=(), attrs=None, tape=None):
        self.value = value
        self.op = op
        self.parents = parents
        self.attrs = attrs
        self.tape = tape
        self.index = -1

    @property
    def shape(self):
        return self.value.shape

    @property
    def recorded(self):
        return self.tape is not None

    def __add__(self, other):
        return add(self, _as_node(other, self))

    def __radd__(self, other):
        return add(_as_node(other, self), self)

    def __sub__(self, other):
        return sub(self, _as_node(other, self))

    def __rsub__(self, other):
        return sub(_as_node(other, self), self)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        name = self.op.name if self.op is not None else "leaf"
        return f"Node({name}, shape={self.value.shape}, index={self.index})"


class Tape:
    """Ordered record of primitive evaluations.

    ``nodes[k].parents`` only ever refer to nodes with a smaller index.
    Leaves (variables and constants) are recorded too, so ``replay`` can
    recompute the whole tape from leaf values.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, node):
        node.tape = self
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def variable(self, value):
        """Record a differentiable leaf."""
        return self._push(Node(np.array(value, dtype=np.float64)))

    def constant(self, value):
        """A leaf that is never differentiated (data, targets)."""
        return Node(np.asarray(value, dtype=np.float64))

    def replay(self, leaves=None):
        """Recompute every recorded value from the leaves.

        ``leaves`` optionally maps tape indices of leaves to new values.
        Returns the list of recomputed values, in tape order.
        """
        leaves = leaves or {}
        values = []
        for node in self.nodes:
            if node.op is None:
                values.append(np.asarray(leaves.get(node.index, node.value), dtype=np.float64))
                continue
            args = [
                values[p.index] if p.tape is self else p.value for p in node.parents
            ]
            values.append(node.op.forward(*args, **(node.attrs or {})))
        return values


def _as_node(x, like):
    if isinstance(x, Node):
        return x
    return Node(np.asarray(x, dtype=np.float64))


def _apply(op, parents, **attrs):
    value = op.forward(*[p.value for p in parents], **attrs)
    if not _state.recording:
        return Node(value)
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is not None and p.tape is not tape:
                raise ValueError("cannot combine nodes from different tapes")
            tape = p.tape
    if tape is None:
        return Node(value)
    return tape._push(Node(value, op, tuple(parents), attrs or None))


# --------------------------------------------------------------------------
# primitives


class _Op:
    name = "op"

    @staticmethod
    def forward(*args, **attrs):
        raise NotImplementedError

    @staticmethod
    def vjp(g, node):
        """Return one cotangent node (or None) per parent of ``node``."""
        raise NotImplementedError


def _unbroadcast(g, target):
    # only 0-d <-> array broadcasting is permitted
    if target.value.ndim == 0 and g.value.ndim != 0:
        return sum_(g)
    return g


class _Add(_Op):
    name = "add"
    forward = staticmethod(np.add)

    @staticmethod
    def vjp(g, node):
        a, b = node.parents
        return _unbroadcast(g, a), _unbroadcast(g, b)


class _Sub(_Op):
    name = "sub"
    forward = staticmethod(np.subtract)

    @staticmethod
    def vjp(g, node):
        a, b = node.parents
        return _unbroadcast(g, a), _unbroadcast(neg(g), b)


class _Neg(_Op):
    name = "neg"
    forward = staticmethod(np.negative)

    @staticmethod
    def vjp(g, node):
        return (neg(g),)


class _Mul(_Op):
    name = "mul"
    forward = staticmethod(np.multiply)

    @staticmethod
    def vjp(g, node):
        a, b = node.parents
        return _unbroadcast(mul(g, b), a), _unbroadcast(mul(g, a), b)


class _Scale(_Op):
    name = "scale"

    @staticmethod
    def forward(a, c):
        return a * c

    @staticmethod
    def vjp(g, node):
        return (scale(g, node.attrs["c"]),)


class _AddConst(_Op):
    name = "add_const"

    @staticmethod
    def forward(a, c):
        return a + c

    @staticmethod
    def vjp(g, node):
        return (g,)


class _MatMul(_Op):
    name = "matmul"
    forward = staticmethod(np.matmul)

    @staticmethod
    def vjp(g, node):
        a, b = node.parents
        return matmul(g, transpose(b)), matmul(transpose(a), g)


class _Transpose(_Op):
    name = "transpose"

    @staticmethod
    def forward(a):
        return a.T

    @staticmethod
    def vjp(g, node):
        return (transpose(g),)


class _AddBias(_Op):
    name = "add_bias"
    forward = staticmethod(np.add)

    @staticmethod
    def vjp(g, node):
        return g, sum_rows(g)


class _SumRows(_Op):
    name = "sum_rows"

    @staticmethod
    def forward(a):
        return a.sum(axis=0)

    @staticmethod
    def vjp(g, node):
        return (broadcast_rows(g, node.parents[0].value.shape[0]),)


class _BroadcastRows(_Op):
    name = "broadcast_rows"

    @staticmethod
    def forward(a, n):
        return np.broadcast_to(a, (n,) + a.shape).copy()

    @staticmethod
    def vjp(g, node):
        return (sum_rows(g),)


class _Sum(_Op):
    name = "sum"

    @staticmethod
    def forward(a):
        return np.asarray(a.sum())

    @staticmethod
    def vjp(g, node):
        return (fill(g, node.parents[0].value.shape),)


class _Fill(_Op):
    name = "fill"

    @staticmethod
    def forward(a, shape):
        return np.full(shape, a)

    @staticmethod
    def vjp(g, node):
        return (sum_(g),)


class _Tanh(_Op):
    name = "tanh"
    forward = staticmethod(np.tanh)

    @staticmethod
    def vjp(g, node):
        # d tanh = 1 - tanh^2, expressed with recorded primitives
        return (mul(g, add_const(neg(square(node)), 1.0)),)


class _Exp(_Op):
    name = "exp"
    forward = staticmethod(np.exp)

    @staticmethod
    def vjp(g, node):
        return (mul(g, node),)


class _Log(_Op):
    name = "log"
    forward = staticmethod(np.log)

    @staticmethod
    def vjp(g, node):
        return (mul(g, reciprocal(node.parents[0])),)


class _Square(_Op):
    name = "square"
    forward = staticmethod(np.square)

    @staticmethod
    def vjp(g, node):
        return (mul(g, scale(node.parents[0], 2.0)),)


class _Reciprocal(_Op):
    name = "reciprocal"
    forward = staticmethod(np.reciprocal)

    @staticmethod
    def vjp(g, node):
        return (neg(mul(g, square(node))),)


class _Column(_Op):
    name = "column"

    @staticmethod
    def forward(a, j):
        return a[:, j]

    @staticmethod
    def vjp(g, node):
        return (_embed_column(g, node.parents[0].value.shape, node.attrs["j"]),)


class _EmbedColumn(_Op):
    name = "embed_column"

    @staticmethod
    def forward(a, shape, j):
        out = np.zeros(shape)
        out[:, j] = a
        return out

    @staticmethod
    def vjp(g, node):
        return (column(g, node.attrs["j"]),)


def _check_same_or_scalar(a, b, name):
    sa, sb = a.value.shape, b.value.shape
    if sa != sb and sa != () and sb != ():
        raise ValueError(f"{name}: shape mismatch {sa} vs {sb}")


def add(a, b):
    _check_same_or_scalar(a, b, "add")
    return _apply(_Add, (a, b))


def sub(a, b):
    _check_same_or_scalar(a, b, "sub")
    return _apply(_Sub, (a, b))


def neg(a):
    return _apply(_Neg, (a,))


def mul(a, b):
    """Elementwise product; one operand may be 0-d."""
    _check_same_or_scalar(a, b, "mul")
    return _apply(_Mul, (a, b))


def scale(a, c):
    """Multiply by a Python constant."""
    return _apply(_Scale, (a,), c=float(c))


def add_const(a, c):
    return _apply(_AddConst, (a,), c=float(c))


def matmul(a, b):
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul: inner dimensions differ {a.value.shape} @ {b.value.shape}")
    return _apply(_MatMul, (a, b))


def transpose(a):
    return _apply(_Transpose, (a,))


def add_bias(x, b):
    """Add a row vector ``b`` (k,) to every row of ``x`` (n, k)."""
    if x.value.ndim != 2 or b.value.shape != x.value.shape[1:]:
        raise ValueError(f"add_bias: shapes {x.value.shape} and {b.value.shape}")
    return _apply(_AddBias, (x, b))


def sum_rows(a):
    return _apply(_SumRows, (a,))


def broadcast_rows(a, n):
    return _apply(_BroadcastRows, (a,), n=int(n))


def sum_(a):
    return _apply(_Sum, (a,))


def fill(a, shape):
    """Array of ``shape`` filled with the 0-d node ``a``."""
    return _apply(_Fill, (a,), shape=tuple(shape))


def tanh(a):
    return _apply(_Tanh, (a,))


def exp(a):
    return _apply(_Exp, (a,))


def log(a):
    return _apply(_Log, (a,))


def square(a):
    return _apply(_Square, (a,))


def reciprocal(a):
    return _apply(_Reciprocal, (a,))


def column(a, j):
    """Column ``j`` of a 2-d node, shape (n,)."""
    return _apply(_Column, (a,), j=int(j))


def _embed_column(a, shape, j):
    return _apply(_EmbedColumn, (a,), shape=tuple(shape), j=int(j))


# --------------------------------------------------------------------------
# backward passes


def grad(output, wrt, create_graph=False):
    """Gradients of a 0-d ``output`` with respect to the nodes in ``wrt``.

    With ``create_graph=True`` the backward pass is recorded and the result
    is a list of tape nodes; otherwise it is a list of arrays. Leaves that
    do not influence ``output`` get a zero gradient.
    """
    if output.value.shape != ():
        raise ValueError(f"gradient requested of non-scalar output with shape {output.value.shape}")
    targets = {id(w) for w in wrt}
    if output.tape is None:
        grads = {}
    else:
        ctx = contextlib.nullcontext() if create_graph else no_grad()
        with ctx:
            grads = _backward(output, targets, lowest=min((w.index for w in wrt), default=0))
    out = []
    for w in wrt:
        g = grads.get(id(w))
        if g is None:
            g = Node(np.zeros_like(w.value))
        out.append(g if create_graph else g.value)
    return out


def _backward(output, targets, lowest):
    tape = output.tape
    nodes = tape.nodes
    cot = {output.index: Node(np.ones(()))}
    result = {}
    for k in range(output.index, max(lowest, 0) - 1, -1):
        g = cot.pop(k, None)
        if g is None:
            continue
        node = nodes[k]
        if id(node) in targets:
            result[id(node)] = g
        if node.op is None:
            continue
        pgrads = node.op.vjp(g, node)
        for p, pg in zip(node.parents, pgrads):
            if pg is None or p.tape is not tape:
                continue
            prev = cot.get(p.index)
            cot[p.index] = pg if prev is None else add(prev, pg)
    return result


def grad_wrt_inputs(output, inputs):
    """Input-gradient of a scalar network output, kept on the tape.

    The returned nodes are differentiable, so a loss built from them can be
    passed to :func:`grad_wrt_params`.
    """
    return grad(output, inputs, create_graph=True)


def grad_wrt_params(loss, params):
    """Parameter-gradient of a scalar loss as numpy arrays.

    Second-order paths through nodes returned by :func:`grad_wrt_inputs`
    are included because those nodes were recorded on the same tape.
    """
    return grad(loss, params, create_graph=False)
