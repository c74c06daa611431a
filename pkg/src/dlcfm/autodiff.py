"""Small static-graph reverse-mode autodiff over float64 numpy arrays.

Graphs are built once from :func:`Input` leaves and op helpers, then evaluated
repeatedly with :func:`forward` under different bindings. :func:`backward`
returns gradients keyed by input name.

>>> x = Input("x")
>>> y = x * x
>>> float(forward(y, {"x": 3.0}))
9.0
>>> float(backward(y)["x"])
6.0
"""

import itertools

import numpy as np

__all__ = [
    "Node", "Input", "const", "forward", "backward", "grad_check", "Adam",
    "ShapeError", "GraphError",
    "add", "sub", "mul", "div", "neg", "matmul", "gram", "transpose", "tanh", "relu",
    "leaky_relu", "softplus", "exp", "log", "sqrt", "absolute", "square",
    "power", "maximum", "clip", "sum", "mean", "concat", "slice_cols",
    "broadcast_to",
]


class ShapeError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


_ids = itertools.count()


class Node:
    __slots__ = ("id", "op", "inputs", "attrs", "name", "value", "grad")
    __array_ufunc__ = None  # make numpy defer to the reflected Node operators

    def __init__(self, op, inputs=(), name=None, value=None, **attrs):
        self.id = next(_ids)
        self.op = op
        self.inputs = tuple(inputs)
        self.attrs = attrs
        self.name = name
        self.value = value
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node {self.op}{label} #{self.id}>"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, k):
        return power(self, k)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def Input(name):
    """A named leaf bound at :func:`forward` time (data or parameter)."""
    return Node("input", name=name)


def const(value):
    return Node("const", value=np.asarray(value, dtype=np.float64))


def _node(x):
    return x if isinstance(x, Node) else const(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# --- op table: name -> (forward, backward) ------------------------------------
# backward(g, out, *inputs, **attrs) returns one gradient (or None) per input.

def _f_add(a, b):
    _broadcast_shape("add", a, b)
    return a + b


def _f_sub(a, b):
    _broadcast_shape("sub", a, b)
    return a - b


def _f_mul(a, b):
    _broadcast_shape("mul", a, b)
    return a * b


def _f_div(a, b):
    _broadcast_shape("div", a, b)
    return a / b


def _f_matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a @ b


def _f_gram(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"gram: incompatible shapes {a.shape} and {b.shape}")
    return a.T @ b / a.shape[0]


def _f_leaky(x, slope):
    return np.where(x > 0, x, slope * x)


def _reduce_grad(g, x, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, x.shape)


def _f_concat(*xs, axis):
    ref = xs[0].shape
    for x in xs[1:]:
        if x.ndim != len(ref) or any(x.shape[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise ShapeError(f"concat: incompatible shapes {ref} and {x.shape} along axis {axis}")
    return np.concatenate(xs, axis=axis)


def _b_concat(g, out, *xs, axis):
    edges = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, edges, axis=axis))


def _f_slice(x, axis, start, stop):
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice: range [{start}, {stop}) invalid for shape {x.shape} axis {axis}")
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    return x[tuple(idx)]


def _b_slice(g, out, x, axis, start, stop):
    full = np.zeros_like(x)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    full[tuple(idx)] = g
    return (full,)


def _f_broadcast(x, shape):
    try:
        return np.broadcast_to(x, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {shape}") from None


_OPS = {
    "add": (_f_add, lambda g, o, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))),
    "sub": (_f_sub, lambda g, o, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))),
    "mul": (_f_mul, lambda g, o, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))),
    "div": (_f_div, lambda g, o, a, b: (_unbroadcast(g / b, a.shape),
                                        _unbroadcast(-g * a / (b * b), b.shape))),
    "neg": (np.negative, lambda g, o, x: (-g,)),
    "matmul": (_f_matmul, lambda g, o, a, b: (g @ b.T, a.T @ g)),
    "gram": (_f_gram, lambda g, o, a, b: (b @ g.T / a.shape[0], a @ g / a.shape[0])),
    "transpose": (np.transpose, lambda g, o, x: (g.T,)),
    "tanh": (np.tanh, lambda g, o, x: (g * (1.0 - o * o),)),
    "relu": (lambda x: np.maximum(x, 0.0), lambda g, o, x: (g * (x > 0),)),
    "leaky_relu": (_f_leaky, lambda g, o, x, slope: (g * np.where(x > 0, 1.0, slope),)),
    "softplus": (lambda x: np.logaddexp(0.0, x),
                 lambda g, o, x: (g * np.exp(-np.logaddexp(0.0, -x)),)),
    "exp": (np.exp, lambda g, o, x: (g * o,)),
    "log": (np.log, lambda g, o, x: (g / x,)),
    "sqrt": (np.sqrt, lambda g, o, x: (g * 0.5 / o,)),
    "abs": (np.abs, lambda g, o, x: (g * np.sign(x),)),
    "square": (np.square, lambda g, o, x: (g * 2.0 * x,)),
    "power": (lambda x, k: x ** k, lambda g, o, x, k: (g * k * x ** (k - 1),)),
    "maximum": (lambda x, floor: np.maximum(x, floor), lambda g, o, x, floor: (g * (x > floor),)),
    "clip": (lambda x, lo, hi: np.clip(x, lo, hi),
             lambda g, o, x, lo, hi: (g * ((x > lo) & (x < hi)),)),
    "sum": (lambda x, axis, keepdims: np.sum(x, axis=axis, keepdims=keepdims),
            lambda g, o, x, axis, keepdims: (_reduce_grad(g, x, axis, keepdims),)),
    "mean": (lambda x, axis, keepdims: np.mean(x, axis=axis, keepdims=keepdims),
             lambda g, o, x, axis, keepdims: (
                 _reduce_grad(g, x, axis, keepdims) * (o.size / x.size),)),
    "concat": (_f_concat, _b_concat),
    "slice": (_f_slice, _b_slice),
    "broadcast_to": (_f_broadcast, lambda g, o, x, shape: (_unbroadcast(g, x.shape),)),
}


def _op(name, *inputs, **attrs):
    return Node(name, [_node(x) for x in inputs], **attrs)


def add(a, b):
    return _op("add", a, b)


def sub(a, b):
    return _op("sub", a, b)


def mul(a, b):
    return _op("mul", a, b)


def div(a, b):
    return _op("div", a, b)


def neg(x):
    return _op("neg", x)


def matmul(a, b):
    return _op("matmul", a, b)


def gram(a, b):
    """Batch-averaged cross product ``a.T @ b / n`` for (n, m) inputs."""
    return _op("gram", a, b)


def transpose(x):
    return _op("transpose", x)


def tanh(x):
    return _op("tanh", x)


def relu(x):
    return _op("relu", x)


def leaky_relu(x, slope=0.2):
    return _op("leaky_relu", x, slope=slope)


def softplus(x):
    return _op("softplus", x)


def exp(x):
    return _op("exp", x)


def log(x):
    return _op("log", x)


def sqrt(x):
    return _op("sqrt", x)


def absolute(x):
    return _op("abs", x)


def square(x):
    return _op("square", x)


def power(x, k):
    if int(k) != k or k < 1:
        raise ValueError(f"power: only positive integer exponents are supported, got {k}")
    return x if k == 1 else _op("power", x, k=int(k))


def maximum(x, floor):
    """Elementwise ``max(x, floor)`` for a constant ``floor``."""
    return _op("maximum", x, floor=float(floor))


def clip(x, lo, hi):
    return _op("clip", x, lo=float(lo), hi=float(hi))


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    return _op("sum", x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    return _op("mean", x, axis=axis, keepdims=keepdims)


def concat(xs, axis=1):
    return Node("concat", [_node(x) for x in xs], axis=axis)


def slice_cols(x, start, stop):
    return _op("slice", x, axis=1, start=int(start), stop=int(stop))


def broadcast_to(x, shape):
    return _op("broadcast_to", x, shape=tuple(shape))


# --- evaluation ----------------------------------------------------------------

def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for child in reversed(node.inputs):
            if child.id not in seen:
                stack.append((child, False))
    return order


def forward(root, bindings):
    """Evaluate ``root`` with inputs bound by name; caches every node value."""
    order = _topo(root)
    for node in order:
        if node.op == "input":
            if node.name not in bindings:
                raise GraphError(f"input {node.name!r} is not bound")
            node.value = np.asarray(bindings[node.name], dtype=np.float64)
        elif node.op != "const":
            fwd = _OPS[node.op][0]
            node.value = fwd(*(c.value for c in node.inputs), **node.attrs)
        node.grad = None
    return root.value


def backward(root, wrt=None):
    """Gradients of ``sum(root)`` with respect to every bound input.

    Inputs the root does not depend on get zero gradients; names in ``wrt``
    that the graph never references get a scalar 0.0. ``wrt`` restricts the
    returned map.
    """
    order = _topo(root)
    if any(n.value is None for n in order):
        raise GraphError("backward called before forward")
    for n in order:
        n.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        if g is None or node.op in ("input", "const"):
            continue
        bwd = _OPS[node.op][1]
        grads = bwd(g, node.value, *(c.value for c in node.inputs), **node.attrs)
        for child, cg in zip(node.inputs, grads):
            if cg is None or child.op == "const":
                continue
            if child.grad is None:
                child.grad = np.array(cg, dtype=np.float64)
            else:
                child.grad = child.grad + cg
    out = {}
    for node in order:
        if node.op != "input" or (wrt is not None and node.name not in wrt):
            continue
        g = node.grad if node.grad is not None else np.zeros_like(node.value)
        out[node.name] = out[node.name] + g if node.name in out else g
    for name in (wrt or ()):
        out.setdefault(name, np.float64(0.0))
    return out


def grad_check(root, bindings, wrt=None, epsilon=1e-5):
    """Max elementwise relative error between analytic and central-difference grads.

    The relative error is ``|a - n| / (|a| + |n| + 1e-12)``.
    """
    if not epsilon > 0:
        raise ValueError(f"grad_check: epsilon must be positive, got {epsilon}")
    bindings = {k: np.array(v, dtype=np.float64) for k, v in bindings.items()}
    out = forward(root, bindings)
    if np.size(out) != 1:
        raise ShapeError(f"grad_check: output must be scalar, got shape {np.shape(out)}")
    names = sorted(wrt if wrt is not None else bindings)
    analytic = backward(root, wrt=set(names))
    worst = 0.0
    for name in names:
        x = bindings[name]
        num = np.empty_like(x)
        flat, nflat = x.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = float(forward(root, bindings))
            flat[i] = orig - epsilon
            fm = float(forward(root, bindings))
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * epsilon)
        a = analytic[name]
        rel = np.abs(a - num) / (np.abs(a) + np.abs(num) + 1e-12)
        worst = max(worst, float(rel.max(initial=0.0)))
    forward(root, bindings)
    return worst


class Adam:
    """Adam with bias correction; parameters are updated in place."""

    def __init__(self, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v = {}, {}
        self.step_count = 0

    def step(self, params, grads):
        names = sorted(params)
        for name in names:
            if not np.all(np.isfinite(grads[name])):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name in names:
            g = grads[name]
            if g.shape != params[name].shape:
                raise ShapeError(f"adam: gradient shape {g.shape} != parameter shape "
                                 f"{params[name].shape} for {name!r}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return params

    def state_arrays(self):
        out = {}
        for name in sorted(self.m):
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, step_count):
        self.m = {k[len("adam.m."):]: np.array(v) for k, v in arrays.items() if k.startswith("adam.m.")}
        self.v = {k[len("adam.v."):]: np.array(v) for k, v in arrays.items() if k.startswith("adam.v.")}
        self.step_count = int(step_count)
