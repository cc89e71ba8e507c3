"""Reverse-mode differentiation on numpy arrays and a tanh MLP evaluator.

The tape records array-valued operations on :class:`Var` objects.  Input
derivatives of a network (first and second order) are built as ordinary
taped expressions by pushing Taylor jets through each layer, so a loss that
contains ``d2u/dx2`` can itself be differentiated with respect to the
weights by a single reverse sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    InvalidArchitectureError,
    InvalidInputError,
    NumericOverflowError,
    UnsupportedExpressionError,
)

CHECKPOINT_MAGIC = "ADEPINN-PARAMSET"
CHECKPOINT_VERSION = 1
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "softplus")


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _as_var(x):
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def _node(value, parents, backward):
    out = Var(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


class Var:
    """Array value on the tape.

    ``requires_grad`` leaves collect gradients in :meth:`backward`; values
    derived only from constants carry no graph at all.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")
    __array_ufunc__ = None

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic ----------------------------------------------------------
    def __add__(self, other):
        other = _as_var(other)
        a, b = self.value, other.value
        return _node(a + b, (self, other),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_var(other)
        a, b = self.value, other.value
        return _node(a - b, (self, other),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))

    def __rsub__(self, other):
        return _as_var(other) - self

    def __mul__(self, other):
        other = _as_var(other)
        a, b = self.value, other.value
        return _node(a * b, (self, other),
                     lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_var(other)
        a, b = self.value, other.value
        out = a / b
        return _node(out, (self, other),
                     lambda g: (_unbroadcast(g / b, a.shape),
                                _unbroadcast(-g * out / b, b.shape)))

    def __rtruediv__(self, other):
        return _as_var(other) / self

    def __neg__(self):
        return _node(-self.value, (self,), lambda g: (-g,))

    def __pow__(self, p):
        if isinstance(p, Var):
            raise UnsupportedExpressionError("only constant exponents are supported")
        a = self.value
        return _node(a ** p, (self,), lambda g: (g * p * a ** (p - 1),))

    def __matmul__(self, other):
        other = _as_var(other)
        a, b = self.value, other.value
        if b.ndim != 2:
            raise InvalidInputError("right operand of @ must be a matrix")

        def back(g):
            ga = g @ b.T
            gb = np.tensordot(a, g, axes=(list(range(a.ndim - 1)), list(range(g.ndim - 1))))
            return ga, gb

        return _node(a @ b, (self, other), back)

    def __getitem__(self, idx):
        a = self.value
        out = a[idx]

        dup = isinstance(idx, np.ndarray) and np.unique(idx).size != idx.size

        def back(g):
            full = np.zeros_like(a)
            if dup:
                np.add.at(full, idx, g)
            else:
                full[idx] += g
            return (full,)

        return _node(out, (self,), back)

    # non-differentiable constructs -----------------------------------------
    def _refuse(self, *_):
        raise UnsupportedExpressionError(
            "comparison, abs and truth tests on traced values are not differentiable")

    __bool__ = __lt__ = __le__ = __gt__ = __ge__ = __abs__ = _refuse

    def __eq__(self, other):  # noqa: D105
        self._refuse()

    __hash__ = object.__hash__

    # shape ops -----------------------------------------------------------
    @property
    def T(self):
        return _node(self.value.T, (self,), lambda g: (g.T,))

    def reshape(self, *shape):
        old = self.value.shape
        return _node(self.value.reshape(*shape), (self,), lambda g: (g.reshape(old),))

    def sum(self, axis=None):
        a = self.value
        if axis is None:
            return _node(a.sum(), (self,), lambda g: (np.broadcast_to(g, a.shape).copy(),))
        return _node(a.sum(axis=axis), (self,),
                     lambda g: (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),))

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis) * (1.0 / n)

    # reverse sweep ---------------------------------------------------------
    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every traced leaf."""
        if seed is None:
            if self.value.size != 1:
                raise InvalidInputError("backward() without a seed needs a scalar")
            seed = np.ones_like(self.value)
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, gp in zip(node._parents, node._backward(g)):
                if not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + gp
                else:
                    grads[id(p)] = gp


def tanh(x):
    x = _as_var(x)
    out = np.tanh(x.value)
    return _node(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x):
    x = _as_var(x)
    out = _sigmoid(x.value)
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x):
    x = _as_var(x)
    a = x.value
    out = np.logaddexp(0.0, a)
    return _node(out, (x,), lambda g: (g * _sigmoid(a),))


def exp(x):
    x = _as_var(x)
    out = np.exp(x.value)
    return _node(out, (x,), lambda g: (g * out,))


def log(x):
    x = _as_var(x)
    a = x.value
    return _node(np.log(a), (x,), lambda g: (g / a,))


def sqrt(x):
    x = _as_var(x)
    out = np.sqrt(x.value)
    return _node(out, (x,), lambda g: (g * 0.5 / out,))


def square(x):
    x = _as_var(x)
    a = x.value
    return _node(a * a, (x,), lambda g: (2.0 * g * a,))


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class ParamSet:
    """Weights and biases of a fully connected tanh network.

    Parameters live in one flat float64 vector.  Layer ``i`` contributes its
    weight matrix (row-major, shape ``(sizes[i+1], sizes[i])``) followed by its
    bias vector.
    """

    layer_sizes: tuple
    flat: np.ndarray
    output_activation: str = "identity"
    activation: str = "tanh"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        _check_sizes(self.layer_sizes)
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise InvalidArchitectureError(
                f"output_activation must be one of {OUTPUT_ACTIVATIONS}")
        if self.activation != "tanh":
            raise InvalidArchitectureError("hidden activation must be tanh")
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (n_params(self.layer_sizes),):
            raise InvalidArchitectureError(
                f"expected {n_params(self.layer_sizes)} parameters, got {self.flat.shape}")
        if not np.all(np.isfinite(self.flat)):
            raise NumericOverflowError("parameter vector contains non-finite entries")

    @property
    def layer_count(self):
        """Number of hidden layers."""
        return len(self.layer_sizes) - 2

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    def layers(self):
        """(W, b) views into :attr:`flat`, one pair per layer."""
        out, pos = [], 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = self.flat[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in)
            pos += fan_in * fan_out
            b = self.flat[pos:pos + fan_out]
            pos += fan_out
            out.append((w, b))
        return out

    @property
    def layer_weights(self):
        return [w for w, _ in self.layers()]

    @property
    def layer_biases(self):
        return [b for _, b in self.layers()]

    def with_flat(self, flat):
        return ParamSet(self.layer_sizes, flat, self.output_activation, self.activation)

    def network(self, trace=False, frozen=()):
        """Return a :class:`Network` bound to these parameters.

        With ``trace=True`` every layer not listed in ``frozen`` becomes a
        gradient-collecting leaf.
        """
        layers = []
        for i, (w, b) in enumerate(self.layers()):
            rg = trace and i not in frozen
            layers.append((Var(w, rg), Var(b, rg)))
        return Network(layers, self.output_activation)


def n_params(layer_sizes):
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def _check_sizes(sizes):
    if len(sizes) < 2:
        raise InvalidArchitectureError("need at least an input and an output layer")
    if any(s <= 0 for s in sizes):
        raise InvalidArchitectureError(f"layer sizes must be positive, got {sizes}")


def xavier_init(layer_sizes, seed, output_activation="identity"):
    """Glorot-uniform weights, zero biases."""
    layer_sizes = tuple(int(s) for s in layer_sizes)
    _check_sizes(layer_sizes)
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ParamSet(layer_sizes, np.concatenate(chunks), output_activation)


def save_params(path, params):
    """Write a text checkpoint.

    Layout::

        ADEPINN-PARAMSET 1
        layer_sizes 3 40 40 1
        activation tanh
        output_activation identity
        n_params 1841
        <one float per line, repr precision>
    """
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        "layer_sizes " + " ".join(str(s) for s in params.layer_sizes),
        f"activation {params.activation}",
        f"output_activation {params.output_activation}",
        f"n_params {params.flat.size}",
    ]
    lines.extend(repr(float(v)) for v in params.flat)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path):
    with open(path) as fh:
        lines = fh.read().split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"{path}: not a parameter checkpoint")
    if int(head[1]) != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {head[1]}")
    meta = {}
    for line in lines[1:5]:
        key, _, rest = line.partition(" ")
        meta[key] = rest
    n = int(meta["n_params"])
    flat = np.array([float(v) for v in lines[5:5 + n]])
    sizes = tuple(int(s) for s in meta["layer_sizes"].split())
    return ParamSet(sizes, flat, meta["output_activation"], meta["activation"])


# ---------------------------------------------------------------------------
# network evaluation with input jets
# ---------------------------------------------------------------------------


@dataclass
class Jets:
    """Network output and its input derivatives at a batch of points.

    ``grad`` has shape ``(n_inputs, n_points)``; ``hess`` has one row per
    entry of ``pairs``.
    """

    value: Var
    grad: Var | None = None
    hess: Var | None = None
    pairs: tuple = ()

    def d(self, k):
        return self.grad[k]

    def d2(self, j, k):
        key = (min(j, k), max(j, k))
        return self.hess[self.pairs.index(key)]


def _activate(kind, a):
    """Return s, s', s'' of an activation as taped values."""
    if kind == "tanh":
        s = tanh(a)
        s1 = 1.0 - s * s
        return s, s1, -2.0 * s * s1
    if kind == "sigmoid":
        s = sigmoid(a)
        s1 = s * (1.0 - s)
        return s, s1, s1 * (1.0 - 2.0 * s)
    if kind == "softplus":
        sg = sigmoid(a)
        return softplus(a), sg, sg * (1.0 - sg)
    return a, None, None


class Network:
    """A ParamSet bound to (possibly traced) Var leaves."""

    def __init__(self, layers, output_activation="identity"):
        self.layers = layers
        self.output_activation = output_activation

    @property
    def n_inputs(self):
        return self.layers[0][0].shape[1]

    def leaves(self):
        return [v for wb in self.layers for v in wb]

    def __call__(self, X):
        return self.jets(X, order=0).value

    def jets(self, X, order=0, pairs=None):
        """Forward pass carrying input derivatives up to ``order``.

        Parameters
        ----------
        X : array of shape (n, n_inputs)
        order : 0, 1 or 2
        pairs : sequence of (j, k) with j <= k, the second derivatives to
            carry when ``order == 2``; defaults to all of them.
        """
        X = np.asarray(X, dtype=np.float64)
        d = self.n_inputs
        if X.ndim != 2 or X.shape[1] != d:
            raise InvalidInputError(f"expected points of shape (n, {d}), got {X.shape}")
        if order == 2:
            if pairs is None:
                pairs = [(j, k) for j in range(d) for k in range(j, d)]
            pairs = tuple((min(j, k), max(j, k)) for j, k in pairs)
        else:
            pairs = ()
        js = np.array([p[0] for p in pairs], dtype=int)
        ks = np.array([p[1] for p in pairs], dtype=int)

        z = Var(X)
        t1 = t2 = None
        n_layers = len(self.layers)
        for i, (w, b) in enumerate(self.layers):
            wt = w.T
            a = z @ wt + b
            if order >= 1:
                if i == 0:
                    at1 = wt.reshape(d, 1, wt.shape[1])
                    at2 = None
                else:
                    at1 = t1 @ wt
                    at2 = t2 @ wt if t2 is not None else None
            kind = "tanh" if i < n_layers - 1 else self.output_activation
            s, s1, s2 = _activate(kind, a)
            z = s
            if order >= 1:
                if s1 is None:  # identity output
                    t1, t2 = at1, at2
                    continue
                t1 = s1 * at1
                if order == 2 and pairs:
                    curv = s2 * at1[js] * at1[ks]
                    t2 = curv if at2 is None else s1 * at2 + curv
        value = z.reshape(-1)
        grad = hess = None
        if order >= 1:
            n = X.shape[0]
            grad = _broadcast_first(t1, d, n)
            if order == 2 and pairs:
                hess = Var(np.zeros((len(pairs), n))) if t2 is None else t2.reshape(len(pairs), n)
        return Jets(value, grad, hess, pairs)


def _broadcast_first(t1, d, n):
    # A network with no hidden layer leaves tangents of shape (d, 1, 1).
    if t1.shape[1] != n:
        t1 = t1 * np.ones((1, n, 1))
    return t1.reshape(d, n)


# ---------------------------------------------------------------------------
# public evaluation API
# ---------------------------------------------------------------------------


@dataclass
class EvalRequest:
    input: np.ndarray
    wants: frozenset = field(default_factory=lambda: frozenset({"value"}))

    def __post_init__(self):
        self.input = np.asarray(self.input, dtype=np.float64).reshape(-1)
        self.wants = frozenset(self.wants)
        unknown = self.wants - {"value", "grad_input", "second_derivs", "grad_params"}
        if unknown:
            raise InvalidInputError(f"unknown request flags {sorted(unknown)}")


@dataclass
class EvalResult:
    value: float
    grad_input: np.ndarray | None = None
    second_input: np.ndarray | None = None
    param_grads: np.ndarray | None = None


def evaluate(params, req):
    """Evaluate the network at one point with the requested derivatives."""
    if req.input.shape != (params.n_inputs,):
        raise InvalidInputError(
            f"input has {req.input.size} entries, network expects {params.n_inputs}")
    if not np.all(np.isfinite(req.input)):
        raise InvalidInputError("input contains non-finite entries")
    order = 2 if "second_derivs" in req.wants else 1 if "grad_input" in req.wants else 0
    trace = "grad_params" in req.wants
    net = params.network(trace=trace)
    jets = net.jets(req.input[None, :], order=order)
    value = float(jets.value.value[0])
    if not np.isfinite(value):
        raise NumericOverflowError("network output is not finite")
    res = EvalResult(value)
    d = params.n_inputs
    if order >= 1:
        res.grad_input = jets.grad.value[:, 0].copy()
    if order == 2:
        h = np.zeros((d, d))
        for r, (j, k) in enumerate(jets.pairs):
            h[j, k] = h[k, j] = jets.hess.value[r, 0]
        res.second_input = h
    if trace:
        jets.value.sum().backward()
        res.param_grads = flat_grad(net)
    return res


def evaluate_batch(params, X, order=0, pairs=None):
    """Numpy value/derivatives at many points (no tracing)."""
    jets = params.network().jets(np.atleast_2d(X), order=order, pairs=pairs)
    out = jets.value.value
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("network output is not finite")
    if order == 0:
        return out
    grad = jets.grad.value
    if order == 1:
        return out, grad
    return out, grad, jets.hess.value


def flat_grad(net):
    parts = []
    for var in net.leaves():
        g = var.grad if var.grad is not None else np.zeros_like(var.value)
        parts.append(g.reshape(-1))
    return np.concatenate(parts)


def value_and_grad(fn: Callable, paramsets: Sequence[ParamSet], frozen=None):
    """Evaluate ``fn(*networks)`` and its gradient for each ParamSet.

    ``fn`` must return a scalar :class:`Var`.  ``frozen`` maps a paramset
    index to the layer indices held constant; their gradient entries are
    exactly zero.
    """
    frozen = frozen or {}
    nets = [p.network(trace=True, frozen=frozen.get(i, ())) for i, p in enumerate(paramsets)]
    out = fn(*nets)
    if not isinstance(out, Var) or out.value.size != 1:
        raise UnsupportedExpressionError("objective must be a scalar Var")
    if not np.isfinite(out.value):
        raise NumericOverflowError("objective is not finite")
    if out.requires_grad:
        out.backward()
    return float(out.value), [flat_grad(n) for n in nets]


def grad_of_scalar(params, scalar_fn, frozen=()):
    """dL/dtheta for a scalar built from one network's outputs."""
    _, grads = value_and_grad(scalar_fn, [params], frozen={0: tuple(frozen)})
    return grads[0]
