"""Dense float64 tensors with reverse-mode differentiation.

Covers exactly the operations the encoder and loss graphs need: affine maps,
pointwise nonlinearities, row softmax, L1 norms, cosine distance, and the
gather/scatter/segment primitives of full-graph message passing. Graphs are
recorded eagerly; `backward` on a scalar accumulates gradients into every
reachable tensor with `requires_grad` set. Calling `backward` again without
zeroing adds a second contribution on top.

All values are 64-bit floats and every reduction runs in a fixed order, so
identical inputs give bit-identical forwards and gradients.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import DiffError

_grad_enabled = True


@contextmanager
def no_grad():
    """Suspend graph recording (forward values only)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("values", "requires_grad", "grad", "_parents", "_grad_fn", "_op")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], tuple] | None = None
        self._op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise DiffError(f"item() on tensor of shape {self.values.shape}")
        return float(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, op={self._op or 'leaf'})"

    def __add__(self, other):
        return add(self, _ensure(other))

    def __radd__(self, other):
        return add(_ensure(other), self)

    def __sub__(self, other):
        return sub(self, _ensure(other))

    def __rsub__(self, other):
        return sub(_ensure(other), self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def tensor(values) -> Tensor:
    """Constant (non-differentiable) tensor."""
    return Tensor(values)


def param(values) -> Tensor:
    """Trainable tensor: participates in graphs and receives gradients."""
    return Tensor(values, requires_grad=True)


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(values: np.ndarray, parents: Sequence[Tensor], grad_fn, op: str) -> Tensor:
    out = Tensor(values)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.values.shape, b.values.shape)
    except ValueError:
        raise DiffError(f"{op} shape mismatch {a.values.shape} vs {b.values.shape}") from None


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def grad_fn(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)

    return _result(a.values + b.values, (a, b), grad_fn, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")

    def grad_fn(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)

    return _result(a.values - b.values, (a, b), grad_fn, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")

    def grad_fn(g):
        return (
            _unbroadcast(g * b.values, a.values.shape),
            _unbroadcast(g * a.values, b.values.shape),
        )

    return _result(a.values * b.values, (a, b), grad_fn, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def grad_fn(g):
        return (g * c,)

    return _result(a.values * c, (a,), grad_fn, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise DiffError(f"matmul shape mismatch {a.values.shape} x {b.values.shape}")

    def grad_fn(g):
        return g @ b.values.T, a.values.T @ g

    return _result(a.values @ b.values, (a, b), grad_fn, "matmul")


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not parts:
        raise DiffError("concat of zero tensors")
    shapes = [p.values.shape for p in parts]
    if len({len(s) for s in shapes}) != 1:
        raise DiffError(f"concat rank mismatch {shapes}")
    sizes = [s[axis] for s in shapes]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([p.values for p in parts], axis=axis), parts, grad_fn, "concat")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    original = a.values.shape

    def grad_fn(g):
        return (g.reshape(original),)

    return _result(a.values.reshape(shape), (a,), grad_fn, "reshape")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return _result(out, (a,), grad_fn, "tanh")


def leakyrelu(a: Tensor, slope: float = 0.01) -> Tensor:
    x = a.values
    out = np.where(x > 0, x, slope * x)

    def grad_fn(g):
        # subgradient at 0 deliberately takes the negative-side slope, which
        # is 0 for the hinge case (slope=0)
        return (g * np.where(x > 0, 1.0, slope),)

    return _result(out, (a,), grad_fn, "leakyrelu")


def relu(a: Tensor) -> Tensor:
    return leakyrelu(a, 0.0)


def log(a: Tensor) -> Tensor:
    if np.any(a.values <= 0):
        raise DiffError("log requires strictly positive values")
    out = np.log(a.values)

    def grad_fn(g):
        return (g / a.values,)

    return _result(out, (a,), grad_fn, "log")


def sum_all(a: Tensor) -> Tensor:
    # np.sum reduces in a fixed order for a given input, keeping runs bit-identical
    def grad_fn(g):
        return (np.full(a.values.shape, float(g)),)

    return _result(np.asarray(a.values.sum()), (a,), grad_fn, "sum")


def mean_all(a: Tensor) -> Tensor:
    if a.values.size == 0:
        raise DiffError("mean of empty tensor")
    return scale(sum_all(a), 1.0 / a.values.size)


def softmax_row(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise DiffError(f"softmax_row expects a matrix, got shape {a.values.shape}")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return _result(out, (a,), grad_fn, "softmax_row")


def l1_norm_row(a: Tensor) -> Tensor:
    x = a.values
    if x.ndim == 1:
        out = np.abs(x).sum()

        def grad_fn(g):
            return (np.sign(x) * float(g),)

        return _result(np.asarray(out), (a,), grad_fn, "l1_norm_row")
    if x.ndim == 2:
        out = np.abs(x).sum(axis=1)

        def grad_fn(g):
            return (np.sign(x) * g[:, None],)

        return _result(out, (a,), grad_fn, "l1_norm_row")
    raise DiffError(f"l1_norm_row expects a vector or matrix, got shape {x.shape}")


def cosine_distance(a: Tensor, b: Tensor) -> Tensor:
    """1 - cos(a, b); rowwise when given matrices of identical shape."""
    if a.values.shape != b.values.shape:
        raise DiffError(f"cosine_distance shape mismatch {a.values.shape} vs {b.values.shape}")
    if a.values.ndim == 1:
        u = a.values[None, :]
        v = b.values[None, :]
    elif a.values.ndim == 2:
        u = a.values
        v = b.values
    else:
        raise DiffError(f"cosine_distance expects vectors or matrices, got {a.values.shape}")

    nu = np.sqrt((u * u).sum(axis=1))
    nv = np.sqrt((v * v).sum(axis=1))
    if np.any(nu == 0.0) or np.any(nv == 0.0):
        raise DiffError("zero-norm embedding")
    dot = (u * v).sum(axis=1)
    cos = dot / (nu * nv)
    out = 1.0 - cos

    def grad_fn(g):
        gcol = -np.atleast_1d(g)[:, None] if a.values.ndim == 1 else -g[:, None]
        gu = gcol * (v / (nu * nv)[:, None] - (cos / (nu * nu))[:, None] * u)
        gv = gcol * (u / (nu * nv)[:, None] - (cos / (nv * nv))[:, None] * v)
        if a.values.ndim == 1:
            return gu[0], gv[0]
        return gu, gv

    values = np.asarray(out[0]) if a.values.ndim == 1 else out
    return _result(values, (a, b), grad_fn, "cosine_distance")


# ---------------------------------------------------------------------------
# graph aggregation primitives


def _row_scatter_sum(index: np.ndarray, rows: np.ndarray, num_rows: int,
                     width: int) -> np.ndarray:
    """Sum `rows` into an accumulator by row index (sort + reduceat; the
    stable sort keeps summation order deterministic)."""
    acc = np.zeros((num_rows, width))
    if index.size == 0:
        return acc
    order = np.argsort(index, kind="stable")
    sorted_index = index[order]
    boundaries = np.flatnonzero(np.r_[True, sorted_index[1:] != sorted_index[:-1]])
    acc[sorted_index[boundaries]] = np.add.reduceat(rows[order], boundaries, axis=0)
    return acc


def gather_rows(a: Tensor, index) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise DiffError("gather_rows index must be one-dimensional")
    if idx.size and (idx.min() < 0 or idx.max() >= a.values.shape[0]):
        raise DiffError("gather_rows index out of range")

    def grad_fn(g):
        if a.values.ndim == 1:
            return (np.bincount(idx, weights=g, minlength=a.values.shape[0]),)
        return (_row_scatter_sum(idx, g, a.values.shape[0], a.values.shape[1]),)

    return _result(a.values[idx], (a,), grad_fn, "gather_rows")


def scatter_weighted_sum(messages: Tensor, weights: Tensor, segments, num_segments: int) -> Tensor:
    """out[s] = sum over i with segments[i] == s of weights[i] * messages[i]."""
    seg = np.asarray(segments, dtype=np.int64)
    if messages.values.ndim != 2 or weights.values.shape != (messages.values.shape[0],):
        raise DiffError(
            f"scatter_weighted_sum shape mismatch {messages.values.shape} / {weights.values.shape}"
        )
    if seg.shape != (messages.values.shape[0],):
        raise DiffError("scatter_weighted_sum segment vector must match message count")
    out = _row_scatter_sum(seg, weights.values[:, None] * messages.values,
                           num_segments, messages.values.shape[1])

    def grad_fn(g):
        picked = g[seg]
        return weights.values[:, None] * picked, (messages.values * picked).sum(axis=1)

    return _result(out, (messages, weights), grad_fn, "scatter_weighted_sum")


def segment_softmax(logits: Tensor, segments, num_segments: int) -> Tensor:
    """Softmax of `logits` normalized within each segment."""
    seg = np.asarray(segments, dtype=np.int64)
    if logits.values.ndim != 1 or seg.shape != logits.values.shape:
        raise DiffError("segment_softmax expects matching 1-d logits and segments")
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, logits.values)
    e = np.exp(logits.values - seg_max[seg])
    denom = np.bincount(seg, weights=e, minlength=num_segments)
    out = e / denom[seg]

    def grad_fn(g):
        seg_dot = np.bincount(seg, weights=out * g, minlength=num_segments)
        return (out * (g - seg_dot[seg]),)

    return _result(out, (logits,), grad_fn, "segment_softmax")


# ---------------------------------------------------------------------------
# reverse pass


def _topo(root: Tensor) -> list[Tensor]:
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
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into .grad of every reachable tensor."""
    if loss.values.shape != ():
        raise DiffError(f"backward requires a scalar loss, got shape {loss.values.shape}")
    order = _topo(loss)
    # stored arrays are never mutated in place (accumulation always rebinds),
    # so grad_fn outputs can be kept without defensive copies
    local: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for node in reversed(order):
        g = local.get(id(node))
        if g is None or node._grad_fn is None:
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in local:
                local[key] = local[key] + pg
            else:
                local[key] = pg
    for node in order:
        contribution = local.get(id(node))
        if contribution is None or not node.requires_grad:
            continue
        if node.grad is None:
            node.grad = np.asarray(contribution, dtype=np.float64).reshape(node.values.shape)
        else:
            node.grad = node.grad + contribution.reshape(node.values.shape)


def grad_check(function: Callable[[Tensor], Tensor], x0, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `function` must map one tensor to a scalar tensor and be differentiable at
    `x0`; keep L1/LeakyReLU inputs at least ~10*step away from their kinks.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    probe = Tensor(x0.copy(), requires_grad=True)
    out = function(probe)
    if out.values.shape != ():
        raise DiffError("grad_check requires a scalar-valued function")
    backward(out)
    analytic = probe.grad if probe.grad is not None else np.zeros_like(x0)

    numeric = np.zeros_like(x0)
    for index in np.ndindex(x0.shape):
        forward = x0.copy()
        forward[index] += step
        backwardp = x0.copy()
        backwardp[index] -= step
        f_plus = function(Tensor(forward)).item()
        f_minus = function(Tensor(backwardp)).item()
        numeric[index] = (f_plus - f_minus) / (2.0 * step)

    denom = np.maximum(1.0, np.abs(analytic))
    return float((np.abs(analytic - numeric) / denom).max()) if x0.size else 0.0


# ---------------------------------------------------------------------------
# multilayer perceptrons and the optimizer

_ACTIVATIONS = ("identity", "tanh", "leakyrelu")


class Mlp:
    """Affine layers with per-layer activations from {identity, tanh, leakyrelu}."""

    def __init__(self, weights: list[Tensor], biases: list[Tensor],
                 activations: Sequence[str], leaky_slope: float = 0.01):
        if not (len(weights) == len(biases) == len(activations)):
            raise DiffError("Mlp layer lists must have equal length")
        for act in activations:
            if act not in _ACTIVATIONS:
                raise DiffError(f"unknown activation {act!r}")
        self.weights = weights
        self.biases = biases
        self.activations = tuple(activations)
        self.leaky_slope = leaky_slope

    @classmethod
    def create(cls, dims: Sequence[int], activations: Sequence[str],
               rng: np.random.Generator, leaky_slope: float = 0.01) -> "Mlp":
        """Glorot-uniform weights, zero biases; dims = [in, hidden..., out]."""
        if len(dims) < 2 or len(activations) != len(dims) - 1:
            raise DiffError("Mlp.create needs len(dims) - 1 activations")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(param(rng.uniform(-bound, bound, size=(fan_in, fan_out))))
            biases.append(param(np.zeros(fan_out)))
        return cls(weights, biases, activations, leaky_slope)

    @property
    def in_dim(self) -> int:
        return self.weights[0].values.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].values.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        vector_input = x.values.ndim == 1
        out = reshape(x, (1, x.values.shape[0])) if vector_input else x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            out = add(matmul(out, w), b)
            if act == "tanh":
                out = tanh(out)
            elif act == "leakyrelu":
                out = leakyrelu(out, self.leaky_slope)
        if vector_input:
            out = reshape(out, (out.values.shape[1],))
        return out

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        named = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named.append((f"{prefix}/w{i}", w))
            named.append((f"{prefix}/b{i}", b))
        return named


class Adam:
    """Adam with bias correction (update = lr * m_hat / sqrt(v_hat + eps)).

    Parameters whose .grad is None at step time are left untouched. Each
    optimizer owns its own moment buffers, so two optimizers over disjoint
    parameter sets never interact.
    """

    def __init__(self, params: Sequence[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise DiffError("non-finite gradient")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p.values -= self.lr * m_hat / np.sqrt(v_hat + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "m": [m.copy() for m in self.m],
            "v": [v.copy() for v in self.v],
        }

    def load_state_dict(self, state: dict) -> None:
        if len(state["m"]) != len(self.params):
            raise DiffError("optimizer state does not match parameter count")
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])
        self.m = [np.array(m, dtype=np.float64) for m in state["m"]]
        self.v = [np.array(v, dtype=np.float64) for v in state["v"]]
