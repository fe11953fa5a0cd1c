"""A small dense tensor with reverse-mode automatic differentiation.

Values are float64 numpy arrays. Every op checks shapes strictly: there is
no implicit broadcasting, so row-vector additions and column scalings go
through the explicit ``broadcast_rows`` / ``broadcast_cols`` ops. Each op
records a pullback closure; :func:`backward` walks the graph once in
reverse topological order and accumulates gradients into ``.grad``.
"""
from __future__ import annotations

import builtins
import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording pullbacks (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_pullback", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        if not self.data.flags.writeable:
            self.data = self.data.copy()
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._pullback = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad, name)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def _node(data, parents, pullback) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._pullback = pullback
    return out


def _acc(t: Tensor, g):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ------------------------------------------------------------ elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def pullback(g):
        _acc(a, g)
        _acc(b, g)

    return _node(a.data + b.data, (a, b), pullback)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def pullback(g):
        _acc(a, g)
        _acc(b, -g)

    return _node(a.data - b.data, (a, b), pullback)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def pullback(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    return _node(a.data * b.data, (a, b), pullback)


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")
    out = a.data / b.data

    def pullback(g):
        _acc(a, g / b.data)
        _acc(b, -g * out / b.data)

    return _node(out, (a, b), pullback)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: _acc(a, g * c))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _node(a.data + float(c), (a,), lambda g: _acc(a, g))


def square(a: Tensor) -> Tensor:
    return _node(a.data * a.data, (a,), lambda g: _acc(a, 2.0 * g * a.data))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    # np.maximum keeps NaN visible to the non-finite checks
    return _node(np.maximum(a.data, 0.0), (a,), lambda g: _acc(a, g * mask))


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: _acc(a, g * out * (1.0 - out)))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: _acc(a, g * out))


def log(a: Tensor) -> Tensor:
    if a.data.size == 0:
        raise ShapeError("log of an empty tensor")
    return _node(np.log(a.data), (a,), lambda g: _acc(a, g / a.data))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: _acc(a, g * 0.5 / out))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: _acc(a, g * inside))


# ------------------------------------------------------------ linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product, or batched product of two 3-D stacks."""
    if a.ndim != b.ndim or a.ndim not in (2, 3):
        raise ShapeError(f"matmul: need two 2-D or two 3-D tensors, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or (a.ndim == 3 and a.shape[0] != b.shape[0]):
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def pullback(g):
        if a.requires_grad:
            _acc(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            _acc(b, np.swapaxes(a.data, -1, -2) @ g)

    return _node(a.data @ b.data, (a, b), pullback)


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: _acc(a, np.transpose(g, inverse)))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: _acc(a, g.reshape(old)))


def broadcast_rows(v: Tensor, n: int) -> Tensor:
    """Stack a length-d vector into an ``(n, d)`` matrix."""
    if v.ndim != 1:
        raise ShapeError(f"broadcast_rows expects a vector, got {v.shape}")
    out = np.broadcast_to(v.data, (n, v.shape[0])).copy()
    return _node(out, (v,), lambda g: _acc(v, g.sum(axis=0)))


def broadcast_cols(v: Tensor, d: int) -> Tensor:
    """Repeat a length-n vector across ``d`` columns: ``out[i, j] = v[i]``."""
    if v.ndim != 1:
        raise ShapeError(f"broadcast_cols expects a vector, got {v.shape}")
    out = np.broadcast_to(v.data[:, None], (v.shape[0], d)).copy()
    return _node(out, (v,), lambda g: _acc(v, g.sum(axis=1)))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def pullback(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=ax)):
            _acc(t, piece)

    return _node(np.concatenate([t.data for t in tensors], axis=ax), tensors, pullback)


def split(a: Tensor, sizes, axis: int = -1) -> list[Tensor]:
    ax = axis % a.ndim
    if builtins.sum(sizes) != a.shape[ax]:
        raise ShapeError(f"split: sizes {sizes} do not cover axis of length {a.shape[ax]}")
    out, start = [], 0
    for s in sizes:
        out.append(slice_axis(a, start, start + s, ax))
        start += s
    return out


def slice_axis(a: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    ax = axis % a.ndim
    index = [slice(None)] * a.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)

    def pullback(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _acc(a, full)

    return _node(a.data[index].copy(), (a,), pullback)


def gather(a: Tensor, idx) -> Tensor:
    """Select rows (first axis) by an integer index array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather: index out of range for {n} rows")

    def pullback(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx.reshape(-1), g.reshape((-1,) + a.shape[1:]))
        _acc(a, full)

    return _node(a.data[idx], (a,), pullback)


def take(a: Tensor, rows, cols) -> Tensor:
    """Pick ``a[rows[i], cols[i]]`` from a matrix into a vector."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    def pullback(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g)
        _acc(a, full)

    return _node(a.data[rows, cols], (a,), pullback)


# ------------------------------------------------------------ reductions

def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    if axis is None:
        shape = a.shape
        return _node(np.array(a.data.sum()), (a,), lambda g: _acc(a, np.full(shape, float(g))))
    ax = axis % a.ndim

    def pullback(g):
        _acc(a, np.broadcast_to(np.expand_dims(g, ax), a.shape).copy())

    return _node(a.data.sum(axis=ax), (a,), pullback)


def mean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean over an empty axis")
    return scale(sum(a, axis), 1.0 / count)


def max(a: Tensor, axis: int = -1) -> Tensor:  # noqa: A001
    ax = axis % a.ndim
    if a.shape[ax] == 0:
        raise ShapeError("max over an empty axis")
    arg = np.argmax(a.data, axis=ax)
    out = np.take_along_axis(a.data, np.expand_dims(arg, ax), ax).squeeze(ax)

    def pullback(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, ax), np.expand_dims(g, ax), ax)
        _acc(a, full)

    return _node(out, (a,), pullback)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    ax = axis % a.ndim
    if a.shape[ax] == 0:
        raise ShapeError("softmax over an empty axis")
    z = a.data - a.data.max(axis=ax, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=ax, keepdims=True)

    def pullback(g):
        _acc(a, out * (g - (g * out).sum(axis=ax, keepdims=True)))

    return _node(out, (a,), pullback)


LN_EPS = 1e-5


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize over the last axis, then apply learnable scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: scale/shift must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def pullback(g):
        if gamma.requires_grad:
            _acc(gamma, (g * xhat).sum(axis=lead))
        if beta.requires_grad:
            _acc(beta, g.sum(axis=lead))
        if x.requires_grad:
            gx = g * gamma.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            _acc(x, gx)

    return _node(out, (x, gamma, beta), pullback)


# ------------------------------------------------------------ 3x3 polar factor

def svd_rotation(h: Tensor) -> Tensor:
    """Proper rotation maximizing ``trace(R @ H)`` for a 3x3 cross-covariance H.

    With ``H = U S V^T``: ``R = V diag(1, 1, det(V U^T)) U^T``. The pullback
    solves the Sylvester system of the polar decomposition in the U basis.
    """
    if h.shape != (3, 3):
        raise ShapeError(f"svd_rotation expects a 3x3 matrix, got {h.shape}")
    u, s, vt = np.linalg.svd(h.data)
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T)) or 1.0
    dvec = np.array([1.0, 1.0, d])
    r = (v * dvec) @ u.T
    sig = s * dvec

    def pullback(g):
        # dL/dM for M = H^T with R = polar(M); then transpose back
        denom = sig[:, None] + sig[None, :]
        gu = u.T @ (r.T @ g) @ u
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(np.abs(denom) > 1e-300, gu / denom, 0.0)
        b = u @ b @ u.T
        gm = r @ (b - b.T)
        _acc(h, gm.T)

    return _node(r, (h,), pullback)


# ------------------------------------------------------------ graph traversal

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into every reachable leaf's ``.grad``."""
    if output.data.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return
    order = _topo_order(output)
    output.grad = np.ones_like(output.data)
    for node in reversed(order):
        if node._pullback is not None and node.grad is not None:
            node._pullback(node.grad)
    # release the graph so intermediates can be collected
    for node in order:
        if node._pullback is not None:
            node._parents = ()
            node._pullback = None


def grad_check(f, params, step: float = 1e-5, coords=None, rng=None, refinements: int = 3) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps the parameter list to a scalar Tensor. ``coords`` limits the
    probe to that many randomly chosen coordinates per parameter. When the
    forward and backward one-sided differences disagree (the probe straddles
    a ReLU/clip kink) the step is shrunk tenfold, up to ``refinements`` times.
    """
    params = list(params)
    for p in params:
        p.grad = None
    out = f(params)
    f0 = out.item()
    backward(out)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if coords is not None and coords < flat.size:
            idx = rng.choice(flat.size, size=coords, replace=False)
        for i in idx:
            central = _central_difference(f, params, flat, i, f0, step, refinements)
            a = ga.reshape(-1)[i]
            worst = builtins.max(worst, abs(a - central) / (abs(a) + abs(central) + 1e-12))
    for p in params:
        p.grad = None
    return worst


def _central_difference(f, params, flat, i, f0, step, refinements):
    orig = flat[i]

    def probe(h):
        flat[i] = orig + h
        fp = f(params).item()
        flat[i] = orig - h
        fm = f(params).item()
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError("non-finite function value at a probe point")
        return fp, fm

    fp, fm = probe(step)
    central = (fp - fm) / (2 * step)
    fwd, bwd = (fp - f0) / step, (f0 - fm) / step
    noise = 1e-12 * (abs(f0) + 1.0) / step
    if abs(fwd - bwd) <= 1e-4 * (abs(fwd) + abs(bwd)) + noise:
        return central
    # kink or strong curvature inside [-h, h]: shrink until two successive steps agree
    h = step
    for _ in range(refinements):
        h /= 10.0
        fp, fm = probe(h)
        finer = (fp - fm) / (2 * h)
        if abs(finer - central) <= 1e-6 * (abs(finer) + abs(central)) + 1e-12 * (abs(f0) + 1.0) / h:
            return central
        central = finer
    return central
