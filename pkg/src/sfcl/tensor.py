"""Dense N-D tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a float32 or float64 ``numpy`` array. Operations on
tensors that require gradients build an implicit graph; ``backward`` replays
that graph once, in reverse topological order, and leaves ``.grad`` on every
leaf created with ``requires_grad=True``.

Design constraints honoured throughout:

* one precision per expression graph (mixing float32/float64 raises),
* no implicit broadcasting except scalar-with-tensor,
* one backward pass per forward pass (a second backward raises),
* convolution uses the cross-correlation convention (no kernel flip).
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, NumericError, ShapeError, UsageError

_ALLOWED_DTYPES = (np.float32, np.float64)


class Tensor:
    """Dense N-D array with optional recorded gradient."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op",
                 "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._op: Optional[str] = None
        self._consumed = False

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def precision(self) -> str:
        return "single" if self.data.dtype == np.float32 else "double"

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's data, cut off from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        head = f"Tensor(shape={self.shape}, {self.precision}"
        if self.requires_grad:
            head += ", grad"
        return head + ")"

    # -- operator sugar (thin wrappers over the module-level ops) -------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __abs__(self):
        return absolute(self)


class Tape:
    """Topologically ordered record of the operations behind one result.

    ``nodes[i]``'s parents always appear earlier in ``nodes`` (or are leaves),
    so a single reverse sweep performs backpropagation.
    """

    def __init__(self, nodes: list):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        order: list = []
        seen: set = set()
        stack: list = [(root, False)]
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
        return cls(order)


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss; leaves with requires_grad get .grad.

    Gradient accumulation over multiple graph paths is a sum. A node's graph
    may be walked only once; rerunning backward on a consumed graph raises.
    """
    if loss.size != 1:
        raise UsageError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any tensor with requires_grad")
    tape = Tape.trace(loss)
    for node in tape.nodes:
        if node._consumed:
            raise UsageError("backward was already run on this graph; rerun the forward pass first")

    grads: dict = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        node._consumed = True
        node._backward = None  # free the closure and its captured buffers


# -- construction helpers ----------------------------------------------


def _node(data: np.ndarray, op: str, parents: Sequence[Tensor],
          bw: Callable) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = bw
        out._op = op
    return out


def _coerce_operand(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Tensor(np.asarray(x, dtype=like.dtype))
    raise UsageError(f"cannot use {type(x).__name__} as a tensor operand")


def _check_same_precision(op: str, *tensors: Tensor) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise UsageError(f"{op}: operands mix precisions {sorted(str(d) for d in dtypes)}")


def _binary_layout(op: str, a: Tensor, b: Tensor):
    """Validate the scalar-or-identical-dims broadcasting rule."""
    if a.shape == b.shape:
        return "same"
    if b.size == 1:
        return "b_scalar"
    if a.size == 1:
        return "a_scalar"
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ and neither is a scalar")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Collapse a gradient onto a (possibly scalar) operand shape."""
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape).astype(g.dtype, copy=False)


# -- elementwise ops ----------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _coerce_operand(a, b)
    b = _coerce_operand(b, a)
    _check_same_precision("add", a, b)
    _binary_layout("add", a, b)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _node(a.data + b.data, "add", (a, b), bw)


def sub(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _coerce_operand(a, b)
    b = _coerce_operand(b, a)
    _check_same_precision("sub", a, b)
    _binary_layout("sub", a, b)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _node(a.data - b.data, "sub", (a, b), bw)


def mul(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _coerce_operand(a, b)
    b = _coerce_operand(b, a)
    _check_same_precision("mul", a, b)
    _binary_layout("mul", a, b)
    ad, bd = a.data, b.data

    def bw(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _node(ad * bd, "mul", (a, b), bw)


def absolute(x: Tensor) -> Tensor:
    """|x| elementwise; the gradient at 0 is defined as 0."""
    sign = np.sign(x.data)

    def bw(g):
        return (g * sign,)

    return _node(np.abs(x.data), "abs", (x,), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return _node(np.where(mask, x.data, 0), "relu", (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid_stable(x.data)

    def bw(g):
        return (g * s * (1 - s),)

    return _node(s, "sigmoid", (x,), bw)


def _sigmoid_stable(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# -- reductions ----------------------------------------------------------


def _normalize_axes(x: Tensor, axes) -> Optional[tuple]:
    if axes is None:
        return tuple(range(x.ndim))
    axes = tuple(sorted(int(a) % x.ndim if x.ndim else 0 for a in axes))
    for a in axes:
        if a < 0 or a >= x.ndim:
            raise UsageError(f"reduction axis {a} invalid for shape {x.shape}")
    return axes


def reduce_sum(x: Tensor, axes: Optional[Iterable[int]] = None) -> Tensor:
    """Sum over `axes` (all axes when None); an empty axis set is a no-op copy."""
    ax = _normalize_axes(x, axes)
    if ax == ():
        def bw_copy(g):
            return (g,)
        return _node(x.data.copy(), "sum", (x,), bw_copy)
    shape = x.shape

    def bw(g):
        gg = g
        for a in ax:
            gg = np.expand_dims(gg, a)
        return (np.broadcast_to(gg, shape).astype(g.dtype, copy=False),)

    return _node(x.data.sum(axis=ax), "sum", (x,), bw)


def reduce_mean(x: Tensor, axes: Optional[Iterable[int]] = None) -> Tensor:
    """Mean over `axes` (all axes when None); an empty axis set is a no-op copy."""
    ax = _normalize_axes(x, axes)
    if ax == ():
        def bw_copy(g):
            return (g,)
        return _node(x.data.copy(), "mean", (x,), bw_copy)
    shape = x.shape
    count = 1
    for a in ax:
        count *= shape[a]

    def bw(g):
        gg = g / count
        for a in ax:
            gg = np.expand_dims(gg, a)
        return (np.broadcast_to(gg, shape).astype(g.dtype, copy=False),)

    return _node(x.data.mean(axis=ax), "mean", (x,), bw)


# -- structural ops -------------------------------------------------------


def reshape(x: Tensor, dims: Sequence[int]) -> Tensor:
    dims = tuple(int(d) for d in dims)
    try:
        data = x.data.reshape(dims)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {dims}") from None
    old = x.shape

    def bw(g):
        return (g.reshape(old),)

    return _node(data, "reshape", (x,), bw)


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of axes of {x.shape}")
    inverse = np.argsort(axes)

    def bw(g):
        return (np.transpose(g, inverse),)

    return _node(np.transpose(x.data, axes), "transpose", (x,), bw)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise UsageError("concat needs at least one tensor")
    _check_same_precision("concat", *parts)
    ref = parts[0].shape
    for p in parts[1:]:
        a, b = list(ref), list(p.shape)
        if len(a) != len(b):
            raise ShapeError(f"concat: rank mismatch {ref} vs {p.shape}")
        a[axis] = b[axis] = -1
        if a != b:
            raise ShapeError(f"concat: non-concat dims differ, {ref} vs {p.shape}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        out = []
        for i in range(len(parts)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            out.append(g[tuple(sl)])
        return tuple(out)

    return _node(np.concatenate([p.data for p in parts], axis=axis), "concat", parts, bw)


def zero_pad(x: Tensor, axis: int, count: int) -> Tensor:
    """Append `count` zero slabs at the end of `axis`."""
    if count < 0:
        raise UsageError(f"zero_pad count must be non-negative, got {count}")
    width = [(0, 0)] * x.ndim
    width[axis] = (0, count)
    orig = x.shape[axis]

    def bw(g):
        sl = [slice(None)] * g.ndim
        sl[axis] = slice(0, orig)
        return (g[tuple(sl)],)

    return _node(np.pad(x.data, width), "zero_pad", (x,), bw)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    shape = x.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[sl] = g
        return (full,)

    return _node(x.data[sl].copy(), "slice", (x,), bw)


# -- linear algebra --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: 2D x 2D, batched 3D x 3D, or batched 3D x 2D."""
    _check_same_precision("matmul", a, b)
    ad, bd = a.data, b.data
    ok = (
        (ad.ndim == 2 and bd.ndim == 2 and ad.shape[1] == bd.shape[0])
        or (ad.ndim == 3 and bd.ndim == 3 and ad.shape[0] == bd.shape[0]
            and ad.shape[2] == bd.shape[1])
        or (ad.ndim == 3 and bd.ndim == 2 and ad.shape[2] == bd.shape[0])
    )
    if not ok:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")

    def bw(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if bd.ndim == 3:
            return g @ bd.transpose(0, 2, 1), ad.transpose(0, 2, 1) @ g
        # batched lhs against a shared 2D rhs
        da = g @ bd.T
        db = np.einsum("bmk,bmn->kn", ad, g, optimize=True)
        return da, db

    return _node(np.matmul(ad, bd), "matmul", (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Affine map ``x @ w + b`` for x of shape [N, in] (or [in]), w [in, out]."""
    _check_same_precision("linear", *( (x, w, b) if b is not None else (x, w) ))
    squeeze = x.ndim == 1
    xd = x.data[None, :] if squeeze else x.data
    if xd.ndim != 2 or w.ndim != 2 or xd.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} and {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias shape {b.shape} does not match output width {w.shape[1]}")
    y = xd @ w.data
    if b is not None:
        y = y + b.data[None, :]
    if squeeze:
        y = y[0]

    def bw(g):
        gd = g[None, :] if squeeze else g
        dx = gd @ w.data.T
        dw = xd.T @ gd
        if squeeze:
            dx = dx[0]
        if b is None:
            return dx, dw
        return dx, dw, gd.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _node(y, "linear", parents, bw)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-stable softmax along the last axis (rows for the 2D case)."""
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows received NaN input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _node(y, "softmax_rows", (x,), bw)


# -- convolutions ----------------------------------------------------------


def _pair(v) -> tuple:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d(x: Tensor, w: Tensor, stride=(1, 1), pad=(0, 0)) -> Tensor:
    """2D cross-correlation. x: [C_in,H,W] or [N,C_in,H,W]; w: [C_out,C_in,kh,kw]."""
    _check_same_precision("conv2d", x, w)
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 3D/4D input and 4D kernel, got {x.shape} and {w.shape}")
    n, ci, h, wd_ = xd.shape
    co, ci_w, kh, kw = w.shape
    if ci != ci_w:
        raise ShapeError(f"conv2d: input channels {ci} do not match kernel channels {ci_w}")
    hp, wp = h + 2 * ph, wd_ + 2 * pw
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel ({kh},{kw}) larger than padded input ({hp},{wp})")
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1

    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = np.einsum("ncpqij,ocij->nopq", win, w.data, optimize=True)

    def bw(g):
        gd = g[None] if squeeze else g
        dw = np.einsum("nopq,ncpqij->ocij", gd, win, optimize=True)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += np.einsum(
                    "nopq,oc->ncpq", gd, w.data[:, :, i, j], optimize=True)
        dx = dxp[:, :, ph:ph + h, pw:pw + wd_]
        if squeeze:
            dx = dx[0]
        return dx, dw

    if squeeze:
        out = out[0]
    return _node(out, "conv2d", (x, w), bw)


def depthwise_conv2d(x: Tensor, w: Tensor, stride=(1, 1), pad=(0, 0)) -> Tensor:
    """Per-channel 2D cross-correlation. x: [N,C,H,W]; w: [C,kh,kw]."""
    _check_same_precision("depthwise_conv2d", x, w)
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    n, c, h, wd_ = xd.shape
    cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"depthwise_conv2d: channels {c} do not match kernel channels {cw}")
    hp, wp = h + 2 * ph, wd_ + 2 * pw
    if kh > hp or kw > wp:
        raise ShapeError(f"depthwise_conv2d: kernel ({kh},{kw}) larger than padded input ({hp},{wp})")
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1

    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = np.einsum("ncpqij,cij->ncpq", win, w.data, optimize=True)

    def bw(g):
        gd = g[None] if squeeze else g
        dw = np.einsum("ncpq,ncpqij->cij", gd, win, optimize=True)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += gd * w.data[None, :, i, j, None, None]
        dx = dxp[:, :, ph:ph + h, pw:pw + wd_]
        if squeeze:
            dx = dx[0]
        return dx, dw

    if squeeze:
        out = out[0]
    return _node(out, "depthwise_conv2d", (x, w), bw)


def conv3d(x: Tensor, w: Tensor, stride_d: int = 1) -> Tensor:
    """Depth-only 3D cross-correlation: kernels span the depth axis, spatial extent 1x1.

    x: [C_in,D,H,W] or [N,C_in,D,H,W]; w: [C_out,C_in,kd] (a trailing 1x1 is accepted).
    """
    _check_same_precision("conv3d", x, w)
    if stride_d < 1:
        raise UsageError(f"conv3d: stride must be >= 1, got {stride_d}")
    wd = w.data
    if wd.ndim == 5:
        if wd.shape[3:] != (1, 1):
            raise ShapeError(f"conv3d: spatial kernel extent must be 1x1, got {w.shape}")
        wd = wd[:, :, :, 0, 0]
    if wd.ndim != 3:
        raise ShapeError(f"conv3d: expected kernel [C_out,C_in,kd], got {w.shape}")
    squeeze = x.ndim == 4
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 5:
        raise ShapeError(f"conv3d: expected 4D/5D input, got {x.shape}")
    n, ci, d, h, wd_sp = xd.shape
    co, ci_w, kd = wd.shape
    if ci != ci_w:
        raise ShapeError(f"conv3d: input channels {ci} do not match kernel channels {ci_w}")
    if kd > d:
        raise ShapeError(f"conv3d: kernel depth {kd} exceeds input depth {d}")
    do = (d - kd) // stride_d + 1
    idx = np.arange(do)[:, None] * stride_d + np.arange(kd)[None, :]
    xw = xd[:, :, idx]  # [N,C_in,D',kd,H,W]
    out = np.einsum("ncdkhw,ock->nodhw", xw, wd, optimize=True)

    def bw(g):
        gd = g[None] if squeeze else g
        dwk = np.einsum("nodhw,ncdkhw->ock", gd, xw, optimize=True)
        if w.ndim == 5:
            dwk = dwk[:, :, :, None, None]
        dxw = np.einsum("nodhw,ock->ncdkhw", gd, wd, optimize=True)
        dx = np.zeros_like(xd)
        np.add.at(dx, (slice(None), slice(None), idx), dxw)
        if squeeze:
            dx = dx[0]
        return dx, dwk

    if squeeze:
        out = out[0]
    return _node(out, "conv3d", (x, w), bw)


# -- batch normalization -----------------------------------------------------


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor,
              running_mean: np.ndarray, running_var: np.ndarray,
              mode: str = "train", eps: float = 1e-5, momentum: float = 0.1,
              update_running: Optional[bool] = None) -> Tensor:
    """Per-channel batch normalization over axis 1 of x [N,C,...].

    Train mode normalizes by batch statistics (population variance) and, unless
    ``update_running=False``, folds them into the running statistics with the
    given momentum. Infer mode normalizes by the running statistics. Train mode
    requires N >= 2.
    """
    if mode not in ("train", "infer"):
        raise UsageError(f"batchnorm mode must be 'train' or 'infer', got {mode!r}")
    if x.ndim < 2:
        raise ShapeError(f"batchnorm expects [N,C,...] input, got shape {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm: scale/shift must have shape ({c},), got {gamma.shape}/{beta.shape}")
    _check_same_precision("batchnorm", x, gamma, beta)
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)
    xd = x.data

    if mode == "train":
        if x.shape[0] < 2:
            raise ConfigError("batchnorm train mode needs a batch of at least 2")
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        if update_running is None or update_running:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu.astype(running_mean.dtype)
            running_var *= 1.0 - momentum
            running_var += momentum * var.astype(running_var.dtype)
    else:
        mu = running_mean.astype(xd.dtype)
        var = running_var.astype(xd.dtype)

    inv = 1.0 / np.sqrt(var + eps)
    mu_b = mu.reshape(bshape)
    inv_b = inv.reshape(bshape)
    xhat = (xd - mu_b) * inv_b
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)
    count = xd.size // c

    def bw(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(bshape)
        if mode == "infer":
            dx = dxhat * inv_b
            return dx, dgamma, dbeta
        centered = xd - mu_b
        dvar = (dxhat * centered).sum(axis=axes, keepdims=True) * (-0.5) * inv_b ** 3
        dmu = (-inv_b) * dxhat.sum(axis=axes, keepdims=True) \
            + dvar * (-2.0 / count) * centered.sum(axis=axes, keepdims=True)
        dx = dxhat * inv_b + dvar * (2.0 / count) * centered + dmu / count
        return dx, dgamma, dbeta

    return _node(out, "batchnorm", (x, gamma, beta), bw)


# -- losses --------------------------------------------------------------


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy computed stably from logits.

    ``targets`` is a constant array of 0/1 values with the same shape.
    """
    y = np.asarray(targets, dtype=logits.dtype)
    if y.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: logits {logits.shape} vs targets {y.shape}")
    z = logits.data
    if not np.isfinite(z).all():
        raise NumericError("bce_with_logits received non-finite logits")
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))

    def bw(g):
        return (g * (_sigmoid_stable(z) - y),)

    return _node(loss, "bce_with_logits", (logits,), bw)


# -- finite-difference checking ----------------------------------------------


def _projection(shape, seed: int, dtype) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape).astype(dtype)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5,
               seed: int = 12345) -> float:
    """Max relative error between backprop and central finite differences.

    The scalar objective is a fixed random projection of f's output, so
    outputs whose plain sum is constant (softmax rows) are still exercised.
    f must be deterministic and must not mutate persistent state. Returns
    ``max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|)``.
    """
    if x.dtype != np.float64:
        raise UsageError("grad_check requires double precision input")

    probe = f(Tensor(x.data.copy()))
    r = _projection(probe.shape, seed, np.float64)

    xt = Tensor(x.data.copy(), requires_grad=True)
    loss = reduce_sum(mul(f(xt), Tensor(r)))
    backward(loss)
    analytic = xt.grad if xt.grad is not None else np.zeros_like(x.data)

    def objective(arr: np.ndarray) -> float:
        return float((f(Tensor(arr)).data * r).sum())

    numeric = np.zeros_like(x.data)
    flat = numeric.reshape(-1)
    base = x.data.copy()
    for i in range(base.size):
        orig = base.flat[i]
        base.flat[i] = orig + h
        up = objective(base)
        base.flat[i] = orig - h
        down = objective(base)
        base.flat[i] = orig
        flat[i] = (up - down) / (2 * h)

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())
