"""Reverse-mode automatic differentiation over numpy arrays.

A Tape records every primitive application in execution order (which is a
topological order), caching the forward value at each node.  The reverse
sweep walks the records backwards and calls each primitive's VJP, so
gradients reach every recorded leaf.  Replaying the tape re-executes the
same forward functions on the cached inputs and must reproduce every cached
value bitwise.

Primitives are (fwd, vjp) pairs; ``fwd`` takes and returns plain ndarrays,
so running a model without a tape calls exactly the same code and produces
bitwise-identical outputs.  Scalars are 0-d arrays.

The primitive set is deliberately small: the convolutional blocks, the
pooling/upsampling pair, channel stacking/concat, tanh, the smooth-Heaviside
cross-entropy losses, and the level set step update (whose regularizer term
enters as a constant: the learning signal flows along the velocity path).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, TapeError
from .evolution import step_update
from .sdf import smooth_dirac, smooth_heaviside


class Primitive:
    """A differentiable operation: forward on values, VJP on the cotangent."""

    def __init__(self, name: str, fwd: Callable, vjp: Callable):
        self.name = name
        self.fwd = fwd
        # vjp(grad_out, out_value, *input_values, **kwargs) -> tuple of input grads
        self.vjp = vjp

    def __repr__(self):
        return f"Primitive({self.name})"


class Node:
    """One value in the recorded computation."""

    __slots__ = ("value", "parents", "prim", "kwargs", "requires_grad")

    def __init__(self, value, parents=(), prim=None, kwargs=None, requires_grad=False):
        self.value = value
        self.parents = parents
        self.prim = prim
        self.kwargs = kwargs or {}
        self.requires_grad = requires_grad


class Tape:
    """Records primitive applications; supports backward sweep and forward replay."""

    def __init__(self):
        self._records: list[Node] = []

    def leaf(self, value, requires_grad: bool = False) -> Node:
        return Node(np.asarray(value, dtype=np.float64), requires_grad=requires_grad)

    def constant(self, value) -> Node:
        return self.leaf(value, requires_grad=False)

    def value(self, node: Node) -> np.ndarray:
        return node.value

    def apply(self, prim: Primitive, *parents: Node, **kwargs) -> Node:
        vals = tuple(p.value for p in parents)
        out = prim.fwd(*vals, **kwargs)
        node = Node(
            out,
            parents=parents,
            prim=prim,
            kwargs=kwargs,
            requires_grad=any(p.requires_grad for p in parents),
        )
        self._records.append(node)
        return node

    def __len__(self):
        return len(self._records)

    def backward(self, loss: Node, seed: float = 1.0) -> dict[int, np.ndarray]:
        """Reverse sweep from ``loss``; returns gradients keyed by id(node).

        Leaves that the loss does not depend on simply have no entry; callers
        should treat a missing entry as an exact zero gradient.
        """
        if loss.value.ndim != 0:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        try:
            start = len(self._records) - 1 - self._records[::-1].index(loss)
        except ValueError:
            raise TapeError("loss node was not recorded on this tape") from None
        grads: dict[int, np.ndarray] = {id(loss): np.asarray(float(seed))}
        for node in reversed(self._records[: start + 1]):
            g = grads.pop(id(node), None)
            if g is None or not node.requires_grad:
                continue
            parent_grads = node.prim.vjp(g, node.value, *(p.value for p in node.parents), **node.kwargs)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        return grads

    def replay(self) -> None:
        """Re-execute every record; raise if any output differs bitwise."""
        for i, node in enumerate(self._records):
            if node.prim is None:
                continue
            redo = node.prim.fwd(*(p.value for p in node.parents), **node.kwargs)
            if redo.shape != node.value.shape or not np.array_equal(
                redo, node.value, equal_nan=True
            ):
                raise TapeError(f"replay mismatch at record {i} ({node.prim.name})")


class _EagerRuntime:
    """Drop-in for Tape that executes primitives without recording.

    Handles are the raw ndarrays themselves, so taped and untaped forwards
    run the identical numeric code.
    """

    def leaf(self, value, requires_grad: bool = False):
        return np.asarray(value, dtype=np.float64)

    def constant(self, value):
        return np.asarray(value, dtype=np.float64)

    def value(self, handle):
        return handle

    def apply(self, prim: Primitive, *handles, **kwargs):
        return prim.fwd(*handles, **kwargs)


EAGER = _EagerRuntime()


# ---------------------------------------------------------------------------
# primitive forwards and VJPs
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Zero-padded patch matrix: (C*kh*kw, H*W) with cols[(c,a,b), (y,x)] = x[c, y+a-ph, x+b-pw]."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    cols = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (C, H, W, kh, kw)
    return np.ascontiguousarray(cols.transpose(0, 3, 4, 1, 2)).reshape(c * kh * kw, h * w)


def _conv_fwd(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    # x: (Ci, H, W); k: (Co, Ci, kh, kw) with odd kh, kw; b: (Co,)
    co, ci, kh, kw = k.shape
    if x.ndim != 3 or x.shape[0] != ci:
        raise ShapeError(f"conv input has shape {x.shape}, kernel expects {ci} channels")
    h, w = x.shape[1:]
    if kh == 1 and kw == 1:
        y = k[:, :, 0, 0] @ x.reshape(ci, h * w)
    else:
        y = k.reshape(co, ci * kh * kw) @ _im2col(x, kh, kw)
    return y.reshape(co, h, w) + b[:, None, None]


def _conv_vjp(g, out, x, k, b):
    co, ci, kh, kw = k.shape
    h, w = x.shape[1:]
    db = g.sum(axis=(1, 2))
    g2 = g.reshape(co, h * w)
    if kh == 1 and kw == 1:
        dk = (g2 @ x.reshape(ci, h * w).T)[:, :, None, None]
        dx = (k[:, :, 0, 0].T @ g2).reshape(ci, h, w)
        return dx, dk, db
    dk = (g2 @ _im2col(x, kh, kw).T).reshape(co, ci, kh, kw)
    # dx is the correlation of g with the spatially flipped, channel-swapped kernel
    kf = np.ascontiguousarray(k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)).reshape(
        ci, co * kh * kw
    )
    dx = (kf @ _im2col(g, kh, kw)).reshape(ci, h, w)
    return dx, dk, db


def _tanh_fwd(x):
    return np.tanh(x)


def _tanh_vjp(g, out, x):
    return (g * (1.0 - out * out),)


def _avgpool2_fwd(x):
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool2 needs even spatial dims, got {(h, w)}")
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def _avgpool2_vjp(g, out, x):
    gx = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
    return (gx,)


def _upsample2_fwd(x):
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def _upsample2_vjp(g, out, x):
    c, h, w = g.shape
    return (g.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4)),)


def _concat_fwd(a, b):
    return np.concatenate([a, b], axis=0)


def _concat_vjp(g, out, a, b):
    return g[: a.shape[0]], g[a.shape[0] :]


def _stack_fwd(*fields):
    return np.stack(fields, axis=0)


def _stack_vjp(g, out, *fields):
    return tuple(g[i] for i in range(len(fields)))


def _squeeze_fwd(x):
    if x.shape[0] != 1:
        raise ShapeError(f"squeeze expects a single channel, got {x.shape}")
    return x[0]


def _squeeze_vjp(g, out, x):
    return (g[None, :, :],)


def _scale_fwd(x, *, factor):
    return x * factor


def _scale_vjp(g, out, x, *, factor):
    return (g * factor,)


def _add_fwd(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def _add_vjp(g, out, a, b):
    return g, g


def _level_step_fwd(phi, v, *, reg, dt, mu):
    return step_update(phi, v, reg, dt, mu)


def _level_step_vjp(g, out, phi, v, *, reg, dt, mu):
    # reg is a constant here: the regularizer is excluded from the gradient path
    return g, -dt * g


def _heaviside_fwd(phi, *, eps):
    return smooth_heaviside(phi, eps)


def _heaviside_vjp(g, out, phi, *, eps):
    return (g * smooth_dirac(phi, eps),)


def _bce_mean_fwd(p, *, target):
    if p.shape != target.shape:
        raise ShapeError(f"BCE shape mismatch: {p.shape} vs {target.shape}")
    t = target
    return np.asarray(-np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p)))


def _bce_mean_vjp(g, out, p, *, target):
    return (g * (p - target) / (p * (1.0 - p)) / p.size,)


def _logit_bce_mean_fwd(z, *, target):
    if z.shape != target.shape:
        raise ShapeError(f"BCE shape mismatch: {z.shape} vs {target.shape}")
    # softplus(z) - y*z, numerically stable in both tails
    return np.asarray(np.mean(np.logaddexp(0.0, z) - target * z))


def _logit_bce_mean_vjp(g, out, z, *, target):
    sig = 1.0 / (1.0 + np.exp(-z))
    return (g * (sig - target) / z.size,)


CONV = Primitive("conv", _conv_fwd, _conv_vjp)
TANH = Primitive("tanh", _tanh_fwd, _tanh_vjp)
AVGPOOL2 = Primitive("avgpool2", _avgpool2_fwd, _avgpool2_vjp)
UPSAMPLE2 = Primitive("upsample2", _upsample2_fwd, _upsample2_vjp)
CONCAT = Primitive("concat", _concat_fwd, _concat_vjp)
STACK = Primitive("stack", _stack_fwd, _stack_vjp)
SQUEEZE = Primitive("squeeze", _squeeze_fwd, _squeeze_vjp)
SCALE = Primitive("scale", _scale_fwd, _scale_vjp)
ADD = Primitive("add", _add_fwd, _add_vjp)
LEVEL_STEP = Primitive("level_step", _level_step_fwd, _level_step_vjp)
HEAVISIDE = Primitive("heaviside", _heaviside_fwd, _heaviside_vjp)
BCE_MEAN = Primitive("bce_mean", _bce_mean_fwd, _bce_mean_vjp)
LOGIT_BCE_MEAN = Primitive("logit_bce_mean", _logit_bce_mean_fwd, _logit_bce_mean_vjp)

ALL_PRIMITIVES: Sequence[Primitive] = (
    CONV,
    TANH,
    AVGPOOL2,
    UPSAMPLE2,
    CONCAT,
    STACK,
    SQUEEZE,
    SCALE,
    ADD,
    LEVEL_STEP,
    HEAVISIDE,
    BCE_MEAN,
    LOGIT_BCE_MEAN,
)
