"""Dense float64 tensors with reverse-mode differentiation.

A ``Graph`` is an append-only tape of operation records. Values are plain
numpy arrays (always float64, always finite); building an op evaluates it
eagerly and stores the result, so the tape doubles as the forward cache.
``Graph.grad`` walks the tape backwards with hand-written adjoints for a
closed op vocabulary — there is no taping of arbitrary closures, which keeps
every op finite-difference checkable.

Shapes follow numpy conventions. "Rows" ops (softmax_rows, per-row losses)
act on the last axis; matmul acts on the last two axes and broadcasts any
leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fastconv
from ..errors import ContractError

Array = np.ndarray


def _as_f64(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    return a


def softplus(x: Array) -> Array:
    # log(1 + e^x) without overflow for large |x|
    return np.logaddexp(0.0, x)


def inv_softplus(y) -> Array:
    """Inverse of softplus for y > 0: log(e^y - 1)."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ContractError("inv_softplus requires positive input")
    return y + np.log1p(-np.exp(-y))


def sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_rows_value(x: Array) -> Array:
    """Row softmax over the last axis, shift-invariant and overflow-safe."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _reduce_to_shape(g: Array, shape: tuple) -> Array:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if g.shape[ax] != n:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


@dataclass
class Node:
    op: str
    inputs: tuple
    value: Array
    extra: dict = field(default_factory=dict)
    param: bool = False
    name: Optional[str] = None


class Graph:
    """Append-only op tape over float64 arrays."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.check_finite = check_finite

    # -- construction ------------------------------------------------------

    def _push(self, op, inputs, value, extra=None, param=False, name=None) -> int:
        value = _as_f64(value)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise ContractError(f"non-finite value produced by op '{op}'")
        self.nodes.append(Node(op, tuple(inputs), value, extra or {}, param, name))
        return len(self.nodes) - 1

    def value(self, nid: int) -> Array:
        return self.nodes[nid].value

    def leaf(self, value, param: bool = False, name: Optional[str] = None) -> int:
        return self._push("leaf", (), value, param=param, name=name)

    def constant(self, value) -> int:
        return self.leaf(value, param=False)

    # -- arithmetic --------------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return self._push("add", (a, b), self.value(a) + self.value(b))

    def sub(self, a: int, b: int) -> int:
        return self._push("sub", (a, b), self.value(a) - self.value(b))

    def mul(self, a: int, b: int) -> int:
        return self._push("mul", (a, b), self.value(a) * self.value(b))

    def scale(self, a: int, c: float) -> int:
        return self._push("scale", (a,), self.value(a) * float(c), {"c": float(c)})

    def matmul(self, a: int, b: int, transpose_a: bool = False, transpose_b: bool = False) -> int:
        va, vb = self.value(a), self.value(b)
        ea = np.swapaxes(va, -1, -2) if transpose_a else va
        eb = np.swapaxes(vb, -1, -2) if transpose_b else vb
        return self._push("matmul", (a, b), ea @ eb, {"ta": transpose_a, "tb": transpose_b})

    def affine(self, x: int, w: int, b: int) -> int:
        vw = self.value(w)
        if vw.ndim != 2 or self.value(b).shape != (vw.shape[1],):
            raise ContractError("affine expects 2-D weight and matching 1-D bias")
        return self._push("affine", (x, w, b), self.value(x) @ vw + self.value(b))

    # -- activations -------------------------------------------------------

    def relu(self, a: int) -> int:
        return self._push("relu", (a,), np.maximum(self.value(a), 0.0))

    def tanh(self, a: int) -> int:
        return self._push("tanh", (a,), np.tanh(self.value(a)))

    def sigmoid(self, a: int) -> int:
        return self._push("sigmoid", (a,), sigmoid(self.value(a)))

    def softplus(self, a: int) -> int:
        return self._push("softplus", (a,), softplus(self.value(a)))

    def softmax_rows(self, a: int) -> int:
        return self._push("softmax_rows", (a,), softmax_rows_value(self.value(a)))

    # -- shape plumbing ----------------------------------------------------

    def concat(self, ids, axis: int = -1) -> int:
        vals = [self.value(i) for i in ids]
        splits = np.cumsum([v.shape[axis] for v in vals])[:-1]
        return self._push("concat", tuple(ids), np.concatenate(vals, axis=axis),
                          {"axis": axis, "splits": splits})

    def slice_last(self, a: int, start: int, stop: int) -> int:
        return self._push("slice_last", (a,), self.value(a)[..., start:stop],
                          {"start": start, "stop": stop})

    def reshape(self, a: int, shape) -> int:
        return self._push("reshape", (a,), self.value(a).reshape(shape))

    def sum(self, a: int) -> int:
        return self._push("sum", (a,), np.sum(self.value(a)))

    def mean(self, a: int) -> int:
        return self._push("mean", (a,), np.mean(self.value(a)))

    # -- losses ------------------------------------------------------------

    def mse(self, pred: int, target: int) -> int:
        d = self.value(pred) - self.value(target)
        return self._push("mse", (pred, target), np.mean(d * d))

    def bce_logits(self, logits: int, target: int) -> int:
        """Mean binary cross-entropy of sigmoid(logits) against targets in [0,1]."""
        z, t = self.value(logits), self.value(target)
        if z.shape != t.shape:
            raise ContractError("bce_logits shape mismatch")
        loss = np.mean(softplus(z) - z * t)
        return self._push("bce_logits", (logits, target), loss)

    # -- image ops ---------------------------------------------------------

    def conv2d(self, x: int, w: int, b: int, stride: int = 1) -> int:
        """3x3-style convolution on NCHW input with symmetric zero padding.

        Weight shape (kh, kw, cin, cout); output spatial size is
        ceil(H / stride) for odd kernels.
        """
        vx, vw, vb = self.value(x), self.value(w), self.value(b)
        kh, kw, cin, cout = vw.shape
        if vx.ndim != 4 or vx.shape[1] != cin or vb.shape != (cout,):
            raise ContractError("conv2d operand shapes do not line up")
        out = _conv2d_forward(vx, vw, vb, stride)
        return self._push("conv2d", (x, w, b), out, {"stride": stride})

    def upsample2(self, x: int) -> int:
        vx = self.value(x)
        if vx.ndim != 4:
            raise ContractError("upsample2 expects NCHW input")
        return self._push("upsample2", (x,), vx.repeat(2, axis=2).repeat(2, axis=3))

    # -- differentiation ---------------------------------------------------

    def grad(self, loss: int) -> dict[int, Array]:
        """Return d(loss)/d(p) for every parameter leaf.

        The loss node must be scalar. Forward values are left untouched.
        """
        if self.value(loss).shape != ():
            raise ContractError("loss node must be scalar")
        adj: dict[int, Array] = {loss: np.ones(())}
        for nid in range(loss, -1, -1):
            if nid not in adj:
                continue
            node = self.nodes[nid]
            g = adj[nid]
            for iid, gi in self._adjoints(node, g):
                if gi is None:
                    continue
                if iid in adj:
                    adj[iid] = adj[iid] + gi
                else:
                    adj[iid] = gi
        out = {}
        for nid, node in enumerate(self.nodes):
            if node.param:
                out[nid] = adj.get(nid, np.zeros_like(node.value))
        return out

    def _adjoints(self, node: Node, g: Array):
        op = node.op
        ins = node.inputs
        v = lambda i: self.nodes[i].value  # noqa: E731

        if op == "leaf":
            return []
        if op == "add":
            return [(ins[0], _reduce_to_shape(g, v(ins[0]).shape)),
                    (ins[1], _reduce_to_shape(g, v(ins[1]).shape))]
        if op == "sub":
            return [(ins[0], _reduce_to_shape(g, v(ins[0]).shape)),
                    (ins[1], _reduce_to_shape(-g, v(ins[1]).shape))]
        if op == "mul":
            a, b = ins
            return [(a, _reduce_to_shape(g * v(b), v(a).shape)),
                    (b, _reduce_to_shape(g * v(a), v(b).shape))]
        if op == "scale":
            return [(ins[0], g * node.extra["c"])]
        if op == "matmul":
            a, b = ins
            ta, tb = node.extra["ta"], node.extra["tb"]
            va, vb = v(a), v(b)
            ea = np.swapaxes(va, -1, -2) if ta else va
            eb = np.swapaxes(vb, -1, -2) if tb else vb
            dea = g @ np.swapaxes(eb, -1, -2)
            deb = np.swapaxes(ea, -1, -2) @ g
            da = np.swapaxes(dea, -1, -2) if ta else dea
            db = np.swapaxes(deb, -1, -2) if tb else deb
            return [(a, _reduce_to_shape(da, va.shape)), (b, _reduce_to_shape(db, vb.shape))]
        if op == "affine":
            x, w, b = ins
            vx, vw = v(x), v(w)
            xf = vx.reshape(-1, vx.shape[-1])
            gf = g.reshape(-1, g.shape[-1])
            return [(x, (g @ vw.T).reshape(vx.shape)), (w, xf.T @ gf), (b, gf.sum(axis=0))]
        if op == "relu":
            return [(ins[0], g * (v(ins[0]) > 0))]
        if op == "tanh":
            return [(ins[0], g * (1.0 - node.value ** 2))]
        if op == "sigmoid":
            return [(ins[0], g * node.value * (1.0 - node.value))]
        if op == "softplus":
            return [(ins[0], g * sigmoid(v(ins[0])))]
        if op == "softmax_rows":
            y = node.value
            return [(ins[0], y * (g - np.sum(g * y, axis=-1, keepdims=True)))]
        if op == "concat":
            axis = node.extra["axis"]
            pieces = np.split(g, node.extra["splits"], axis=axis)
            return list(zip(ins, pieces))
        if op == "slice_last":
            full = np.zeros_like(v(ins[0]))
            full[..., node.extra["start"]:node.extra["stop"]] = g
            return [(ins[0], full)]
        if op == "reshape":
            return [(ins[0], g.reshape(v(ins[0]).shape))]
        if op == "sum":
            return [(ins[0], np.broadcast_to(g, v(ins[0]).shape).copy())]
        if op == "mean":
            vx = v(ins[0])
            return [(ins[0], np.broadcast_to(g / vx.size, vx.shape).copy())]
        if op == "mse":
            pred, target = ins
            d = v(pred) - v(target)
            return [(pred, g * 2.0 * d / d.size), (target, None)]
        if op == "bce_logits":
            logits, target = ins
            z, t = v(logits), v(target)
            return [(logits, g * (sigmoid(z) - t) / z.size), (target, None)]
        if op == "conv2d":
            return self._conv2d_adjoints(node, g)
        if op == "upsample2":
            n, c, h2, w2 = node.value.shape
            gi = g.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
            return [(ins[0], gi)]
        raise ContractError(f"unsupported op kind '{op}' in backward pass")

    def _conv2d_adjoints(self, node: Node, g: Array):
        x, w, b = node.inputs
        vx, vw = self.nodes[x].value, self.nodes[w].value
        dx, dw, db = _conv2d_backward(g, vx, vw, node.extra["stride"])
        return [(x, dx), (w, dw), (b, db)]


def _padded(x: Array, ph: int, pw: int) -> Array:
    n, h, w, c = x.shape
    out = np.zeros((n, h + 2 * ph, w + 2 * pw, c))
    out[:, ph:ph + h, pw:pw + w] = x
    return out


def _out_size(n: int, k: int, pad: int, stride: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _window_view(xp: Array, ow: int, kw: int, cin: int, stride: int) -> Array:
    """Width-direction sliding windows as a zero-copy strided view.

    The kw * cin floats of one window are contiguous in memory, so the view
    (n, hp, ow, kw*cin) is legal; it feeds a single GEMM per convolution.
    """
    n, hp = xp.shape[0], xp.shape[1]
    sn, sh, sw, sc = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(n, hp, ow, kw * cin), strides=(sn, sh, sw * stride, sc), writeable=False)


def _conv2d_forward(x: Array, w: Array, b: Array, stride: int) -> Array:
    """NCHW convolution; numba kernels when available, GEMM fallback otherwise."""
    kh, kw, cin, cout = w.shape
    n, _, h, wid = x.shape
    ph, pw = kh // 2, kw // 2
    oh, ow = _out_size(h, kh, ph, stride), _out_size(wid, kw, pw, stride)
    if fastconv.supports(stride):
        return fastconv.conv2d_forward(np.ascontiguousarray(x), w, b, stride, oh, ow)
    xp = _padded(np.moveaxis(x, 1, 3), ph, pw)
    view = _window_view(xp, ow, kw, cin, stride)
    wall = np.transpose(w, (1, 2, 0, 3)).reshape(kw * cin, kh * cout)
    rows = view.reshape(-1, kw * cin) @ wall
    rows = rows.reshape(n, xp.shape[1], ow, kh, cout)
    out = np.broadcast_to(b, (n, oh, ow, cout)).copy()
    for di in range(kh):
        out += rows[:, di:di + oh * stride:stride, :, di]
    return np.ascontiguousarray(np.moveaxis(out, 3, 1))


def _conv2d_backward(g: Array, x: Array, w: Array, stride: int):
    kh, kw, cin, cout = w.shape
    n, _, h, wid = x.shape
    ph, pw = kh // 2, kw // 2
    if fastconv.supports(stride):
        return fastconv.conv2d_backward(g, np.ascontiguousarray(x), w, stride)
    g = np.moveaxis(g, 1, 3)
    xp = _padded(np.moveaxis(x, 1, 3), ph, pw)
    hp = xp.shape[1]
    oh, ow = g.shape[1], g.shape[2]
    wall = np.transpose(w, (1, 2, 0, 3)).reshape(kw * cin, kh * cout)

    grows = np.zeros((n, hp, ow, kh, cout))
    for di in range(kh):
        grows[:, di:di + oh * stride:stride, :, di] = g
    grows = grows.reshape(-1, kh * cout)

    view = _window_view(xp, ow, kw, cin, stride).reshape(-1, kw * cin)
    dwall = view.T @ grows
    dw = dwall.reshape(kw, cin, kh, cout).transpose(2, 0, 1, 3).copy()

    dview = (grows @ wall.T).reshape(n, hp, ow, kw, cin)
    dxp = np.zeros_like(xp)
    for dj in range(kw):
        dxp[:, :, dj:dj + ow * stride:stride] += dview[:, :, :, dj]
    dx = np.moveaxis(dxp[:, ph:ph + h, pw:pw + wid], 3, 1)
    return np.ascontiguousarray(dx), dw, g.sum(axis=(0, 1, 2))
