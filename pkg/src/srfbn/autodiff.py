"""Reverse-mode automatic differentiation on an explicit tape.

Every differentiable value is a Node holding a numpy array. Ops append
nodes in execution order, so the tape is topologically sorted by
construction and backward() is a single reverse sweep. Gradients sum over
every use of a value, which is what makes weight sharing across the
unrolled iterations come out right.

A tape built with record=False produces nodes but retains nothing, giving
a cheap inference mode through the same model code.
"""

from __future__ import annotations

import numpy as np

from . import ops


class Node:
    __slots__ = ("tape", "value", "parents", "backward_fn", "grad", "idx")

    def __init__(self, tape, value, parents=(), backward_fn=None, idx=-1):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.grad = None
        self.idx = idx

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Node(idx={self.idx}, shape={np.shape(self.value)})"


class Tape:
    """Recorder for one forward pass and the gradients of its outputs."""

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: list[Node] = []

    def leaf(self, value) -> Node:
        return self._append(np.asarray(value), (), None)

    def _append(self, value, parents, backward_fn) -> Node:
        if not self.record:
            return Node(self, value)
        node = Node(self, value, parents, backward_fn, idx=len(self.nodes))
        self.nodes.append(node)
        return node

    def backward(self, root: Node) -> None:
        """Populate .grad for every node that root depends on."""
        if root.tape is not self:
            raise ValueError("backward root does not belong to this tape")
        if not self.record or root.idx < 0:
            raise ValueError("tape was not recording; nothing to differentiate")
        if np.size(root.value) != 1:
            raise ValueError(f"backward root must be scalar, got shape {np.shape(root.value)}")
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes[: root.idx + 1]):
            if node.grad is None or node.backward_fn is None:
                continue
            for parent, g in zip(node.parents, node.backward_fn(node.grad)):
                if g is None:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def _tape_of(*nodes: Node) -> Tape:
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ValueError("operands live on different tapes")
    return tape


def conv2d(x: Node, w: Node, b: Node | None, stride: int, pad: int) -> Node:
    tape = _tape_of(x, w) if b is None else _tape_of(x, w, b)
    y = ops.conv2d(x.value, w.value, None if b is None else b.value, stride, pad)
    xv, wv = x.value, w.value
    k = wv.shape[2]
    h, wd = xv.shape[2], xv.shape[3]

    def backward(gy):
        gx = ops.conv2d_grad_input(gy, wv, stride, pad, h, wd)
        gw = ops.conv2d_grad_weight(xv, gy, stride, pad, k)
        if b is None:
            return gx, gw
        return gx, gw, ops.conv2d_grad_bias(gy)

    parents = (x, w) if b is None else (x, w, b)
    return tape._append(y, parents, backward)


def deconv2d(x: Node, w: Node, b: Node | None, stride: int, pad: int) -> Node:
    tape = _tape_of(x, w) if b is None else _tape_of(x, w, b)
    y = ops.deconv2d(x.value, w.value, None if b is None else b.value, stride, pad)
    xv, wv = x.value, w.value
    k = wv.shape[2]

    def backward(gy):
        gx = ops.deconv2d_grad_input(gy, wv, stride, pad)
        gw = ops.deconv2d_grad_weight(xv, gy, stride, pad, k)
        if b is None:
            return gx, gw
        return gx, gw, ops.conv2d_grad_bias(gy)

    parents = (x, w) if b is None else (x, w, b)
    return tape._append(y, parents, backward)


def prelu(x: Node, alpha: Node) -> Node:
    tape = _tape_of(x, alpha)
    y = ops.prelu(x.value, alpha.value)
    xv, av = x.value, alpha.value

    def backward(gy):
        return ops.prelu_grad(xv, av, gy)

    return tape._append(y, (x, alpha), backward)


def concat_channels(parts: list) -> Node:
    tape = _tape_of(*parts)
    y = ops.concat_channels([p.value for p in parts])
    splits = np.cumsum([p.value.shape[1] for p in parts])[:-1]

    def backward(gy):
        return tuple(np.split(gy, splits, axis=1))

    return tape._append(y, tuple(parts), backward)


def bilinear_upsample(x: Node, scale: int) -> Node:
    y = ops.bilinear_upsample(x.value, scale)
    shape = x.value.shape

    def backward(gy):
        return (ops.bilinear_upsample_grad(gy, shape, scale),)

    return x.tape._append(y, (x,), backward)


def add(a: Node, b: Node) -> Node:
    tape = _tape_of(a, b)
    if np.shape(a.value) != np.shape(b.value):
        raise ValueError(f"add shape mismatch: {np.shape(a.value)} vs {np.shape(b.value)}")
    return tape._append(a.value + b.value, (a, b), lambda gy: (gy, gy))


def l1_loss(pred: Node, target: Node) -> Node:
    tape = _tape_of(pred, target)
    y = ops.l1_loss(pred.value, target.value)
    pv, tv = pred.value, target.value

    def backward(gy):
        g = ops.l1_loss_grad(pv, tv, gy)
        return g, -g

    return tape._append(y, (pred, target), backward)


def scaled_sum(terms: list, coeffs: list) -> Node:
    """Scalar combination sum_i coeffs[i] * terms[i] of scalar nodes."""
    if len(terms) != len(coeffs):
        raise ValueError(f"{len(terms)} terms but {len(coeffs)} coefficients")
    tape = _tape_of(*terms)
    dtype = np.asarray(terms[0].value).dtype
    value = dtype.type(sum(float(c) * float(t.value) for t, c in zip(terms, coeffs)))

    def backward(gy):
        return tuple(dtype.type(c) * gy for c in coeffs)

    return tape._append(value, tuple(terms), backward)


def mse_loss(pred: Node, target: Node) -> Node:
    tape = _tape_of(pred, target)
    y = ops.mse_loss(pred.value, target.value)
    pv, tv = pred.value, target.value

    def backward(gy):
        g = ops.mse_loss_grad(pv, tv, gy)
        return g, -g

    return tape._append(y, (pred, target), backward)
