"""Minimal reverse-mode autodiff over f64 numpy arrays.

Only the operations the point network needs: batched affine maps, ReLU,
axis max-pooling, gather/concat plumbing, batch normalization, dropout,
and softmax cross-entropy. Tensors carry up to four axes
(batch, points, neighbors, channels).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import InvalidInput, NumericsError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 4:
            raise ShapeError("tensors carry at most 4 axes")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def backward(self):
        if self.data.size != 1:
            raise ShapeError("backward() starts from a scalar")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)

    def accumulate(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != value shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=tuple(p for p in parents if p.requires_grad),
                  backward=backward if req else None)


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """(..., Cin) @ (Cin, Cout): one affine map shared across all leading
    positions."""
    x, w = as_tensor(x), as_tensor(w)
    if w.data.ndim != 2 or x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(f"matmul mismatch: {x.data.shape} @ {w.data.shape}")
    out_data = x.data @ w.data

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ w.data.T)
        if w.requires_grad:
            xf = x.data.reshape(-1, x.data.shape[-1])
            gf = g.reshape(-1, g.shape[-1])
            w.accumulate(xf.T @ gf)

    out = _make(out_data, (x, w), backward)
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias (C,) to (..., C)."""
    x, b = as_tensor(x), as_tensor(b)
    if b.data.shape != (x.data.shape[-1],):
        raise ShapeError(f"bias shape {b.data.shape} does not match channels {x.data.shape[-1]}")
    out_data = x.data + b.data

    def backward(g):
        if x.requires_grad:
            x.accumulate(g)
        if b.requires_grad:
            b.accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _make(out_data, (x, b), backward)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    orig = x.data.shape
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g.reshape(orig))

    return _make(out_data, (x,), backward)


def max_axis(x: Tensor, axis: int) -> Tensor:
    """Per-channel maximum over one axis; the backward pass routes each
    gradient to the first maximizing position."""
    x = as_tensor(x)
    if x.data.shape[axis] == 0:
        raise ShapeError("cannot reduce a size-0 axis")
    arg = np.argmax(x.data, axis=axis)
    out_data = np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
            x.accumulate(gx)

    return _make(out_data, (x,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t.accumulate(piece)

    return _make(out_data, tuple(tensors), backward)


def gather_points(x: Tensor, idx: np.ndarray) -> Tensor:
    """(B, N, C) gathered with (B, M, K) indices -> (B, M, K, C); the
    backward pass scatter-adds into the source positions."""
    x = as_tensor(x)
    if x.data.ndim != 3 or idx.ndim != 3 or idx.shape[0] != x.data.shape[0]:
        raise ShapeError(f"gather expects (B,N,C) and (B,M,K), got {x.data.shape} and {idx.shape}")
    b_ix = np.arange(x.data.shape[0])[:, None, None]
    out_data = x.data[b_ix, idx]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, (b_ix, idx), g)
            x.accumulate(gx)

    return _make(out_data, (x,), backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               train: bool, momentum: float = 0.9, eps: float = 1e-8) -> Tensor:
    """Normalize over all non-channel axes (channels last), then apply the
    affine scale/shift. Training mode uses batch statistics and updates the
    running arrays in place; eval mode uses the running statistics."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.data.shape[-1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError("batch_norm affine parameters must be per-channel")
    axes = tuple(range(x.data.ndim - 1))
    if train:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean) * inv_std
    out_data = gamma.data * x_hat + beta.data

    m = x.data.size // c

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate((g * x_hat).reshape(-1, c).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate(g.reshape(-1, c).sum(axis=0))
        if x.requires_grad:
            gh = g * gamma.data
            if train:
                sum_gh = gh.reshape(-1, c).sum(axis=0)
                sum_gh_xhat = (gh * x_hat).reshape(-1, c).sum(axis=0)
                gx = (inv_std / m) * (m * gh - sum_gh - x_hat * sum_gh_xhat)
            else:
                gx = gh * inv_std
            x.accumulate(gx)

    return _make(out_data, (x, gamma, beta), backward)


def dropout(x: Tensor, rate: float, train: bool,
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: training zeroes with probability rate and scales
    survivors by 1/(1-rate); eval is the identity."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise InvalidInput(f"dropout rate {rate} must be in [0, 1)")
    if not train or rate == 0.0:
        def backward_id(g):
            if x.requires_grad:
                x.accumulate(g)
        return _make(x.data.copy(), (x,), backward_id)
    if rng is None:
        raise InvalidInput("train-mode dropout requires an RNG stream")
    keep = rng.random(x.data.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    mask = keep * scale

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * mask)

    return _make(x.data * mask, (x,), backward)


def softmax_xent(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy over the batch with log-sum-exp stabilization.
    Gradient is (softmax - onehot) / batch."""
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError("logits must be (batch, classes)")
    if not np.isfinite(logits.data).all():
        raise NumericsError("non-finite logits")
    labels = np.asarray(labels)
    b, c = logits.data.shape
    if labels.shape != (b,):
        raise ShapeError("labels must be one per batch row")
    if labels.min() < 0 or labels.max() >= c:
        raise InvalidInput("label outside class range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - lse
    loss = -log_probs[np.arange(b), labels].mean()
    probs = np.exp(log_probs)

    def backward(g):
        if logits.requires_grad:
            grad = probs.copy()
            grad[np.arange(b), labels] -= 1.0
            logits.accumulate(g * grad / b)

    return _make(np.asarray(loss), (logits,), backward)


def mean_all(x: Tensor) -> Tensor:
    """Scalar mean of all entries; handy for gradient checks."""
    x = as_tensor(x)
    n = x.data.size

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.full(x.data.shape, float(g) / n))

    return _make(np.asarray(x.data.mean()), (x,), backward)


def sum_mul(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar sum(x * weights) for probing gradients of non-scalar outputs."""
    x = as_tensor(x)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.data.shape:
        raise ShapeError("probe weights must match the tensor shape")

    def backward(g):
        if x.requires_grad:
            x.accumulate(float(g) * w)

    return _make(np.asarray((x.data * w).sum()), (x,), backward)
