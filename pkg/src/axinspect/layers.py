"""Differentiable layer operations over :class:`axinspect.tensor.Tensor`.

Conventions: channels last, valid (no-padding) convolutions with stride 1,
one sample at a time (no leading batch axis).  Every op registers its
backward closure with the active gradient tape via ``record``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, record

MODES = ("train", "infer")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


# ---------------------------------------------------------------------------
# elementwise / shape ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes, got {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    return record(out, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul needs equal shapes, got {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)
    return record(out, (a, b), lambda g: (g * b.data, g * a.data))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))
    return record(out, (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign for numerical stability at large |x|.
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.clip(d, 0, None))),
                 np.exp(np.clip(d, None, 0)) / (1.0 + np.exp(np.clip(d, None, 0))))
    out = Tensor(s)
    return record(out, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = Tensor(t)
    return record(out, (x,), lambda g: (g * (1.0 - t * t),))


def tensor_sum(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype))
    return record(out, (x,), lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} ({x.size} values) to {shape}")
    out = Tensor(x.data.reshape(shape))
    return record(out, (x,), lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.size,))


def slice1d(x: Tensor, start: int, stop: int) -> Tensor:
    if x.ndim != 1:
        raise ShapeError(f"slice1d needs a vector, got shape {x.shape}")
    if not (0 <= start < stop <= x.size):
        raise ShapeError(f"slice [{start}:{stop}] out of range for length {x.size}")
    out = Tensor(x.data[start:stop].copy())

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        return (gx,)

    return record(out, (x,), backward)


def take_channel(x: Tensor, k: int) -> Tensor:
    """Select index ``k`` of the next-to-last axis (slice k of a patch stack)."""
    if x.ndim < 2:
        raise ShapeError(f"take_channel needs >= 2 axes, got shape {x.shape}")
    if not 0 <= k < x.shape[-2]:
        raise ShapeError(f"channel {k} out of range for shape {x.shape}")
    out = Tensor(np.ascontiguousarray(x.data[..., k, :]))

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[..., k, :] = g
        return (gx,)

    return record(out, (x,), backward)


def concat1d(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"concat1d needs vectors, got {a.shape} and {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data]))
    n = a.size
    return record(out, (a, b), lambda g: (g[:n], g[n:]))


# ---------------------------------------------------------------------------
# dense / convolutions


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """out = x @ weight + bias for a single feature vector."""
    if x.ndim != 1 or weight.ndim != 2 or bias.ndim != 1:
        raise ShapeError(
            f"dense expects x[n], weight[n,m], bias[m]; got {x.shape}, {weight.shape}, {bias.shape}"
        )
    n, m = weight.shape
    if x.size != n or bias.size != m:
        raise ShapeError(
            f"dense shape mismatch: x has {x.size} features, weight is {n}x{m}, bias has {bias.size}"
        )
    out = Tensor(x.data @ weight.data + bias.data)

    def backward(g):
        return (weight.data @ g, np.outer(x.data, g), g.copy())

    return record(out, (x, weight, bias), backward)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Valid 2-D convolution, stride 1: x[H,W,Ci] * kernel[kh,kw,Ci,Co] + bias[Co]."""
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects x[H,W,Ci] and kernel[kh,kw,Ci,Co]; got {x.shape}, {kernel.shape}")
    kh, kw, ci, co = kernel.shape
    h, w, xci = x.shape
    if xci != ci:
        raise ShapeError(f"conv2d channel mismatch: input has {xci} channels, kernel expects {ci}")
    if kh > h or kw > w:
        raise ShapeError(f"conv2d kernel {kh}x{kw} larger than input {h}x{w}")
    if bias.shape != (co,):
        raise ShapeError(f"conv2d bias must have shape ({co},), got {bias.shape}")

    win = sliding_window_view(x.data, (kh, kw), axis=(0, 1))  # (OH,OW,Ci,kh,kw)
    out_data = np.einsum("pqcij,ijco->pqo", win, kernel.data, optimize=True) + bias.data
    out = Tensor(out_data)
    oh, ow = out_data.shape[:2]

    def backward(g):
        dk = np.einsum("pqcij,pqo->ijco", win, g, optimize=True)
        db = g.sum(axis=(0, 1))
        dx = np.zeros_like(x.data)
        for i in range(kh):
            for j in range(kw):
                dx[i : i + oh, j : j + ow, :] += np.einsum("pqo,co->pqc", g, kernel.data[i, j], optimize=True)
        return (dx, dk, db)

    return record(out, (x, kernel, bias), backward)


def conv3d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Valid 3-D convolution, stride 1: x[H,W,D,Ci] * kernel[kh,kw,kd,Ci,Co] + bias[Co].

    The kernel moves along all three spatial axes; output extent on each axis
    is extent - kernel + 1.
    """
    if x.ndim != 4 or kernel.ndim != 5:
        raise ShapeError(
            f"conv3d expects x[H,W,D,Ci] and kernel[kh,kw,kd,Ci,Co]; got {x.shape}, {kernel.shape}"
        )
    kh, kw, kd, ci, co = kernel.shape
    h, w, d, xci = x.shape
    if xci != ci:
        raise ShapeError(f"conv3d channel mismatch: input has {xci} channels, kernel expects {ci}")
    if kh > h or kw > w or kd > d:
        raise ShapeError(f"conv3d kernel {kh}x{kw}x{kd} larger than input {h}x{w}x{d}")
    if bias.shape != (co,):
        raise ShapeError(f"conv3d bias must have shape ({co},), got {bias.shape}")

    win = sliding_window_view(x.data, (kh, kw, kd), axis=(0, 1, 2))  # (OH,OW,OD,Ci,kh,kw,kd)
    out_data = np.einsum("pqrcijk,ijkco->pqro", win, kernel.data, optimize=True) + bias.data
    out = Tensor(out_data)
    oh, ow, od = out_data.shape[:3]

    def backward(g):
        dk = np.einsum("pqrcijk,pqro->ijkco", win, g, optimize=True)
        db = g.sum(axis=(0, 1, 2))
        dx = np.zeros_like(x.data)
        for i in range(kh):
            for j in range(kw):
                for k in range(kd):
                    dx[i : i + oh, j : j + ow, k : k + od, :] += np.einsum(
                        "pqro,co->pqrc", g, kernel.data[i, j, k], optimize=True
                    )
        return (dx, dk, db)

    return record(out, (x, kernel, bias), backward)


# ---------------------------------------------------------------------------
# pooling


def maxpool(x: Tensor, window: tuple[int, ...]) -> Tensor:
    """Disjoint-window max over the spatial axes (all but the channel axis).

    Each pooled extent must be divisible by its window entry.  Backward routes
    the full output gradient to the first-occurring maximum of each window.
    """
    spatial = x.ndim - 1
    if len(window) != spatial:
        raise ShapeError(f"window {window} must cover the {spatial} spatial axes of shape {x.shape}")
    for axis, (extent, w) in enumerate(zip(x.shape[:-1], window)):
        if w < 1:
            raise ShapeError(f"window entries must be >= 1, got {window}")
        if extent % w != 0:
            raise ShapeError(f"axis {axis} extent {extent} not divisible by pooling window {w}")

    channels = x.shape[-1]
    out_spatial = tuple(e // w for e, w in zip(x.shape[:-1], window))

    # Split each spatial axis into (blocks, window), gather the window axes
    # last, and flatten them so argmax picks the first maximum on ties.
    split_shape: list[int] = []
    for e, w in zip(x.shape[:-1], window):
        split_shape.extend((e // w, w))
    split_shape.append(channels)
    view = x.data.reshape(split_shape)
    block_axes = tuple(range(0, 2 * spatial, 2))
    win_axes = tuple(range(1, 2 * spatial, 2))
    perm = block_axes + (2 * spatial,) + win_axes
    gathered = view.transpose(perm).reshape(out_spatial + (channels, -1))

    idx = gathered.argmax(axis=-1)
    out_data = np.take_along_axis(gathered, idx[..., None], axis=-1)[..., 0]
    # channel axis back to last already: gathered is (out_spatial..., C, win)
    out = Tensor(out_data)

    def backward(g):
        dwin = np.zeros_like(gathered)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        inv = np.argsort(perm)
        dx = dwin.reshape(out_spatial + (channels,) + window).transpose(inv).reshape(x.shape)
        return (np.ascontiguousarray(dx),)

    return record(out, (x,), backward)


# ---------------------------------------------------------------------------
# batch normalization


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    *,
    mode: str,
    eps: float = 1e-5,
    momentum: float = 0.99,
) -> Tensor:
    """Per-channel normalization; the channel axis is last.

    Train mode normalizes by the statistics of the current input (all
    non-channel positions form the batch) and folds them into the running
    stats in place; infer mode uses the running stats only.  Train mode needs
    at least two positions per channel for a meaningful variance.
    """
    _check_mode(mode)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm scale/shift must have shape ({c},), got {gamma.shape}/{beta.shape}")
    if running_mean.shape != (c,) or running_var.shape != (c,):
        raise ShapeError(f"batchnorm running stats must have shape ({c},)")
    axes = tuple(range(x.ndim - 1))
    n = int(np.prod(x.shape[:-1])) if x.ndim > 1 else 1

    if mode == "train":
        if n < 2:
            raise ShapeError(f"batchnorm train mode needs >= 2 positions per channel, got {n}")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = Tensor(xhat * gamma.data + beta.data)

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data
        if mode == "train":
            dx = inv_std / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        else:
            dx = dxhat * inv_std
        return (dx, dgamma, dbeta)

    return record(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# dropout


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    _check_mode(mode)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        out = Tensor(x.data.copy())
        return record(out, (x,), lambda g: (g,))
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit rng for determinism")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    out = Tensor(x.data * keep * scale)
    return record(out, (x,), lambda g: (g * keep * scale,))


# ---------------------------------------------------------------------------
# LSTM cell


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, weight: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
    """One step of a standard LSTM cell.

    ``weight`` is [(f+u), 4u] over the concatenated (input, hidden) vector and
    ``bias`` is [4u], with gate blocks ordered input, forget, candidate,
    output.  Returns (h', c') where c' = f*c + i*g and h' = o*tanh(c').
    Chaining steps on one tape differentiates through time.
    """
    if x.ndim != 1 or h.ndim != 1 or c.ndim != 1:
        raise ShapeError(f"lstm_cell expects vectors; got x{x.shape}, h{h.shape}, c{c.shape}")
    u = h.size
    if c.size != u:
        raise ShapeError(f"hidden and cell state sizes differ: {u} vs {c.size}")
    if weight.shape != (x.size + u, 4 * u):
        raise ShapeError(
            f"lstm_cell weight must be ({x.size + u}, {4 * u}) for input {x.size} and hidden {u}, got {weight.shape}"
        )
    if bias.shape != (4 * u,):
        raise ShapeError(f"lstm_cell bias must be ({4 * u},), got {bias.shape}")

    z = dense(concat1d(x, h), weight, bias)
    i = sigmoid(slice1d(z, 0, u))
    f = sigmoid(slice1d(z, u, 2 * u))
    g = tanh(slice1d(z, 2 * u, 3 * u))
    o = sigmoid(slice1d(z, 3 * u, 4 * u))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


# ---------------------------------------------------------------------------
# classification head


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Negative log softmax probability of ``label``; gradient is softmax - onehot."""
    if logits.ndim != 1 or logits.size < 2:
        raise ShapeError(f"logits must be a vector of >= 2 classes, got shape {logits.shape}")
    if not 0 <= label < logits.size:
        raise ValueError(f"label {label} out of range for {logits.size} classes")
    z = logits.data - logits.data.max()
    logsumexp = np.log(np.exp(z).sum())
    p = np.exp(z - logsumexp)
    loss = Tensor(np.asarray(logsumexp - z[label], dtype=logits.dtype))

    def backward(g):
        grad = p.copy()
        grad[label] -= 1.0
        return (grad * g,)

    return record(loss, (logits,), backward)
