"""Forward and backward kernels for the layer set used by BeamNet.

Tensors are channels-last: images are (N, H, W, C) and conv filters are
(F, d, w, C). The convolution is the sliding-window sum

    O[i, j, f] = sum_{k, l, c} P[f, k, l, c] * I[i + k - p_top, j + l - p_left, c]

with zeros outside the input. With full padding (p = d-1, w-1) this is the
textbook double-flipped convolution O_ij = sum P[d-k, w-l] I[i-k, j-l]
over 1-based indices, whose output is (n + d - 1, m + w - 1).
"""

from __future__ import annotations

import numpy as np

PADDINGS = ("valid", "same", "full")


def _pads(d: int, w: int, padding: str) -> tuple[tuple[int, int], tuple[int, int]]:
    if padding == "valid":
        return (0, 0), (0, 0)
    if padding == "same":
        return ((d - 1) // 2, d - 1 - (d - 1) // 2), ((w - 1) // 2, w - 1 - (w - 1) // 2)
    if padding == "full":
        return (d - 1, d - 1), (w - 1, w - 1)
    raise ValueError(f"padding must be one of {PADDINGS}, got {padding!r}")


def conv_output_shape(h: int, w: int, d: int, fw: int, padding: str) -> tuple[int, int]:
    (pt, pb), (pl, pr) = _pads(d, fw, padding)
    return h + pt + pb - d + 1, w + pl + pr - fw + 1


def conv_forward(x: np.ndarray, filters: np.ndarray, bias: np.ndarray | None = None,
                 padding: str = "same") -> np.ndarray:
    """Multi-filter 2-D convolution; accepts (H, W, C) or (N, H, W, C) input."""
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4 or filters.ndim != 4:
        raise ValueError(f"conv_forward expects (N,H,W,C) input and (F,d,w,C) filters, got {x.shape}, {filters.shape}")
    n, h, w, c = x.shape
    f, d, fw, fc = filters.shape
    if fc != c:
        raise ValueError(f"filters expect {fc} input channels, input has {c}")
    (pt, pb), (pl, pr) = _pads(d, fw, padding)
    if d > h + pt + pb or fw > w + pl + pr:
        raise ValueError(f"filter {d}x{fw} larger than padded input {h + pt + pb}x{w + pl + pr}")
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    ho, wo = h + pt + pb - d + 1, w + pl + pr - fw + 1
    out = np.zeros((n, ho, wo, f), dtype=np.result_type(x, filters))
    for k in range(d):
        for l in range(fw):
            out += xp[:, k:k + ho, l:l + wo, :] @ filters[:, k, l, :].T
    if bias is not None:
        out += bias
    return out[0] if squeeze else out


def conv_backward(dout: np.ndarray, x: np.ndarray, filters: np.ndarray, padding: str = "same"):
    """Gradients (dx, dfilters, dbias) of conv_forward for upstream ``dout``."""
    n, h, w, c = x.shape
    f, d, fw, _ = filters.shape
    (pt, pb), (pl, pr) = _pads(d, fw, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    ho, wo = dout.shape[1], dout.shape[2]
    dxp = np.zeros(xp.shape, dtype=np.result_type(dout, filters))
    dw = np.empty(filters.shape, dtype=dxp.dtype)
    g = dout.reshape(-1, f)
    for k in range(d):
        for l in range(fw):
            win = xp[:, k:k + ho, l:l + wo, :]
            dw[:, k, l, :] = g.T @ win.reshape(-1, c)
            dxp[:, k:k + ho, l:l + wo, :] += dout @ filters[:, k, l, :]
    db = g.sum(axis=0)
    dx = dxp[:, pt:pt + h, pl:pl + w, :]
    return dx, dw, db


def maxpool_forward(x: np.ndarray, size: int = 2):
    """Non-overlapping 1 x ``size`` max pooling along the width axis.

    Returns (output, argmax) where argmax holds the winning offset inside
    each window; trailing columns that do not fill a window are dropped.
    """
    n, h, w, c = x.shape
    if w < size:
        raise ValueError(f"cannot pool width {w} with window {size}")
    wo = w // size
    if size == 2:
        # elementwise fast path; ties go to the first column like argmax
        a, b = x[:, :, 0:2 * wo:2, :], x[:, :, 1:2 * wo:2, :]
        second = b > a
        return np.where(second, b, a), second.view(np.uint8)
    win = x[:, :, :wo * size, :].reshape(n, h, wo, size, c)
    idx = np.argmax(win, axis=3)
    out = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, idx


def maxpool_backward(dout: np.ndarray, idx: np.ndarray, in_shape: tuple, size: int = 2) -> np.ndarray:
    n, h, w, c = in_shape
    wo = dout.shape[2]
    if size == 2:
        dx = np.zeros(in_shape, dtype=dout.dtype)
        second = idx.astype(bool)
        dx[:, :, 0:2 * wo:2, :] = np.where(second, 0, dout)
        dx[:, :, 1:2 * wo:2, :] = np.where(second, dout, 0)
        return dx
    dwin = np.zeros((n, h, wo, size, c), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
    dx = np.zeros(in_shape, dtype=dout.dtype)
    dx[:, :, :wo * size, :] = dwin.reshape(n, h, wo * size, c)
    return dx


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x @ weight + bias


def dense_backward(dout: np.ndarray, x: np.ndarray, weight: np.ndarray):
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def _class_indices(labels, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim == 2:
        y = np.argmax(y, axis=1)
    y = y.astype(np.int64)
    if np.any(y < 0) or np.any(y >= num_classes):
        raise ValueError(f"class index out of range for {num_classes} classes: {y[(y < 0) | (y >= num_classes)][:5]}")
    return y


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean categorical cross-entropy of probability rows against labels."""
    p = np.atleast_2d(probs)
    y = _class_indices(labels, p.shape[1])
    picked = p[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, np.finfo(float).tiny))))


def softmax_cross_entropy(logits: np.ndarray, labels):
    """(loss, dloss/dlogits) computed from logits in a stable way."""
    logits = np.atleast_2d(logits)
    y = _class_indices(labels, logits.shape[1])
    ls = log_softmax(logits)
    n = len(y)
    loss = float(-ls[np.arange(n), y].mean())
    grad = np.exp(ls)
    grad[np.arange(n), y] -= 1.0
    return loss, grad / n
