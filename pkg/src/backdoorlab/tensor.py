"""Dense float64 CNN kernels with exact backward passes.

Tensors are C-contiguous float64 numpy arrays (shape + flat row-major data).
Every forward kernel has a paired `*_backward` that maps the upstream
gradient to gradients for each input. Kernels are pure functions: no shared
state, safe to call concurrently on disjoint data.

Conventions fixed here so the backward pass is deterministic:
  - convolution is cross-correlation (no kernel flip)
  - ReLU subgradient at exactly 0 is 0
  - maxpool ties route the gradient to the lowest flat index in the window
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray


def _f64(x) -> Array:
    return np.ascontiguousarray(x, dtype=np.float64)


def _conv_check(x: Array, w: Array, b: Array, stride: int, padding: int):
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be 4-D [B,C,H,W], got {x.ndim}-D")
    if w.ndim != 4:
        raise ValueError(f"conv2d weight must be 4-D [F,C,Kh,Kw], got {w.ndim}-D")
    batch, in_c, h, w_dim = x.shape
    filters, w_c, kh, kw = w.shape
    if in_c != w_c:
        raise ValueError(f"input channel dim C={in_c} does not match weight channel dim C={w_c}")
    if b.shape != (filters,):
        raise ValueError(f"bias shape {b.shape} does not match filter count F={filters}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    span_h = h + 2 * padding - kh
    span_w = w_dim + 2 * padding - kw
    if span_h < 0 or span_h % stride != 0:
        raise ValueError(
            f"H={h} with padding={padding}, Kh={kh} is not divisible by stride={stride}"
        )
    if span_w < 0 or span_w % stride != 0:
        raise ValueError(
            f"W={w_dim} with padding={padding}, Kw={kw} is not divisible by stride={stride}"
        )
    return batch, in_c, h, w_dim, filters, kh, kw, span_h // stride + 1, span_w // stride + 1


def _pad(x: Array, padding: int) -> Array:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d(x: Array, w: Array, b: Array, stride: int = 1, padding: int = 0) -> Array:
    """Cross-correlate x[B,C,H,W] with w[F,C,Kh,Kw] plus per-filter bias."""
    x, w, b = _f64(x), _f64(w), _f64(b)
    batch, _, _, _, filters, kh, kw, out_h, out_w = _conv_check(x, w, b, stride, padding)
    xp = _pad(x, padding)
    y = np.zeros((batch, filters, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride]
            y += np.einsum("bchw,fc->bfhw", patch, w[:, :, i, j], optimize=True)
    return y + b[None, :, None, None]


def conv2d_backward(d_y: Array, x: Array, w: Array, stride: int = 1,
                    padding: int = 0) -> tuple[Array, Array, Array]:
    """Gradients (d_x, d_w, d_b) of conv2d given upstream d_y."""
    d_y, x, w = _f64(d_y), _f64(x), _f64(w)
    _, _, h, w_dim = x.shape
    _, _, kh, kw = w.shape
    out_h, out_w = d_y.shape[2], d_y.shape[3]
    xp = _pad(x, padding)
    d_xp = np.zeros_like(xp)
    d_w = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride]
            d_w[:, :, i, j] = np.einsum("bfhw,bchw->fc", d_y, patch, optimize=True)
            d_xp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += \
                np.einsum("bfhw,fc->bchw", d_y, w[:, :, i, j], optimize=True)
    d_x = d_xp if padding == 0 else d_xp[:, :, padding:padding + h, padding:padding + w_dim]
    return d_x, d_w, d_y.sum(axis=(0, 2, 3))


def _pool_check(x: Array, window: int, stride: int):
    if x.ndim != 4:
        raise ValueError(f"maxpool2d input must be 4-D [B,C,H,W], got {x.ndim}-D")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    h, w = x.shape[2], x.shape[3]
    if h < window or w < window:
        raise ValueError(f"input {h}x{w} is smaller than window {window}")
    return (h - window) // stride + 1, (w - window) // stride + 1


def _pool_patches(x: Array, window: int, stride: int, out_h: int, out_w: int) -> Array:
    # taps stacked row-major within the window, so argmax ties pick the lowest flat index
    taps = [
        x[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride]
        for i in range(window)
        for j in range(window)
    ]
    return np.stack(taps, axis=-1)


def maxpool2d(x: Array, window: int, stride: int) -> Array:
    """Per-window maximum over x[B,C,H,W]."""
    x = _f64(x)
    out_h, out_w = _pool_check(x, window, stride)
    return _pool_patches(x, window, stride, out_h, out_w).max(axis=-1)


def maxpool2d_backward(d_y: Array, x: Array, window: int, stride: int) -> Array:
    """Routes each window's upstream gradient to that window's argmax position."""
    d_y, x = _f64(d_y), _f64(x)
    out_h, out_w = _pool_check(x, window, stride)
    patches = _pool_patches(x, window, stride, out_h, out_w)
    winner = patches.argmax(axis=-1)  # first occurrence = lowest flat index
    d_x = np.zeros_like(x)
    for k in range(window * window):
        i, j = divmod(k, window)
        d_x[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += \
            d_y * (winner == k)
    return d_x


def fully_connected(x: Array, w: Array, b: Array) -> Array:
    """Affine map x[B,N] @ w[N,M] + b[M]."""
    x, w, b = _f64(x), _f64(w), _f64(b)
    if x.ndim != 2 or w.ndim != 2:
        raise ValueError(f"fully_connected expects 2-D input and weight, got {x.ndim}-D and {w.ndim}-D")
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"inner dimensions disagree: input N={x.shape[1]}, weight N={w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise ValueError(f"bias shape {b.shape} does not match output dim M={w.shape[1]}")
    return x @ w + b


def fully_connected_backward(d_y: Array, x: Array, w: Array) -> tuple[Array, Array, Array]:
    d_y, x, w = _f64(d_y), _f64(x), _f64(w)
    return d_y @ w.T, x.T @ d_y, d_y.sum(axis=0)


def relu(x: Array) -> Array:
    return np.maximum(_f64(x), 0.0)


def relu_backward(d_y: Array, x: Array) -> Array:
    """Gradient passes where x > 0; the subgradient at exactly 0 is 0."""
    return _f64(d_y) * (np.asarray(x) > 0.0)


def softmax(logits: Array) -> Array:
    """Row-wise softmax with max-subtraction for stability."""
    z = _f64(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Array, labels: Array) -> tuple[float, Array]:
    """Mean negative log-likelihood over the batch and its logits gradient.

    Returns (loss, d_logits) with d_logits = (softmax - onehot) / B.
    """
    logits = _f64(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be 2-D [B,M], got {logits.ndim}-D")
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        bad = labels[(labels < 0) | (labels >= classes)][0]
        raise ValueError(f"label {bad} out of range [0, {classes})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = float(-log_probs[np.arange(batch), labels].mean())
    d_logits = np.exp(log_probs)
    d_logits[np.arange(batch), labels] -= 1.0
    return loss, d_logits / batch
