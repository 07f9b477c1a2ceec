"""Differentiable image operations on N x C x H x W float64 arrays.

Convolutions are cross-correlations (no kernel flip).  Every op also accepts
a single C x H x W image and returns a result without the batch axis.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Var, as_var, make


def out_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def _batched(x: Var) -> tuple[Var, bool]:
    if x.ndim == 3:
        from .autodiff import reshape

        return reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ValueError(f"expected C x H x W or N x C x H x W input, got shape {x.shape}")
    return x, False


def _unbatch(y: Var, squeeze: bool) -> Var:
    if squeeze:
        from .autodiff import reshape

        return reshape(y, y.shape[1:])
    return y


def _pad(v: np.ndarray, p: int, value: float = 0.0) -> np.ndarray:
    if p == 0:
        return v
    return np.pad(v, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=value)


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """View of shape N x C x H' x W' x kh x kw."""
    w = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return w[:, :, ::stride, ::stride]


def _scatter_windows(dcols: np.ndarray, xp_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    """Adjoint of the im2col gather: sum (N, C, kh, kw, H', W') gradients back onto the padded input."""
    ho, wo = dcols.shape[4], dcols.shape[5]
    dxp = np.zeros(xp_shape)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += dcols[:, :, i, j]
    return dxp


def _correlate(xp: np.ndarray, kernel: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Cross-correlate an already padded batch.

    Also returns the column matrix, laid out N x (C*kh*kw) x (H'*W') so the
    spatial axis stays innermost and the output needs no transpose.
    """
    n, c = xp.shape[:2]
    o, _, kh, kw = kernel.shape
    if kh == 1 and kw == 1:
        xs = xp[:, :, ::stride, ::stride] if stride > 1 else xp
        ho, wo = xs.shape[2], xs.shape[3]
        cols = xs.reshape(n, c, ho * wo)
    else:
        win = _windows(xp, kh, kw, stride)
        ho, wo = win.shape[2], win.shape[3]
        cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    out = np.matmul(kernel.reshape(o, -1), cols).reshape(n, o, ho, wo)
    return out, cols


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Var:
    x, kernel = as_var(x), as_var(kernel)
    x, squeeze = _batched(x)
    n, c, h, w = x.shape
    o, kc, kh, kw = kernel.shape
    if kc != c:
        raise ValueError(f"kernel expects {kc} input channels, input has {c}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ValueError("kernel larger than padded input")
    xp = _pad(x.value, padding)
    out, cols = _correlate(xp, kernel.value, stride)
    ho, wo = out.shape[2], out.shape[3]

    def bw(g):
        gm = g.reshape(n, o, ho * wo)
        dk = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape)
        if stride == 1 and kh == kw and padding <= kh - 1 and h == ho + kh - 1 - 2 * padding:
            # input adjoint = full correlation of g with the flipped, transposed kernel
            q = kh - 1 - padding
            flipped = kernel.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            dx, _ = _correlate(_pad(g, q), np.ascontiguousarray(flipped), 1)
            return dx, dk
        dcols = np.matmul(kernel.value.reshape(o, -1).T, gm).reshape(n, c, kh, kw, ho, wo)
        dxp = _scatter_windows(dcols, xp.shape, kh, kw, stride)
        dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
        return dx, dk

    return _unbatch(make(out, (x, kernel), bw), squeeze)


def depthwise_conv2d(x, kernels, stride: int = 1, padding: int = 0) -> Var:
    """Per-channel convolution with one C x kh x kw kernel stack."""
    x, kernels = as_var(x), as_var(kernels)
    x, squeeze = _batched(x)
    n, c, h, w = x.shape
    kc, kh, kw = kernels.shape
    if kc != c:
        raise ValueError(f"{kc} depthwise kernels for {c} input channels")
    xp = _pad(x.value, padding)
    ho, wo = out_size(h, kh, stride, padding), out_size(w, kw, stride, padding)
    kv = kernels.value
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    out = np.zeros((n, c, ho, wo))
    for i in range(kh):
        for j in range(kw):
            out += xp[:, :, i:i + hs:stride, j:j + ws:stride] * kv[None, :, i, j, None, None]

    def bw(g):
        dk = np.empty_like(kv)
        dxp = np.zeros(xp.shape)
        for i in range(kh):
            for j in range(kw):
                dk[:, i, j] = np.einsum("nchw,nchw->c", xp[:, :, i:i + hs:stride, j:j + ws:stride], g)
                dxp[:, :, i:i + hs:stride, j:j + ws:stride] += g * kv[None, :, i, j, None, None]
        dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
        return dx, dk

    return _unbatch(make(out, (x, kernels), bw), squeeze)


def depthwise_separable_conv(x, depth_kernels, point_kernel, stride: int = 1, padding: int = 0) -> Var:
    y = depthwise_conv2d(x, depth_kernels, stride, padding)
    return conv2d(y, point_kernel, 1, 0)


def pool(x, kind: str = "max", k: int = 3, stride: int = 1, padding: int = 0) -> Var:
    """Max or average pooling.

    Max pooling pads with -inf; average pooling divides by the number of
    real (unpadded) cells in each window.
    """
    x = as_var(x)
    x, squeeze = _batched(x)
    n, c, h, w = x.shape
    if k > h + 2 * padding or k > w + 2 * padding:
        raise ValueError("pooling window larger than padded input")
    ho, wo = out_size(h, k, stride, padding), out_size(w, k, stride, padding)
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    offsets = [(i, j) for i in range(k) for j in range(k)]

    def crop(dxp):
        return dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp

    if kind == "max":
        xp = _pad(x.value, padding, -np.inf)
        out = np.full((n, c, ho, wo), -np.inf)
        for i, j in offsets:
            np.maximum(out, xp[:, :, i:i + hs:stride, j:j + ws:stride], out=out)

        def bw(g):
            # first maximal cell in each window takes the gradient
            dxp = np.zeros(xp.shape)
            taken = np.zeros(out.shape, dtype=bool)
            for i, j in offsets:
                hit = (xp[:, :, i:i + hs:stride, j:j + ws:stride] == out) & ~taken
                taken |= hit
                dxp[:, :, i:i + hs:stride, j:j + ws:stride] += g * hit
            return (crop(dxp),)

    elif kind == "avg":
        xp = _pad(x.value, padding)
        ones = _pad(np.ones((1, 1, h, w)), padding)
        total = np.zeros((n, c, ho, wo))
        counts = np.zeros((1, 1, ho, wo))
        for i, j in offsets:
            total += xp[:, :, i:i + hs:stride, j:j + ws:stride]
            counts += ones[:, :, i:i + hs:stride, j:j + ws:stride]
        out = total / counts

        def bw(g):
            gc = g / counts
            dxp = np.zeros(xp.shape)
            for i, j in offsets:
                dxp[:, :, i:i + hs:stride, j:j + ws:stride] += gc
            return (crop(dxp),)

    else:
        raise ValueError(f"unknown pool kind {kind!r}")
    return _unbatch(make(out, (x,), bw), squeeze)


class BatchNormStats:
    """Running mean/variance for eval-mode batchnorm."""

    def __init__(self, channels: int, momentum: float = 0.1):
        self.mean = np.zeros(channels)
        self.var = np.ones(channels)
        self.momentum = momentum


def batchnorm(x, gamma, beta, eps: float = 1e-5, train: bool = True,
              stats: BatchNormStats | None = None) -> Var:
    """Per-channel normalization over (N, H, W).

    Train mode uses batch statistics and, when ``stats`` is given, folds them
    into the running averages (unbiased variance).  Eval mode requires
    ``stats``.
    """
    if eps <= 0:
        raise ValueError("batchnorm eps must be positive")
    x, gamma, beta = as_var(x), as_var(gamma), as_var(beta)
    n, c, h, w = x.shape
    shp = (1, c, 1, 1)
    if train:
        m = n * h * w
        mu = x.value.mean(axis=(0, 2, 3))
        xc = x.value - mu.reshape(shp)
        var = (xc * xc).mean(axis=(0, 2, 3))
        if stats is not None:
            mom = stats.momentum
            stats.mean = (1 - mom) * stats.mean + mom * mu
            stats.var = (1 - mom) * stats.var + mom * var * (m / max(m - 1, 1))
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv.reshape(shp)
        out = gamma.value.reshape(shp) * xhat + beta.value.reshape(shp)

        def bw(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dxhat = g * gamma.value.reshape(shp)
            dx = (inv.reshape(shp) / m) * (
                m * dxhat
                - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            )
            return dx, dgamma, dbeta

        return make(out, (x, gamma, beta), bw)

    if stats is None:
        raise ValueError("eval-mode batchnorm needs running statistics")
    inv = 1.0 / np.sqrt(stats.var + eps)
    xhat = (x.value - stats.mean.reshape(shp)) * inv.reshape(shp)
    out = gamma.value.reshape(shp) * xhat + beta.value.reshape(shp)
    return make(out, (x, gamma, beta),
                lambda g: (g * (gamma.value * inv).reshape(shp),
                           (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))))


def global_avg_pool(x) -> Var:
    x = as_var(x)
    n, c, h, w = x.shape
    return make(x.value.mean(axis=(2, 3)), (x,),
                lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),))


def dense(x, weight, bias) -> Var:
    """Rows of ``x`` (N x D) times ``weight`` (K x D) plus ``bias``."""
    x, weight, bias = as_var(x), as_var(weight), as_var(bias)
    out = x.value @ weight.value.T + bias.value
    return make(out, (x, weight, bias),
                lambda g: (g @ weight.value, g.T @ x.value, g.sum(axis=0)))


def cross_entropy(logits, labels: np.ndarray) -> Var:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    logits = as_var(logits)
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def bw(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (g * d / n,)

    return make(np.asarray(loss), (logits,), bw)
