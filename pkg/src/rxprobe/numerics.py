"""Dense kernels shared by the receiver, the probes and the estimators.

Arrays are plain ``numpy.ndarray`` objects. Network code keeps feature maps
channels-last (``N, H, W, C``) so that a convolution reduces to one matrix
product; :func:`conv2d` exposes the channels-first view used elsewhere.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "conv2d",
    "conv2d_nhwc",
    "conv2d_nhwc_backward",
    "same_padding",
    "effective_span",
    "relu",
    "sigmoid",
    "loss_kernels",
    "bce",
    "bce_grad",
    "bce_with_logits",
    "mse",
    "mse_grad",
    "digamma",
    "logsumexp",
]


def effective_span(kernel_size: int, dilation: int) -> int:
    return (kernel_size - 1) * dilation + 1


def same_padding(kernel_size: int, dilation: int) -> tuple[int, int]:
    """Zero padding (before, after) that keeps a stride-1 axis length fixed."""
    total = (kernel_size - 1) * dilation
    return total // 2, total - total // 2


def _pad(x, kh, kw, dh, dw):
    return np.pad(x, ((0, 0), same_padding(kh, dh), same_padding(kw, dw), (0, 0)))


def _tap_windows(h, w, kh, kw, dh, dw):
    """Per kernel tap: (i, j, output window, source window) of valid rows/cols."""
    (ph, _), (pw, _) = same_padding(kh, dh), same_padding(kw, dw)
    for i in range(kh):
        oi = i * dh - ph
        y0, y1 = max(0, -oi), min(h, h - oi)
        for j in range(kw):
            oj = j * dw - pw
            x0, x1 = max(0, -oj), min(w, w - oj)
            if y1 > y0 and x1 > x0:
                yield i, j, (slice(y0, y1), slice(x0, x1)), (slice(y0 + oi, y1 + oi), slice(x0 + oj, x1 + oj))


def conv2d_nhwc(x, weight, bias=None, dilation=(1, 1), return_cache=False):
    """Stride-1 "same" convolution on a channels-last batch.

    ``weight`` has shape ``(kh, kw, C_in, C_out)``. When the layer widens or
    keeps the channel count, the output is accumulated as one matrix product
    per kernel tap over shifted views of the zero-padded input. When it
    narrows, the input is multiplied once by all taps and the narrower
    partial outputs are shifted instead. With ``return_cache`` the tensor
    needed by :func:`conv2d_nhwc_backward` is returned too.
    """
    n, h, w, c = x.shape
    kh, kw, c_in, c_out = weight.shape
    if c != c_in:
        raise ValueError(f"input has {c} channels but kernel expects {c_in}")
    dh, dw = dilation
    if dh < 1 or dw < 1:
        raise ValueError("dilation must be >= 1")
    dtype = np.result_type(x, weight)
    if c_out < c_in:
        wm = weight.transpose(2, 0, 1, 3).reshape(c_in, kh * kw * c_out)
        z = (x.reshape(-1, c_in) @ wm).reshape(n, h, w, kh, kw, c_out)
        out = np.zeros((n, h, w, c_out), dtype=dtype)
        for i, j, dst, src in _tap_windows(h, w, kh, kw, dh, dw):
            out[:, dst[0], dst[1]] += z[:, src[0], src[1], i, j]
        cache = ("narrow", x)
    else:
        xp = _pad(x, kh, kw, dh, dw)
        out = np.zeros((n * h * w, c_out), dtype=dtype)
        for i in range(kh):
            for j in range(kw):
                out += xp[:, i * dh:i * dh + h, j * dw:j * dw + w, :].reshape(-1, c_in) @ weight[i, j]
        out = out.reshape(n, h, w, c_out)
        cache = ("shift", xp)
    if bias is not None:
        out += bias
    if return_cache:
        return out, cache
    return out


def conv2d_nhwc_backward(grad_out, cache, weight, dilation=(1, 1), need_input_grad=True):
    """Gradients of :func:`conv2d_nhwc` w.r.t. input, weight and bias."""
    n, h, w, c_out = grad_out.shape
    kh, kw, c_in, _ = weight.shape
    dh, dw = dilation
    g = grad_out.reshape(n * h * w, c_out)
    grad_b = g.sum(axis=0)
    mode, saved = cache
    if mode == "narrow":
        dz = np.zeros((n, h, w, kh, kw, c_out), dtype=grad_out.dtype)
        for i, j, dst, src in _tap_windows(h, w, kh, kw, dh, dw):
            dz[:, src[0], src[1], i, j] = grad_out[:, dst[0], dst[1]]
        dz = dz.reshape(n * h * w, kh * kw * c_out)
        grad_w = (saved.reshape(-1, c_in).T @ dz).reshape(c_in, kh, kw, c_out).transpose(1, 2, 0, 3)
        grad_x = None
        if need_input_grad:
            wm = weight.transpose(2, 0, 1, 3).reshape(c_in, kh * kw * c_out)
            grad_x = (dz @ wm.T).reshape(n, h, w, c_in)
        return grad_x, np.ascontiguousarray(grad_w), grad_b
    xp = saved
    grad_w = np.empty_like(weight)
    dxp = np.zeros_like(xp) if need_input_grad else None
    for i in range(kh):
        for j in range(kw):
            win = (slice(None), slice(i * dh, i * dh + h), slice(j * dw, j * dw + w))
            grad_w[i, j] = xp[win].reshape(-1, c_in).T @ g
            if need_input_grad:
                dxp[win] += (g @ weight[i, j].T).reshape(n, h, w, c_in)
    if not need_input_grad:
        return None, grad_w, grad_b
    ph, pw = same_padding(kh, dh), same_padding(kw, dw)
    return dxp[:, ph[0]:ph[0] + h, pw[0]:pw[0] + w, :], grad_w, grad_b


def conv2d(input, kernel, dilation_h=1, dilation_w=1, bias=None):
    """Channels-first convolution with zero "same" padding.

    Parameters
    ----------
    input : ndarray, shape (C_in, H, W) or (N, C_in, H, W)
    kernel : ndarray, shape (C_out, C_in, kh, kw)
    dilation_h, dilation_w : int
        Dilation along the first (frequency) and second (time) spatial axis.

    Returns
    -------
    ndarray of shape (C_out, H, W) or (N, C_out, H, W)
    """
    x = np.asarray(input)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError("expected (C,H,W) or (N,C,H,W) input and a 4-d kernel")
    if x.shape[1] != kernel.shape[1]:
        raise ValueError(
            f"input has {x.shape[1]} channels but kernel expects {kernel.shape[1]}"
        )
    w = np.ascontiguousarray(np.transpose(kernel, (2, 3, 1, 0)))
    out = conv2d_nhwc(
        np.ascontiguousarray(np.transpose(x, (0, 2, 3, 1))),
        w,
        bias,
        (dilation_h, dilation_w),
    )
    out = np.transpose(out, (0, 3, 1, 2))
    return out[0] if single else out


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    # split on sign so exp never overflows
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_finite(*arrays):
    for a in arrays:
        if np.isnan(a).any():
            raise ValueError("NaN in loss input")


def bce(pred, target):
    """Mean binary cross-entropy of probabilities ``pred`` against 0/1 ``target``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_finite(pred, target)
    if np.any((pred <= 0) | (pred >= 1)):
        raise ValueError("bce predictions must lie strictly inside (0, 1)")
    return float(-np.mean(target * np.log(pred) + (1 - target) * np.log1p(-pred)))


def bce_grad(pred, target):
    return (pred - target) / (pred * (1 - pred)) / pred.size


def bce_with_logits(logits, target):
    """Mean BCE on logits and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    _check_finite(z, target)
    loss = np.maximum(z, 0) - z * target + np.log1p(np.exp(-np.abs(z)))
    grad = (sigmoid(z) - target) / z.size
    return float(loss.mean()), grad


def mse(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_finite(pred, target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target):
    return 2.0 * (pred - target) / pred.size


def loss_kernels(pred, target, kind):
    """Mean-reduced loss; ``kind`` is ``"bce"`` or ``"mse"``."""
    if kind == "bce":
        return bce(pred, target)
    if kind == "mse":
        return mse(pred, target)
    raise ValueError(f"unknown loss kind {kind!r}")


# Bernoulli-number coefficients B_2k / (2k) of the asymptotic series
_DIGAMMA_SERIES = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def digamma(x):
    """Digamma function for positive real arguments (scalar or array).

    Arguments below 6 are shifted upward with psi(x) = psi(x + 1) - 1/x and
    the asymptotic expansion is evaluated at the shifted point.
    """
    scalar = np.ndim(x) == 0
    x = np.array(x, dtype=np.float64, ndmin=1)
    if not np.all(x > 0):
        raise ValueError("digamma is only defined here for x > 0")
    acc = np.zeros_like(x)
    x = x.copy()
    small = x < 6.0
    while small.any():
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
        small = x < 6.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for coef in reversed(_DIGAMMA_SERIES):
        series = (series + coef) * inv2
    out = acc + np.log(x) - 0.5 / x - series
    return float(out[0]) if scalar else out


def logsumexp(values):
    """log(sum(exp(values))) without overflow."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("logsumexp of an empty sequence")
    if v.size == 1:
        return float(v[0])
    m = v.max()
    if not math.isfinite(m):
        return float(m)
    return float(m + math.log(math.fsum(np.exp(v - m))))
