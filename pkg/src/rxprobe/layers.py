"""Minimal trainable layers with explicit backward passes.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``grads`` during ``backward``. Feature
maps are channels-last. A layer is not re-entrant: one forward/backward pair
at a time per instance.
"""

from __future__ import annotations

import numpy as np

from .numerics import conv2d_nhwc, conv2d_nhwc_backward, sigmoid


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


def he_normal(rng, shape, fan_in, dtype=np.float32):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Layer):
    def __init__(self, c_in, c_out, kernel=3, dilation=(1, 1), rng=None, dtype=np.float32,
                 need_input_grad=True):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.need_input_grad = need_input_grad
        self.dilation = tuple(int(d) for d in dilation)
        fan_in = kernel * kernel * c_in
        self.params["weight"] = he_normal(rng, (kernel, kernel, c_in, c_out), fan_in, dtype)
        self.params["bias"] = np.zeros(c_out, dtype=dtype)
        self.zero_grad()

    def forward(self, x, train=False):
        if not train:
            return conv2d_nhwc(x, self.params["weight"], self.params["bias"], self.dilation)
        out, self._cache = conv2d_nhwc(
            x, self.params["weight"], self.params["bias"], self.dilation, return_cache=True
        )
        return out

    def backward(self, grad):
        gx, gw, gb = conv2d_nhwc_backward(
            grad, self._cache, self.params["weight"], self.dilation, self.need_input_grad
        )
        self.grads["weight"] += gw
        self.grads["bias"] += gb
        self._cache = None
        return gx


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = he_normal(rng, (n_in, n_out), n_in, dtype)
        self.params["bias"] = np.zeros(n_out, dtype=dtype)
        self.zero_grad()

    def forward(self, x, train=False):
        self._x = x if train else None
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, grad):
        self.grads["weight"] += self._x.T @ grad
        self.grads["bias"] += grad.sum(axis=0)
        self._x = None
        return grad @ self.params["weight"].T


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = (x > 0) if train else None
        return np.maximum(x, 0)

    def backward(self, grad):
        return grad * self._mask


class Sigmoid(Layer):
    def forward(self, x, train=False):
        y = sigmoid(x)
        self._y = y if train else None
        return y

    def backward(self, grad):
        return grad * self._y * (1 - self._y)


class GlobalAvgPool(Layer):
    """(N, H, W, C) -> (N, C)."""

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad):
        n, h, w, c = self._shape
        return np.broadcast_to(grad[:, None, None, :] / (h * w), self._shape).copy()


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class PreActBlock(Layer):
    """ReLU -> conv -> ReLU -> conv with an additive skip.

    When the channel count changes the skip path is a 1x1 convolution.
    After ``forward`` the activations following the first and second ReLU
    are available as ``pre`` and ``post``.
    """

    def __init__(self, c_in, c_out, kernel=3, dilation=(1, 1), rng=None, dtype=np.float32):
        super().__init__()
        self.relu1 = ReLU()
        self.conv1 = Conv2d(c_in, c_out, kernel, dilation, rng, dtype)
        self.relu2 = ReLU()
        self.conv2 = Conv2d(c_out, c_out, kernel, dilation, rng, dtype)
        self.proj = Conv2d(c_in, c_out, 1, (1, 1), rng, dtype) if c_in != c_out else None

    def sublayers(self):
        subs = [("conv1", self.conv1), ("conv2", self.conv2)]
        if self.proj is not None:
            subs.append(("proj", self.proj))
        return subs

    def zero_grad(self):
        for _, layer in self.sublayers():
            layer.zero_grad()

    def forward(self, x, train=False):
        self.pre = self.relu1.forward(x, train)
        h = self.conv1.forward(self.pre, train)
        self.post = self.relu2.forward(h, train)
        h = self.conv2.forward(self.post, train)
        skip = x if self.proj is None else self.proj.forward(x, train)
        return h + skip

    def backward(self, grad):
        g = self.conv2.backward(grad)
        g = self.relu2.backward(g)
        g = self.conv1.backward(g)
        g = self.relu1.backward(g)
        if self.proj is None:
            return g + grad
        return g + self.proj.backward(grad)


def named_parameters(named_layers):
    """Flatten ``[(name, layer), ...]`` into ``[(dotted_name, layer, key), ...]``."""
    out = []
    for name, layer in named_layers:
        if isinstance(layer, PreActBlock):
            for sub_name, sub in layer.sublayers():
                for key in sub.params:
                    out.append((f"{name}.{sub_name}.{key}", sub, key))
        else:
            for key in layer.params:
                out.append((f"{name}.{key}", layer, key))
    return out
