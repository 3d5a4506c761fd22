"""Explainer probes: regress the frame SNR (dB) from a unit's activations.

Architecture: 3x3 conv, four pre-activation residual blocks, ReLU, a
pooling (or flattening) head and a stack of dense layers ending in one
output. Training uses AdamW on the MSE with early stopping on a seeded
10 % validation split.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import Conv2d, Dense, Flatten, GlobalAvgPool, PreActBlock, ReLU, named_parameters
from .numerics import mse_grad
from .optim import AdamWHyper, AdamWState, adamw_step
from .performer import ActivationSet, TrainingDivergedError

log = logging.getLogger(__name__)


class TooFewInstancesError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeConfig:
    conv_in_channels: int = 64
    resnet_filters: tuple[int, ...] = (64, 32, 32, 16)
    fc_sizes: tuple[int, ...] = (1024, 256, 64, 1)
    head: str = "global_avg_pool"
    lr: float = 1e-4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    early_stop_epochs: int = 20
    max_epochs: int = 200
    val_fraction: float = 0.1
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "resnet_filters", tuple(int(v) for v in self.resnet_filters))
        object.__setattr__(self, "fc_sizes", tuple(int(v) for v in self.fc_sizes))
        if not self.fc_sizes or self.fc_sizes[-1] != 1:
            raise ValueError("fc_sizes must end in 1")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must lie in (0, 1]")
        widths = (self.conv_in_channels, *self.resnet_filters, *self.fc_sizes[:-1])
        if min(self.scaled(w) for w in widths) < 1:
            raise ValueError("scale shrinks a layer below one unit")
        if self.head not in ("global_avg_pool", "flatten"):
            raise ValueError(f"unknown head {self.head!r}")

    def scaled(self, width):
        return int(round(width * self.scale))

    @property
    def hyper(self):
        return AdamWHyper(self.lr, self.weight_decay, self.beta1, self.beta2, self.eps)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


class ProbeModel:
    """Probe network plus its training record.

    ``history`` holds one dict per epoch; epoch 0 is the untrained network.
    """

    def __init__(self, config: ProbeConfig, input_shape, label_mean=0.0, seed=None):
        self.config = config
        self.input_shape = tuple(int(s) for s in input_shape)  # (C, H, W)
        c, h, w = self.input_shape
        rng = np.random.default_rng(config.seed if seed is None else seed)
        width = config.scaled(config.conv_in_channels)
        self.conv_in = Conv2d(c, width, 3, (1, 1), rng, need_input_grad=False)
        self.blocks = []
        for f in config.resnet_filters:
            self.blocks.append(PreActBlock(width, config.scaled(f), 3, (1, 1), rng))
            width = config.scaled(f)
        self.head_relu = ReLU()
        if config.head == "global_avg_pool":
            self.head = GlobalAvgPool()
            n_in = width
        else:
            self.head = Flatten()
            n_in = width * h * w
        self.fcs = []
        self.fc_relus = []
        sizes = [config.scaled(s) for s in config.fc_sizes[:-1]] + [1]
        for s in sizes:
            self.fcs.append(Dense(n_in, s, rng))
            self.fc_relus.append(ReLU())
            n_in = s
        self.fcs[-1].params["bias"][:] = label_mean
        self.history: list[dict] = []
        self.best_epoch = 0

    def named_layers(self):
        return (
            [("conv_in", self.conv_in)]
            + [(f"block{i + 1}", b) for i, b in enumerate(self.blocks)]
            + [(f"fc{i + 1}", d) for i, d in enumerate(self.fcs)]
        )

    def state_dict(self):
        return {name: layer.params[key] for name, layer, key in named_parameters(self.named_layers())}

    def grads(self):
        return {name: layer.grads[key] for name, layer, key in named_parameters(self.named_layers())}

    def load_state_dict(self, state):
        for name, layer, key in named_parameters(self.named_layers()):
            if state[name].shape != layer.params[key].shape:
                raise ValueError(f"shape mismatch for {name}")
            layer.params[key] = np.array(state[name], dtype=layer.params[key].dtype)

    def zero_grad(self):
        for _, layer in self.named_layers():
            layer.zero_grad()

    def _forward(self, x, train=False):
        h = self.conv_in.forward(x, train)
        for block in self.blocks:
            h = block.forward(h, train)
        h = self.head.forward(self.head_relu.forward(h, train), train)
        last = len(self.fcs) - 1
        for i, (fc, act) in enumerate(zip(self.fcs, self.fc_relus)):
            h = fc.forward(h, train)
            if i < last:
                h = act.forward(h, train)
        return h[:, 0]

    def _backward(self, grad):
        g = grad[:, None]
        last = len(self.fcs) - 1
        for i in range(last, -1, -1):
            if i < last:
                g = self.fc_relus[i].backward(g)
            g = self.fcs[i].backward(g)
        g = self.head_relu.backward(self.head.backward(g))
        for block in reversed(self.blocks):
            g = block.backward(g)
        return self.conv_in.backward(g)

    def _nhwc(self, tensors):
        t = np.asarray(tensors, dtype=np.float32)
        if t.ndim == 3:
            t = t[None]
        if t.ndim != 4 or t.shape[1] != self.input_shape[0]:
            raise ValueError(f"tensor shape {t.shape[1:]} incompatible with probe input {self.input_shape}")
        if self.config.head == "flatten" and t.shape[1:] != self.input_shape:
            raise ValueError(f"flatten head needs shape {self.input_shape}, got {t.shape[1:]}")
        return np.ascontiguousarray(t.transpose(0, 2, 3, 1))

    def predict(self, tensors, batch_size=256):
        """SNR predictions in dB for a (C, H, W) tensor or an (N, C, H, W) batch."""
        single = np.ndim(tensors) == 3
        x = self._nhwc(tensors)
        out = np.concatenate([
            self._forward(x[s:s + batch_size]) for s in range(0, len(x), batch_size)
        ]).astype(np.float64)
        return float(out[0]) if single else out


def predict(probe: ProbeModel, activation_tensor):
    return probe.predict(activation_tensor)


def _batch_mse(probe, x, y, batch_size=256):
    return float(np.mean((probe.predict(x, batch_size) - y) ** 2))


def train_probe(activations: ActivationSet, config: ProbeConfig, seed=None) -> ProbeModel:
    """Train a probe on every instance of ``activations``.

    A seeded ``val_fraction`` of the instances is held out for early
    stopping. Parameters from the epoch with the lowest validation MSE are
    returned; the input set is never modified.
    """
    seed = config.seed if seed is None else seed
    x_all = activations.tensors
    y_all = np.asarray(activations.labels, dtype=np.float64)
    n = len(y_all)
    if n < 2 * config.batch_size:
        raise TooFewInstancesError(f"need at least {2 * config.batch_size} instances, got {n}")
    if not np.all(np.isfinite(y_all)):
        raise ValueError("labels must be finite")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    perm = rng.permutation(n)
    n_val = max(1, int(round(config.val_fraction * n)))
    val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    x_tr, y_tr = x_all[tr_idx], y_all[tr_idx]
    x_val, y_val = x_all[val_idx], y_all[val_idx]

    probe = ProbeModel(config, x_all.shape[1:], label_mean=float(y_tr.mean()), seed=seed)
    params = probe.state_dict()
    state = AdamWState()
    hyper = config.hyper

    probe.history = [{
        "epoch": 0,
        "train_mse": _batch_mse(probe, x_tr, y_tr),
        "val_mse": _batch_mse(probe, x_val, y_val),
    }]
    best_val = probe.history[0]["val_mse"]
    best_state = copy.deepcopy(params)
    probe.best_epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(y_tr))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = np.sort(order[start:start + config.batch_size])
            x = probe._nhwc(x_tr[idx])
            y = y_tr[idx]
            probe.zero_grad()
            pred = probe._forward(x, train=True).astype(np.float64)
            loss = float(np.mean((pred - y) ** 2))
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            probe._backward(mse_grad(pred, y).astype(np.float32))
            adamw_step(params, probe.grads(), state, hyper)
            total += loss * len(idx)
        val = _batch_mse(probe, x_val, y_val)
        if not math.isfinite(val):
            raise TrainingDivergedError(epoch, "validation MSE")
        probe.history.append({"epoch": epoch, "train_mse": total / len(y_tr), "val_mse": val})
        if val < best_val:
            best_val = val
            best_state = copy.deepcopy(params)
            probe.best_epoch = epoch
        elif epoch - probe.best_epoch >= config.early_stop_epochs:
            break
    log.debug("probe stopped after %d epochs, best %d", len(probe.history) - 1, probe.best_epoch)
    probe.load_state_dict(best_state)
    return probe
