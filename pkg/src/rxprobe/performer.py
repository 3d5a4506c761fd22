"""Convolutional residual receiver whose activations get probed.

Layout: 3x3 input conv + ReLU (tap ``IN-POST``), ``n_blocks`` pre-activation
residual blocks (taps ``B{i}-PRE`` after the first ReLU, ``B{i}-POST`` after
the second), a final ReLU (tap ``OUT-POST``) feeding a 3x3 output conv with
one sigmoid channel per bit of the resource element.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import Conv2d, PreActBlock, ReLU, named_parameters
from .linksim import BITS_PER_SYMBOL, LinkDataset
from .numerics import bce_with_logits, sigmoid
from .optim import AdamWHyper, AdamWState, adamw_step

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, what="loss"):
        super().__init__(f"{what} became NaN at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class PerformerConfig:
    n_blocks: int = 5
    filters: tuple[int, ...] = (64, 64, 32, 32, 32)
    dilations_freq: tuple[int, ...] = (1, 4, 8, 4, 1)
    dilations_time: tuple[int, ...] = (1, 2, 3, 2, 1)
    kernel: int = 3
    modulation: str = "qpsk"
    n_subcarriers: int = 48
    n_symbols: int = 14
    epochs: int = 3
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.0

    def __post_init__(self):
        for name in ("filters", "dilations_freq", "dilations_time"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
            if len(getattr(self, name)) != self.n_blocks:
                raise ValueError(f"{name} must have n_blocks={self.n_blocks} entries")
        if self.modulation not in BITS_PER_SYMBOL:
            raise ValueError(f"unknown modulation {self.modulation!r}")

    @property
    def bits_per_re(self):
        return BITS_PER_SYMBOL[self.modulation]

    def tap_names(self):
        names = ["IN-POST"]
        for i in range(1, self.n_blocks + 1):
            names += [f"B{i}-PRE", f"B{i}-POST"]
        return names + ["OUT-POST"]

    def tap_channels(self, tap):
        if tap == "IN-POST":
            return self.filters[0]
        if tap == "OUT-POST":
            return self.filters[-1]
        if tap in self.tap_names():
            i = int(tap[1:].split("-")[0])
            if tap.endswith("-PRE"):
                # input of block i: output of block i - 1, or of the input conv
                return self.filters[max(i - 2, 0)]
            return self.filters[i - 1]
        raise KeyError(f"unknown tap {tap!r}")

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


@dataclass
class ActivationSet:
    """Activations of one unit for every instance of a dataset.

    ``tensors`` has shape (N, C, H, W); ``channel_filter`` of ``None`` means
    all channels of the tap.
    """

    tap: str
    channel_filter: list[int] | None
    tensors: np.ndarray
    labels: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ids is None:
            self.ids = np.arange(len(self.labels), dtype=np.int64)
        if len(self.tensors) != len(self.labels) or len(self.ids) != len(self.labels):
            raise ValueError("tensor, label and id counts differ")

    def __len__(self):
        return len(self.labels)

    def subset(self, index):
        index = np.asarray(index)
        return ActivationSet(
            self.tap, self.channel_filter, self.tensors[index], self.labels[index], self.ids[index]
        )


class Performer:
    def __init__(self, config: PerformerConfig, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        k = config.kernel
        f = config.filters
        self.in_conv = Conv2d(2, f[0], k, (1, 1), rng, need_input_grad=False)
        self.in_relu = ReLU()
        self.blocks = []
        c_in = f[0]
        for c_out, df, dt in zip(f, config.dilations_freq, config.dilations_time):
            self.blocks.append(PreActBlock(c_in, c_out, k, (df, dt), rng))
            c_in = c_out
        self.out_relu = ReLU()
        self.out_conv = Conv2d(c_in, config.bits_per_re, k, (1, 1), rng)
        self.history: list[float] = []

    def named_layers(self):
        return (
            [("in_conv", self.in_conv)]
            + [(f"block{i + 1}", b) for i, b in enumerate(self.blocks)]
            + [("out_conv", self.out_conv)]
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

    def _forward(self, x, train=False, capture=False):
        """NHWC forward; returns logits and (optionally) NHWC taps."""
        taps = {}
        h = self.in_relu.forward(self.in_conv.forward(x, train), train)
        if capture:
            taps["IN-POST"] = h
        for i, block in enumerate(self.blocks, start=1):
            h = block.forward(h, train)
            if capture:
                taps[f"B{i}-PRE"] = block.pre
                taps[f"B{i}-POST"] = block.post
        h = self.out_relu.forward(h, train)
        if capture:
            taps["OUT-POST"] = h
        return self.out_conv.forward(h, train), taps

    def _backward(self, grad_logits):
        g = self.out_conv.backward(grad_logits)
        g = self.out_relu.backward(g)
        for block in reversed(self.blocks):
            g = block.backward(g)
        g = self.in_relu.backward(g)
        return self.in_conv.backward(g)

    def _check_input(self, rx):
        rx = np.asarray(rx, dtype=np.float32)
        single = rx.ndim == 3
        if single:
            rx = rx[None]
        expected = (2, self.config.n_subcarriers, self.config.n_symbols)
        if rx.ndim != 4 or rx.shape[1:] != expected:
            raise ValueError(f"rx grid shape {rx.shape[1:]} does not match {expected}")
        return np.ascontiguousarray(rx.transpose(0, 2, 3, 1)), single

    def forward(self, rx_grid, taps=True):
        """Bit probabilities (N, bits, F, T) and a dict of tap activations (N, C, F, T)."""
        x, single = self._check_input(rx_grid)
        logits, tapped = self._forward(x, capture=taps)
        probs = sigmoid(logits).transpose(0, 3, 1, 2)
        tapped = {k: v.transpose(0, 3, 1, 2) for k, v in tapped.items()}
        if single:
            probs = probs[0]
            tapped = {k: v[0] for k, v in tapped.items()}
        return probs, tapped

    def bce(self, dataset: LinkDataset, batch_size=64):
        """Mean BCE over ``dataset``; NaN if the network output is not finite."""
        total = 0.0
        for start in range(0, len(dataset), batch_size):
            sl = slice(start, start + batch_size)
            x, _ = self._check_input(dataset.rx_grid[sl])
            logits, _ = self._forward(x)
            if not np.all(np.isfinite(logits)):
                return math.nan
            target = dataset.tx_bits[sl].transpose(0, 2, 3, 1).astype(np.float32)
            loss, _ = bce_with_logits(logits, target)
            total += loss * target.size
        return total / dataset.tx_bits.size


def performer_forward(model: Performer, rx_grid):
    return model.forward(rx_grid)


def train_performer(dataset: LinkDataset, config: PerformerConfig, seed=0) -> Performer:
    """Fit the receiver to the transmitted bits with BCE and AdamW.

    ``model.history[0]`` is the BCE before the first update; each further
    entry is the mean minibatch BCE of one epoch.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    model = Performer(config, seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    hyper = AdamWHyper(lr=config.learning_rate, weight_decay=config.weight_decay)
    state = AdamWState()
    params = model.state_dict()
    model.history = [model.bce(dataset)]
    if not math.isfinite(model.history[0]):
        raise TrainingDivergedError(0)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = np.sort(order[start:start + config.batch_size])
            x, _ = model._check_input(dataset.rx_grid[idx])
            target = dataset.tx_bits[idx].transpose(0, 2, 3, 1).astype(np.float32)
            model.zero_grad()
            logits, _ = model._forward(x, train=True)
            if not np.all(np.isfinite(logits)):
                raise TrainingDivergedError(epoch)
            loss, grad = bce_with_logits(logits, target)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            model._backward(grad.astype(np.float32))
            adamw_step(params, model.grads(), state, hyper)
            losses.append(loss * len(idx))
        model.history.append(float(sum(losses) / len(dataset)))
        log.info("performer epoch %d bce %.4f", epoch, model.history[-1])
    return model


def tap_activations(model: Performer, dataset: LinkDataset, tap, channel_filter=None, batch_size=64):
    """Capture one tap for every instance, optionally restricted to some channels."""
    return capture_units(model, dataset, [(tap, channel_filter)], batch_size)[0]


def capture_units(model: Performer, dataset: LinkDataset, units, batch_size=64):
    """One :class:`ActivationSet` per ``(tap, channel_filter)`` pair, from a single pass."""
    cfg = model.config
    units = [(tap, None if cf is None else [int(c) for c in cf]) for tap, cf in units]
    for tap, cf in units:
        if tap not in cfg.tap_names():
            raise KeyError(f"unknown tap {tap!r}; available: {cfg.tap_names()}")
        n_ch = cfg.tap_channels(tap)
        if cf is not None:
            bad = [c for c in cf if not 0 <= c < n_ch]
            if bad or not cf:
                raise IndexError(f"channel index {bad} out of range for {tap} with {n_ch} channels")
    chunks = [[] for _ in units]
    for start in range(0, len(dataset), batch_size):
        x, _ = model._check_input(dataset.rx_grid[start:start + batch_size])
        _, taps = model._forward(x, capture=True)
        for out, (tap, cf) in zip(chunks, units):
            a = taps[tap] if cf is None else taps[tap][..., cf]
            out.append(np.ascontiguousarray(a.transpose(0, 3, 1, 2), dtype=np.float32))
    return [
        ActivationSet(
            tap=tap,
            channel_filter=cf,
            tensors=np.concatenate(out),
            labels=np.asarray(dataset.snr_db, dtype=np.float64).copy(),
            ids=np.asarray(dataset.ids).copy(),
        )
        for out, (tap, cf) in zip(chunks, units)
    ]
