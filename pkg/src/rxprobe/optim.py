"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamWHyper:
    lr: float = 1e-4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, grads, state, hyper):
    """Update ``params`` in place and return them.

    ``params`` and ``grads`` are dicts keyed identically. The decay term
    ``lr * weight_decay * w`` is subtracted from the current weights
    separately from the moment-based step, as in Loshchilov & Hutter.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - hyper.beta1 ** t
    c2 = 1.0 - hyper.beta2 ** t
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {w.shape} for {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w, dtype=np.float64)
            state.v[name] = np.zeros_like(w, dtype=np.float64)
        v = state.v[name]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * np.square(g, dtype=np.float64)
        step = hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
        decay = hyper.lr * hyper.weight_decay * w
        w -= (decay + step).astype(w.dtype)
    return params
