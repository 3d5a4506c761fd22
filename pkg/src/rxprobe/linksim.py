"""Toy frequency-time link simulator with per-frame SNR labels.

Each instance is one frame: a grid of Gray-mapped QPSK or 16-QAM symbols
on ``n_subcarriers x n_symbols`` resource elements, passed through an AWGN
or block-Rayleigh channel at an SNR drawn uniformly in dB.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

BITS_PER_SYMBOL = {"qpsk": 2, "qam16": 4}
CHANNELS = ("awgn", "rayleigh_block")


@dataclass(frozen=True)
class LinkConfig:
    n_subcarriers: int = 48
    n_symbols: int = 14
    modulation: str = "qpsk"
    snr_range_db: tuple[float, float] = (-10.0, 25.0)
    channel: str = "awgn"
    n_instances: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_range_db", tuple(float(s) for s in self.snr_range_db))
        lo, hi = self.snr_range_db
        if not lo < hi:
            raise ValueError(f"snr_range_db must satisfy low < high, got {self.snr_range_db}")
        for name in ("n_subcarriers", "n_symbols", "n_instances"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.modulation not in BITS_PER_SYMBOL:
            raise ValueError(f"unknown modulation {self.modulation!r}")
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")

    @property
    def bits_per_re(self) -> int:
        return BITS_PER_SYMBOL[self.modulation]

    def to_dict(self):
        d = asdict(self)
        d["snr_range_db"] = list(self.snr_range_db)
        return d


@dataclass
class LinkInstance:
    rx_grid: np.ndarray  # (2, F, T) real/imag planes
    tx_bits: np.ndarray  # (bits_per_re, F, T)
    snr_db: float
    signal_power: float
    noise_power: float


@dataclass
class LinkDataset:
    """Stacked instances; index ``i`` of every array belongs to instance ``ids[i]``."""

    rx_grid: np.ndarray  # (N, 2, F, T) float32
    tx_bits: np.ndarray  # (N, bits_per_re, F, T) uint8
    snr_db: np.ndarray  # (N,) float64
    signal_power: np.ndarray
    noise_power: np.ndarray
    config: LinkConfig
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ids is None:
            self.ids = np.arange(len(self.snr_db), dtype=np.int64)

    def __len__(self):
        return len(self.snr_db)

    def __getitem__(self, i) -> LinkInstance:
        return LinkInstance(
            self.rx_grid[i], self.tx_bits[i], float(self.snr_db[i]),
            float(self.signal_power[i]), float(self.noise_power[i]),
        )

    def subset(self, index):
        index = np.asarray(index)
        return LinkDataset(
            self.rx_grid[index], self.tx_bits[index], self.snr_db[index],
            self.signal_power[index], self.noise_power[index], self.config, self.ids[index],
        )


def _gray_pam4(b_hi, b_lo):
    # 3GPP 38.211 16-QAM per-axis mapping: 00->1, 01->3, 10->-1, 11->-3
    return (1 - 2 * b_hi) * (2 - (1 - 2 * b_lo))


def modulate(bits, modulation):
    """Map a flat bit sequence to unit-average-power complex symbols.

    Gray mapping in the 3GPP convention; QPSK ``00`` maps to ``(1+1j)/sqrt(2)``.
    """
    bits = np.asarray(bits)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    m = BITS_PER_SYMBOL.get(modulation)
    if m is None:
        raise ValueError(f"unknown modulation {modulation!r}")
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} not divisible by {m}")
    b = bits.reshape(-1, m).astype(np.float64)
    if modulation == "qpsk":
        return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / np.sqrt(2)
    return (_gray_pam4(b[:, 0], b[:, 2]) + 1j * _gray_pam4(b[:, 1], b[:, 3])) / np.sqrt(10)


def hard_decision(symbols, modulation):
    """Minimum-distance bit decisions for symbols on the unit-power grid."""
    s = np.asarray(symbols).ravel()
    if modulation == "qpsk":
        out = np.empty((s.size, 2), dtype=np.uint8)
        out[:, 0] = s.real < 0
        out[:, 1] = s.imag < 0
        return out.ravel()
    if modulation == "qam16":
        x, y = s.real * np.sqrt(10), s.imag * np.sqrt(10)
        out = np.empty((s.size, 4), dtype=np.uint8)
        out[:, 0] = x < 0
        out[:, 1] = y < 0
        out[:, 2] = np.abs(x) > 2
        out[:, 3] = np.abs(y) > 2
        return out.ravel()
    raise ValueError(f"unknown modulation {modulation!r}")


def _channel(symbol_grid, channel, snr_db, rng):
    if channel == "awgn":
        h = 1.0
    elif channel == "rayleigh_block":
        h = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
    else:
        raise ValueError(f"unknown channel {channel!r}")
    faded = h * np.asarray(symbol_grid)
    signal_power = float(np.mean(np.abs(faded) ** 2))
    noise_power = signal_power / 10.0 ** (snr_db / 10.0)
    noise = np.sqrt(noise_power / 2) * (
        rng.standard_normal(faded.shape) + 1j * rng.standard_normal(faded.shape)
    )
    return faded + noise, signal_power, noise_power


def apply_channel(symbol_grid, channel, snr_db, seed):
    """Received grid for ``symbol_grid`` at the given SNR.

    Noise variance per complex sample is the faded grid's mean power divided
    by ``10**(snr_db/10)``.
    """
    rx, _, _ = _channel(symbol_grid, channel, snr_db, np.random.default_rng(seed))
    return rx


def _instance_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def generate_instance(config: LinkConfig, index: int) -> LinkInstance:
    rng = _instance_rng(config.seed, index)
    m = config.bits_per_re
    f, t = config.n_subcarriers, config.n_symbols
    lo, hi = config.snr_range_db
    snr_db = float(rng.uniform(lo, hi))
    bits = rng.integers(0, 2, size=(f, t, m), dtype=np.uint8)
    symbols = modulate(bits.ravel(), config.modulation).reshape(f, t)
    rx, sp, npow = _channel(symbols, config.channel, snr_db, rng)
    return LinkInstance(
        rx_grid=np.stack([rx.real, rx.imag]).astype(np.float32),
        tx_bits=np.ascontiguousarray(np.moveaxis(bits, -1, 0)),
        snr_db=snr_db,
        signal_power=sp,
        noise_power=npow,
    )


def generate_dataset(config: LinkConfig) -> LinkDataset:
    """Generate ``config.n_instances`` frames; instance ``i`` only depends on (seed, i)."""
    insts = [generate_instance(config, i) for i in range(config.n_instances)]
    return LinkDataset(
        rx_grid=np.stack([x.rx_grid for x in insts]),
        tx_bits=np.stack([x.tx_bits for x in insts]),
        snr_db=np.array([x.snr_db for x in insts]),
        signal_power=np.array([x.signal_power for x in insts]),
        noise_power=np.array([x.noise_power for x in insts]),
        config=config,
    )
