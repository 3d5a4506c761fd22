import itertools
import math

import numpy as np
import pytest

from rxprobe.linksim import (
    LinkConfig,
    apply_channel,
    generate_dataset,
    generate_instance,
    hard_decision,
    modulate,
)


def ber(modulation, snr_db, n_bits=40_000, seed=0, channel="awgn"):
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, n_bits, dtype=np.uint8)
    sym = modulate(bits, modulation)
    rx = apply_channel(sym, channel, snr_db, seed + 1)
    return float(np.mean(hard_decision(rx, modulation) != bits))


class TestModulation:
    def test_qpsk_00(self):
        s = modulate(np.array([0, 0]), "qpsk")
        assert s[0] == pytest.approx((1 + 1j) / math.sqrt(2), abs=1e-15)

    @pytest.mark.parametrize("mod,m", [("qpsk", 2), ("qam16", 4)])
    def test_unit_power_and_gray(self, mod, m):
        words = np.array(list(itertools.product([0, 1], repeat=m)), dtype=np.uint8)
        pts = modulate(words.ravel(), mod)
        assert len(set(np.round(pts, 12))) == 2 ** m
        assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-12)
        # Gray: nearest neighbours differ in exactly one bit
        dmin = min(abs(a - b) for a, b in itertools.combinations(pts, 2))
        for i, j in itertools.combinations(range(len(pts)), 2):
            if abs(abs(pts[i] - pts[j]) - dmin) < 1e-9:
                assert np.sum(words[i] != words[j]) == 1

    @pytest.mark.parametrize("mod", ["qpsk", "qam16"])
    def test_hard_decision_inverts(self, mod):
        bits = np.random.default_rng(0).integers(0, 2, 4000, dtype=np.uint8)
        np.testing.assert_array_equal(hard_decision(modulate(bits, mod), mod), bits)

    def test_invalid_bits(self):
        with pytest.raises(ValueError):
            modulate(np.array([0, 2]), "qpsk")
        with pytest.raises(ValueError):
            modulate(np.array([0, 1, 1]), "qpsk")
        with pytest.raises(ValueError):
            modulate(np.array([0, 1]), "bpsk")


class TestChannel:
    def test_noiseless(self):
        assert ber("qpsk", 300.0) == 0.0

    def test_pure_noise(self):
        assert abs(ber("qpsk", -300.0, 20_000) - 0.5) < 0.02

    def test_awgn_q_function(self):
        # per-bit error of Gray QPSK: Q(sqrt(Es/N0)) = erfc(sqrt(Es/N0 / 2)) / 2
        es_n0 = 10 ** (4 / 10)
        ref = 0.5 * math.erfc(math.sqrt(es_n0 / 2))
        got = ber("qpsk", 4.0, 200_000)
        assert ref / 3 < got < 3 * ref
        assert got == pytest.approx(ref, rel=0.1)

    @pytest.mark.parametrize("mod", ["qpsk", "qam16"])
    def test_ber_monotone(self, mod):
        bers = [ber(mod, s, 20_000, seed=3) for s in (-10, 0, 10, 20)]
        assert all(a >= b for a, b in zip(bers, bers[1:])), bers

    def test_rayleigh_scales_power(self):
        sym = modulate(np.zeros(2000, dtype=np.uint8), "qpsk")
        rx = apply_channel(sym, "rayleigh_block", 300.0, 5)
        ratio = rx / sym
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)

    def test_unknown_channel(self):
        with pytest.raises(ValueError):
            apply_channel(np.ones(4), "multipath", 0.0, 0)


class TestDataset:
    def test_snr_range_and_labels(self):
        ds = generate_dataset(LinkConfig(n_instances=200, seed=1))
        assert ds.rx_grid.shape == (200, 2, 48, 14)
        assert ds.tx_bits.shape == (200, 2, 48, 14)
        assert np.all((ds.snr_db >= -10) & (ds.snr_db <= 25))
        np.testing.assert_allclose(10 * np.log10(ds.signal_power / ds.noise_power), ds.snr_db, atol=1e-9)
        assert np.all(np.isfinite(ds.rx_grid))
        assert set(np.unique(ds.tx_bits)) <= {0, 1}

    def test_empirical_snr(self):
        cfg = LinkConfig(n_instances=30, seed=2)
        for i in range(cfg.n_instances):
            inst = generate_instance(cfg, i)
            rx = inst.rx_grid[0] + 1j * inst.rx_grid[1]
            sym = modulate(np.moveaxis(inst.tx_bits, 0, -1).ravel(), "qpsk").reshape(rx.shape)
            noise = rx - sym
            emp = 10 * np.log10(np.mean(np.abs(sym) ** 2) / np.mean(np.abs(noise) ** 2))
            assert abs(emp - inst.snr_db) < 1.0

    def test_zero_db(self):
        cfg = LinkConfig(n_instances=1, snr_range_db=(-1e-9, 1e-9))
        inst = generate_instance(cfg, 0)
        assert inst.noise_power == pytest.approx(inst.signal_power, rel=1e-9)

    def test_noiseless_power(self):
        ds = generate_dataset(LinkConfig(n_instances=5, modulation="qam16", snr_range_db=(299, 300)))
        assert abs(np.mean(ds.signal_power) - 1) < 0.05

    def test_deterministic(self):
        cfg = LinkConfig(n_instances=20, seed=9, channel="rayleigh_block")
        a, b = generate_dataset(cfg), generate_dataset(cfg)
        np.testing.assert_array_equal(a.rx_grid, b.rx_grid)
        np.testing.assert_array_equal(a.tx_bits, b.tx_bits)
        np.testing.assert_array_equal(a.snr_db, b.snr_db)
        c = generate_dataset(LinkConfig(n_instances=20, seed=10, channel="rayleigh_block"))
        assert not np.array_equal(a.snr_db, c.snr_db)

    def test_instance_independent_of_count(self):
        small = generate_dataset(LinkConfig(n_instances=3, seed=4))
        big = generate_dataset(LinkConfig(n_instances=10, seed=4))
        np.testing.assert_array_equal(small.rx_grid, big.rx_grid[:3])

    @pytest.mark.parametrize("kwargs", [
        {"snr_range_db": (5, 5)}, {"n_instances": 0}, {"n_subcarriers": 0},
        {"modulation": "qam64"}, {"channel": "tdl"},
    ])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            LinkConfig(**kwargs)
