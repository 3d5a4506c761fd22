import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rxprobe.interpret import (
    GlobalInterpretation,
    LocalInterpretation,
    UnitSummary,
    contribution_analysis,
    cumulative_shares,
    evaluate_mse,
    global_from_locals,
    intra_instance_stats,
    kfold_indices,
    kfold_interpret,
    local_interpretations,
    rank_units,
    seed_sweep,
    skewness,
    unit_name,
)
from rxprobe.performer import ActivationSet
from rxprobe.probe import ProbeConfig


class PerfectProbe:
    """Reads the label back out of the first activation element."""

    def predict(self, tensors):
        return np.asarray(tensors, dtype=np.float64)[:, 0, 0, 0]


class OffsetProbe:
    def __init__(self, offset):
        self.offset = offset

    def predict(self, tensors):
        return np.asarray(tensors, dtype=np.float64)[:, 0, 0, 0] + self.offset


def label_echo_set(n, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.uniform(-10, 25, n)
    x = np.broadcast_to(y[:, None, None, None], (n, 1, 2, 2)).astype(np.float32)
    return ActivationSet("ECHO", None, np.ascontiguousarray(x), x[:, 0, 0, 0].astype(np.float64))


class TestEvaluateMse:
    def test_examples(self):
        assert evaluate_mse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert evaluate_mse([1.0, 1.0], [0.0, 2.0]) == 1.0

    def test_constant_predictor_gives_variance(self):
        y = np.random.default_rng(0).normal(size=101)
        assert evaluate_mse(np.full(101, y.mean()), y) == pytest.approx(np.var(y), rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            evaluate_mse([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            evaluate_mse([], [])


class TestLocal:
    def test_perfect_probe(self):
        locs = local_interpretations(PerfectProbe(), label_echo_set(10))
        assert all(r.sq_error == 0 for r in locs)

    def test_records(self):
        aset = label_echo_set(5)
        locs = local_interpretations(OffsetProbe(1.5), aset, run_id=3)
        for r, i, y in zip(locs, aset.ids, aset.labels):
            assert r.instance_id == i and r.snr_true == y and r.fold_or_seed_id == 3
            assert r.sq_error == (r.snr_true - r.snr_pred) ** 2

    def test_single_instance(self):
        locs = local_interpretations(OffsetProbe(2.0), label_echo_set(1))
        assert global_from_locals(locs).mse == locs[0].sq_error

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 200), st.floats(-5, 5), st.integers(0, 1000))
    def test_global_equals_mean_local(self, n, offset, seed):
        aset = label_echo_set(n, seed)
        rng = np.random.default_rng(seed)
        noisy = aset.tensors + rng.normal(size=aset.tensors.shape).astype(np.float32)
        aset = ActivationSet("X", None, noisy, aset.labels)
        probe = OffsetProbe(offset)
        locs = local_interpretations(probe, aset)
        g = evaluate_mse(probe.predict(aset.tensors), aset.labels)
        assert abs(np.mean([r.sq_error for r in locs]) - g) <= 1e-12 * max(1.0, g)


class TestKfold:
    @pytest.mark.parametrize("n,k", [(10, 2), (101, 10), (37, 5)])
    def test_partition(self, n, k):
        folds = kfold_indices(n, k, seed=4)
        assert len(folds) == k
        allidx = np.concatenate(folds)
        assert sorted(allidx.tolist()) == list(range(n))
        assert max(map(len, folds)) - min(map(len, folds)) <= 1

    def test_seeded(self):
        a, b = kfold_indices(50, 5, 1), kfold_indices(50, 5, 1)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not all(np.array_equal(x, y) for x, y in zip(a, kfold_indices(50, 5, 2)))

    def test_errors(self):
        with pytest.raises(ValueError):
            kfold_indices(10, 1, 0)
        with pytest.raises(ValueError):
            kfold_indices(3, 5, 0)

    def test_perfect_probe_k2(self):
        # zero activations and a constant label: the output bias starts at the
        # label and every gradient vanishes, so the probe is exact
        aset = ActivationSet("C", None, np.zeros((160, 1, 3, 3), np.float32), np.full(160, 4.0))
        cfg = ProbeConfig(scale=0.125, batch_size=32, max_epochs=3, weight_decay=0.0)
        s = kfold_interpret(aset, cfg, k=2, seed=0)
        assert (s.mean_mse, s.std_mse) == (0.0, 0.0)

    def test_fold_ids_and_summary(self):
        rng = np.random.default_rng(1)
        aset = ActivationSet("N", [0], rng.standard_normal((150, 1, 2, 2)).astype(np.float32),
                             rng.uniform(-10, 25, 150), ids=np.arange(1000, 1150))
        cfg = ProbeConfig(scale=0.125, batch_size=32, max_epochs=1)
        s = kfold_interpret(aset, cfg, k=3, seed=5)
        assert s.unit == "N[0]"
        ids = [i for f in s.test_folds for i in f]
        assert sorted(ids) == list(range(1000, 1150))
        assert sorted(r.instance_id for r in s.locals) == list(range(1000, 1150))
        assert s.mean_mse == pytest.approx(np.mean([r.mse for r in s.runs]), rel=1e-15)
        assert s.std_mse == pytest.approx(np.std([r.mse for r in s.runs]), rel=1e-12)
        for run in s.runs:
            sq = [r.sq_error for r in s.locals if r.fold_or_seed_id == run.fold_or_seed_id]
            assert abs(np.mean(sq) - run.mse) <= 1e-12 * run.mse

    def test_undersized(self):
        aset = label_echo_set(60)
        with pytest.raises(ValueError):
            kfold_interpret(aset, ProbeConfig(scale=0.125, batch_size=32), k=10)


@pytest.fixture(scope="module")
def constant_set():
    rng = np.random.default_rng(2)
    return ActivationSet("S", None, rng.standard_normal((150, 1, 2, 2)).astype(np.float32),
                         np.full(150, -3.0))


class TestSeedSweep:
    @pytest.fixture()
    def data(self, constant_set):
        return constant_set

    def test_single_seed_std_zero(self, data):
        s = seed_sweep(data, ProbeConfig(scale=0.125, batch_size=32, max_epochs=1), n_seeds=1, k=5)
        assert s.std_mse == 0.0 and len(s.runs) == 1

    def test_constant_target_all_small(self, data):
        cfg = ProbeConfig(scale=0.125, batch_size=32, max_epochs=20, early_stop_epochs=5, lr=1e-3)
        s = seed_sweep(data, cfg, n_seeds=3, k=5)
        assert all(r.mse < 1e-2 for r in s.runs)
        assert len({tuple(f) for f in s.test_folds}) == 1

    def test_same_seed_identical(self, data):
        cfg = ProbeConfig(scale=0.125, batch_size=32, max_epochs=2, lr=1e-3)
        a = seed_sweep(data, cfg, n_seeds=2, k=5, seed=3)
        b = seed_sweep(data, cfg, n_seeds=2, k=5, seed=3)
        assert [r.mse for r in a.runs] == [r.mse for r in b.runs]

    def test_failures_recorded(self, data):
        bad = data.subset(np.arange(150))
        bad.tensors[:, 0, 0, 0] = np.nan
        s = seed_sweep(bad, ProbeConfig(scale=0.125, batch_size=32, max_epochs=1), n_seeds=2, k=5)
        assert len(s.failures) == 2 and not s.runs
        assert "TrainingDivergedError" in s.failures[0]["error"]


def fraction_oracle(values, tiers):
    """Exact rational shares by brute-force sort, rounded once at the end."""
    fr = [Fraction(v) for v in values]
    total = sum(fr)
    ordered = sorted((Fraction(v) / total for v in fr), reverse=True)
    return [float(sum(ordered[:n])) for n in tiers], float(sum(ordered[max(tiers):]))


class TestContributions:
    def test_example(self):
        c = contribution_analysis([1, 1, 2])
        np.testing.assert_array_equal(c.contributions, [0.25, 0.25, 0.5])
        assert c.shares[0] == 0.5

    def test_equal_values(self):
        c = contribution_analysis(np.ones(40), (1, 10, 40))
        assert c.shares == [1 / 40, 10 / 40, 1.0]

    def test_labels(self):
        labels = [label for label, _ in contribution_analysis([3, 1, 2]).table()]
        assert labels == ["top1", "top10", "top100", "top1000", "rest"]

    def test_rest(self):
        c = contribution_analysis(np.arange(1, 2001, dtype=float))
        assert c.shares[-1] + c.rest == pytest.approx(1.0, abs=1e-15)
        assert c.rest > 0

    def test_against_fractions(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = rng.exponential(size=rng.integers(1, 1500))
            c = contribution_analysis(v)
            shares, rest = fraction_oracle(v, (1, 10, 100, 1000))
            # exact up to the single rounding of each contribution
            np.testing.assert_allclose(c.shares, shares, rtol=1e-14)

    def test_errors(self):
        with pytest.raises(ValueError):
            contribution_analysis([0.0, 0.0])
        with pytest.raises(ValueError):
            contribution_analysis([1.0, -1.0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=60).filter(lambda v: sum(v) > 0))
    def test_cumulative_properties(self, v):
        s = cumulative_shares(v)
        assert np.all(np.diff(s) >= 0)
        assert np.all((s >= 0) & (s <= 1 + 1e-15))
        assert s[-1] == pytest.approx(1.0, abs=1e-12)


class TestRanking:
    def _g(self, mses, names=None):
        names = names or [f"u{i}" for i in range(len(mses))]
        return [GlobalInterpretation(n, m, 10) for n, m in zip(names, mses)]

    def test_example(self):
        assert rank_units(self._g([4, 1, 2]))[0] == [1, 2, 0]

    def test_single(self):
        assert rank_units(self._g([3.0]))[0] == [0]

    def test_ties_by_name(self):
        order, _ = rank_units(self._g([1.0, 1.0, 0.5], ["b", "a", "c"]))
        assert order == [2, 1, 0]

    def test_zero_first_flagged(self):
        order, perfect = rank_units(self._g([2.0, 0.0, 1.0]))
        assert order[0] == 1 and perfect == {1}

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=20), st.floats(1e-2, 1e2))
    def test_scale_invariance_and_mse_order(self, mses, c):
        g = self._g(mses)
        order = rank_units(g)[0]
        assert order == rank_units(self._g([m * c for m in mses]))[0] or len(set(mses)) < len(mses)
        assert [mses[i] for i in order] == sorted(mses)

    def test_invalid(self):
        with pytest.raises(ValueError):
            rank_units(self._g([1.0, -1.0]))


class TestStats:
    def test_example(self):
        assert intra_instance_stats([0.0, 4.0]) == (4.0, 2.0, 2.0)

    def test_records_and_constant(self):
        locs = [LocalInterpretation(i, 0.0, 1.0, 1.0) for i in range(5)]
        assert intra_instance_stats(locs) == (1.0, 1.0, 0.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            intra_instance_stats([])

    def test_skewness(self):
        x = np.random.default_rng(4).exponential(size=5000)
        assert skewness(x) == pytest.approx(2.0, abs=0.3)
        assert skewness([1.0, 1.0, 1.0]) == 0.0
        # symmetric sample
        assert skewness([-2.0, -1.0, 0.0, 1.0, 2.0]) == 0.0

    def test_unit_name(self):
        assert unit_name("B2-PRE") == "B2-PRE"
        assert unit_name("B2-PRE", [20, 57]) == "B2-PRE[20,57]"

    def test_summary_round_trip(self):
        s = UnitSummary("u", 1.0, 0.5, [GlobalInterpretation("u", 1.0, 2, 0)],
                        [LocalInterpretation(1, 2.0, 3.0, 1.0, 0)], [], [[1]])
        assert UnitSummary.from_dict(s.to_dict()) == s
        assert math.isinf(UnitSummary("p", 0.0, 0.0, []).inverse_mse)
