"""Local and global interpretations built from probe errors.

A local interpretation is one instance's squared SNR error; the global
interpretation of a unit is their mean (the MSE). Units are compared by
inverse MSE: a higher value means the unit carries more SNR information.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .performer import ActivationSet
from .probe import ProbeConfig, train_probe

log = logging.getLogger(__name__)

DEFAULT_TIERS = (1, 10, 100, 1000)


@dataclass(frozen=True)
class LocalInterpretation:
    instance_id: int
    snr_true: float
    snr_pred: float
    sq_error: float
    fold_or_seed_id: int = 0


@dataclass
class GlobalInterpretation:
    unit: str
    mse: float
    n_instances: int
    fold_or_seed_id: int = 0

    @property
    def inverse_mse(self):
        return math.inf if self.mse == 0 else 1.0 / self.mse


@dataclass
class UnitSummary:
    """Mean/std of a unit's global MSE over folds or seeds."""

    unit: str
    mean_mse: float
    std_mse: float
    runs: list[GlobalInterpretation]
    locals: list[LocalInterpretation] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    test_folds: list[list[int]] = field(default_factory=list)

    @property
    def inverse_mse(self):
        return math.inf if self.mean_mse == 0 else 1.0 / self.mean_mse

    def to_dict(self):
        return {
            "unit": self.unit,
            "mean_mse": self.mean_mse,
            "std_mse": self.std_mse,
            "inverse_mse": self.inverse_mse,
            "runs": [asdict(r) for r in self.runs],
            "locals": [asdict(r) for r in self.locals],
            "failures": self.failures,
            "test_folds": self.test_folds,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            unit=d["unit"],
            mean_mse=d["mean_mse"],
            std_mse=d["std_mse"],
            runs=[GlobalInterpretation(**r) for r in d["runs"]],
            locals=[LocalInterpretation(**r) for r in d["locals"]],
            failures=list(d.get("failures", [])),
            test_folds=[list(f) for f in d.get("test_folds", [])],
        )


def unit_name(tap, channel_filter=None):
    if not channel_filter:
        return tap
    return f"{tap}[{','.join(str(c) for c in channel_filter)}]"


def evaluate_mse(preds, labels):
    """Mean squared difference between true and predicted SNR (dB^2)."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("empty prediction list")
    return float(np.mean((y - p) ** 2))


def local_interpretations(probe, activations: ActivationSet, run_id=0):
    preds = probe.predict(activations.tensors)
    y = np.asarray(activations.labels, dtype=np.float64)
    sq = (y - preds) ** 2
    return [
        LocalInterpretation(int(i), float(t), float(p), float(s), run_id)
        for i, t, p, s in zip(activations.ids, y, preds, sq)
    ]


def global_from_locals(locals_, unit="", run_id=0):
    sq = np.array([r.sq_error for r in locals_], dtype=np.float64)
    return GlobalInterpretation(unit, float(np.mean(sq)), len(sq), run_id)


def kfold_indices(n, k, seed):
    """Seeded partition of ``range(n)`` into ``k`` test folds of near-equal size."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} instances into {k} folds")
    perm = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,))).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def _fit_and_test(activations, train_idx, test_idx, config, seed, unit, run_id):
    probe = train_probe(activations.subset(train_idx), config, seed=seed)
    test = activations.subset(test_idx)
    locs = local_interpretations(probe, test, run_id)
    # the global MSE is computed from the predictions directly, not from the locals
    mse = evaluate_mse(probe.predict(test.tensors), test.labels)
    return GlobalInterpretation(unit, mse, len(test), run_id), locs


def _run_jobs(fn, jobs, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def kfold_interpret(activations: ActivationSet, probe_config: ProbeConfig, k=10, seed=0,
                    n_jobs=1, unit=None):
    """Retrain a probe per fold and summarise the k held-out MSEs."""
    unit = unit or unit_name(activations.tap, activations.channel_filter)
    n = len(activations)
    train_floor = 2 * probe_config.batch_size
    if n - -(-n // k) < train_floor:
        raise ValueError(
            f"{n} instances leave fewer than {train_floor} training instances per fold at k={k}"
        )
    folds = kfold_indices(n, k, seed)
    jobs = []
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        jobs.append((activations, train_idx, test_idx, probe_config, probe_config.seed + f, unit, f))
    results = _run_jobs(_fit_and_test, jobs, n_jobs)
    runs = [r[0] for r in results]
    locs = [loc for r in results for loc in r[1]]
    mses = np.array([r.mse for r in runs])
    return UnitSummary(
        unit, float(mses.mean()), float(mses.std()), runs, locs,
        test_folds=[[int(i) for i in activations.ids[f]] for f in folds],
    )


def _seed_job(activations, train_idx, test_idx, config, seed, unit, run_id):
    try:
        return _fit_and_test(activations, train_idx, test_idx, config, seed, unit, run_id)
    except Exception as exc:  # recorded per seed, never fatal
        return None, {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}


def seed_sweep(activations: ActivationSet, probe_config: ProbeConfig, n_seeds=10, seed=0,
               k=10, n_jobs=1, unit=None):
    """Train ``n_seeds`` probes on one fixed fold, varying only the probe seed.

    The held-out fold is fold 0 of the ``k``-fold split drawn with ``seed``.
    """
    unit = unit or unit_name(activations.tap, activations.channel_filter)
    n = len(activations)
    test_idx = kfold_indices(n, k, seed)[0]
    train_idx = np.setdiff1d(np.arange(n), test_idx)
    jobs = [
        (activations, train_idx, test_idx, probe_config, probe_config.seed + s, unit, s)
        for s in range(n_seeds)
    ]
    runs, locs, failures = [], [], []
    for run, extra in _run_jobs(_seed_job, jobs, n_jobs):
        if run is None:
            failures.append(extra)
        else:
            runs.append(run)
            locs.extend(extra)
    mses = np.array([r.mse for r in runs]) if runs else np.array([math.nan])
    return UnitSummary(
        unit, float(mses.mean()), float(mses.std()) if runs else math.nan, runs, locs, failures,
        test_folds=[[int(i) for i in activations.ids[test_idx]]],
    )


@dataclass
class Contributions:
    contributions: np.ndarray  # per value, input order
    tiers: tuple[int, ...]
    shares: list[float]  # cumulative share of the n largest, one per tier
    rest: float

    def table(self):
        rows = [(f"top{n}", s) for n, s in zip(self.tiers, self.shares)]
        return rows + [("rest", self.rest)]


def contribution_analysis(values, tiers=DEFAULT_TIERS):
    """Relative contribution of each value and cumulative shares of the largest ones.

    Sums are correctly rounded (``math.fsum``), so the result does not depend
    on summation order. ``rest`` is the share outside the largest tier.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("values must be finite and non-negative")
    total = math.fsum(v)
    if total <= 0:
        raise ValueError("values sum to zero")
    contrib = v / total
    ordered = np.sort(contrib)[::-1]
    tiers = tuple(int(t) for t in tiers)
    shares = [math.fsum(ordered[:n]) for n in tiers]
    largest = max(tiers) if tiers else 0
    rest = math.fsum(ordered[largest:])
    return Contributions(contrib, tiers, shares, rest)


def cumulative_shares(values):
    """Share of the n largest values for every n = 1..N."""
    c = contribution_analysis(values, ()).contributions
    ordered = np.sort(c)[::-1]
    return np.array([math.fsum(ordered[:n]) for n in range(1, len(ordered) + 1)])


def rank_units(globals_):
    """Indices ordered from most to least informative (descending inverse MSE).

    Units with zero MSE come first; ties are broken by unit name. Returns the
    order and the set of indices flagged as perfect.
    """
    for g in globals_:
        if g.mse < 0 or math.isnan(g.mse):
            raise ValueError(f"invalid mse {g.mse} for unit {g.unit}")
    perfect = {i for i, g in enumerate(globals_) if g.mse == 0}
    order = sorted(range(len(globals_)), key=lambda i: (-globals_[i].inverse_mse, globals_[i].unit))
    return order, perfect


def intra_instance_stats(locals_):
    """Max, mean and population standard deviation of per-instance squared errors."""
    sq = np.array([r.sq_error if hasattr(r, "sq_error") else r for r in locals_], dtype=np.float64)
    if sq.size == 0:
        raise ValueError("no local interpretations")
    return float(sq.max()), float(sq.mean()), float(sq.std())


def skewness(x):
    """Adjusted Fisher-Pearson sample skewness; 0 for constant input."""
    x = np.asarray([r.sq_error if hasattr(r, "sq_error") else r for r in x], dtype=np.float64)
    n = x.size
    if n < 3:
        raise ValueError("skewness needs at least 3 values")
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    if m2 == 0:
        return 0.0
    g1 = np.mean(d ** 3) / m2 ** 1.5
    return float(g1 * math.sqrt(n * (n - 1)) / (n - 2))
