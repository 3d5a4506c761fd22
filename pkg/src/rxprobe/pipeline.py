"""Pipeline steps. Each reads its inputs from and writes its outputs to the run directory.

Run directory layout::

    dataset/                 simulated link dataset
    performer/               receiver checkpoint
    activations/<unit>/      one activation dump per configured unit
    probes/<unit>/           probe trained on all instances of the unit
    interpret/<unit>.json    k-fold global and local interpretations
    seed_sweep/<unit>.json   fixed-fold seed sweep
    contributions.json       contribution tiers and intra-instance statistics
    nmi_baseline.json        PCA + KSG normalised MI per unit and fold
    dim_sweep.json           NMI versus reduced dimension
    report/                  report.json and CSV tables
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from . import store
from .config import RunConfig
from .dimred import dim_sweep as _dim_sweep
from .dimred import import_embedding, pca_fit, pca_transform
from .interpret import (
    UnitSummary,
    contribution_analysis,
    intra_instance_stats,
    kfold_indices,
    kfold_interpret,
    seed_sweep as _seed_sweep,
    skewness,
)
from .linksim import generate_dataset
from .mi import NMI_DEFINITION, nmi
from .performer import capture_units, train_performer as _train_performer
from .probe import train_probe as _train_probe

log = logging.getLogger(__name__)

NOTES = {
    "nmi_definition": NMI_DEFINITION,
    "nmi_note": "normalisation and k-NN radius are stand-ins for an externally defined formulation",
    "pca_fit": "PCA is fit on the training folds only and applied to the held-out fold",
    "deviation": "standard deviations are population (divide by N)",
}


class MissingInputError(FileNotFoundError):
    pass


def _need(path, producer):
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"{path} not found; run '{producer}' first")
    return path


def _check_run(cfg):
    """Refuse to mix artifacts from runs with different seeds in one directory."""
    stamp = _need(cfg.output_path() / "run.json", "simulate")
    seed = store.read_json(stamp)["seed"]
    if seed != cfg.seed:
        raise ValueError(f"{cfg.output_path()} holds a run with seed {seed}, not {cfg.seed}")


def _units(cfg: RunConfig):
    if not cfg.units:
        raise ValueError("config lists no units to probe")
    return cfg.units


def _activations(cfg, unit):
    return store.read_activation_set(_need(cfg.output_path() / "activations" / unit.slug, "dump-activations"))


def simulate(cfg: RunConfig):
    out = cfg.output_path() / "dataset"
    store.write_dataset(generate_dataset(cfg.link_config), out)
    stamp = cfg.output_path() / "run.json"
    store.write_json({"seed": cfg.seed, "config": cfg.to_dict()}, stamp)
    return [out, stamp]


def train_performer(cfg: RunConfig):
    ds = store.read_dataset(_need(cfg.output_path() / "dataset", "simulate"))
    model = _train_performer(ds, cfg.performer, cfg.performer_seed)
    out = cfg.output_path() / "performer"
    store.save_performer(model, out)
    return [out]


def dump_activations(cfg: RunConfig):
    root = cfg.output_path()
    ds = store.read_dataset(_need(root / "dataset", "simulate"))
    model = store.load_performer(_need(root / "performer", "train-performer"))
    units = _units(cfg)
    sets = capture_units(model, ds, [(u.tap, list(u.channels) if u.channels else None) for u in units])
    written = []
    for unit, aset in zip(units, sets):
        out = root / "activations" / unit.slug
        store.write_activation_set(aset, out)
        written.append(out)
    return written


def train_probe(cfg: RunConfig):
    written = []
    for unit in _units(cfg):
        probe = _train_probe(_activations(cfg, unit), cfg.probe_config)
        out = cfg.output_path() / "probes" / unit.slug
        store.save_probe(probe, out)
        written.append(out)
    return written


def check_global_local(summary: UnitSummary, tol=1e-12):
    """Largest |global MSE - mean of its local squared errors| over the runs of a unit.

    Raises ``AssertionError`` when it exceeds ``tol`` (absolute, in dB^2).
    """
    worst = 0.0
    for run in summary.runs:
        sq = [r.sq_error for r in summary.locals if r.fold_or_seed_id == run.fold_or_seed_id]
        worst = max(worst, abs(math.fsum(sq) / len(sq) - run.mse))
    if worst > tol:
        raise AssertionError(f"{summary.unit}: global MSE differs from mean local error by {worst}")
    return worst


def interpret(cfg: RunConfig):
    written = []
    for unit in _units(cfg):
        s = kfold_interpret(_activations(cfg, unit), cfg.probe_config, cfg.interpret.k_folds,
                            cfg.fold_seed, cfg.interpret.n_jobs, unit.name)
        d = s.to_dict()
        d["global_local_gap"] = check_global_local(s)
        out = cfg.output_path() / "interpret" / f"{unit.slug}.json"
        store.write_json(d, out)
        written.append(out)
    return written


def seed_sweep(cfg: RunConfig):
    written = []
    for unit in _units(cfg):
        s = _seed_sweep(_activations(cfg, unit), cfg.probe_config, cfg.interpret.n_seeds,
                        cfg.fold_seed, cfg.interpret.k_folds, cfg.interpret.n_jobs, unit.name)
        d = s.to_dict()
        if s.runs:
            d["global_local_gap"] = check_global_local(s)
        out = cfg.output_path() / "seed_sweep" / f"{unit.slug}.json"
        store.write_json(d, out)
        written.append(out)
    return written


def _load_summary(cfg, unit, kind="interpret"):
    path = _need(cfg.output_path() / kind / f"{unit.slug}.json", kind.replace("_", "-"))
    return UnitSummary.from_dict(store.read_json(path))


def contributions(cfg: RunConfig):
    rows = []
    for unit in _units(cfg):
        s = _load_summary(cfg, unit)
        sq = [r.sq_error for r in s.locals]
        c = contribution_analysis(sq, cfg.interpret.tiers)
        mx, mean, std = intra_instance_stats(s.locals)
        rows.append({
            "unit": unit.name,
            "tiers": [list(t) for t in c.table()],
            "max": mx,
            "mean": mean,
            "std": std,
            "skewness": skewness(sq) if len(sq) >= 3 else None,
            "n_instances": len(sq),
        })
    out = cfg.output_path() / "contributions.json"
    store.write_json(rows, out)
    return [out]


def _flat(aset):
    return aset.tensors.reshape(len(aset), -1).astype(np.float64)


def _folds(cfg, n):
    k = cfg.baseline.k_folds
    if k < 2:
        return [(np.arange(n), np.arange(n))]
    folds = kfold_indices(n, k, cfg.fold_seed)
    return [(np.setdiff1d(np.arange(n), test), test) for test in folds]


def nmi_baseline(cfg: RunConfig):
    rows = []
    for unit in _units(cfg):
        aset = _activations(cfg, unit)
        x, y = _flat(aset), aset.labels
        ests = []
        for f, (tr, te) in enumerate(_folds(cfg, len(aset))):
            model = pca_fit(x[tr], cfg.baseline.retain)
            z = pca_transform(model, x[te])
            ests.append(nmi(z, y[te], cfg.ksg_config, {
                "method": "pca", "retain": cfg.baseline.retain, "dims": model.n_retained,
                "retained_fraction": model.retained_fraction, "fold": f,
            }))
        ok = [e.nmi for e in ests if e.failure == "none"]
        rows.append({
            "unit": unit.name,
            "nmi_mean": float(np.mean(ok)) if ok else None,
            "nmi_std": float(np.std(ok)) if ok else None,
            "n_failures": len(ests) - len(ok),
            "estimates": [e.to_dict() for e in ests],
        })
    out = cfg.output_path() / "nmi_baseline.json"
    store.write_json(rows, out)
    return [out]


def dim_sweep(cfg: RunConfig):
    b = cfg.baseline
    unit = cfg.unit(b.sweep_unit) if b.sweep_unit else _units(cfg)[0]
    aset = _activations(cfg, unit)
    if b.embeddings:
        mats = {int(d): import_embedding(p, aset.ids) for d, p in b.embeddings.items()}
        missing = [d for d in b.dims if d not in mats]
        if missing:
            raise ValueError(f"baseline.embeddings has no matrix for dim {missing[0]}")
        rows = _dim_sweep(mats, aset.labels, b.dims, cfg.ksg_config)
        source = "imported"
    else:
        x, y = _flat(aset), aset.labels
        folds = _folds(cfg, len(aset))
        per_dim = {d: [] for d in b.dims}
        ys = []
        for tr, te in folds:
            model = pca_fit(x[tr], b.retain)
            z = pca_transform(model, x[te], max(b.dims))
            for d in b.dims:
                per_dim[d].append(z[:, :d])
            ys.append(y[te])
        rows = _dim_sweep(per_dim, ys, b.dims, cfg.ksg_config)
        source = "pca"
    out = cfg.output_path() / "dim_sweep.json"
    store.write_json({"unit": unit.name, "source": source, "rows": [r.to_dict() for r in rows]}, out)
    return [out]


def report(cfg: RunConfig):
    root = cfg.output_path()
    results = {"config": cfg.to_dict(), "seed": cfg.seed, "notes": NOTES}
    results["units"] = [_load_summary(cfg, u) for u in _units(cfg)]
    sweeps = [root / "seed_sweep" / f"{u.slug}.json" for u in cfg.units]
    if all(p.exists() for p in sweeps):
        results["seed_sweeps"] = [UnitSummary.from_dict(store.read_json(p)) for p in sweeps]
    if (root / "contributions.json").exists():
        rows = store.read_json(root / "contributions.json")
        results["contributions"] = rows
        results["intra"] = [{k: r[k] for k in ("unit", "max", "mean", "std", "skewness")} for r in rows]
    if (root / "nmi_baseline.json").exists():
        results["nmi_baseline"] = store.read_json(root / "nmi_baseline.json")
    if (root / "dim_sweep.json").exists():
        sweep = store.read_json(root / "dim_sweep.json")
        results["dim_sweep"] = sweep["rows"]
        results["dim_sweep_source"] = {"unit": sweep["unit"], "source": sweep["source"]}
    return store.emit_report(results, root / "report")


STEPS = {
    "simulate": simulate,
    "train-performer": train_performer,
    "dump-activations": dump_activations,
    "train-probe": train_probe,
    "interpret": interpret,
    "seed-sweep": seed_sweep,
    "contributions": contributions,
    "nmi-baseline": nmi_baseline,
    "dim-sweep": dim_sweep,
    "report": report,
}

PROBING_STEPS = ("simulate", "train-performer", "dump-activations", "interpret", "contributions", "report")


def run_pipeline(cfg: RunConfig, steps=tuple(STEPS)):
    written = []
    for name in steps:
        if name != "simulate":
            _check_run(cfg)
        log.info("step %s", name)
        written += STEPS[name](cfg)
    return written
