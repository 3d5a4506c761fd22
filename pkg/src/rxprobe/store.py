"""On-disk formats: JSON manifests next to raw little-endian blobs.

Every artifact is a directory holding ``manifest.json`` and one or more
``.bin`` files. Blobs are C-order arrays with the dtype recorded in the
manifest (``<f4`` for activations and parameters).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .linksim import LinkConfig, LinkDataset
from .performer import ActivationSet, Performer, PerformerConfig
from .probe import ProbeConfig, ProbeModel

FORMAT_VERSION = 1
DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "|u1": np.dtype("|u1")}


class FormatError(ValueError):
    pass


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True, allow_nan=False) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in row])


def _write_blob(path, array, dtype):
    np.ascontiguousarray(array, dtype=DTYPES[dtype]).tofile(path)


def _read_blob(path, dtype, shape, field="blob"):
    dt = DTYPES.get(dtype)
    if dt is None:
        raise FormatError(f"{path}: unsupported dtype tag {dtype!r}")
    expected = int(np.prod(shape)) * dt.itemsize
    try:
        size = Path(path).stat().st_size
    except FileNotFoundError:
        raise FormatError(f"{path}: missing blob for field {field!r}") from None
    if size != expected:
        raise FormatError(
            f"{path}: manifest mismatch in field {field!r}: blob has {size} bytes, "
            f"manifest shape {list(shape)} implies {expected}"
        )
    return np.fromfile(path, dtype=dt).reshape(shape)


def _manifest(path, kind, required):
    path = Path(path)
    try:
        m = read_json(path / "manifest.json")
    except FileNotFoundError:
        raise FormatError(f"{path}: no manifest.json") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}/manifest.json: malformed ({exc})") from None
    if m.get("kind") != kind:
        raise FormatError(f"{path}: expected kind {kind!r}, found {m.get('kind')!r}")
    if m.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {m.get('format_version')!r}")
    for key in required:
        if key not in m:
            raise FormatError(f"{path}: manifest missing field {key!r}")
    return m


# activations

def write_activation_set(aset: ActivationSet, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    _write_blob(path / "data.bin", aset.tensors, "<f4")
    write_json({
        "kind": "activations",
        "format_version": FORMAT_VERSION,
        "dtype": "<f4",
        "shape": list(aset.tensors.shape[1:]),
        "tap": aset.tap,
        "channel_filter": aset.channel_filter,
        "instance_ids": [int(i) for i in aset.ids],
        "labels": [float(v) for v in aset.labels],
    }, path / "manifest.json")


def read_activation_set(path) -> ActivationSet:
    path = Path(path)
    m = _manifest(path, "activations",
                  ("dtype", "shape", "tap", "channel_filter", "instance_ids", "labels"))
    n = len(m["instance_ids"])
    if len(m["labels"]) != n:
        raise FormatError(f"{path}: manifest mismatch in field 'labels': {len(m['labels'])} != {n} ids")
    tensors = _read_blob(path / "data.bin", m["dtype"], [n, *m["shape"]], "shape")
    return ActivationSet(
        tap=m["tap"],
        channel_filter=m["channel_filter"] or None,
        tensors=tensors.astype(np.float32, copy=False),
        labels=np.array(m["labels"], dtype=np.float64),
        ids=np.array(m["instance_ids"], dtype=np.int64),
    )


# matrices with instance ids (embeddings)

def write_matrix(matrix, ids, path):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or len(ids) != len(matrix):
        raise ValueError("need an (N, r) matrix and N ids")
    dtype = "<f4" if matrix.dtype == np.float32 else "<f8"
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    _write_blob(path / "data.bin", matrix, dtype)
    write_json({
        "kind": "matrix",
        "format_version": FORMAT_VERSION,
        "dtype": dtype,
        "shape": list(matrix.shape),
        "instance_ids": [int(i) for i in ids],
    }, path / "manifest.json")


def read_matrix(path):
    path = Path(path)
    m = _manifest(path, "matrix", ("dtype", "shape", "instance_ids"))
    if len(m["shape"]) != 2 or m["shape"][0] != len(m["instance_ids"]):
        raise FormatError(f"{path}: manifest mismatch in field 'shape' vs 'instance_ids'")
    return _read_blob(path / "data.bin", m["dtype"], m["shape"], "shape"), np.array(m["instance_ids"])


# datasets

def write_dataset(ds: LinkDataset, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    _write_blob(path / "rx.bin", ds.rx_grid, "<f4")
    _write_blob(path / "bits.bin", ds.tx_bits, "|u1")
    write_json({
        "kind": "dataset",
        "format_version": FORMAT_VERSION,
        "config": ds.config.to_dict(),
        "rx_shape": list(ds.rx_grid.shape),
        "bits_shape": list(ds.tx_bits.shape),
        "instance_ids": [int(i) for i in ds.ids],
        "snr_db": [float(v) for v in ds.snr_db],
        "signal_power": [float(v) for v in ds.signal_power],
        "noise_power": [float(v) for v in ds.noise_power],
    }, path / "manifest.json")


def read_dataset(path) -> LinkDataset:
    path = Path(path)
    m = _manifest(path, "dataset", ("config", "rx_shape", "bits_shape", "instance_ids", "snr_db"))
    cfg = m["config"]
    return LinkDataset(
        rx_grid=_read_blob(path / "rx.bin", "<f4", m["rx_shape"], "rx_shape"),
        tx_bits=_read_blob(path / "bits.bin", "|u1", m["bits_shape"], "bits_shape"),
        snr_db=np.array(m["snr_db"]),
        signal_power=np.array(m["signal_power"]),
        noise_power=np.array(m["noise_power"]),
        config=LinkConfig(**cfg),
        ids=np.array(m["instance_ids"], dtype=np.int64),
    )


# checkpoints

def _write_params(path, state):
    names = list(state)
    flat = np.concatenate([np.asarray(state[k], dtype=np.float32).ravel() for k in names])
    _write_blob(path / "params.bin", flat, "<f4")
    return [{"name": k, "shape": list(state[k].shape)} for k in names]


def _read_params(path, layout):
    total = sum(int(np.prod(p["shape"])) for p in layout)
    flat = _read_blob(path / "params.bin", "<f4", [total], "params")
    state, off = {}, 0
    for p in layout:
        size = int(np.prod(p["shape"]))
        state[p["name"]] = flat[off:off + size].reshape(p["shape"])
        off += size
    return state


def save_performer(model: Performer, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    layout = _write_params(path, model.state_dict())
    write_json({
        "kind": "performer",
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "params": layout,
        "history": model.history,
    }, path / "manifest.json")


def load_performer(path) -> Performer:
    path = Path(path)
    m = _manifest(path, "performer", ("config", "params"))
    model = Performer(PerformerConfig(**m["config"]))
    model.load_state_dict(_read_params(path, m["params"]))
    model.history = list(m.get("history", []))
    return model


def save_probe(probe: ProbeModel, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    layout = _write_params(path, probe.state_dict())
    write_json({
        "kind": "probe",
        "format_version": FORMAT_VERSION,
        "config": probe.config.to_dict(),
        "input_shape": list(probe.input_shape),
        "params": layout,
        "history": probe.history,
        "best_epoch": probe.best_epoch,
    }, path / "manifest.json")


def load_probe(path) -> ProbeModel:
    path = Path(path)
    m = _manifest(path, "probe", ("config", "input_shape", "params"))
    probe = ProbeModel(ProbeConfig(**m["config"]), m["input_shape"])
    probe.load_state_dict(_read_params(path, m["params"]))
    probe.history = list(m.get("history", []))
    probe.best_epoch = int(m.get("best_epoch", 0))
    return probe


# reports

REPORT_FILES = {
    "units": ("units.csv", ["unit", "mean_mse", "std_mse", "inverse_mse"]),
    "seed_sweeps": ("seed_sweep.csv", ["unit", "mean_mse", "std_mse", "inverse_mse", "n_failures"]),
    "locals": ("locals.csv", ["unit", "fold_or_seed_id", "instance_id", "snr_true", "snr_pred", "sq_error"]),
    "intra": ("intra_instance.csv", ["unit", "max", "mean", "std", "skewness"]),
    "contributions": ("contributions.csv", ["unit", "tier", "share"]),
    "nmi_baseline": ("nmi_baseline.csv",
                     ["unit", "fold", "dims", "mi_nats", "entropy_x", "entropy_y", "nmi", "failure"]),
    "dim_sweep": ("nmi_sweep.csv", ["dim", "nmi_mean", "nmi_std", "n_failures"]),
}


def _plain(x):
    """Recursively replace objects that have ``to_dict`` by plain containers."""
    if hasattr(x, "to_dict"):
        x = x.to_dict()
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def emit_report(results, out_dir):
    """Write ``report.json`` plus one CSV per populated section of ``results``.

    ``results`` is a dict with optional sections ``units`` and
    ``seed_sweeps`` (unit summaries), ``intra``, ``contributions`` (rows with
    a ``tiers`` list of ``[label, share]`` pairs), ``nmi_baseline`` and
    ``dim_sweep``; every other key is copied into the JSON only. Returns the
    paths written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"report directory {out} is not writable: {exc.strerror or exc}") from None

    res = _plain(dict(results))
    rows = {}
    if "units" in res:
        rows["units"] = [[u["unit"], u["mean_mse"], u["std_mse"], u["inverse_mse"]] for u in res["units"]]
        rows["locals"] = [
            [u["unit"], r["fold_or_seed_id"], r["instance_id"], r["snr_true"], r["snr_pred"], r["sq_error"]]
            for u in res["units"] for r in u["locals"]
        ]
    if "seed_sweeps" in res:
        rows["seed_sweeps"] = [
            [u["unit"], u["mean_mse"], u["std_mse"], u["inverse_mse"], len(u["failures"])]
            for u in res["seed_sweeps"]
        ]
    if "intra" in res:
        rows["intra"] = [[r["unit"], r["max"], r["mean"], r["std"], r["skewness"]] for r in res["intra"]]
    if "contributions" in res:
        rows["contributions"] = [[r["unit"], label, share] for r in res["contributions"]
                                 for label, share in r["tiers"]]
    if "nmi_baseline" in res:
        rows["nmi_baseline"] = [
            [r["unit"], e["reduction"].get("fold", 0), e["reduction"].get("dims", ""),
             e["mi_nats"], e["entropy_x"], e["entropy_y"], e["nmi"], e["failure"]]
            for r in res["nmi_baseline"] for e in r["estimates"]
        ]
    if "dim_sweep" in res:
        rows["dim_sweep"] = [[r["dim"], r["nmi_mean"], r["nmi_std"], r["n_failures"]] for r in res["dim_sweep"]]

    written = [out / "report.json"]
    write_json(res, written[0])
    for key, table in rows.items():
        name, header = REPORT_FILES[key]
        write_csv(out / name, header, [[_csv_value(v) for v in row] for row in table])
        written.append(out / name)
    return written


def _csv_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v
