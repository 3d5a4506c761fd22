"""Run configuration: a strict JSON schema covering the whole pipeline.

Schema (every section optional, every key inside a section optional)::

    {
      "seed": 0,
      "output_dir": null,
      "link":      {LinkConfig fields except "seed"},
      "performer": {PerformerConfig fields},
      "probe":     {ProbeConfig fields except "seed"},
      "units":     [{"tap": "B1-POST", "channels": null}, ...],
      "interpret": {"k_folds": 10, "n_seeds": 10, "tiers": [1, 10, 100, 1000], "n_jobs": 1},
      "baseline":  {"k": 5, "tie_jitter": 1e-10, "retain": 0.95,
                    "dims": [1, ..., 11], "k_folds": 10,
                    "sweep_unit": null, "embeddings": null}
    }

Unknown keys anywhere are errors. All randomness derives from ``seed``: the
link, performer, probe, fold and estimator seeds are drawn from it with
``SeedSequence`` so they never need to be configured individually.
``output_dir`` defaults to ``$RXPROBE_OUTPUT_ROOT/seed-<seed>`` (or
``./rxprobe-runs/seed-<seed>`` when the variable is unset).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linksim import LinkConfig
from .mi import KsgConfig
from .performer import PerformerConfig
from .probe import ProbeConfig

OUTPUT_ROOT_ENV = "RXPROBE_OUTPUT_ROOT"
SEED_STREAMS = ("link", "performer", "probe", "folds", "estimator")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class UnitSpec:
    tap: str
    channels: tuple[int, ...] | None = None

    @property
    def name(self):
        from .interpret import unit_name

        return unit_name(self.tap, self.channels)

    @property
    def slug(self):
        if not self.channels:
            return self.tap
        return f"{self.tap}_ch{'-'.join(str(c) for c in self.channels)}"

    def to_dict(self):
        return {"tap": self.tap, "channels": list(self.channels) if self.channels else None}


@dataclass(frozen=True)
class InterpretSettings:
    k_folds: int = 10
    n_seeds: int = 10
    tiers: tuple[int, ...] = (1, 10, 100, 1000)
    n_jobs: int = 1


@dataclass(frozen=True)
class BaselineSettings:
    k: int = 5
    tie_jitter: float = 1e-10
    retain: float = 0.95
    dims: tuple[int, ...] = tuple(range(1, 12))
    k_folds: int = 10
    sweep_unit: str | None = None  # unit name; defaults to the first unit
    embeddings: dict | None = None  # {"<dim>": matrix path}, replaces PCA in the sweep


def derive_seed(seed, stream):
    """Independent 32-bit seed for one named randomness stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(SEED_STREAMS.index(stream) + 100,))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class RunConfig:
    link: LinkConfig = field(default_factory=LinkConfig)
    performer: PerformerConfig = field(default_factory=PerformerConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    units: tuple[UnitSpec, ...] = ()
    interpret: InterpretSettings = field(default_factory=InterpretSettings)
    baseline: BaselineSettings = field(default_factory=BaselineSettings)
    output_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        cfg = self.performer
        if (cfg.n_subcarriers, cfg.n_symbols, cfg.modulation) != (
            self.link.n_subcarriers, self.link.n_symbols, self.link.modulation
        ):
            raise ConfigError("performer grid size and modulation must match the link config")
        taps = cfg.tap_names()
        for u in self.units:
            if u.tap not in taps:
                raise ConfigError(f"units: unknown tap {u.tap!r}; available: {taps}")
            n = cfg.tap_channels(u.tap)
            for c in u.channels or ():
                if not 0 <= c < n:
                    raise ConfigError(f"units: channel {c} out of range for {u.tap} ({n} channels)")
        names = [u.name for u in self.units]
        if len(set(names)) != len(names):
            raise ConfigError("units: duplicate unit")
        b = self.baseline
        if b.sweep_unit is not None and b.sweep_unit not in names:
            raise ConfigError(f"baseline.sweep_unit {b.sweep_unit!r} is not a configured unit")

    # seeded views of the component configs

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=int(seed))

    @property
    def link_config(self):
        return dataclasses.replace(self.link, seed=derive_seed(self.seed, "link"))

    @property
    def performer_seed(self):
        return derive_seed(self.seed, "performer")

    @property
    def probe_config(self):
        return dataclasses.replace(self.probe, seed=derive_seed(self.seed, "probe"))

    @property
    def fold_seed(self):
        return derive_seed(self.seed, "folds")

    @property
    def ksg_config(self):
        return KsgConfig(self.baseline.k, self.baseline.tie_jitter, derive_seed(self.seed, "estimator"))

    def output_path(self):
        if self.output_dir:
            return Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV, "rxprobe-runs")
        return Path(root) / f"seed-{self.seed}"

    def unit(self, name):
        for u in self.units:
            if u.name == name:
                return u
        raise ConfigError(f"unknown unit {name!r}")

    def to_dict(self):
        """Config echo; excludes ``output_dir`` so reports do not depend on where they are written."""
        link = self.link.to_dict()
        link.pop("seed")
        probe = self.probe.to_dict()
        probe.pop("seed")
        b = dataclasses.asdict(self.baseline)
        b["dims"] = list(b["dims"])
        i = dataclasses.asdict(self.interpret)
        i["tiers"] = list(i["tiers"])
        return {
            "seed": self.seed,
            "link": link,
            "performer": self.performer.to_dict(),
            "probe": probe,
            "units": [u.to_dict() for u in self.units],
            "interpret": i,
            "baseline": b,
        }


def _section(cls, raw, where, forbidden=()):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)} - set(forbidden)
    for key in raw:
        if key not in names:
            hint = " (set the top-level seed instead)" if key in forbidden else ""
            raise ConfigError(f"{where}: unknown key {key!r}{hint}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    for key in raw:
        if key not in top:
            raise ConfigError(f"unknown key {key!r}")
    units = []
    for i, u in enumerate(raw.get("units") or []):
        if isinstance(u, str):
            u = {"tap": u}
        if not isinstance(u, dict) or "tap" not in u or set(u) - {"tap", "channels"}:
            raise ConfigError(f"units[{i}]: expected {{'tap': ..., 'channels': [...] or null}}")
        ch = u.get("channels")
        units.append(UnitSpec(u["tap"], tuple(int(c) for c in ch) if ch else None))
    interp = _section(InterpretSettings, raw.get("interpret"), "interpret")
    interp = dataclasses.replace(interp, tiers=tuple(int(t) for t in interp.tiers))
    base = _section(BaselineSettings, raw.get("baseline"), "baseline")
    base = dataclasses.replace(base, dims=tuple(int(d) for d in base.dims))
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    try:
        return RunConfig(
            link=_section(LinkConfig, raw.get("link"), "link", forbidden=("seed",)),
            performer=_section(PerformerConfig, raw.get("performer"), "performer"),
            probe=_section(ProbeConfig, raw.get("probe"), "probe", forbidden=("seed",)),
            units=tuple(units),
            interpret=interp,
            baseline=base,
            output_dir=raw.get("output_dir"),
            seed=seed,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path):
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)
