import csv
import copy
import json

import pytest

from rxprobe.cli import main
from rxprobe.config import ConfigError, RunConfig, config_from_dict, derive_seed, load_config
from rxprobe.pipeline import STEPS
from tiny_config import TINY


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    codes = {cmd: main([cmd, "--config", str(cfg), "--output", str(root / "out")]) for cmd in STEPS}
    return root / "out", codes


class TestCommands:
    def test_every_command_succeeds_in_order(self, finished_run):
        _, codes = finished_run
        assert codes == {cmd: 0 for cmd in STEPS}

    def test_report_csv(self, finished_run):
        out, _ = finished_run
        rows = list(csv.reader((out / "report" / "units.csv").open()))
        assert rows[0] == ["unit", "mean_mse", "std_mse", "inverse_mse"]
        assert [r[0] for r in rows[1:]] == ["IN-POST", "B1-POST[0,3]"]
        sweep = (out / "report" / "nmi_sweep.csv").read_text().splitlines()
        assert [s.split(",")[0] for s in sweep[1:]] == ["1", "2", "3"]

    def test_report_echoes_config(self, finished_run):
        out, _ = finished_run
        report = json.loads((out / "report" / "report.json").read_text())
        assert report["seed"] == 3
        assert report["config"] == config_from_dict(TINY).to_dict()
        assert "nmi_definition" in report["notes"]

    def test_missing_input(self, cfg_file, tmp_path, capsys):
        assert main(["train-performer", "--config", str(cfg_file), "--output", str(tmp_path / "empty")]) == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("error command=train-performer type=MissingInputError message=")

    def test_seed_mismatch(self, finished_run, cfg_file, capsys):
        out, _ = finished_run
        assert main(["interpret", "--config", str(cfg_file), "--output", str(out), "--seed", "4"]) == 1
        assert "seed 3" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        bad = copy.deepcopy(TINY)
        bad["probe"]["learning_rate"] = 0.1
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        assert main(["simulate", "--config", str(path)]) == 1
        assert "unknown key 'learning_rate'" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [["frobnicate"], ["simulate", "--bogus"], ["simulate", "--seed", "x"], []])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2
        assert "usage:" in capsys.readouterr().err

    def test_env_output_root(self, cfg_file, tmp_path, monkeypatch):
        monkeypatch.setenv("RXPROBE_OUTPUT_ROOT", str(tmp_path / "root"))
        assert main(["simulate", "--config", str(cfg_file), "--seed", "11"]) == 0
        assert (tmp_path / "root" / "seed-11" / "dataset" / "manifest.json").exists()


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.interpret.k_folds == 10 and cfg.interpret.n_seeds == 10
        assert cfg.interpret.tiers == (1, 10, 100, 1000)
        assert cfg.baseline.dims == tuple(range(1, 12)) and cfg.baseline.k == 5 and cfg.baseline.retain == 0.95

    @pytest.mark.parametrize("patch,msg", [
        ({"extra": 1}, "unknown key 'extra'"),
        ({"link": {"seed": 4}}, "top-level seed"),
        ({"probe": {"seed": 4}}, "top-level seed"),
        ({"units": [{"tap": "B7-POST"}]}, "unknown tap"),
        ({"units": [{"tap": "IN-POST", "channels": [8]}]}, "out of range"),
        ({"units": [{"tap": "IN-POST", "chans": [1]}]}, "units[0]"),
        ({"link": {"n_subcarriers": 10}}, "must match"),
        ({"seed": -1}, "seed"),
        ({"baseline": {"sweep_unit": "OUT-POST"}}, "sweep_unit"),
        ({"probe": {"fc_sizes": [4, 2]}}, "probe"),
    ])
    def test_rejects(self, patch, msg):
        raw = copy.deepcopy(TINY)
        for k, v in patch.items():
            raw[k] = {**raw[k], **v} if isinstance(v, dict) and isinstance(raw.get(k), dict) else v
        with pytest.raises(ConfigError) as info:
            config_from_dict(raw)
        assert msg in str(info.value)

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "x.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "x.json")

    def test_seed_streams(self):
        cfg = config_from_dict(TINY)
        seeds = {cfg.link_config.seed, cfg.performer_seed, cfg.probe_config.seed, cfg.fold_seed, cfg.ksg_config.seed}
        assert len(seeds) == 5
        assert derive_seed(3, "link") == cfg.link_config.seed
        assert cfg.with_seed(4).link_config.seed != cfg.link_config.seed

    def test_echo_excludes_output(self):
        a = config_from_dict({**TINY, "output_dir": "/a"})
        b = config_from_dict({**TINY, "output_dir": "/b"})
        assert a.to_dict() == b.to_dict()
        assert config_from_dict(a.to_dict()) == config_from_dict(TINY)

    def test_unit_names(self):
        cfg = config_from_dict(TINY)
        assert [u.name for u in cfg.units] == ["IN-POST", "B1-POST[0,3]"]
        assert [u.slug for u in cfg.units] == ["IN-POST", "B1-POST_ch0-3"]
