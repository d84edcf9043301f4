import csv
import json

import numpy as np
import pytest

from mmwave_link.cli import main
from mmwave_link.harness import (
    CSV_COLUMNS, PRESETS, ConfigError, RunManifest, ScenarioConfig, SweepConfig, config_from_dict,
    emit_results, load_config, preset_config, resolve_workers, run_sweep, run_task,
)

SMALL = {"n_tx": 8, "n_rx": 4, "streams": 1, "constellation": "4-QAM", "block_length": 256, "blocks": 4,
         "mi_samples": 2000, "realizations": 2, "bcd_max_iter": 10}

YAML_A = """
seed: 11
defaults:
  n_tx: 8
  n_rx: 4
  streams: 1
  constellation: 4-QAM
  mi_samples: 2000
  realizations: 2
scenarios:
  - scheme: TDE
    tx_power_dbw: [-10, 0]
    distances_m: [30, 90]
"""

YAML_B = """# same sweep, different layout
seed:    11
defaults: {n_tx: 8, n_rx: 4, streams: 1, constellation: 4-QAM,   mi_samples: 2000, realizations: 2}
scenarios:
- {scheme: TDE, tx_power_dbw: [-10.0, 0.0], distances_m: [30.0, 90.0]}   # trailing comment
"""


def small(**kw):
    return config_from_dict({"seed": 5, "defaults": SMALL, "scenarios": [kw]})


# -- configuration -----------------------------------------------------------------------------------

@pytest.mark.parametrize("entry,field", [
    ({"scheme": "CDMA"}, "scheme"),
    ({"arch": "analog"}, "arch"),
    ({"tx_power_dbw": []}, "tx_power_dbw"),
    ({"distances_m": [-1.0]}, "distances_m"),
    ({"streams": 3, "tx_chains": 2}, "tx_chains"),
    ({"rx_chains": 9}, "rx_chains"),
    ({"pa_mode": "tube"}, "pa_mode"),
    ({"realizations": 0}, "realizations"),
    ({"scheme": "FDE", "cyclic_prefix": 1}, "cyclic_prefix"),
    ({"blocks": 1}, "blocks"),
    ({"bogus": 1}, "bogus"),
])
def test_invalid_scenarios(entry, field):
    with pytest.raises(ConfigError) as exc:
        small(**entry)
    assert exc.value.field == f"scenarios[0].{field}"


def test_invalid_top_level():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"seed": -3})
    assert exc.value.field == "seed"
    with pytest.raises(ConfigError):
        config_from_dict({"scenario": []})


def test_hash_ignores_layout_and_comments(tmp_path):
    (tmp_path / "a.yaml").write_text(YAML_A)
    (tmp_path / "b.yaml").write_text(YAML_B)
    a, b = load_config(tmp_path / "a.yaml"), load_config(tmp_path / "b.yaml")
    assert a == b and a.config_hash == b.config_hash
    assert a.config_hash != small(scheme="TDE").config_hash


def test_hash_ignores_workers():
    cfg = small()
    assert SweepConfig(cfg.seed, 4, cfg.scenarios).config_hash == cfg.config_hash


def test_malformed_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("seed: [1,\n")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_chain_defaults():
    assert ScenarioConfig(arch="HY", streams=2).chains == (2, 2)
    assert ScenarioConfig(arch="FD", n_tx=50, n_rx=10).chains == (50, 10)


def test_auto_prefix_covers_memory():
    scen = small(scheme="FDE", distances_m=[30.0, 150.0]).scenarios[0]
    assert scen.prefix() >= max(scen.max_channel_memory(d) for d in scen.distances_m) - 1


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("MMWAVE_LINK_WORKERS", "3")
    assert resolve_workers(None, 1) == 3
    assert resolve_workers(2, 1) == 2
    monkeypatch.delenv("MMWAVE_LINK_WORKERS")
    assert resolve_workers(None, 5) == 5
    assert resolve_workers(0) >= 1


# -- output ----------------------------------------------------------------------------------------

def test_empty_sweep_writes_header_only(tmp_path):
    manifest = run_sweep(SweepConfig(seed=1))
    path = emit_results(manifest, tmp_path / "out.csv")
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_csv_layout(tmp_path):
    cfg = small(tx_power_dbw=[-10.0, 0.0, 10.0], distances_m=[30.0, 60.0], realizations=1)
    manifest = run_sweep(cfg)
    path = emit_results(manifest, tmp_path / "out.csv")
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) - 1 == 3 * 2
    for row in rows[1:]:
        assert "e" in row[CSV_COLUMNS.index("ase_mean")]
        assert row[CSV_COLUMNS.index("realizations")] == "1"


def test_json_round_trip(tmp_path):
    manifest = run_sweep(small(realizations=1))
    path = emit_results(manifest, tmp_path / "out.json", "json")
    back = RunManifest.from_json(path.read_text())
    assert back == manifest


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_results(run_sweep(SweepConfig()), tmp_path / "no" / "such" / "dir.csv")


# -- sweep behaviour --------------------------------------------------------------------------------

def test_repeatable_single_realization():
    cfg = small(realizations=1)
    assert run_sweep(cfg).comparable() == run_sweep(cfg).comparable()


def test_worker_count_does_not_change_results():
    cfg = small(scheme="FDE", tx_power_dbw=[0.0], distances_m=[30.0, 60.0], realizations=2)
    assert run_sweep(cfg, workers=1).comparable() == run_sweep(cfg, workers=2).comparable()


@pytest.mark.parametrize("scheme", ["TDE", "FDE", "OFDM"])
def test_ase_non_decreasing_in_power_per_realization(scheme):
    scen = small(scheme=scheme, tx_power_dbw=[-10.0, 0.0, 10.0]).scenarios[0]
    for r in range(2):
        out = run_task(3, 0, scen, 0, r)
        assert not out.failed
        assert np.all(np.diff(out.ase) >= -1e-9)


def test_adding_a_scenario_keeps_existing_streams():
    one = config_from_dict({"seed": 2, "defaults": SMALL, "scenarios": [{"scheme": "TDE"}]})
    two = config_from_dict({"seed": 2, "defaults": SMALL, "scenarios": [{"scheme": "TDE"}, {"scheme": "FDE"}]})
    assert run_sweep(one).results[0] == run_sweep(two).results[0]


def test_presets_parse():
    for name in PRESETS:
        cfg = preset_config(name, seed=1)
        assert cfg.scenarios and all(s.realizations == 50 for s in cfg.scenarios)
    with pytest.raises(ConfigError):
        preset_config("paper-fig9")


# -- command line ---------------------------------------------------------------------------------

def test_cli_success(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(YAML_A)
    out = tmp_path / "r.csv"
    assert main(["--config", str(cfg), "--out", str(out), "--quiet", "--seed", "4"]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 1 + 4


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenarios:\n  - scheme: CDMA\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "r.csv")]) != 0
    line = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert line["error"] == "config" and line["field"] == "scenarios[0].scheme"


def test_cli_io_error(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(YAML_A)
    code = main(["--config", str(cfg), "--out", str(tmp_path / "missing" / "r.csv"), "--quiet",
                 "--realizations", "1"])
    assert code != 0
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "io"


def test_cli_rejects_missing_source():
    with pytest.raises(SystemExit) as exc:
        main(["--out", "x.csv"])
    assert exc.value.code != 0
