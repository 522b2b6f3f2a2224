from __future__ import annotations

import csv
import io
import json
import math

import pytest
import yaml

from ra_lab import cli
from ra_lab.de_irsa import ConvergenceError


def write_yaml(path, cfg):
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


SA_CFG = {
    "experiment": "simulate-slotted",
    "name": "sa-small",
    "seed": 3,
    "params": {"scheme": "SA", "m_s": 100, "trials": 400, "channel": {"model": "collision"},
               "loads": [0.5, 1.0, 1.5]},
}


def read_csv(path):
    raw = path.read_bytes()
    rows = list(csv.reader(io.StringIO(raw.decode("utf-8"), newline="")))
    return raw, rows


def test_slotted_csv_and_manifest(tmp_path):
    cfg = write_yaml(tmp_path / "sa.yaml", SA_CFG)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "out")]) == cli.EXIT_OK
    raw, rows = read_csv(tmp_path / "out" / "sa-small.csv")
    assert rows[0] == ["G", "S", "plr", "ci95"]
    assert raw.count(b"\r\n") == len(rows)
    at_one = next(r for r in rows[1:] if float(r[0]) == 1.0)
    assert float(at_one[1]) == pytest.approx(math.exp(-1), abs=0.01)
    manifest = json.loads((tmp_path / "out" / "sa-small.manifest.json").read_text())
    assert manifest["rows"] == 3 and manifest["seed"] == 3 and manifest["csv"] == "sa-small.csv"
    assert manifest["columns"] == rows[0]
    assert "numpy" in manifest["versions"]


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_yaml(tmp_path / "sa.yaml", SA_CFG)
    a, _ = cli.run_experiment(cfg, tmp_path / "a")
    b, _ = cli.run_experiment(cfg, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()


def test_parallel_run_matches_serial(tmp_path):
    cfg = write_yaml(tmp_path / "sa.yaml", SA_CFG)
    a, _ = cli.run_experiment(cfg, tmp_path / "a", jobs=1)
    b, _ = cli.run_experiment(cfg, tmp_path / "b", jobs=2)
    assert a.read_bytes() == b.read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg = write_yaml(tmp_path / "sa.yaml", SA_CFG)
    a, man = cli.run_experiment(cfg, tmp_path / "a", seed=3)
    b, _ = cli.run_experiment(cfg, tmp_path / "b", seed=4)
    assert a.read_bytes() != b.read_bytes()
    assert json.loads(man.read_text())["seed"] == 3


def test_single_distribution_threshold_gives_one_row(tmp_path):
    cfg = write_yaml(tmp_path / "l1.yaml", {
        "experiment": "de-threshold",
        "params": {"channel": {"model": "rayleigh_capture", "mean_snr_db": 20, "capture_threshold_db": 3},
                   "distributions": [{"name": "L1", "probs": {2: 0.59, 3: 0.27, 5: 0.02, 16: 0.12}}]},
    })
    assert cli.main(["run", str(cfg), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "l1.csv")
    assert rows[0] == ["name", "avg_degree", "rate", "G_star"]
    assert len(rows) == 2 and rows[1][0] == "L1"
    assert float(rows[1][3]) == pytest.approx(1.863, abs=0.01)


def test_schema_errors_name_the_field(tmp_path, capsys):
    bad = dict(SA_CFG, params=dict(SA_CFG["params"], m_s=0, scheme="XSA"))
    cfg = write_yaml(tmp_path / "bad.yaml", bad)
    assert cli.main(["validate", str(cfg)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "params.m_s" in err and "params.scheme" in err


def test_unknown_top_level_key_and_missing_file(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "bad.yaml", dict(SA_CFG, colour="blue"))
    assert cli.main(["validate", str(cfg)]) == cli.EXIT_CONFIG
    assert cli.main(["run", str(tmp_path / "nope.yaml")]) == cli.EXIT_CONFIG
    assert cli.main(["run", str(write_yaml(tmp_path / "sa.yaml", SA_CFG)), "--jobs", "0"]) == cli.EXIT_CONFIG
    (tmp_path / "broken.yaml").write_text("params: [unclosed", encoding="utf-8")
    assert cli.main(["validate", str(tmp_path / "broken.yaml")]) == cli.EXIT_CONFIG


def test_parameter_errors_map_to_config_exit(tmp_path):
    bad = dict(SA_CFG, params=dict(SA_CFG["params"], scheme="IRSA"))  # IRSA without a distribution
    assert cli.main(["run", str(write_yaml(tmp_path / "x.yaml", bad)), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_convergence_failure_exit_code(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise ConvergenceError("slot series did not converge")

    monkeypatch.setattr(cli, "execute", boom)
    cfg = write_yaml(tmp_path / "sa.yaml", SA_CFG)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONVERGENCE


def test_presets_listing_and_validation(capsys):
    names = cli.list_presets()
    assert len(names) >= 10
    assert {"fig-crdsa-throughput", "tab-irsa-thresholds", "fig-ecra-throughput", "fig-multirx-uplink",
            "fig-rlc-buffer", "fig-roc"} <= set(names)
    assert cli.main(["presets"]) == 0
    listed = capsys.readouterr().out.strip().splitlines()
    assert [line.split("\t")[0] for line in listed] == names
    for name in names:
        cfg = cli.load_config(cli.preset_path(name))
        assert cfg["time_budget_s"] <= 1800
        assert cli.main(["validate", name]) == 0


def test_expand_grid():
    assert cli.expand_grid([0.1, 0.2]) == [0.1, 0.2]
    assert cli.expand_grid({"start": 0.1, "stop": 0.3, "step": 0.1}) == pytest.approx([0.1, 0.2, 0.3])


def test_point_seeds_are_distinct_and_stable():
    seeds = [cli.point_seed(5, i) for i in range(50)]
    assert len(set(seeds)) == 50
    assert seeds == [cli.point_seed(5, i) for i in range(50)]
