import csv
import json

import pytest

from perchlearn.cli import build_parser, main
from perchlearn.config import Config, load_config, save_config


def output(capsys):
    return dict(line.split(",", 1) for line in capsys.readouterr().out.strip().splitlines())


@pytest.fixture(scope="module")
def quick_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "quick.json"
    doc = {"ephe": {"max_rollouts": 16, "evaluation_rollouts": 4},
           "grid": {"speeds": [2.5], "angles": [60.0, 90.0], "designs": ["Wide-Short"],
                    "repeats": 1}}
    path.write_text(json.dumps(doc))
    return path


def test_config_round_trip(tmp_path):
    cfg = Config()
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg
    assert load_config(None) == cfg


def test_config_rejects_unknown_keys(tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"ephe": {"popsize": 3}}))
    with pytest.raises(ValueError):
        load_config(tmp_path / "bad.json")
    (tmp_path / "bad2.json").write_text(json.dumps({"nonsense": {}}))
    with pytest.raises(ValueError):
        load_config(tmp_path / "bad2.json")


def test_rollout_and_estimate(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["rollout", "--V", "2.5", "--phi", "90", "--design", "Wide-Short",
                 "--rrev", "4.6", "--moment", "2.5", "--seed", "0", "--out", str(out)]) == 0
    res = output(capsys)
    assert res["success"] == "True" and res["n_legs"] == "4"
    for name in ("trajectory.csv", "trajectory.png", "outcome.json"):
        assert (out / name).stat().st_size > 0

    est_path = tmp_path / "est.csv"
    assert main(["estimate", "--trajectory-file", str(out / "trajectory.csv"),
                 "--out", str(est_path)]) == 0
    with open(est_path) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) == {"t", "rrev", "rrev_rate", "z_accel", "d_true", "d_estimate"}
    defined = [r for r in rows if r["d_estimate"] not in ("undefined", "")]
    assert any(r["d_estimate"] == "undefined" for r in rows)
    assert defined


def test_learn_writes_log(tmp_path, capsys, quick_config):
    out = tmp_path / "l"
    code = main(["learn", "--V", "2.5", "--phi", "90", "--design", "Wide-Short", "--seed", "0",
                 "--config", str(quick_config), "--out", str(out)])
    res = output(capsys)
    # a 16-rollout budget cannot converge: the exit code says so
    assert code == 2 and res["converged"] == "False"
    for name in ("learning_log.csv", "learning_summary.json", "learning_curve.png"):
        assert (out / name).stat().st_size > 0


def test_sweep_then_analyze(tmp_path, capsys, quick_config, monkeypatch):
    monkeypatch.setenv("PERCH_WORKERS", "1")
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(quick_config), "--out", str(out)]) == 0
    capsys.readouterr()
    records = out / "records_wide_short.csv"
    assert records.exists() and (out / "summary.json").exists()
    assert (out / "success_wide_short.png").exists() and (out / "success_vs_speed.png").exists()
    # resume reuses the cache and rewrites identical records
    before = records.read_bytes()
    assert main(["sweep", "--config", str(quick_config), "--out", str(out), "--resume"]) == 0
    assert records.read_bytes() == before

    an = tmp_path / "a"
    assert main(["analyze", "--records", str(records), "--design", "Wide-Short", "--tau", "0.0",
                 "--out", str(an)]) == 0
    capsys.readouterr()
    for name in ("region.json", "region_points.csv", "separability.json", "state_space.png",
                 "optical_flow_2d.png", "optical_flow_3d.png", "moment_map.png",
                 "success_polar.png"):
        assert (an / name).stat().st_size > 0
    metrics = json.loads((an / "separability.json").read_text())
    assert metrics["points"] == 2 and metrics["in_region"] == 2


def test_parser_requires_condition():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["rollout", "--V", "1.0"])
