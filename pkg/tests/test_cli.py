import csv
import json

import numpy as np
import pytest

from sampler.cli import load_config, main

SMALL = {
    "name": "cli",
    "model": {"kind": "damped_1d", "K": 1},
    "theta": [1.0, 0.2, 0.05, 0.5],
    "grid": {"dims": 1, "sizes": [30], "start": 1},
    "noise": {"variance": 0.1},
    "design": {"gamma": 8},
    "eval": {"seed": 3},
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_design_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["design", "--config", write(tmp_path, SMALL), "--out", str(out)]) == 0
    w = rows(out / "weights.csv")
    assert len(w) == 30 and sum(int(r["selected"]) for r in w) == 8
    c = rows(out / "crlb.csv")
    assert [r["param"] for r in c] == ["amp1", "freq1", "damp1", "phase1"]
    assert (out / "report.csv").exists() and (out / "timings.csv").exists()
    assert "seconds" not in (out / "report.csv").read_text()


def test_evaluate_round_trip(tmp_path):
    out = tmp_path / "out"
    cfg = write(tmp_path, SMALL)
    assert main(["design", "--config", cfg, "--out", str(out)]) == 0
    first = (out / "crlb.csv").read_text()
    ev = tmp_path / "ev"
    assert main(["evaluate", "--config", cfg, "--weights", str(out / "weights.csv"), "--out", str(ev)]) == 0
    assert (ev / "crlb.csv").read_text() == first


def test_evaluate_uniform_weights_without_selection(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("w\n" + "\n".join(["0.25"] * 30) + "\n")
    assert main(["evaluate", "--config", write(tmp_path, SMALL), "--weights", str(p), "--out", str(tmp_path)]) == 0
    p.write_text("w\n" + "\n".join(["0.25"] * 29) + "\n")
    assert main(["evaluate", "--config", write(tmp_path, SMALL), "--weights", str(p), "--out", str(tmp_path)]) == 1


def test_design_is_deterministic(tmp_path):
    cfg = write(tmp_path, SMALL)
    main(["design", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["design", "--config", cfg, "--out", str(tmp_path / "b")])
    for f in ("weights.csv", "crlb.csv", "report.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_dump_preset_round_trips(tmp_path, capsys):
    assert main(["--dump-preset", "fig1"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["design"]["gamma"] == 13
    assert load_config(write(tmp_path, cfg)) == cfg
    assert main(["--dump-preset", "nope"]) == 1


def test_preset_with_file_override(tmp_path):
    cfg = load_config(write(tmp_path, {"noise": {"variance": 0.5}}), "fig1", beta=0.05)
    assert cfg["noise"]["variance"] == 0.5 and cfg["theta"][2] == 0.05
    assert cfg["design"]["gamma"] == 13


def test_config_errors(tmp_path, capsys):
    assert main(["design", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    bad = dict(SMALL, extra=1)
    assert main(["design", "--config", write(tmp_path, bad), "--out", str(tmp_path)]) == 1
    assert "extra" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{")
    assert main(["design", "--config", str(tmp_path / "broken.json")]) == 1
    assert main(["design"]) == 1
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["design", "--scenario", "fig1", "--threads", "0", "--out", str(tmp_path)]) == 1


def test_infeasible_caps_exit_two(tmp_path, capsys):
    cfg = json.loads(json.dumps(SMALL))
    cfg["design"]["caps"] = [1e-12, None, None, None]
    assert main(["design", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    assert "certificate" in capsys.readouterr().err


def test_compare_and_simulate(tmp_path):
    cfg = json.loads(json.dumps(SMALL))
    cfg["eval"].update(baseline_trials=100)
    assert main(["compare", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "c")]) == 0
    assert [r["method"] for r in rows(tmp_path / "c" / "report.csv")] == ["design", "random", "uniform"]
    cfg["eval"]["baseline_trials"] = 0
    assert main(["compare", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "c")]) == 1

    assert main(["simulate", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "s")]) == 1
    cfg = json.loads(json.dumps(SMALL))
    cfg["noise"]["variance"] = 0.0
    cfg["eval"].update(trials=5, estimation_grid={"width": 3, "points": 5})
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "s")]) == 0
    r = rows(tmp_path / "s" / "report.csv")[0]
    assert float(r["rmse_freq"]) < 1e-12


def test_seed_override_changes_simulation(tmp_path):
    cfg = json.loads(json.dumps(SMALL))
    cfg["eval"].update(trials=20, estimation_grid={"width": 3, "points": 5})
    path = write(tmp_path, cfg)
    main(["simulate", "--config", path, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["simulate", "--config", path, "--out", str(tmp_path / "b"), "--seed", "2"])
    a, b = rows(tmp_path / "a" / "report.csv")[0], rows(tmp_path / "b" / "report.csv")[0]
    assert a["rmse_freq"] != b["rmse_freq"]
    assert main(["simulate", "--config", path, "--seed", "-1"]) == 1
