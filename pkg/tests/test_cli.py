import csv
import io
import json

import pytest

from jmbfair.cli import main


def test_solve_prints_json(capsys):
    assert main(["solve", "--snr-db", "10", "--m", "10", "--n-max", "20"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n_tx"] == 2 and out["sample_size"] == 10 and out["mode"] == "jmb"
    assert out["iterations"] == len(out["objective_trace"]) <= 20
    assert sum(out["coeffs"]) == pytest.approx(1.0)
    assert len(out["precoder"]["real"]) == 2 and len(out["precoder"]["real"][0]) == 3


def test_solve_broadcast_fixed_error(capsys):
    assert main(["solve", "--mode", "bc", "--sigma-e2", "0.05", "--m", "5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["sigma_e2"] == 0.05
    # column 0 of the precoder matrix is the common stream, unused in broadcast mode
    for part in ("real", "imag"):
        assert [row[0] for row in out["precoder"][part]] == [0.0, 0.0]


def test_converge_writes_csv(tmp_path):
    path = tmp_path / "conv.csv"
    assert main(["converge", "--snr-db", "5", "--m", "5", "--n-max", "5", "--out", str(path)]) == 0
    rows = list(csv.DictReader(path.open()))
    assert {r["init"] for r in rows} == {"zf-e", "zf-svd"}
    assert all(r["snr_db"] == "5.0" for r in rows)


def test_ergodic_with_config_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sample_size": 5, "n_channels": 4, "n_max": 10, "eps_r": 1e-3}))
    assert main(["ergodic", "--config", str(cfg), "--n-channels", "2", "--snr-db", "10",
                 "--modes", "bc"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 1 and rows[0]["mode"] == "bc"
    assert rows[0]["n_channels"] == "2" and rows[0]["m"] == "5"


def test_dump_config(capsys):
    assert main(["ergodic", "--full-scale", "--alpha", "0.8", "--dump-config"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["n_channels"] == 200 and d["sample_size"] == 1000
    assert d["error_model"] == {"kind": "decaying", "alpha": 0.8}


def test_verify_exit_code(capsys):
    assert main(["verify", "--suite", "ball", "--suite", "duality"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2 and all(line.startswith("PASS") for line in out)


def test_bad_input_returns_error_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert main(["ergodic", "--config", str(cfg)]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["solve", "--k", "3", "--ntx", "2"]) == 2
    with pytest.raises(SystemExit):
        main(["solve", "--mode", "nope"])
