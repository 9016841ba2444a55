import json
import os

import pytest

from pimrel.cli import main


def read(path):
    with open(path) as fh:
        return fh.read()


def data_rows(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    return lines[0], lines[1:]


def test_gates_self_check(capsys):
    assert main(["gates"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out


def test_tmr_sweep_grid_and_schema(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main(
        [
            "tmr-sweep", "--bits", "4", "--p-gate", "1e-3,1e-4",
            "--modes", "none,serial,parallel", "--trials", "200",
            "--seed", "7", "-o", str(out),
        ]
    )
    assert code == 0
    header, rows = data_rows(read(out))
    assert header.startswith("experiment,mode,voting,bit_width,p_gate,p_input,trials")
    assert len(rows) == 6
    assert rows[0].startswith("tmr-sweep,none,none,4,0.001,")


def test_rerun_is_byte_identical_including_jobs(tmp_path):
    args = [
        "tmr-sweep", "--bits", "4", "--p-gate", "1e-3,1e-4",
        "--modes", "none,serial", "--trials", "300", "--seed", "11",
    ]
    paths = [tmp_path / f"s{i}.csv" for i in range(3)]
    assert main(args + ["-o", str(paths[0])]) == 0
    assert main(args + ["-o", str(paths[1])]) == 0
    assert main(args + ["-o", str(paths[2]), "--jobs", "4"]) == 0
    blobs = [read(p) for p in paths]
    assert blobs[0] == blobs[1] == blobs[2]


def test_degradation_reference_row(tmp_path):
    out = tmp_path / "deg.csv"
    assert main(["degradation", "--p-input", "1e-9", "--T", "1e3", "--ecc", "none", "-o", str(out)]) == 0
    header, rows = data_rows(read(out))
    value = float(rows[0].split(",")[4])
    assert abs(value / 2.00e3 - 1) < 0.05


def test_nn_zero_p_mult(tmp_path):
    out = tmp_path / "nn.csv"
    assert main(["nn", "--p-mult", "0", "-o", str(out)]) == 0
    _, rows = data_rows(read(out))
    assert rows[0].split(",")[8] == "0.0"


def test_nn_from_csv(tmp_path):
    sweep_csv = tmp_path / "sweep.csv"
    main(["tmr-sweep", "--bits", "4", "--p-gate", "1e-2", "--modes", "none",
          "--trials", "200", "--seed", "3", "-o", str(sweep_csv)])
    out = tmp_path / "nn.csv"
    assert main(["nn", "--from-csv", str(sweep_csv), "-o", str(out)]) == 0
    _, rows = data_rows(read(out))
    assert len(rows) == 1
    assert rows[0].startswith("nn,none,")


def test_mult_single_pair(capsys, tmp_path):
    out = tmp_path / "mult.csv"
    assert main(["mult", "--bits", "8", "--a", "13", "--b", "11", "-o", str(out)]) == 0
    assert "13 * 11 = 143 (correct)" in capsys.readouterr().out


def test_dump_netlist(capsys):
    assert main(["dump-netlist", "--program", "adder"]) == 0
    out = capsys.readouterr().out
    assert "PROGRAM full-adder" in out
    assert "STEP MIN3 in-row in=0,1,2" in out


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"tmr-sweep": {"trails": 10}}))
        code = main(["--config", str(cfg), "tmr-sweep", "-o", str(tmp_path / "x.csv")])
        assert code == 1
        assert "trails" in capsys.readouterr().err

    def test_unknown_section_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"swep": {}}))
        assert main(["--config", str(cfg), "gates"]) == 1
        assert "swep" in capsys.readouterr().err

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps({"tmr-sweep": {"bits": 4, "trials": 100, "p_gate": "1e-2", "modes": "none"}})
        )
        out = tmp_path / "o.csv"
        assert main(["--config", str(cfg), "tmr-sweep", "--bits", "2", "-o", str(out)]) == 0
        _, rows = data_rows(read(out))
        assert rows[0].split(",")[3] == "2"  # bit_width from the flag

    def test_config_supplies_values(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 5, "degradation": {"p_input": "1e-9", "ecc": "none"}}))
        out = tmp_path / "o.csv"
        assert main(["--config", str(cfg), "degradation", "-o", str(out)]) == 0
        _, rows = data_rows(read(out))
        assert rows[0].endswith(",5")  # seed came from config

    def test_bad_numeric_list(self, capsys, tmp_path):
        assert main(["tmr-sweep", "--p-gate", "1e-3,zap", "-o", str(tmp_path / "x.csv")]) == 1
        assert "zap" in capsys.readouterr().err

    def test_missing_config_file(self, capsys):
        assert main(["--config", "/nonexistent.json", "gates"]) == 1


class TestEccCommands:
    def test_verify_clean(self, capsys):
        assert main(["ecc", "verify", "--n", "32", "--m", "16"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["status"] == "clean"
        assert payload["blocks_checked"] == 4

    def test_inject_single_flip_corrected(self, capsys):
        assert main(["ecc", "inject", "--n", "32", "--m", "16", "--flips", "1", "--seed", "3"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["status"] == "corrected"
        assert len(payload["corrected"]) == 1

    def test_overhead_ok(self, capsys):
        assert main(["ecc", "overhead", "--bits", "4", "--rows", "16"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["status"] == "ok"
        assert payload["overhead_ratio"] == pytest.approx(19.0)

    def test_overhead_uncorrectable_aborts_with_exit_2(self, capsys):
        code = main(
            ["ecc", "overhead", "--bits", "4", "--rows", "16", "--n", "64",
             "--flips", "200", "--seed", "0"]
        )
        assert code == 2
        payload = json.loads(capsys.readouterr().out)
        assert payload["status"] == "uncorrectable-abort"
        assert payload["uncorrectable_blocks"]


def test_out_dir_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("PIMREL_OUT_DIR", str(tmp_path / "outputs"))
    assert main(["nn", "--p-mult", "0", "-o", "nn.csv"]) == 0
    assert (tmp_path / "outputs" / "nn.csv").exists()


def test_json_format(tmp_path):
    out = tmp_path / "r.json"
    assert main(["degradation", "--p-input", "1e-9", "--T", "1e3",
                 "--ecc", "diagonal", "--format", "json", "-o", str(out)]) == 0
    payload = json.loads(read(out))
    assert payload["rows"][0]["mode"] == "ecc-diagonal"
    assert payload["meta"]["prng"] == "PCG64"
