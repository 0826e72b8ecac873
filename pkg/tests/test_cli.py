import io
import json
import subprocess
import sys

import pytest

from lm05_decoy.cli import CSV_HEADER, main, read_sweep_csv, write_sweep_csv


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_sweep_to_stdout():
    code, text = run("sweep", "--scheme", "wv-r12lump", "--max-km", "5")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 7
    fields = lines[1].split(",")
    assert fields[0] == "0.000000000e+00" and fields[1] == "wv-r12lump"
    assert all("e" in f for f in fields[2:6])


def test_single_row_at_zero_km():
    code, text = run("sweep", "--scheme", "infinite", "--step-km", "1", "--max-km", "0")
    assert code == 0
    rows = text.splitlines()[1:]
    assert len(rows) == 1
    d, scheme, mu, nu, rate, raw, flags = rows[0].split(",")
    assert float(d) == 0 and scheme == "infinite" and nu == "" and float(rate) > 0


def test_bogus_scheme_exits_two_without_output(tmp_path, capsys):
    out = tmp_path / "curves.csv"
    code, _ = run("sweep", "--scheme", "bogus", "--out", str(out))
    assert code == 2
    assert not out.exists()
    assert "bogus" in capsys.readouterr().err


def test_out_file_and_manifest(tmp_path):
    out = tmp_path / "curves.csv"
    code, text = run("sweep", "--scheme", "one-r12sum", "--max-km", "3", "--out", str(out))
    assert code == 0 and text == ""
    assert out.read_text().startswith("distance_km,")
    manifest = json.loads((tmp_path / "curves.csv.manifest.json").read_text())
    assert manifest["schemes"] == ["one-r12sum"]
    assert manifest["params"]["alpha"] == 0.21
    assert manifest["config"]["max_km"] == 3.0
    assert {"timestamp", "version", "params_path"} <= manifest.keys()


def test_csv_round_trip():
    _, text = run("sweep", "--scheme", "all", "--max-km", "4")
    points = read_sweep_csv(io.StringIO(text))
    again = io.StringIO()
    write_sweep_csv(points, again)
    assert again.getvalue() == text
    assert {p.scheme.value for p in points} == {"infinite", "wv-r12sum", "wv-r12lump", "one-r12sum", "one-r12lump"}


def test_read_rejects_wrong_header():
    with pytest.raises(ValueError):
        read_sweep_csv(io.StringIO("a,b\n"))


def test_optimize_text():
    code, text = run("optimize", "--scheme", "wv-r12sum", "--km", "20")
    assert code == 0
    assert text.startswith("scheme")
    assert "bounds:" in text and "e1_upper" in text


def test_optimize_json():
    code, text = run("optimize", "--scheme", "wv-r12sum", "--km", "20", "--format", "json")
    assert code == 0
    report = json.loads(text)
    assert report["rate"] > 0
    assert 0 < report["nu_opt"] < report["mu_opt"]
    assert set(report["bounds"]) >= {"q1_lower", "q2_lower", "e1_upper", "e2_upper"}
    assert isinstance(report["clamped"], list)


def test_optimize_infinite_has_no_nu():
    code, text = run("optimize", "--scheme", "infinite", "--km", "20", "--format", "json")
    assert code == 0
    report = json.loads(text)
    assert "nu_opt" not in report and "bounds" not in report
    code, text = run("optimize", "--scheme", "infinite", "--km", "20")
    assert "nu_opt" not in text


def test_optimize_negative_distance():
    assert run("optimize", "--scheme", "wv-r12sum", "--km", "-5")[0] == 2


def test_optimize_requires_scheme():
    assert run("optimize", "--km", "5")[0] == 2


def test_mc_validate_passes_and_is_deterministic():
    args = ("mc-validate", "--km", "10", "--mu", "0.5", "--nu", "0.1", "--pulses", "10000000", "--seed", "42")
    code, first = run(*args)
    assert code == 0
    assert "PASS" in first
    assert run(*args) == (0, first)


@pytest.mark.parametrize("pulses", ["0", "-3"])
def test_mc_validate_rejects_pulses(pulses):
    assert run("mc-validate", "--km", "10", "--mu", "0.5", "--nu", "0.1", "--pulses", pulses)[0] == 2


def test_mc_validate_rejects_bad_intensities():
    assert run("mc-validate", "--km", "10", "--mu", "0.1", "--nu", "0.5")[0] == 2


def test_params_from_environment(tmp_path, monkeypatch, gys):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(gys.replace(eta_bob=0.0).to_dict()))
    monkeypatch.setenv("QKD_PARAMS", str(path))
    code, text = run("optimize", "--scheme", "infinite", "--km", "0", "--format", "json")
    assert code == 0
    report = json.loads(text)
    assert report["rate"] == 0.0 and report["params_path"] == str(path)


def test_params_flag_beats_environment(tmp_path, monkeypatch, gys):
    monkeypatch.setenv("QKD_PARAMS", str(tmp_path / "missing.json"))
    path = tmp_path / "p.json"
    path.write_text(json.dumps(gys.to_dict()))
    assert run("optimize", "--scheme", "infinite", "--km", "0", "--params", str(path))[0] == 0


@pytest.mark.parametrize("content", [None, "{not json", '{"params": {"alpha": 0.2}}'])
def test_unreadable_params_exit_two(tmp_path, content):
    path = tmp_path / "p.json"
    if content is not None:
        path.write_text(content)
    assert run("sweep", "--scheme", "infinite", "--max-km", "1", "--params", str(path))[0] == 2


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "lm05_decoy", "sweep", "--scheme", "bogus"], capture_output=True, text=True
    )
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "lm05_decoy", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
