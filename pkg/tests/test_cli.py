import json
import subprocess
import sys

import pytest

from rsd.cli import ConfigError, ExperimentSpec, main, run_spec


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_noise_worked_example(capsys):
    code, out, _ = run(capsys, "noise", "--z", "0.4", "--dphi", "200", "--N", "1000")
    assert code == 0
    assert "N'/N = 1.275862" in out
    assert "N' = 1275.86" in out


def test_noise_grid_csv(capsys, tmp_path):
    out_file = tmp_path / "grid.csv"
    code, out, _ = run(capsys, "noise", "--z", "0.4", "--dphi", "200", "--z-grid", "0.2", "0.4", "--dphi-grid", "0", "1", "--out", str(out_file))
    assert code == 0
    lines = out_file.read_text().splitlines()
    assert lines[0] == "z,dphi,purity,purity_noisy,ratio"
    assert len(lines) == 5


def test_noise_default_grid_to_stdout(capsys):
    code, out, _ = run(capsys, "noise", "--z", "0.4", "--dphi", "1", "--grid")
    assert code == 0
    assert "z,dphi,purity,purity_noisy,ratio" in out
    assert out.count("\n") == 2 + 1 + 121


def test_roundtrip_analytic(capsys, tmp_path):
    out_file = tmp_path / "r.json"
    code, out, _ = run(capsys, "roundtrip", "--d", "2", "--resource", "werner:0.8", "--g", "0.01", "--mode", "analytic", "--out", str(out_file))
    assert code == 0
    fid = float(out.split("=")[1])
    assert fid >= 1 - 1e-9
    doc = json.loads(out_file.read_text())
    assert doc["experiment"]["kind"] == "roundtrip"
    assert doc["experiment"]["params"]["g"] == 0.01
    assert doc["protocol"]["d"] == 2
    assert doc["result"]["fidelity"] == pytest.approx(fid, abs=1e-11)


def test_result_file_reruns_identically(capsys, tmp_path):
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    argv = ["roundtrip", "--resource", "werner:0.8", "--g", "0.05", "--mode", "sampled", "--N", "2000", "--seed", "4", "--out", str(first)]
    assert run(capsys, *argv)[0] == 0
    assert run(capsys, "run", "--config", str(first), "--out", str(second))[0] == 0
    a, b = json.loads(first.read_text()), json.loads(second.read_text())
    assert a["result"] == b["result"]
    assert a["bits_sent"] == b["bits_sent"]


def test_rerun_is_byte_identical(capsys, tmp_path):
    target = tmp_path / "x.json"
    argv = ["roundtrip", "--resource", "werner:0.8", "--g", "0.05", "--mode", "sampled", "--N", "1000", "--seed", "9", "--out", str(target)]
    assert run(capsys, *argv)[0] == 0
    first = target.read_bytes()
    assert run(capsys, *argv)[0] == 0
    assert target.read_bytes() == first


def test_checks_product_is_inert(capsys):
    code, out, _ = run(capsys, "checks", "--resource", "product")
    assert code == 0
    assert out.strip().startswith("inert: protocol cannot transfer information")


def test_checks_werner_discord(capsys):
    code, out, _ = run(capsys, "checks", "--resource", "werner:0.25")
    assert code == 0
    assert "sufficient" in out and "inert" not in out


def test_checks_insufficient_axes(capsys):
    code, out, _ = run(capsys, "checks", "--resource", "singlet", "--m-axis", "1,0,0")
    assert code == 0
    assert "insufficient: trace_commutator_nonzero" in out


def test_bits(capsys, tmp_path):
    out_file = tmp_path / "bits.json"
    code, out, _ = run(capsys, "bits", "--resource", "bell:-0.8,-0.8,-0.8", "--N", "1000", "--out", str(out_file))
    assert code == 0
    doc = json.loads(out_file.read_text())
    assert doc["C_eq6"] == pytest.approx(doc["C_closed_form"], rel=1e-10)


def test_gscan_csv_and_thread_cap(capsys, monkeypatch):
    argv = ["gscan", "--resource", "werner:0.8", "--g-list", "0.1", "0.05", "0.025"]
    code, out, _ = run(capsys, *argv)
    assert code == 0
    body = out.splitlines()[1:]
    assert body[0] == "g,max_weak_value_error,infidelity"
    assert len(body) == 4
    monkeypatch.setenv("RSD_THREADS", "1")
    assert run(capsys, *argv)[1] == out
    monkeypatch.setenv("RSD_THREADS", "lots")
    assert run(capsys, *argv)[0] == 1


def test_exit_codes(capsys):
    assert run(capsys, "roundtrip", "--resource", "bogus:1")[0] == 1
    assert run(capsys, "roundtrip")[0] == 1
    assert run(capsys, "roundtrip", "--resource", "werner:0.8", "--mode", "sampled")[0] == 1
    assert run(capsys, "roundtrip", "--resource", "product:2")[0] == 2
    code, _, err = run(capsys, "roundtrip", "--resource", "werner:0.8", "--m-axis", "1,0,0")
    assert code == 2 and "trace_commutator_nonzero" in err


def test_skip_set2_flag_either_position(capsys, tmp_path):
    for argv in (
        ["--skip-set2-if-imaginary", "roundtrip", "--resource", "werner:0.8"],
        ["roundtrip", "--skip-set2-if-imaginary", "--resource", "werner:0.8"],
    ):
        out_file = tmp_path / "s.json"
        assert run(capsys, *argv, "--out", str(out_file))[0] == 0
        doc = json.loads(out_file.read_text())
        assert doc["protocol"]["skip_set2_if_imaginary"] is True
        assert all(w["re"] == 0 for w in doc["result"]["weak_values"])


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec("nope").validate()
    with pytest.raises(ConfigError, match="g_list"):
        ExperimentSpec("gscan", {"resource": "werner:0.5"}).validate()
    with pytest.raises(ConfigError):
        run_spec(ExperimentSpec("roundtrip", {"resource": "werner:0.5", "N": 0}))


def test_run_accepts_plain_spec(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "noise_overhead", "params": {"z": 0.4, "dphi": 200}}))
    code, out, _ = run(capsys, "run", "--config", str(spec))
    assert code == 0 and "N'/N = 1.275862" in out
    spec.write_text("{not json")
    assert run(capsys, "run", "--config", str(spec))[0] == 1


def test_distributed_subcommand(capsys, tmp_path):
    out_file = tmp_path / "d.json"
    code, out, _ = run(capsys, "distributed", "--resource", "werner:0.8", "--g", "0.05", "--N", "200", "--seed", "3", "--out", str(out_file))
    assert code == 0
    ref = tmp_path / "r.json"
    run(capsys, "roundtrip", "--resource", "werner:0.8", "--g", "0.05", "--N", "200", "--seed", "3", "--mode", "sampled", "--out", str(ref))
    assert json.loads(out_file.read_text())["result"] == json.loads(ref.read_text())["result"]


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rsd.cli", "noise", "--z", "0.4", "--dphi", "200"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "N'/N = 1.275862"
