import json
import re
import subprocess
import sys

import pytest

from sentrysim.cli import main


def cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def src(tmp_path, body, name="p.s"):
    p = tmp_path / name
    p.write_text(body)
    return str(p)


def test_run_success_and_trace(tmp_path, capsys):
    trace = tmp_path / "t.txt"
    code, out, _ = cli(capsys, "run", "--image", src(tmp_path, "li a0, 0\nli a7, 93\necall\n"),
                       "--trace", str(trace))
    assert code == 0 and "status exit" in out
    lines = trace.read_text().splitlines()
    assert lines[-1].endswith("ecall [exit 0]") and "li" not in lines[-1]
    for ln in lines:
        assert re.match(r"^\d+ [0-9a-f]{8} [0-9a-f]{8} \S", ln)


def test_run_guest_failure(tmp_path, capsys):
    code, out, _ = cli(capsys, "run", "--image", src(tmp_path, "li a0, 3\nli a7, 93\necall\n"))
    assert code == 1 and "exit_code 3" in out


def test_run_corpus_entry(capsys):
    code, out, _ = cli(capsys, "run", "--image", "crc32")
    assert code == 1 and "exit_code 255" in out


def test_usage_errors(tmp_path, capsys):
    assert cli(capsys, "run", "--image", str(tmp_path / "missing.bin"))[0] == 2
    bad = tmp_path / "c.json"
    bad.write_text('{"warp": 9}')
    code, _, err = cli(capsys, "run", "--image", "crc32", "--config", str(bad))
    assert code == 2 and "warp" in err
    assert cli(capsys, "run", "--image", src(tmp_path, "frob a0\n"))[0] == 2
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == 2


def test_timeout(tmp_path, capsys):
    code, out, _ = cli(capsys, "run", "--image", src(tmp_path, "j .\n"), "--max-cycles", "300")
    assert code == 3 and "status timeout" in out


def test_uncorrectable_exit_status(tmp_path, capsys):
    faults = tmp_path / "f.json"
    faults.write_text(json.dumps([{"at_cycle": 20, "target": "mem_bit", "bank": "data",
                                   "addr": 0x20000, "bit": b} for b in (1, 2)]))
    code, out, _ = cli(capsys, "run", "--image", src(tmp_path, "j .\n"), "--faults", str(faults),
                       "--max-cycles", "5000")
    assert code == 4 and "status uncorrectable" in out
    faults.write_text('[{"at_cycle": 1, "target": "gamma_ray"}]')
    assert cli(capsys, "run", "--image", "crc32", "--faults", str(faults))[0] == 2


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("SENTRYSIM_SEED", "nope")
    assert cli(capsys, "ecc-selftest", "--words", "2")[0] == 2
    monkeypatch.setenv("SENTRYSIM_SEED", "5")
    a = cli(capsys, "ecc-selftest", "--words", "3", "-v")[1]
    b = cli(capsys, "ecc-selftest", "--words", "3", "-v", "--seed", "5")[1]
    assert a == b


def test_ecc_selftest(capsys):
    code, out, _ = cli(capsys, "ecc-selftest")
    assert code == 0
    assert "256/256 words pass: 39/39 single-flip corrected, 741/741 double-flip detected" in out


def test_irq_bench(capsys):
    code, out, _ = cli(capsys, "irq-bench")
    assert code == 0
    assert re.search(r"banked entry latency\s+6 cycles", out)
    assert re.search(r"spilled round trip\s+76 cycles", out)


def test_dma_demo_table(capsys, tmp_path):
    rep = tmp_path / "d.json"
    code, out, _ = cli(capsys, "dma-demo", "--start", "300", "--period", "100", "--count", "3", "-o", str(rep))
    assert code == 0
    rows = [ln.split() for ln in out.splitlines() if re.match(r"^\d\s", ln)]
    assert [(int(r[1]), int(r[2])) for r in rows] == [(300, 300), (400, 400), (500, 500)]
    assert json.loads(rep.read_text())["schema_version"] == 1


def test_campaign_json_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        code, out, _ = cli(capsys, "campaign", "--program", "sortdiv", "--runs", "3", "--seed", "4", "-o", str(p))
        assert code == 0 and "tcls_recovered" in out
    assert a.read_bytes() == b.read_bytes()
    assert "generated_at" not in a.read_text()


def test_campaign_bad_target(capsys):
    assert cli(capsys, "campaign", "--runs", "1", "--targets", "flux")[0] == 2


def test_entry_point_module():
    r = subprocess.run([sys.executable, "-m", "sentrysim", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "campaign" in r.stdout
