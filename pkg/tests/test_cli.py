import csv
import json
import shutil
import subprocess

import pytest

from b512.cli import main
from b512.funcsim import load_image


def gen(tmp_path, name="k", *extra):
    out = tmp_path / name
    assert main(["gen-ntt", "--n", "1024", "--modulus-bits", "32", "--seed", "1",
                 "--out", str(out), *extra]) == 0
    return out


def test_gen_then_verify(tmp_path, capsys):
    out = gen(tmp_path)
    for f in ("kernel.bin", "kernel.s", "vdm.img", "vdm.img.manifest", "sdm.img", "manifest.json"):
        assert (out / f).exists()
    capsys.readouterr()
    code = main(["verify", str(out / "kernel.bin"), "--manifest", str(out / "manifest.json"),
                 "--trials", "2", "--json"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_gen_rejects_bad_n(tmp_path, capsys):
    assert main(["gen-ntt", "--n", "3000", "--out", str(tmp_path / "x")]) == 2
    assert "power of two" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_inverse_manifest_records_n_inv(tmp_path):
    out = gen(tmp_path, "inv", "--direction", "inverse")
    m = json.loads((out / "manifest.json").read_text())
    n_inv, q = int(m["n_inv"]), int(m["q"])
    assert n_inv * 1024 % q == 1 and m["direction"] == "inverse"


def test_verify_fails_on_broken_kernel(tmp_path, capsys):
    out = gen(tmp_path)
    # drop every store so the output region is never written
    text = (out / "kernel.s").read_text().rstrip().splitlines()
    body = [ln for ln in text if not ln.strip().startswith("vstore")]
    (out / "broken.s").write_text("\n".join(body) + "\n")
    code = main(["verify", str(out / "broken.s"), "--manifest", str(out / "manifest.json")])
    assert code == 1
    assert "first mismatch" in capsys.readouterr().out


def test_assemble_disasm_round_trip(tmp_path):
    out = gen(tmp_path)
    assert main(["disasm", str(out / "kernel.bin"), "--out", str(tmp_path / "a.s")]) == 0
    assert main(["assemble", str(tmp_path / "a.s"), "--out", str(tmp_path / "a.bin")]) == 0
    assert (tmp_path / "a.bin").read_bytes() == (out / "kernel.bin").read_bytes()
    assert main(["disasm", str(tmp_path / "a.bin"), "--out", str(tmp_path / "b.s")]) == 0
    assert (tmp_path / "b.s").read_text() == (tmp_path / "a.s").read_text()


def test_assemble_reports_line(tmp_path, capsys):
    (tmp_path / "bad.s").write_text("vload v1, a0, 0\nvfoo v1, v2\n")
    assert main(["assemble", str(tmp_path / "bad.s")]) == 2
    assert "line 2: unknown mnemonic 'vfoo'" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["sim", str(tmp_path / "nope.bin")]) == 2
    assert "no such file" in capsys.readouterr().err


def test_run_writes_output_images(tmp_path):
    out = gen(tmp_path)
    m = json.loads((out / "manifest.json").read_text())
    base, n = m["regions"]["output"]
    code = main(["run", str(out / "kernel.bin"), "--vdm", str(out / "vdm.img"),
                 "--sdm", str(out / "sdm.img"), "--dump", f"output:{base}:{n}",
                 "--out", str(tmp_path / "run")])
    assert code == 0
    (region,) = load_image(tmp_path / "run" / "vdm.out.img")
    assert (region.name, region.offset, len(region.values)) == ("output", base, n)
    from b512 import nttgen
    from b512.oracle import bit_reverse, ntt_reference
    p = nttgen.NttPlan.from_manifest(out / "manifest.json")
    data = next(r for r in load_image(out / "vdm.img") if r.name == "input").values
    want = list(ntt_reference(data, p.params))
    assert region.values == [want[bit_reverse(i, 10)] for i in range(n)]


def test_sim_and_report(tmp_path, capsys):
    out = gen(tmp_path)
    assert main(["sim", str(out / "kernel.bin"), "--out", str(tmp_path / "s.json"), "--trace"]) == 0
    stats = json.loads((tmp_path / "s.json").read_text())
    assert stats["total_cycles"] > 0 and len(stats["dispatch"]) == len(stats["complete"])
    capsys.readouterr()
    assert main(["report", "--n", "1024", "--stats", str(tmp_path / "s.json"), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["cycles"] == stats["total_cycles"]
    assert main(["report", "--n", "1024"]) == 2


def test_report_64k_band(tmp_path, capsys):
    out = tmp_path / "k64"
    assert main(["gen-ntt", "--n", "65536", "--modulus-bits", "128", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--n", "65536", "--program", str(out / "kernel.bin"), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert 1.38 - 0.3 <= rep["ratio"] <= 1.38 + 0.3
    assert rep["hbm_overlaps"] is True
    assert rep["theoretical_us"] == pytest.approx(4.876, abs=1e-3)
    assert main(["report", "--n", "65536", "--program", str(out / "kernel.bin")]) == 0
    assert "HBM hidden behind compute" in capsys.readouterr().out


def test_sweep_writes_every_point(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--n", "1024", "--modulus-bits", "32", "--grid", "hples=4..256,banks=32..256",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert {(int(r["hples"]), int(r["banks"])) for r in rows} == {
        (h, b) for h in (4, 8, 16, 32, 64, 128, 256) for b in (32, 64, 128, 256)}
    front = json.loads((out / "frontier.json").read_text())
    assert front["frontier"]
    for ex in front["exceptions"]:
        assert ex["hples"] not in (ex["banks"], 2 * ex["banks"]) and ex["evidence"]["bound_by"]


def test_outputs_are_deterministic(tmp_path):
    a, b = gen(tmp_path, "a"), gen(tmp_path, "b")
    for f in ("kernel.bin", "kernel.s", "vdm.img", "sdm.img", "manifest.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


@pytest.mark.skipif(shutil.which("b512") is None, reason="console script not installed")
def test_console_script(tmp_path):
    r = subprocess.run(["b512", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("b512 ")
    r = subprocess.run(["b512", "gen-ntt", "--n", "3000", "--out", str(tmp_path / "x")],
                       capture_output=True, text=True)
    assert r.returncode == 2
