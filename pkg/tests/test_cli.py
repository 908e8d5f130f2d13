import shutil
import subprocess
import sys
import time

import numpy as np

from scaleform import cli
from scaleform.harness.imageio import read_image

TINY_INI = """\
[model]
channels = 8
squeeze_ratio = 2
ffup_hidden = 8
depths = 1, 1
heads = 2
window = 2
dim = 8
base_size = 8
latent_dim = 6
gen_hidden = 8
"""


def run(capsys, *argv):
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:  # argparse rejects the command line
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_round_trip(tmp_path, capsys):
    t0 = time.perf_counter()
    (tmp_path / "tiny.ini").write_text(TINY_INI)
    assert run(capsys, "toyset", "--out", tmp_path / "hq", "--n", 3, "--hq-only", "--seed", 3)[0] == 0

    code, _, _ = run(capsys, "degrade", "--in", tmp_path / "hq", "--out", tmp_path / "set" / "lq",
                     "--seed", 3, "--r", "2,2", "--no-jitter")
    assert code == 0
    manifest = (tmp_path / "set" / "lq" / "manifest.tsv").read_text().splitlines()
    assert manifest[0].split("\t")[:5] == ["filename", "sigma", "r", "delta", "q"]
    assert len(manifest) == 4 and all(line.split("\t")[2] == "2.0" for line in manifest[1:])
    shutil.copytree(tmp_path / "hq", tmp_path / "set" / "hq")
    (tmp_path / "set" / "lq" / "manifest.tsv").unlink()

    code, out, _ = run(capsys, "train", "--data", tmp_path / "set", "--out", tmp_path / "run",
                       "--config", tmp_path / "tiny.ini", "--iters", 4, "--batch", 2, "--seed", 1)
    assert code == 0 and "iteration 4" in out
    log = (tmp_path / "run" / "loss.tsv").read_text().splitlines()
    assert log[0].split("\t")[0] == "iter" and len(log) == 5

    code, _, _ = run(capsys, "restore", "--ckpt", tmp_path / "run" / "last.ffck", "--in", tmp_path / "set" / "lq",
                     "--out", tmp_path / "pred", "--scale", 2)
    assert code == 0
    pred = read_image(tmp_path / "pred" / "face000.ppm")
    assert pred.shape == (3, 32, 32)

    code, out, _ = run(capsys, "eval", "--pred", tmp_path / "pred", "--ref", tmp_path / "hq")
    rows = out.splitlines()
    assert code == 0 and rows[0] == "name\tpsnr\tssim" and rows[-1].startswith("mean\t") and len(rows) == 5
    assert all(np.isfinite(float(v)) for v in rows[-1].split("\t")[1:])
    assert time.perf_counter() - t0 < 60


def test_resume_continues_log(tmp_path, capsys):
    (tmp_path / "tiny.ini").write_text(TINY_INI)
    run(capsys, "toyset", "--out", tmp_path / "set", "--n", 2, "--size", 16)
    args = ["--data", tmp_path / "set", "--config", tmp_path / "tiny.ini", "--batch", 1]
    assert run(capsys, "train", *args, "--out", tmp_path / "a", "--iters", 4)[0] == 0
    assert run(capsys, "train", *args, "--out", tmp_path / "b", "--iters", 4, "--milestones", "3")[0] == 0
    a = (tmp_path / "a" / "loss.tsv").read_text()
    b = (tmp_path / "b" / "loss.tsv").read_text()
    assert a == b  # default milestones for 4 iterations are {3}


def test_restore_identity_and_clamp_warning(tmp_path, capsys):
    (tmp_path / "tiny.ini").write_text(TINY_INI)
    run(capsys, "toyset", "--out", tmp_path / "faces", "--n", 1, "--size", 16, "--hq-only")
    assert run(capsys, "init", "--out", tmp_path / "id.ffck", "--identity", "--config", tmp_path / "tiny.ini")[0] == 0
    code, _, _ = run(capsys, "restore", "--ckpt", tmp_path / "id.ffck", "--in", tmp_path / "faces",
                     "--out", tmp_path / "same", "--scale", 1)
    assert code == 0
    code, out, _ = run(capsys, "eval", "--pred", tmp_path / "same", "--ref", tmp_path / "faces")
    assert float(out.splitlines()[-1].split("\t")[1]) > 40

    code, _, err = run(capsys, "restore", "--ckpt", tmp_path / "id.ffck", "--in", tmp_path / "faces",
                       "--out", tmp_path / "big.ppm", "--scale", 20)
    assert code == 0 and "clamped" in err
    assert read_image(tmp_path / "big.ppm").shape == (3, 128, 128)

    code, _, _ = run(capsys, "restore", "--ckpt", tmp_path / "id.ffck", "--in", tmp_path / "faces",
                     "--out", tmp_path / "sized", "--size", "24,40")
    assert code == 0 and read_image(tmp_path / "sized" / "face000.ppm").shape == (3, 24, 40)


def test_inspect_grid(capsys):
    code, out, _ = run(capsys, "inspect-grid", "--height", 2, "--width", 2, "--scale", 2)
    rows = out.splitlines()
    assert code == 0 and rows[0] == "x,y,x_prime,y_prime,rx,ry" and len(rows) == 17
    assert rows[1] == "0,0,-0.25,-0.25,-0.25,-0.25"


def test_gradcheck_command(capsys):
    code, out, _ = run(capsys, "gradcheck", "--module", "objective", "--seed", 2)
    assert code == 0 and "pass" in out.splitlines()[-1]


def test_usage_errors(tmp_path, capsys):
    assert run(capsys, "restore", "--ckpt", tmp_path / "none.ffck", "--in", tmp_path, "--out", tmp_path / "o",
               "--scale", 2)[0] == 1
    assert run(capsys, "inspect-grid", "--height", 2, "--width", 2, "--scale", "0.5")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "degrade", "--in", tmp_path / "missing", "--out", tmp_path / "o")[0] == 1
    (tmp_path / "bad.ini").write_text("[train]\nbatch = lots\n")
    assert run(capsys, "init", "--out", tmp_path / "x.ffck", "--config", tmp_path / "bad.ini")[0] == 1


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SCALEFORM_SEED", "5")
    run(capsys, "toyset", "--out", tmp_path / "env", "--n", 1, "--hq-only")
    run(capsys, "toyset", "--out", tmp_path / "flag", "--n", 1, "--hq-only", "--seed", 5)
    assert np.array_equal(read_image(tmp_path / "env" / "face000.ppm"), read_image(tmp_path / "flag" / "face000.ppm"))


def test_console_entry_point():
    exe = shutil.which("scaleform")
    cmd = [exe] if exe else [sys.executable, "-m", "scaleform.cli"]
    proc = subprocess.run(cmd + ["--help"], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0 and "inspect-grid" in proc.stdout
    proc = subprocess.run(cmd + ["restore"], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 1


def test_gradcheck_failure_exit_code(capsys, monkeypatch):
    import scaleform.numerics as nx
    from scaleform.numerics.tensor import make

    real = nx.gelu

    def broken_gelu(a, approximate="tanh"):
        out = real(a, approximate)
        parent = nx.as_tensor(a)
        slope = (real(parent.data + 1e-4).data - real(parent.data - 1e-4).data) / 2e-4
        return make(out.data, (parent,), lambda g: (g * slope * 1.1,))

    monkeypatch.setattr(nx, "gelu", broken_gelu)
    code, _, err = run(capsys, "gradcheck", "--module", "numerics")
    assert code == 2 and "FAIL" in err
