import os
import subprocess
import sys

import numpy as np
import pytest

from viscolab import __version__
from viscolab.cli import main
from viscolab.io import read_csv

RELAX = """[run]
mode = homogeneous
run_id = relax
[model]
weissenberg = 2
[initial]
eigenvalues = [2, 2]
[time]
dt = 0.001
t_end = 2
record_stride = 10
"""

MM = """[run]
mode = micro-macro
run_id = mm
seed = 11
[initial]
eigenvalues = [2, 0.5]
[flow]
kappa = [0, 1, 0, 0]
[time]
dt = 0.01
t_end = 0.1
record_stride = 5
[ensemble]
n_particles = 2000
n_repeats = 2
"""

VERIFY = """[run]
mode = verify-inequalities
run_id = ineq
seed = 1
[verify]
n_samples = 10000
"""

BOOM = """[run]
mode = homogeneous
run_id = boom
[model]
kind = fene-p
b = 3
[flow]
kappa = [500, 0, 0, -500]
[time]
dt = 0.1
t_end = 1
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_homogeneous_relaxation_run(tmp_path, capsys):
    cfg = write(tmp_path, "r.cfg", RELAX)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    header, data = read_csv(out / "relax_trajectory.csv")
    det = data[:, header.index("detA")]
    assert np.all(np.diff(np.abs(det - 1)) <= 0)
    summary = (out / "relax_summary.txt").read_text()
    assert "PASS  det_monotone_below_one" in summary
    assert summary.rstrip().endswith("overall: PASS")
    assert (out / "relax_energy.csv").exists()
    assert "wrote" in capsys.readouterr().out


def test_verify_mode_lists_every_inequality(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, "v.cfg", VERIFY)), "--out", str(out)]) == 0
    summary = (out / "ineq_summary.txt").read_text()
    for name in ("amgm", "logsobolev", "fenep_lower", "fenep_logsobolev"):
        assert f"PASS  {name}" in summary
    # n_samples is per (dim, b) pair: 2 dims x 4 default b values
    assert summary.count("0 violations in 80000 samples") == 4
    assert (out / "ineq_inequalities.csv").exists()


def test_corrupt_config_exits_1_without_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "[run]\nmode = homogeneous\n[model]\nepsilon = 2\n")
    out = tmp_path / "never"
    assert main(["run", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()
    assert "line 4" in capsys.readouterr().err
    cfg = write(tmp_path, "junk.cfg", "this is not a config\n")
    assert main(["run", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()


def test_bad_arguments_exit_1(tmp_path):
    cfg = write(tmp_path, "r.cfg", RELAX)
    assert main(["run", str(cfg), "--threads", "0"]) == 1
    assert main(["run", str(cfg), "--seed", "-3"]) == 1
    assert main(["frobnicate"]) == 1


def test_numerical_failure_exits_2_with_summary(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, "b.cfg", BOOM)), "--out", str(out)]) == 2
    summary = (out / "boom_summary.txt").read_text()
    assert "FAIL  numerical_failure  TraceBoundViolated" in summary
    assert summary.rstrip().endswith("overall: FAIL")


def test_io_errors_exit_3(tmp_path):
    assert main(["run", str(tmp_path / "missing.cfg")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", str(write(tmp_path, "r.cfg", RELAX)), "--out", str(blocker / "sub")]) == 3


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, "mm.cfg", MM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--out", str(a)]) == 0
    assert main(["run", str(cfg), "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_seed_override_changes_ensemble(tmp_path):
    cfg = write(tmp_path, "mm.cfg", MM)
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", "12"])
    a = (tmp_path / "a" / "mm_micro_macro.csv").read_bytes()
    b = (tmp_path / "b" / "mm_micro_macro.csv").read_bytes()
    assert a != b
    assert "seed=12" in (tmp_path / "b" / "mm_summary.txt").read_text()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path, "r.cfg", RELAX)
    monkeypatch.setenv("VISCOLAB_OUT", str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env" / "relax_summary.txt").exists()
    assert main(["run", str(cfg), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "relax_summary.txt").exists()


def test_verify_command_prints_canonical_text(tmp_path, capsys):
    cfg = write(tmp_path, "r.cfg", "# c\n[RUN]\nmode = Homogeneous\n")
    assert main(["verify", str(cfg)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("[run]\nmode = homogeneous\n")
    cfg2 = write(tmp_path, "r2.cfg", text)
    assert main(["verify", str(cfg2)]) == 0
    assert capsys.readouterr().out == text
    assert main(["verify", str(write(tmp_path, "bad.cfg", "[run]\nmode = x\n"))]) == 1


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_thread_count_does_not_change_output(tmp_path):
    cfg = write(tmp_path, "mm.cfg", MM)
    outs = []
    for k in ("1", "4"):
        d = tmp_path / f"t{k}"
        env = {key: v for key, v in os.environ.items() if key != "NUMBA_NUM_THREADS"}
        r = subprocess.run([sys.executable, "-m", "viscolab", "run", str(cfg), "--threads", k, "--out", str(d)],
                           env=env, capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        outs.append((d / "mm_micro_macro.csv").read_bytes())
    assert outs[0] == outs[1]
