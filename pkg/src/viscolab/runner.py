"""Execute a parsed RunConfig: write CSV artifacts and a PASS/FAIL summary.

Artifacts, all prefixed with ``run_id``:

    homogeneous          _trajectory.csv, _energy.csv
    channel              _energy.csv, _snap_<step>.csv
    micro-macro          _micro_macro.csv
    verify-inequalities  _inequalities.csv
    every mode           _summary.txt
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _accel, tensor_core
from .channel import energy_path, run_channel, snapshot_path
from .config import RunConfig
from .diagnostics import (
    SummaryReport,
    energy_series_from_trajectory,
    free_energy_monotonicity,
    remark_identity_check,
)
from .errors import NUMERICAL_ERRORS
from .homogeneous import det_monotone_below_one, run as run_homogeneous, y_inequality_check
from .io import write_csv
from .micro_macro import compare_micro_macro
from .models import ModelKind

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

IDENTITY_TOL = 1e-10


@dataclass
class RunResult:
    status: int
    summary: SummaryReport
    artifacts: list


def _header(cfg: RunConfig) -> str:
    return f"run {cfg.run_id}  mode={cfg.mode}  seed={cfg.seed}  backend={_accel.backend()}"


def _spd_and_trace(report: SummaryReport, states, params):
    lam = np.asarray(tensor_core.min_eigenvalue(states))
    report.add("spd_preserved", bool(np.all(lam > 0)), f"min eigenvalue {lam.min():.6e}")
    if params.kind is ModelKind.FENE_P:
        tr = np.asarray(tensor_core.trace(states))
        report.add("trace_below_b", bool(np.all(tr < params.b)), f"max tr A {tr.max():.6e} < b={params.b:g}")


def _homogeneous(cfg: RunConfig, out: Path, report: SummaryReport) -> list:
    scenario = cfg.homogeneous_scenario()
    traj = run_homogeneous(scenario)
    p = scenario.params
    series = energy_series_from_trajectory(traj)
    paths = [traj.to_csv(out / f"{cfg.run_id}_trajectory.csv"), series.to_csv(energy_path(out, cfg.run_id))]
    _spd_and_trace(report, traj.states, p)
    if p.kind is ModelKind.OLDROYD_B:
        report.add("det_monotone_below_one", det_monotone_below_one(traj))
        y = y_inequality_check(traj)
        report.add("det_power_inequality", y.passed, f"min margin {y.min_margin:.6e}, slack {y.slack:.3e}")
        if len(traj) >= 3:
            dev = remark_identity_check(series)
            report.add("budget_identity", dev <= IDENTITY_TOL, f"relative deviation {dev:.3e} <= {IDENTITY_TOL:g}")
    return paths


def _channel(cfg: RunConfig, out: Path, report: SummaryReport) -> list:
    ch = cfg.channel_config()
    run = run_channel(ch)
    paths = [run.energy.to_csv(energy_path(out, cfg.run_id))]
    for step, state in zip(run.snapshot_steps, run.snapshots):
        paths.append(state.to_csv(snapshot_path(out, cfg.run_id, step)))
    p = ch.params
    _spd_and_trace(report, run.final.A, p)
    if len(run.energy) >= 3:
        mono = free_energy_monotonicity(run.energy)
        report.add("free_energy_nonincreasing", mono.passed,
                   f"violations {mono.violations}, max rate {mono.max_rate:.6e}, slack {mono.slack:.3e}")
        if p.kind is ModelKind.OLDROYD_B:
            dev = remark_identity_check(run.energy)
            report.add("budget_identity", dev <= IDENTITY_TOL, f"relative deviation {dev:.3e} <= {IDENTITY_TOL:g}")
    return paths


def _micro_macro(cfg: RunConfig, out: Path, report: SummaryReport) -> list:
    scenario = cfg.homogeneous_scenario()
    e = cfg.values["ensemble"]
    res = compare_micro_macro(scenario, e["n_particles"], cfg.seed, e["n_repeats"], e["c_dt"])
    paths = [res.to_csv(out / f"{cfg.run_id}_micro_macro.csv")]
    report.add("micro_macro_agreement", res.passed,
               f"max |Ahat - A| {res.max_error:.6e}, max z {res.max_z:.3f} <= 4, "
               f"N={res.n_particles} x {res.n_repeats}")
    return paths


def _verify(cfg: RunConfig, out: Path, report: SummaryReport) -> list:
    v = cfg.values["verify"]
    results = tensor_core.run_inequality_battery(v["n_samples"], v["dims"], v["b_values"], cfg.seed, v["slack"])
    names = ("amgm", "logsobolev", "fenep_lower", "fenep_logsobolev")
    rows = [[r.dim, r.b, r.n_samples] + [r.violations[n] for n in names] + [r.min_gaps[n] for n in names]
            for r in results]
    header = (["dim", "b", "n_samples"] + [f"violations_{n}" for n in names] + [f"min_gap_{n}" for n in names])
    path = write_csv(out / f"{cfg.run_id}_inequalities.csv", header, rows)
    for n in names:
        bad = sum(r.violations[n] for r in results)
        total = sum(r.n_samples for r in results)
        gap = min(r.min_gaps[n] for r in results)
        report.add(n, bad == 0, f"{bad} violations in {total} samples, min gap {gap:.3e}")
    return [path]


_MODES = {
    "homogeneous": _homogeneous,
    "channel": _channel,
    "micro-macro": _micro_macro,
    "verify-inequalities": _verify,
}


def execute(cfg: RunConfig, out_dir) -> RunResult:
    """Run ``cfg``; numerical failures and failed checks give exit status 2."""
    out = Path(out_dir)
    report = SummaryReport(_header(cfg))
    artifacts: list = []
    summary_path = out / f"{cfg.run_id}_summary.txt"
    try:
        out.mkdir(parents=True, exist_ok=True)
        try:
            artifacts = _MODES[cfg.mode](cfg, out, report)
        except NUMERICAL_ERRORS as exc:
            report.add("numerical_failure", False, f"{type(exc).__name__}: {exc}")
        except ValueError as exc:
            # e.g. a step size beyond the explicit stability bound
            report.add("run_rejected", False, str(exc))
        status = EXIT_OK if report.all_passed else EXIT_NUMERICAL
        artifacts.append(report.write(summary_path))
    except OSError as exc:
        report.add("io", False, str(exc))
        return RunResult(EXIT_IO, report, artifacts)
    return RunResult(status, report, artifacts)
