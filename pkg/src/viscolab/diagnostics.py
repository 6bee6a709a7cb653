"""Energy, entropy and dissipation functionals and their discrete budgets.

Fields are integrated with the trapezoidal rule on the channel grid; a
homogeneous state is treated as a single material point with ``|D| = 1``.
Budgets are evaluated on recorded series with one centred-difference operator
everywhere, which makes the identity between the classical, entropy and
log-determinant budgets hold exactly up to round-off.

EnergySeries CSV column order::

    t, kinetic, classical_energy, oldroyd_free_energy, fenep_free_energy,
    dissipation_velocity, dissipation_entropy, classical_dissipation,
    log_det_integral, inv_trace_integral, stress_power
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensor_core
from .errors import NotSPD, PoorFitWarning, PreconditionUnmet, SignalTooSmall, TooFewSnapshots
from .io import write_csv
from .models import ModelKind, ModelParams, stress_from_conformation, trace_room

DISSIPATION_SLACK = 1e-12


# ---------------------------------------------------------------- quadrature helpers

def trapezoid(values, h: float | None):
    """Trapezoidal integral over the leading axis; ``h=None`` means a single point."""
    v = np.asarray(values, dtype=float)
    if h is None:
        return float(v) if v.ndim == 0 else v
    return h * (0.5 * v[0] + v[1:-1].sum(axis=0) + 0.5 * v[-1])


def wall_normal_gradient(u, h: float) -> np.ndarray:
    """``du/dy``: centred in the interior, one-sided second order at both walls."""
    u = np.asarray(u, dtype=float)
    g = np.empty_like(u)
    g[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    g[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    g[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return g


def kinetic_energy(u, h: float) -> float:
    """``(1/2) * integral of u^2`` (not yet scaled by Re)."""
    return float(trapezoid(0.5 * np.asarray(u, dtype=float) ** 2, h))


def _spd_or_raise(A):
    ok = np.asarray(tensor_core.is_spd(A))
    if not np.all(ok):
        where = int(np.argmin(ok)) if ok.ndim else None
        raise NotSPD("conformation field is not SPD", index=where)


def _velocity_terms(params: ModelParams, u, h):
    if u is None:
        return 0.0, 0.0
    kin = params.reynolds * kinetic_energy(u, h)
    diss = (1.0 - params.epsilon) * float(trapezoid(wall_normal_gradient(u, h) ** 2, h))
    return kin, diss


def oldroyd_free_energy(params: ModelParams, A, u=None, h: float | None = None) -> float:
    """``Re/2 int u^2 + eps/(2 We) int (-ln det A - d + tr A)``."""
    _spd_or_raise(A)
    kin, _ = _velocity_terms(params, u, h)
    ent = tensor_core.oldroyd_entropy_density(A, check=False)
    return kin + params.epsilon / (2.0 * params.weissenberg) * float(trapezoid(ent, h))


def oldroyd_dissipation(params: ModelParams, A, u=None, h: float | None = None) -> float:
    """``(1-eps) int |du/dy|^2 + eps/(2 We^2) int tr((I - A^-1)^2 A)``."""
    _spd_or_raise(A)
    _, diss = _velocity_terms(params, u, h)
    fis = tensor_core.oldroyd_fisher_density(A, check=False)
    return diss + params.epsilon / (2.0 * params.weissenberg**2) * float(trapezoid(fis, h))


def fenep_free_energy(params: ModelParams, A, u=None, h: float | None = None, shifted: bool = False) -> float:
    """FENE-P free energy; ``shifted`` subtracts its equilibrium minimum."""
    _spd_or_raise(A)
    kin, _ = _velocity_terms(params, u, h)
    ent = np.asarray(tensor_core.fenep_entropy_density(A, params.b, check=False))
    if shifted:
        ent = ent - tensor_core.fenep_entropy_minimum(params.b, params.dim)
    return kin + params.epsilon / (2.0 * params.weissenberg) * float(trapezoid(ent, h))


def fenep_free_energy_offset(params: ModelParams, domain_size: float = 1.0) -> float:
    """``eps/(2 We) |D| (-(b+d) ln(b/(b+d)))``."""
    return params.epsilon / (2.0 * params.weissenberg) * domain_size * tensor_core.fenep_entropy_minimum(
        params.b, params.dim)


# ---------------------------------------------------------------- reports

@dataclass(frozen=True)
class EnergyReport:
    t: float
    kinetic: float
    classical_energy: float
    oldroyd_free_energy: float
    fenep_free_energy: float
    dissipation_velocity: float
    dissipation_entropy: float
    classical_dissipation: float
    log_det_integral: float
    inv_trace_integral: float
    stress_power: float
    budget_residuals: dict = field(default_factory=dict, compare=False)


COLUMNS = tuple(f.name for f in fields(EnergyReport) if f.name != "budget_residuals")


def energy_report(params: ModelParams, t: float, A, u=None, h: float | None = None, kappa=None) -> EnergyReport:
    """Evaluate every functional on one state.

    ``u``/``h`` give a channel field (``A`` then has shape ``(ny, d, d)``);
    without them ``A`` is a single homogeneous state and ``kappa`` the imposed
    velocity gradient, whose stress power enters the budgets.
    """
    a = np.asarray(A, dtype=float)
    _spd_or_raise(a)
    we, eps, dim = params.weissenberg, params.epsilon, a.shape[-1]
    kin, diss_u = _velocity_terms(params, u, h)
    tr = np.asarray(tensor_core.trace(a))
    logdet = np.log(tensor_core.det(a))
    tr_inv = np.asarray(tensor_core.inverse_trace(a))
    old_ent = float(trapezoid(-logdet - dim + tr, h))
    if params.kind is ModelKind.FENE_P:
        z = np.asarray(trace_room(params, a))
        fen_ent = float(trapezoid(-logdet - params.b * np.log(z), h))
        fisher = float(trapezoid(tr / z**2 - 2 * dim / z + tr_inv, h))
        fenep_f = kin + eps / (2 * we) * fen_ent
    else:
        z = 1.0
        fisher = float(trapezoid(tr - 2 * dim + tr_inv, h))
        fenep_f = math.nan
    tr_tau = eps / we * float(trapezoid(tr / z - dim, h))
    power = 0.0
    if u is None and kappa is not None:
        power = float(np.sum(stress_from_conformation(params, a) * np.asarray(kappa, dtype=float)))
    return EnergyReport(
        t=float(t),
        kinetic=kin,
        classical_energy=kin + 0.5 * tr_tau,
        oldroyd_free_energy=kin + eps / (2 * we) * old_ent,
        fenep_free_energy=fenep_f,
        dissipation_velocity=diss_u,
        dissipation_entropy=eps / (2 * we * we) * fisher,
        classical_dissipation=tr_tau / (2 * we),
        log_det_integral=float(trapezoid(logdet, h)),
        inv_trace_integral=float(trapezoid(tr_inv - dim, h)),
        stress_power=power,
    )


class EnergySeries:
    """Column-wise time series of EnergyReport values."""

    def __init__(self, params: ModelParams, reports=()):
        self.params = params
        self._rows = list(reports)
        self._cols = None

    def append(self, report: EnergyReport):
        self._rows.append(report)
        self._cols = None

    def __len__(self):
        return len(self._rows)

    def __getitem__(self, k) -> EnergyReport:
        return self._rows[k]

    def reports(self):
        return iter(self._rows)

    def column(self, name: str) -> np.ndarray:
        if self._cols is None:
            self._cols = {c: np.array([getattr(r, c) for r in self._rows], dtype=float) for c in COLUMNS}
        return self._cols[name]

    def __getattr__(self, name):
        if name in COLUMNS:
            return self.column(name)
        raise AttributeError(name)

    @property
    def free_energy(self) -> np.ndarray:
        if self.params.kind is ModelKind.FENE_P:
            return self.column("fenep_free_energy")
        return self.column("oldroyd_free_energy")

    def to_csv(self, path):
        rows = ([getattr(r, c) for c in COLUMNS] for r in self._rows)
        return write_csv(path, list(COLUMNS), rows)


def energy_series_from_trajectory(traj) -> EnergySeries:
    """Homogeneous trajectory -> EnergySeries, including imposed stress power."""
    series = EnergySeries(traj.params)
    kap = traj.kappa_at(traj.times)
    for k in range(len(traj)):
        series.append(energy_report(traj.params, traj.times[k], traj.states[k], kappa=kap[k]))
    return series


# ---------------------------------------------------------------- budgets

def _rate(series: EnergySeries, name: str) -> np.ndarray:
    if len(series) < 3:
        raise TooFewSnapshots(f"need at least 3 snapshots, got {len(series)}")
    t = series.t
    dts = np.diff(t)
    if np.max(np.abs(dts - dts[0])) > 1e-9 * max(abs(dts[0]), 1.0):
        raise ValueError("budgets need a uniform recording interval")
    v = series.column(name)
    return (v[2:] - v[:-2]) / (t[2:] - t[:-2])


def _mid(series: EnergySeries, name: str) -> np.ndarray:
    return series.column(name)[1:-1]


def classical_budget(series: EnergySeries) -> np.ndarray:
    """``d/dt(Re/2 int u^2 + 1/2 int tr tau) + (1-eps) int |du|^2 + 1/(2We) int tr tau - P``."""
    return (_rate(series, "classical_energy") + _mid(series, "dissipation_velocity")
            + _mid(series, "classical_dissipation") - _mid(series, "stress_power"))


def entropy_budget(series: EnergySeries) -> np.ndarray:
    """Oldroyd-B free-energy budget ``dF/dt + D - P``."""
    if series.params.kind is not ModelKind.OLDROYD_B:
        raise ValueError("entropy_budget expects an Oldroyd-B series; use fenep_budget")
    return (_rate(series, "oldroyd_free_energy") + _mid(series, "dissipation_velocity")
            + _mid(series, "dissipation_entropy") - _mid(series, "stress_power"))


def fenep_budget(series: EnergySeries, b: float | None = None) -> np.ndarray:
    """FENE-P free-energy budget ``dF/dt + D - P``."""
    p = series.params
    if p.kind is not ModelKind.FENE_P:
        raise ValueError("fenep_budget expects a FENE-P series")
    if b is not None and b != p.b:
        raise ValueError(f"series was computed with b={p.b}, not {b}")
    return (_rate(series, "fenep_free_energy") + _mid(series, "dissipation_velocity")
            + _mid(series, "dissipation_entropy") - _mid(series, "stress_power"))


def jacobi_budget(series: EnergySeries) -> np.ndarray:
    """Integrated log-det identity: ``d/dt int ln det A - (1/We) int tr(A^-1 - I)``."""
    return _rate(series, "log_det_integral") - _mid(series, "inv_trace_integral") / series.params.weissenberg


def free_energy_budget(series: EnergySeries) -> np.ndarray:
    if series.params.kind is ModelKind.FENE_P:
        return fenep_budget(series)
    return entropy_budget(series)


def remark_identity_check(series: EnergySeries, params: ModelParams | None = None) -> float:
    """Max relative deviation of ``entropy - classical + eps/(2We) * jacobi`` residuals.

    Normalised by the largest magnitude among the assembled budget terms.
    """
    p = params or series.params
    if p.kind is not ModelKind.OLDROYD_B:
        raise ValueError("the identity links Oldroyd-B budgets")
    c = p.epsilon / (2.0 * p.weissenberg)
    dev = entropy_budget(series) - classical_budget(series) + c * jacobi_budget(series)
    terms = [
        _rate(series, "classical_energy"), _rate(series, "oldroyd_free_energy"),
        c * _rate(series, "log_det_integral"), _mid(series, "dissipation_velocity"),
        _mid(series, "dissipation_entropy"), _mid(series, "classical_dissipation"),
        c * _mid(series, "inv_trace_integral") / p.weissenberg, _mid(series, "stress_power"),
    ]
    scale = max(float(np.max(np.abs(x))) for x in terms)
    if scale == 0.0:
        return float(np.max(np.abs(dev)))
    return float(np.max(np.abs(dev)) / scale)


@dataclass
class MonotonicityResult:
    violations: int
    slack: float
    max_rate: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def free_energy_monotonicity(series: EnergySeries) -> MonotonicityResult:
    """Count steps where ``(F_{n+1} - F_n)/dt - P`` exceeds the measured budget bound.

    The slack is ``max |budget residual|``, a rate that shrinks with the step size.
    """
    f = series.free_energy
    t = series.t
    rates = np.diff(f) / np.diff(t)
    power = series.stress_power
    rates = rates - 0.5 * (power[1:] + power[:-1])
    slack = float(np.max(np.abs(free_energy_budget(series))))
    return MonotonicityResult(int(np.sum(rates > slack)), slack, float(rates.max()))


# ---------------------------------------------------------------- decay fits

@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float


def fit_decay_rate(times, values, window: float = 0.5, floor: float = 1e-13, min_r2: float = 0.98) -> DecayFit:
    """Least-squares fit of ``ln v`` against ``t`` over the last ``window`` fraction.

    Returns the decay rate (minus the slope, positive for decay). Warns with
    PoorFitWarning when r^2 < ``min_r2``.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 10:
        raise ValueError("need at least 10 samples to fit a decay rate")
    start = int(math.floor((1.0 - window) * t.size))
    t, v = t[start:], v[start:]
    if np.any(v <= floor):
        raise SignalTooSmall(f"series drops below {floor:g} inside the fit window")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    ss_res = float(np.sum((y - (slope * t + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    if ss_tot == 0.0:
        slope = 0.0
    if r2 < min_r2:
        warnings.warn(f"exponential fit r^2={r2:.4f} below {min_r2}", PoorFitWarning, stacklevel=2)
    return DecayFit(float(-slope), float(r2))


# ---------------------------------------------------------------- det A > 1 propagation

@dataclass
class Lemma1Result:
    passed: bool
    first_violation: tuple | None = None
    min_det: float = math.nan
    min_trace_stress: float = math.nan


def lemma1_field_check(times, A_fields, params: ModelParams) -> Lemma1Result:
    """Check ``det A > 1`` and ``tr tau > 0`` at every recorded time and point.

    ``A_fields`` has shape ``(n_t, d, d)`` or ``(n_t, n_points, d, d)``.
    Raises PreconditionUnmet unless ``det A > 1`` everywhere at the first record.
    """
    if params.kind is not ModelKind.OLDROYD_B:
        raise ValueError("the determinant propagation check is stated for Oldroyd-B")
    a = np.asarray(A_fields, dtype=float)
    if a.ndim == 3:
        a = a[:, None]
    dets = np.asarray(tensor_core.det(a))
    if np.any(dets[0] <= 1.0):
        raise PreconditionUnmet("initial det A must exceed 1 at every point")
    tr_tau = np.trace(stress_from_conformation(params, a), axis1=-2, axis2=-1)
    bad = (dets <= 1.0) | (tr_tau <= 0.0)
    times = np.asarray(times, dtype=float)
    first = None
    if np.any(bad):
        k, j = np.argwhere(bad)[0]
        first = (float(times[k]), int(j))
    return Lemma1Result(first is None, first, float(dets.min()), float(tr_tau.min()))


# ---------------------------------------------------------------- summary

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


class SummaryReport:
    """Ordered PASS/FAIL lines for a run."""

    def __init__(self, title: str):
        self.title = title
        self.checks: list[Check] = []

    def add(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = [self.title]
        for c in self.checks:
            out.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name}" + (f"  {c.detail}" if c.detail else ""))
        out.append(f"overall: {'PASS' if self.all_passed else 'FAIL'}")
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.text(), encoding="utf-8")
        return path
