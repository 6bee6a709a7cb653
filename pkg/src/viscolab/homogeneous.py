"""Spatially homogeneous driver: ``A(t)`` under a prescribed velocity gradient.

With a homogeneous flow the transport term drops out and the conformation
equation is an ODE, integrated here with classical RK4. A failing step (lost
positive definiteness or FENE-P trace bound) is retried with up to ten
successive halvings of dt before the error is raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels, tensor_core
from .io import write_csv
from .errors import SPDLost, TraceBoundViolated
from .models import ModelKind, ModelParams, conformation_rhs, stress_from_conformation, stress_rhs

STEP_SPD_TOL = 1e-10
MAX_HALVINGS = 10


# ---------------------------------------------------------------- schedules

def _traceless(k, what="kappa") -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if abs(np.trace(k)) > 1e-12:
        raise ValueError(f"{what} must be traceless")
    return k


@dataclass(frozen=True)
class ConstantKappa:
    value: np.ndarray
    switch_times: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "value", _traceless(np.asarray(self.value, dtype=float)))

    @property
    def dim(self) -> int:
        return self.value.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        return self.value


@dataclass(frozen=True)
class PiecewiseKappa:
    """``values[i]`` applies on ``[times[i], times[i+1])``; ``times[0]`` must be 0."""

    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(_traceless(v, f"kappa segment {i}") for i, v in enumerate(self.values))
        if not times or times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("switch times must start at 0 and increase strictly")
        if len(times) != len(values):
            raise ValueError("need one kappa per switch time")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values[0].shape[0]

    @property
    def switch_times(self) -> tuple:
        return self.times[1:]

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(i, 0)]


@dataclass(frozen=True)
class SinusoidalKappa:
    """``mean + amplitude * sin(2 pi frequency t + phase)``."""

    mean: np.ndarray
    amplitude: np.ndarray
    frequency: float
    phase: float = 0.0
    switch_times: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mean", _traceless(self.mean, "kappa mean"))
        object.__setattr__(self, "amplitude", _traceless(self.amplitude, "kappa amplitude"))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        return self.mean + self.amplitude * math.sin(2 * math.pi * self.frequency * t + self.phase)


def as_schedule(kappa):
    if callable(kappa) and hasattr(kappa, "switch_times"):
        return kappa
    return ConstantKappa(np.asarray(kappa, dtype=float))


# ---------------------------------------------------------------- scenario / trajectory

@dataclass(frozen=True)
class HomogeneousScenario:
    params: ModelParams
    A0: np.ndarray
    kappa: object = None
    dt: float = 1e-3
    t_end: float = 1.0
    record_stride: int = 1

    def __post_init__(self):
        a0 = np.array(self.A0, dtype=float)
        a0 = 0.5 * (a0 + a0.T)
        object.__setattr__(self, "A0", a0)
        kappa = self.kappa if self.kappa is not None else np.zeros((self.params.dim, self.params.dim))
        object.__setattr__(self, "kappa", as_schedule(kappa))
        if a0.shape != (self.params.dim, self.params.dim) or self.kappa.dim != self.params.dim:
            raise ValueError("A0 and kappa must match params.dim")
        tensor_core.require_spd(a0)
        if self.params.kind is ModelKind.FENE_P and np.trace(a0) >= self.params.b:
            raise TraceBoundViolated("initial tr A0 must be below b")
        if not self.dt > 0 or not self.t_end > 0 or self.dt > self.t_end:
            raise ValueError("need 0 < dt <= t_end")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    params: ModelParams
    kappa: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times.setflags(write=False)
        self.states.setflags(write=False)

    def __len__(self):
        return self.times.size

    @property
    def record_interval(self) -> float:
        return float(self.times[1] - self.times[0])

    @cached_property
    def det(self) -> np.ndarray:
        return np.asarray(tensor_core.det(self.states))

    @cached_property
    def trace(self) -> np.ndarray:
        return np.asarray(tensor_core.trace(self.states))

    @cached_property
    def stress(self) -> np.ndarray:
        return stress_from_conformation(self.params, self.states)

    @cached_property
    def entropy(self) -> np.ndarray:
        if self.params.kind is ModelKind.FENE_P:
            return np.asarray(tensor_core.fenep_entropy_density(self.states, self.params.b, check=False))
        return np.asarray(tensor_core.oldroyd_entropy_density(self.states, check=False))

    @cached_property
    def fisher(self) -> np.ndarray:
        if self.params.kind is ModelKind.FENE_P:
            return np.asarray(tensor_core.fenep_fisher_density(self.states, self.params.b, check=False))
        return np.asarray(tensor_core.oldroyd_fisher_density(self.states, check=False))

    def kappa_at(self, t) -> np.ndarray:
        sched = self.kappa if self.kappa is not None else ConstantKappa(np.zeros((self.params.dim,) * 2))
        return np.array([sched(float(s)) for s in np.atleast_1d(t)])

    def csv_header(self) -> list[str]:
        d = self.params.dim
        iu = list(zip(*np.triu_indices(d)))
        return (["t"] + [f"A{i + 1}{j + 1}" for i, j in iu] + ["detA", "trA"]
                + [f"tau{i + 1}{j + 1}" for i, j in iu] + ["entropy", "fisher"])

    def csv_rows(self):
        iu = np.triu_indices(self.params.dim)
        for k in range(len(self)):
            yield ([self.times[k]] + list(self.states[k][iu]) + [self.det[k], self.trace[k]]
                   + list(self.stress[k][iu]) + [self.entropy[k], self.fisher[k]])

    def to_csv(self, path) -> Path:
        return write_csv(path, self.csv_header(), self.csv_rows())


# ---------------------------------------------------------------- stepping

def step(A, kappa, dt: float, params: ModelParams, spd_tol: float = STEP_SPD_TOL) -> np.ndarray:
    """One classical RK4 step of the conformation equation with constant ``kappa``."""
    a = np.asarray(A, dtype=float)
    k = np.asarray(kappa, dtype=float)
    r1 = conformation_rhs(params, a, k)
    r2 = conformation_rhs(params, a + 0.5 * dt * r1, k)
    r3 = conformation_rhs(params, a + 0.5 * dt * r2, k)
    r4 = conformation_rhs(params, a + dt * r3, k)
    new = a + dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
    new = 0.5 * (new + new.T)
    if not tensor_core.is_spd(new, spd_tol):
        raise SPDLost()
    if params.kind is ModelKind.FENE_P and np.trace(new) >= params.b * (1.0 - kernels.FENEP_GUARD):
        raise TraceBoundViolated()
    return new


def _stage_kappas(schedule, t0: float, dt: float, n: int, dim: int) -> np.ndarray:
    if isinstance(schedule, ConstantKappa):
        return np.broadcast_to(schedule.value, (n, 3, dim, dim)).copy()
    out = np.empty((n, 3, dim, dim))
    for k in range(n):
        t = t0 + k * dt
        out[k, 0] = schedule(t)
        out[k, 1] = schedule(t + 0.5 * dt)
        out[k, 2] = schedule(t + dt)
    return out


def _kernel_b(params: ModelParams) -> float:
    return float(params.b) if params.kind is ModelKind.FENE_P else 0.0


def _retry(A, schedule, t, dt, params, depth):
    """Cover ``[t, t + dt]`` with two half steps, recursing on failure."""
    if depth > MAX_HALVINGS:
        raise SPDLost(time=t)
    h = 0.5 * dt
    a = A
    for sub in range(2):
        ts = t + sub * h
        kst = _stage_kappas(schedule, ts, h, 1, params.dim)
        trial = a.copy()
        status, _ = kernels.rk4_segment(trial, kst, 0, h, params.weissenberg, params.kind.code,
                                        _kernel_b(params), STEP_SPD_TOL, 1,
                                        np.empty((2, params.dim, params.dim)))
        if status == kernels.OK:
            a = trial
        else:
            a = _retry(a, schedule, ts, h, params, depth + 1)
    return a


def run(scenario: HomogeneousScenario) -> Trajectory:
    """Integrate from 0 to ``t_end`` recording every ``record_stride`` steps."""
    p = scenario.params
    n = scenario.n_steps
    stride = scenario.record_stride
    dt = scenario.dt
    kst = _stage_kappas(scenario.kappa, 0.0, dt, n, p.dim)
    out = np.empty((n // stride + 1, p.dim, p.dim))
    A = scenario.A0.copy()
    out[0] = A
    b = _kernel_b(p)
    k = 0
    halvings = 0
    while k < n:
        status, k = kernels.rk4_segment(A, kst, k, dt, p.weissenberg, p.kind.code, b,
                                        STEP_SPD_TOL, stride, out)
        if status == kernels.OK:
            break
        try:
            A = _retry(A, scenario.kappa, k * dt, dt, p, 1)
        except SPDLost as exc:
            if status == kernels.TRACE_BOUND:
                raise TraceBoundViolated(time=k * dt) from exc
            raise SPDLost(time=k * dt) from exc
        halvings += 1
        k += 1
        if k % stride == 0:
            out[k // stride] = A
    times = np.arange(out.shape[0]) * (stride * dt)
    return Trajectory(times, out, p, scenario.kappa, {"retried_steps": halvings, "dt": dt})


def run_stress_form(scenario: HomogeneousScenario) -> Trajectory:
    """Integrate the Oldroyd-B stress equation directly, mapping back to ``A`` for output."""
    p = scenario.params
    dt = scenario.dt
    tau = p.epsilon / p.weissenberg * (scenario.A0 - np.eye(p.dim))
    sched = scenario.kappa
    recs = [tau.copy()]
    for k in range(scenario.n_steps):
        t = k * dt
        k0, kh, k1 = sched(t), sched(t + 0.5 * dt), sched(t + dt)
        r1 = stress_rhs(p, tau, k0)
        r2 = stress_rhs(p, tau + 0.5 * dt * r1, kh)
        r3 = stress_rhs(p, tau + 0.5 * dt * r2, kh)
        r4 = stress_rhs(p, tau + dt * r3, k1)
        tau = tau + dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        tau = 0.5 * (tau + tau.T)
        if (k + 1) % scenario.record_stride == 0:
            recs.append(tau.copy())
    taus = np.array(recs)
    states = p.weissenberg / p.epsilon * taus + np.eye(p.dim)
    times = np.arange(len(recs)) * (scenario.record_stride * dt)
    return Trajectory(times, states, p, sched, {"dt": dt, "form": "stress"})


# ---------------------------------------------------------------- oracles and checks

def steady_shear_conformation(weissenberg: float, shear_rate: float, dim: int = 2) -> np.ndarray:
    """Oldroyd-B fixed point under ``u = (shear_rate * y, 0)``."""
    wg = weissenberg * shear_rate
    a = np.eye(dim)
    a[0, 0] = 1.0 + 2.0 * wg * wg
    a[0, 1] = a[1, 0] = wg
    return a


def relaxation_conformation(A0, weissenberg: float, t) -> np.ndarray:
    """Closed-form Oldroyd-B relaxation ``I + exp(-t/We)(A0 - I)`` at zero flow."""
    a0 = np.asarray(A0, dtype=float)
    decay = np.exp(-np.asarray(t, dtype=float) / weissenberg)
    return np.eye(a0.shape[0]) + decay[..., None, None] * (a0 - np.eye(a0.shape[0]))


def centered_derivative(times, values):
    """Second-order centred differences at interior samples of a uniform grid."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    return (v[2:] - v[:-2]) / (t[2:] - t[:-2])


def _away_from_switches(traj: Trajectory) -> np.ndarray:
    t = traj.times[1:-1]
    mask = np.ones(t.size, dtype=bool)
    h = traj.record_interval
    for ts in getattr(traj.kappa, "switch_times", ()):
        mask &= np.abs(t - ts) > 1.5 * h
    return mask


def det_dynamics_residual(traj: Trajectory, params: ModelParams | None = None) -> float:
    """Max over interior records of ``|d/dt ln det A - tr(A^-1 - I)/We|`` by centred differences."""
    p = params or traj.params
    if p.kind is not ModelKind.OLDROYD_B:
        raise ValueError("the log-det identity is stated for Oldroyd-B trajectories")
    if len(traj) < 3:
        return 0.0
    lhs = centered_derivative(traj.times, np.log(traj.det))
    inv_tr = np.asarray(tensor_core.trace(tensor_core.inverse(traj.states[1:-1])))
    rhs = (inv_tr - p.dim) / p.weissenberg
    res = np.abs(lhs - rhs)[_away_from_switches(traj)]
    return float(res.max()) if res.size else 0.0


@dataclass
class YInequalityCheck:
    min_margin: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.min_margin >= -self.slack


def y_inequality_check(traj: Trajectory, params: ModelParams | None = None) -> YInequalityCheck:
    """Check ``We dy/dt >= 1 - y`` for ``y = (det A)^(1/d)`` on the recorded grid.

    The slack is the leading centred-difference error ``We |y'''| h^2 / 6``,
    with ``y'''`` estimated from third differences, doubled, plus 1e-12.
    """
    p = params or traj.params
    y = traj.det ** (1.0 / p.dim)
    h = traj.record_interval
    dy = centered_derivative(traj.times, y)
    margin = p.weissenberg * dy - (1.0 - y[1:-1])
    keep = _away_from_switches(traj)
    if y.size >= 4:
        third = np.abs(np.diff(y, 3)) / h**3
        y3 = float(third[np.isfinite(third)].max()) if third.size else 0.0
    else:
        y3 = 0.0
    slack = 2.0 * p.weissenberg * y3 * h * h / 6.0 + 1e-12
    m = margin[keep]
    return YInequalityCheck(float(m.min()) if m.size else 0.0, slack)


def det_monotone_below_one(traj: Trajectory, slack: float = 1e-10) -> bool:
    """While ``det A < 1``, ``det A`` must not decrease between records."""
    d = traj.det
    below = d[:-1] < 1.0
    return bool(np.all(np.diff(d)[below] >= -slack))


def random_traceless(dim: int, max_norm: float, rng: np.random.Generator) -> np.ndarray:
    k = rng.standard_normal((dim, dim))
    k -= np.trace(k) / dim * np.eye(dim)
    norm = np.linalg.norm(k, 2)
    return k * (rng.uniform(0.0, max_norm) / norm if norm > 0 else 0.0)


def random_scenario(rng: np.random.Generator, params_kind="oldroyd-b", dim: int = 2, b: float | None = None,
                    t_end: float = 2.0, det_range=None, record_stride: int = 10) -> HomogeneousScenario:
    """Random scenario with ``||kappa||_2 <= 2``, ``We in [0.1, 10]`` and a safe dt.

    ``det_range=(lo, hi)`` rescales ``A0`` so that ``det A0`` is uniform in it.
    """
    kind = ModelKind.parse(params_kind)
    we = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
    kappa = random_traceless(dim, 2.0, rng)
    if kind is ModelKind.FENE_P:
        b = float(b if b is not None else rng.choice([5.0, 10.0, 50.0, 100.0]))
        a0, _ = tensor_core.random_spd_trace_bounded(dim, b, rng, 1, fill=(0.05, 0.9))
        a0 = a0[0]
    else:
        a0 = tensor_core.random_spd(dim, (0.2, 5.0), rng).matrix
    if det_range is not None:
        target = rng.uniform(*det_range)
        a0 = a0 * (target / tensor_core.det(a0)) ** (1.0 / dim)
    knorm = np.linalg.norm(kappa, 2)
    dt_max = 0.05 * min(we, 1.0 / knorm if knorm > 0 else np.inf)
    n = max(int(math.ceil(t_end / dt_max)), 1)
    n = int(math.ceil(n / record_stride) * record_stride)
    params = ModelParams(1.0, we, 0.5, kind, b, dim)
    return HomogeneousScenario(params, a0, kappa, t_end / n, t_end, record_stride)
