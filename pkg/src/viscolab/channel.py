"""Plane channel ``y in [0, 1]`` with no-slip walls and ``u = (u(y, t), 0)``.

In this geometry advection vanishes, the pressure gradient drops out and the
momentum equation couples to the conformation only through the shear stress:

    Re du/dt = (1 - eps) d2u/dy2 + d tau_xy / dy

Velocity diffusion is backward Euler (tridiagonal solve), the stress
divergence is explicit, and the conformation at each grid point is advanced by
an explicit midpoint step with ``kappa = [[0, du/dy], [0, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import kernels, tensor_core
from .diagnostics import EnergySeries, energy_report, wall_normal_gradient
from .errors import SPDLost, TraceBoundViolated
from .io import write_csv
from .models import ModelKind, ModelParams, stress_from_conformation

RUNTIME_SPD_TOL = 1e-10


def grid(ny: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, ny)


@dataclass(frozen=True)
class ChannelState:
    u: np.ndarray
    A: np.ndarray
    params: ModelParams
    t: float = 0.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        a = np.array(self.A, dtype=float)
        if u.ndim != 1 or u.size < 5:
            raise ValueError("u must be a 1-D field with at least 5 points")
        if a.shape != (u.size, 2, 2):
            raise ValueError(f"A must have shape ({u.size}, 2, 2)")
        if self.params.dim != 2:
            raise ValueError("the channel uses a 2-D conformation tensor")
        if u[0] != 0.0 or u[-1] != 0.0:
            raise ValueError("no-slip: u must vanish at both walls")
        u.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "A", a)

    @property
    def ny(self) -> int:
        return self.u.size

    @property
    def h(self) -> float:
        return 1.0 / (self.ny - 1)

    @property
    def y(self) -> np.ndarray:
        return grid(self.ny)

    @property
    def dudy(self) -> np.ndarray:
        return wall_normal_gradient(self.u, self.h)

    @property
    def stress(self) -> np.ndarray:
        return stress_from_conformation(self.params, self.A)

    def validate(self, spd_tol: float = RUNTIME_SPD_TOL):
        ok = np.asarray(tensor_core.is_spd(self.A, spd_tol))
        if not np.all(ok):
            raise SPDLost(index=int(np.argmin(ok)), time=self.t)
        if self.params.kind is ModelKind.FENE_P:
            tr = self.A[:, 0, 0] + self.A[:, 1, 1]
            if np.any(tr >= self.params.b):
                raise TraceBoundViolated(index=int(np.argmax(tr >= self.params.b)), time=self.t)
        return self

    def csv_rows(self):
        tau = self.stress
        for j, yj in enumerate(self.y):
            a = self.A[j]
            yield [yj, self.u[j], a[0, 0], a[0, 1], a[1, 1], tau[j, 0, 0], tau[j, 0, 1], tau[j, 1, 1]]

    def to_csv(self, path):
        header = ["y", "u", "A11", "A12", "A22", "tau11", "tau12", "tau22"]
        return write_csv(path, header, self.csv_rows())


# ---------------------------------------------------------------- initial fields

def sine_velocity(ny: int, amplitude: float) -> np.ndarray:
    u = amplitude * np.sin(np.pi * grid(ny))
    u[0] = u[-1] = 0.0
    return u


def random_spd_field(y, rng: np.random.Generator, eig_range=(1.1, 3.0), n_modes: int = 3) -> np.ndarray:
    """Smooth random SPD field ``Q(theta(y)) diag(l1(y), l2(y)) Q^T``.

    Eigenvalues and angle are random finite cosine series, so the same seed
    gives the same field on any grid. Eigenvalues stay inside ``eig_range``.
    Every entry has zero slope at the walls: with ``u'' = 0`` there as well,
    the initial data satisfy the no-slip momentum balance at t = 0 and the
    solution has no startup boundary layer.
    """
    y = np.asarray(y, dtype=float)
    lo, hi = eig_range
    m = np.arange(1, n_modes + 1)

    def series():
        amp = rng.standard_normal(n_modes) / m
        s = np.cos(np.pi * np.outer(y, m)) @ amp
        return s / np.sum(np.abs(amp))

    lam1 = lo + (hi - lo) * 0.5 * (1.0 + series())
    lam2 = lo + (hi - lo) * 0.5 * (1.0 + series())
    theta = np.pi * series()
    c, s = np.cos(theta), np.sin(theta)
    a = np.empty((y.size, 2, 2))
    a[:, 0, 0] = c * c * lam1 + s * s * lam2
    a[:, 1, 1] = s * s * lam1 + c * c * lam2
    a[:, 0, 1] = a[:, 1, 0] = c * s * (lam1 - lam2)
    return a


# ---------------------------------------------------------------- operators

def channel_rhs_velocity(state: ChannelState) -> np.ndarray:
    """``(1/Re)[(1-eps) u'' + d tau_xy/dy]`` at interior points."""
    p = state.params
    h = state.h
    u = state.u
    lap = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    dtau = wall_normal_gradient(state.stress[:, 0, 1], h)[1:-1]
    return ((1.0 - p.epsilon) * lap + dtau) / p.reynolds


@lru_cache(maxsize=32)
def _diffusion_matrix(n: int, dt: float, reynolds: float, nu: float, h: float):
    off = -nu / (h * h)
    lower = np.full(n, off)
    upper = np.full(n, off)
    lower[0] = 0.0
    upper[-1] = 0.0
    diag = np.full(n, reynolds / dt + 2.0 * nu / (h * h))
    for arr in (lower, diag, upper):
        arr.setflags(write=False)
    return lower, diag, upper


def max_stable_dt(state: ChannelState) -> float:
    """``0.05 min(We, 1/max|du/dy|)``, the explicit conformation step bound."""
    g = float(np.max(np.abs(state.dudy)))
    return 0.05 * min(state.params.weissenberg, 1.0 / g if g > 0 else np.inf)


def step_channel(state: ChannelState, dt: float, freeze_conformation: bool = False,
                 check_dt: bool = True) -> ChannelState:
    """Advance velocity (implicit diffusion) then conformation (explicit midpoint)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if check_dt and not freeze_conformation and dt > max_stable_dt(state) * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the conformation step bound {max_stable_dt(state):.3g}")
    p = state.params
    h = state.h
    n = state.ny - 2
    tau_xy = stress_from_conformation(p, state.A)[:, 0, 1]
    dtau = wall_normal_gradient(tau_xy, h)[1:-1]
    lower, diag, upper = _diffusion_matrix(n, float(dt), p.reynolds, 1.0 - p.epsilon, h)
    rhs = p.reynolds / dt * state.u[1:-1] + dtau
    u_new = np.zeros(state.ny)
    u_new[1:-1] = kernels.thomas(lower, diag, upper, rhs)
    t_new = state.t + dt
    if freeze_conformation:
        return ChannelState(u_new, state.A, p, t_new)
    a_new = np.array(state.A)
    status = np.zeros(state.ny, dtype=np.int64)
    b = float(p.b) if p.kind is ModelKind.FENE_P else 0.0
    kernels.channel_rk2(a_new, wall_normal_gradient(u_new, h), float(dt), p.weissenberg, p.kind.code, b,
                        RUNTIME_SPD_TOL, status)
    if np.any(status != kernels.OK):
        j = int(np.argmax(status != kernels.OK))
        if status[j] == kernels.TRACE_BOUND:
            raise TraceBoundViolated(index=j, time=t_new)
        raise SPDLost(index=j, time=t_new)
    return ChannelState(u_new, a_new, p, t_new)


# ---------------------------------------------------------------- runs

@dataclass(frozen=True)
class ChannelConfig:
    params: ModelParams
    ny: int = 129
    dt: float = 1e-3
    t_end: float = 10.0
    record_stride: int = 1
    snapshot_stride: int = 0
    u_amplitude: float = 0.1
    a_field: str = "random"
    a_eig_range: tuple = (1.1, 3.0)
    a_entries: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.ny < 5:
            raise ValueError("ny must be >= 5")
        if not 0 < self.dt <= self.t_end:
            raise ValueError("need 0 < dt <= t_end")
        if self.record_stride < 1 or self.snapshot_stride < 0:
            raise ValueError("record_stride must be >= 1 and snapshot_stride >= 0")
        if self.a_field not in ("identity", "equilibrium", "uniform", "random"):
            raise ValueError(f"unknown a_field {self.a_field!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def initial_state(self) -> ChannelState:
        y = grid(self.ny)
        if self.a_field == "random":
            a = random_spd_field(y, np.random.default_rng(self.seed), self.a_eig_range)
        elif self.a_field == "uniform":
            m = tensor_core.ConfTensor.from_upper(self.a_entries, 2).matrix
            a = np.broadcast_to(m, (self.ny, 2, 2)).copy()
        elif self.a_field == "equilibrium" and self.params.kind is ModelKind.FENE_P:
            c = self.params.b / (self.params.b + 2)
            a = np.broadcast_to(c * np.eye(2), (self.ny, 2, 2)).copy()
        else:
            a = np.broadcast_to(np.eye(2), (self.ny, 2, 2)).copy()
        return ChannelState(sine_velocity(self.ny, self.u_amplitude), a, self.params).validate(
            tensor_core.SPD_TOL)


@dataclass
class ChannelRun:
    config: ChannelConfig
    energy: EnergySeries
    snapshots: list = field(default_factory=list)
    snapshot_steps: list = field(default_factory=list)

    @property
    def final(self) -> ChannelState:
        return self.snapshots[-1]


def report_for(state: ChannelState):
    return energy_report(state.params, state.t, state.A, state.u, state.h)


def run_channel(config: ChannelConfig, initial: ChannelState | None = None,
                freeze_conformation: bool = False) -> ChannelRun:
    """Evolve to ``t_end``; energy every ``record_stride`` steps, snapshots every ``snapshot_stride``."""
    state = initial if initial is not None else config.initial_state()
    run = ChannelRun(config, EnergySeries(config.params))
    run.energy.append(report_for(state))
    run.snapshots.append(state)
    run.snapshot_steps.append(0)
    n = config.n_steps
    for k in range(1, n + 1):
        state = step_channel(state, config.dt, freeze_conformation)
        # t from the step counter keeps the recording grid exactly uniform
        state = replace(state, t=k * config.dt)
        if k % config.record_stride == 0:
            run.energy.append(report_for(state))
        if (config.snapshot_stride and k % config.snapshot_stride == 0) or k == n:
            if run.snapshot_steps[-1] != k:
                run.snapshots.append(state)
                run.snapshot_steps.append(k)
    return run


def snapshot_path(out_dir, run_id: str, step: int) -> Path:
    return Path(out_dir) / f"{run_id}_snap_{step}.csv"


def energy_path(out_dir, run_id: str) -> Path:
    return Path(out_dir) / f"{run_id}_energy.csv"
