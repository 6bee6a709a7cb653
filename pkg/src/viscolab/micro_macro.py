"""Hookean dumbbell ensembles under a homogeneous velocity gradient.

Each particle is an end-to-end vector ``X`` following

    dX = (kappa X - X / (2 We)) dt + dW / sqrt(We)

and is advanced with Euler-Maruyama. The second moment ``E[X X^T]`` obeys the
Oldroyd-B conformation equation, which is what ``compare_micro_macro`` checks.

Particle ``i`` of repeat ``r`` draws from substream ``r * N + i`` of the master
seed (see ``kernels``), so results do not depend on thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels, tensor_core
from .errors import NotSPD
from .homogeneous import HomogeneousScenario, run as run_macro
from .io import write_csv
from .models import ModelKind, ModelParams

STAT_BAND = 4.0


@dataclass(frozen=True)
class Ensemble:
    X: np.ndarray
    states: np.ndarray
    params: ModelParams
    t: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.params.kind is not ModelKind.OLDROYD_B:
            raise ValueError("dumbbell ensembles use the Hookean (Oldroyd-B) closure")
        if self.X.ndim != 2 or self.X.shape[0] < 2 or self.X.shape[1] != self.params.dim:
            raise ValueError("X must have shape (N, dim) with N >= 2")
        if self.states.shape != (self.X.shape[0],) or self.states.dtype != np.uint64:
            raise ValueError("need one uint64 stream state per particle")

    @property
    def n_particles(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def sample_gaussian_init(A0, N: int, seed: int, params: ModelParams | None = None, offset: int = 0) -> Ensemble:
    """``N`` zero-mean Gaussian vectors with covariance ``A0``."""
    a0 = np.asarray(A0, dtype=float)
    if not tensor_core.is_spd(a0):
        raise NotSPD("initial covariance is not SPD")
    dim = a0.shape[0]
    params = params or ModelParams(1.0, 1.0, 0.5, ModelKind.OLDROYD_B, None, dim)
    states = kernels.seed_streams(seed, N, offset)
    g = kernels.draw_normals(states, dim)
    X = g @ tensor_core.sqrt_spd(a0)
    return Ensemble(np.ascontiguousarray(X), states, params, 0.0, seed)


def _kappa_stack(kappa, t0: float, dt: float, n: int, dim: int) -> np.ndarray:
    if kappa is None:
        return np.zeros((n, dim, dim))
    if callable(kappa) and not isinstance(kappa, np.ndarray):
        return np.array([kappa(t0 + k * dt) for k in range(n)], dtype=float).reshape(n, dim, dim)
    return np.broadcast_to(np.asarray(kappa, dtype=float), (n, dim, dim)).copy()


def em_advance(ens: Ensemble, kappa, dt: float, n_steps: int = 1, noise: bool = True) -> Ensemble:
    """``n_steps`` Euler-Maruyama steps; ``kappa`` may be a matrix or a schedule ``t -> kappa``."""
    if dt < 0 or n_steps < 0:
        raise ValueError("dt and n_steps must be non-negative")
    if dt == 0 or n_steps == 0:
        return ens
    we = ens.params.weissenberg
    if dt > 0.1 * we:
        raise ValueError(f"dt={dt} exceeds 0.1*We={0.1 * we}")
    X = ens.X.copy()
    states = ens.states.copy()
    kappas = _kappa_stack(kappa, ens.t, dt, n_steps, ens.dim)
    kernels.em_advance(X, states, kappas, float(dt), float(we), bool(noise))
    return replace(ens, X=X, states=states, t=ens.t + n_steps * dt)


def em_step(ens: Ensemble, kappa, dt: float, noise: bool = True) -> Ensemble:
    return em_advance(ens, kappa, dt, 1, noise)


def _second_moments(X: np.ndarray):
    """Per upper-triangle entry: mean and variance of ``X_a X_b``."""
    dim = X.shape[1]
    n = X.shape[0]
    mean = np.empty((dim, dim))
    var = np.empty((dim, dim))
    for a in range(dim):
        for b in range(a, dim):
            p = X[:, a] * X[:, b]
            m = np.sum(p) / n
            v = np.sum((p - m) ** 2) / (n - 1)
            mean[a, b] = mean[b, a] = m
            var[a, b] = var[b, a] = v
    return mean, var


def empirical_conformation(ens: Ensemble) -> np.ndarray:
    """``(1/N) sum_i X_i X_i^T``; numpy's pairwise summation keeps it bit-stable."""
    return _second_moments(ens.X)[0]


def empirical_stress(ens: Ensemble, params: ModelParams | None = None) -> np.ndarray:
    p = params or ens.params
    return p.epsilon / p.weissenberg * (empirical_conformation(ens) - np.eye(ens.dim))


def ensemble_entropy_gaussian(ens: Ensemble) -> float:
    """Gaussian-closure relative entropy ``(1/2)(-ln det A - d + tr A)`` of the ensemble."""
    a = empirical_conformation(ens)
    if not tensor_core.is_spd(a):
        raise NotSPD("empirical conformation is degenerate")
    return 0.5 * float(tensor_core.oldroyd_entropy_density(a, check=False))


def gaussian_moment_variance(A) -> np.ndarray:
    """``Var(X_a X_b) = A_aa A_bb + A_ab^2`` for ``X ~ N(0, A)``."""
    a = np.asarray(A, dtype=float)
    d = np.diag(a)
    return np.outer(d, d) + a * a


def expected_em_conformation(A0, kappa, dt: float, n_steps: int, weissenberg: float, t0: float = 0.0) -> np.ndarray:
    """Exact mean of the Euler-Maruyama second moment after each step.

    ``A <- M A M^T + (dt/We) I`` with ``M = I + (kappa - I/(2 We)) dt``.
    Returns shape ``(n_steps + 1, d, d)``.
    """
    a = np.array(A0, dtype=float)
    dim = a.shape[0]
    kappas = _kappa_stack(kappa, t0, dt, n_steps, dim)
    out = np.empty((n_steps + 1, dim, dim))
    out[0] = a
    eye = np.eye(dim)
    for k in range(n_steps):
        m = eye + (kappas[k] - eye / (2 * weissenberg)) * dt
        a = m @ a @ m.T + dt / weissenberg * eye
        out[k + 1] = a
    return out


# ---------------------------------------------------------------- micro vs macro

@dataclass
class MicroMacroReport:
    times: np.ndarray
    empirical: np.ndarray
    macro: np.ndarray
    stderr: np.ndarray
    tolerance: np.ndarray
    passed_at: np.ndarray
    n_particles: int
    n_repeats: int
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.passed_at))

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.empirical - self.macro)))

    @property
    def max_z(self) -> float:
        """Largest ``|error| / (stderr + C dt)`` seen; must stay below 4."""
        return float(np.max(np.abs(self.empirical - self.macro) / (self.tolerance / STAT_BAND)))

    def csv_header(self) -> list[str]:
        dim = self.empirical.shape[-1]
        ent = [f"{i + 1}{j + 1}" for i, j in zip(*np.triu_indices(dim))]
        return (["t"] + [f"Ahat{e}" for e in ent] + [f"A{e}" for e in ent]
                + [f"stderr{e}" for e in ent] + ["pass"])

    def csv_rows(self):
        iu = np.triu_indices(self.empirical.shape[-1])
        for k, t in enumerate(self.times):
            yield ([t] + list(self.empirical[k][iu]) + list(self.macro[k][iu])
                   + list(self.stderr[k][iu]) + [bool(self.passed_at[k])])

    def to_csv(self, path):
        return write_csv(path, self.csv_header(), self.csv_rows())


def compare_micro_macro(scenario: HomogeneousScenario, N: int, seed: int, n_repeats: int = 8,
                        c_dt: float = 1.0) -> MicroMacroReport:
    """Run the dumbbell ensemble and the conformation ODE side by side.

    Repeats are independent blocks of substreams. The standard error pools
    the particle-level variance of ``X_a X_b`` over all ``N * n_repeats``
    particles; a record passes when every entry is within
    ``4 (stderr + c_dt * dt)`` of the macroscopic value.
    """
    p = scenario.params
    if p.kind is not ModelKind.OLDROYD_B:
        raise ValueError("micro-macro comparison needs an Oldroyd-B scenario")
    if n_repeats < 1 or N < 2:
        raise ValueError("need N >= 2 and n_repeats >= 1")
    macro = run_macro(scenario)
    total = N * n_repeats
    ens = sample_gaussian_init(scenario.A0, total, seed, p)
    stride = scenario.record_stride
    n_rec = len(macro)
    dim = p.dim
    emp = np.empty((n_rec, dim, dim))
    err = np.empty((n_rec, dim, dim))
    for k in range(n_rec):
        if k:
            ens = em_advance(ens, scenario.kappa, scenario.dt, stride)
        blocks = [_second_moments(ens.X[r * N:(r + 1) * N]) for r in range(n_repeats)]
        means = np.array([m for m, _ in blocks])
        pooled_var = np.mean([v for _, v in blocks], axis=0)
        emp[k] = np.mean(means, axis=0)
        err[k] = np.sqrt(pooled_var / total)
    tol = STAT_BAND * (err + c_dt * scenario.dt)
    ok = np.all(np.abs(emp - macro.states) <= tol, axis=(1, 2))
    return MicroMacroReport(macro.times.copy(), emp, np.array(macro.states), err, tol, ok, N, n_repeats,
                            {"seed": seed, "c_dt": c_dt, "dt": scenario.dt})


@dataclass
class StationarityResult:
    times: np.ndarray
    max_z: float
    passed: bool


def stationarity_test(params: ModelParams, N: int, seed: int, dt: float = 1e-3, n_steps: int = 1000,
                      record_stride: int = 50) -> StationarityResult:
    """``kappa = 0`` from ``A0 = I``: every record stays within 4 sigma of ``I``.

    Sigma uses the Gaussian fourth moments, ``sqrt((A_aa A_bb + A_ab^2) / N)``.
    """
    eye = np.eye(params.dim)
    ens = sample_gaussian_init(eye, N, seed, params)
    sigma = np.sqrt(gaussian_moment_variance(eye) / N)
    times = [0.0]
    worst = float(np.max(np.abs(empirical_conformation(ens) - eye) / sigma))
    done = 0
    while done < n_steps:
        k = min(record_stride, n_steps - done)
        ens = em_advance(ens, None, dt, k)
        done += k
        times.append(done * dt)
        worst = max(worst, float(np.max(np.abs(empirical_conformation(ens) - eye) / sigma)))
    return StationarityResult(np.array(times), worst, worst <= STAT_BAND)


def ou_exact_transition(X, dt: float, weissenberg: float, rng: np.random.Generator) -> np.ndarray:
    """Exact zero-flow transition ``X e^{-dt/(2We)} + sqrt(1 - e^{-dt/We}) G``."""
    X = np.asarray(X, dtype=float)
    return X * math.exp(-dt / (2 * weissenberg)) + math.sqrt(-math.expm1(-dt / weissenberg)) * rng.standard_normal(
        X.shape)
