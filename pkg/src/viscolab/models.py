"""Oldroyd-B and FENE-P closures in conformation form.

The conformation tensor ``A`` is the state variable for both models; the
polymer stress is derived from it. All functions broadcast over leading axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import TraceBoundViolated

FENEP_GUARD = 1e-10
TRACELESS_TOL = 1e-12


class ModelKind(str, enum.Enum):
    OLDROYD_B = "oldroyd-b"
    FENE_P = "fene-p"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"oldroydb": "oldroyd-b", "hookean": "oldroyd-b", "fenep": "fene-p"}
        return cls(aliases.get(key, key))

    @property
    def code(self) -> int:
        return 0 if self is ModelKind.OLDROYD_B else 1


@dataclass(frozen=True)
class ModelParams:
    reynolds: float
    weissenberg: float
    epsilon: float
    kind: ModelKind = ModelKind.OLDROYD_B
    b: float | None = None
    dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not self.reynolds > 0:
            out.append("reynolds must be > 0")
        if not self.weissenberg > 0:
            out.append("weissenberg must be > 0")
        if not 0 < self.epsilon < 1:
            out.append("epsilon must lie in (0,1)")
        if self.dim not in (2, 3):
            out.append("dim must be 2 or 3")
        if self.kind is ModelKind.FENE_P:
            if self.b is None:
                out.append("fene-p requires extensibility b")
            elif not self.b > self.dim:
                out.append(f"b must exceed dim={self.dim}")
        return out

    @property
    def b_or_inf(self) -> float:
        return np.inf if self.kind is ModelKind.OLDROYD_B else float(self.b)


class VelocityGradient:
    """Traceless velocity gradient ``kappa[i, j] = d u_i / d x_j``."""

    __slots__ = ("_k",)

    def __init__(self, entries):
        k = np.array(entries, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] not in (2, 3):
            raise ValueError(f"velocity gradient must be 2x2 or 3x3, got {k.shape}")
        if abs(np.trace(k)) > TRACELESS_TOL:
            raise ValueError(f"velocity gradient must be traceless (tr = {np.trace(k):.3e})")
        k.setflags(write=False)
        self._k = k

    @classmethod
    def shear(cls, rate: float, dim: int = 2) -> "VelocityGradient":
        k = np.zeros((dim, dim))
        k[0, 1] = rate
        return cls(k)

    @classmethod
    def zero(cls, dim: int = 2) -> "VelocityGradient":
        return cls(np.zeros((dim, dim)))

    @property
    def dim(self) -> int:
        return self._k.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self._k

    def __array__(self, dtype=None, copy=None):
        return self._k if dtype is None else self._k.astype(dtype)

    def __repr__(self):
        return f"VelocityGradient({self._k.tolist()!r})"


def trace_room(params: ModelParams, A) -> np.ndarray | float:
    """``1 - tr A / b`` for FENE-P (1 for Oldroyd-B); rejects tr A >= b (1 - 1e-10)."""
    a = np.asarray(A, dtype=float)
    if params.kind is ModelKind.OLDROYD_B:
        return np.ones(a.shape[:-2]) if a.ndim > 2 else 1.0
    tr = np.trace(a, axis1=-2, axis2=-1)
    bad = tr >= params.b * (1.0 - FENEP_GUARD)
    if np.any(bad):
        idx = int(np.argmax(bad)) if np.ndim(bad) else None
        raise TraceBoundViolated(f"tr A reached the extensibility bound b={params.b}", index=idx)
    return 1.0 - tr / params.b


def conformation_rhs(params: ModelParams, A, kappa) -> np.ndarray:
    """``kappa A + A kappa^T - A / (We Z) + I / We`` with ``Z = 1 - tr A / b`` (FENE-P) or 1."""
    a = np.asarray(A, dtype=float)
    k = np.asarray(kappa, dtype=float)
    dim = a.shape[-1]
    z = np.asarray(trace_room(params, a))
    we = params.weissenberg
    ka = k @ a
    return ka + np.swapaxes(ka, -1, -2) - a / (we * z[..., None, None]) + np.eye(dim) / we


def stress_from_conformation(params: ModelParams, A) -> np.ndarray:
    """Polymer stress ``(eps/We)(A / Z - I)``."""
    a = np.asarray(A, dtype=float)
    z = np.asarray(trace_room(params, a))
    return params.epsilon / params.weissenberg * (a / z[..., None, None] - np.eye(a.shape[-1]))


def conformation_from_stress(params: ModelParams, tau) -> np.ndarray:
    """Inverse of the Oldroyd-B stress map, ``A = (We/eps) tau + I``."""
    if params.kind is not ModelKind.OLDROYD_B:
        raise NotImplementedError("stress-to-conformation map is only linear for Oldroyd-B")
    t = np.asarray(tau, dtype=float)
    return params.weissenberg / params.epsilon * t + np.eye(t.shape[-1])


def stress_rhs(params: ModelParams, tau, kappa) -> np.ndarray:
    """Oldroyd-B upper-convected stress equation, right-hand side."""
    if params.kind is not ModelKind.OLDROYD_B:
        raise NotImplementedError("stress form is implemented for Oldroyd-B only")
    t = np.asarray(tau, dtype=float)
    k = np.asarray(kappa, dtype=float)
    we = params.weissenberg
    kt = k @ t
    return kt + np.swapaxes(kt, -1, -2) - t / we + params.epsilon / we * (k + np.swapaxes(k, -1, -2))


def equilibrium_conformation(params: ModelParams) -> np.ndarray:
    """Zero-flow fixed point: ``I`` (Oldroyd-B) or ``b/(b+d) I`` (FENE-P)."""
    d = params.dim
    if params.kind is ModelKind.OLDROYD_B:
        return np.eye(d)
    return params.b / (params.b + d) * np.eye(d)


def stress_power(params: ModelParams, A, kappa):
    """``tau : kappa``, the rate of work done by the imposed flow on the polymers."""
    tau = stress_from_conformation(params, A)
    return np.sum(tau * np.asarray(kappa, dtype=float), axis=(-2, -1))
