"""Hot loops: dumbbell Euler-Maruyama, homogeneous RK4, channel conformation update.

Each kernel exists twice: ``*_nb`` compiled with numba and ``*_np`` in plain
numpy. The public names at the bottom dispatch on ``_accel.JIT_ENABLED``.
Both paths consume identical random streams, so they agree to round-off.

Random numbers: particle ``i`` owns a SplitMix64 stream whose starting state is
``mix64(seed + (i + 1) * GOLDEN)``; each draw adds ``GOLDEN`` to the state and
returns ``mix64(state)``. Gaussians come in pairs from the Marsaglia polar
method. Results therefore do not depend on how particles are scheduled.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from . import _accel
from ._accel import njit, prange

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0

OK = 0
SPD_LOST = 1
TRACE_BOUND = 2

FENEP_GUARD = 1e-10


# ---------------------------------------------------------------- random streams

def mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def seed_streams(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Starting states for particles ``offset .. offset + n - 1``."""
    base = np.uint64(int(seed) % 2**64)
    idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    return mix64_np(base + idx * GOLDEN)


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def _polar_pair(s):
    while True:
        s += GOLDEN
        z1 = _mix64(s)
        s += GOLDEN
        z2 = _mix64(s)
        v1 = 2.0 * ((z1 >> _S11) * _INV53) - 1.0
        v2 = 2.0 * ((z2 >> _S11) * _INV53) - 1.0
        q = v1 * v1 + v2 * v2
        if q < 1.0 and q > 0.0:
            f = math.sqrt(-2.0 * math.log(q) / q)
            return v1 * f, v2 * f, s


def _polar_pairs_np(states: np.ndarray):
    n = states.size
    g0 = np.empty(n)
    g1 = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        s = states[todo] + GOLDEN
        z1 = mix64_np(s)
        s = s + GOLDEN
        z2 = mix64_np(s)
        states[todo] = s
        v1 = 2.0 * ((z1 >> _S11) * _INV53) - 1.0
        v2 = 2.0 * ((z2 >> _S11) * _INV53) - 1.0
        q = v1 * v1 + v2 * v2
        ok = (q < 1.0) & (q > 0.0)
        acc = todo[ok]
        qa = q[ok]
        f = np.sqrt(-2.0 * np.log(qa) / qa)
        g0[acc] = v1[ok] * f
        g1[acc] = v2[ok] * f
        todo = todo[~ok]
    return g0, g1


@njit(parallel=True)
def _draw_normals_nb(states, dim):
    n = states.shape[0]
    out = np.empty((n, dim))
    npairs = (dim + 1) // 2
    for i in prange(n):
        s = states[i]
        for p in range(npairs):
            g0, g1, s = _polar_pair(s)
            out[i, 2 * p] = g0
            if 2 * p + 1 < dim:
                out[i, 2 * p + 1] = g1
        states[i] = s
    return out


def _draw_normals_np(states, dim):
    out = np.empty((states.size, dim))
    for p in range((dim + 1) // 2):
        g0, g1 = _polar_pairs_np(states)
        out[:, 2 * p] = g0
        if 2 * p + 1 < dim:
            out[:, 2 * p + 1] = g1
    return out


# ---------------------------------------------------------------- Euler-Maruyama

@njit(parallel=True)
def _em_advance_nb(X, states, kappas, dt, we, noise):
    n_part, dim = X.shape
    n_steps = kappas.shape[0]
    sq = math.sqrt(dt / we)
    c = dt / (2.0 * we)
    npairs = (dim + 1) // 2
    for i in prange(n_part):
        x = np.empty(dim)
        y = np.empty(dim)
        g = np.zeros(2 * npairs)
        for a in range(dim):
            x[a] = X[i, a]
        s = states[i]
        for k in range(n_steps):
            if noise:
                for p in range(npairs):
                    g0, g1, s = _polar_pair(s)
                    g[2 * p] = g0
                    g[2 * p + 1] = g1
            for a in range(dim):
                acc = 0.0
                for bb in range(dim):
                    acc += kappas[k, a, bb] * x[bb]
                y[a] = x[a] + acc * dt - c * x[a] + sq * g[a]
            for a in range(dim):
                x[a] = y[a]
        for a in range(dim):
            X[i, a] = x[a]
        states[i] = s


def _em_advance_np(X, states, kappas, dt, we, noise):
    n_part, dim = X.shape
    sq = math.sqrt(dt / we)
    c = dt / (2.0 * we)
    g = np.zeros((n_part, dim))
    for k in range(kappas.shape[0]):
        if noise:
            g = _draw_normals_np(states, dim)
        y = np.empty_like(X)
        for a in range(dim):
            acc = np.zeros(n_part)
            for bb in range(dim):
                acc = acc + kappas[k, a, bb] * X[:, bb]
            y[:, a] = X[:, a] + acc * dt - c * X[:, a] + sq * g[:, a]
        X[:] = y


# ---------------------------------------------------------------- conformation rhs

@njit(inline="always")
def _rhs_into(A, K, we, kind, b, R):
    dim = A.shape[0]
    z = 1.0
    if kind == 1:
        tr = 0.0
        for a in range(dim):
            tr += A[a, a]
        if tr >= b * (1.0 - FENEP_GUARD):
            return TRACE_BOUND
        z = 1.0 - tr / b
    for a in range(dim):
        for c in range(a, dim):
            ka = 0.0
            kc = 0.0
            for m in range(dim):
                ka += K[a, m] * A[m, c]
                kc += K[c, m] * A[m, a]
            v = ka + kc - A[a, c] / (we * z)
            if a == c:
                v += 1.0 / we
            R[a, c] = v
            R[c, a] = v
    return OK


@njit(inline="always")
def _min_eig(A):
    dim = A.shape[0]
    if dim == 2:
        h = 0.5 * (A[0, 0] + A[1, 1])
        r = math.hypot(0.5 * (A[0, 0] - A[1, 1]), A[0, 1])
        return h - r
    p1 = A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2
    q = (A[0, 0] + A[1, 1] + A[2, 2]) / 3.0
    p2 = (A[0, 0] - q) ** 2 + (A[1, 1] - q) ** 2 + (A[2, 2] - q) ** 2 + 2.0 * p1
    if p2 <= 0.0:
        return q
    p = math.sqrt(p2 / 6.0)
    b00 = (A[0, 0] - q) / p
    b11 = (A[1, 1] - q) / p
    b22 = (A[2, 2] - q) / p
    b01 = A[0, 1] / p
    b02 = A[0, 2] / p
    b12 = A[1, 2] / p
    detb = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) + b02 * (b01 * b12 - b11 * b02)
    r = 0.5 * detb
    if r <= -1.0:
        phi = math.pi / 3.0
    elif r >= 1.0:
        phi = 0.0
    else:
        phi = math.acos(r) / 3.0
    return q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)


@njit(inline="always")
def _check_state(A, kind, b, spd_tol):
    if _min_eig(A) <= spd_tol:
        return SPD_LOST
    if kind == 1:
        tr = 0.0
        for a in range(A.shape[0]):
            tr += A[a, a]
        if tr >= b * (1.0 - FENEP_GUARD):
            return TRACE_BOUND
    return OK


@njit
def _rk4_segment_nb(A, kst, k0, dt, we, kind, b, spd_tol, stride, out):
    dim = A.shape[0]
    k1 = np.empty((dim, dim))
    k2 = np.empty((dim, dim))
    k3 = np.empty((dim, dim))
    k4 = np.empty((dim, dim))
    tmp = np.empty((dim, dim))
    new = np.empty((dim, dim))
    for k in range(k0, kst.shape[0]):
        st = _rhs_into(A, kst[k, 0], we, kind, b, k1)
        if st != OK:
            return st, k
        for i in range(dim):
            for j in range(dim):
                tmp[i, j] = A[i, j] + 0.5 * dt * k1[i, j]
        st = _rhs_into(tmp, kst[k, 1], we, kind, b, k2)
        if st != OK:
            return st, k
        for i in range(dim):
            for j in range(dim):
                tmp[i, j] = A[i, j] + 0.5 * dt * k2[i, j]
        st = _rhs_into(tmp, kst[k, 1], we, kind, b, k3)
        if st != OK:
            return st, k
        for i in range(dim):
            for j in range(dim):
                tmp[i, j] = A[i, j] + dt * k3[i, j]
        st = _rhs_into(tmp, kst[k, 2], we, kind, b, k4)
        if st != OK:
            return st, k
        for i in range(dim):
            for j in range(dim):
                new[i, j] = A[i, j] + dt / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
        for i in range(dim):
            for j in range(i + 1, dim):
                v = 0.5 * (new[i, j] + new[j, i])
                new[i, j] = v
                new[j, i] = v
        st = _check_state(new, kind, b, spd_tol)
        if st != OK:
            return st, k
        for i in range(dim):
            for j in range(dim):
                A[i, j] = new[i, j]
        if (k + 1) % stride == 0:
            out[(k + 1) // stride] = A
    return OK, kst.shape[0]


def _rhs_np(A, K, we, kind, b):
    dim = A.shape[-1]
    z = 1.0
    if kind == 1:
        tr = np.trace(A)
        if tr >= b * (1.0 - FENEP_GUARD):
            return None
        z = 1.0 - tr / b
    ka = K @ A
    return ka + ka.T - A / (we * z) + np.eye(dim) / we


def _min_eig_np(A):
    if A.shape[-1] == 2:
        h = 0.5 * (A[0, 0] + A[1, 1])
        return h - math.hypot(0.5 * (A[0, 0] - A[1, 1]), A[0, 1])
    from .tensor_core import eigvals_sym

    return float(eigvals_sym(A)[0])


def _rk4_segment_np(A, kst, k0, dt, we, kind, b, spd_tol, stride, out):
    for k in range(k0, kst.shape[0]):
        r1 = _rhs_np(A, kst[k, 0], we, kind, b)
        if r1 is None:
            return TRACE_BOUND, k
        r2 = _rhs_np(A + 0.5 * dt * r1, kst[k, 1], we, kind, b)
        if r2 is None:
            return TRACE_BOUND, k
        r3 = _rhs_np(A + 0.5 * dt * r2, kst[k, 1], we, kind, b)
        if r3 is None:
            return TRACE_BOUND, k
        r4 = _rhs_np(A + dt * r3, kst[k, 2], we, kind, b)
        if r4 is None:
            return TRACE_BOUND, k
        new = A + dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        new = 0.5 * (new + new.T)
        if _min_eig_np(new) <= spd_tol:
            return SPD_LOST, k
        if kind == 1 and np.trace(new) >= b * (1.0 - FENEP_GUARD):
            return TRACE_BOUND, k
        A[:] = new
        if (k + 1) % stride == 0:
            out[(k + 1) // stride] = A
    return OK, kst.shape[0]


# ---------------------------------------------------------------- channel

@njit(parallel=True)
def _channel_rk2_nb(A, dudy, dt, we, kind, b, spd_tol, status):
    ny = A.shape[0]
    for j in prange(ny):
        K = np.zeros((2, 2))
        K[0, 1] = dudy[j]
        r1 = np.empty((2, 2))
        r2 = np.empty((2, 2))
        mid = np.empty((2, 2))
        st = _rhs_into(A[j], K, we, kind, b, r1)
        if st != OK:
            status[j] = st
            continue
        for p in range(2):
            for q in range(2):
                mid[p, q] = A[j, p, q] + 0.5 * dt * r1[p, q]
        st = _rhs_into(mid, K, we, kind, b, r2)
        if st != OK:
            status[j] = st
            continue
        for p in range(2):
            for q in range(2):
                mid[p, q] = A[j, p, q] + dt * r2[p, q]
        st = _check_state(mid, kind, b, spd_tol)
        status[j] = st
        if st == OK:
            for p in range(2):
                for q in range(2):
                    A[j, p, q] = mid[p, q]


def _channel_rk2_np(A, dudy, dt, we, kind, b, spd_tol, status):
    K = np.zeros(A.shape)
    K[:, 0, 1] = dudy

    def rhs(M):
        z = np.ones(M.shape[0])
        if kind == 1:
            tr = M[:, 0, 0] + M[:, 1, 1]
            bad = tr >= b * (1.0 - FENEP_GUARD)
            if np.any(bad):
                return None, bad
            z = 1.0 - tr / b
        km = K @ M
        return km + np.swapaxes(km, 1, 2) - M / (we * z)[:, None, None] + np.eye(2) / we, None

    r1, bad = rhs(A)
    if r1 is None:
        status[:] = np.where(bad, TRACE_BOUND, OK)
        return
    r2, bad = rhs(A + 0.5 * dt * r1)
    if r2 is None:
        status[:] = np.where(bad, TRACE_BOUND, OK)
        return
    new = A + dt * r2
    h = 0.5 * (new[:, 0, 0] + new[:, 1, 1])
    lam = h - np.hypot(0.5 * (new[:, 0, 0] - new[:, 1, 1]), new[:, 0, 1])
    st = np.where(lam <= spd_tol, SPD_LOST, OK)
    if kind == 1:
        st = np.where((st == OK) & (new[:, 0, 0] + new[:, 1, 1] >= b * (1.0 - FENEP_GUARD)), TRACE_BOUND, st)
    status[:] = st
    good = st == OK
    A[good] = new[good]


# ---------------------------------------------------------------- tridiagonal

@njit
def _thomas_nb(lower, diag, upper, rhs):
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    x = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / m if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _thomas_np(lower, diag, upper, rhs):
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return scipy.linalg.solve_banded((1, 1), ab, rhs)


# ---------------------------------------------------------------- dispatch

if _accel.JIT_ENABLED:
    draw_normals = _draw_normals_nb
    em_advance = _em_advance_nb
    rk4_segment = _rk4_segment_nb
    channel_rk2 = _channel_rk2_nb
    thomas = _thomas_nb
else:
    draw_normals = _draw_normals_np
    em_advance = _em_advance_np
    rk4_segment = _rk4_segment_np
    channel_rk2 = _channel_rk2_np
    thomas = _thomas_np
