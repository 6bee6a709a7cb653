"""Small symmetric-matrix utilities for d in {2, 3} and the matrix inequality oracles.

Every function accepts a single ``(d, d)`` matrix or a stack ``(..., d, d)``;
scalar results come back as floats for a single matrix and arrays otherwise.
Determinants and inverses use closed forms; eigenpairs use cyclic Jacobi
rotations (one rotation is exact for d = 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadExtensibility, NotSPD, SingularMatrix, TraceBoundViolated

SPD_TOL = 1e-12
INEQ_SLACK = 1e-12
SINGULAR_RTOL = 1e-14


class ConfTensor:
    """Symmetric d x d conformation matrix defined by its upper triangle.

    The lower triangle is always a mirror of the upper one, so the matrix is
    exactly symmetric. Instances are immutable.
    """

    __slots__ = ("_m", "spd_checked")

    def __init__(self, matrix, *, check_spd: bool = False, spd_tol: float = SPD_TOL):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 3):
            raise ValueError(f"ConfTensor needs a 2x2 or 3x3 matrix, got shape {m.shape}")
        il = np.tril_indices(m.shape[0], -1)
        m[il] = m.T[il]
        m.setflags(write=False)
        self._m = m
        self.spd_checked = False
        if check_spd:
            if not is_spd(m, spd_tol):
                raise NotSPD()
            self.spd_checked = True

    @classmethod
    def from_upper(cls, values, dim: int | None = None, **kwargs) -> "ConfTensor":
        values = np.asarray(values, dtype=float).ravel()
        if dim is None:
            dim = {3: 2, 6: 3}.get(values.size)
            if dim is None:
                raise ValueError(f"cannot infer dimension from {values.size} triangle entries")
        iu = np.triu_indices(dim)
        if values.size != iu[0].size:
            raise ValueError(f"expected {iu[0].size} upper-triangle entries for d={dim}")
        m = np.zeros((dim, dim))
        m[iu] = values
        return cls(m, **kwargs)

    @classmethod
    def identity(cls, dim: int = 2) -> "ConfTensor":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def upper(self) -> np.ndarray:
        return self._m[np.triu_indices(self.dim)]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._m
        return self._m.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, ConfTensor):
            return NotImplemented
        return np.array_equal(self._m, other._m)

    def __hash__(self):
        return hash(self._m.tobytes())

    def __repr__(self):
        return f"ConfTensor({self._m.tolist()!r})"


def _mat(M) -> np.ndarray:
    m = np.asarray(M, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2] or m.shape[-1] not in (2, 3):
        raise ValueError(f"expected (..., d, d) with d in (2, 3), got {m.shape}")
    return m


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _first_index(mask):
    idx = np.argwhere(mask)
    if idx.size == 0:
        return None
    first = tuple(int(i) for i in idx[0])
    return first[0] if len(first) == 1 else first


def trace(M):
    m = _mat(M)
    return _out(np.trace(m, axis1=-2, axis2=-1))


def det(M):
    m = _mat(M)
    if m.shape[-1] == 2:
        d = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    else:
        d = (
            m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
            - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
            + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
        )
    return _out(d)


def inverse_trace(M):
    """``tr M^-1``; closed form for 2x2, pivoted LU for 3x3 (see ``inverse``)."""
    m = _mat(M)
    if m.shape[-1] == 2:
        minors = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        return _out(np.trace(m, axis1=-2, axis2=-1) / minors)
    return _out(np.trace(np.linalg.inv(m), axis1=-2, axis2=-1))


def _adjugate(m: np.ndarray) -> np.ndarray:
    adj = np.empty_like(m)
    adj[..., 0, 0] = m[..., 1, 1]
    adj[..., 1, 1] = m[..., 0, 0]
    adj[..., 0, 1] = -m[..., 0, 1]
    adj[..., 1, 0] = -m[..., 1, 0]
    return adj


def inverse(M):
    """Inverse; raises SingularMatrix when |det| < 1e-14 ||M||_F^d.

    2x2 uses the adjugate. For 3x3 the cofactor formula loses digits like
    ||M||^3/|det| rather than cond(M), so LAPACK's pivoted LU is used instead.
    """
    m = _mat(M)
    dim = m.shape[-1]
    dt = np.asarray(det(m))
    scale = np.linalg.norm(m, axis=(-2, -1)) ** dim
    bad = np.abs(dt) <= SINGULAR_RTOL * scale
    if np.any(bad):
        raise SingularMatrix(f"matrix is numerically singular (index {_first_index(bad)})")
    if dim == 2:
        inv = _adjugate(m) / dt[..., None, None]
    else:
        inv = np.linalg.inv(m)
    if isinstance(M, ConfTensor):
        return ConfTensor(inv)
    return inv


def _jacobi(m: np.ndarray, want_vectors: bool, max_sweeps: int = 50):
    a = np.array(m, dtype=float)
    dim = a.shape[-1]
    v = np.broadcast_to(np.eye(dim), a.shape).copy() if want_vectors else None
    pairs = [(0, 1)] if dim == 2 else [(0, 1), (0, 2), (1, 2)]
    for _ in range(max_sweeps):
        off = sum(a[..., p, q] ** 2 for p, q in pairs)
        diag = sum(a[..., k, k] ** 2 for k in range(dim))
        if np.all(off <= 1e-34 * diag + 1e-300):
            break
        for p, q in pairs:
            apq = a[..., p, q]
            active = apq != 0.0
            safe = np.where(active, apq, 1.0)
            theta = (a[..., q, q] - a[..., p, p]) / (2.0 * safe)
            with np.errstate(over="ignore"):
                # theta**2 overflows only when the rotation is negligible; t -> 0 then
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A <- J^T A J with J the (p, q) Givens rotation
            ap = a[..., :, p].copy()
            aq = a[..., :, q].copy()
            a[..., :, p] = c[..., None] * ap - s[..., None] * aq
            a[..., :, q] = s[..., None] * ap + c[..., None] * aq
            ap = a[..., p, :].copy()
            aq = a[..., q, :].copy()
            a[..., p, :] = c[..., None] * ap - s[..., None] * aq
            a[..., q, :] = s[..., None] * ap + c[..., None] * aq
            a[..., p, q] = 0.0
            a[..., q, p] = 0.0
            if want_vectors:
                vp = v[..., :, p].copy()
                vq = v[..., :, q].copy()
                v[..., :, p] = c[..., None] * vp - s[..., None] * vq
                v[..., :, q] = s[..., None] * vp + c[..., None] * vq
    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    if want_vectors:
        v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return w, v


def eigvals_sym(M) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (or stack)."""
    m = _mat(M)
    if m.shape[-1] == 2:
        half_tr = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
        r = np.hypot(0.5 * (m[..., 0, 0] - m[..., 1, 1]), m[..., 0, 1])
        return np.stack([half_tr - r, half_tr + r], axis=-1)
    return _jacobi(m, want_vectors=False)[0]


def eigen_sym(M):
    """Eigen-decomposition ``M = Q diag(w) Q^T`` with ascending ``w``."""
    return _jacobi(_mat(M), want_vectors=True)


def min_eigenvalue(M):
    return _out(eigvals_sym(M)[..., 0])


def is_spd(M, tol: float = SPD_TOL):
    m = _mat(M)
    ok = eigvals_sym(m)[..., 0] > tol
    return bool(ok) if np.ndim(ok) == 0 else ok


def require_spd(M, tol: float = SPD_TOL) -> np.ndarray:
    m = _mat(M)
    ok = np.asarray(is_spd(m, tol))
    if not np.all(ok):
        raise NotSPD(index=_first_index(~ok) if ok.ndim else None)
    return m


def sqrt_spd(M) -> np.ndarray:
    """Symmetric square root via ``eigen_sym``."""
    w, q = eigen_sym(require_spd(M))
    return (q * np.sqrt(w)[..., None, :]) @ np.swapaxes(q, -1, -2)


def amgm_gap(M):
    """Return ``((det M)^(1/d), tr M / d)``; the first never exceeds the second."""
    m = require_spd(M)
    dim = m.shape[-1]
    return _out(np.asarray(det(m)) ** (1.0 / dim)), _out(np.asarray(trace(m)) / dim)


def oldroyd_entropy_density(A, *, check: bool = True):
    """``-ln det A - d + tr A``: twice the Gaussian relative entropy to the standard normal."""
    m = require_spd(A) if check else _mat(A)
    dim = m.shape[-1]
    return _out(-np.log(det(m)) - dim + np.asarray(trace(m)))


def oldroyd_fisher_density(A, *, check: bool = True):
    """``tr((I - A^-1)^2 A)``, evaluated as ``tr A - 2d + tr A^-1``."""
    m = require_spd(A) if check else _mat(A)
    dim = m.shape[-1]
    return _out(np.asarray(trace(m)) - 2 * dim + np.asarray(inverse_trace(m)))


def _trace_room(m: np.ndarray, b: float) -> np.ndarray:
    z = 1.0 - np.asarray(trace(m)) / b
    bad = z <= 0.0
    if np.any(bad):
        raise TraceBoundViolated(f"tr A must stay below b={b}", index=_first_index(bad) if z.ndim else None)
    return z


def fenep_entropy_density(A, b: float, *, check: bool = True):
    """``-ln det A - b ln(1 - tr A / b)``; bounded below by ``-(b+d) ln(b/(b+d))``."""
    m = require_spd(A) if check else _mat(A)
    z = _trace_room(m, b)
    return _out(-np.log(det(m)) - b * np.log(z))


def fenep_fisher_density(A, b: float, *, check: bool = True):
    """``tr A / Z^2 - 2d / Z + tr A^-1`` with ``Z = 1 - tr A / b``."""
    m = require_spd(A) if check else _mat(A)
    z = _trace_room(m, b)
    dim = m.shape[-1]
    tr = np.asarray(trace(m))
    return _out(tr / z**2 - 2 * dim / z + np.asarray(inverse_trace(m)))


def fenep_entropy_minimum(b: float, dim: int) -> float:
    """``-(b+d) ln(b/(b+d))``, the value at the equilibrium ``A = b/(b+d) I``."""
    return -(b + dim) * np.log(b / (b + dim))


def check_gaussian_logsobolev(A, slack: float = INEQ_SLACK):
    """Entropy density <= Fisher density for Gaussian states. Returns ``(lhs, rhs, holds)``."""
    m = require_spd(A)
    lhs = np.asarray(oldroyd_entropy_density(m, check=False))
    rhs = np.asarray(oldroyd_fisher_density(m, check=False))
    holds = lhs <= rhs + slack
    return _out(lhs), _out(rhs), bool(holds) if holds.ndim == 0 else holds


def check_fenep_inequalities(M, b: float, slack: float = INEQ_SLACK):
    """Evaluate the FENE-P lower bound and its log-Sobolev analogue.

    ``ineq25``: entropy >= -(b+d) ln(b/(b+d)) >= d.
    ``ineq26``: entropy + (b+d) ln(b/(b+d)) <= Fisher-type dissipation density.
    """
    m = require_spd(M)
    dim = m.shape[-1]
    if b <= dim:
        raise BadExtensibility(f"b must exceed d={dim}, got {b}")
    h = np.asarray(fenep_entropy_density(m, b, check=False))
    f = np.asarray(fenep_fisher_density(m, b, check=False))
    hmin = fenep_entropy_minimum(b, dim)
    ineq25 = (h >= hmin - slack) & (hmin >= dim - slack)
    ineq26 = h - hmin <= f + slack
    if ineq25.ndim == 0:
        return bool(ineq25), bool(ineq26)
    return ineq25, ineq26


def random_rotation(dim: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-distributed rotation from the QR factorisation of a Gaussian matrix."""
    shape = (dim, dim) if size is None else (size, dim, dim)
    g = rng.standard_normal(shape)
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return q * signs[..., None, :]


def spd_from_eigen(eigvals, rotation) -> np.ndarray:
    w = np.asarray(eigvals, dtype=float)
    q = np.asarray(rotation, dtype=float)
    m = (q * w[..., None, :]) @ np.swapaxes(q, -1, -2)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def random_spd(dim: int, eig_range=(0.1, 10.0), rng: np.random.Generator | None = None, size=None):
    """SPD matrix with eigenvalues uniform in ``eig_range`` and a Haar rotation.

    Returns a ConfTensor when ``size`` is None, else an ``(size, d, d)`` array.
    """
    lo, hi = eig_range
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    rng = np.random.default_rng() if rng is None else rng
    shape = (dim,) if size is None else (size, dim)
    w = rng.uniform(lo, hi, size=shape)
    m = spd_from_eigen(w, random_rotation(dim, rng, size))
    if size is None:
        return ConfTensor(m)
    return m


def random_spd_trace_bounded(dim: int, b: float, rng: np.random.Generator, size: int,
                             fill=(1e-3, 0.999)):
    """SPD samples with ``tr M = s b`` for ``s`` uniform in ``fill``.

    Eigenvalues are spread over the simplex with Dirichlet(1) weights.
    Returns ``(matrices, eigenvalues)``.
    """
    s = rng.uniform(fill[0], fill[1], size=size)
    weights = rng.dirichlet(np.ones(dim), size=size)
    weights = np.maximum(weights, 1e-9)
    weights /= weights.sum(axis=1, keepdims=True)
    w = weights * (s * b)[:, None]
    return spd_from_eigen(w, random_rotation(dim, rng, size)), w


@dataclass
class BatteryResult:
    dim: int
    b: float
    n_samples: int
    violations: dict = field(default_factory=dict)
    min_gaps: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v == 0 for v in self.violations.values())


def run_inequality_battery(n_samples: int = 10_000, dims=(2, 3), b_values=(5.0, 10.0, 50.0, 100.0),
                           seed: int = 0, slack: float = INEQ_SLACK) -> list[BatteryResult]:
    """Sample SPD matrices and count violations of each matrix inequality.

    For every ``(d, b)`` pair: the AM-GM bound and the Gaussian log-Sobolev
    bound on matrices with eigenvalues in [1e-3, 1e3] (half) and [0.2, 5]
    (half), plus both FENE-P bounds on trace-bounded samples.
    """
    results = []
    for dim in dims:
        for b in b_values:
            rng = np.random.default_rng([seed, dim, int(round(b * 1000))])
            half = n_samples // 2
            wide = random_spd(dim, (1e-3, 1e3), rng, size=half)
            tight = random_spd(dim, (0.2, 5.0), rng, size=n_samples - half)
            mats = np.concatenate([wide, tight])
            root, mean = amgm_gap(mats)
            lhs, rhs, ls_ok = check_gaussian_logsobolev(mats, slack)
            fmats, _ = random_spd_trace_bounded(dim, b, rng, n_samples)
            i25, i26 = check_fenep_inequalities(fmats, b, slack)
            h = fenep_entropy_density(fmats, b, check=False)
            f = fenep_fisher_density(fmats, b, check=False)
            hmin = fenep_entropy_minimum(b, dim)
            res = BatteryResult(dim, b, n_samples)
            res.violations = {
                "amgm": int(np.sum(root > mean + slack)),
                "logsobolev": int(np.sum(~ls_ok)),
                "fenep_lower": int(np.sum(~i25)),
                "fenep_logsobolev": int(np.sum(~i26)),
            }
            res.min_gaps = {
                "amgm": float(np.min(mean - root)),
                "logsobolev": float(np.min(rhs - lhs)),
                "fenep_lower": float(np.min(h - hmin)),
                "fenep_logsobolev": float(np.min(f - (h - hmin))),
            }
            results.append(res)
    return results
