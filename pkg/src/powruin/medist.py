"""Matrix-exponential (ME) distributions.

An ME distribution of order ``m`` is characterized by a row vector ``v``
(``init``), an m-by-m matrix ``T`` (``subgen``) whose eigenvalues all have
negative real part, and the exit column vector ``h = -T 1``.  Density and
distribution function are

    f(x) = -v expm(T x) T 1,        F(x) = 1 - v expm(T x) 1,

and the moment generating function is the rational function
``M(s) = -v (sI + T)^{-1} h``.

Two families approximating a deterministic value ``delta`` are provided:

* :func:`erlang_me` -- Erlang-K chain, squared coefficient of variation 1/K;
* :func:`cme` -- a concentrated ME family with density
  ``c exp(-lam x) prod_i cos^2((omega x - phi_i)/2)``, whose phases are found
  once per order by numerical search minimizing the squared coefficient of
  variation (roughly 2/K^2), then scaled to the requested mean.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.optimize import minimize

logger = logging.getLogger(__name__)

# Full nonsymmetric spectra are only computed up to this order; larger
# matrices must come with eigenvalues known by construction.
_EIG_ORDER_LIMIT = 1200
_EIG_TOL = 1e-8
_MASS_TOL = 1e-12
# Grid check of cdf monotonicity is a diagnostic; skip it for big models.
_CDF_CHECK_ORDER_LIMIT = 200

__all__ = ["MEDistribution", "make_me", "erlang_me", "cme"]


class MEValidationError(ValueError):
    """Raised when (init, subgen) do not define a valid ME distribution."""


@dataclass(frozen=True)
class MEDistribution:
    """A validated matrix-exponential distribution.

    Instances are immutable; all fields are read-only after construction
    and safe to share between threads.  Use :func:`make_me` rather than
    instantiating directly.
    """

    init: np.ndarray
    subgen: np.ndarray
    exit: np.ndarray
    order: int
    _sparse: object = field(default=None, repr=False, compare=False)

    # -- internal solves ---------------------------------------------------

    def _lu(self):
        """Cached factorization of subgen (sparse for large orders)."""
        cached = getattr(self, "_lu_cache", None)
        if cached is None:
            if self.order > 500:
                mat = self._sparse if self._sparse is not None else self.subgen
                cached = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(mat))
            else:
                cached = scipy.linalg.lu_factor(self.subgen)
            object.__setattr__(self, "_lu_cache", cached)
        return cached

    def _solve_T(self, b):
        """Solve subgen @ x = b."""
        lu = self._lu()
        if self.order > 500:
            return lu.solve(b)
        return scipy.linalg.lu_solve(lu, b)

    # -- evaluation --------------------------------------------------------

    def pdf(self, x: float) -> float:
        """Density -v expm(Tx) T 1 at x >= 0."""
        if x < 0:
            raise ValueError(f"pdf requires x >= 0, got {x}")
        w = self.init @ scipy.linalg.expm(self.subgen * x)
        val = float(w @ self.exit)
        if val < -1e-9:
            raise MEValidationError(f"negative density {val} at x={x}")
        return max(val, 0.0)

    def cdf(self, x: float) -> float:
        """Distribution function 1 - v expm(Tx) 1 at x >= 0, clamped to [0,1]."""
        if x < 0:
            raise ValueError(f"cdf requires x >= 0, got {x}")
        w = self.init @ scipy.linalg.expm(self.subgen * x)
        val = 1.0 - float(w.sum())
        if val < -1e-9 or val > 1 + 1e-9:
            raise MEValidationError(f"cdf value {val} out of range at x={x}")
        return min(max(val, 0.0), 1.0)

    def pdf_grid(self, xs: np.ndarray) -> np.ndarray:
        """Density on an equispaced ascending grid.

        Uses the action of the matrix exponential on ``init`` so large sparse
        models are handled without ever forming expm(Tx).
        """
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 1 or len(xs) < 2:
            raise ValueError("need a 1-d grid with at least two points")
        steps = np.diff(xs)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("grid must be equispaced ascending")
        if self.order > 200:
            mat = self._sparse if self._sparse is not None else self.subgen
            W = scipy.sparse.linalg.expm_multiply(
                scipy.sparse.csr_matrix(mat).T, self.init,
                start=xs[0], stop=xs[-1], num=len(xs), endpoint=True)
            return np.maximum(W @ self.exit, 0.0)
        step = scipy.linalg.expm(self.subgen * steps[0])
        w = self.init @ scipy.linalg.expm(self.subgen * xs[0])
        out = np.empty(len(xs))
        for i in range(len(xs)):
            out[i] = w @ self.exit
            w = w @ step
        return np.maximum(out, 0.0)

    def mgf(self, s: float) -> float:
        """Moment generating function -v (sI + T)^{-1} h.

        The caller must supply ``s`` inside the convergence region (to the
        left of the spectral abscissa of -T).
        """
        if self.order > 500:
            base = self._sparse if self._sparse is not None else self.subgen
            mat = scipy.sparse.csc_matrix(base) + s * scipy.sparse.identity(
                self.order, format="csc")
            try:
                x = scipy.sparse.linalg.splu(mat).solve(self.exit)
            except RuntimeError as exc:
                raise ValueError(f"sI + T singular at s={s}") from exc
        else:
            mat = s * np.eye(self.order) + self.subgen
            try:
                x = scipy.linalg.solve(mat, self.exit)
            except scipy.linalg.LinAlgError as exc:
                raise ValueError(f"sI + T singular at s={s}") from exc
        return -float(self.init @ x)

    def mean(self) -> float:
        """First moment -v T^{-1} 1."""
        return -float(self.init @ self._solve_T(np.ones(self.order)))

    def scv(self) -> float:
        """Squared coefficient of variation, var/mean^2.

        Second moment is 2 v T^{-2} 1, obtained with two linear solves.
        """
        x = self._solve_T(np.ones(self.order))
        m2 = 2.0 * float(self.init @ self._solve_T(x))
        m1 = self.mean()
        return m2 / m1**2 - 1.0


def make_me(init, subgen, *, eigenvalues=None, sparse=None) -> MEDistribution:
    """Validate (init, subgen) and build an :class:`MEDistribution`.

    ``eigenvalues`` may carry the spectrum when it is known by construction
    (block-triangular assemblies); without it the spectrum is computed, which
    is only feasible for moderate orders.

    Raises :class:`MEValidationError` on dimension mismatch, initial mass
    different from one, a subgenerator eigenvalue with nonnegative real
    part, or a nonpositive mean.
    """
    v = np.atleast_1d(np.asarray(init, dtype=float)).ravel()
    T = np.atleast_2d(np.asarray(subgen, dtype=float))
    m = len(v)
    if T.shape != (m, m):
        raise MEValidationError(
            f"dimension mismatch: init has length {m}, subgen is {T.shape}")
    mass = float(v.sum())
    if abs(mass - 1.0) > 1e-10:
        raise MEValidationError(f"init mass {mass} != 1")

    if eigenvalues is None:
        if m <= _EIG_ORDER_LIMIT:
            eigenvalues = np.linalg.eigvals(T)
        else:
            # O(m^3) eig is off the table here; callers assembling large
            # block-triangular models pass the block spectra instead.
            logger.warning(
                "skipping spectrum check for order %d > %d", m, _EIG_ORDER_LIMIT)
    if eigenvalues is not None:
        worst = float(np.max(np.real(eigenvalues)))
        if worst >= -_EIG_TOL:
            raise MEValidationError(
                f"subgenerator eigenvalue with real part {worst} >= -{_EIG_TOL}")

    h = -T @ np.ones(m)
    d = MEDistribution(init=v, subgen=T, exit=h, order=m, _sparse=sparse)
    mu = d.mean()
    if not (mu > 0 and math.isfinite(mu)):
        raise MEValidationError(f"mean {mu} not strictly positive and finite")
    if abs(d.mgf(0.0) - 1.0) > 1e-10:
        raise MEValidationError("mgf(0) != 1")
    if m <= _CDF_CHECK_ORDER_LIMIT:
        grid = np.linspace(0.0, 5.0 * mu, 16)
        F = np.array([d.cdf(x) for x in grid])
        if np.any(np.diff(F) < -1e-9):
            raise MEValidationError("cdf not nondecreasing on check grid")
    return d


def erlang_me(K: int, delta: float) -> MEDistribution:
    """Erlang-K approximation of the deterministic value ``delta``.

    Mean is exactly ``delta``; the squared coefficient of variation is 1/K.
    """
    if K < 1 or K != int(K):
        raise ValueError(f"K must be a positive integer, got {K}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    K = int(K)
    rate = K / delta
    T = rate * (np.diag(-np.ones(K)) + np.diag(np.ones(K - 1), 1))
    v = np.zeros(K)
    v[0] = 1.0
    return make_me(v, T, eigenvalues=np.full(K, -rate))


# -- concentrated ME construction ------------------------------------------


def _cosine_harmonics(phases):
    """Laurent coefficients of prod_i (1 + cos(w x - phi_i)) in e^{iwx}."""
    coeffs = np.array([1.0 + 0j])
    for phi in phases:
        factor = np.array([np.exp(1j * phi) / 2, 1.0, np.exp(-1j * phi) / 2])
        coeffs = np.convolve(coeffs, factor)
    return coeffs  # coeffs[j + n] multiplies e^{i j w x}


def _cosine_moments(omega, phases, orders=(0, 1, 2)):
    """Raw moments of exp(-x) prod_i cos^2((omega x - phi_i)/2), x >= 0."""
    n = len(phases)
    coeffs = _cosine_harmonics(phases)
    js = np.arange(-n, n + 1)
    out = []
    for k in orders:
        vals = math.factorial(k) / (1.0 - 1j * js * omega) ** (k + 1)
        out.append(float((coeffs * vals).sum().real) / 2**n)
    return out


def _cosine_scv(params, n):
    omega = params[0]
    phases = params[1:]
    m0, m1, m2 = _cosine_moments(omega, phases)
    if m0 <= 1e-12 or m1 <= 0:
        return 10.0
    mean = m1 / m0
    return (m2 / m0 - mean**2) / mean**2


@lru_cache(maxsize=None)
def _cme_unit_params(K: int):
    """Optimized (omega, phases) for order K at unit decay rate.

    Coarse grid over frequency and linearly spaced phases, then simplex
    polish with all phases free.  Deterministic, cached per order.
    """
    n = (K - 1) // 2
    best_p, best_v = None, np.inf
    for omega in np.linspace(0.2, 4.0, 40):
        for phi0 in np.linspace(0.0, 2 * np.pi, 24, endpoint=False):
            for dphi in np.linspace(0.0, 1.0, 20):
                params = np.r_[omega, phi0 + dphi * np.arange(n)]
                val = _cosine_scv(params, n)
                if val < best_v:
                    best_p, best_v = params, val
    res = minimize(_cosine_scv, best_p, args=(n,), method="Nelder-Mead",
                   options=dict(xatol=1e-12, fatol=1e-16,
                                maxiter=20000, maxfev=40000))
    return float(res.x[0]), tuple(float(p) for p in res.x[1:])


def _cme_unit_vT(K: int):
    """ME pair (v, T) of the unit-rate order-K concentrated density."""
    omega, phases = _cme_unit_params(K)
    n = len(phases)
    coeffs = _cosine_harmonics(phases) / 2**n
    # f(x) = e^{-x} [a_0 + sum_j a_j cos(j w x) + b_j sin(j w x)]
    a = np.empty(n + 1)
    b = np.empty(n + 1)
    a[0] = coeffs[n].real
    for j in range(1, n + 1):
        a[j] = 2.0 * coeffs[n + j].real
        b[j] = -2.0 * coeffs[n + j].imag

    T = np.zeros((K, K))
    T[0, 0] = -1.0
    v = np.zeros(K)
    v[0] = a[0]
    for j in range(1, n + 1):
        i = 2 * j - 1
        w = j * omega
        T[i:i + 2, i:i + 2] = [[-1.0, w], [-w, -1.0]]
        # Match the cos/sin coefficients of -v expm(Tx) T 1 on this block.
        sys = np.array([[1.0 - w, 1.0 + w], [1.0 + w, -(1.0 - w)]])
        v[i:i + 2] = np.linalg.solve(sys, [a[j], b[j]])
    v /= v.sum()  # normalize total mass; density sign is already nonneg
    eigs = np.concatenate([[-1.0], (-1.0 + 1j * omega * np.arange(1, n + 1)),
                           (-1.0 - 1j * omega * np.arange(1, n + 1))])
    return v, T, eigs


def cme(K: int, delta: float) -> MEDistribution:
    """Concentrated ME approximation of the deterministic value ``delta``.

    ``K`` must be odd; the order-K family achieves scv on the order of
    2/K^2.  K=1 degrades to the exponential distribution.
    """
    if K < 1 or K != int(K):
        raise ValueError(f"K must be a positive integer, got {K}")
    if K % 2 == 0:
        raise ValueError(f"K must be odd, got {K}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    K = int(K)
    if K == 1:
        logger.info("cme(K=1) degrades to the exponential distribution")
        return erlang_me(1, delta)
    v, T, eigs = _cme_unit_vT(K)
    d_unit = make_me(v, T, eigenvalues=eigs)
    scale = d_unit.mean() / delta  # time rescale X -> X * delta/mean
    return make_me(v, T * scale, eigenvalues=eigs * scale)
