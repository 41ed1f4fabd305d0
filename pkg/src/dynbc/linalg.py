"""SPD solves, symmetric scaling, exponential/φ actions and the discrete
H^{-1/2} boundary norm."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (InvalidArgumentError, KrylovStagnationError, SolverFailureError,
                     UnsupportedSizeError)

DENSE_LIMIT = 600
HMINUS_LIMIT = 2000


def _as_dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def solve_spd(A, b, tol: float = 1e-10, dense_limit: int = DENSE_LIMIT):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Dense Cholesky for ``n <= dense_limit``, otherwise Jacobi-preconditioned
    conjugate gradients to relative residual ``tol``.

    Raises
    ------
    SolverFailureError
        If CG does not converge within ``10 n`` iterations or the Cholesky
        factorization breaks down.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if n <= dense_limit:
        try:
            c = sla.cho_factor(_as_dense(A), lower=True, check_finite=True)
        except (sla.LinAlgError, ValueError) as exc:
            raise SolverFailureError(f"Cholesky factorization failed: {exc}") from exc
        return sla.cho_solve(c, b)
    A = sp.csr_matrix(A)
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverFailureError("matrix has a nonpositive diagonal entry")
    P = sp.diags(1.0 / d)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=10 * n, M=P)
    res = np.linalg.norm(A @ x - b) / bnorm
    if info != 0 or res > tol * 1.0001:
        raise SolverFailureError(f"CG did not reach tolerance {tol:g}", residual=res)
    return x


class Factorized:
    """Reusable solver for a fixed sparse matrix (LU or dense Cholesky)."""

    def __init__(self, A, spd: bool = True, dense_limit: int = DENSE_LIMIT):
        n = A.shape[0]
        self.n = n
        if spd and n <= dense_limit:
            try:
                self._cho = sla.cho_factor(_as_dense(A), lower=True)
            except sla.LinAlgError as exc:
                raise SolverFailureError(f"Cholesky factorization failed: {exc}") from exc
            self._lu = None
        else:
            self._cho = None
            try:
                self._lu = spla.splu(sp.csc_matrix(A))
            except RuntimeError as exc:
                raise SolverFailureError(f"sparse LU failed: {exc}") from exc

    def solve(self, b):
        if self._cho is not None:
            return sla.cho_solve(self._cho, b)
        x = self._lu.solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SolverFailureError("sparse LU produced non-finite values")
        return x


def sym_scale(M_diag, A):
    """Return M^{-1/2} A M^{-1/2} for a positive diagonal ``M_diag``."""
    M_diag = np.asarray(M_diag, dtype=float)
    if np.any(~(M_diag > 0)):
        raise InvalidArgumentError("mass diagonal must be strictly positive")
    s = 1.0 / np.sqrt(M_diag)
    if sp.issparse(A):
        S = sp.diags(s)
        return (S @ A @ S).tocsr()
    return s[:, None] * np.asarray(A, dtype=float) * s[None, :]


# -- φ-functions -------------------------------------------------------------

def phi1(z):
    """φ(z) = (e^z − 1)/z, accurate near zero."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def _fun(kind):
    if kind == "phi":
        return phi1
    if kind == "exp":
        return np.exp
    raise InvalidArgumentError(f"unknown matrix function {kind!r}")


class SpectralOperator:
    """Dense symmetric eigendecomposition of Â, reusable for many f(−sÂ)v.

    Worth its O(n³) set-up when the same Â is applied with many vectors
    (e.g. every step of an exponential integrator on a fixed mesh).
    """

    def __init__(self, A_hat):
        lam, V = np.linalg.eigh(_as_dense(A_hat))
        self.lam, self.V = lam, V
        self.n = len(lam)

    def apply(self, kind, v, s):
        f = _fun(kind)
        return self.V @ (f(-s * self.lam)[:, None] * (self.V.T @ np.reshape(v, (self.n, -1)))
                         ).reshape(np.shape(v))


def _lanczos_apply(A, v, s, kind, tol, m_max):
    n = v.shape[0]
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return np.zeros(n)
    m_max = min(m_max, n)
    Q = np.zeros((n, m_max + 1))
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    Q[:, 0] = v / beta0
    f = _fun(kind)
    prev_ok = False
    prev = None
    for j in range(m_max):
        w = A @ Q[:, j]
        alpha[j] = Q[:, j] @ w
        w = w - Q[:, :j + 1] @ (Q[:, :j + 1].T @ w)
        w = w - Q[:, :j + 1] @ (Q[:, :j + 1].T @ w)   # full reorthogonalization, twice
        beta[j] = np.linalg.norm(w)
        m = j + 1
        T = np.diag(alpha[:m]) + np.diag(beta[:m - 1], 1) + np.diag(beta[:m - 1], -1)
        theta, Y = np.linalg.eigh(T)
        y = Y @ (f(-s * theta) * Y[0, :])
        approx = beta0 * (Q[:, :m] @ y)
        # last-entry heuristic: size of the coefficient on the newest Krylov vector
        est = beta0 * beta[j] * abs(y[-1])
        if prev is not None:
            est = max(est, np.linalg.norm(approx - prev))
        ok = est <= tol * beta0
        if (ok and prev_ok) or beta[j] <= 1e-14 * max(1.0, abs(alpha).max()) or m == n:
            return approx
        prev_ok, prev = ok, approx
        Q[:, j + 1] = w / beta[j]
    raise KrylovStagnationError(
        f"Lanczos did not reach tolerance {tol:g} in {m_max} iterations; "
        "use the dense fallback (phi_method='dense')", residual=est)


def _matfun_apply(kind, A_hat, v, s, tol, method, m_max):
    v = np.asarray(v, dtype=float)
    if s < 0:
        raise InvalidArgumentError("scale s must be nonnegative")
    if isinstance(A_hat, SpectralOperator):
        return A_hat.apply(kind, v, s)
    n = v.shape[0]
    if s == 0:
        return v.copy()
    if method == "dense" or (method == "auto" and n <= DENSE_LIMIT):
        return SpectralOperator(A_hat).apply(kind, v, s)
    if method not in ("auto", "krylov"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    return _lanczos_apply(A_hat, v, s, kind, tol, m_max)


def phi1_apply(A_hat, v, s: float = 1.0, tol: float = 1e-10, method: str = "auto",
               m_max: int = 100):
    """Approximate φ(−s Â) v for symmetric positive semidefinite ``Â``.

    ``method`` is ``"auto"`` (dense eigendecomposition for n ≤ 600, else
    Lanczos), ``"krylov"`` or ``"dense"``. ``A_hat`` may also be a
    :class:`SpectralOperator`.
    """
    return _matfun_apply("phi", A_hat, v, s, tol, method, m_max)


def exp_apply(A_hat, v, s: float = 1.0, tol: float = 1e-10, method: str = "auto",
              m_max: int = 100):
    """Approximate exp(−s Â) v with the same machinery as :func:`phi1_apply`."""
    return _matfun_apply("exp", A_hat, v, s, tol, method, m_max)


# -- fractional boundary norm ---------------------------------------------------

class HMinusHalf:
    """Discrete H^{-1/2} norm on the boundary, reusable across many vectors."""

    def __init__(self, M_surf_unit, K_surf_unit):
        n = M_surf_unit.shape[0]
        if n > HMINUS_LIMIT:
            raise UnsupportedSizeError(
                f"{n} boundary DOFs exceed the dense limit of {HMINUS_LIMIT}")
        self.M = _as_dense(M_surf_unit)
        lam, V = sla.eigh(_as_dense(K_surf_unit), self.M)   # Vᵀ M V = I
        self.weights = 1.0 / np.sqrt(np.maximum(lam, 0.0) + 1.0)
        self.V = V

    def __call__(self, g) -> float:
        c = self.V.T @ (self.M @ np.asarray(g, dtype=float))
        return float(np.sqrt(np.sum(self.weights * c ** 2)))


def hminus_half_norm(g, M_surf_unit, K_surf_unit) -> float:
    """(Σ_k (λ_k+1)^{-1/2} (v_kᵀ M g)²)^{1/2} with K v = λ M v, M-orthonormal v_k."""
    return HMinusHalf(M_surf_unit, K_surf_unit)(g)
