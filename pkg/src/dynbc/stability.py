"""Dense verification of the stepsize-dependent stability bound for the
bulk–surface component splitting.

With Â partitioned into interior (0) and boundary (1) unknowns, the exact
substep propagators are

    E₀(s) = [[e^{−sÂ₀₀}, −(I−e^{−sÂ₀₀})Â₀₀⁻¹Â₀₁], [0, I]]
    E₁(s) = [[I, 0], [−(I−e^{−sÂ₁₁})Â₁₁⁻¹Â₁₀, e^{−sÂ₁₁}]]

and S_Lie = E₀(τ)E₁(τ), S_Strang = E₁(τ/2)E₀(τ)E₁(τ/2). The Lie matrix is
similar to a symmetric contraction S̃ = T⁻¹S_Lie T, and the Strang matrix to
the same S̃ through L = (E₁(τ/2)T)⁻¹. Everything here is computed from
eigendecompositions of the diagonal blocks, so no growing exponentials
e^{+τÂ} are ever formed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateStepsizeError, PreconditionError, UnsupportedSizeError
from .linalg import DENSE_LIMIT, sym_scale

DEGENERATE = 1e-14


class _Spectral:
    """Symmetric matrix functions via one eigendecomposition."""

    def __init__(self, B):
        self.lam, self.V = np.linalg.eigh(B)
        self.n = len(self.lam)

    def f(self, vals):
        return (self.V * vals) @ self.V.T


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Blocks of a symmetric matrix Â split into interior (0) and boundary (1) parts."""

    A00: np.ndarray
    A01: np.ndarray
    A11: np.ndarray

    @property
    def A10(self) -> np.ndarray:
        return self.A01.T

    @property
    def n0(self) -> int:
        return self.A00.shape[0]

    @property
    def n1(self) -> int:
        return self.A11.shape[0]

    @property
    def full(self) -> np.ndarray:
        return np.block([[self.A00, self.A01], [self.A10, self.A11]])

    @cached_property
    def s0(self) -> _Spectral:
        return _Spectral(self.A00)

    @cached_property
    def s1(self) -> _Spectral:
        return _Spectral(self.A11)

    @classmethod
    def from_matrix(cls, A_hat, idx0, idx1) -> "BlockSystem":
        A = A_hat.toarray() if hasattr(A_hat, "toarray") else np.asarray(A_hat, dtype=float)
        if A.shape[0] > DENSE_LIMIT:
            raise UnsupportedSizeError(f"dense stability lab limited to {DENSE_LIMIT} unknowns")
        A = 0.5 * (A + A.T)
        idx0, idx1 = np.asarray(idx0), np.asarray(idx1)
        return cls(A[np.ix_(idx0, idx0)], A[np.ix_(idx0, idx1)], A[np.ix_(idx1, idx1)])

    @classmethod
    def from_system(cls, system) -> "BlockSystem":
        """Blocks of M^{-1/2} A M^{-1/2} for a fully lumped assembled system."""
        if not system.is_diagonal_mass:
            raise PreconditionError("stability lab needs a lumped (diagonal) mass matrix")
        A_hat = sym_scale(system.M_diag, system.A)
        return cls.from_matrix(A_hat, system.interior, system.boundary)

    def check(self) -> None:
        """Raise unless Â₀₀, Â₁₁ and the Schur complement are positive definite."""
        for name, s in (("A00", self.s0), ("A11", self.s1)):
            if s.n and s.lam.min() <= 0:
                raise PreconditionError(f"block {name} is not positive definite")
        S = self.A00 - self.A01 @ np.linalg.solve(self.A11, self.A10)
        if self.n0 and np.linalg.eigvalsh(0.5 * (S + S.T)).min() <= 0:
            raise PreconditionError("Schur complement is not positive definite")

    def coupling_norm(self) -> float:
        """‖Â₀₀^{-1/2} Â₀₁ Â₁₁^{-1/2}‖₂."""
        C = (self.s0.f(self.s0.lam ** -0.5) @ self.A01 @ self.s1.f(self.s1.lam ** -0.5))
        return float(np.linalg.norm(C, 2))


def _require_spd(blocks: BlockSystem):
    for name, s in (("A00", blocks.s0), ("A11", blocks.s1)):
        if s.n and not s.lam.min() > 0:
            raise PreconditionError(f"block {name} is singular or indefinite")


def _resolvent_factor(s: _Spectral, tau):
    """(I − e^{−τÂ})Â⁻¹ = τφ(−τÂ), well defined for small eigenvalues."""
    x = tau * s.lam
    vals = np.where(x != 0, -np.expm1(-x) / np.where(s.lam != 0, s.lam, 1.0), tau)
    return s.f(vals)


def subflow_matrices(blocks: BlockSystem, s: float):
    """Return (E₀(s), E₁(s)) in the ordering (interior, boundary)."""
    _require_spd(blocks)
    n0, n1 = blocks.n0, blocks.n1
    E0 = np.eye(n0 + n1)
    E1 = np.eye(n0 + n1)
    E0[:n0, :n0] = blocks.s0.f(np.exp(-s * blocks.s0.lam))
    E0[:n0, n0:] = -_resolvent_factor(blocks.s0, s) @ blocks.A01
    E1[n0:, n0:] = blocks.s1.f(np.exp(-s * blocks.s1.lam))
    E1[n0:, :n0] = -_resolvent_factor(blocks.s1, s) @ blocks.A10
    return E0, E1


def lie_propagator(blocks: BlockSystem, tau: float) -> np.ndarray:
    """S_Lie = E₀(τ)E₁(τ): boundary substep first, then interior."""
    E0, E1 = subflow_matrices(blocks, tau)
    return E0 @ E1


def strang_propagator(blocks: BlockSystem, tau: float) -> np.ndarray:
    """S_Strang = E₁(τ/2) E₀(τ) E₁(τ/2)."""
    E0, _ = subflow_matrices(blocks, tau)
    _, E1h = subflow_matrices(blocks, tau / 2)
    return E1h @ E0 @ E1h


def _check_stepsize(blocks, tau):
    lam_min = min(s.lam.min() for s in (blocks.s0, blocks.s1) if s.n)
    if not tau > 0 or tau * lam_min < DEGENERATE:
        raise DegenerateStepsizeError(
            f"I − e^{{−τÂ}} is numerically singular (τ·λ_min = {tau * lam_min:.3g})")


def stability_transform(blocks: BlockSystem, tau: float, with_inverse: bool = False):
    """Lower block-triangular L with ‖L S_Strang y‖₂ ≤ ‖L y‖₂.

    L = [[(I−e^{−τÂ₀₀})^{-1/2}Â₀₀^{1/2}, 0],
         [L₁₀ Â₀₀^{1/2},                (I−e^{−τÂ₁₁})^{-1/2}Â₁₁^{1/2}]]
    L₁₀ = (I−e^{−τÂ₁₁/2})^{1/2}(I+e^{−τÂ₁₁/2})^{-1/2} Â₁₁^{-1/2}Â₁₀Â₀₀^{-1/2}

    Returns ``(L, ‖L₁₀‖₂)``, plus L⁻¹ = E₁(τ/2)T if ``with_inverse``.
    """
    _require_spd(blocks)
    _check_stepsize(blocks, tau)
    s0, s1 = blocks.s0, blocks.s1
    n0 = blocks.n0
    om0 = -np.expm1(-tau * s0.lam)               # 1 − e^{−τλ}, accurate for small τλ
    om1 = -np.expm1(-tau * s1.lam)
    h1 = np.exp(-0.5 * tau * s1.lam)
    omh1 = -np.expm1(-0.5 * tau * s1.lam)
    sq0 = s0.f(np.sqrt(s0.lam))
    L10 = (s1.f(np.sqrt(omh1 / (1 + h1)) / np.sqrt(s1.lam)) @ blocks.A10
           @ s0.f(1 / np.sqrt(s0.lam)))
    L = np.zeros((n0 + blocks.n1,) * 2)
    L[:n0, :n0] = s0.f(np.sqrt(s0.lam / om0))
    L[n0:, :n0] = L10 @ sq0
    L[n0:, n0:] = s1.f(np.sqrt(s1.lam / om1))
    nrm = float(np.linalg.norm(L10, 2)) if L10.size else 0.0
    if not with_inverse:
        return L, nrm
    t0 = s0.f(np.sqrt(om0 / s0.lam))
    Linv = np.zeros_like(L)
    Linv[:n0, :n0] = t0
    Linv[n0:, :n0] = -_resolvent_factor(s1, tau / 2) @ blocks.A10 @ t0
    Linv[n0:, n0:] = s1.f(np.sqrt(om1 / s1.lam))
    return L, nrm, Linv


def symmetrized_lie(blocks: BlockSystem, tau: float) -> np.ndarray:
    """S̃ = T⁻¹ S_Lie T with T = blockdiag((I−e^{−τÂ₀₀})^{1/2}Â₀₀^{-1/2},
    e^{τÂ₁₁/2}(I−e^{−τÂ₁₁})^{1/2}Â₁₁^{-1/2}), formed in the closed form

        S̃ = [[e^{−τÂ₀₀} + WWᵀ, −W e^{−τÂ₁₁/2}], [−e^{−τÂ₁₁/2}Wᵀ, e^{−τÂ₁₁}]]

    with W = (I−e^{−τÂ₀₀})^{1/2}Â₀₀^{-1/2} Â₀₁ (I−e^{−τÂ₁₁})^{1/2}Â₁₁^{-1/2}.
    """
    _require_spd(blocks)
    s0, s1 = blocks.s0, blocks.s1
    n0 = blocks.n0
    W = (s0.f(np.sqrt(-np.expm1(-tau * s0.lam) / s0.lam)) @ blocks.A01
         @ s1.f(np.sqrt(-np.expm1(-tau * s1.lam) / s1.lam)))
    h1 = s1.f(np.exp(-0.5 * tau * s1.lam))
    S = np.zeros((n0 + blocks.n1,) * 2)
    S[:n0, :n0] = s0.f(np.exp(-tau * s0.lam)) + W @ W.T
    S[:n0, n0:] = -W @ h1
    S[n0:, :n0] = -h1 @ W.T
    S[n0:, n0:] = s1.f(np.exp(-tau * s1.lam))
    return S


def verify_stability(blocks: BlockSystem, tau: float, tol: float = 1e-10) -> dict:
    """Norms for the stability claim at one stepsize.

    Keys: ``norm`` (‖L S_Strang L⁻¹‖₂), ``pass``, ``L10_norm``, ``S_tilde_norm``,
    ``symmetry_defect`` (‖S̃ − S̃ᵀ‖₂/‖S̃‖₂) and ``similarity_defect``
    (‖L S_Strang L⁻¹ − S̃‖₂/‖S̃‖₂).
    """
    L, l10, Linv = stability_transform(blocks, tau, with_inverse=True)
    S = strang_propagator(blocks, tau)
    LSL = L @ S @ Linv
    St = symmetrized_lie(blocks, tau)
    st_norm = float(np.linalg.norm(St, 2))
    norm = float(np.linalg.norm(LSL, 2))
    scale = max(st_norm, 1e-300)
    return {
        "tau": float(tau),
        "norm": norm,
        "L10_norm": l10,
        "S_tilde_norm": st_norm,
        "symmetry_defect": float(np.linalg.norm(St - St.T, 2)) / scale,
        "similarity_defect": float(np.linalg.norm(LSL - St, 2)) / scale,
        "pass": bool(norm <= 1 + tol and l10 <= 1 + tol),
    }


def random_block_system(rng, n: int, eps: float = 1e-3, max_tries: int = 100) -> BlockSystem:
    """Â = GᵀG + εI with a random interior/boundary partition, filtered for an
    SPD Schur complement."""
    for _ in range(max_tries):
        G = rng.standard_normal((n, n))
        A = G.T @ G + eps * np.eye(n)
        n1 = int(rng.integers(1, n))
        perm = rng.permutation(n)
        blocks = BlockSystem.from_matrix(A, np.sort(perm[n1:]), np.sort(perm[:n1]))
        try:
            blocks.check()
        except PreconditionError:
            continue
        return blocks
    raise PreconditionError("could not draw a block system with SPD Schur complement")


STABILITY_COLUMNS = ("system", "tau", "L10_norm", "S_tilde_norm", "norm", "pass")
