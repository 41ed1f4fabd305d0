"""Semi-discrete ODE systems M(t) u' + A(t) u = b(t) + F(u).

:class:`SemiDiscrete` wraps a mesh and a :class:`~dynbc.problems.ProblemSpec`;
:class:`MatrixODE` wraps plain matrices for model-problem tests. Both expose
the interface the integrators consume.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .assembly import (Lumping, assemble, assemble_load, evaluate_nonlinearity,
                       nonlinearity_jacobian)
from .errors import ConfigurationError, InvalidArgumentError, PreconditionError
from .mesh import Mesh
from .ritz import ritz_project


class SemiDiscrete:
    """Finite element semi-discretisation of a problem on a mesh.

    Parameters
    ----------
    mesh : Mesh
    problem : ProblemSpec
    lumping : Lumping or str
    source : {"continuous", "interpolant", "ritz"}
        ``continuous`` tests the problem's sources against the basis.
        ``interpolant`` uses b = M I_h∂_t u + A I_h u (minus F(I_h u)), which
        makes the nodal interpolant of the exact solution the exact
        semi-discrete solution. ``ritz`` does the same with the Ritz
        projection R_h in place of I_h (time-independent coefficients only,
        so that R_h commutes with ∂_t). Both isolate time-stepping errors.
    """

    def __init__(self, mesh: Mesh, problem, lumping=Lumping.CONSISTENT,
                 source: str = "continuous"):
        self.mesh = mesh
        self.problem = problem
        self.lumping = Lumping.parse(lumping)
        if source not in ("continuous", "interpolant", "ritz"):
            raise ConfigurationError(f"unknown source mode {source!r}")
        if source != "continuous":
            if problem.exact is None:
                raise ConfigurationError(f"{source} source needs an exact solution")
            problem.exact.require("dt_u")
        if source == "ritz":
            problem.exact.require("dt_grad_u")
            if problem.coeffs.time_dependent:
                raise ConfigurationError("ritz source needs time-independent coefficients")
        self.source = source
        self.n = mesh.n_vertices
        self.time_dependent = problem.coeffs.time_dependent
        self._systems: dict = {}
        self._f = problem.sources() if source == "continuous" else (None, None)

    def reference(self, t):
        """Exact semi-discrete solution for the discrete source modes."""
        if self.source == "ritz":
            return self.ritz(t)
        if self.source == "interpolant":
            return self.interpolate(t)
        raise ConfigurationError("continuous source has no closed-form discrete solution")

    # -- matrices ----------------------------------------------------------
    @property
    def boundary(self):
        return self.mesh.boundary_vertices

    @property
    def interior(self):
        return self.mesh.interior_vertices

    def system(self, t: float):
        key = 0.0 if not self.time_dependent else float(t)
        sysm = self._systems.get(key)
        if sysm is None:
            if len(self._systems) > 8:
                self._systems.clear()
            sysm = assemble(self.mesh, self.problem.coeffs, key, self.lumping)
            self._systems[key] = sysm
        return sysm

    def matrices(self, t):
        s = self.system(t)
        return s.M, s.A

    def split_matrices(self, t):
        s = self.system(t)
        return s.A_bulk, s.A_surf

    def mass_diag(self, t):
        s = self.system(t)
        if not s.is_diagonal_mass:
            raise PreconditionError(
                f"method needs a diagonal mass matrix; got lumping={self.lumping.value}, "
                "use full lumping")
        return s.M_diag

    # -- right-hand side ---------------------------------------------------
    def _nodal(self, t):
        ex = self.problem.exact
        if self.source == "ritz":
            s = self.system(t)
            return (ritz_project(ex, s, t=t), ritz_project(ex.time_derivative(), s, t=t))
        x = self.mesh.vertices
        return ex.u(x, t), ex.dt_u(x, t)

    def load_split(self, t):
        """Bulk-integral and surface-integral parts (b_Ω, b_Γ) of the load."""
        if self.source != "continuous":
            s = self.system(t)
            u, du = self._nodal(t)
            bb = s.M_bulk @ du + s.A_bulk @ u
            bs = s.M_surf @ du + s.A_surf @ u
            nl = self.problem.nonlinearity
            if nl is not None:
                bb = bb - evaluate_nonlinearity(s, u, nl.f_bulk, None)
                bs = bs - evaluate_nonlinearity(s, u, None, nl.f_surf)
            return bb, bs
        fb, fs = self._f
        if fb is None and fs is None:
            return np.zeros(self.n), np.zeros(self.n)
        return assemble_load(self.mesh, self.problem.coeffs, fb, fs, t, split=True)

    def load(self, t):
        bb, bs = self.load_split(t)
        return bb + bs

    # -- nonlinearity --------------------------------------------------------
    @property
    def is_linear(self) -> bool:
        return self.problem.nonlinearity is None

    def F(self, u, t):
        nl = self.problem.nonlinearity
        if nl is None:
            return np.zeros(self.n)
        return evaluate_nonlinearity(self.system(t), u, nl.f_bulk, nl.f_surf)

    def dF(self, u, t):
        nl = self.problem.nonlinearity
        if nl is None:
            return sp.csr_matrix((self.n, self.n))
        return nonlinearity_jacobian(self.system(t), u, nl.df_bulk, nl.df_surf)

    # -- reference values ------------------------------------------------------
    def interpolate(self, t):
        if self.problem.exact is None:
            raise ConfigurationError("no exact solution to interpolate")
        return self.problem.exact.u(self.mesh.vertices, t)

    def ritz(self, t, shift=None):
        if self.problem.exact is None:
            raise ConfigurationError("no exact solution to project")
        return ritz_project(self.problem.exact, self.system(t), shift, t=t)

    def initial_value(self):
        """Ritz projection of the exact initial value if known, else the interpolant of u0."""
        if self.problem.u0 is None and self.problem.exact is not None:
            return self.ritz(0.0)
        return self.problem.initial(self.mesh.vertices)

    def start_values(self, k: int, tau: float, mode: str):
        """Exact starting values u^0..u^{k−1}, or None for bootstrapping."""
        if mode == "bootstrap":
            return None
        if mode == "exact_ritz":
            return [self.ritz(j * tau) for j in range(k)]
        if mode == "exact_interpolant":
            return [self.interpolate(j * tau) for j in range(k)]
        raise ConfigurationError(f"unknown startup mode {mode!r}")


@dataclass
class _MatrixSystem:
    M: object
    A: object
    A_bulk: object
    A_surf: object


class MatrixODE:
    """M u' + A u = b(t) with fixed matrices; for model problems and tests.

    ``boundary`` lists the indices treated as surface unknowns by the
    splitting methods; ``A_surf`` defaults to zero.
    """

    def __init__(self, M, A, b: Optional[Callable] = None, A_surf=None, boundary=None,
                 exact: Optional[Callable] = None, u0=None):
        self.M = sp.csr_matrix(np.atleast_2d(M) if not sp.issparse(M) else M)
        self.A = sp.csr_matrix(np.atleast_2d(A) if not sp.issparse(A) else A)
        self.n = self.M.shape[0]
        self.A_surf = (sp.csr_matrix((self.n, self.n)) if A_surf is None
                       else sp.csr_matrix(A_surf))
        self.A_bulk = (self.A - self.A_surf).tocsr()
        self._b = b
        self.boundary = (np.array([], dtype=int) if boundary is None
                         else np.asarray(boundary, dtype=int))
        mask = np.ones(self.n, dtype=bool)
        mask[self.boundary] = False
        self.interior = np.flatnonzero(mask)
        self.exact = exact
        self.u0 = None if u0 is None else np.asarray(u0, dtype=float)
        self.time_dependent = False
        self.is_linear = True

    def matrices(self, t):
        return self.M, self.A

    def split_matrices(self, t):
        return self.A_bulk, self.A_surf

    def mass_diag(self, t):
        off = self.M - sp.diags(self.M.diagonal())
        if off.count_nonzero():
            raise PreconditionError("method needs a diagonal mass matrix")
        return self.M.diagonal()

    def load(self, t):
        bb, bs = self.load_split(t)
        return bb + bs

    def load_split(self, t):
        # sources act on the bulk part unless given as a pair
        if self._b is None:
            return np.zeros(self.n), np.zeros(self.n)
        val = self._b(t)
        if isinstance(val, tuple):
            return tuple(np.asarray(v, dtype=float) for v in val)
        return np.asarray(val, dtype=float), np.zeros(self.n)

    def F(self, u, t):
        return np.zeros(self.n)

    def dF(self, u, t):
        return sp.csr_matrix((self.n, self.n))

    def initial_value(self):
        if self.u0 is not None:
            return self.u0.copy()
        if self.exact is not None:
            return np.asarray(self.exact(0.0), dtype=float)
        raise InvalidArgumentError("no initial value")

    def start_values(self, k, tau, mode):
        if mode == "bootstrap":
            return None
        if self.exact is None:
            raise ConfigurationError("exact startup needs an exact solution")
        return [np.asarray(self.exact(j * tau), dtype=float) for j in range(k)]
