import numpy as np
import pytest
from hypothesis import given, strategies as st

from checks import ritz_error_table
from dynbc.assembly import CoefficientSet, assemble
from dynbc.mesh import build_mesh, generate_square_mesh
from dynbc.problems import ExactSolution, builtin, double_well
from dynbc.ritz import (NORM_NAMES, default_shift, discrete_energy, eoc, error_norms,
                        mass_norm, ritz_project)


def linear_solution(a, b, c):
    return ExactSolution(lambda x, t: a + b * x[:, 0] + c * x[:, 1],
                         lambda x, t: np.zeros(len(x)),
                         lambda x, t: np.tile([b, c], (len(x), 1)).astype(float),
                         lambda x, t: np.zeros((len(x), 2, 2)))


@pytest.mark.parametrize("kind,coeffs", [
    ("square", CoefficientSet.constant(1.0, 1.0, 1.0)),
    ("disk", CoefficientSet.constant(2.0, 0.0, 0.5)),
    ("square", CoefficientSet.constant(1.0, -0.7, 0.0)),
])
def test_ritz_reproduces_linear_functions(kind, coeffs):
    mesh = build_mesh(kind, 4)
    ex = linear_solution(0.3, -1.2, 2.0)
    r = ritz_project(ex, assemble(mesh, coeffs))
    np.testing.assert_allclose(r, ex.u(mesh.vertices, 0.0), atol=1e-12)


def test_ritz_constant_without_shift():
    mesh = build_mesh("disk", 3)
    s = assemble(mesh, CoefficientSet.constant(1.0, 2.0, 1.0))
    assert default_shift(mesh, s.coeffs, 0.0) == 0.0
    r = ritz_project(linear_solution(1.5, 0, 0), s, shift=0.0)
    np.testing.assert_allclose(r, 1.5, atol=1e-13)


def test_default_shift():
    mesh = generate_square_mesh(3)
    assert default_shift(mesh, CoefficientSet.constant(1, 0.0, 1), 0) == 1.0
    assert default_shift(mesh, CoefficientSet.constant(1, -2.0, 1), 0) == 3.0
    assert default_shift(mesh, CoefficientSet.constant(1, 0.5, 1), 0) == 0.0


@pytest.mark.parametrize("name", ["coupled_square", "wentzell_square", "coupled_disk",
                                  "nonauto_square"])
def test_a_orthogonality_residual(name):
    p = builtin(name)
    mesh = build_mesh(p.domain_kind, 8)
    _, res = ritz_project(p.exact, assemble(mesh, p.coeffs, 0.4), return_residual=True)
    assert res <= 1e-10


def test_ritz_idempotent_on_fe_functions():
    mesh = generate_square_mesh(6)
    s = assemble(mesh, CoefficientSet.constant(1.0, 1.0, 1.0))
    r1 = ritz_project(builtin("coupled_square").exact, s)
    r2 = ritz_project(_fe_solution(mesh, r1), s)
    np.testing.assert_allclose(r2, r1, atol=1e-11)


def _fe_solution(mesh, nodal):
    """Exact-solution bundle for a P1 function (point location by barycentrics)."""
    from dynbc.quadrature import bulk_gradients
    g = bulk_gradients(mesh)
    V = mesh.vertices[mesh.triangles]
    grads = np.einsum("tad,ta->td", g, nodal[mesh.triangles])

    def locate(x):
        d = V[None, :, :, :] - x[:, None, None, :]
        cross = lambda a, b: a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        c0 = cross(d[:, :, 0], d[:, :, 1])
        c1 = cross(d[:, :, 1], d[:, :, 2])
        c2 = cross(d[:, :, 2], d[:, :, 0])
        inside = (c0 >= -1e-13) & (c1 >= -1e-13) & (c2 >= -1e-13)
        return np.argmax(inside, axis=1)

    def u(x, t):
        tri = locate(x)
        base = nodal[mesh.triangles[tri, 0]]
        return base + np.einsum("id,id->i", grads[tri], x - V[tri, 0])

    def grad(x, t):
        # a boundary point has a single neighbouring triangle, so this is the edge gradient
        return grads[locate(x)]

    return ExactSolution(u, grad_u=grad)


def test_error_norms_vanish_for_linear():
    mesh = build_mesh("disk", 3)
    coeffs = CoefficientSet.constant(1.0, 1.0, 1.0)
    ex = linear_solution(0.1, 2.0, -0.5)
    errs = error_norms(ex.u(mesh.vertices, 0), ex, mesh, coeffs, 0.0)
    assert set(errs) == set(NORM_NAMES)
    assert max(errs.values()) <= 1e-13


def test_error_norm_constant_test():
    mesh = generate_square_mesh(1)
    coeffs = CoefficientSet.constant(1.0, 1.0, 0.0)
    zero = linear_solution(0, 0, 0)
    errs = error_norms(np.ones(4), zero, mesh, coeffs, 0.0)
    assert errs["H_combined"] ** 2 == pytest.approx(5.0, abs=1e-12)
    M = assemble(mesh, coeffs).M
    assert errs["H_combined"] == pytest.approx(mass_norm(np.ones(4), M), abs=1e-12)


def test_ritz_rates_coupled():
    tab, res = ritz_error_table(builtin("coupled_square"), (4, 8, 16))
    assert max(res) <= 1e-10
    assert np.all(np.abs(tab.rates("energy") - 1) <= 0.1)
    assert np.all(tab.rates("H_combined") >= 1.85)


def test_ritz_rates_wentzell_disk():
    p = builtin("coupled_disk").with_coefficients(beta=0.0)
    tab, _ = ritz_error_table(p, (4, 8, 16))
    assert np.all(tab.rates("L2_bulk") >= 1.85)
    assert np.all(tab.rates("Hminus_half_surf") >= 1.85)


def test_eoc_examples():
    np.testing.assert_allclose(eoc([0.1, 0.05], [0.1, 0.025]), [2.0])
    np.testing.assert_allclose(eoc([0.1, 0.05], [0.1, 0.05]), [1.0])
    np.testing.assert_allclose(eoc([0.1, 0.05, 0.025], [3.0, 3.0, 3.0]), [0.0, 0.0])
    assert np.isnan(eoc([0.1, 0.05], [0.1, 0.0])[0])
    assert len(eoc([0.1], [1.0])) == 0


@given(st.lists(st.floats(1e-8, 1e3), min_size=2, max_size=8), st.floats(0.5, 4.0))
def test_eoc_recovers_power_law(consts, p):
    h = 0.5 ** np.arange(len(consts))
    e = 3.7 * h ** p
    np.testing.assert_allclose(eoc(h, e), p, rtol=1e-9)


def test_discrete_energy_examples():
    mesh = generate_square_mesh(4)
    s = assemble(mesh, CoefficientSet.constant(1.0, 0.0, 1.0))
    nl = double_well()
    n = mesh.n_vertices
    assert discrete_energy(np.zeros(n), s, nl) == pytest.approx(1.0 + 4.0, abs=1e-13)
    for c in (1.0, -1.0):
        assert discrete_energy(np.full(n, c), s, nl) == pytest.approx(0.0, abs=1e-13)
    u = np.random.default_rng(3).standard_normal(n)
    assert discrete_energy(u, s) == pytest.approx(0.5 * u @ s.A @ u, rel=1e-13)
