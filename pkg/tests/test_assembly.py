import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from checks import (assembly_failures, inverse_estimate_ratios, invariant_coefficients,
                    lumping_error_ratios, smallest_eig)
from dynbc.assembly import (CoefficientSet, Field, Lumping, assemble, assemble_load,
                            evaluate_nonlinearity, lump, nonlinearity_jacobian, read_matrix,
                            surface_unit_matrices, write_matrix)
from dynbc.errors import CoefficientViolationError, InvalidArgumentError
from dynbc.mesh import DomainKind, Mesh, build_mesh, generate_square_mesh


def right_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                np.array([[0, 1], [1, 2], [2, 0]]), DomainKind.EXTERNAL).validate()


def test_right_triangle_stiffness():
    s = assemble(right_triangle(), CoefficientSet.constant())
    expected = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    np.testing.assert_allclose(s.K_bulk.toarray(), expected, atol=1e-15)


def test_right_triangle_lumped_mass():
    s = lump(assemble(right_triangle(), CoefficientSet.constant()), "full")
    np.testing.assert_allclose(s.M_bulk.diagonal(), [1 / 6] * 3, atol=1e-15)


def _two_vertex_edge_matrices(ell, mu, beta):
    # a thin triangle whose first boundary edge has length ell
    mesh = Mesh(np.array([[0.0, 0.0], [ell, 0.0], [0.3 * ell, 0.7]]), np.array([[0, 1, 2]]),
                np.array([[0, 1], [1, 2], [2, 0]]), DomainKind.EXTERNAL)
    s = assemble(mesh, CoefficientSet.constant(mu, 0.0, beta))
    lengths = mesh.edge_lengths
    return s, lengths


@pytest.mark.parametrize("mu,beta", [(1.0, 1.0), (2.5, 0.3)])
def test_edge_element_matrices(mu, beta):
    s, _ = _two_vertex_edge_matrices(0.8, mu, beta)
    mesh = s.mesh
    Ms, Ks = np.zeros((3, 3)), np.zeros((3, 3))
    for i, j in mesh.boundary_edges:
        ell = np.linalg.norm(mesh.vertices[i] - mesh.vertices[j])
        idx = np.ix_([i, j], [i, j])
        Ms[idx] += mu * ell / 6 * np.array([[2, 1], [1, 2]])
        Ks[idx] += beta / ell * np.array([[1, -1], [-1, 1]])
    np.testing.assert_allclose(s.M_surf.toarray(), Ms, atol=1e-14)
    np.testing.assert_allclose(s.K_surf.toarray(), Ks, atol=1e-14)
    lumped = lump(s, "full")
    diag = np.zeros(3)
    for i, j in mesh.boundary_edges:
        ell = np.linalg.norm(mesh.vertices[i] - mesh.vertices[j])
        diag[[i, j]] += mu * ell / 2
    np.testing.assert_allclose(lumped.M_surf.diagonal(), diag, atol=1e-14)


def test_square_constant_test():
    s = assemble(generate_square_mesh(2), CoefficientSet.constant(1.0, 1.0, 0.0))
    one = np.ones(9)
    assert one @ s.M @ one == pytest.approx(5.0, abs=1e-14)


@pytest.mark.parametrize("mode", ["full", "bulk_only"])
def test_lumping_preserves_row_sums(mode):
    s = assemble(build_mesh("disk", 3), CoefficientSet.constant(1.7, 1.0, 1.0))
    L = lump(s, mode)
    np.testing.assert_allclose(np.asarray(L.M.sum(axis=1)).ravel(),
                               np.asarray(s.M.sum(axis=1)).ravel(), atol=1e-15)
    assert L.lumping is Lumping.parse(mode)
    if mode == "bulk_only":
        assert (L.M_surf - s.M_surf).count_nonzero() == 0


def test_lumping_parse_aliases():
    assert Lumping.parse("FullLumped") is Lumping.FULL
    assert Lumping.parse("BulkOnlyLumped") is Lumping.BULK_ONLY
    with pytest.raises(InvalidArgumentError):
        Lumping.parse("sideways")


def test_lump_requires_consistent_input():
    s = assemble(generate_square_mesh(2), CoefficientSet.constant(), lumping="full")
    with pytest.raises(InvalidArgumentError):
        lump(s, "full")


def test_mu_violation():
    with pytest.raises(CoefficientViolationError):
        assemble(generate_square_mesh(2), CoefficientSet.constant(mu=0.0))
    neg = Field(lambda x, t: 1.0 - 2.0 * x[:, 0])
    with pytest.raises(CoefficientViolationError):
        assemble(generate_square_mesh(4), CoefficientSet(neg, 0.0, 0.0))


def test_beta_must_not_change_sign():
    bad = Field(lambda x, t: x[:, 0] - 0.5)
    with pytest.raises(CoefficientViolationError):
        assemble(generate_square_mesh(4), CoefficientSet(1.0, 0.0, bad))


@pytest.mark.parametrize("kind,n", [("square", 4), ("disk", 2), ("square", 8)])
def test_assembly_invariants(kind, n):
    mesh = build_mesh(kind, n)
    for name, coeffs in invariant_coefficients().items():
        assert assembly_failures(mesh, coeffs) == [], name


def test_zero_load():
    mesh = generate_square_mesh(3)
    b = assemble_load(mesh, CoefficientSet.constant(), None, None, 0.0)
    assert np.all(b == 0)
    b = assemble_load(mesh, CoefficientSet.constant(), lambda x, t: 0 * x[:, 0],
                      lambda x, t: 0 * x[:, 0], 0.0)
    assert np.all(b == 0)


def test_unit_bulk_load_is_support_area_over_three():
    mesh = generate_square_mesh(4)
    b = assemble_load(mesh, CoefficientSet.constant(), lambda x, t: np.ones(len(x)), None, 0.0)
    support = np.bincount(mesh.triangles.ravel(), np.repeat(mesh.signed_areas, 3),
                          minlength=mesh.n_vertices)
    np.testing.assert_allclose(b, support / 3, atol=1e-15)


@pytest.mark.parametrize("kind", ["square", "disk"])
def test_unit_surface_load_sums_to_perimeter(kind):
    mesh = build_mesh(kind, 4)
    b = assemble_load(mesh, CoefficientSet.constant(), None, lambda x, t: np.ones(len(x)), 0.0)
    assert b.sum() == pytest.approx(mesh.perimeter, rel=1e-14)
    assert np.all(b[mesh.interior_vertices] == 0)


def test_load_exact_for_quadratics():
    # the edge-midpoint rule integrates degree-2 integrands exactly
    mesh = generate_square_mesh(5)
    s = assemble(mesh, CoefficientSet.constant())
    x, y = mesh.vertices.T
    lin = 2 * x - y + 0.5
    b = assemble_load(mesh, CoefficientSet.constant(), lambda p, t: 2 * p[:, 0] - p[:, 1] + 0.5,
                      None, 0.0)
    np.testing.assert_allclose(b, s.M_bulk @ lin, atol=1e-15)


def test_nonlinearity_examples():
    mesh = generate_square_mesh(1)
    s = assemble(mesh, CoefficientSet.constant(1.0, 0.0, 0.0))
    sq = lambda u, x, t: u ** 2
    assert np.all(evaluate_nonlinearity(s, np.ones(4), None, None) == 0)
    assert evaluate_nonlinearity(s, np.ones(4), sq, sq).sum() == pytest.approx(5.0, abs=1e-14)
    sl = lump(s, "full")
    u = np.array([0.3, -1.2, 2.0, 0.7])
    ident = lambda v, x, t: v
    np.testing.assert_allclose(evaluate_nonlinearity(sl, u, ident, ident), sl.M @ u, atol=1e-15)


@pytest.mark.parametrize("lumping", ["consistent", "full"])
def test_nonlinearity_jacobian_matches_differences(lumping, rng):
    mesh = build_mesh("square", 4)
    s = assemble(mesh, CoefficientSet.constant(1.3, 0.0, 1.0), lumping=lumping)
    f = lambda u, x, t: u - u ** 3
    df = lambda u, x, t: 1 - 3 * u ** 2
    u, d = rng.standard_normal((2, mesh.n_vertices))
    eps = 1e-6
    fd = (evaluate_nonlinearity(s, u + eps * d, f, f)
          - evaluate_nonlinearity(s, u - eps * d, f, f)) / (2 * eps)
    J = nonlinearity_jacobian(s, u, df, df)
    np.testing.assert_allclose(J @ d, fd, atol=1e-8)


def test_time_dependent_assembly_changes_with_t():
    from dynbc.problems import builtin
    c = builtin("nonauto_square").coeffs
    mesh = generate_square_mesh(4)
    a, b = assemble(mesh, c, 0.0), assemble(mesh, c, 1.0)
    one = np.ones(mesh.n_vertices)
    assert one @ a.M @ one == pytest.approx(1 + 4 * 2.0)
    assert one @ b.M @ one == pytest.approx(1 + 4 * (2 + np.sin(1.0)))


def test_surface_unit_matrices():
    mesh = build_mesh("disk", 2)
    Ms, Ks = surface_unit_matrices(mesh)
    nb = len(mesh.boundary_vertices)
    assert Ms.shape == Ks.shape == (nb, nb)
    assert np.ones(nb) @ Ms @ np.ones(nb) == pytest.approx(mesh.perimeter)
    assert np.max(np.abs(Ks @ np.ones(nb))) < 1e-13


def test_matrix_export_roundtrip(tmp_path):
    s = assemble(build_mesh("square", 3), CoefficientSet.constant(1.0, 1.0, 1.0))
    p = tmp_path / "A.txt"
    write_matrix(s.A, p)
    rows = [tuple(map(float, ln.split()[:2])) for ln in p.read_text().splitlines()]
    assert rows == sorted(rows)
    B = read_matrix(p, s.A.shape[0])
    assert (B - s.A).count_nonzero() == 0


def test_lumping_quadrature_error_bounded():
    # |m(v,w) − m_h(v,w)| ≤ C h² ‖v‖_a ‖w‖_a with C independent of h
    for smooth in (False, True):
        r = lumping_error_ratios(levels=(4, 8, 16), pairs=20, smooth=smooth)
        assert np.all(r < 0.2)
        assert r[-1] <= 1.5 * r[0]


def test_inverse_estimate_bounded():
    rand, sup = inverse_estimate_ratios(levels=(4, 8, 16), samples=20)
    assert np.all(rand <= sup + 1e-12)
    assert np.all(sup < 10)
    assert np.all(sup[1:] / sup[:-1] < 1.25)


@given(st.floats(0.1, 10), st.one_of(st.just(0.0), st.floats(0.01, 5)),
       st.one_of(st.just(0.0), st.floats(0.01, 5)), st.integers(1, 6))
def test_property_symmetric_psd(mu, kappa, beta, n):
    s = assemble(generate_square_mesh(n), CoefficientSet.constant(mu, kappa, beta))
    assert abs(s.M - s.M.T).max() == 0
    assert abs(s.A - s.A.T).max() <= 1e-14 * abs(s.A).max()
    assert smallest_eig(s.M) > 0
    assert smallest_eig(s.A) > -1e-12
    if kappa > 0:
        assert smallest_eig(s.A) > 0
    one = np.ones(s.mesh.n_vertices)
    assert one @ s.M @ one == pytest.approx(1 + 4 * mu, rel=1e-13)
    assert one @ s.A @ one == pytest.approx(4 * kappa, abs=1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["consistent", "full"]))
def test_property_linear_nonlinearity_is_mass(seed, lumping):
    mesh = generate_square_mesh(3)
    s = assemble(mesh, CoefficientSet.constant(1.4, 0.0, 0.0), lumping=lumping)
    u = np.random.default_rng(seed).standard_normal(mesh.n_vertices)
    ident = lambda v, x, t: v
    # the load rules are exact for P1 × P1 products
    np.testing.assert_allclose(evaluate_nonlinearity(s, u, ident, ident), s.M @ u, atol=1e-13)
