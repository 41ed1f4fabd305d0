import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynbc.errors import InvalidArgumentError, InvalidMeshError
from dynbc.mesh import (DomainKind, Mesh, boundary_arclengths, build_mesh,
                        generate_disk_mesh, generate_square_mesh, mesh_ladder, read_mesh,
                        refine, write_mesh)


def _edge_set(mesh):
    return {tuple(sorted(e)) for e in mesh.boundary_edges.tolist()}


def _one_triangle_edges(mesh):
    count = {}
    for tri in mesh.triangles.tolist():
        for a, b in ((0, 1), (1, 2), (2, 0)):
            e = tuple(sorted((tri[a], tri[b])))
            count[e] = count.get(e, 0) + 1
    return {e for e, c in count.items() if c == 1}


def _is_single_loop(mesh):
    be = mesh.boundary_edges
    return bool(np.all(be[1:, 0] == be[:-1, 1]) and be[-1, 1] == be[0, 0]
                and len(set(be[:, 0].tolist())) == len(be))


@pytest.mark.parametrize("n,nv,nt,nb", [(1, 4, 2, 4), (2, 9, 8, 8), (5, 36, 50, 20)])
def test_square_counts(n, nv, nt, nb):
    m = generate_square_mesh(n)
    assert (m.n_vertices, m.n_triangles, len(m.boundary_edges)) == (nv, nt, nb)


def test_square_h():
    assert generate_square_mesh(4).h == pytest.approx(math.sqrt(2) / 4, abs=1e-15)
    assert generate_square_mesh(4).h == pytest.approx(0.35355, abs=1e-5)


@pytest.mark.parametrize("n", [0, -3])
def test_square_rejects_bad_n(n):
    with pytest.raises(InvalidArgumentError):
        generate_square_mesh(n)


def test_hexagon():
    m = generate_disk_mesh(6)
    b = m.vertices[m.boundary_edges[:, 0]]
    angles = np.sort(np.mod(np.arctan2(b[:, 1], b[:, 0]), 2 * np.pi))
    np.testing.assert_allclose(angles, np.arange(6) * np.pi / 3, atol=1e-14)
    np.testing.assert_allclose(np.hypot(*b.T), 1.0, atol=1e-15)
    np.testing.assert_allclose(boundary_arclengths(m), 1.0, atol=1e-14)
    assert boundary_arclengths(m).sum() == pytest.approx(6.0)


@pytest.mark.parametrize("nb", [4, 7, 31])
def test_disk_rejects_bad_count(nb):
    with pytest.raises(InvalidArgumentError):
        generate_disk_mesh(nb)


@pytest.mark.parametrize("nb", [6, 32, 64, 128])
def test_disk_quality(nb):
    m = generate_disk_mesh(nb).validate()
    r = np.hypot(*m.vertices[m.boundary_vertices].T)
    assert np.max(np.abs(r - 1)) <= 1e-12
    assert m.min_angle() >= 20.0
    e = m.edge_lengths
    assert e.max() / e.min() <= 4.0


def test_square_arclengths():
    lens = boundary_arclengths(generate_square_mesh(2))
    assert len(lens) == 8
    np.testing.assert_allclose(lens, 0.5, atol=1e-15)
    assert lens.sum() == pytest.approx(4.0)


def test_disk_256_perimeter():
    # inscribed 256-gon: 2·256·sin(π/256)
    total = boundary_arclengths(generate_disk_mesh(256)).sum()
    assert total == pytest.approx(2 * 256 * math.sin(math.pi / 256), abs=1e-12)
    assert abs(total - 2 * math.pi) <= 1e-3


def test_refine_square_matches_generator():
    a, b = refine(generate_square_mesh(1)), generate_square_mesh(2)
    key = lambda m: {tuple(sorted(tuple(np.round(m.vertices[i], 12)) for i in t))
                     for t in m.triangles.tolist()}
    assert key(a) == key(b)
    assert a.h == pytest.approx(b.h)


@pytest.mark.parametrize("kind,n", [("square", 2), ("disk", 2), ("disk", 3)])
def test_refine_invariants(kind, n):
    m = build_mesh(kind, n)
    ratios = []
    for _ in range(3):
        r = refine(m).validate()
        assert r.n_triangles == 4 * m.n_triangles
        assert _is_single_loop(r)
        assert _edge_set(r) == _one_triangle_edges(r)
        if kind == "disk":
            rad = np.hypot(*r.vertices[r.boundary_vertices].T)
            assert np.max(np.abs(rad - 1)) <= 1e-12
            assert 0.4 < r.h / m.h < 0.6
        else:
            assert r.h == pytest.approx(m.h / 2)
        ratios.append(r.edge_lengths.max() / r.edge_lengths.min())
        m = r
    assert max(ratios) <= 4.0


@given(st.integers(1, 12))
def test_square_mesh_invariants(n):
    m = generate_square_mesh(n)
    assert np.all(m.signed_areas > 0)
    assert m.area == pytest.approx(1.0)
    assert m.perimeter == pytest.approx(4.0)
    assert _is_single_loop(m)
    assert _edge_set(m) == _one_triangle_edges(m)
    assert m.h == pytest.approx(np.max(m.edge_lengths))
    assert m.h == pytest.approx(math.sqrt(2) / n)


@given(st.integers(3, 40).map(lambda k: 2 * k))
def test_disk_mesh_invariants(nb):
    m = generate_disk_mesh(nb)
    m.validate()
    assert np.all(m.signed_areas > 0)
    assert len(m.boundary_edges) == nb
    assert _edge_set(m) == _one_triangle_edges(m)
    assert m.min_angle() >= 20.0
    assert m.edge_lengths.max() / m.edge_lengths.min() <= 4.0


def test_validate_catches_clockwise():
    m = generate_square_mesh(2)
    bad = Mesh(m.vertices, m.triangles[:, ::-1].copy(), m.boundary_edges, DomainKind.SQUARE)
    with pytest.raises(InvalidMeshError):
        bad.validate()


def test_validate_catches_broken_loop():
    m = generate_square_mesh(2)
    bad = Mesh(m.vertices, m.triangles, m.boundary_edges[:-1].copy(), DomainKind.SQUARE)
    with pytest.raises(InvalidMeshError):
        bad.validate()


def test_mesh_is_read_only():
    m = generate_square_mesh(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0


def test_ladder_uses_refinement_for_doubling_levels():
    ms = mesh_ladder("disk", [2, 4, 8])
    # refined disk meshes keep every coarse vertex
    coarse = {tuple(np.round(v, 12)) for v in ms[0].vertices}
    fine = {tuple(np.round(v, 12)) for v in ms[1].vertices}
    assert coarse <= fine
    assert [m.n_triangles for m in ms] == [ms[0].n_triangles * 4 ** i for i in range(3)]


@pytest.mark.parametrize("kind,n", [("square", 3), ("disk", 2)])
def test_mesh_roundtrip(tmp_path, kind, n):
    m = build_mesh(kind, n)
    p = tmp_path / "m.txt"
    write_mesh(m, p)
    r = read_mesh(p)
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.triangles, m.triangles)
    assert np.array_equal(r.boundary_edges, m.boundary_edges)
    first = p.read_text().splitlines()[0].split()
    assert list(map(int, first)) == [m.n_vertices, m.n_triangles, len(m.boundary_edges)]
