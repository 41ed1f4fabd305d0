import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from dynbc.assembly import CoefficientSet, assemble
from dynbc.errors import DegenerateStepsizeError, PreconditionError, UnsupportedSizeError
from dynbc.mesh import build_mesh
from dynbc.stability import (BlockSystem, lie_propagator, random_block_system,
                             stability_transform, strang_propagator, subflow_matrices,
                             symmetrized_lie, verify_stability)
from dynbc.studies import stability_sweep

SCALAR = BlockSystem(np.array([[1.0]]), np.array([[0.5]]), np.array([[1.0]]))


def square_blocks(n=4, beta=0.0):
    s = assemble(build_mesh("square", n), CoefficientSet.constant(1.0, 1.0, beta), 0.0, "full")
    return BlockSystem.from_system(s)


def decoupled(rng, n0=4, n1=3):
    G0 = rng.standard_normal((n0, n0))
    G1 = rng.standard_normal((n1, n1))
    return BlockSystem(G0 @ G0.T + np.eye(n0), np.zeros((n0, n1)), G1 @ G1.T + np.eye(n1))


def test_scalar_subflow_entry():
    E0, E1 = subflow_matrices(SCALAR, 1.0)
    assert E0[0, 1] == pytest.approx(-(1 - np.exp(-1)) * 0.5, rel=1e-14)
    assert E0[0, 1] == pytest.approx(-0.31606, abs=5e-6)
    assert E1[1, 0] == pytest.approx(E0[0, 1], rel=1e-14)


def test_scalar_l10():
    _, l10 = stability_transform(SCALAR, 1.0)
    expected = np.sqrt((1 - np.exp(-0.5)) / (1 + np.exp(-0.5))) * 0.5
    assert l10 == pytest.approx(expected, rel=1e-14)
    assert l10 == pytest.approx(0.2474463, abs=1e-7)


def test_subflows_at_zero_are_identity():
    for M in subflow_matrices(square_blocks(2), 0.0):
        np.testing.assert_allclose(M, np.eye(M.shape[0]), atol=1e-15)


def test_subflows_match_expm(rng):
    b = random_block_system(rng, 7)
    n0 = b.n0
    E0, E1 = subflow_matrices(b, 0.4)
    # E₀ is the exact flow of y' = −[Â₀₀ Â₀₁; 0 0] y, E₁ likewise for the boundary row
    A0 = np.zeros_like(b.full)
    A0[:n0] = b.full[:n0]
    A1 = np.zeros_like(b.full)
    A1[n0:] = b.full[n0:]
    np.testing.assert_allclose(E0, sla.expm(-0.4 * A0), atol=1e-12)
    np.testing.assert_allclose(E1, sla.expm(-0.4 * A1), atol=1e-12)


def test_decoupled_cases(rng):
    b = decoupled(rng)
    tau = 0.7
    E0, _ = subflow_matrices(b, tau)
    np.testing.assert_allclose(E0, sla.block_diag(sla.expm(-tau * b.A00), np.eye(b.n1)),
                               atol=1e-12)
    blk = sla.block_diag(sla.expm(-tau * b.A00), sla.expm(-tau * b.A11))
    np.testing.assert_allclose(strang_propagator(b, tau), blk, atol=1e-12)
    L, l10 = stability_transform(b, tau)
    assert l10 == 0.0
    assert np.all(L[b.n0:, :b.n0] == 0)
    r = verify_stability(b, tau)
    expected = max(np.linalg.norm(blk[:b.n0, :b.n0], 2), np.linalg.norm(blk[b.n0:, b.n0:], 2))
    assert r["norm"] == pytest.approx(expected, rel=1e-12)
    assert r["norm"] < 1


def test_small_step_limit():
    b = square_blocks(4)
    tau = 1e-6
    S = strang_propagator(b, tau)
    assert np.linalg.norm(S - np.eye(len(S)), 2) <= 2 * tau * np.linalg.norm(b.full, 2)


def test_lie_and_strang_orderings(rng):
    b = random_block_system(rng, 6)
    E0, E1 = subflow_matrices(b, 0.3)
    _, E1h = subflow_matrices(b, 0.15)
    np.testing.assert_allclose(lie_propagator(b, 0.3), E0 @ E1, atol=1e-15)
    np.testing.assert_allclose(strang_propagator(b, 0.3), E1h @ E0 @ E1h, atol=1e-15)


def test_inverse_transform(rng):
    b = random_block_system(rng, 9)
    L, _, Linv = stability_transform(b, 0.5, with_inverse=True)
    np.testing.assert_allclose(L @ Linv, np.eye(len(L)), atol=1e-9)
    assert np.all(L[:b.n0, b.n0:] == 0)  # block lower-triangular


@pytest.mark.parametrize("tau", [0.01, 0.1, 1.0, 10.0])
def test_square_mesh_passes(tau):
    r = verify_stability(square_blocks(4), tau)
    assert r["pass"]
    assert r["L10_norm"] <= 1
    assert r["symmetry_defect"] <= 1e-10
    assert r["similarity_defect"] <= 1e-8


def test_symmetrized_lie_is_similar_to_lie(rng):
    b = random_block_system(rng, 8)
    tau = 0.2
    St = symmetrized_lie(b, tau)
    np.testing.assert_allclose(np.sort(np.abs(np.linalg.eigvals(St))),
                               np.sort(np.abs(np.linalg.eigvals(lie_propagator(b, tau)))),
                               atol=1e-10)


@given(st.integers(0, 2 ** 32 - 1), st.integers(3, 20),
       st.sampled_from([1e-3, 1e-2, 1e-1, 1.0, 10.0]))
def test_random_systems_contract(seed, n, tau):
    b = random_block_system(np.random.default_rng(seed), n)
    r = verify_stability(b, tau)
    assert r["S_tilde_norm"] <= 1 + 1e-10
    assert r["symmetry_defect"] <= 1e-10
    assert r["pass"]
    assert b.coupling_norm() <= 1 + 1e-10


def test_sweep_rows():
    rows = stability_sweep(levels=(2, 4), taus=(0.1, 1.0), n_random=5, seed=3)
    assert len(rows) == 2 * 2 + 5 * 5
    assert all(r["pass"] for r in rows)
    assert rows == stability_sweep(levels=(2, 4), taus=(0.1, 1.0), n_random=5, seed=3)


def test_degenerate_stepsize():
    with pytest.raises(DegenerateStepsizeError):
        stability_transform(SCALAR, 1e-16)
    with pytest.raises(DegenerateStepsizeError):
        verify_stability(SCALAR, 0.0)


def test_precondition_errors():
    bad = BlockSystem(np.array([[0.0]]), np.array([[1.0]]), np.array([[1.0]]))
    with pytest.raises(PreconditionError):
        subflow_matrices(bad, 0.1)
    with pytest.raises(PreconditionError):
        bad.check()
    s = assemble(build_mesh("square", 3), CoefficientSet.constant(1.0, 1.0, 0.0))
    with pytest.raises(PreconditionError):
        BlockSystem.from_system(s)
    with pytest.raises(UnsupportedSizeError):
        BlockSystem.from_matrix(np.eye(700), np.arange(600), np.arange(600, 700))
