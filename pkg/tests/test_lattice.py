import numpy as np
import pytest

from gibbskit import ops
from gibbskit.lattice import (DenseOperator, Lattice, build_model, classical_ising, random_chain,
                              tfim_chain, tfim_grid)


def grid_lattice(Lx, Ly):
    return tfim_grid(Lx, Ly, 1.0, 0.0).lattice


def test_tfim_zero_field_drops_field_terms():
    ham = tfim_chain(3, 1.0, 0.0)
    assert len(ham.terms) == 2
    xx = np.kron(ops.PAULI_X, ops.PAULI_X)
    for t in ham.terms:
        assert np.allclose(t.matrix, xx)


def test_tfim_noninteracting_spectrum():
    ham = tfim_chain(2, 0.0, 1.0)
    expected = np.kron(ops.PAULI_Z, np.eye(2)) + np.kron(np.eye(2), ops.PAULI_Z)
    assert np.allclose(ham.full_matrix(), expected)
    assert np.allclose(np.linalg.eigvalsh(ham.full_matrix()), [-2, 0, 0, 2])


def test_tfim_matches_direct_sum():
    N, J, D = 5, 0.7, 1.3
    ham = tfim_chain(N, J, D)
    H = np.zeros((2 ** N, 2 ** N))
    for j in range(N - 1):
        H += J * ops.embed(np.kron(ops.PAULI_X, ops.PAULI_X), [j, j + 1], N, 2).real
    for j in range(N):
        H += D * ops.embed(ops.PAULI_Z, [j], N, 2).real
    assert np.allclose(ham.full_matrix(), H, atol=1e-13)


def test_random_chain_derived_parameters(rng):
    ham = random_chain(8, rng, max_norm=1.0)
    norms = [np.linalg.svd(t.matrix, compute_uv=False)[0] for t in ham.terms]
    assert ham.k == 2
    assert ham.h <= 1.0 + 1e-12
    assert ham.h == pytest.approx(max(norms), abs=1e-12)
    per_vertex = np.zeros(8)
    for t, n in zip(ham.terms, norms):
        per_vertex[list(t.support)] += n
    assert ham.J == pytest.approx(per_vertex.max(), abs=1e-12)


def test_derived_parameters_idempotent(rng):
    ham = random_chain(6, rng)
    first = ham.derived()
    rebuilt = ham.with_terms(range(len(ham.terms)))
    again = rebuilt.with_terms(range(len(rebuilt.terms)))
    assert rebuilt.derived() == first == again.derived()


def test_build_model_errors():
    with pytest.raises(ValueError, match="unknown model"):
        build_model({"model": "potts", "N": 3})
    with pytest.raises(KeyError, match="N"):
        build_model({"model": "tfim_chain"})
    bad = {"model": "custom", "terms": [{"support": [0, 1], "matrix_re": [[0, 1, 0, 0], [0, 0, 0, 0],
                                                                          [0, 0, 0, 0], [0, 0, 0, 0]]}]}
    with pytest.raises(ValueError, match="Hermitian"):
        build_model(bad)
    with pytest.raises(ValueError, match="outside"):
        build_model({"model": "custom", "N": 2, "terms": [{"support": [0, 5], "matrix_re": np.eye(4).tolist()}]})


def test_custom_model_round_trip():
    spec = {"model": "custom", "d": 2, "terms": [
        {"support": [0, 1], "matrix_re": np.kron(ops.PAULI_X, ops.PAULI_X).tolist()},
        {"support": [1, 2], "matrix_re": np.kron(ops.PAULI_Z, ops.PAULI_Z).tolist()}]}
    ham = build_model(spec)
    assert ham.N == 3
    again = build_model(ham.to_json())
    assert np.allclose(again.full_matrix(), ham.full_matrix())


def test_unsorted_support_is_reordered():
    zx = np.kron(ops.PAULI_Z, ops.PAULI_X)
    ham = build_model({"model": "custom", "terms": [{"support": [1, 0], "matrix_re": zx.tolist()}]})
    assert ham.terms[0].support == (0, 1)
    assert np.allclose(ham.terms[0].matrix, np.kron(ops.PAULI_X, ops.PAULI_Z))


def test_lattice_invariants():
    with pytest.raises(ValueError):
        Lattice(3, 2, ((0, 0),))
    with pytest.raises(ValueError):
        Lattice(3, 1, ((0, 1),))
    lat = tfim_chain(6).lattice
    assert lat.k == 2
    assert lat.degree == 2


def test_chain_distances():
    lat = tfim_chain(6).lattice
    assert lat.distance([0], [1]) == 1
    assert lat.distance([0], [5]) == 5
    for i in range(6):
        for j in range(6):
            if i != j:
                assert lat.distance([i], [j]) == abs(i - j)
    with pytest.raises(ValueError):
        lat.distance([0, 1], [1, 2])


def test_grid_corner_distance():
    lat = grid_lattice(3, 3)
    assert lat.distance([0], [8]) == 4


def test_boundary():
    lat = tfim_chain(5).lattice
    assert lat.boundary([0, 1, 2]) == (2,)
    assert lat.boundary(range(5)) == ()
    grid = grid_lattice(3, 3)
    left = [0, 3, 6]
    assert grid.boundary(left) == tuple(left)
    for A in ([0], [1, 2], [0, 4, 8]):
        assert set(grid.boundary(A)) <= set(A)


def test_interaction_between():
    ham = tfim_chain(4, 1.0, 0.0)
    idx, norm = ham.interaction_between([0, 1], [2, 3])
    assert len(idx) == 1 and norm == pytest.approx(1.0)
    free = tfim_chain(4, 0.0, 1.0)
    assert free.interaction_between([0, 1], [2, 3]) == ([], 0.0)
    grid = tfim_grid(3, 3)
    A = [0, 1, 3, 4, 6, 7]
    B = [2, 5, 8]
    idx, _ = grid.interaction_between(A, B)
    assert len(idx) == 3


def test_single_bond_cut_norm_equals_J():
    for J in (0.5, 1.0, 2.0):
        ham = tfim_chain(6, J, 0.0)
        for cut in range(1, 6):
            _, norm = ham.interaction_between(range(cut), range(cut, 6))
            assert norm == pytest.approx(abs(J), abs=1e-12)


def test_dense_operator_embed_restrict(rng):
    mat = ops.random_hermitian(4, rng)
    op = DenseOperator(mat, (1, 3), 5, 2)
    big = op.embed((0, 1, 2, 3))
    assert np.allclose(big.restrict((1, 3)).matrix, mat)
    assert big.acts_trivially_outside((1, 3))
    assert not big.acts_trivially_outside((1,))


def test_big_endian_convention():
    z0 = ops.embed(ops.PAULI_Z, [0], 2, 2)
    assert np.allclose(np.diag(z0), [1, 1, -1, -1])


def test_classical_ising_is_diagonal():
    ham = classical_ising(6, 1.0, 0.5)
    assert ham.is_diagonal
    assert np.allclose(np.diag(ham.full_matrix()), ham.full_diagonal())
