import itertools
import math

import numpy as np
import pytest

from gibbskit import closed_forms, cluster, ops, oracle
from gibbskit.cluster import Cluster
from gibbskit.lattice import classical_ising, from_terms, random_chain, tfim_chain, tfim_grid


def brute_force_counts(hyperedges, m_max):
    """Count multisets of hyperedges whose distinct edges form a connected overlap graph."""
    def connected(edges):
        edges = list(edges)
        seen, stack = {edges[0]}, [edges[0]]
        while stack:
            a = stack.pop()
            for b in edges:
                if b not in seen and set(hyperedges[a]) & set(hyperedges[b]):
                    seen.add(b)
                    stack.append(b)
        return len(seen) == len(edges)

    out = {}
    for m in range(1, m_max + 1):
        combos = itertools.combinations_with_replacement(range(len(hyperedges)), m)
        out[m] = sum(1 for c in combos if connected(set(c)))
    return out


def test_chain_of_three_counts():
    ham = tfim_chain(3, 1.0, 0.0)
    counts = cluster.count_clusters_by_size(ham, 2)
    assert counts[1] == 2
    assert counts[1] + counts[2] == 5
    sizes2 = sorted(W.multiplicities for W in cluster.enumerate_connected_clusters(ham, 2) if W.size == 2)
    assert sizes2 == [((0, 1), (1, 1)), ((0, 2),), ((1, 2),)]


@pytest.mark.parametrize("ham", [tfim_grid(2, 2, 1.0, 0.0), tfim_chain(6, 1.0, 0.0), tfim_grid(2, 3, 1.0, 1.0)])
def test_counts_match_brute_force(ham):
    expected = brute_force_counts(ham.lattice.hyperedges, 4)
    assert cluster.count_clusters_by_size(ham, 4) == expected


def test_count_growth_bound():
    ham = tfim_grid(3, 3)
    counts = cluster.count_clusters_by_size(ham, 3)
    for m, c in counts.items():
        assert c <= ham.N * (math.e * ham.degree) ** m


def test_enumeration_is_duplicate_free():
    ham = tfim_grid(2, 3)
    seen = [W.multiplicities for W in cluster.enumerate_connected_clusters(ham, 4)]
    assert len(seen) == len(set(seen))
    assert all(Cluster(w).is_connected(ham.lattice) for w in seen)


def test_first_order_contribution():
    ham = tfim_chain(4, 1.0, 0.0)
    assert cluster.cluster_derivative(ham, 0.7, Cluster.from_dict({0: 1})) == pytest.approx(0.0, abs=1e-15)
    shifted = from_terms(2, 2, [((0, 1), np.kron(ops.PAULI_X, ops.PAULI_X) + 0.3 * np.eye(4))])
    assert cluster.cluster_derivative(shifted, 0.7, Cluster.from_dict({0: 1})) == pytest.approx(-0.7 * 0.3)


def test_second_order_single_bond():
    for J, beta in ((1.0, 0.3), (0.4, 2.0)):
        ham = tfim_chain(2, J, 0.0)
        value = cluster.cluster_derivative(ham, beta, Cluster.from_dict({0: 2}))
        # log cosh(x) = x^2/2 - x^4/12 + ...
        assert value == pytest.approx(beta ** 2 * J ** 2 / 2, rel=1e-12)
        fourth = cluster.cluster_derivative(ham, beta, Cluster.from_dict({0: 4}))
        assert fourth == pytest.approx(-(beta * J) ** 4 / 12, rel=1e-10)


def test_disconnected_clusters_vanish(rng):
    for _ in range(30):
        ham = random_chain(6, rng)
        a, b = sorted(rng.choice([0, 1, 2, 3, 4], size=2, replace=False))
        if b - a < 2:
            continue
        W = Cluster.from_dict({int(a): int(rng.integers(1, 3)), int(b): int(rng.integers(1, 3))})
        assert abs(cluster.cluster_derivative(ham, 1.0, W)) <= 1e-10


def test_order_cap():
    with pytest.raises(ValueError):
        cluster.cluster_derivative(tfim_chain(3), 0.1, Cluster.from_dict({0: 13}))


def test_series_at_beta_zero():
    ham = tfim_chain(6)
    res = cluster.log_partition_series(ham, 0.0, 5)
    assert res.log_Z_estimate == 6 * math.log(2)
    assert res.error_bound == 0.0


def test_series_refuses_outside_radius():
    ham = tfim_chain(8)
    bstar = cluster.beta_star(ham)
    assert bstar == pytest.approx(1 / (2 * math.e ** 2 * ham.h * 2 * 3))
    with pytest.raises(ValueError, match="beta\\*"):
        cluster.log_partition_series(ham, 0.05, 6)
    with pytest.raises(ValueError):
        cluster.log_partition_series(ham, 1.5 * bstar, 2)


def test_tfim_series_with_radius_override():
    ham = tfim_chain(8)
    res = cluster.log_partition_series(ham, 0.05, 6, enforce_radius=False)
    err = abs(res.log_Z_estimate - oracle.gibbs(ham, 0.05).log_Z)
    assert err <= res.error_bound
    assert err <= 1e-6


def test_classical_ising_series():
    ham = classical_ising(10, 1.0, 0.0)
    res = cluster.log_partition_series(ham, 0.1, 8, enforce_radius=False)
    err = abs(res.log_Z_estimate - closed_forms.classical_ising_log_z(10, 1.0, 0.0, 0.1))
    assert err <= res.error_bound
    assert err < 1e-8


def test_series_consistency_random_models(rng):
    for _ in range(20):
        ham = random_chain(6, rng)
        beta = cluster.beta_star(ham) / 4
        exact = oracle.gibbs(ham, beta).log_Z
        errors = []
        for M in range(7):
            res = cluster.log_partition_series(ham, beta, M)
            err = abs(res.log_Z_estimate - exact)
            assert err <= res.error_bound
            errors.append(err)
        assert errors[-1] < errors[0]
        assert all(row["passed"] for row in res.diagnostics["coefficient_check"])


def test_grouped_and_cluster_sums_agree(rng):
    ham = random_chain(5, rng)
    beta = cluster.beta_star(ham) / 2
    a = cluster.log_partition_series(ham, beta, 5, method="grouped")
    b = cluster.log_partition_series(ham, beta, 5, method="clusters")
    assert np.allclose(a.K, b.K, rtol=1e-10, atol=1e-12)


def test_local_expectation():
    ham = tfim_chain(8)
    est, bound = cluster.local_expectation_series(ham, 0.0, 2, 4)
    assert est == 0.0 and bound == 0.0
    beta = 0.05
    st = oracle.gibbs(ham, beta)
    est, _ = cluster.local_expectation_series(ham, beta, 3, 6, enforce_radius=False)
    assert abs(est - st.expectation(ham.term_operator(3).full())) < 1e-6
    assert est == pytest.approx(cluster.local_expectation_by_clusters(ham, beta, 3, 6), abs=1e-12)


def test_local_expectation_single_bond():
    J = 1.0
    ham = tfim_chain(2, J, 0.0)
    beta = cluster.beta_star(ham) / 2
    est, bound = cluster.local_expectation_series(ham, beta, 0, 9)
    exact = -J * math.tanh(beta * J)
    assert abs(est - exact) <= bound
    assert abs(est - exact) < 1e-12


def test_correlator_order_bound():
    ham = tfim_chain(8, 1.0, 0.0)
    assert cluster.correlator_order_bound(ham, 0, 1) == 2
    assert cluster.correlator_order_bound(ham, 0, 4) == 5
    with pytest.raises(ValueError):
        cluster.correlator_order_bound(ham, 2, 2)
