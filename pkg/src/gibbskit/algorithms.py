"""Partition-function algorithms: 1D belief-propagation iteration, cluster
series with automatic order, and the product-of-local-operators form of e^{-beta H}."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cluster, ops, oracle
from .lattice import DenseOperator, Hamiltonian, region
from .locality import gibbs_operator, qbp_on_register


def _chain_order(ham: Hamiltonian) -> list[int]:
    """Term indices sorted left to right; rejects anything that is not nearest-neighbour."""
    for t in ham.terms:
        if max(t.support) - min(t.support) > 1:
            raise ValueError(f"term on {t.support} is not a contiguous chain bond")
    return sorted(range(len(ham.terms)), key=lambda i: (max(ham.terms[i].support), min(ham.terms[i].support), i))


def lstar_from_epsilon(N: int, epsilon: float, a: float = 2.0, b: float = 1.0) -> int:
    """l* = ceil(a + b log(N / epsilon))."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return max(1, math.ceil(a + b * math.log(N / epsilon)))


@dataclass
class OneDRunConfig:
    hamiltonian: Hamiltonian
    beta: float
    epsilon: float | None = None
    l_star: int | None = None
    a: float = 2.0
    b: float = 1.0

    def resolved_lstar(self) -> int:
        if self.l_star is not None:
            if self.l_star < 1:
                raise ValueError("l_star must be >= 1")
            return int(self.l_star)
        if self.epsilon is None:
            raise ValueError("give either l_star or epsilon")
        return lstar_from_epsilon(self.hamiltonian.N, self.epsilon, self.a, self.b)


@dataclass
class OneDResult:
    log_Z_prime: float
    l_star: int
    per_step_factors: list
    quadrature_error: float
    oracle_log_Z: float | None = None
    error: float | None = None
    wall_time_ms: float = 0.0

    def to_json(self) -> dict:
        return {"logZ": self.log_Z_prime, "l_star": self.l_star, "per_step_factors": self.per_step_factors,
                "quadrature_error": self.quadrature_error, "oracle_logZ": self.oracle_log_Z,
                "measured_error": self.error}


def logz_1d(config: OneDRunConfig, compare: bool = True, steps: int = 4, levels: int = 3,
            tol: float = 1e-11) -> OneDResult:
    """log Z' = N log d + sum_i log Tr[rho_i A_i] over terms added left to right.

    For each new term h_i, A_i = O^dagger O with O the belief-propagation
    operator inserting h_i into the terms already present within distance l*
    of supp h_i, and rho_i the normalized Gibbs state of the already-present
    terms inside the window of 2 l* sites ending at the right edge of supp h_i.
    """
    t0 = time.perf_counter()
    ham, beta = config.hamiltonian, config.beta
    order = _chain_order(ham)
    lstar = config.resolved_lstar()
    if ham.J > 0 and beta > 4 / ham.J:
        warnings.warn("beta above 4/J: the 1D iteration is outside its intended regime", stacklevel=2)
    lat = ham.lattice
    factors, quad = [], 0.0
    for pos, i in enumerate(order):
        previous = order[:pos]
        supp = ham.terms[i].support
        right = max(supp)
        ball = set(lat.ball(supp, lstar))
        near = [j for j in previous if set(ham.terms[j].support) <= ball]
        qbp_sites = region(set(supp) | set(ham.support_of(near)))
        window = set(range(max(0, right - 2 * lstar + 1), right + 1)) | set(qbp_sites)
        window = region(window)
        oracle.check_dim(ham.d ** len(window), "window")
        h_q = ham.matrix_on(qbp_sites, near)
        a_q = ham.matrix_on(qbp_sites, [i])
        O, cert, _ = qbp_on_register(h_q, a_q, beta, steps, levels, tol)
        A_op = DenseOperator(O.conj().T @ O, qbp_sites, ham.N, ham.d).embed(window).matrix
        in_window = [j for j in previous if set(ham.terms[j].support) <= set(window)]
        h_w = ham.matrix_on(window, in_window)
        state = oracle.gibbs_from_matrix(h_w, beta, len(window), ham.d)
        factor = state.expectation(A_op)
        factors.append(factor)
        quad += 2 * ops.op_norm(O) * cert / factor
    log_zp = ham.N * math.log(ham.d) + math.fsum(math.log(f) for f in factors)
    res = OneDResult(log_zp, lstar, factors, quad)
    if compare and ham.dim <= oracle.dense_cap():
        res.oracle_log_Z = oracle.gibbs(ham, beta).log_Z
        res.error = abs(log_zp - res.oracle_log_Z)
    res.wall_time_ms = 1000 * (time.perf_counter() - t0)
    return res


def logz_cluster(ham: Hamiltonian, beta: float, epsilon: float, max_order: int = 24) -> dict:
    """Smallest series order whose tail bound is at most epsilon."""
    bstar = cluster.beta_star(ham)
    if beta >= bstar:
        raise ValueError(f"beta={beta} is outside the certified radius beta*={bstar:.6g}")
    M = 0
    if beta > 0:
        while cluster.series_error_bound(ham.N, beta, bstar, M) > epsilon:
            M += 1
            if M > max_order:
                raise ValueError(f"order needed for epsilon={epsilon} exceeds {max_order}")
    res = cluster.log_partition_series(ham, beta, M)
    return {"log_Z_estimate": res.log_Z_estimate, "M_used": M, "bound": res.error_bound, "series": res}


@dataclass
class FactorizedThermal:
    factors: list  # DenseOperator, applied left to right
    l: int
    error: float
    extras: dict = field(default_factory=dict)

    def product(self, n: int) -> np.ndarray:
        out = None
        for f in self.factors:
            m = f.embed(range(n)).matrix
            out = m if out is None else out @ m
        return out


def factorize_1d_thermal(ham: Hamiltonian, beta: float, l: int) -> FactorizedThermal:
    """e^{-beta H} ~ e^{-beta h_0} Psi_1 ... Psi_{n-1} with Psi_j = e^{beta H_j} e^{-beta (H_j + h_j)},
    H_j restricted to the already-added terms within distance l of supp h_j."""
    if l < 1:
        raise ValueError("l must be >= 1")
    order = _chain_order(ham)
    n, d = ham.N, ham.d
    oracle.check_dim(ham.dim)
    shift = float(oracle.spectrum(ham).energies[0])
    factors = []
    for pos, i in enumerate(order):
        supp = ham.terms[i].support
        if pos == 0:
            mat = gibbs_operator(ham.matrix_on(supp, [i]), beta)
            factors.append(DenseOperator(mat, region(supp), n, d))
            continue
        ball = set(ham.lattice.ball(supp, l))
        near = [j for j in order[:pos] if set(ham.terms[j].support) <= ball]
        sites = region(set(supp) | set(ham.support_of(near)))
        h_old = ham.matrix_on(sites, near)
        h_new = h_old + ham.matrix_on(sites, [i])
        psi = gibbs_operator(h_old, -beta) @ gibbs_operator(h_new, beta)
        factors.append(DenseOperator(psi, sites, n, d))
    result = FactorizedThermal(factors, l, 0.0)
    prod = result.product(n) * math.exp(beta * shift)
    exact = oracle.spectrum(ham).function(lambda e: np.exp(-beta * (e - shift)))
    z = float(np.real(np.trace(exact)))
    result.error = ops.trace_norm(exact - prod) / z
    return result
