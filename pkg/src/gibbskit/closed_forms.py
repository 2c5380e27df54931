"""Closed-form reference values used to cross-check the dense oracle."""

from __future__ import annotations

import numpy as np


def single_site_log_z(beta: float, delta: float) -> float:
    """log Tr exp(-beta * delta * Z) = log(2 cosh(beta delta))."""
    x = abs(beta * delta)
    return x + np.log1p(np.exp(-2 * x))


def tfim_single_particle_energies(N: int, J: float, Delta: float) -> np.ndarray:
    """Quasiparticle energies of the open chain sum J X_j X_{j+1} + Delta Z_j.

    Jordan-Wigner with Majoranas g_{2j} = S_j X_j, g_{2j+1} = S_j Y_j gives
    Z_j = -i g_{2j} g_{2j+1} and X_j X_{j+1} = -i g_{2j+1} g_{2j+2}, so
    H = (i/4) g^T A g with A real antisymmetric.
    """
    A = np.zeros((2 * N, 2 * N))
    for j in range(N):
        A[2 * j, 2 * j + 1] += -2 * Delta
        A[2 * j + 1, 2 * j] += 2 * Delta
    for j in range(N - 1):
        A[2 * j + 1, 2 * j + 2] += -2 * J
        A[2 * j + 2, 2 * j + 1] += 2 * J
    eps = np.linalg.eigvalsh(1j * A)
    return np.sort(eps)[N:]


def tfim_free_fermion_log_z(N: int, J: float, Delta: float, beta: float) -> float:
    """log Z = sum_k log(2 cosh(beta eps_k / 2)) for the open transverse-field chain."""
    eps = tfim_single_particle_energies(N, J, Delta)
    x = beta * eps / 2
    return float(np.sum(x + np.log1p(np.exp(-2 * x))))


def classical_ising_transfer(beta: float, J: float, h: float) -> np.ndarray:
    """Symmetric transfer matrix for sum J s_j s_{j+1} + h s_j with s = +-1."""
    s = np.array([1.0, -1.0])
    return np.exp(-beta * (J * np.outer(s, s) + 0.5 * h * (s[:, None] + s[None, :])))


def classical_ising_log_z(N: int, J: float, h: float, beta: float) -> float:
    """Open chain: log sum_s exp(-beta H) via transfer matrices with boundary half-fields."""
    s = np.array([1.0, -1.0])
    T = classical_ising_transfer(beta, J, h)
    edge = np.exp(-0.5 * beta * h * s)
    v = edge.copy()
    log_norm = 0.0
    for _ in range(N - 1):
        v = T @ v
        c = np.max(np.abs(v))
        v /= c
        log_norm += np.log(c)
    return float(log_norm + np.log(edge @ v))


def classical_ising_correlator(N: int, J: float, h: float, beta: float, i: int, j: int) -> float:
    """Connected <s_i s_j> - <s_i><s_j> on the open chain by transfer-matrix contraction."""
    s = np.array([1.0, -1.0])
    T = classical_ising_transfer(beta, J, h)
    edge = np.exp(-0.5 * beta * h * s)
    D = np.diag(s)

    def contract(inserts):
        v = edge.copy()
        if 0 in inserts:
            v = D @ v
        for site in range(1, N):
            v = T @ v
            if site in inserts:
                v = D @ v
        return edge @ v

    z = contract(set())
    si, sj = contract({i}) / z, contract({j}) / z
    sij = contract({i, j}) / z if i != j else 1.0
    return float(sij - si * sj)


def classical_ising_xi(beta: float, J: float) -> float:
    """Zero-field correlation length -1/log(tanh(beta |J|))."""
    return float(-1.0 / np.log(np.tanh(beta * abs(J))))
