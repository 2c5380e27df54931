"""Concentration, moments, Gaussianity and ensemble equivalence for extensive observables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from . import ops, oracle
from .lattice import DenseOperator, Hamiltonian

OVERFLOW_LIMIT = 700.0


@dataclass
class ExtensiveObservable:
    terms: list  # DenseOperator pieces A_j

    @property
    def abar(self) -> float:
        return float(sum(t.norm() for t in self.terms))

    def full(self) -> np.ndarray:
        return sum(t.full() for t in self.terms)

    @property
    def is_diagonal(self) -> bool:
        return all(np.count_nonzero(t.matrix - np.diag(np.diag(t.matrix))) == 0 for t in self.terms)

    def diagonal(self) -> np.ndarray:
        """Diagonal of the full operator, built without forming the dense matrix."""
        n, d = self.terms[0].n, self.terms[0].d
        out = np.zeros(d ** n)
        for t in self.terms:
            out += np.real(ops.embed_sparse(np.diag(np.diag(t.matrix)), t.support, n, d).diagonal())
        return out

    def compact(self) -> np.ndarray:
        """Diagonal vector when possible, dense matrix otherwise."""
        return self.diagonal() if self.is_diagonal else self.full()

    def operator(self) -> DenseOperator:
        n, d = self.terms[0].n, self.terms[0].d
        return DenseOperator(self.full(), tuple(range(n)), n, d)


def magnetization_observable(n: int, d: int = 2, axis: str = "z") -> ExtensiveObservable:
    pauli = {"x": ops.PAULI_X, "y": ops.PAULI_Y, "z": ops.PAULI_Z}[axis]
    return ExtensiveObservable([DenseOperator(pauli, (j,), n, d) for j in range(n)])


def _distribution(state, A) -> oracle.MeasurementDistribution:
    if isinstance(A, oracle.MeasurementDistribution):
        return A
    if isinstance(A, ExtensiveObservable):
        return oracle.measurement_distribution(state, A.compact())
    return oracle.measurement_distribution(state, A)


def default_tau_grid(abar: float, points: int = 40) -> np.ndarray:
    pos = np.logspace(-2, 0, points) / math.sqrt(abar)
    return np.concatenate([-pos[::-1], pos])


def log_mgf(dist: oracle.MeasurementDistribution, tau: float) -> float:
    """log <exp(tau (A - <A>))>, exact from the outcome distribution."""
    x = dist.outcomes - dist.mean
    if abs(tau) * np.max(np.abs(x), initial=0.0) > OVERFLOW_LIMIT:
        raise OverflowError("tau * spread exceeds the overflow guard")
    mask = dist.probabilities > 0
    return float(logsumexp(tau * x[mask], b=dist.probabilities[mask]))


def characteristic_constant(state, A: ExtensiveObservable, tau_grid=None) -> dict:
    """c_fit = max over the grid of log<e^{tau(A-<A>)}>/(tau^2 Abar)."""
    abar = A.abar
    grid = default_tau_grid(abar) if tau_grid is None else np.asarray(tau_grid, dtype=float)
    if np.any(grid == 0):
        raise ValueError("tau grid must exclude 0")
    dist = _distribution(state, A)
    ratios = np.array([log_mgf(dist, t) / (t * t * abar) for t in grid])
    j = int(np.argmax(ratios))
    return {"c_fit": float(ratios[j]), "tau_at_max": float(grid[j]), "taus": grid.tolist(),
            "ratios": ratios.tolist(), "abar": abar}


def hoeffding_bound(delta, c: float, abar: float):
    return 2 * np.exp(-np.asarray(delta, dtype=float) ** 2 / (4 * c * abar))


def concentration_check(state, A: ExtensiveObservable, delta_grid=None, c: float | None = None) -> dict:
    """Measured P(|x - <A>| > delta) against 2 exp(-delta^2/(4 c Abar))."""
    abar = A.abar
    dist = _distribution(state, A)
    if c is None:
        c = characteristic_constant_from(dist, abar)["c_fit"]
    deltas = np.linspace(0, abar, 41) if delta_grid is None else np.asarray(delta_grid, dtype=float)
    rows = []
    for dlt in deltas:
        tail = dist.tail(dlt)
        bound = float(hoeffding_bound(dlt, c, abar))
        rows.append({"delta": float(dlt), "tail": tail, "bound": bound, "passed": bool(tail <= bound + 1e-12)})
    return {"c": c, "abar": abar, "rows": rows, "passed": all(r["passed"] for r in rows)}


def characteristic_constant_from(dist: oracle.MeasurementDistribution, abar: float, tau_grid=None) -> dict:
    grid = default_tau_grid(abar) if tau_grid is None else np.asarray(tau_grid, dtype=float)
    ratios = np.array([log_mgf(dist, t) / (t * t * abar) for t in grid])
    return {"c_fit": float(ratios.max()), "ratios": ratios.tolist()}


def tail_integral_moment(dist: oracle.MeasurementDistribution, m: int, center: float | None = None) -> float:
    """m * int_0^inf x^{m-1} P(|X - a| >= x) dx, integrated exactly over the step function."""
    a = dist.mean if center is None else center
    dev = np.abs(dist.outcomes - a)
    order = np.argsort(dev)
    dev, p = dev[order], dist.probabilities[order]
    survival = np.cumsum(p[::-1])[::-1]  # P(D >= dev[k])
    total, prev = 0.0, 0.0
    for r, s in zip(dev, survival):
        total += (r ** m - prev ** m) * s
        prev = r
    return float(total)


def moment_bound_check(state, A: ExtensiveObservable, m_max: int = 8, c: float | None = None) -> dict:
    """Centered even moments against (4 c Abar)^{m/2} (m/2)!."""
    if m_max % 2 or m_max > 12:
        raise ValueError("m_max must be even and at most 12")
    abar = A.abar
    dist = _distribution(state, A)
    if c is None:
        c = characteristic_constant_from(dist, abar)["c_fit"]
    rows = []
    for m in range(0, m_max + 1, 2):
        moment = dist.moment(m)
        bound = (4 * c * abar) ** (m // 2) * math.factorial(m // 2)
        via_tail = 1.0 if m == 0 else tail_integral_moment(dist, m)
        rows.append({"m": m, "moment": moment, "bound": bound, "tail_integral": via_tail,
                     "identity_rel_error": abs(via_tail - moment) / max(abs(moment), 1e-300),
                     "passed": bool(moment <= bound * (1 + 1e-12))})
    return {"c": c, "abar": abar, "rows": rows, "passed": all(r["passed"] for r in rows)}


def berry_esseen(state, A) -> dict:
    """Delta = sup_x |F(x) - G(x)| with G the Gaussian of matched mean and variance."""
    dist = _distribution(state, A)
    sigma = math.sqrt(max(dist.variance, 0.0))
    if sigma <= 1e-14:
        raise ValueError("observable has zero variance")
    x = dist.outcomes
    cum = np.cumsum(dist.probabilities)
    left = np.concatenate([[0.0], cum[:-1]])
    g = norm.cdf(x, loc=dist.mean, scale=sigma)
    delta = float(max(np.max(np.abs(cum - g)), np.max(np.abs(left - g))))
    return {"Delta": delta, "sigma_A": sigma, "mean": dist.mean}


def berry_esseen_sweep(builder, observable_builder, beta: float, N_list) -> dict:
    rows = []
    for N in N_list:
        ham = builder(N)
        st = oracle.gibbs(ham, beta)
        be = berry_esseen(st, observable_builder(N))
        rows.append({"N": int(N), "Delta": be["Delta"], "Delta_sqrtN": be["Delta"] * math.sqrt(N)})
    const = max(r["Delta_sqrtN"] for r in rows)
    return {"rows": rows, "constant": const, "decreasing": rows[-1]["Delta"] < rows[0]["Delta"]}


# ---------------------------------------------------------------- microcanonical

def _eigen_expectations(spec: oracle.SpectralData, A) -> np.ndarray:
    if isinstance(A, ExtensiveObservable):
        mat = A.compact()
    else:
        mat = A.full() if isinstance(A, DenseOperator) else np.asarray(A)
    if mat.ndim == 2 and np.count_nonzero(mat - np.diag(np.diag(mat))) == 0:
        mat = np.diag(mat)
    if mat.ndim == 1:
        if spec.vectors is None:
            return np.real(mat)[spec.perm]
        return (np.abs(spec.vectors) ** 2).T @ np.real(mat)
    if spec.vectors is None:
        return np.real(np.diag(mat))[spec.perm]
    return np.real(np.einsum("il,il->l", spec.vectors.conj(), mat @ spec.vectors))


@dataclass
class MicrocanonicalWindow:
    E: float
    Delta: float
    members: np.ndarray

    @property
    def count(self) -> int:
        return int(len(self.members))


def window(energies: np.ndarray, E: float, Delta: float) -> MicrocanonicalWindow:
    if Delta <= 0:
        raise ValueError("Delta must be positive")
    members = np.flatnonzero((energies > E - Delta) & (energies <= E))
    return MicrocanonicalWindow(float(E), float(Delta), members)


def microcanonical_average(ham_or_spec, A, E: float, Delta: float, with_spread: bool = False):
    spec = oracle.spectrum(ham_or_spec) if isinstance(ham_or_spec, Hamiltonian) else ham_or_spec
    win = window(spec.energies, E, Delta)
    if win.count == 0:
        raise ValueError(f"empty window ({E - Delta}, {E}]")
    vals = _eigen_expectations(spec, A)[win.members]
    avg = float(np.mean(vals))
    if with_spread:
        return avg, float(np.max(vals) - np.min(vals))
    return avg


def select_E0(ham_or_spec, beta: float, Delta: float) -> float:
    """argmax_E D(E, Delta) e^{-beta E}, scanning windows whose upper edge is an eigenvalue."""
    spec = oracle.spectrum(ham_or_spec) if isinstance(ham_or_spec, Hamiltonian) else ham_or_spec
    e = spec.energies
    uppers = np.unique(e)
    counts = np.searchsorted(e, uppers, side="right") - np.searchsorted(e, uppers - Delta, side="right")
    score = np.log(counts) - beta * uppers
    return float(uppers[int(np.argmax(score))])


def ensemble_equivalence_sweep(builder, observable_builder, beta: float, Delta: float, N_list) -> dict:
    rows = []
    for N in N_list:
        ham = builder(N)
        spec = oracle.spectrum(ham)
        A = observable_builder(N)
        st = oracle.gibbs(ham, beta)
        canon = st.expectation(A.compact() if isinstance(A, ExtensiveObservable) else np.asarray(A))
        e0 = select_E0(spec, beta, Delta)
        micro, spread = microcanonical_average(spec, A, e0, Delta, with_spread=True)
        rows.append({"N": int(N), "E0": e0, "micro": micro, "canonical": canon,
                     "ratio": abs(micro - canon) / N, "within_window_spread": spread})
    return {"rows": rows, "Delta_star": min(Delta, 1 / beta) if beta > 0 else Delta,
            "passed": rows[-1]["ratio"] < rows[0]["ratio"]}
