"""High-temperature cluster expansion of log Z.

A cluster is a multiset of hyperedges. With lambda_i attached to term h_i,
the contribution of cluster W with multiplicities mu is the coefficient of
prod lambda_i^{mu_i} in log Tr exp(-beta sum_i lambda_i h_i), so that summing
every connected cluster reproduces log Z - N log d exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .lattice import Hamiltonian, Lattice

DEFAULT_ORDER_CAP = 12
DEFAULT_CLUSTER_CAP = 5_000_000


@dataclass(frozen=True)
class Cluster:
    multiplicities: tuple  # sorted ((edge, mu), ...)

    @classmethod
    def from_dict(cls, mult: dict) -> "Cluster":
        if any(m < 1 for m in mult.values()):
            raise ValueError("multiplicities must be >= 1")
        return cls(tuple(sorted((int(e), int(m)) for e, m in mult.items())))

    @property
    def edges(self) -> tuple:
        return tuple(e for e, _ in self.multiplicities)

    @property
    def size(self) -> int:
        return sum(m for _, m in self.multiplicities)

    def is_connected(self, lattice: Lattice) -> bool:
        return edges_connected(lattice, self.edges)


def edges_connected(lattice: Lattice, edges) -> bool:
    edges = list(edges)
    if not edges:
        return False
    return len(components(lattice, edges)) == 1


def components(lattice: Lattice, edges) -> list[tuple]:
    """Connected components of a set of hyperedges (sharing a vertex = adjacent)."""
    edges = sorted(set(edges))
    parent = {e: e for e in edges}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner = {}
    for e in edges:
        for v in lattice.hyperedges[e]:
            if v in owner:
                parent[find(e)] = find(owner[v])
            else:
                owner[v] = e
    groups = {}
    for e in edges:
        groups.setdefault(find(e), []).append(e)
    return sorted(tuple(g) for g in groups.values())


def connected_edge_sets(lattice: Lattice, max_size: int):
    """Yield every connected set of hyperedges with at most max_size members, once each.

    Growth from each seed edge only adds edges with larger index, using the
    exclusive-neighbourhood rule so no set is produced twice.
    """
    nbrs = lattice.edge_neighbors

    def extend(sub, sub_nbhd, ext, seed):
        yield tuple(sorted(sub))
        if len(sub) == max_size:
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            new_ext = set(ext)
            for u in nbrs[w]:
                if u > seed and u not in sub and u not in sub_nbhd:
                    new_ext.add(u)
            yield from extend(sub | {w}, sub_nbhd | set(nbrs[w]) | {w}, sorted(new_ext), seed)

    if max_size < 1:
        return
    for seed in range(len(lattice.hyperedges)):
        ext = sorted(u for u in nbrs[seed] if u > seed)
        yield from extend({seed}, set(nbrs[seed]) | {seed}, ext, seed)


def compositions(m: int, parts: int):
    """All tuples of `parts` positive integers summing to m."""
    if parts == 1:
        yield (m,)
        return
    for first in range(1, m - parts + 2):
        for rest in compositions(m - first, parts - 1):
            yield (first,) + rest


def enumerate_connected_clusters(ham: Hamiltonian, m_max: int, cap: int = DEFAULT_CLUSTER_CAP):
    """Stream connected clusters of size 1..m_max, ordered by size then canonical form."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    by_size = {}
    for s in connected_edge_sets(ham.lattice, m_max):
        by_size.setdefault(len(s), []).append(s)
    produced = 0
    for m in range(1, m_max + 1):
        batch = []
        for r in range(1, m + 1):
            for s in by_size.get(r, ()):
                for mu in compositions(m, r):
                    batch.append(tuple(zip(s, mu)))
                    if produced + len(batch) > cap:
                        raise MemoryError(f"cluster enumeration exceeded cap {cap} at size {m}; "
                                          "lower the order or raise the cap")
        batch.sort()
        produced += len(batch)
        for c in batch:
            yield Cluster(c)


def count_clusters_by_size(ham: Hamiltonian, m_max: int) -> dict:
    out = {m: 0 for m in range(1, m_max + 1)}
    for c in enumerate_connected_clusters(ham, m_max):
        out[c.size] += 1
    return out


# ---------------------------------------------------------------- per-cluster derivative

def _poly_mul(a: dict, b: dict, cap: tuple) -> dict:
    out = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = tuple(x + y for x, y in zip(ka, kb))
            if all(x <= c for x, c in zip(k, cap)):
                out[k] = out.get(k, 0.0) + va * vb
    return out


def cluster_derivative(ham: Hamiltonian, beta: float, W: Cluster, order_cap: int = DEFAULT_ORDER_CAP) -> float:
    """Contribution of cluster W to log Z (multivariate Taylor coefficient, 1/prod mu! included).

    Works for any multiset, connected or not; disconnected clusters come out as
    zero up to roundoff, which the tests exploit.
    """
    m = W.size
    if m > order_cap:
        raise ValueError(f"cluster size {m} exceeds order cap {order_cap}")
    edges = W.edges
    mu = tuple(mult for _, mult in W.multiplicities)
    sites = ham.support_of(edges)
    dim = ham.d ** len(sites)
    mats = [ham.matrix_on(sites, [e]) for e in edges]
    r = len(edges)

    # P[nu] = sum over ordered words with letter counts nu of the operator product
    grid = sorted(product(*(range(x + 1) for x in mu)), key=lambda nu: (sum(nu), nu))
    P = {grid[0]: np.eye(dim)}
    f = {grid[0]: 1.0}
    for nu in grid[1:]:
        acc = None
        for i in range(r):
            if nu[i] == 0:
                continue
            prev = nu[:i] + (nu[i] - 1,) + nu[i + 1:]
            term = P[prev] @ mats[i]
            acc = term if acc is None else acc + term
        P[nu] = acc
        n = sum(nu)
        f[nu] = (-1) ** n / math.factorial(n) * float(np.real(np.trace(acc))) / dim
    g = {k: v for k, v in f.items() if sum(k) > 0}
    result = {}
    power = {tuple(0 for _ in mu): 1.0}
    for k in range(1, m + 1):
        power = _poly_mul(power, g, mu)
        if not power:
            break
        coeff = (-1) ** (k + 1) / k
        for key, val in power.items():
            result[key] = result.get(key, 0.0) + coeff * val
    return beta ** m * result.get(mu, 0.0)


# ---------------------------------------------------------------- grouped series

def beta_star(ham: Hamiltonian) -> float:
    """Convergence radius 1/(2 e^2 h D (D+1)), with the adjacency degree D floored at 1."""
    if ham.h == 0:
        return math.inf
    deg = max(ham.degree, 1)
    return 1.0 / (2 * math.e ** 2 * ham.h * deg * (deg + 1))


def series_error_bound(N: int, beta: float, bstar: float, M: int, c1: float = 1.0) -> float:
    x = beta / bstar
    if x >= 1:
        return math.inf
    return c1 * N * x ** (M + 1) / (1 - x)


def _cumulants(energies: np.ndarray, M: int) -> np.ndarray:
    """kappa_0..kappa_M of the uniform distribution over `energies`."""
    mean = float(np.mean(energies))
    c = energies - mean
    mom = np.array([np.mean(c ** n) for n in range(M + 1)])
    kap = np.zeros(M + 1)
    for n in range(1, M + 1):
        kap[n] = mom[n] - sum(math.comb(n - 1, j - 1) * kap[j] * mom[n - j] for j in range(1, n))
    if M >= 1:
        kap[1] = mean
    return kap


class _LocalSpectra:
    """Memoized spectral data of sub-Hamiltonians supported on connected edge sets."""

    def __init__(self, ham: Hamiltonian, M: int):
        self.ham, self.M = ham, M
        self._taylor = {}
        self._eig = {}

    def eig(self, edges: tuple):
        if edges not in self._eig:
            sites = self.ham.support_of(edges)
            mat = self.ham.matrix_on(sites, edges)
            self._eig[edges] = (sites, *np.linalg.eigh(mat))
        return self._eig[edges]

    def log_taylor(self, edges: tuple) -> np.ndarray:
        """Coefficients of beta^m in log tau(exp(-beta H_edges)), m = 0..M."""
        if edges not in self._taylor:
            _, e, _ = self.eig(edges)
            kap = _cumulants(e, self.M)
            self._taylor[edges] = np.array([(-1) ** m * kap[m] / math.factorial(m) for m in range(self.M + 1)])
        return self._taylor[edges]

    def derivative_taylor(self, edges: tuple, i: int) -> np.ndarray:
        """Coefficients of beta^m in d/d(lambda_i) log tau(exp(-beta H(lambda))) at lambda = 1."""
        key = (edges, i)
        if key not in self._taylor:
            sites, e, v = self.eig(edges)
            M = self.M
            e = e - np.mean(e)
            hi = np.real(np.einsum("il,ij,jl->l", v.conj(), self.ham.matrix_on(sites, [i]), v))
            mom = np.array([np.mean(e ** n) for n in range(M + 1)])
            mix = np.array([np.mean(hi * e ** n) for n in range(M + 1)])
            f = np.array([(-1) ** n * mom[n] / math.factorial(n) for n in range(M + 1)])
            df = np.zeros(M + 1)
            for n in range(1, M + 1):
                df[n] = (-1) ** n * mix[n - 1] / math.factorial(n - 1)
            q = np.zeros(M + 1)  # q = df / f as power series (f[0] = 1)
            for n in range(M + 1):
                q[n] = df[n] - sum(f[j] * q[n - j] for j in range(1, n + 1))
            self._taylor[key] = q
        return self._taylor[key]


def _grouped_coefficients(ham: Hamiltonian, M: int, fn, must_contain: int | None = None) -> np.ndarray:
    """sum over connected edge sets S (|S| <= M) of the order-m part carried by clusters whose
    distinct edges are exactly S, obtained by inclusion-exclusion over subsets of S.

    fn(component) returns Taylor coefficients for a connected edge tuple.
    """
    lat = ham.lattice
    out = np.zeros(M + 1)
    for S in sorted(connected_edge_sets(lat, M)):
        if must_contain is not None and must_contain not in S:
            continue
        r = len(S)
        acc = np.zeros(M + 1)
        for mask in range(1, 1 << r):
            T = tuple(S[b] for b in range(r) if mask >> b & 1)
            if must_contain is not None and must_contain not in T:
                continue
            sign = -1.0 if (r - len(T)) % 2 else 1.0
            for comp in components(lat, T):
                if must_contain is not None and must_contain not in comp:
                    continue
                acc += sign * fn(comp)
        # only orders m >= |S| can carry clusters whose distinct edges are exactly S
        acc[:r] = 0.0
        out += acc
    return out


@dataclass
class SeriesResult:
    beta: float
    beta_star: float
    M: int
    K: list
    log_Z_estimate: float
    error_bound: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"beta": self.beta, "beta_star": self.beta_star, "M": self.M, "K": list(self.K),
                "logZ": self.log_Z_estimate, "bound": self.error_bound}


def _check_radius(ham, beta, enforce):
    bstar = beta_star(ham)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if enforce and beta >= bstar:
        raise ValueError(f"beta={beta} is outside the certified radius beta*={bstar:.6g}")
    return bstar


def log_partition_series(ham: Hamiltonian, beta: float, M: int, method: str = "grouped",
                         enforce_radius: bool = True) -> SeriesResult:
    """Truncated series sum_{m<=M} beta^m K_m / m! with the geometric tail bound.

    method="grouped" sums all clusters sharing a distinct-edge set at once;
    method="clusters" adds cluster_derivative over the enumerated clusters.
    Both give identical K_m (checked in the tests).
    """
    if M < 0:
        raise ValueError("M must be >= 0")
    bstar = _check_radius(ham, beta, enforce_radius)
    K = np.zeros(M + 1)
    K[0] = ham.N * math.log(ham.d)
    if M >= 1:
        if method == "grouped":
            spectra = _LocalSpectra(ham, M)
            coeff = _grouped_coefficients(ham, M, spectra.log_taylor)
            for m in range(1, M + 1):
                K[m] = math.factorial(m) * coeff[m]
        elif method == "clusters":
            per_size = {m: [] for m in range(1, M + 1)}
            for W in enumerate_connected_clusters(ham, M):
                per_size[W.size].append(cluster_derivative(ham, 1.0, W))
            for m in range(1, M + 1):
                K[m] = math.factorial(m) * math.fsum(per_size[m])
        else:
            raise ValueError(f"unknown method {method!r}")
    estimate = math.fsum(beta ** m * K[m] / math.factorial(m) for m in range(M + 1))
    bound = 0.0 if beta == 0 else series_error_bound(ham.N, beta, bstar, M)
    diag = {"coefficient_check": [
        {"m": m, "abs_K": abs(K[m]), "limit": ham.N * math.factorial(m) / bstar ** m,
         "passed": bool(abs(K[m]) <= ham.N * math.factorial(m) / bstar ** m)} for m in range(1, M + 1)]}
    return SeriesResult(float(beta), bstar, M, K.tolist(), estimate, bound, diag)


def local_expectation_series(ham: Hamiltonian, beta: float, i: int, M: int,
                             enforce_radius: bool = True) -> tuple[float, float]:
    """<h_i>_beta from clusters forced to contain edge i; returns (estimate, bound)."""
    bstar = _check_radius(ham, beta, enforce_radius)
    spectra = _LocalSpectra(ham, max(M, 1))
    coeff = _grouped_coefficients(ham, max(M, 1), lambda comp: spectra.derivative_taylor(comp, i), must_contain=i)
    # <h_i> = -(1/beta) d log Z / d lambda_i = -sum_m beta^{m-1} coeff_m
    est = -math.fsum(beta ** (m - 1) * coeff[m] for m in range(1, M + 1))
    if M == 0:
        est = 0.0
    x = beta / bstar
    if beta == 0:
        bound = 0.0 if M >= 1 else math.inf
    elif x >= 1:
        bound = math.inf
    else:
        bound = x ** (M + 1) * ((M + 1) - M * x) / ((1 - x) ** 2 * beta)
    return est, bound


def local_expectation_by_clusters(ham: Hamiltonian, beta: float, i: int, M: int) -> float:
    """Same quantity summed cluster by cluster: -(1/beta) sum_{W contains i} mu_i c_W."""
    total = []
    for W in enumerate_connected_clusters(ham, M):
        mult = dict(W.multiplicities)
        if i in mult:
            total.append(mult[i] * cluster_derivative(ham, beta, W))
    return -math.fsum(total) / beta


def correlator_order_bound(ham: Hamiltonian, i: int, j: int) -> int:
    """Size of the smallest connected cluster containing edges i and j.

    Confirms by enumeration that no connected cluster below that size holds both.
    """
    if i == j:
        raise ValueError("edges must differ")
    dist = ham.lattice.edge_distance(i, j)
    for S in connected_edge_sets(ham.lattice, dist - 1):
        if i in S and j in S:
            raise RuntimeError(f"connected set {S} of size {len(S)} < {dist} contains both edges")
    return int(dist)
