"""Exact-diagonalization reference for thermal quantities."""

from __future__ import annotations

import os
import struct
import weakref
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .lattice import DenseOperator, Hamiltonian, region

DEFAULT_DENSE_CAP = 2 ** 14


class DenseCapError(ValueError):
    pass


def dense_cap() -> int:
    raw = os.environ.get("GIBBSKIT_DENSE_CAP")
    return int(raw) if raw else DEFAULT_DENSE_CAP


def check_dim(dim: int, what: str = "Hilbert space"):
    cap = dense_cap()
    if dim > cap:
        raise DenseCapError(f"{what} dimension {dim} exceeds dense cap {cap}; "
                            "reduce N (or the window) or raise GIBBSKIT_DENSE_CAP")


@dataclass
class SpectralData:
    """Eigendecomposition H = V diag(E) V^dagger, E ascending.

    For diagonal Hamiltonians `vectors` is None and `perm` lists the
    computational basis state carrying each eigenvalue.
    """

    energies: np.ndarray
    vectors: np.ndarray | None
    n: int
    d: int
    perm: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.energies)

    def dense_vectors(self) -> np.ndarray:
        if self.vectors is not None:
            return self.vectors
        v = np.zeros((self.dim, self.dim))
        v[self.perm, np.arange(self.dim)] = 1.0
        return v

    def to_eigenbasis(self, mat: np.ndarray) -> np.ndarray:
        if self.vectors is None:
            return mat[np.ix_(self.perm, self.perm)]
        return self.vectors.conj().T @ mat @ self.vectors

    def from_eigenbasis(self, mat: np.ndarray) -> np.ndarray:
        if self.vectors is None:
            out = np.zeros_like(mat)
            out[np.ix_(self.perm, self.perm)] = mat
            return out
        return self.vectors @ mat @ self.vectors.conj().T

    def function(self, fn) -> np.ndarray:
        """f(H) as a dense matrix."""
        vals = fn(self.energies)
        if self.vectors is None:
            out = np.zeros(self.dim, dtype=np.result_type(vals))
            out[self.perm] = vals
            return np.diag(out)
        return (self.vectors * vals) @ self.vectors.conj().T

    def reconstruct(self) -> np.ndarray:
        return self.function(lambda e: e)

    def dump(self, path):
        """Binary cache: little-endian doubles, header (N, d, dim), energies, Re V, Im V."""
        v = self.dense_vectors().astype(complex)
        with open(path, "wb") as fh:
            fh.write(struct.pack("<3d", self.n, self.d, self.dim))
            fh.write(np.asarray(self.energies, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(v.real, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(v.imag, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SpectralData":
        with open(path, "rb") as fh:
            n, d, dim = (int(x) for x in struct.unpack("<3d", fh.read(24)))
            e = np.frombuffer(fh.read(8 * dim), dtype="<f8").copy()
            re = np.frombuffer(fh.read(8 * dim * dim), dtype="<f8").reshape(dim, dim)
            im = np.frombuffer(fh.read(8 * dim * dim), dtype="<f8").reshape(dim, dim)
        v = ops.as_real_if_possible(re + 1j * im)
        return cls(e, v, n, d)


def eigendecompose(mat: np.ndarray, n: int, d: int) -> SpectralData:
    if np.count_nonzero(mat - np.diag(np.diag(mat))) == 0:
        diag = np.real(np.diag(mat))
        perm = np.argsort(diag, kind="stable")
        return SpectralData(diag[perm], None, n, d, perm)
    e, v = ops.block_eigh(mat)
    return SpectralData(e, v, n, d)


_SPECTRA: "weakref.WeakKeyDictionary[Hamiltonian, SpectralData]" = weakref.WeakKeyDictionary()


def spectrum(ham: Hamiltonian) -> SpectralData:
    """Cached full-space eigendecomposition of a Hamiltonian."""
    cached = _SPECTRA.get(ham)
    if cached is None:
        check_dim(ham.dim)
        if ham.is_diagonal:
            diag = ham.full_diagonal()
            perm = np.argsort(diag, kind="stable")
            cached = SpectralData(diag[perm], None, ham.N, ham.d, perm)
        else:
            cached = eigendecompose(ham.full_matrix(), ham.N, ham.d)
        _SPECTRA[ham] = cached
    return cached


@dataclass
class GibbsState:
    beta: float
    spectral: SpectralData
    weights: np.ndarray  # Gibbs weights over eigen-index
    log_Z: float
    _rho: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.spectral.n

    @property
    def d(self) -> int:
        return self.spectral.d

    @property
    def is_diagonal(self) -> bool:
        return self.spectral.vectors is None

    @property
    def rho(self) -> np.ndarray:
        if self._rho is None:
            self._rho = self.spectral.function(lambda e: self.weights)
        return self._rho

    @property
    def energy(self) -> float:
        return float(np.dot(self.weights, self.spectral.energies))

    @property
    def free_energy(self) -> float:
        return -self.log_Z / self.beta if self.beta > 0 else -np.inf

    def entropy(self) -> float:
        return ops.entropy_from_eigenvalues(self.weights)

    def computational_probs(self) -> np.ndarray:
        """Diagonal of rho in the computational basis."""
        if self.spectral.vectors is None:
            p = np.zeros(self.spectral.dim)
            p[self.spectral.perm] = self.weights
            return p
        return np.abs(self.spectral.vectors) ** 2 @ self.weights

    def expectation(self, mat: np.ndarray) -> float:
        """Tr[rho M] for a full-space matrix, or a 1-D array giving a diagonal M."""
        if mat.ndim == 1:
            return float(np.dot(np.real(mat), self.computational_probs()))
        if self.spectral.vectors is None:
            return float(np.real(np.dot(np.diag(mat), self.computational_probs())))
        v = self.spectral.vectors
        diag = np.einsum("il,il->l", v.conj(), mat @ v)
        return float(np.real(np.dot(diag, self.weights)))


def gibbs(ham: Hamiltonian, beta: float) -> GibbsState:
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    spec = spectrum(ham)
    log_z, w = ops.logsumexp_neg(spec.energies, beta)
    return GibbsState(float(beta), spec, w, float(log_z))


def gibbs_from_matrix(mat: np.ndarray, beta: float, n: int, d: int) -> GibbsState:
    spec = eigendecompose(mat, n, d)
    log_z, w = ops.logsumexp_neg(spec.energies, beta)
    return GibbsState(float(beta), spec, w, float(log_z))


def log_partition(ham_or_matrix, beta: float) -> float:
    if isinstance(ham_or_matrix, Hamiltonian):
        return gibbs(ham_or_matrix, beta).log_Z
    e = np.linalg.eigvalsh(ham_or_matrix)
    return ops.logsumexp_neg(e, beta)[0]


# ---------------------------------------------------------------- marginals

def marginal(state: GibbsState, A) -> DenseOperator:
    """Reduced density matrix on region A (positions are vertex indices)."""
    A = region(A)
    if not A:
        raise ValueError("region must be nonempty")
    n, d = state.n, state.d
    if state.is_diagonal:
        p = ops.diagonal_marginal(state.computational_probs(), A, n, d)
        return DenseOperator(np.diag(p), A, n, d)
    if len(A) == n:
        return DenseOperator(state.rho, A, n, d)
    keep_mask = state.weights > 1e-300
    m = state.spectral.vectors[:, keep_mask] * np.sqrt(state.weights[keep_mask])
    rest = [p for p in range(n) if p not in set(A)]
    t = m.reshape([d] * n + [m.shape[1]]).transpose(list(A) + rest + [n]).reshape(d ** len(A), -1)
    return DenseOperator(t @ t.conj().T, A, n, d)


def _matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, DenseOperator) else np.asarray(x)


def _check_state(mat: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    ev = np.linalg.eigvalsh(mat)
    if ev[0] < -tol or abs(ev.sum() - 1.0) > tol:
        raise ValueError(f"not a density matrix (min eigenvalue {ev[0]:.3g}, trace {ev.sum():.12g})")
    return ev


def entropy(op) -> float:
    """Von Neumann entropy (natural log)."""
    mat = _matrix(op)
    if np.count_nonzero(mat - np.diag(np.diag(mat))) == 0:
        ev = np.real(np.diag(mat))
        if ev.min() < -1e-8 or abs(ev.sum() - 1) > 1e-8:
            raise ValueError("not a density matrix")
    else:
        ev = _check_state(mat)
    return ops.entropy_from_eigenvalues(ev)


def relative_entropy(rho, sigma) -> float:
    """D(rho||sigma); +inf when the support condition fails."""
    r, s = _matrix(rho), _matrix(sigma)
    er, vr = np.linalg.eigh(r)
    es, vs = np.linalg.eigh(s)
    if er[0] < -1e-8 or es[0] < -1e-8:
        raise ValueError("operands must be positive semidefinite")
    overlap = np.abs(vr.conj().T @ vs) ** 2  # overlap[i, j] = |<r_i|s_j>|^2
    er_c = np.where(er > 1e-14, er, 0.0)
    kernel = es <= 1e-14
    if np.any(er_c[:, None] * overlap[:, kernel] > 1e-12):
        return float("inf")
    term1 = float(np.sum(er_c[er_c > 0] * np.log(er_c[er_c > 0])))
    log_s = np.where(kernel, 0.0, np.log(np.where(kernel, 1.0, es)))
    term2 = float(er_c @ overlap @ log_s)
    return term1 - term2


def region_entropy(state: GibbsState, X) -> float:
    """S of the marginal on X; the full register reads it off the Gibbs weights."""
    X = region(X)
    if len(X) == state.n:
        return state.entropy()
    return entropy(marginal(state, X))


def mutual_information(state: GibbsState, A, B) -> float:
    A, B = region(A), region(B)
    return region_entropy(state, A) + region_entropy(state, B) - region_entropy(state, A + B)


def cmi(state: GibbsState, A, B, C) -> float:
    """I(A:C|B) = S(AB) + S(BC) - S(ABC) - S(B)."""
    A, B, C = region(A), region(B), region(C)
    s = lambda X: region_entropy(state, X)  # noqa: E731
    return s(A + B) + s(B + C) - s(A + B + C) - s(B)


def trace_norm_distance(a, b) -> float:
    return ops.trace_norm(_matrix(a) - _matrix(b))


def op_norm(a) -> float:
    return ops.op_norm(_matrix(a))


def connected_correlator(state: GibbsState, MC: DenseOperator, MD: DenseOperator) -> float:
    if set(MC.support) & set(MD.support):
        raise ValueError("observable supports overlap")
    sites = region(MC.support + MD.support)
    rho = marginal(state, sites).matrix
    c = MC.embed(sites).matrix
    dd = MD.embed(sites).matrix
    joint = np.trace(rho @ c @ dd)
    return float(abs(np.real(joint - np.trace(rho @ c) * np.trace(rho @ dd))))


# ---------------------------------------------------------------- measurements

@dataclass
class MeasurementDistribution:
    outcomes: np.ndarray
    probabilities: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.dot(self.outcomes, self.probabilities))

    @property
    def variance(self) -> float:
        return float(np.dot((self.outcomes - self.mean) ** 2, self.probabilities))

    def moment(self, m: int, center: float | None = None) -> float:
        c = self.mean if center is None else center
        return float(np.dot((self.outcomes - c) ** m, self.probabilities))

    def tail(self, delta: float) -> float:
        """P(|x - mean| > delta)."""
        return float(np.sum(self.probabilities[np.abs(self.outcomes - self.mean) > delta]))

    def cdf(self, x) -> np.ndarray:
        cum = np.cumsum(self.probabilities)
        idx = np.searchsorted(self.outcomes, x, side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)


def _merge(values: np.ndarray, probs: np.ndarray, tol: float = 1e-9) -> MeasurementDistribution:
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    outs, ps = [], []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tol:
            outs.append(float(np.mean(values[start:i])))
            ps.append(float(np.sum(probs[start:i])))
            start = i
    p = np.clip(np.array(ps), 0.0, None)
    return MeasurementDistribution(np.array(outs), p / p.sum())


def measurement_distribution(state: GibbsState, A, tol: float = 1e-9) -> MeasurementDistribution:
    """Outcome distribution of a projective measurement of A.

    A is a full-space matrix, a DenseOperator, or a 1-D array holding the
    diagonal of an observable that is diagonal in the computational basis.
    """
    if isinstance(A, np.ndarray) and A.ndim == 1:
        return _merge(np.real(A), state.computational_probs(), tol)
    mat = A.full() if isinstance(A, DenseOperator) else np.asarray(A)
    if not ops.is_hermitian(mat, 1e-10):
        raise ValueError("observable must be Hermitian")
    if np.count_nonzero(mat - np.diag(np.diag(mat))) == 0:
        return _merge(np.real(np.diag(mat)), state.computational_probs(), tol)
    a, u = np.linalg.eigh(mat)
    if state.is_diagonal:
        probs = np.abs(u) ** 2
        probs = state.computational_probs() @ probs
    else:
        w = u.conj().T @ state.spectral.vectors  # <a_k|E_l>
        probs = np.abs(w) ** 2 @ state.weights
    return _merge(a, np.real(probs), tol)


def magnetization(n: int, d: int = 2, axis: str = "z") -> DenseOperator:
    pauli = {"x": ops.PAULI_X, "y": ops.PAULI_Y, "z": ops.PAULI_Z}[axis]
    dim = d ** n
    if axis == "z":
        idx = np.arange(dim)
        bits = (idx[:, None] >> np.arange(n - 1, -1, -1)) & 1
        return DenseOperator(np.diag((1 - 2 * bits).sum(axis=1).astype(float)), tuple(range(n)), n, d)
    mat = sum(ops.embed(pauli, [j], n, d) for j in range(n))
    return DenseOperator(mat, tuple(range(n)), n, d)


# ---------------------------------------------------------------- max entropy

def _bisect(fn, lo: float, hi: float, tol: float = 1e-12, maxiter: int = 200) -> float:
    flo = fn(lo)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if abs(fm) < tol or hi - lo < 1e-16:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def max_entropy_check(state: GibbsState, trials: int = 5, seed: int = 0) -> list[dict]:
    """Compare S(rho_beta) - S(rho) with D(rho||rho_beta) for same-energy states rho.

    Each trial mixes rho_beta with one eigenstate below and one above the
    thermal energy; the mixing ratio is bisected to match the energy.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    e = state.spectral.energies
    target = state.energy
    below = np.flatnonzero(e < target - 1e-9)
    above = np.flatnonzero(e > target + 1e-9)
    if len(below) == 0 or len(above) == 0:
        raise ValueError("spectrum is degenerate at the target energy; cannot straddle it")
    s_beta = state.entropy()
    out = []
    for _ in range(trials):
        a, b = int(rng.choice(below)), int(rng.choice(above))
        w = rng.uniform(0.1, 0.5)

        def weights(t):
            p = (1 - w) * state.weights.copy()
            p[a] += w * t
            p[b] += w * (1 - t)
            return p

        t = _bisect(lambda t: float(weights(t) @ e) - target, 0.0, 1.0)
        p = weights(t)
        energy_gap = abs(float(p @ e) - target)
        if energy_gap > 1e-9:
            raise RuntimeError(f"bisection failed to match the energy (gap {energy_gap:.3g})")
        # rho and rho_beta are both diagonal in the eigenbasis
        s_rho = ops.entropy_from_eigenvalues(p)
        mask = p > 1e-14
        rel = float(np.sum(p[mask] * (np.log(p[mask]) - np.log(state.weights[mask]))))
        out.append({"entropy_gap": s_beta - s_rho, "relative_entropy": rel, "energy_mismatch": energy_gap,
                    "identity_residual": abs((s_beta - s_rho) - rel), "passed": bool(rel > 0)})
    return out


# ---------------------------------------------------------------- trace inequalities

def mineq1(h1: np.ndarray, h2: np.ndarray) -> dict:
    """|log Tr e^{H1+H2} - log Tr e^{H1}| <= ||H2||."""
    lhs = abs(log_partition(-(h1 + h2), 1.0) - log_partition(-h1, 1.0))
    rhs = ops.op_norm(h2)
    return {"lhs": lhs, "rhs": rhs, "passed": bool(lhs <= rhs + 1e-12)}


def mineq2(h1: np.ndarray, h2: np.ndarray, c: np.ndarray, order: int = 24) -> dict:
    """|log Tr[C e^{H1+H2}] - log Tr[C e^{H1}]| against the double integral of
    ||e^{-s(H1+tH2)} H2 e^{s(H1+tH2)}|| over t in [0,1], s in [-1/2,1/2]."""

    def log_tr(h):
        e, v = np.linalg.eigh(h)
        shift = e.max()
        return shift + np.log(np.real(np.trace(c @ (v * np.exp(e - shift)) @ v.conj().T)))

    lhs = abs(log_tr(h1 + h2) - log_tr(h1))
    x, w = np.polynomial.legendre.leggauss(order)
    ts, wt = 0.5 * (x + 1), 0.5 * w
    ss, ws = 0.5 * x, 0.5 * w
    rhs = 0.0
    for t, a in zip(ts, wt):
        e, v = np.linalg.eigh(h1 + t * h2)
        h2e = v.conj().T @ h2 @ v
        inner = 0.0
        for s, b in zip(ss, ws):
            f = np.exp(-s * (e[:, None] - e[None, :]))
            inner += b * ops.op_norm(h2e * f)
        rhs += a * inner
    return {"lhs": float(lhs), "rhs": float(rhs), "passed": bool(lhs <= rhs + 1e-10)}
