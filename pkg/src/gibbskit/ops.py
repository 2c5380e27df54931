"""Dense linear-algebra helpers shared by every module.

Conventions: a k-site operator is a d^k x d^k matrix whose tensor legs follow
the sorted support; the full space uses big-endian site order (site 0 is the
most significant digit of a basis index).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

PAULI_I = np.eye(2)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])

HERMITIAN_TOL = 1e-12


def as_real_if_possible(mat: np.ndarray, tol: float = 0.0) -> np.ndarray:
    if np.iscomplexobj(mat) and np.max(np.abs(mat.imag), initial=0.0) <= tol:
        return np.ascontiguousarray(mat.real)
    return mat


def is_hermitian(mat: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return mat.shape[0] == mat.shape[1] and np.max(np.abs(mat - mat.conj().T), initial=0.0) <= tol


def op_norm(mat: np.ndarray) -> float:
    """Largest singular value."""
    if mat.size == 0:
        return 0.0
    if is_hermitian(mat, 1e-13):
        ev = np.linalg.eigvalsh(mat)
        return float(max(abs(ev[0]), abs(ev[-1])))
    return float(np.linalg.norm(mat, 2))


def trace_norm(mat: np.ndarray) -> float:
    """Schatten-1 norm."""
    if is_hermitian(mat, 1e-13):
        return float(np.sum(np.abs(np.linalg.eigvalsh(mat))))
    return float(np.sum(np.linalg.svd(mat, compute_uv=False)))


def _reorder_indices(idx: np.ndarray, perm: list[int], n: int, d: int) -> np.ndarray:
    """Map basis indices whose digits are in order `perm` to big-endian site order.

    Digit j of `idx` (counting from the most significant) belongs to site perm[j].
    """
    out = np.zeros_like(idx)
    rem = idx.copy()
    for j in range(n - 1, -1, -1):
        digit = rem % d
        rem //= d
        out += digit * d ** (n - 1 - perm[j])
    return out


def embed_sparse(mat: np.ndarray, positions, n: int, d: int) -> sp.csr_matrix:
    """Embed an operator acting on `positions` (sorted, indices into 0..n-1)."""
    positions = list(positions)
    k = len(positions)
    rest = [p for p in range(n) if p not in set(positions)]
    big = sp.kron(sp.csr_matrix(mat), sp.identity(d ** (n - k), format="csr"), format="coo")
    perm = positions + rest
    if perm == list(range(n)):
        return big.tocsr()
    rows = _reorder_indices(big.row.astype(np.int64), perm, n, d)
    cols = _reorder_indices(big.col.astype(np.int64), perm, n, d)
    return sp.csr_matrix((big.data, (rows, cols)), shape=big.shape)


def embed(mat: np.ndarray, positions, n: int, d: int) -> np.ndarray:
    positions = list(positions)
    if len(positions) == n and positions == list(range(n)):
        return np.array(mat)
    return embed_sparse(mat, positions, n, d).toarray()


def partial_trace(mat: np.ndarray, keep, n: int, d: int) -> np.ndarray:
    """Trace out every site not in `keep` (positions within an n-site register)."""
    keep = sorted(keep)
    if len(keep) == n:
        return np.array(mat)
    rest = [p for p in range(n) if p not in set(keep)]
    t = mat.reshape([d] * (2 * n))
    order = keep + rest + [n + p for p in keep] + [n + p for p in rest]
    dk, dr = d ** len(keep), d ** len(rest)
    t = t.transpose(order).reshape(dk, dr, dk, dr)
    return np.einsum("ijkj->ik", t)


def diagonal_marginal(probs: np.ndarray, keep, n: int, d: int) -> np.ndarray:
    """Marginal probability vector of a classical distribution on n d-level sites."""
    keep = sorted(keep)
    rest = tuple(p for p in range(n) if p not in set(keep))
    t = probs.reshape([d] * n)
    if rest:
        t = t.sum(axis=rest)
    return t.reshape(-1)


def entropy_from_eigenvalues(ev: np.ndarray, clamp: float = 1e-14) -> float:
    ev = np.asarray(ev, dtype=float)
    ev = ev[ev > clamp]
    return float(-np.sum(ev * np.log(ev)))


def logsumexp_neg(energies: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Return log sum exp(-beta E) and the normalized weights, shift-stable."""
    e0 = float(np.min(energies))
    w = np.exp(-beta * (energies - e0))
    s = float(np.sum(w))
    return -beta * e0 + np.log(s), w / s


def random_hermitian(dim: int, rng: np.random.Generator, norm: float | None = None) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (a + a.conj().T) / 2
    if norm is not None:
        h *= norm / op_norm(h)
    return h


def block_eigh(mat: np.ndarray, min_dim: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """eigh that first splits the matrix along connected components of its sparsity pattern.

    Symmetry sectors (e.g. a conserved parity) then cost a fraction of a full
    decomposition. Eigenvalues are returned ascending as with numpy.
    """
    mat = as_real_if_possible(mat)
    dim = mat.shape[0]
    if dim < min_dim:
        return np.linalg.eigh(mat)
    ncomp, labels = connected_components(sp.csr_matrix(mat != 0), directed=False)
    if ncomp == 1:
        return np.linalg.eigh(mat)
    vals = np.empty(dim)
    vecs = np.zeros((dim, dim), dtype=mat.dtype)
    col = 0
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        e, v = np.linalg.eigh(mat[np.ix_(idx, idx)])
        vals[col:col + len(idx)] = e
        vecs[idx, col:col + len(idx)] = v
        col += len(idx)
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]
