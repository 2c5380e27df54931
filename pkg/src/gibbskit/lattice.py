"""Interaction hypergraph, local terms and geometric queries."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import ops


Region = tuple  # sorted tuple of vertex indices


def region(vertices) -> Region:
    return tuple(sorted(set(int(v) for v in vertices)))


@dataclass(frozen=True)
class Lattice:
    num_vertices: int
    local_dim: int
    hyperedges: tuple

    def __post_init__(self):
        if self.num_vertices < 1:
            raise ValueError("num_vertices must be positive")
        if self.local_dim < 2:
            raise ValueError("local_dim must be at least 2")
        for e in self.hyperedges:
            if len(e) == 0 or len(set(e)) != len(e):
                raise ValueError(f"hyperedge {e} must be a nonempty set of distinct vertices")
            if min(e) < 0 or max(e) >= self.num_vertices:
                raise ValueError(f"hyperedge {e} has a vertex outside [0, {self.num_vertices})")

    @property
    def N(self) -> int:
        return self.num_vertices

    @property
    def d(self) -> int:
        return self.local_dim

    @cached_property
    def k(self) -> int:
        return max((len(e) for e in self.hyperedges), default=0)

    @cached_property
    def incident(self) -> tuple:
        """incident[v] = indices of hyperedges containing v."""
        inc = [[] for _ in range(self.num_vertices)]
        for i, e in enumerate(self.hyperedges):
            for v in e:
                inc[v].append(i)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def edge_neighbors(self) -> tuple:
        """Hyperedges sharing at least one vertex with each hyperedge (self excluded)."""
        out = []
        for i, e in enumerate(self.hyperedges):
            nb = set()
            for v in e:
                nb.update(self.incident[v])
            nb.discard(i)
            out.append(tuple(sorted(nb)))
        return tuple(out)

    @cached_property
    def degree(self) -> int:
        """Max number of other hyperedges adjacent to a hyperedge."""
        return max((len(nb) for nb in self.edge_neighbors), default=0)

    @cached_property
    def vertex_neighbors(self) -> tuple:
        out = []
        for v in range(self.num_vertices):
            nb = set()
            for i in self.incident[v]:
                nb.update(self.hyperedges[i])
            nb.discard(v)
            out.append(tuple(sorted(nb)))
        return tuple(out)

    def distances_from(self, A) -> np.ndarray:
        """Hyperedge-hop distance from region A to every vertex (-1 if unreachable)."""
        dist = np.full(self.num_vertices, -1, dtype=int)
        queue = deque()
        for v in A:
            dist[v] = 0
            queue.append(v)
        while queue:
            v = queue.popleft()
            for w in self.vertex_neighbors[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def distance(self, A, B) -> int:
        """Smallest number of overlapping hyperedges connecting A to B.

        Infinite connectivity gaps are reported as a very large integer.
        """
        A, B = region(A), region(B)
        if not A or not B:
            raise ValueError("regions must be nonempty")
        if set(A) & set(B):
            raise ValueError(f"regions {A} and {B} overlap")
        dist = self.distances_from(A)
        vals = [dist[v] for v in B if dist[v] >= 0]
        return int(min(vals)) if vals else np.iinfo(np.int64).max

    def ball(self, A, radius: int) -> Region:
        dist = self.distances_from(region(A))
        return tuple(int(v) for v in np.flatnonzero((dist >= 0) & (dist <= radius)))

    def boundary(self, A) -> Region:
        A = set(region(A))
        if not A:
            raise ValueError("region must be nonempty")
        out = set()
        for e in self.hyperedges:
            inside = A.intersection(e)
            if inside and len(inside) < len(e):
                out.update(inside)
        return region(out)

    def edge_distance(self, i: int, j: int) -> int:
        """Number of hyperedges in the shortest overlapping chain from edge i to edge j."""
        if i == j:
            return 1
        seen = {i: 1}
        queue = deque([i])
        while queue:
            a = queue.popleft()
            for b in self.edge_neighbors[a]:
                if b not in seen:
                    seen[b] = seen[a] + 1
                    if b == j:
                        return seen[b]
                    queue.append(b)
        return np.iinfo(np.int64).max


@dataclass(frozen=True)
class DenseOperator:
    """Matrix with an explicit support inside an n-site register of d-level sites."""

    matrix: np.ndarray
    support: tuple
    n: int
    d: int

    def __post_init__(self):
        dim = self.d ** len(self.support)
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match support {self.support}")
        if list(self.support) != sorted(set(self.support)):
            raise ValueError("support must be sorted and duplicate free")

    def embed(self, sites) -> "DenseOperator":
        sites = region(sites)
        if not set(self.support) <= set(sites):
            raise ValueError("target support must contain the operator's support")
        pos = [sites.index(v) for v in self.support]
        return DenseOperator(ops.embed(self.matrix, pos, len(sites), self.d), sites, self.n, self.d)

    def full(self) -> np.ndarray:
        return self.embed(range(self.n)).matrix

    def restrict(self, sites) -> "DenseOperator":
        """Normalized partial trace onto `sites` (identity state on the rest)."""
        sites = region(sites)
        if not set(sites) <= set(self.support):
            sites_in = tuple(v for v in sites if v in self.support)
            return self.restrict(sites_in).embed(sites)
        pos = [self.support.index(v) for v in sites]
        drop = len(self.support) - len(sites)
        mat = ops.partial_trace(self.matrix, pos, len(self.support), self.d) / self.d ** drop
        return DenseOperator(mat, sites, self.n, self.d)

    def acts_trivially_outside(self, sites, tol: float = 1e-12) -> bool:
        inner = tuple(v for v in self.support if v in set(sites))
        back = self.restrict(inner).embed(self.support)
        return bool(np.max(np.abs(back.matrix - self.matrix), initial=0.0) <= tol)

    def norm(self) -> float:
        return ops.op_norm(self.matrix)

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        sites = region(self.support + other.support)
        return DenseOperator(self.embed(sites).matrix + other.embed(sites).matrix, sites, self.n, self.d)

    def scaled(self, c) -> "DenseOperator":
        return DenseOperator(c * self.matrix, self.support, self.n, self.d)


@dataclass(frozen=True)
class LocalTerm:
    edge_index: int
    matrix: np.ndarray
    support: tuple

    @cached_property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    lattice: Lattice
    terms: tuple
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for t in self.terms:
            if not ops.is_hermitian(t.matrix):
                raise ValueError(f"term on {t.support} is not Hermitian")
            if tuple(t.support) != self.lattice.hyperedges[t.edge_index]:
                raise ValueError("term support does not match its hyperedge")

    @property
    def N(self) -> int:
        return self.lattice.N

    @property
    def d(self) -> int:
        return self.lattice.d

    @property
    def dim(self) -> int:
        return self.d ** self.N

    @cached_property
    def h(self) -> float:
        return max((t.norm for t in self.terms), default=0.0)

    @cached_property
    def J(self) -> float:
        per_vertex = np.zeros(self.N)
        for t in self.terms:
            for v in t.support:
                per_vertex[v] += t.norm
        return float(per_vertex.max(initial=0.0))

    @property
    def k(self) -> int:
        return self.lattice.k

    @property
    def degree(self) -> int:
        return self.lattice.degree

    def derived(self) -> dict:
        return {"N": self.N, "d": self.d, "k": self.k, "h": self.h, "J": self.J, "degree": self.degree,
                "num_terms": len(self.terms)}

    def term_operator(self, i: int) -> DenseOperator:
        t = self.terms[i]
        return DenseOperator(np.asarray(t.matrix), tuple(t.support), self.N, self.d)

    @cached_property
    def is_real(self) -> bool:
        return all(not np.iscomplexobj(t.matrix) or np.max(np.abs(t.matrix.imag), initial=0.0) == 0.0
                   for t in self.terms)

    @cached_property
    def is_diagonal(self) -> bool:
        return all(np.count_nonzero(t.matrix - np.diag(np.diag(t.matrix))) == 0 for t in self.terms)

    def matrix_on(self, sites, term_indices=None) -> np.ndarray:
        """Dense matrix of a sum of terms on the register `sites` (terms must fit inside)."""
        sites = region(sites)
        idx = range(len(self.terms)) if term_indices is None else term_indices
        dim = self.d ** len(sites)
        dtype = float if self.is_real else complex
        out = np.zeros((dim, dim), dtype=dtype)
        pos_of = {v: p for p, v in enumerate(sites)}
        for i in idx:
            t = self.terms[i]
            mat = ops.as_real_if_possible(np.asarray(t.matrix)) if self.is_real else t.matrix
            pos = [pos_of[v] for v in t.support]
            out += ops.embed_sparse(mat, pos, len(sites), self.d).toarray()
        return out

    def full_matrix(self) -> np.ndarray:
        return self.matrix_on(range(self.N))

    def full_diagonal(self) -> np.ndarray:
        """Diagonal of the full matrix without forming it (exact only when is_diagonal)."""
        out = np.zeros(self.dim)
        for t in self.terms:
            diag = np.diag(np.real(np.diag(t.matrix)))
            out += ops.embed_sparse(diag, t.support, self.N, self.d).diagonal()
        return out

    def terms_within(self, sites) -> list[int]:
        s = set(sites)
        return [i for i, t in enumerate(self.terms) if set(t.support) <= s]

    def terms_near(self, A, radius: int) -> list[int]:
        """Indices of terms whose support lies within distance `radius` of A."""
        return self.terms_within(self.lattice.ball(A, radius))

    def support_of(self, term_indices) -> Region:
        return region(v for i in term_indices for v in self.terms[i].support)

    def with_terms(self, term_indices, name: str | None = None) -> "Hamiltonian":
        """Same lattice vertices, keeping only the listed terms."""
        keep = list(term_indices)
        edges = tuple(self.lattice.hyperedges[i] for i in keep)
        lat = Lattice(self.N, self.d, edges)
        terms = tuple(LocalTerm(j, self.terms[i].matrix, self.terms[i].support) for j, i in enumerate(keep))
        return Hamiltonian(lat, terms, name or self.name, dict(self.params))

    def interaction_between(self, A, B) -> tuple[list[int], float]:
        """Terms touching both A and B, and the norm of their sum."""
        A, B = set(A), set(B)
        idx = [i for i, t in enumerate(self.terms) if A & set(t.support) and B & set(t.support)]
        if not idx:
            return idx, 0.0
        sites = self.support_of(idx)
        return idx, ops.op_norm(self.matrix_on(sites, idx))

    def to_json(self) -> dict:
        if self.name != "custom" and self.params:
            return {"model": self.name, **self.params}
        terms = []
        for t in self.terms:
            m = np.asarray(t.matrix, dtype=complex)
            terms.append({"support": list(t.support), "matrix_re": m.real.tolist(), "matrix_im": m.imag.tolist()})
        return {"model": "custom", "d": self.d, "N": self.N, "terms": terms}


# ---------------------------------------------------------------- builders

def site_product(factors: dict) -> tuple[tuple, np.ndarray]:
    """Tensor product of single-site matrices keyed by vertex, legs in sorted order."""
    support = tuple(sorted(factors))
    mat = np.array([[1.0]])
    for v in support:
        mat = np.kron(mat, factors[v])
    return support, mat


def _sum_on_support(pieces: list[tuple[float, dict]], support: tuple) -> np.ndarray:
    dim = 2 ** len(support)
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, factors in pieces:
        full = {v: factors.get(v, ops.PAULI_I) for v in support}
        out += coeff * site_product(full)[1]
    return ops.as_real_if_possible(out)


def from_terms(n: int, d: int, terms: list[tuple[tuple, np.ndarray]], name: str = "custom",
               params: dict | None = None, drop_zero: bool = True) -> Hamiltonian:
    kept = []
    for support, mat in terms:
        support = tuple(int(v) for v in support)
        mat = np.asarray(mat)
        order = np.argsort(support)
        if list(order) != list(range(len(support))):
            # permute legs into sorted order
            k = len(support)
            t = mat.reshape([d] * 2 * k).transpose(list(order) + [k + o for o in order])
            mat = t.reshape(d ** k, d ** k)
            support = tuple(support[o] for o in order)
        if drop_zero and np.max(np.abs(mat), initial=0.0) == 0.0:
            continue
        kept.append((support, ops.as_real_if_possible(mat)))
    lat = Lattice(n, d, tuple(s for s, _ in kept))
    local = tuple(LocalTerm(i, m, s) for i, (s, m) in enumerate(kept))
    return Hamiltonian(lat, local, name, params or {})


def _chain_bonds(N: int, boundary: str) -> list[tuple[int, int]]:
    if boundary not in ("open", "periodic"):
        raise ValueError(f"boundary must be 'open' or 'periodic', got {boundary!r}")
    bonds = [(j, j + 1) for j in range(N - 1)]
    if boundary == "periodic" and N > 2:
        bonds.append((N - 1, 0))
    return bonds


def _bond_plus_field(N, J, field, coupling, field_op, boundary):
    """Chain terms J*coupling(j,j+1) + field*field_op(j), last site's field folded into the last bond."""
    if N == 1 or J == 0:
        # no coupling: keep each field on its own site so the lattice is decoupled
        return [((j,), field * field_op) for j in range(N)]
    bonds = _chain_bonds(N, boundary)
    terms = []
    for b, (i, j) in enumerate(bonds):
        support = tuple(sorted((i, j)))
        pieces = [(J, {i: coupling, j: coupling})]
        if field != 0:
            pieces.append((field, {i: field_op}))
            if boundary == "open" and b == len(bonds) - 1:
                pieces.append((field, {j: field_op}))
        terms.append((support, _sum_on_support(pieces, support)))
    return terms


def tfim_chain(N: int, J: float = 1.0, Delta: float = 1.0, boundary: str = "open") -> Hamiltonian:
    """sum_j J X_j X_{j+1} + Delta Z_j, with each field folded into the bond to its right."""
    terms = _bond_plus_field(N, J, Delta, ops.PAULI_X, ops.PAULI_Z, boundary)
    return from_terms(N, 2, terms, "tfim_chain", {"N": N, "J": J, "Delta": Delta, "boundary": boundary})


def classical_ising(N: int, J: float = 1.0, h: float = 0.0, boundary: str = "open") -> Hamiltonian:
    """sum_j J Z_j Z_{j+1} + h Z_j (diagonal, all terms commute)."""
    terms = _bond_plus_field(N, J, h, ops.PAULI_Z, ops.PAULI_Z, boundary)
    return from_terms(N, 2, terms, "classical_ising", {"N": N, "J": J, "h": h, "boundary": boundary})


def heisenberg_chain(N: int, J: float = 1.0, boundary: str = "open") -> Hamiltonian:
    if N < 2:
        raise ValueError("heisenberg_chain needs N >= 2")
    terms = []
    for i, j in _chain_bonds(N, boundary):
        support = tuple(sorted((i, j)))
        pieces = [(J, {i: p, j: p}) for p in (ops.PAULI_X, ops.PAULI_Y, ops.PAULI_Z)]
        terms.append((support, _sum_on_support(pieces, support)))
    return from_terms(N, 2, terms, "heisenberg_chain", {"N": N, "J": J, "boundary": boundary})


def tfim_grid(Lx: int, Ly: int, J: float = 1.0, Delta: float = 1.0) -> Hamiltonian:
    """Open Lx x Ly grid, site index y*Lx + x; XX bonds and separate Z field terms."""
    idx = lambda x, y: y * Lx + x  # noqa: E731
    terms = []
    for y in range(Ly):
        for x in range(Lx):
            for nx, ny in ((x + 1, y), (x, y + 1)):
                if nx < Lx and ny < Ly:
                    a, b = idx(x, y), idx(nx, ny)
                    terms.append(((a, b), J * np.kron(ops.PAULI_X, ops.PAULI_X)))
    for v in range(Lx * Ly):
        terms.append(((v,), Delta * ops.PAULI_Z))
    return from_terms(Lx * Ly, 2, terms, "tfim_grid", {"Lx": Lx, "Ly": Ly, "J": J, "Delta": Delta})


def random_chain(N: int, rng: np.random.Generator, d: int = 2, max_norm: float = 1.0,
                 real: bool = False) -> Hamiltonian:
    """Nearest-neighbour chain with random Hermitian bond terms of norm in [max_norm/2, max_norm]."""
    terms = []
    for j in range(N - 1):
        h = ops.random_hermitian(d * d, rng, norm=max_norm * rng.uniform(0.5, 1.0))
        if real:
            h = h.real.copy()
        terms.append(((j, j + 1), h))
    return from_terms(N, d, terms, "custom")


def build_model(spec: dict) -> Hamiltonian:
    """Build a Hamiltonian from a JSON-style description."""
    if "model" not in spec:
        raise KeyError("model description needs a 'model' key")
    name = spec["model"]
    try:
        if name == "tfim_chain":
            return tfim_chain(int(spec["N"]), float(spec.get("J", 1.0)), float(spec.get("Delta", 1.0)),
                              spec.get("boundary", "open"))
        if name == "heisenberg_chain":
            return heisenberg_chain(int(spec["N"]), float(spec.get("J", 1.0)), spec.get("boundary", "open"))
        if name == "classical_ising":
            return classical_ising(int(spec["N"]), float(spec.get("J", 1.0)), float(spec.get("h", 0.0)),
                                   spec.get("boundary", "open"))
        if name == "tfim_grid":
            return tfim_grid(int(spec["Lx"]), int(spec["Ly"]), float(spec.get("J", 1.0)),
                             float(spec.get("Delta", 1.0)))
        if name == "custom":
            d = int(spec.get("d", 2))
            terms = []
            for t in spec["terms"]:
                re = np.array(t["matrix_re"], dtype=float)
                im = np.array(t.get("matrix_im", np.zeros_like(re)), dtype=float)
                terms.append((tuple(t["support"]), re + 1j * im))
            n = int(spec.get("N", 1 + max(max(s) for s, _ in terms)))
            return from_terms(n, d, terms, "custom", drop_zero=False)
    except KeyError as exc:
        raise KeyError(f"model {name!r} is missing key {exc.args[0]!r}") from None
    raise ValueError(f"unknown model name {name!r}")


def load_model(path) -> Hamiltonian:
    with open(path) as fh:
        return build_model(json.load(fh))
