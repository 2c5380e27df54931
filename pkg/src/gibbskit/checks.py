"""Certificates for structural properties of Gibbs states on concrete instances:
area law, correlation length, CMI decay, local indistinguishability, Hamiltonian
of mean force, effective partition functions and commuting-model exactness."""

from __future__ import annotations

import itertools
import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import ops, oracle
from .algorithms import factorize_1d_thermal
from .lattice import DenseOperator, Hamiltonian, Region, region
from .locality import gibbs_operator, qbp_on_register

SLACK = 1e-9
FIT_FLOOR = 1e-13


@dataclass
class BipartitionReport:
    regions: dict
    measured: float
    bound: float
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.bound + SLACK)

    def to_json(self) -> dict:
        return {"regions": {k: list(v) for k, v in self.regions.items()}, "measured": self.measured,
                "bound": self.bound, "passed": self.passed, **self.extras}


def log_linear_fit(x, y, floor: float = FIT_FLOOR) -> dict | None:
    """Least-squares fit of log y = log K + slope x over points with y > floor."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    mask = y > floor
    if mask.sum() < 2:
        return None
    slope, intercept = np.polyfit(x[mask], np.log(y[mask]), 1)
    resid = np.log(y[mask]) - (slope * x[mask] + intercept)
    return {"slope": float(slope), "K": float(math.exp(intercept)), "points": int(mask.sum()),
            "rms_residual": float(np.sqrt(np.mean(resid ** 2)))}


def _complement(n: int, A) -> Region:
    return tuple(v for v in range(n) if v not in set(A))


def _partition_function(ham: Hamiltonian, sites, beta: float) -> float:
    """log Tr exp(-beta H_X) on register `sites`, H_X = terms inside X; 0 for an empty register."""
    sites = region(sites)
    if not sites:
        return 0.0
    idx = ham.terms_within(sites)
    mat = ham.matrix_on(sites, idx)
    if np.count_nonzero(mat - np.diag(np.diag(mat))) == 0:
        return ops.logsumexp_neg(np.real(np.diag(mat)), beta)[0]
    return oracle.log_partition(mat, beta)


# ---------------------------------------------------------------- area law

def area_law_check(state: oracle.GibbsState, ham: Hamiltonian, A, B=None) -> BipartitionReport:
    """I(A:B) <= 2 beta ||H_I||, with the energy-gap certificate and the 2kh|boundary| refinement."""
    n = ham.N
    A = region(A)
    B = _complement(n, A) if B is None else region(B)
    if set(A) & set(B) or len(A) + len(B) != n:
        raise ValueError("A and B must partition the vertex set")
    beta = state.beta
    mi = oracle.mutual_information(state, A, B)
    idx, h_i_norm = ham.interaction_between(A, B)
    # beta (Tr[H rho_A x rho_B] - Tr[H rho]); only the crossing terms contribute
    gap = 0.0
    for i in idx:
        t = ham.terms[i]
        sa = tuple(v for v in t.support if v in set(A))
        sb = tuple(v for v in t.support if v in set(B))
        prod = (oracle.marginal(state, sa).embed(t.support).matrix
                @ oracle.marginal(state, sb).embed(t.support).matrix)
        joint = oracle.marginal(state, t.support).matrix
        gap += float(np.real(np.trace((prod - joint) @ t.matrix)))
    gap *= beta
    boundary = set(ham.lattice.boundary(A)) | set(ham.lattice.boundary(B))
    refined = 2 * ham.k * ham.h * len(boundary)
    extras = {"beta": beta, "H_I_norm": h_i_norm, "energy_gap_certificate": gap,
              "energy_gap_passed": bool(mi <= gap + SLACK),
              "boundary_size": len(boundary), "refined_bound": 2 * beta * refined,
              "refined_passed": bool(h_i_norm <= refined + SLACK)}
    return BipartitionReport({"A": A, "B": B}, mi, 2 * beta * h_i_norm, extras)


# ---------------------------------------------------------------- correlations

def chain_pair_family(n: int, op: np.ndarray, origin: int = 0, d: int = 2):
    """r -> (op at origin, op at origin + r)."""
    def family(r: int):
        return DenseOperator(op, (origin,), n, d), DenseOperator(op, (origin + r,), n, d)
    return family


def correlation_length(state: oracle.GibbsState, family, distances) -> dict:
    """Fit |<C D> - <C><D>| ~ K exp(-r / xi) over the given distances."""
    distances = [int(r) for r in distances]
    corr = [oracle.connected_correlator(state, *family(r)) for r in distances]
    out = {"distances": distances, "correlators": corr, "xi": None, "K": None, "defined": False}
    if max(corr, default=0.0) < 1e-14:
        out["reason"] = "all correlators vanish"
        return out
    fit = log_linear_fit(distances, corr)
    if fit is None or fit["points"] < 3:
        out["reason"] = "fewer than 3 distances above the fit floor"
        return out
    out.update(K=fit["K"], fit=fit, defined=True)
    if fit["slope"] >= 0:
        warnings.warn("correlations do not decay over the requested distances", stacklevel=2)
        out["xi"] = math.inf
        out["decaying"] = False
    else:
        out["xi"] = -1.0 / fit["slope"]
        out["decaying"] = True
    out["monotone"] = bool(all(a > b for a, b in zip(corr, corr[1:])))
    return out


# ---------------------------------------------------------------- CMI

def shields(ham: Hamiltonian, A, B, C) -> bool:
    """True when every path of overlapping hyperedges from A to C passes through B."""
    A, B, C = set(A), set(B), set(C)
    seen = set(A)
    queue = deque(A)
    while queue:
        v = queue.popleft()
        for w in ham.lattice.vertex_neighbors[v]:
            if w in C:
                return False
            if w not in seen and w not in B:
                seen.add(w)
                queue.append(w)
    return True


def contiguous_triples(start: int, a: int, widths, c: int):
    """(A, B, C) = a sites from `start`, then w sites, then c sites, for each w."""
    out = []
    for w in widths:
        A = tuple(range(start, start + a))
        B = tuple(range(start + a, start + a + w))
        C = tuple(range(start + a + w, start + a + w + c))
        out.append((A, B, C))
    return out


def all_contiguous_triples(n: int):
    """Every (A, B, C) of consecutive nonempty intervals inside 0..n-1."""
    for i, j, k, l in itertools.combinations(range(n + 1), 4):
        yield tuple(range(i, j)), tuple(range(j, k)), tuple(range(k, l))


def cmi_decay(state: oracle.GibbsState, ham: Hamiltonian, triples) -> dict:
    rows = []
    for A, B, C in triples:
        A, B, C = region(A), region(B), region(C)
        if not shields(ham, A, B, C):
            raise ValueError(f"B={B} does not shield A={A} from C={C}")
        rows.append({"A": list(A), "B": list(B), "C": list(C), "B_size": len(B),
                     "cmi": oracle.cmi(state, A, B, C)})
    fit = log_linear_fit([r["B_size"] for r in rows], [r["cmi"] for r in rows])
    return {"rows": rows, "fit": fit,
            "decreasing": bool(len(rows) >= 2 and rows[-1]["cmi"] < rows[0]["cmi"]),
            "max_cmi": max(r["cmi"] for r in rows) if rows else 0.0}


# ---------------------------------------------------------------- local indistinguishability

def local_indistinguishability(ham: Hamiltonian, beta: float, A, B, C) -> dict:
    """||Tr_BC rho - Tr_B rho0_AB||_1 with rho0_AB the Gibbs state of the terms inside AB,
    plus the partition-ratio certificate Z/(Z_AB Z_C) <= exp(beta ||H_BC||)."""
    A, B, C = region(A), region(B), region(C)
    if len(A) + len(B) + len(C) != ham.N or len(set(A) | set(B) | set(C)) != ham.N:
        raise ValueError("A, B, C must partition the vertex set")
    state = oracle.gibbs(ham, beta)
    rho_a = oracle.marginal(state, A).matrix
    AB = region(A + B)
    h_ab = ham.matrix_on(AB, ham.terms_within(AB))
    st0 = oracle.gibbs_from_matrix(h_ab, beta, len(AB), ham.d)
    rho0_a = oracle.marginal(st0, [AB.index(v) for v in A]).matrix
    dist = ops.trace_norm(rho_a - rho0_a)
    inside = set(ham.terms_within(AB)) | set(ham.terms_within(C)) if C else set(ham.terms_within(AB))
    cross = [i for i in range(len(ham.terms)) if i not in inside]
    h_bc_norm = ops.op_norm(ham.matrix_on(ham.support_of(cross), cross)) if cross else 0.0
    log_ratio = state.log_Z - _partition_function(ham, AB, beta) - _partition_function(ham, C, beta)
    return {"A": list(A), "B": list(B), "C": list(C), "B_size": len(B), "distance": dist,
            "log_partition_ratio": log_ratio, "H_BC_norm": h_bc_norm,
            "ratio_bound_passed": bool(abs(log_ratio) <= beta * h_bc_norm + SLACK)}


def local_indistinguishability_sweep(ham: Hamiltonian, beta: float, a: int, widths) -> dict:
    """A = the first a chain sites, B the next w, C the rest."""
    rows = []
    for w in widths:
        A = tuple(range(a))
        B = tuple(range(a, a + w))
        C = tuple(range(a + w, ham.N))
        rows.append(local_indistinguishability(ham, beta, A, B, C))
    fit = log_linear_fit([r["B_size"] for r in rows], [r["distance"] for r in rows])
    return {"rows": rows, "fit": fit,
            "decreasing": bool(all(x["distance"] > y["distance"] for x, y in zip(rows, rows[1:]))),
            "ratio_bound_passed": all(r["ratio_bound_passed"] for r in rows)}


# ---------------------------------------------------------------- mean force

@dataclass
class MeanForceDecomposition:
    A: tuple
    H_tilde: DenseOperator
    H_A: DenseOperator
    Phi: DenseOperator
    boundary: tuple
    approximants: dict  # l -> DenseOperator
    residuals: dict  # l -> ||Phi - Phi^l||
    reconstruction_error: float

    @property
    def phi_norm(self) -> float:
        return self.Phi.norm()

    def to_json(self) -> dict:
        return {"A": list(self.A), "boundary": list(self.boundary), "phi_norm": self.phi_norm,
                "residuals": {str(k): v for k, v in self.residuals.items()},
                "reconstruction_error": self.reconstruction_error}


def mean_force(ham: Hamiltonian, beta: float, A, l_list=(0, 1, 2, 3)) -> MeanForceDecomposition:
    """H~_A = -beta^{-1} log(Tr_{A^c} e^{-beta H} / Z_{A^c}), Phi_A = H~_A - H_A.

    Z_{A^c} is the partition function of the terms inside the complement, so a
    decoupled A gives Phi_A = 0. Phi_A^l keeps the part of Phi_A supported on
    the sites of A within distance l of its boundary (identity-state partial
    trace over the rest of A).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    A = region(A)
    n, d = ham.N, ham.d
    state = oracle.gibbs(ham, beta)
    rho_a = oracle.marginal(state, A).matrix
    ev, vec = np.linalg.eigh(rho_a)
    if ev[0] <= 1e-13 * ev[-1]:
        rank = int(np.sum(ev > 1e-13 * ev[-1]))
        raise ValueError(f"marginal on {A} is rank deficient ({rank} of {len(ev)} above 1e-13)")
    comp = _complement(n, A)
    log_unnorm = np.log(ev) + state.log_Z - _partition_function(ham, comp, beta)
    h_tilde = (vec * (-log_unnorm / beta)) @ vec.conj().T
    h_tilde = ops.as_real_if_possible(h_tilde, 1e-14)
    h_a = ham.matrix_on(A, ham.terms_within(A))
    phi = DenseOperator(h_tilde - h_a, A, n, d)
    recon = gibbs_operator(h_tilde, beta, float(np.min(-log_unnorm / beta)))
    recon /= np.trace(recon)
    recon_err = float(np.max(np.abs(recon - rho_a)))
    boundary = tuple(v for v in ham.lattice.boundary(A))
    dist = ham.lattice.distances_from(boundary) if boundary else np.full(n, -1)
    approx, resid = {}, {}
    for l in l_list:
        keep = tuple(v for v in A if 0 <= dist[v] <= l)
        if keep:
            phi_l = phi.restrict(keep).embed(A)
        else:
            phi_l = DenseOperator(np.zeros_like(phi.matrix), A, n, d)
        approx[int(l)] = phi_l
        resid[int(l)] = ops.op_norm(phi.matrix - phi_l.matrix)
    return MeanForceDecomposition(A, DenseOperator(h_tilde, A, n, d), DenseOperator(h_a, A, n, d),
                                  phi, boundary, approx, resid, recon_err)


# ---------------------------------------------------------------- effective partition function

def effective_partition_ratio(ham: Hamiltonian, beta: float, S, l_list=(1, 2, 3), steps: int = 4,
                              levels: int = 3, tol: float = 1e-8) -> dict:
    """Z~_S/Z_S = Z / (Z_S Z_B) exactly, against the truncated-bath estimate
    Tr[(O^l)^dagger O^l sigma_l] with sigma_l the decoupled Gibbs state on S and
    the bath sites within distance 2l of S, and O^l the belief-propagation
    operator inserting H_I into the decoupled terms within distance l of supp H_I."""
    S = region(S)
    n, d = ham.N, ham.d
    bath = _complement(n, S)
    inter, h_i_norm = ham.interaction_between(S, bath)
    state = oracle.gibbs(ham, beta)
    log_exact = state.log_Z - _partition_function(ham, S, beta) - _partition_function(ham, bath, beta)
    exact = math.exp(log_exact)
    rows = []
    if not inter:
        return {"exact": exact, "rows": [{"l": int(l), "estimate": 1.0, "rel_error": abs(exact - 1.0)}
                                         for l in l_list], "H_I_norm": 0.0}
    supp_i = ham.support_of(inter)
    lat = ham.lattice
    for l in l_list:
        qbp_sites = region(set(lat.ball(supp_i, l)) | set(supp_i))
        near = [j for j in ham.terms_within(qbp_sites) if j not in set(inter)]
        ball_s = set(lat.ball(S, 2 * l))
        window = region(ball_s | set(qbp_sites))
        oracle.check_dim(d ** len(window), "effective-partition window")
        h_q = ham.matrix_on(qbp_sites, near)
        a_q = ham.matrix_on(qbp_sites, inter)
        O, cert, _ = qbp_on_register(h_q, a_q, beta, steps, levels, tol)
        OO = DenseOperator(O.conj().T @ O, qbp_sites, n, d).embed(window).matrix
        bath_l = [v for v in window if v not in set(S)]
        decoupled = [j for j in ham.terms_within(window) if j not in set(inter)
                     and (set(ham.terms[j].support) <= set(S) or set(ham.terms[j].support) <= set(bath_l))]
        sigma = oracle.gibbs_from_matrix(ham.matrix_on(window, decoupled), beta, len(window), d)
        est = sigma.expectation(OO)
        rows.append({"l": int(l), "estimate": est, "rel_error": abs(est - exact) / exact,
                     "window_size": len(window), "quadrature_error": cert})
    return {"exact": exact, "rows": rows, "H_I_norm": h_i_norm,
            "converging": bool(rows[-1]["rel_error"] < rows[0]["rel_error"]) if len(rows) > 1 else True}


# ---------------------------------------------------------------- commuting models

def commutator_residuals(ham: Hamiltonian) -> float:
    """Largest ||[h_i, h_j]|| over overlapping pairs."""
    worst = 0.0
    for i, j in itertools.combinations(range(len(ham.terms)), 2):
        si, sj = ham.terms[i].support, ham.terms[j].support
        if not set(si) & set(sj):
            continue
        sites = region(si + sj)
        a = ham.term_operator(i).embed(sites).matrix
        b = ham.term_operator(j).embed(sites).matrix
        worst = max(worst, ops.op_norm(a @ b - b @ a))
    return worst


def commuting_identity_residuals(ham: Hamiltonian, beta: float) -> list[float]:
    """||e^{-beta(H-h_i)} - e^{-beta H} e^{beta h_i}|| / ||e^{-beta(H-h_i)}|| for each term."""
    spec = oracle.spectrum(ham)
    shift = float(spec.energies[0])
    out = []
    if spec.vectors is None:
        total = ham.full_diagonal()
        for i in range(len(ham.terms)):
            hi = ham.with_terms([i]).full_diagonal()
            lhs = np.exp(-beta * (total - hi - shift))
            rhs = np.exp(-beta * (total - shift)) * np.exp(beta * hi)
            out.append(float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs))))
        return out
    full = spec.function(lambda e: np.exp(-beta * (e - shift)))
    hmat = ham.full_matrix()
    for i in range(len(ham.terms)):
        hi = ham.term_operator(i).full()
        lhs = gibbs_operator(hmat - hi, beta, shift)
        rhs = full @ gibbs_operator(hi, -beta)
        out.append(ops.op_norm(lhs - rhs) / ops.op_norm(lhs))
    return out


def commuting_suite(ham: Hamiltonian, beta: float, mean_force_regions=None, tol: float = 1e-10) -> dict:
    comm = commutator_residuals(ham)
    if comm > 1e-12:
        raise ValueError(f"terms do not commute (max commutator norm {comm:.3g})")
    state = oracle.gibbs(ham, beta)
    identity = commuting_identity_residuals(ham, beta)
    triples = [t for t in all_contiguous_triples(ham.N) if shields(ham, *t)]
    cmis = [oracle.cmi(state, *t) for t in triples]
    if mean_force_regions is None:
        mean_force_regions = [tuple(range(ham.N // 2))]
    mf_rows = []
    for A in mean_force_regions:
        mf = mean_force(ham, beta, A, l_list=(0,))
        bset = set(ham.lattice.boundary(A)) | set(ham.lattice.boundary(_complement(ham.N, A)))
        bound = 2 * ham.h * len(bset)
        mf_rows.append({"A": list(A), "phi_norm": mf.phi_norm, "bound": bound,
                        "passed": bool(mf.phi_norm <= bound + SLACK),
                        "supported_on_boundary": bool(mf.Phi.acts_trivially_outside(mf.boundary, 1e-9)),
                        "reconstruction_error": mf.reconstruction_error})
    out = {"commutator_max": comm, "identity_residuals": identity,
           "identity_passed": bool(max(identity, default=0.0) <= tol),
           "cmi_triples": len(triples), "cmi_max": max(cmis, default=0.0),
           "cmi_passed": bool(max(cmis, default=0.0) <= tol),
           "mean_force": mf_rows, "mean_force_passed": all(r["passed"] for r in mf_rows)}
    try:
        fac = factorize_1d_thermal(ham, beta, ham.k)
        out["factorization_error"] = fac.error
        out["factorization_passed"] = bool(fac.error <= tol)
    except ValueError as exc:  # not a nearest-neighbour chain
        out["factorization_error"] = None
        out["factorization_passed"] = None
        out["factorization_note"] = str(exc)
    out["passed"] = bool(out["identity_passed"] and out["cmi_passed"] and out["mean_force_passed"]
                         and out["factorization_passed"] is not False)
    return out
