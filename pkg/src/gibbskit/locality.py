"""Imaginary-time evolution of local operators, transfer operators and the
belief-propagation operators that insert a perturbation into a Gibbs operator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.csgraph import connected_components

from . import ops
from .lattice import DenseOperator, Hamiltonian, region
from .oracle import check_dim

OVERFLOW_LIMIT = 700.0


def _full(ham: Hamiltonian, A: DenseOperator) -> np.ndarray:
    return A.full()


def _eigh(mat: np.ndarray):
    return ops.block_eigh(mat)


def _expm_herm(mat: np.ndarray, scale: float) -> np.ndarray:
    """exp(scale * M) for Hermitian M."""
    e, v = _eigh(mat)
    return (v * np.exp(scale * e)) @ v.conj().T


# ---------------------------------------------------------------- nested commutators

@dataclass
class CommutatorTower:
    base: DenseOperator
    coefficients: list  # C_m as DenseOperator on the declared support
    beta: float | None
    norms: list
    bounds: list

    @property
    def passed(self) -> bool:
        return all(n <= b * (1 + 1e-12) + 1e-12 for n, b in zip(self.norms, self.bounds))

    def partial_sum(self, beta: float, M: int | None = None) -> np.ndarray:
        M = len(self.coefficients) - 1 if M is None else M
        return sum(beta ** m * self.coefficients[m].full() for m in range(M + 1))


def commutator_bound(ham: Hamiltonian, a_norm: float, m: int) -> float:
    """k ||A|| (2 J k)^m."""
    k = max(ham.k, 1)
    return k * a_norm * (2 * ham.J * k) ** m


def taylor_tail_bound(ham: Hamiltonian, a_norm: float, beta: float, M: int) -> float:
    """k ||A|| (2 beta J k)^{M+1} / (1 - 2 beta J k), infinite outside the radius."""
    k = max(ham.k, 1)
    x = 2 * beta * ham.J * k
    return math.inf if x >= 1 else k * a_norm * x ** (M + 1) / (1 - x)


def chain_growth_bounds(beta: float, J: float) -> dict:
    """1D certificate constants f = 16 beta J e^{1+8 beta J} and g = e^{240 e^2 beta J} - 1."""
    f = 16 * beta * J * math.exp(1 + 8 * beta * J)
    g = math.exp(min(240 * math.e ** 2 * beta * J, OVERFLOW_LIMIT)) - 1
    return {"f": f, "g": g, "norm_factor": f * math.exp(min(f, OVERFLOW_LIMIT))}


def nested_commutators(ham: Hamiltonian, A: DenseOperator, M: int) -> CommutatorTower:
    """C_0 = A, C_m = -[H, C_{m-1}]/m, each stored on the ball of radius m around supp A."""
    if M < 0:
        raise ValueError("M must be >= 0")
    check_dim(ham.dim)
    H = ham.full_matrix()
    C = A.full().astype(np.result_type(H, A.matrix))
    a_norm = A.norm()
    coeffs, norms, bounds = [], [], []
    for m in range(M + 1):
        if m > 0:
            C = -(H @ C - C @ H) / m
        support = ham.lattice.ball(A.support, m)
        full_op = DenseOperator(C, tuple(range(ham.N)), ham.N, ham.d)
        coeffs.append(full_op.restrict(support))
        norms.append(ops.op_norm(C))
        bounds.append(commutator_bound(ham, a_norm, m))
    return CommutatorTower(A, coeffs, None, norms, bounds)


def euclidean_evolve(ham: Hamiltonian, A: DenseOperator, beta: float) -> DenseOperator:
    """A(i beta) = e^{-beta H} A e^{beta H} on the full register."""
    from .oracle import spectrum

    spec = spectrum(ham)
    spread = beta * (spec.energies[-1] - spec.energies[0])
    if spread > OVERFLOW_LIMIT:
        raise OverflowError(f"beta * spectral width = {spread:.1f} exceeds {OVERFLOW_LIMIT}")
    e = spec.energies
    a = spec.to_eigenbasis(A.full())
    evolved = spec.from_eigenbasis(a * np.exp(-beta * (e[:, None] - e[None, :])))
    return DenseOperator(evolved, tuple(range(ham.N)), ham.N, ham.d)


# ---------------------------------------------------------------- transfer operators

@dataclass
class TransferOperator:
    operator: DenseOperator
    flavor: str
    radius: int | None = None
    deviation: float | None = None  # ||E_A - this|| when computed
    achieved_tolerance: float | None = None


def normEa_bound(ham: Hamiltonian, a_norm: float, beta: float) -> float:
    """(1 - 2 beta J k)^{-||A||/(2 beta J)} for beta < 1/(2Jk)."""
    k = max(ham.k, 1)
    x = 2 * beta * ham.J * k
    if beta == 0 or ham.J == 0:
        return math.exp(beta * a_norm * k) if x < 1 else math.inf
    if x >= 1:
        return math.inf
    return (1 - x) ** (-a_norm / (2 * beta * ham.J))


def _transfer_on(h: np.ndarray, a: np.ndarray, beta: float) -> np.ndarray:
    e0, v0 = _eigh(h)
    e1, v1 = _eigh(h + a)
    c = 0.5 * (e0.min() + e1.min())
    if beta * max(e0.max() - c, c - e1.min()) > OVERFLOW_LIMIT:
        raise OverflowError("transfer operator exponent exceeds the overflow guard")
    left = (v1 * np.exp(-beta * (e1 - c))) @ v1.conj().T
    right = (v0 * np.exp(beta * (e0 - c))) @ v0.conj().T
    return left @ right


def transfer_operator(ham: Hamiltonian, A: DenseOperator, beta: float, flavor: str = "exact",
                      l: int | None = None, tol: float = 1e-9, max_halvings: int = 14) -> TransferOperator:
    """E_A = e^{-beta(H+A)} e^{beta H} and its localized variants.

    flavor "exact": dense product of exponentials.
    flavor "restricted": same formula with H replaced by the terms within distance l of supp A.
    flavor "ode": integrates dE/db = -E A^l(ib) with A^l the tower truncated at order l.
    """
    n, d = ham.N, ham.d
    full_sites = tuple(range(n))
    exact = DenseOperator(_transfer_on(ham.full_matrix(), A.full(), beta), full_sites, n, d)
    if flavor == "exact":
        return TransferOperator(exact, "exact", None, 0.0)
    if l is None or l < 0:
        raise ValueError("localized flavors need l >= 0")
    if flavor == "restricted":
        sites = region(set(ham.lattice.ball(A.support, l)) | set(A.support))
        idx = ham.terms_within(sites)
        local = _transfer_on(ham.matrix_on(sites, idx), A.embed(sites).matrix, beta)
        op = DenseOperator(local, sites, n, d).embed(full_sites)
        return TransferOperator(op, "restricted", l, ops.op_norm(op.matrix - exact.matrix))
    if flavor == "ode":
        k = max(ham.k, 1)
        if 2 * beta * ham.J * k >= 1:
            raise ValueError("the truncated-generator flavor needs beta < 1/(2Jk)")
        tower = nested_commutators(ham, A, l)
        Cs = [c.full() for c in tower.coefficients]

        def gen(b):
            return sum(b ** m * Cs[m] for m in range(len(Cs)))

        def rk4(steps):
            h = beta / steps
            E = np.eye(d ** n, dtype=complex)
            for s in range(steps):
                b = s * h
                k1 = -E @ gen(b)
                k2 = -(E + 0.5 * h * k1) @ gen(b + 0.5 * h)
                k3 = -(E + 0.5 * h * k2) @ gen(b + 0.5 * h)
                k4 = -(E + h * k3) @ gen(b + h)
                E = E + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            return E

        steps = 4
        prev = rk4(steps)
        achieved = math.inf
        for _ in range(max_halvings):
            steps *= 2
            cur = rk4(steps)
            achieved = ops.op_norm(cur - prev)
            prev = cur
            if achieved < tol:
                break
        else:
            raise RuntimeError(f"step halving stopped at tolerance {achieved:.3g}")
        op = DenseOperator(ops.as_real_if_possible(prev, 1e-14), full_sites, n, d)
        return TransferOperator(op, "ode", l, ops.op_norm(op.matrix - exact.matrix), achieved)
    raise ValueError(f"unknown flavor {flavor!r}")


def transfer_operator_prime(ham: Hamiltonian, A: DenseOperator, beta: float) -> DenseOperator:
    """E'_A = e^{-beta(H+A)} e^{beta H} e^{beta A} (measured only)."""
    E = transfer_operator(ham, A, beta).operator.matrix
    return DenseOperator(E @ _expm_herm(A.full(), beta), tuple(range(ham.N)), ham.N, ham.d)


# ---------------------------------------------------------------- belief propagation

def filter_kernel(beta: float, omega) -> np.ndarray:
    """tanh(beta w / 2) / (beta w / 2), equal to 1 at w = 0."""
    x = 0.5 * beta * np.asarray(omega, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    return np.where(small, 1 - x ** 2 / 3 + 2 * x ** 4 / 15, np.tanh(safe) / safe)


def qbp_filter_matrix(h: np.ndarray, a: np.ndarray, beta: float) -> np.ndarray:
    e, v = _eigh(h)
    ae = v.conj().T @ a @ v
    return v @ (ae * filter_kernel(beta, e[:, None] - e[None, :])) @ v.conj().T


def qbp_filter(h_s, A: DenseOperator, beta: float) -> DenseOperator:
    """Phi_beta^{H(s)}(A) on the full register; h_s is a Hamiltonian or a full matrix."""
    mat = h_s.full_matrix() if isinstance(h_s, Hamiltonian) else np.asarray(h_s)
    n = A.n
    return DenseOperator(qbp_filter_matrix(mat, A.full(), beta), tuple(range(n)), n, A.d)


def qbp_weight_function(beta: float, t) -> np.ndarray:
    """f_beta(t) = (2/(beta pi)) log((e^{pi|t|/beta}+1)/(e^{pi|t|/beta}-1))."""
    x = np.pi * np.abs(np.asarray(t, dtype=float)) / beta
    with np.errstate(divide="ignore", over="ignore"):
        return 2 / (beta * np.pi) * np.log1p(2 / np.expm1(x))


def qbp_weight_tail(beta: float, a: float) -> float:
    """Analytic bound 4/(pi^2 (e^{pi a/beta} - 1)) on the one-sided tail, valid for a > beta/pi."""
    if a <= beta / np.pi:
        raise ValueError("tail bound requires a > beta/pi")
    return 4 / (np.pi ** 2 * np.expm1(np.pi * a / beta))


def qbp_weight_integral(beta: float, lower: float = 0.0) -> float:
    """Numerical integral of f_beta over |t| >= lower (both sides)."""
    f = lambda t: float(qbp_weight_function(beta, t))  # noqa: E731
    pts = [lower + beta * s for s in (0.01, 0.1, 1.0)]
    head = integrate.quad(f, lower, pts[-1], points=pts[:-1], limit=200, epsabs=1e-13, epsrel=1e-12)[0]
    tail = integrate.quad(f, pts[-1], np.inf, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
    return 2 * (head + tail)


@dataclass
class BeliefPropagationOperator:
    operator: DenseOperator
    perturbation: DenseOperator
    beta: float
    radius: int | None
    quadrature_error: float
    steps: int
    norm: float
    norm_bound: float
    reconstruction_error: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def norm_ok(self) -> bool:
        return self.norm <= self.norm_bound + 1e-9


def _ordered_product(h: np.ndarray, a: np.ndarray, beta: float, steps: int) -> np.ndarray:
    """Midpoint product of exp(-(beta/2) Phi(s) ds), later s to the left."""
    O = np.eye(h.shape[0], dtype=np.result_type(h, a, float))
    ds = 1.0 / steps
    for j in range(steps):
        s = (j + 0.5) * ds
        phi = qbp_filter_matrix(h + s * a, a, beta)
        O = _expm_herm(phi, -0.5 * beta * ds) @ O
    return O


def qbp_on_register(h: np.ndarray, a: np.ndarray, beta: float, steps: int = 16, levels: int = 3,
                    tol: float = 1e-10, max_steps: int = 1024) -> tuple[np.ndarray, float, int]:
    """Richardson-extrapolated ordered exponential on a dense register.

    The exponential midpoint rule is symmetric, so its error expands in even
    powers of the step; a Romberg table over steps, 2 steps, 4 steps removes
    the leading terms. Returns (O, certificate, finest step count).
    """
    if not np.any(a):
        return np.eye(h.shape[0]), 0.0, 0
    ncomp, labels = connected_components(sp.csr_matrix((h != 0) | (a != 0)), directed=False)
    if ncomp > 1:
        # the flow never mixes disconnected blocks, so integrate each on its own
        O = np.zeros(h.shape, dtype=np.result_type(h, a, float))
        cert, finest = 0.0, 0
        for c in range(ncomp):
            idx = np.flatnonzero(labels == c)
            blk = np.ix_(idx, idx)
            Ob, cb, fb = qbp_on_register(h[blk], a[blk], beta, steps, levels, tol, max_steps)
            O[blk] = Ob
            cert, finest = max(cert, cb), max(finest, fb)
        return O, cert, finest
    while True:
        table = [_ordered_product(h, a, beta, steps * 2 ** j) for j in range(levels)]
        prev_best = table[0] if levels == 1 else None
        for order in range(1, levels):
            fac = 4 ** order
            prev_best = table[-1]
            table = [(fac * table[j + 1] - table[j]) / (fac - 1) for j in range(len(table) - 1)]
        best = table[0]
        cert = math.inf if levels == 1 else ops.op_norm(best - prev_best)
        finest = steps * 2 ** (levels - 1)
        if cert <= tol or finest * 2 > max_steps:
            return best, cert, finest
        steps *= 2


def gibbs_operator(h: np.ndarray, beta: float, shift: float = 0.0) -> np.ndarray:
    return _expm_herm(h - shift * np.eye(h.shape[0]), -beta)


def qbp_operator(ham: Hamiltonian, A: DenseOperator, beta: float, radius: int | None = None,
                 steps: int = 16, levels: int = 3, tol: float = 1e-10, max_steps: int = 1024,
                 certify: bool = True) -> BeliefPropagationOperator:
    """O_A with e^{-beta(H+A)} = O_A e^{-beta H} O_A^dagger.

    radius=None uses the whole Hamiltonian; an integer m keeps only the terms
    within distance m of supp A (the operator then acts on that ball).
    """
    n, d = ham.N, ham.d
    if radius is None:
        sites = tuple(range(n))
    else:
        sites = region(set(ham.lattice.ball(A.support, radius)) | set(A.support))
    check_dim(d ** len(sites), "QBP register")
    h = ham.matrix_on(sites, ham.terms_within(sites))
    a = A.embed(sites).matrix
    O, cert, finest = qbp_on_register(h, a, beta, steps, levels, tol, max_steps)
    op = DenseOperator(O, sites, n, d)
    a_norm = A.norm()
    result = BeliefPropagationOperator(op, A, beta, radius, cert, finest, ops.op_norm(O),
                                       math.exp(beta * a_norm / 2))
    if certify:
        shift = float(np.linalg.eigvalsh(h)[0])
        lhs = gibbs_operator(h + a, beta, shift)
        rhs = O @ gibbs_operator(h, beta, shift) @ O.conj().T
        # absolute error for the Hamiltonian as given (undo the shift)
        result.reconstruction_error = ops.op_norm(lhs - rhs) * math.exp(-beta * shift)
        result.extras["relative_reconstruction_error"] = ops.op_norm(lhs - rhs) / ops.op_norm(lhs)
    return result


def qbp_locality_sweep(ham: Hamiltonian, A: DenseOperator, beta: float, radii, **kw) -> list[dict]:
    """||O_A - O_A^m|| for each radius m, both embedded on the full register."""
    exact = qbp_operator(ham, A, beta, None, certify=False, **kw)
    full = exact.operator.matrix
    rows = []
    for m in radii:
        loc = qbp_operator(ham, A, beta, m, certify=False, **kw)
        dev = ops.op_norm(loc.operator.embed(range(ham.N)).matrix - full)
        rows.append({"param": int(m), "measured": dev, "bound": None,
                     "quadrature_error": max(loc.quadrature_error, exact.quadrature_error)})
    return rows


# ---------------------------------------------------------------- Lieb-Robinson

def _heisenberg(h: np.ndarray, a: np.ndarray, t: float) -> np.ndarray:
    e, v = _eigh(h)
    ae = v.conj().T @ a @ v
    return v @ (ae * np.exp(-1j * t * (e[:, None] - e[None, :]))) @ v.conj().T


def lieb_robinson_check(ham: Hamiltonian, A: DenseOperator, times, radii, dim_exponent: int = 1) -> dict:
    """Truncation error of real-time evolution on a (t, m) grid, with a cone fit.

    Fits log err = log(b ||A||) + (D-1) log m + c' v t - c' m over points with err > 1e-12.
    """
    n = ham.N
    check_dim(ham.dim)
    H = ham.full_matrix()
    a = A.full()
    es, vs = _eigh(H)
    a_e = vs.conj().T @ a @ vs
    rows = []
    for t in times:
        exact = vs @ (a_e * np.exp(-1j * t * (es[:, None] - es[None, :]))) @ vs.conj().T
        for m in radii:
            sites = region(set(ham.lattice.ball(A.support, m)) | set(A.support))
            hm = ham.matrix_on(sites, ham.terms_within(sites))
            local = _heisenberg(hm, A.embed(sites).matrix, t)
            local_full = DenseOperator(local, sites, n, ham.d).embed(range(n)).matrix
            rows.append({"t": float(t), "m": int(m), "error": ops.op_norm(exact - local_full)})
    pts = [r for r in rows if r["error"] > 1e-12]
    fit = None
    if len(pts) >= 3:
        X = np.array([[1.0, r["t"], r["m"]] for r in pts])
        y = np.array([math.log(r["error"]) - (dim_exponent - 1) * math.log(max(r["m"], 1)) for r in pts])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        c_prime = -coef[2]
        v = coef[1] / c_prime if c_prime != 0 else math.inf
        fit = {"v": float(v), "c_prime": float(c_prime), "b": float(math.exp(coef[0]) / max(A.norm(), 1e-300))}
    elif rows and not pts:
        fit = None
    return {"grid": rows, "fit": fit, "degenerate": len(pts) < 3}
