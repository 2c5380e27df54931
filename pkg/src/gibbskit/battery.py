"""Named checks runnable from a manifest: {check, model, params} -> report with a pass flag.

Every runner takes (model spec or None, params dict, numpy Generator) and
returns a JSON-ready dict whose "passed" entry is True, False or None (no
certificate attached).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import algorithms, checks, closed_forms, cluster, locality, oracle, ops, statistics
from .lattice import build_model, classical_ising, random_chain, tfim_chain

REGISTRY = {}


def check(name):
    def wrap(fn):
        REGISTRY[name] = fn
        return fn
    return wrap


def _ham(model):
    if model is None:
        raise ValueError("this check needs a 'model'")
    return build_model(model)


def _family(params):
    """N -> Hamiltonian for sweeps; params['family'] is a model spec without N."""
    spec = dict(params.get("family", {"model": "classical_ising", "J": 1.0, "h": 0.5}))
    return lambda N: build_model({**spec, "N": int(N)})


# ---------------------------------------------------------------- oracle and series

@check("exact")
def run_exact(model, params, rng):
    ham = _ham(model)
    st = oracle.gibbs(ham, float(params["beta"]))
    return {"logZ": st.log_Z, "entropy": st.entropy(), "energy": st.energy,
            "free_energy": st.free_energy, "passed": None}


@check("cluster_series")
def run_cluster_series(model, params, rng):
    ham = _ham(model)
    bstar = cluster.beta_star(ham)
    beta = float(params.get("beta", bstar * params.get("beta_fraction", 0.125)))
    exact = oracle.gibbs(ham, beta).log_Z
    rows = []
    for M in range(int(params.get("M_max", 8)) + 1):
        res = cluster.log_partition_series(ham, beta, M)
        err = abs(res.log_Z_estimate - exact)
        rows.append({"M": M, "logZ": res.log_Z_estimate, "error": err, "bound": res.error_bound,
                     "passed": bool(err <= res.error_bound)})
    return {"beta": beta, "beta_star": bstar, "oracle_logZ": exact, "rows": rows,
            "passed": all(r["passed"] for r in rows)}


@check("cluster_random")
def run_cluster_random(model, params, rng):
    n_models, N = int(params.get("models", 20)), int(params.get("N", 8))
    frac, M_max = float(params.get("beta_fraction", 0.125)), int(params.get("M_max", 8))
    final_tol = float(params.get("final_tol", 1e-5))
    rows = []
    for s in range(n_models):
        ham = random_chain(N, rng, max_norm=float(params.get("max_norm", 1.0)))
        bstar = cluster.beta_star(ham)
        beta = frac * bstar
        exact = oracle.gibbs(ham, beta).log_Z
        errs, bounds = [], []
        for M in range(M_max + 1):
            res = cluster.log_partition_series(ham, beta, M)
            errs.append(abs(res.log_Z_estimate - exact))
            bounds.append(res.error_bound)
        rows.append({"model": s, "beta": beta, "errors": errs, "bounds": bounds,
                     "within_bound": all(e <= b for e, b in zip(errs, bounds)),
                     "final_error": errs[-1]})
    ok = all(r["within_bound"] and r["final_error"] <= final_tol for r in rows)
    return {"rows": rows, "max_final_error": max(r["final_error"] for r in rows),
            "passed": bool(ok)}


@check("disconnected_nullity")
def run_disconnected(model, params, rng):
    count, max_size = int(params.get("count", 200)), int(params.get("max_size", 4))
    worst, done = 0.0, 0
    N = int(params.get("N", 8))
    while done < count:
        ham = random_chain(N, rng)
        size = int(rng.integers(2, max_size + 1))
        edges = rng.choice(len(ham.terms), size=size, replace=True)
        W = cluster.Cluster.from_dict({int(e): int(np.sum(edges == e)) for e in set(edges.tolist())})
        if W.is_connected(ham.lattice):
            continue
        val = cluster.cluster_derivative(ham, float(rng.uniform(0.01, 0.5)), W)
        worst = max(worst, abs(val))
        done += 1
    return {"count": count, "max_abs_contribution": worst, "passed": bool(worst <= 1e-10)}


# ---------------------------------------------------------------- locality

@check("qbp")
def run_qbp(model, params, rng):
    ham = _ham(model)
    beta = float(params.get("beta", 1.0))
    term = int(params.get("term", len(ham.terms) // 2))
    A = ham.term_operator(term)
    res = locality.qbp_operator(ham, A, beta, params.get("radius"), steps=int(params.get("steps", 16)),
                                levels=int(params.get("levels", 3)), tol=float(params.get("tol", 1e-10)))
    tol = float(params.get("reconstruction_tol", 1e-6))
    return {"reconstruction_error": res.reconstruction_error,
            "relative_reconstruction_error": res.extras["relative_reconstruction_error"],
            "quadrature_certificate": res.quadrature_error, "norm": res.norm, "norm_bound": res.norm_bound,
            "passed": bool(res.reconstruction_error <= tol and res.norm_ok)}


def _fit_residuals(ls, devs):
    """Pure exponential a + b l against the factorial form a + b l - log l!, both 2-parameter."""
    ls, y = np.asarray(ls, float), np.log(np.asarray(devs, float))
    out = {}
    for name, shift in (("exponential", np.zeros_like(ls)),
                        ("superexponential", np.array([math.lgamma(l + 1) for l in ls]))):
        X = np.column_stack([np.ones_like(ls), ls])
        coef, *_ = np.linalg.lstsq(X, y + shift, rcond=None)
        out[name] = float(np.sqrt(np.mean((X @ coef - shift - y) ** 2)))
    return out


@check("transfer_decay")
def run_transfer_decay(model, params, rng):
    ham = _ham(model)
    beta = float(params.get("beta", 0.2))
    A = ham.term_operator(int(params.get("term", 0)))
    exact = locality.transfer_operator(ham, A, beta)
    H, a = ham.full_matrix(), A.full()
    shift = float(np.linalg.eigvalsh(H)[0])
    lhs = locality.gibbs_operator(H + a, beta, shift)
    identity = ops.op_norm(lhs - exact.operator.matrix @ locality.gibbs_operator(H, beta, shift)) / ops.op_norm(lhs)
    ls = [int(x) for x in params.get("l_list", [1, 2, 3, 4])]
    devs = [locality.transfer_operator(ham, A, beta, params.get("flavor", "restricted"), l).deviation for l in ls]
    strict = all(x > y for x, y in zip(devs, devs[1:]))
    keep = [(l, d) for l, d in zip(ls, devs) if d > checks.FIT_FLOOR]
    fits = _fit_residuals(*zip(*keep)) if len(keep) >= 3 else None
    super_better = bool(fits and fits["superexponential"] < fits["exponential"])
    return {"identity_residual": identity, "l": ls, "deviation": devs, "strictly_decreasing": strict,
            "fit_rms": fits, "superexponential_better": super_better,
            "passed": bool(identity <= float(params.get("identity_tol", 1e-9)) and strict and super_better)}


@check("logz_1d")
def run_logz_1d(model, params, rng):
    ham = _ham(model)
    res = algorithms.logz_1d(algorithms.OneDRunConfig(ham, float(params.get("beta", 1.0)),
                                                      epsilon=params.get("epsilon"), l_star=params.get("l_star")))
    tol = float(params.get("tol", 1e-2))
    out = res.to_json()
    out.update(passed=bool(res.error is not None and res.error <= tol))
    return out


@check("lieb_robinson")
def run_lieb_robinson(model, params, rng):
    ham = _ham(model)
    A = ham.term_operator(int(params.get("term", 0)))
    res = locality.lieb_robinson_check(ham, A, params.get("times", [0.25, 0.5, 1.0]), params.get("radii", [1, 2, 3]))
    res["passed"] = None
    return res


# ---------------------------------------------------------------- structure checks

@check("area_law_random")
def run_area_law_random(model, params, rng):
    betas = [float(b) for b in params.get("betas", [0.1, 1.0, 5.0])]
    per_beta = int(params.get("instances", 50))
    rows = []
    for beta in betas:
        for _ in range(per_beta):
            N = int(rng.integers(params.get("N_min", 4), params.get("N_max", 8) + 1))
            ham = random_chain(N, rng)
            mask = rng.random(N) < 0.5
            if mask.all() or not mask.any():
                mask[int(rng.integers(N))] ^= True
            A = tuple(int(v) for v in np.flatnonzero(mask))
            rep = checks.area_law_check(oracle.gibbs(ham, beta), ham, A)
            rows.append({"beta": beta, "N": N, "A": list(A), "I": rep.measured, "bound": rep.bound,
                         "passed": rep.passed, "energy_gap_passed": rep.extras["energy_gap_passed"]})
    failures = sum(not r["passed"] for r in rows)
    return {"instances": len(rows), "failures": failures,
            "energy_gap_failures": sum(not r["energy_gap_passed"] for r in rows),
            "max_ratio": max(r["I"] / r["bound"] for r in rows if r["bound"] > 0),
            "passed": failures == 0}


@check("area_law")
def run_area_law(model, params, rng):
    ham = _ham(model)
    rep = checks.area_law_check(oracle.gibbs(ham, float(params["beta"])), ham, params["A"], params.get("B"))
    return rep.to_json()


@check("commuting")
def run_commuting(model, params, rng):
    ham = _ham(model)
    return checks.commuting_suite(ham, float(params.get("beta", 1.0)), params.get("mean_force_regions"))


@check("cmi_decay")
def run_cmi_decay(model, params, rng):
    ham = _ham(model)
    st = oracle.gibbs(ham, float(params["beta"]))
    triples = checks.contiguous_triples(int(params.get("start", 0)), int(params.get("a", 2)),
                                        params.get("widths", [2, 4, 6]), int(params.get("c", 2)))
    res = checks.cmi_decay(st, ham, triples)
    res["passed"] = res["decreasing"] if len(res["rows"]) >= 2 else None
    return res


@check("local_indistinguishability")
def run_local_indist(model, params, rng):
    ham = _ham(model)
    res = checks.local_indistinguishability_sweep(ham, float(params["beta"]), int(params.get("a", 2)),
                                                  params.get("widths", [2, 4, 6]))
    res["passed"] = bool(res["ratio_bound_passed"])
    return res


@check("mean_force")
def run_mean_force(model, params, rng):
    ham = _ham(model)
    mf = checks.mean_force(ham, float(params["beta"]), params["A"], params.get("l_list", [0, 1, 2, 3]))
    out = mf.to_json()
    out["passed"] = bool(mf.reconstruction_error <= 1e-9)
    return out


@check("effective_partition")
def run_effective_partition(model, params, rng):
    ham = _ham(model)
    res = checks.effective_partition_ratio(ham, float(params["beta"]), params["S"], params.get("l_list", [1, 2]))
    res["passed"] = None
    return res


@check("correlation_length")
def run_correlation_length(model, params, rng):
    ham = _ham(model)
    st = oracle.gibbs(ham, float(params["beta"]))
    op = {"x": ops.PAULI_X, "y": ops.PAULI_Y, "z": ops.PAULI_Z}[params.get("axis", "z")]
    res = checks.correlation_length(st, checks.chain_pair_family(ham.N, op, int(params.get("origin", 0))),
                                    params.get("distances", [1, 2, 3, 4, 5]))
    res["passed"] = None
    return res


# ---------------------------------------------------------------- statistics

@check("concentration")
def run_concentration(model, params, rng):
    ham = _ham(model)
    A = statistics.magnetization_observable(ham.N, ham.d, params.get("axis", "z"))
    rows = []
    for beta in params.get("betas", [0.2, 0.5]):
        st = oracle.gibbs(ham, float(beta))
        c = statistics.characteristic_constant(st, A)["c_fit"]
        conc = statistics.concentration_check(st, A, c=c)
        mom = statistics.moment_bound_check(st, A, int(params.get("m_max", 8)), c=c)
        rows.append({"beta": float(beta), "c_fit": c, "tails_passed": conc["passed"],
                     "moments_passed": mom["passed"],
                     "worst_tail_margin": min(r["bound"] - r["tail"] for r in conc["rows"]),
                     "moments": [{k: r[k] for k in ("m", "moment", "bound")} for r in mom["rows"]]})
    return {"rows": rows, "passed": all(r["tails_passed"] and r["moments_passed"] for r in rows)}


@check("ensemble")
def run_ensemble(model, params, rng):
    res = statistics.ensemble_equivalence_sweep(_family(params), statistics.magnetization_observable,
                                                float(params.get("beta", 0.3)), float(params.get("Delta", 0.5)),
                                                params.get("N_list", [6, 8, 10, 12]))
    return res


@check("berry_esseen")
def run_berry_esseen(model, params, rng):
    res = statistics.berry_esseen_sweep(_family(params), statistics.magnetization_observable,
                                        float(params.get("beta", 0.3)), params.get("N_list", [6, 8, 10, 12]))
    res["passed"] = bool(res["decreasing"])
    return res


# ---------------------------------------------------------------- closed forms and inequalities

@check("closed_forms")
def run_closed_forms(model, params, rng):
    N, beta = int(params.get("N", 8)), float(params.get("beta", 1.0))
    tf = tfim_chain(N, 1.0, 1.0)
    ff = closed_forms.tfim_free_fermion_log_z(N, 1.0, 1.0, beta)
    ff_err = abs(oracle.gibbs(tf, beta).log_Z - ff)
    xi_beta = float(params.get("xi_beta", 0.5))
    ising = classical_ising(int(params.get("xi_N", 12)), 1.0, 0.0)
    st = oracle.gibbs(ising, xi_beta)
    fit = checks.correlation_length(st, checks.chain_pair_family(ising.N, ops.PAULI_Z, 2), [1, 2, 3, 4, 5])
    xi_exact = closed_forms.classical_ising_xi(xi_beta, 1.0)
    xi_rel = abs(fit["xi"] - xi_exact) / xi_exact
    single = []
    for b in (0.1, 0.7, 2.0):
        for delta in (0.3, 1.0, 2.5):
            got = oracle.gibbs(tfim_chain(1, 1.0, delta), b).log_Z
            single.append(abs(got - closed_forms.single_site_log_z(b, delta)))
    out = {"free_fermion_error": ff_err, "xi_fit": fit["xi"], "xi_closed_form": xi_exact,
           "xi_relative_error": xi_rel, "single_site_max_error": max(single)}
    out["passed"] = bool(ff_err <= 1e-8 and xi_rel <= 0.05 and max(single) <= 1e-12)
    return out


@check("trace_inequalities")
def run_trace_inequalities(model, params, rng):
    pairs, max_dim = int(params.get("pairs", 100)), int(params.get("max_dim", 64))
    rows = []
    for _ in range(pairs):
        dim = int(rng.integers(2, max_dim + 1))
        h1 = ops.random_hermitian(dim, rng, float(rng.uniform(0.1, 5.0)))
        h2 = ops.random_hermitian(dim, rng, float(rng.uniform(0.01, 2.0)))
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        c = g @ g.conj().T
        r1 = oracle.mineq1(h1, h2)
        r2 = oracle.mineq2(h1, h2, c)
        rows.append({"dim": dim, "mineq1": r1, "mineq2": r2})
    f1 = sum(not r["mineq1"]["passed"] for r in rows)
    f2 = sum(not r["mineq2"]["passed"] for r in rows)
    return {"pairs": pairs, "mineq1_failures": f1, "mineq2_failures": f2,
            "max_mineq2_ratio": max(r["mineq2"]["lhs"] / r["mineq2"]["rhs"] for r in rows),
            "passed": f1 == 0 and f2 == 0}


# ---------------------------------------------------------------- runner

def run_entry(entry: dict, seed_seq) -> dict:
    name = entry["check"]
    if name not in REGISTRY:
        raise KeyError(f"unknown check {name!r}; known: {sorted(REGISTRY)}")
    rng = np.random.default_rng(seed_seq)
    t0 = time.perf_counter()
    report = REGISTRY[name](entry.get("model"), dict(entry.get("params", {})), rng)
    return {"check": name, "label": entry.get("label", name), "report": report,
            "passed": report.get("passed"), "wall_time_s": time.perf_counter() - t0}


def _run_indexed(args):
    i, entry, seed_seq = args
    try:
        return i, run_entry(entry, seed_seq)
    except Exception as exc:  # reported per entry, the battery keeps going
        return i, {"check": entry.get("check"), "label": entry.get("label", entry.get("check")),
                   "error": f"{type(exc).__name__}: {exc}", "passed": False}


def run_battery(entries: list[dict], seed: int, jobs: int = 1) -> list[dict]:
    """Run entries with independent child seeds; results keep manifest order."""
    seeds = np.random.SeedSequence(seed).spawn(len(entries))
    tasks = [(i, e, s) for i, (e, s) in enumerate(zip(entries, seeds))]
    if jobs <= 1:
        results = [_run_indexed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_indexed, tasks))
    return [r for _, r in sorted(results, key=lambda x: x[0])]
