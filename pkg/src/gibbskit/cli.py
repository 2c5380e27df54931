"""Command-line front end.

Every subcommand writes result.json (plus optional CSV plot data) and a
manifest.json into --out. Exit codes: 0 success, 2 a certificate failed,
1 an error (bad config, dimension over the dense cap, unwritable path).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import algorithms, battery, cluster, locality, oracle, reports, statistics
from .lattice import build_model

DEFAULT_MODEL = {"model": "tfim_chain", "N": 8, "J": 1.0, "Delta": 1.0}

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


class ConfigError(ValueError):
    pass


def _load_json(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    try:
        return json.loads(raw), raw
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None


def _model_spec(args) -> tuple[dict, bytes]:
    if args.config:
        spec, raw = _load_json(args.config)
        spec = spec.get("model_spec", spec) if isinstance(spec, dict) else spec
        if not isinstance(spec, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        return spec, raw
    return dict(DEFAULT_MODEL), reports.canonical_bytes(DEFAULT_MODEL)


def _finish(args, command: str, spec, records: list, config_bytes: bytes, t0: float, csv=None) -> int:
    out = Path(args.out)
    passed_flags = [r.passed for r in records if r.passed is not None]
    result = {"command": command, "model": spec, "records": [r.to_json() for r in records],
              "passed": all(passed_flags) if passed_flags else None, "manifest": "manifest.json",
              "config_digest": reports.config_digest(config_bytes)}
    outputs = [reports.write_json(out / "result.json", result)]
    if csv is not None and args.csv:
        columns, rows, comment = csv
        outputs.append(reports.emit_plot_data(columns, rows, out / f"{command}.csv", comment))
    reports.write_manifest(out, args.invocation or command, config_bytes,
                           time.perf_counter() - t0, outputs)
    for r in records:
        flag = "" if r.passed is None else ("  PASS" if r.passed else "  FAIL")
        print(f"{r.quantity}: {r.value}{flag}")
    return EXIT_FAILED if passed_flags and not all(passed_flags) else EXIT_OK


# ---------------------------------------------------------------- subcommands

def cmd_model(args, t0):
    spec, raw = _model_spec(args)
    ham = build_model(spec)
    info = ham.derived()
    recs = [reports.ResultRecord(k, v) for k, v in sorted(info.items())]
    recs.append(reports.ResultRecord("beta_star", cluster.beta_star(ham), provenance="cluster"))
    return _finish(args, "model", spec, recs, raw, t0)


def cmd_exact(args, t0):
    spec, raw = _model_spec(args)
    ham = build_model(spec)
    st = oracle.gibbs(ham, args.beta)
    recs = [reports.ResultRecord("logZ", st.log_Z), reports.ResultRecord("entropy", st.entropy(), units="nats"),
            reports.ResultRecord("energy", st.energy), reports.ResultRecord("free_energy", st.free_energy)]
    return _finish(args, "exact", spec, recs, raw, t0)


def cmd_logz(args, t0):
    spec, raw = _model_spec(args)
    ham = build_model(spec)
    csv = None
    feasible = ham.dim <= oracle.dense_cap()
    exact = oracle.gibbs(ham, args.beta).log_Z if feasible and args.method != "exact" else None
    recs = []
    if args.method == "cluster":
        if args.order is not None:
            res = cluster.log_partition_series(ham, args.beta, args.order)
            est, bound, M = res.log_Z_estimate, res.error_bound, args.order
        else:
            out = algorithms.logz_cluster(ham, args.beta, args.epsilon)
            est, bound, M = out["log_Z_estimate"], out["bound"], out["M_used"]
        passed = None if exact is None else bool(abs(est - exact) <= bound)
        recs.append(reports.ResultRecord("logZ", est, bound, passed if bound is not None else None,
                                         provenance="cluster", extras={"M": M, "beta_star": cluster.beta_star(ham)}))
        rows = []
        for m in range(M + 1):
            r = cluster.log_partition_series(ham, args.beta, m)
            rows.append([m, r.log_Z_estimate, r.error_bound, None if exact is None else abs(r.log_Z_estimate - exact)])
        csv = (["M", "logZ", "bound", "error"], rows, None)
    elif args.method == "oned":
        cfg = algorithms.OneDRunConfig(ham, args.beta, epsilon=args.epsilon if args.lstar is None else None,
                                       l_star=args.lstar)
        res = algorithms.logz_1d(cfg, compare=feasible)
        recs.append(reports.ResultRecord("logZ", res.log_Z_prime, provenance="oned",
                                         extras={"l_star": res.l_star, "quadrature_error": res.quadrature_error}))
        csv = (["step", "factor"], list(enumerate(res.per_step_factors)), None)
    else:
        recs.append(reports.ResultRecord("logZ", oracle.gibbs(ham, args.beta).log_Z))
    if exact is not None:
        recs.append(reports.ResultRecord("oracle_logZ", exact))
        recs.append(reports.ResultRecord("measured_error", abs(recs[0].value - exact), provenance=recs[0].provenance))
    return _finish(args, "logz", spec, recs, raw, t0, csv)


def cmd_locality(args, t0):
    spec, raw = _model_spec(args)
    ham = build_model(spec)
    A = ham.term_operator(args.term)
    radii = args.radii or [1, 2, 3]
    recs, csv = [], None
    if args.kind == "transfer":
        rows = []
        for l in radii:
            t = locality.transfer_operator(ham, A, args.beta, args.flavor, l)
            rows.append([l, t.deviation])
        recs.append(reports.ResultRecord("transfer_deviation", [r[1] for r in rows], provenance="locality",
                                         extras={"l": radii, "flavor": args.flavor}))
        csv = (["l", "deviation"], rows, None)
    elif args.kind == "commutators":
        tower = locality.nested_commutators(ham, A, max(radii))
        recs.append(reports.ResultRecord("commutator_norms", tower.norms, tower.bounds, tower.passed,
                                         provenance="locality"))
        csv = (["m", "norm", "bound"], [[m, n, b] for m, (n, b) in enumerate(zip(tower.norms, tower.bounds))], None)
    else:
        res = locality.lieb_robinson_check(ham, A, args.times or [0.25, 0.5, 1.0], radii)
        recs.append(reports.ResultRecord("lieb_robinson_fit", res["fit"], provenance="locality"))
        csv = (["t", "m", "error"], [[g["t"], g["m"], g["error"]] for g in res["grid"]], None)
    return _finish(args, "locality", spec, recs, raw, t0, csv)


def cmd_qbp(args, t0):
    spec, raw = _model_spec(args)
    ham = build_model(spec)
    A = ham.term_operator(args.term)
    res = locality.qbp_operator(ham, A, args.beta, args.radius, steps=args.steps, levels=args.levels)
    recs = [reports.ResultRecord("reconstruction_error", res.reconstruction_error, args.tol,
                                 bool(res.reconstruction_error <= args.tol), provenance="locality",
                                 extras={"quadrature_certificate": res.quadrature_error}),
            reports.ResultRecord("norm", res.norm, res.norm_bound, res.norm_ok, provenance="locality")]
    csv = None
    if args.sweep:
        rows = locality.qbp_locality_sweep(ham, A, args.beta, args.sweep, steps=args.steps, levels=args.levels)
        csv = (["radius", "deviation"], [[r["param"], r["measured"]] for r in rows], None)
        recs.append(reports.ResultRecord("locality_sweep", [r["measured"] for r in rows], provenance="locality"))
    return _finish(args, "qbp", spec, recs, raw, t0, csv)


def cmd_stats(args, t0):
    spec, raw = _model_spec(args)
    csv = None
    if args.kind in ("ensemble", "berry-esseen"):
        family = {k: v for k, v in spec.items() if k != "N"}
        params = {"family": family, "beta": args.beta, "Delta": args.delta, "N_list": args.N_list or [6, 8, 10, 12]}
        rep = battery.REGISTRY["ensemble" if args.kind == "ensemble" else "berry_esseen"](None, params, None)
        key = "ratio" if args.kind == "ensemble" else "Delta"
        recs = [reports.ResultRecord(f"{key}_vs_N", [r[key] for r in rep["rows"]], None, None, provenance="stats",
                                     extras={"N": [r["N"] for r in rep["rows"]]}),
                reports.ResultRecord("trend", rep.get("passed"), True, bool(rep.get("passed")), provenance="stats")]
        csv = (["N", key], [[r["N"], r[key]] for r in rep["rows"]], None)
        return _finish(args, "stats", spec, recs, raw, t0, csv)
    ham = build_model(spec)
    st = oracle.gibbs(ham, args.beta)
    A = statistics.magnetization_observable(ham.N, ham.d)
    c = statistics.characteristic_constant(st, A)["c_fit"]
    if args.kind == "concentration":
        rep = statistics.concentration_check(st, A, c=c)
        csv = (["delta", "tail", "bound"], rep["rows"], None)
    else:
        rep = statistics.moment_bound_check(st, A, args.m_max, c=c)
        csv = (["m", "moment", "bound"], rep["rows"], None)
    recs = [reports.ResultRecord("c_fit", c, provenance="stats"),
            reports.ResultRecord(args.kind, [r["passed"] for r in rep["rows"]], "see csv", rep["passed"],
                                 provenance="stats")]
    return _finish(args, "stats", spec, recs, raw, t0, csv)


def cmd_checks(args, t0):
    spec, raw = _model_spec(args)
    params = json.loads(args.params) if args.params else {}
    if args.beta is not None:
        params.setdefault("beta", args.beta)
    name = args.check.replace("-", "_")
    if name not in battery.REGISTRY:
        raise ConfigError(f"unknown check {args.check!r}; known: {sorted(battery.REGISTRY)}")
    entry = battery.run_entry({"check": name, "model": spec, "params": params}, args.seed)
    rep = entry["report"]
    certified = rep.get("passed") is not None
    recs = [reports.ResultRecord(name, rep, "in report" if certified else None, rep.get("passed"),
                                 provenance="check")]
    csv = None
    if name == "cmi_decay":
        fit = rep["fit"]
        csv = (["B_size", "cmi", "fit"], [[r["B_size"], r["cmi"], None if fit is None else
                                          fit["K"] * math.exp(fit["slope"] * r["B_size"])]
                                         for r in rep["rows"]], None)
    elif name == "correlation_length":
        csv = (["distance", "correlator"], list(zip(rep["distances"], rep["correlators"])),
               f"xi = {reports.format_number(rep['xi'])}")
    elif name == "local_indistinguishability":
        csv = (["B_size", "distance"], [[r["B_size"], r["distance"]] for r in rep["rows"]], None)
    return _finish(args, "checks", spec, recs, raw, t0, csv)


def cmd_battery(args, t0):
    manifest, raw = _load_json(args.manifest)
    entries = manifest.get("checks") if isinstance(manifest, dict) else manifest
    if not isinstance(entries, list):
        raise ConfigError(f"{args.manifest}: expected a list of checks or an object with a 'checks' list")
    for i, e in enumerate(entries):
        if not isinstance(e, dict) or "check" not in e:
            raise ConfigError(f"{args.manifest}: entry {i} is missing key 'check'")
        if e["check"] not in battery.REGISTRY:
            raise ConfigError(f"{args.manifest}: entry {i} names unknown check {e['check']!r}")
    results = battery.run_battery(entries, args.seed, args.jobs)
    timings = [r.pop("wall_time_s", None) for r in results]
    out = Path(args.out)
    table = [{"label": r["label"], "check": r["check"], "passed": r["passed"], "error": r.get("error")}
             for r in results]
    failed = [r for r in results if r["passed"] is False]
    summary = {"seed": args.seed, "table": table, "results": results, "passed": not failed,
               "manifest": "manifest.json", "config_digest": reports.config_digest(raw)}
    path = reports.write_json(out / "battery.json", summary)
    man = reports.write_manifest(out, args.invocation or "battery", raw, time.perf_counter() - t0, [path])
    man_data = json.loads(man.read_text())
    man_data["entry_wall_time_s"] = dict(zip([r["label"] for r in results], timings))
    reports.write_json(man, man_data)
    width = max((len(r["label"]) for r in table), default=5)
    for r in table:
        status = "n/a" if r["passed"] is None else ("PASS" if r["passed"] else "FAIL")
        extra = f"  ({r['error']})" if r.get("error") else ""
        print(f"{r['label']:<{width}}  {status}{extra}")
    return EXIT_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbskit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, beta=True, beta_required=True):
        sp.add_argument("--config", type=Path, help="model JSON (default: TFIM chain N=8, J=Delta=1)")
        sp.add_argument("--out", type=Path, default=None, help="output directory (default results/<command>)")
        sp.add_argument("--csv", action="store_true", help="also write CSV plot data")
        if beta:
            sp.add_argument("--beta", type=float, required=beta_required)

    common(sub.add_parser("model", help="derived lattice parameters"), beta=False)
    common(sub.add_parser("exact", help="exact log Z, entropy and energy"))

    sp = sub.add_parser("logz", help="log Z by cluster series, 1D belief propagation or exact")
    common(sp)
    sp.add_argument("--method", choices=["cluster", "oned", "exact"], default="cluster")
    sp.add_argument("--epsilon", type=float, default=1e-5)
    sp.add_argument("--order", type=int, default=None, help="fixed series order (cluster)")
    sp.add_argument("--lstar", type=int, default=None, help="fixed l* (oned)")

    sp = sub.add_parser("locality", help="transfer operators, commutator towers, Lieb-Robinson")
    common(sp, beta_required=False)
    sp.add_argument("--kind", choices=["transfer", "commutators", "lieb-robinson"], default="transfer")
    sp.add_argument("--flavor", choices=["restricted", "ode"], default="restricted")
    sp.add_argument("--term", type=int, default=0)
    sp.add_argument("--radii", type=int, nargs="*")
    sp.add_argument("--times", type=float, nargs="*")

    sp = sub.add_parser("qbp", help="belief-propagation operator")
    common(sp)
    sp.add_argument("--term", type=int, default=0)
    sp.add_argument("--radius", type=int, default=None)
    sp.add_argument("--steps", type=int, default=16)
    sp.add_argument("--levels", type=int, default=3)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--sweep", type=int, nargs="*")

    sp = sub.add_parser("stats", help="concentration, moments, Berry-Esseen, ensembles")
    common(sp)
    sp.add_argument("--kind", choices=["concentration", "moments", "berry-esseen", "ensemble"],
                    default="concentration")
    sp.add_argument("--m-max", type=int, default=8)
    sp.add_argument("--delta", type=float, default=0.5, help="microcanonical window width")
    sp.add_argument("--N-list", type=int, nargs="*")

    sp = sub.add_parser("checks", help="one structural check by name")
    common(sp, beta_required=False)
    sp.add_argument("--check", required=True)
    sp.add_argument("--params", help="JSON object of check parameters")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("battery", help="run a manifest of checks")
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", type=Path, default=None)
    return p


COMMANDS = {"model": cmd_model, "exact": cmd_exact, "logz": cmd_logz, "locality": cmd_locality,
            "qbp": cmd_qbp, "stats": cmd_stats, "checks": cmd_checks, "battery": cmd_battery}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.invocation = " ".join(str(a) for a in argv)
    if args.out is None:
        args.out = Path("results") / args.command
    t0 = time.perf_counter()
    try:
        return COMMANDS[args.command](args, t0)
    except oracle.DenseCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, KeyError, ValueError, OSError, OverflowError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
