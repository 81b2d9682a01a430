"""Command-line front end: config ingestion, dispatch, artifact emission.

JSON in, CSV/JSON out.  Every emitted CSV starts with a comment line
recording the sha256 of the config document and the seed, then a header
row; numbers are printed at 17 significant digits so doubles round-trip.
Files are written atomically (temp file + rename).  Exit status is 0 iff
every requested check passed; failures are reported as a JSON list on
stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import annealing, ar, bounds, verify
from .chain import FiniteKernel, delta_measure, extract_minorization
from .coupling import CouplingConfig, run_coupling, weighted_identity_check

_FMT = "%.17g"

_SCHEMAS: dict[str, set[str]] = {
    "bound": {"epsilon", "lambda", "b", "B", "v0", "n"},
    "bound-inhom": {"eps_seq", "lambda_seq", "b_seq", "B_seq", "v0", "n"},
    "rate": {"epsilon", "lambda", "M"},
    "verify-finite": {"count", "n_max", "with_coupling"},
    "couple": {"kernel", "pairs", "x0", "x0_prime", "eps"},
    "identity": {"kernel", "pairs", "x0", "x0_prime", "n", "eps", "tolerance"},
    "ar": {"g", "noise", "delta", "lambda", "n", "cross_moment", "x0", "x0_prime"},
    "anneal": {"objective", "proposal_sigma", "beta", "xi", "n_steps", "replicas",
               "checkpoints", "start", "bin_lo", "bin_hi", "bin_width"},
    "pi-shift": {"objective", "gammas"},
    "selftest": set(),
}

_NEEDS_SEED = {"couple", "ar", "anneal"}


class ConfigError(ValueError):
    pass


def _load_config(args: argparse.Namespace, command: str) -> tuple[dict, str]:
    if args.config is None:
        raw = b"{}"
        doc = {}
    else:
        try:
            with open(args.config, "rb") as fh:
                raw = fh.read()
            doc = json.loads(raw)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not well-formed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    allowed = _SCHEMAS[command]
    for key in sorted(doc):
        if key not in allowed:
            raise ConfigError(
                f"unknown config field {key!r} for '{command}'; allowed fields: {sorted(allowed)}"
            )
    return doc, hashlib.sha256(raw).hexdigest()


def _need(doc: dict, command: str, key: str):
    if key not in doc:
        raise ConfigError(f"missing config field {key!r} for '{command}'")
    return doc[key]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _FMT % float(v)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, columns: list[str], rows, config_hash: str, seed: int) -> None:
    lines = [f"# config_sha256={config_hash} seed={seed}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: str, payload: dict, config_hash: str, seed: int) -> None:
    body = {"config_sha256": config_hash, "seed": seed}
    body.update(payload)
    _atomic_write(path, json.dumps(body, indent=2, sort_keys=True) + "\n")


def _kernel_from_doc(obj) -> FiniteKernel:
    if not isinstance(obj, dict):
        raise ConfigError("'kernel' must be an object with 'states' and 'rows'")
    try:
        return FiniteKernel.from_json(json.dumps(obj))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _pairs_from_doc(obj) -> list[tuple[int, int]]:
    try:
        return [(int(i), int(j)) for i, j in obj]
    except (TypeError, ValueError) as exc:
        raise ConfigError("'pairs' must be a list of [i, j] index pairs") from exc


def _eps_from_doc(obj):
    if obj is None:
        return None
    if isinstance(obj, list):
        return tuple(float(e) for e in obj)
    return float(obj)


def _out_path(args: argparse.Namespace, name: str) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, name)


def _cmd_bound(args, doc, cfg_hash, seed, artifacts, failures):
    inp = bounds.HomogeneousBoundInput(
        epsilon=float(_need(doc, "bound", "epsilon")),
        lam=float(_need(doc, "bound", "lambda")),
        b=float(_need(doc, "bound", "b")),
        B=float(_need(doc, "bound", "B")),
        v0=float(_need(doc, "bound", "v0")),
    )
    n_max = int(_need(doc, "bound", "n"))
    curve = bounds.bound_curve_homog(inp, n_max)
    rows = list(curve.rows())
    if args.clamp:
        rows = [(n, jt, min(tv, 2.0), jf, fv) for (n, jt, tv, jf, fv) in rows]
    path = _out_path(args, "bound.csv")
    _write_csv(path, ["n", "j_star_tv", "tv_bound", "j_star_f", "f_bound"], rows, cfg_hash, seed)
    artifacts.append(path)


def _cmd_bound_inhom(args, doc, cfg_hash, seed, artifacts, failures):
    sched = bounds.InhomogeneousSchedule(
        eps_seq=tuple(_need(doc, "bound-inhom", "eps_seq")),
        lambda_seq=tuple(_need(doc, "bound-inhom", "lambda_seq")),
        b_seq=tuple(_need(doc, "bound-inhom", "b_seq")),
        B_seq=tuple(_need(doc, "bound-inhom", "B_seq")),
        v0=float(_need(doc, "bound-inhom", "v0")),
    )
    n_max = int(doc.get("n", len(sched)))
    if n_max > len(sched):
        raise ConfigError(f"n = {n_max} exceeds the schedule length {len(sched)}")
    curve = bounds.bound_curve_inhom(sched, n_max)
    rows = list(curve.rows())
    if args.clamp:
        rows = [(n, jt, min(tv, 2.0), jf, fv) for (n, jt, tv, jf, fv) in rows]
    path = _out_path(args, "bound-inhom.csv")
    _write_csv(path, ["n", "j_star_tv", "tv_bound", "j_star_f", "f_bound"], rows, cfg_hash, seed)
    artifacts.append(path)


def _cmd_rate(args, doc, cfg_hash, seed, artifacts, failures):
    rb = bounds.rate_bound(
        float(_need(doc, "rate", "epsilon")),
        float(_need(doc, "rate", "lambda")),
        float(_need(doc, "rate", "M")),
    )
    witness = rb.witness_j(args.horizon) if args.horizon else None
    path = _out_path(args, "rate.json")
    _write_json(path, {
        "epsilon": rb.epsilon, "lambda": rb.lam, "M": rb.M,
        "rate": rb.rate, "balanced": rb.balanced,
        "witness_j": witness, "witness_horizon": args.horizon,
    }, cfg_hash, seed)
    artifacts.append(path)


def _cmd_verify_finite(args, doc, cfg_hash, seed, artifacts, failures):
    replicas = args.replicas or 10 ** 4
    results = verify.run_verification(
        count=int(doc.get("count", 20)),
        n_max=int(doc.get("n_max", 50)),
        replicas=replicas,
        with_coupling=bool(doc.get("with_coupling", True)),
    )
    path = _out_path(args, "verify-finite.json")
    _write_json(path, {"checks": [r.as_dict() for r in results]}, cfg_hash, seed)
    artifacts.append(path)
    for r in results:
        if not r.passed:
            failures.append({"name": f"verify-finite:{r.name}", "detail": r.detail,
                             "worst": r.worst})


def _cmd_couple(args, doc, cfg_hash, seed, artifacts, failures):
    kernel = _kernel_from_doc(_need(doc, "couple", "kernel"))
    pairs = _pairs_from_doc(_need(doc, "couple", "pairs"))
    cert = extract_minorization(kernel, pairs)
    cfg = CouplingConfig(kernel=kernel, cert=cert, eps=_eps_from_doc(doc.get("eps")), seed=seed)
    xi = delta_measure(kernel.size, int(_need(doc, "couple", "x0")))
    xi_p = delta_measure(kernel.size, int(_need(doc, "couple", "x0_prime")))
    horizon = args.horizon or 20
    replicas = args.replicas or 10 ** 4
    res = run_coupling(cfg, xi, xi_p, horizon=horizon, replicas=replicas)
    path = _out_path(args, "couple.csv")
    _write_csv(path, ["n", "p_uncoupled", "se", "tv_upper"], res.rows(), cfg_hash, seed)
    artifacts.append(path)
    jpath = _out_path(args, "couple.json")
    _write_json(jpath, {
        "replicas": res.replicas, "horizon": res.horizon,
        "t_counts": list(res.t_counts), "censored": res.censored,
    }, cfg_hash, seed)
    artifacts.append(jpath)


def _cmd_identity(args, doc, cfg_hash, seed, artifacts, failures):
    kernel = _kernel_from_doc(_need(doc, "identity", "kernel"))
    pairs = _pairs_from_doc(_need(doc, "identity", "pairs"))
    cert = extract_minorization(kernel, pairs)
    xi = delta_measure(kernel.size, int(_need(doc, "identity", "x0")))
    xi_p = delta_measure(kernel.size, int(_need(doc, "identity", "x0_prime")))
    n = int(_need(doc, "identity", "n"))
    tol = float(doc.get("tolerance", 1e-10))
    eps = _eps_from_doc(doc.get("eps"))
    lhs, rhs, gap = weighted_identity_check(kernel, cert, xi, xi_p, n, eps=eps)
    passed = gap <= tol
    path = _out_path(args, "identity.json")
    _write_json(path, {
        "n": n, "lhs": lhs, "rhs": rhs, "max_gap": gap,
        "tolerance": tol, "passed": passed,
    }, cfg_hash, seed)
    artifacts.append(path)
    if not passed:
        failures.append({"name": "identity", "detail": f"max gap {gap} > {tol}", "worst": gap})


def _cmd_ar(args, doc, cfg_hash, seed, artifacts, failures):
    model = ar.model_from_names(
        str(doc.get("g", "linear:0.5")),
        str(doc.get("noise", "gauss:1")),
        float(_need(doc, "ar", "delta")),
        float(_need(doc, "ar", "lambda")),
    )
    n_max = int(doc.get("n", 30))
    cross = float(doc.get("cross_moment", 1.0))
    eps = ar.eps_delta(model)
    B = max(1.0, (1.0 + model.L * model.delta - eps) / model.lam)
    curve = ar.prop6_curve(model, n_max, cross_moment=cross)
    path = _out_path(args, "ar-curve.csv")
    _write_csv(path, ["n", "j_star", "bound"], curve, cfg_hash, seed)
    artifacts.append(path)
    payload = {"model": model.name, "delta": model.delta, "lambda": model.lam,
               "eps_delta": eps, "B": B, "cross_moment": cross}
    if "x0" in doc or "x0_prime" in doc:
        x0 = float(_need(doc, "ar", "x0"))
        x0p = float(_need(doc, "ar", "x0_prime"))
        horizon = args.horizon or 20
        replicas = args.replicas or 1000
        res = ar.run_ar_coupling(model, x0, x0p, horizon=horizon, replicas=replicas, seed=seed)
        cpath = _out_path(args, "ar-coupling.csv")
        _write_csv(cpath, ["n", "p_uncoupled", "se", "tv_upper"], res.rows(), cfg_hash, seed)
        artifacts.append(cpath)
        payload["coupling"] = {"replicas": res.replicas, "horizon": res.horizon,
                               "censored": res.censored}
    jpath = _out_path(args, "ar.json")
    _write_json(jpath, payload, cfg_hash, seed)
    artifacts.append(jpath)


def _cmd_anneal(args, doc, cfg_hash, seed, artifacts, failures):
    objective = annealing.objective_by_name(str(doc.get("objective", "doublewell")))
    proposal = annealing.gaussian_proposal(float(doc.get("proposal_sigma", 1.0)))
    beta = float(doc.get("beta", 0.75))
    constants = annealing.derive_drift_constants(objective, proposal, beta)
    deriv = annealing.derive_schedule(objective, proposal, constants,
                                      xi=float(doc.get("xi", 0.0)))
    n_steps = int(doc.get("n_steps", 2000))
    replicas = args.replicas or int(doc.get("replicas", 2000))
    checkpoints = [int(c) for c in doc.get("checkpoints", [])] or \
        sorted({max(1, n_steps // 100), max(1, n_steps // 10), n_steps})
    result = annealing.run_annealing(
        objective, proposal, deriv.schedule, n_steps=n_steps, replicas=replicas,
        seed=seed, checkpoints=checkpoints,
        start=float(doc.get("start", 1.0)),
        bin_range=(float(doc.get("bin_lo", -3.0)), float(doc.get("bin_hi", 3.0))),
        bin_width=float(doc.get("bin_width", 0.05)),
    )
    path = _out_path(args, "anneal.csv")
    rows = zip(result.checkpoints, result.gammas, result.tv_estimates, result.minima_mass)
    _write_csv(path, ["n", "gamma", "tv_estimate", "minima_mass"], rows, cfg_hash, seed)
    artifacts.append(path)
    jpath = _out_path(args, "anneal.json")
    _write_json(jpath, {
        "constants": {
            "s": constants.s, "beta": constants.beta, "M": constants.M,
            "x_underline": constants.x_underline,
            "gamma_underline": constants.gamma_underline,
            "lambda0": constants.lambda0, "lambda": constants.lam,
            "b": constants.b, "c0": constants.c0, "c": constants.c,
        },
        "schedule": {"d": deriv.d, "xi": deriv.schedule.xi,
                     "gamma_underline": deriv.schedule.gamma_underline,
                     "level_set": list(deriv.interval), "eps_base": deriv.eps_base},
        "n_steps": n_steps, "replicas": replicas,
        "checkpoints": list(result.checkpoints),
        "tv_estimates": list(result.tv_estimates),
        "minima_mass": list(result.minima_mass),
    }, cfg_hash, seed)
    artifacts.append(jpath)


def _cmd_pi_shift(args, doc, cfg_hash, seed, artifacts, failures):
    objective = annealing.objective_by_name(str(doc.get("objective", "doublewell")))
    gammas = [float(g) for g in _need(doc, "pi-shift", "gammas")]
    if len(gammas) < 2 or any(g2 <= g1 for g1, g2 in zip(gammas, gammas[1:])):
        raise ConfigError("'gammas' must be a strictly increasing list of at least two values")
    rows = []
    for i, g1 in enumerate(gammas):
        for g2 in gammas[i + 1:]:
            bound, exact = annealing.pi_shift_tv_bound(g1, g2, objective)
            rows.append((g1, g2, bound, exact, bound - exact))
            if bound < exact - 1e-8:
                failures.append({"name": "pi-shift",
                                 "detail": f"bound below exact at ({g1}, {g2})",
                                 "worst": exact - bound})
    path = _out_path(args, "pi-shift.csv")
    _write_csv(path, ["gamma", "gamma_prime", "bound", "exact_tv", "slack"],
               rows, cfg_hash, seed)
    artifacts.append(path)


def _oracle_spot_checks() -> list[verify.CheckResult]:
    """Frozen-value smoke checks of the arithmetic pipeline."""
    checks = []

    def record(name: str, got: float, want: float, tol: float):
        gap = abs(got - want)
        checks.append(verify.CheckResult(name=name, passed=gap <= tol, worst=gap,
                                         detail=f"got {got!r}, want {want!r}"))

    lam_b = bounds.derive_S_params(0.5, 1.0, 9.0, 0.5)
    record("oracle:derive-S-lambda", lam_b[0], 0.6, 1e-12)
    record("oracle:derive-S-b", lam_b[1], 4.6, 1e-12)
    record("oracle:rate", bounds.rate_bound(0.5, 0.5, 1.5).rate,
           -math.log(2.0) / 2.0, 1e-12)
    record("oracle:ratio-ceiling-2-1", annealing.r_gamma_s(2.0, 1.0), 1.25, 1e-12)
    record("oracle:ratio-ceiling-3-1", annealing.r_gamma_s(3.0, 1.0), 31.0 / 27.0, 1e-12)
    model = ar.model_from_names("linear:0.5", "gauss:1", 4.0, 0.8)
    record("oracle:ar-eps", ar.eps_delta(model), 0.3173105078629141, 1e-6)
    record("oracle:laplace", annealing.laplace_Z(50.0, annealing.doublewell_objective()),
           math.sqrt(math.pi / 50.0), 1e-12)
    sched = annealing.CoolingSchedule(d=1.0, xi=0.0, gamma_underline=1.0)
    record("oracle:cooling", annealing.cooling_gamma(9, sched), 1.0 + math.log(10.0), 1e-12)
    return checks


def _cmd_selftest(args, doc, cfg_hash, seed, artifacts, failures):
    replicas = args.replicas or 4000
    results = _oracle_spot_checks()
    results.extend(verify.run_verification(replicas=replicas))
    path = _out_path(args, "selftest.json")
    _write_json(path, {"checks": [r.as_dict() for r in results]}, cfg_hash, seed)
    artifacts.append(path)
    for r in results:
        if not r.passed:
            failures.append({"name": f"selftest:{r.name}", "detail": r.detail,
                             "worst": r.worst})


_COMMANDS = {
    "bound": _cmd_bound,
    "bound-inhom": _cmd_bound_inhom,
    "rate": _cmd_rate,
    "verify-finite": _cmd_verify_finite,
    "couple": _cmd_couple,
    "identity": _cmd_identity,
    "ar": _cmd_ar,
    "anneal": _cmd_anneal,
    "pi-shift": _cmd_pi_shift,
    "selftest": _cmd_selftest,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcbounds",
        description="Explicit convergence bounds, couplings, and certified annealing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config document")
        p.add_argument("--seed", type=int, default=None, help="RNG seed")
        p.add_argument("--out", default=None, help="output directory (default: cwd)")
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--clamp", action="store_true",
                       help="clamp TV bounds at the trivial ceiling 2")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    command = args.command
    try:
        doc, cfg_hash = _load_config(args, command)
        if command in _NEEDS_SEED and args.seed is None:
            raise ConfigError(f"'{command}' is stochastic; --seed is required")
        seed = args.seed if args.seed is not None else 0
        artifacts: list[str] = []
        failures: list[dict] = []
        _COMMANDS[command](args, doc, cfg_hash, seed, artifacts, failures)
    except (ConfigError, ValueError, ArithmeticError) as exc:
        print(json.dumps({"ok": False,
                          "failures": [{"name": "config", "detail": str(exc)}]},
                         sort_keys=True))
        return 2
    if failures:
        print(json.dumps({"ok": False, "failures": failures, "artifacts": artifacts},
                         sort_keys=True))
        return 1
    print(json.dumps({"ok": True, "artifacts": artifacts}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
