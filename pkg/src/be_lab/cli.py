"""Command-line entry point: be-lab <subcommand> [options]."""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .bounds import ModelParams, lemma_c_constants, lemma_report, lemma_window_failures, product_bound, \
    table_constants, theorem_bound
from .decomposition import Decomposition, cluster_certificates, effective_range, random_cluster_instance
from .errors import BeLabError, CertificateViolationError, InvalidParameterError, WindowViolationError
from .esseen import DEFAULT_C, verify_esseen
from .harness import (SweepConfig, _json_default, compute_measure, estimate_decay, load_config, model_params,
                      normalize_name, run_sweep)
from .lattice import build_lattice, dimension_certificate, shell_counts
from .operators import model_from_config
from .spectral import characteristic_function, kolmogorov_distance, standardize
from .states import DecayFit, state_from_config


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _decay(text: str) -> dict:
    """exp:XI[:L0] or alg:BETA[:L0]."""
    parts = text.split(":")
    kinds = {"exp": "exponential", "exponential": "exponential", "alg": "algebraic", "algebraic": "algebraic"}
    if len(parts) not in (2, 3) or parts[0] not in kinds:
        raise argparse.ArgumentTypeError("decay must look like exp:XI[:L0] or alg:BETA[:L0]")
    try:
        rate = float(parts[1])
        L0 = float(parts[2]) if len(parts) == 3 else 1.0
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return {"model": kinds[parts[0]], "rate": rate, "L0": L0}


def _add_system(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("system")
    g.add_argument("--config", help="JSON config; flags override its fields")
    g.add_argument("--model", help="model family (zz-chain, tfim, field, zz-field, random-2local)")
    g.add_argument("--n", type=int, help="number of sites")
    g.add_argument("--state", help="state (maximally-mixed, product-up, product-plus, product-random, gibbs)")
    g.add_argument("--beta", type=float, help="inverse temperature for gibbs states")
    g.add_argument("--g", type=float, help="transverse field")
    g.add_argument("--J", type=float, help="coupling")
    g.add_argument("--h", type=float, help="longitudinal field")
    g.add_argument("--seed", type=int)
    g.add_argument("--path", choices=["auto", "exact", "fast-commuting", "fast_commuting"])


def _system_config(args) -> dict:
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    model = dict(cfg.get("model", {}))
    state = dict(cfg.get("state", {}))
    if args.model:
        model["family"] = args.model
    for key in ("g", "J", "h"):
        if getattr(args, key, None) is not None:
            model[key] = getattr(args, key)
    if args.state:
        state["kind"] = args.state
    if args.beta is not None:
        state["beta"] = args.beta
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    model.setdefault("seed", seed)
    state.setdefault("seed", seed + 1)
    model["family"] = normalize_name(model.get("family", "zz_chain"))
    state["kind"] = normalize_name(state.get("kind", "maximally_mixed"))
    n = args.n if args.n is not None else cfg.get("n", model.get("n"))
    if n is None:
        raise InvalidParameterError("--n (or n in the config) is required")
    path = normalize_name(args.path or cfg.get("path", "auto"))
    return {"model": model, "state": state, "n": int(n), "path": path, "raw": cfg}


def _build(args):
    sc = _system_config(args)
    model = model_from_config(sc["model"], sc["n"])
    state = state_from_config(sc["state"], model)
    return sc, model, state


def _measure(args):
    sc, model, state = _build(args)
    measure, path = compute_measure(model, state, sc["path"])
    return sc, model, state, measure, path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_spectrum(args) -> tuple:
    _, model, state, measure, path = _measure(args)
    if args.out:
        measure.to_csv(args.out)
    out = {"n": model.n_sites, "path": path, "atoms": int(measure.energies.size), "mean": measure.mean,
           "variance": measure.variance}
    if not args.out:
        out["energies"] = measure.energies.tolist()
        out["weights"] = measure.weights.tolist()
    return 0, out


def cmd_delta(args) -> tuple:
    sc, model, state, measure, path = _measure(args)
    std = standardize(measure)
    params = model_params(model, state, std.sigma, args.c0)
    return 0, {"n": model.n_sites, "path": path, "delta": kolmogorov_distance(std), "sigma2": std.sigma ** 2,
               "variance_ok": params.variance_ok, "c0": params.c0}


def cmd_phi(args) -> tuple:
    sc, model, state, measure, path = _measure(args)
    std = standardize(measure)
    omega = np.linspace(0.0, args.omega_max, args.points)
    curve = characteristic_function(std, omega, normalize_name(args.phi_path), model=model, state=state)
    if args.out:
        curve.to_csv(args.out)
        return 0, {"n": model.n_sites, "points": args.points, "path": curve.path, "out": args.out}
    return 0, {"n": model.n_sites, "path": curve.path, "omega": omega.tolist(),
               "re": curve.values.real.tolist(), "im": curve.values.imag.tolist()}


def cmd_esseen(args) -> tuple:
    sc, model, state, measure, path = _measure(args)
    omegas = args.omegas or [1.0, 2.0, 5.0, 10.0, math.sqrt(model.n_sites)]
    rep = verify_esseen(measure, omegas, args.C, args.tol)
    out = rep.to_dict()
    out["n"] = model.n_sites
    if not rep.holds:
        raise CertificateViolationError(f"Esseen inequality violated: delta {rep.delta} > rhs {rep.min_rhs}",
                                        detail=out)
    return 0, out


def _bound_params(args) -> ModelParams:
    decay_cfg = args.decay
    if args.model or args.config:
        sc, model, state = _build(args)
        measure, _ = compute_measure(model, state, sc["path"])
        std = standardize(measure)
        D = model.lattice.geometric_dim
        decay = (DecayFit(decay_cfg["model"], decay_cfg["L0"], decay_cfg["rate"], D) if decay_cfg
                 else estimate_decay(state, model, args.convention))
        return model_params(model, state, std.sigma, args.c0, decay, args.convention)
    if args.n is None:
        raise InvalidParameterError("--n is required")
    c0 = args.c0 if args.c0 is not None else 0.5
    sigma = args.sigma if args.sigma is not None else math.sqrt(c0 * args.E ** 2 * args.n)
    decay = DecayFit(decay_cfg["model"], decay_cfg["L0"], decay_cfg["rate"], args.D) if decay_cfg else None
    return ModelParams(N=args.n, D=args.D, c_D=args.c_D, R=args.R, E=args.E, c0=c0, sigma=sigma, decay=decay,
                       convention=args.convention, commuting=args.commuting, product=args.product)


def cmd_bound(args) -> tuple:
    p = _bound_params(args)
    if args.lemma:
        ell, M, K = args.lemma
        rep = lemma_report(p, ell, M, K, args.C)
    elif args.product or (p.decay is None or p.decay.L0 == 0.0) and p.product:
        rep = product_bound(p, args.C)
    else:
        if p.decay is None:
            raise InvalidParameterError("--decay is required for theorem bounds")
        rep = theorem_bound(p, args.variant, args.eps, args.C)
    out = rep.to_dict()
    out["params"] = p.to_dict()
    if not rep.applicable:
        raise WindowViolationError("bound not applicable: " + "; ".join(rep.failed), rep.failed, detail=out)
    return 0, out


def cmd_sweep(args) -> tuple:
    cfg = load_config(args.config) if args.config else {}
    if args.model:
        cfg["model"] = {**cfg.get("model", {}), "family": args.model}
    if args.state:
        cfg["state"] = {**cfg.get("state", {}), "kind": args.state}
    if args.beta is not None:
        cfg.setdefault("state", {})["beta"] = args.beta
    for key in ("g", "J", "h"):
        if getattr(args, key) is not None:
            cfg.setdefault("model", {})[key] = getattr(args, key)
    if args.ns:
        cfg["n_values"] = args.ns
    for key, val in (("seed", args.seed), ("path", args.path), ("out_dir", args.out_dir), ("workers", args.workers),
                     ("c0", args.c0)):
        if val is not None:
            cfg[key] = val
    if args.decay:
        cfg["decay"] = args.decay
    if args.no_esseen:
        cfg["esseen"] = False
    cfg.setdefault("model", {"family": "zz_chain"})
    result = run_sweep(SweepConfig.from_dict(cfg))
    return 0, result.to_dict()


def cmd_verify_lemma1(args) -> tuple:
    sc, model, state = _build(args)
    R = effective_range(model)
    ell, M, K = args.l, args.M, args.K
    dec = Decomposition(model, state, ell, M, K, strict=False)
    measure, _ = compute_measure(model, state, "exact")
    std = standardize(measure)
    decay = estimate_decay(state, model)
    p = model_params(model, state, std.sigma, args.c0, decay)
    failures = lemma_window_failures(p, ell, M, K)
    tab = None if failures else table_constants(p, ell, M, K)
    consts = None if failures else lemma_c_constants(p, tab, ell, M, K)
    top = args.omega_max if args.omega_max else (tab.omega_max if tab else 2.0)
    omegas = top * np.arange(1, args.points + 1) / args.points
    rows, bad = [], []
    for w in omegas:
        t = dec.terms(float(w))
        tol = args.rtol * (1 + abs(t.dphi))
        row = {"omega": float(w), "residual": t.residual, "tolerance": tol, "ok": t.residual <= tol,
               "abs_eta": abs(t.eta), "abs_nu": abs(t.nu)}
        if consts is not None and w <= tab.omega_max * (1 + 1e-12):
            c1, c2, c3, c4, c5 = consts.as_tuple()
            row["eta_bound"] = c1 * w + c2 * w * w
            row["nu_bound"] = c3 + c4 * w + c5 * w * w
            row["eta_ok"] = abs(t.eta) <= row["eta_bound"] * (1 + 1e-9)
            row["nu_ok"] = abs(t.nu) <= row["nu_bound"] * (1 + 1e-9)
            if not (row["eta_ok"] and row["nu_ok"]):
                bad.append(float(w))
        if not row["ok"]:
            bad.append(float(w))
        rows.append(row)
    out = {"n": model.n_sites, "l": ell, "M": M, "K": K, "R": R, "rows": rows,
           "max_residual": max(r["residual"] for r in rows),
           "lemma_window": "ok" if not failures else failures,
           "constants": consts.to_dict() if consts else None}
    if bad:
        raise CertificateViolationError(f"lemma inequality falsified at omega = {bad}", detail=out)
    return 0, out


def cmd_cluster_check(args) -> tuple:
    rng = np.random.default_rng(args.seed)
    reports, total, checks = [], 0, 0
    for k in range(args.instances):
        x, y, lat, B = random_cluster_instance(rng, args.max_sites)
        rep = cluster_certificates(x, y, lat, 1, B, 1, 2.0, n_max=args.n_max, M_max=args.M_max,
                                   n_omega=args.omegas)
        total += rep.violations
        checks += rep.checks
        if rep.violations:
            reports.append({"instance": k, **rep.to_dict()})
    out = {"instances": args.instances, "seed": args.seed, "checks": checks, "violations": total,
           "violating_instances": reports}
    if total:
        raise CertificateViolationError(f"{total} certificate violations", detail=out)
    return 0, out


def cmd_dim_cert(args) -> tuple:
    lat = build_lattice(args.lattice, args.extents, args.wrap)
    cert = dimension_certificate(lat)
    out = {"lattice": args.lattice, "extents": args.extents, "D": cert.D, "c_D": cert.c_D,
           "max_ratio_by_D": {str(k): v for k, v in cert.max_ratio_by_D.items()}}
    if lat.n_sites <= 2048:
        out["holds"] = cert.holds(shell_counts(lat))
    return 0, out


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="be-lab", description="Berry-Esseen diagnostics for lattice Hamiltonians")
    ap.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, system=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
        if system:
            _add_system(p)
        p.set_defaults(func=fn)
        return p

    p = add("spectrum", cmd_spectrum, "spectral measure of H in the state")
    p.add_argument("--out", help="write eigenvalue,weight CSV here")

    p = add("delta", cmd_delta, "Kolmogorov distance to the Gaussian")
    p.add_argument("--c0", type=float)

    p = add("phi", cmd_phi, "characteristic function on a grid")
    p.add_argument("--omega-max", type=float, default=5.0)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--phi-path", default="eigen_sum", choices=["eigen_sum", "eigen-sum", "evolution"])
    p.add_argument("--out")

    p = add("esseen", cmd_esseen, "Esseen smoothing inequality certificate")
    p.add_argument("--omegas", type=_floats)
    p.add_argument("--C", type=float, default=DEFAULT_C)
    p.add_argument("--tol", type=float, default=1e-8)

    p = add("bound", cmd_bound, "lemma, theorem or product-state bounds with precondition ledger")
    p.add_argument("--decay", type=_decay, help="exp:XI[:L0] or alg:BETA[:L0]")
    p.add_argument("--variant", choices=["exponential", "algebraic", "algebraic_eq8"])
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--convention", choices=["eq4", "eq8"], default="eq4")
    p.add_argument("--lemma", type=_ints, help="l,M,K for a lemma-level estimate")
    p.add_argument("--product", action="store_true")
    p.add_argument("--commuting", action="store_true")
    p.add_argument("--c0", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--E", type=float, default=1.0)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--D", type=int, default=1)
    p.add_argument("--c-D", dest="c_D", type=float, default=2.0)
    p.add_argument("--C", type=float, default=DEFAULT_C)

    p = add("sweep", cmd_sweep, "scaling sweep with CSV/JSON artifacts", system=False)
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--state")
    p.add_argument("--beta", type=float)
    p.add_argument("--g", type=float)
    p.add_argument("--J", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--ns", type=_ints, help="comma-separated system sizes")
    p.add_argument("--seed", type=int)
    p.add_argument("--path")
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--c0", type=float)
    p.add_argument("--decay", type=_decay)
    p.add_argument("--no-esseen", action="store_true")

    p = add("verify-lemma1", cmd_verify_lemma1, "exactness of the characteristic-function ODE")
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--M", type=int, default=1)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--omega-max", type=float)
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--c0", type=float)

    p = add("cluster-check", cmd_cluster_check, "random 2-local certificates for the conjugation series",
            system=False)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-sites", type=int, default=6)
    p.add_argument("--n-max", type=int, default=5)
    p.add_argument("--M-max", type=int, default=6)
    p.add_argument("--omegas", type=int, default=10)

    p = add("dim-cert", cmd_dim_cert, "lattice dimension certificate", system=False)
    p.add_argument("--lattice", default="chain", choices=["chain", "ring", "grid"])
    p.add_argument("--extents", type=_ints, required=True)
    p.add_argument("--wrap", action="store_true")
    return ap


def _emit(payload: dict, as_json: bool, stream=None) -> None:
    stream = stream or sys.stdout
    if as_json:
        stream.write(json.dumps(payload, default=_json_default, sort_keys=True) + "\n")
        return
    for k, v in payload.items():
        if isinstance(v, (list, dict)) and len(json.dumps(v, default=_json_default)) > 200:
            v = f"<{type(v).__name__} of {len(v)}>"
        stream.write(f"{k}: {v}\n")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    as_json = bool(getattr(args, "json", False))
    try:
        code, payload = args.func(args)
    except BeLabError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        if getattr(exc, "failed", None):
            payload["failed"] = exc.failed
        if exc.detail is not None:
            payload["detail"] = exc.detail
        _emit(payload, as_json)
        if not as_json:
            sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    _emit(payload, as_json)
    return code


if __name__ == "__main__":
    sys.exit(main())
