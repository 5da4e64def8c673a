"""Command-line front end: classify, simulate, solve-pde, solve-ode, compare.

Exit codes: 0 success, 1 quantitative disagreement (compare only), 2 bad
input or configuration, 3 numerical failure (instability, no shooting
bracket, no convergence). Every command is reproducible: the config plus
--seed fully determine the output bytes.

Option precedence: command-line flags override --config file values, which
override built-in defaults.
"""
from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import bbm, output, pde, stationary
from .offspring import (
    NoConvergence,
    OffspringError,
    classify,
    decompose_reaction,
    extinction_probability,
    validate,
)

EXIT_OK = 0
EXIT_DISAGREE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

DEFAULTS = {
    # simulate / compare
    "dt": 1e-3,
    "T": 50.0,
    "n": 20000,
    "seed": 0,
    "threads": None,
    "max_particles": bbm.DEFAULT_MAX_PARTICLES,
    "max_events": bbm.DEFAULT_MAX_EVENTS,
    "bridge": True,
    # pde
    "dx": 0.02,
    "pde_dt": 0.02,
    "scheme": "cn",
    "steady_tol": 1e-6,
    "t_max": 2000.0,
    # ode
    "ode_tol": 1e-4,
    # compare tolerances
    "tol_pde_pair": 5e-3,
    "tol_closed_form": 5e-3,
    "tol_ode": 1e-3,
}


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


def _merged(args: argparse.Namespace, file_conf: dict, key: str, flag_value):
    """flag > config file > defaults"""
    if flag_value is not None:
        return flag_value
    if key in file_conf:
        return file_conf[key]
    return DEFAULTS.get(key)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bbmlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON or TOML config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out", help="output file path")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("classify", help="criticality and extinction probability")
    sp.add_argument("--coeffs", required=True, help="comma-separated offspring probabilities")

    sp = sub.add_parser("simulate", help="Monte Carlo estimates of r, s and the p sandwich")
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--coeffs", default=None)
    sp.add_argument("--x", type=float, default=None, help="start distance from the barrier")
    sp.add_argument("--T", type=float, default=None, help="time horizon")
    sp.add_argument("--n", type=int, default=None, help="replicates")
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--t-query", default=None, help="comma-separated times for r/s estimates")
    sp.add_argument("--no-bridge", action="store_true", help="disable bridge crossing correction")

    sp = sub.add_parser("solve-pde", help="evolve the parabolic equation")
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--coeffs", default=None)
    sp.add_argument("--ic", choices=("zero", "one"), default="zero")
    sp.add_argument("--L", type=float, default=None)
    sp.add_argument("--dx", type=float, default=None)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--scheme", choices=("explicit", "cn"), default=None)
    sp.add_argument("--T", type=float, default=None, help="evolve to this time")
    sp.add_argument("--steady", action="store_true", help="run to steady state instead of --T")
    sp.add_argument("--tol", type=float, default=None, help="steady-state tolerance")

    sp = sub.add_parser("solve-ode", help="shooting solution of the stationary equation")
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--coeffs", default=None)
    sp.add_argument("--L", type=float, default=None)
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--target", type=float, default=None,
                    help="far-field value (defaults to 1; supercritical models "
                         "may want the extinction probability)")

    sp = sub.add_parser("compare", help="cross-validate all three solution routes")
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--coeffs", default=None)
    sp.add_argument("--x", default=None, help="comma-separated query points")
    sp.add_argument("--T", type=float, default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--L", type=float, default=None)
    sp.add_argument("--dx", type=float, default=None)
    sp.add_argument("--max-particles", type=int, default=None)
    sp.add_argument("--max-events", type=int, default=None)
    sp.add_argument("--tol-pde-pair", type=float, default=None)
    sp.add_argument("--tol-closed-form", type=float, default=None)
    sp.add_argument("--tol-ode", type=float, default=None)
    return p


def cmd_classify(args) -> int:
    G = validate(_parse_floats(args.coeffs))
    crit = classify(G)
    q = extinction_probability(G)
    label = crit.regime.value.capitalize()
    print(f"{label}, m={crit.mean_offspring:.6g}, q*={q:.6g}")
    return EXIT_OK


def _load_file_conf(args) -> dict:
    if getattr(args, "config", None):
        return output.load_config(args.config)
    return {}


def _model_from(args, conf) -> bbm.ModelSpec:
    mconf = conf.get("model", {})
    lam = args.lam if args.lam is not None else mconf.get("lambda")
    coeffs = _parse_floats(args.coeffs) if args.coeffs else mconf.get("offspring")
    x = getattr(args, "x", None)
    if isinstance(x, str):
        x = None
    start_x = x if x is not None else mconf.get("start_x", 1.0)
    if lam is None or coeffs is None:
        raise OffspringError("need --lambda and --coeffs (or a config file with a model)")
    return bbm.ModelSpec(lam=float(lam), offspring=validate(coeffs), start_x=float(start_x))


def cmd_simulate(args) -> int:
    conf = _load_file_conf(args)
    model = _model_from(args, conf)
    T = float(_merged(args, conf, "T", args.T))
    config = bbm.SimConfig(
        model=model,
        dt=float(_merged(args, conf, "dt", args.dt)),
        horizon_T=T,
        max_particles=int(conf.get("max_particles", DEFAULTS["max_particles"])),
        max_events=int(conf.get("max_events", DEFAULTS["max_events"])),
        seed=int(_merged(args, conf, "seed", args.seed)),
        bridge_correction=not args.no_bridge and conf.get("bridge_correction", True),
    )
    n = int(_merged(args, conf, "n", args.n))
    threads = _merged(args, conf, "threads", args.threads)
    batch = bbm.run_replicates(config, n, threads)
    t_query = _parse_floats(args.t_query) if args.t_query else conf.get("t_query", [])

    estimates = {
        "p_lower": output.estimate_to_dict(batch.r_hat(T)),
        "p_upper": output.estimate_to_dict(batch.s_hat(T)),
    }
    rows = []
    for t in t_query:
        r, s = batch.r_hat(float(t)), batch.s_hat(float(t))
        estimates[f"r(t={t:g})"] = output.estimate_to_dict(r)
        estimates[f"s(t={t:g})"] = output.estimate_to_dict(s)
        rows.append((model.start_x, float(t), "r", r.mean, r.n, r.half_width_95))
        rows.append((model.start_x, float(t), "s", s.mean, s.n, s.half_width_95))
    rows.append((model.start_x, T, "p_lower", batch.r_hat(T).mean, n, batch.r_hat(T).half_width_95))
    rows.append((model.start_x, T, "p_upper", batch.s_hat(T).mean, n, batch.s_hat(T).half_width_95))

    record = {
        "config_hash": output.config_hash(config),
        "config": output.simconfig_to_dict(config),
        "n_replicates": n,
        "tag_counts": batch.tag_counts(),
        "estimates": estimates,
        "seed": config.seed,
    }
    if args.out:
        if args.format == "json":
            output.write_json(args.out, record, rows)
        else:
            output.write_rows_csv(
                args.out, ("x", "t", "kind", "mean", "n", "half_width_95"), rows,
                meta=record,
            )
    tags = batch.tag_counts()
    print(
        f"n={n} hit={tags['HitBarrier']} extinct={tags['ExtinctNoHit']} "
        f"alive={tags['AliveAtHorizonNoHit']} capped={tags['CapExceeded']} "
        f"p in [{batch.r_hat(T).mean:.5f}, {batch.s_hat(T).mean:.5f}]"
    )
    return EXIT_OK


def cmd_solve_pde(args) -> int:
    conf = _load_file_conf(args)
    model = _model_from(args, conf)
    L = args.L if args.L is not None else conf.get("L", pde.default_domain_length(model.lam))
    dx = float(_merged(args, conf, "dx", args.dx))
    grid = pde.Grid1D.from_dx(float(L), dx)
    scheme = args.scheme or conf.get("scheme", DEFAULTS["scheme"])
    dt = args.dt if args.dt is not None else conf.get("pde_dt", DEFAULTS["pde_dt"])
    if scheme == "explicit":
        dt = min(dt, 0.9 * grid.dx**2)
    ctor = pde.EvolveSpec.r_type if args.ic == "zero" else pde.EvolveSpec.s_type
    spec = ctor(model.lam, model.offspring, dt=float(dt), scheme=scheme)

    if args.steady:
        tol = float(_merged(args, conf, "steady_tol", args.tol))
        result = pde.steady_state(spec, grid, tol=tol, t_max=float(conf.get("t_max", DEFAULTS["t_max"])))
        field, t_final, converged = result.field, result.t_reached, result.converged
    else:
        T = float(_merged(args, conf, "T", args.T))
        field = pde.evolve(spec, grid, T)
        t_final, converged = T, True
    res = pde.residual(field, model.lam, model.offspring)
    meta = {
        "lambda": model.lam,
        "offspring": list(model.offspring.coeffs),
        "ic": args.ic,
        "right_bc": spec.right_bc,
        "scheme": scheme,
        "dt": dt,
        "L": grid.L,
        "nx": grid.nx,
        "t": t_final,
        "converged": converged,
        "residual": res,
    }
    if args.out:
        if args.format == "json":
            output.write_json(args.out, meta, {"x": grid.xs(), "u": field.values})
        else:
            output.write_profile_csv(args.out, grid.xs(), field.values, meta)
    print(f"t={t_final:g} converged={converged} residual={res:.3g}")
    return EXIT_OK if converged else EXIT_NUMERIC


def cmd_solve_ode(args) -> int:
    conf = _load_file_conf(args)
    model = _model_from(args, conf)
    L = args.L if args.L is not None else conf.get("L", pde.default_domain_length(model.lam))
    tol = float(_merged(args, conf, "ode_tol", args.tol))
    target = args.target if args.target is not None else conf.get("target", 1.0)
    result = stationary.shoot(model.lam, model.offspring, float(L), tol=tol, target=float(target))
    grid = result.profile.grid
    meta = {
        "lambda": model.lam,
        "offspring": list(model.offspring.coeffs),
        "L": float(L),
        "tol": tol,
        "slope0": result.slope0,
        "converged": result.converged,
        "target": result.target_value,
    }
    if args.out:
        if args.format == "json":
            output.write_json(args.out, meta, {"x": grid.xs(), "u": result.profile.values})
        else:
            output.write_profile_csv(args.out, grid.xs(), result.profile.values, meta)
    print(f"slope0={result.slope0:.6f} converged={result.converged} target={result.target_value:g}")
    return EXIT_OK if result.converged else EXIT_NUMERIC


def cmd_compare(args) -> int:
    conf = _load_file_conf(args)
    model = _model_from(args, conf)
    xs = _parse_floats(args.x) if args.x else conf.get("x", [0.5, 1.0, 2.0, 4.0])
    if not xs:
        print("x,p_lower,p_upper,u_pde_r,u_pde_s,u_ode,u_closed_form")
        print("max pairwise discrepancy: 0")
        return EXIT_OK

    L = args.L if args.L is not None else conf.get("L", pde.default_domain_length(model.lam))
    dx = float(_merged(args, conf, "dx", args.dx))
    T = float(_merged(args, conf, "T", args.T))
    n = int(_merged(args, conf, "n", args.n))
    dt = float(_merged(args, conf, "dt", args.dt))
    seed = int(_merged(args, conf, "seed", args.seed))
    threads = _merged(args, conf, "threads", args.threads)
    tol_pair = float(_merged(args, conf, "tol_pde_pair", args.tol_pde_pair))
    tol_cf = float(_merged(args, conf, "tol_closed_form", args.tol_closed_form))
    tol_ode = float(_merged(args, conf, "tol_ode", args.tol_ode))
    maxp = int(_merged(args, conf, "max_particles", args.max_particles))
    maxe = int(_merged(args, conf, "max_events", args.max_events))

    grid = pde.Grid1D.from_dx(float(L), dx)
    ss_r = pde.steady_state(pde.EvolveSpec.r_type(model.lam, model.offspring, dt=0.02, scheme="cn"), grid, tol=1e-6)
    ss_s = pde.steady_state(pde.EvolveSpec.s_type(model.lam, model.offspring, dt=0.02, scheme="cn"), grid, tol=1e-6)

    crit = classify(model.offspring)
    target = 1.0
    if crit.is_supercritical:
        target = extinction_probability(model.offspring)
    sh = stationary.shoot(model.lam, model.offspring, float(L), tol=1e-4, target=target)

    is_binary = model.offspring.coeffs == (0.5, 0.0, 0.5)

    failures = []
    pair_gap = float(np.max(np.abs(ss_r.field.values - ss_s.field.values)))
    if pair_gap > tol_pair:
        failures.append(f"pde r/s steady-state gap {pair_gap:.3g} > {tol_pair:g}")

    header = ("x", "p_lower", "p_upper", "u_pde_r", "u_pde_s", "u_ode", "u_closed_form")
    rows = []
    max_disc = pair_gap
    for x in xs:
        config = bbm.SimConfig(
            model=bbm.ModelSpec(model.lam, model.offspring, float(x)),
            dt=dt, horizon_T=T, seed=seed,
            max_particles=maxp, max_events=maxe,
        )
        lo, hi = bbm.estimate_p(config, n, threads)
        u_r, u_s = ss_r.field.at(x), ss_s.field.at(x)
        u_ode = sh.profile.at(x)
        u_cf = stationary.closed_form(model.lam, x) if is_binary else math.nan
        rows.append((float(x), lo.mean, hi.mean, u_r, u_s, u_ode, u_cf))

        det = [u_r, u_s, u_ode] + ([u_cf] if is_binary else [])
        max_disc = max(max_disc, max(det) - min(det))
        if abs(u_ode - u_s) > tol_ode:
            failures.append(f"x={x:g}: |ode - pde_s| = {abs(u_ode - u_s):.3g} > {tol_ode:g}")
        if is_binary and abs(u_cf - u_s) > tol_cf:
            failures.append(f"x={x:g}: |closed_form - pde_s| = {abs(u_cf - u_s):.3g} > {tol_cf:g}")
        if lo.mean - 3.0 * lo.sigma > max(det):
            failures.append(f"x={x:g}: MC lower bound {lo.mean:.4f} above solutions")
        if hi.mean + 3.0 * hi.sigma < min(det):
            failures.append(f"x={x:g}: MC upper bound {hi.mean:.4f} below solutions")

    print(",".join(header))
    for row in rows:
        print(",".join("" if isinstance(c, float) and math.isnan(c) else f"{c:.6g}" for c in row))
    print(f"max pairwise discrepancy: {max_disc:.6g}")
    if args.out:
        meta = {
            "lambda": model.lam,
            "offspring": list(model.offspring.coeffs),
            "T": T, "n": n, "seed": seed, "L": float(L), "dx": dx,
            "tolerances": {"pde_pair": tol_pair, "closed_form": tol_cf, "ode": tol_ode},
            "max_discrepancy": max_disc,
            "failures": failures,
        }
        if args.format == "json":
            output.write_json(args.out, meta, [dict(zip(header, r)) for r in rows])
        else:
            output.write_rows_csv(args.out, header, rows, meta=meta)
    if failures:
        for f in failures:
            print("DISAGREE:", f)
        return EXIT_DISAGREE
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "classify": cmd_classify,
        "simulate": cmd_simulate,
        "solve-pde": cmd_solve_pde,
        "solve-ode": cmd_solve_ode,
        "compare": cmd_compare,
    }
    try:
        return handlers[args.command](args)
    except (OffspringError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (pde.Instability, stationary.BracketFailure, NoConvergence) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
