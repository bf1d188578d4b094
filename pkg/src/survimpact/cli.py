"""Command-line interface.

Subcommands: ``fit`` (transformation-model coefficients and the horizon
intercept), ``ph-test`` (score test of proportional hazards),
``concordance`` (a single concordance estimator), ``impact`` (enhanced
versus projected concordance with optional bootstrap), ``simulate``
(Monte Carlo study) and ``population`` (population concordance of a
scenario).

Exit codes: 0 on success, 2 for invalid input or arguments, 3 for
numerical failure.  Worker count comes from ``--threads`` when given,
else the ``SURVIMPACT_THREADS`` environment variable, else 1; outputs
are byte-identical across thread counts and reruns with the same seed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from ._errors import NumericalError, ValidationError
from .concordance import cpe, cpe_projected, default_bandwidths, weighted_c_index
from .dataset import (FAMILIES, METHODS, ColumnSpec, load_config, load_csv,
                      truncate_to_horizon)
from .inference import impact, naive_nested_impact
from .report import FORMATS, build_analysis_report, render
from .simgen import (GENERATORS, load_scenario, population_params, run_study,
                     scenario)
from .survfit import cox_fit, ph_test
from .transmodel import fit_transform_model

_ESTIMATORS = ("cpe", "cpe-projected", "wci", "wci-projected")


def _split_columns(text):
    return tuple(c.strip() for c in text.split(",") if c.strip())


def _add_data_args(parser):
    parser.add_argument("--input", required=True, help="CSV file of subjects")
    parser.add_argument("--config", help="TOML file with [data] and "
                        "[analysis] sections")
    parser.add_argument("--time", help="time column (overrides config)")
    parser.add_argument("--status", help="event indicator column "
                        "(overrides config)")
    parser.add_argument("--x", help="comma-separated conventional covariate "
                        "columns (overrides config)")
    parser.add_argument("--z", help="comma-separated new covariate columns "
                        "(overrides config)")


def _add_output_args(parser):
    parser.add_argument("--format", choices=FORMATS, default="json",
                        help="output format (default json)")
    parser.add_argument("--out", help="write output here instead of stdout")


def _resolve_threads(value):
    if value is None:
        env = os.environ.get("SURVIMPACT_THREADS")
        if env is None or not env.strip():
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ValidationError("SURVIMPACT_THREADS must be an integer, "
                                  "got %r" % env) from None
    value = int(value)
    if value < 1:
        raise ValidationError("thread count must be at least 1")
    return value


def _load_dataset(args):
    """Dataset plus analysis defaults from config, with CLI overrides."""
    cols = cfg = None
    if args.config:
        cols, cfg = load_config(args.config)
    time = args.time or (cols.time if cols else None)
    status = args.status or (cols.status if cols else None)
    x = _split_columns(args.x) if args.x else (cols.x if cols else ())
    # an explicit --z "" clears the new-covariate set; an absent flag
    # defers to the config
    if args.z is not None:
        z = _split_columns(args.z)
    else:
        z = cols.z if cols else ()
    if not time or not status:
        raise ValidationError("time and status columns are required "
                              "(via --time/--status or the config [data] "
                              "section)")
    if not x:
        raise ValidationError("at least one conventional covariate column "
                              "is required (via --x or the config)")
    ds = load_csv(args.input, ColumnSpec(time=time, status=status,
                                         x=tuple(x), z=tuple(z)))
    return ds, cfg


def _setting(args, cfg, name, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if cfg is not None and getattr(cfg, name, None) is not None:
        return getattr(cfg, name)
    return default


def _with_tau(ds, args, cfg):
    tau = _setting(args, cfg, "tau")
    if tau is None:
        raise ValidationError("an analysis horizon tau is required "
                              "(via --tau or the config [analysis] section)")
    return truncate_to_horizon(ds, float(tau))


def _emit(obj, args):
    data = render(obj, args.format)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)


def _cmd_fit(args):
    ds, cfg = _load_dataset(args)
    ds = _with_tau(ds, args, cfg)
    family = _setting(args, cfg, "family", "ph")
    tfit, cox, _ = fit_transform_model(ds, family=family, tau=ds.tau,
                                       use_z=ds.q > 0)
    names = list(ds.x_names) + list(ds.z_names)
    payload = {
        "family": tfit.family.tag, "tau": float(ds.tau),
        "m_tau": float(tfit.m_tau),
        "coefficients": {name: float(v) for name, v in
                         zip(names, list(tfit.beta) + list(tfit.gamma))},
        "se": {name: float(v) for name, v in zip(names, cox.se)},
        "loglik": float(cox.loglik), "converged": bool(cox.converged),
        "iterations": int(cox.iterations), "n": int(ds.n),
        "n_events": int(cox.n_events),
    }
    _emit(payload, args)


def _cmd_ph_test(args):
    ds, _ = _load_dataset(args)
    fit = cox_fit(ds, use_z=ds.q > 0)
    _emit(ph_test(fit, transform=args.transform), args)


def _cmd_concordance(args):
    ds, cfg = _load_dataset(args)
    ds = _with_tau(ds, args, cfg)
    family = _setting(args, cfg, "family", "ph")
    tfit, cox, G = fit_transform_model(ds, family=family, tau=ds.tau,
                                       use_z=ds.q > 0)
    estimator = args.estimator
    if estimator == "cpe":
        out = cpe(ds, tfit)
    elif estimator == "cpe-projected":
        h = _setting(args, cfg, "h")
        h = float(h) if h is not None else default_bandwidths(ds, tfit).h
        out = cpe_projected(ds, tfit, h)
    else:
        risk = ds.x @ cox.beta
        if estimator == "wci" and ds.q:
            risk = risk + ds.z @ cox.gamma
        tag = "wCI" if estimator == "wci" else "wCI-projected"
        out = weighted_c_index(ds, risk, G, ds.tau, estimator=tag)
    _emit(out, args)


def _cmd_impact(args):
    ds, cfg = _load_dataset(args)
    ds = _with_tau(ds, args, cfg)
    family = _setting(args, cfg, "family", "ph")
    reps = int(_setting(args, cfg, "bootstrap_reps", 0))
    seed = int(_setting(args, cfg, "seed", 0))
    threads = _resolve_threads(args.threads)
    h = _setting(args, cfg, "h")
    h = float(h) if h is not None else None
    if args.naive:
        method = "pl-cpe-naive"
        est, aux = naive_nested_impact(ds, family=family, bootstrap_reps=reps,
                                       seed=seed, h=h, threads=threads,
                                       detail=True)
    else:
        method = _setting(args, cfg, "method", "pl-cpe")
        anchor = int(_setting(args, cfg, "anchor", 0))
        g = _setting(args, cfg, "g")
        g = float(g) if g is not None else None
        est, aux = impact(ds, method=method, family=family,
                          bootstrap_reps=reps, seed=seed, anchor=anchor,
                          h=h, g=g, threads=threads, detail=True)
    cox = aux["cox"] if aux["cox"] is not None else cox_fit(ds,
                                                            use_z=ds.q > 0)
    pht = ph_test(cox, transform="identity")
    report = build_analysis_report(ds, est, aux, cox, pht, est.method,
                                   family, seed)
    _emit(report, args)


def _cmd_simulate(args):
    if args.scenario:
        scn = load_scenario(args.scenario, iterations=args.iterations,
                            bootstrap_reps=args.bootstrap_reps,
                            seed=args.seed)
    else:
        if args.iterations is None:
            raise ValidationError("--iterations is required without "
                                  "--scenario")
        if args.seed is None:
            raise ValidationError("--seed is required without --scenario "
                                  "(seeds are never defaulted from the "
                                  "clock)")
        scn = scenario(generator=args.generator, xi=args.xi,
                       censoring=args.censoring, n=args.n,
                       iterations=args.iterations,
                       bootstrap_reps=args.bootstrap_reps or 0,
                       seed=args.seed)
    threads = _resolve_threads(args.threads)
    report = run_study(scn, threads=threads, alpha=args.alpha,
                       pop_n_iter=args.pop_n_iter, pop_n_per=args.pop_n_per,
                       ph_transform=args.transform)
    _emit(report, args)


def _cmd_population(args):
    scn = scenario(generator=args.generator, xi=args.xi,
                   censoring=args.censoring, seed=args.seed)
    threads = _resolve_threads(args.threads)
    _emit(population_params(scn, n_iter=args.n_iter, n_per=args.n_per,
                            threads=threads), args)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="survimpact",
        description="Concordance probability and covariate-impact "
                    "estimation for survival risk models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the transformation model")
    _add_data_args(p)
    _add_output_args(p)
    p.add_argument("--tau", type=float, help="analysis horizon")
    p.add_argument("--family", choices=FAMILIES, help="error family "
                   "(default ph)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("ph-test", help="score test of proportional hazards")
    _add_data_args(p)
    _add_output_args(p)
    p.add_argument("--transform", choices=("identity", "km"),
                   default="identity", help="event-time transform for the "
                   "test (default identity)")
    p.set_defaults(func=_cmd_ph_test)

    p = sub.add_parser("concordance", help="one concordance estimator")
    _add_data_args(p)
    _add_output_args(p)
    p.add_argument("--estimator", choices=_ESTIMATORS, required=True)
    p.add_argument("--tau", type=float, help="analysis horizon")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--h", type=float, help="projection bandwidth")
    p.set_defaults(func=_cmd_concordance)

    p = sub.add_parser("impact", help="enhanced vs projected concordance "
                       "with bootstrap inference")
    _add_data_args(p)
    _add_output_args(p)
    p.add_argument("--tau", type=float, help="analysis horizon")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--bootstrap-reps", type=int, dest="bootstrap_reps")
    p.add_argument("--seed", type=int)
    p.add_argument("--anchor", type=int, help="index of the anchored "
                   "conventional covariate (pr-wci)")
    p.add_argument("--h", type=float, help="projection bandwidth")
    p.add_argument("--g", type=float, help="rank-smoothing bandwidth")
    p.add_argument("--threads", type=int)
    p.add_argument("--naive", action="store_true",
                   help="nested-model contrast instead of the projection")
    p.set_defaults(func=_cmd_impact)

    p = sub.add_parser("simulate", help="Monte Carlo study")
    _add_output_args(p)
    p.add_argument("--scenario", help="TOML scenario file")
    p.add_argument("--generator", choices=GENERATORS, default="ph")
    p.add_argument("--xi", type=float, default=0.025)
    p.add_argument("--censoring", type=float, default=0.25)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--iterations", type=int)
    p.add_argument("--bootstrap-reps", type=int, dest="bootstrap_reps")
    p.add_argument("--seed", type=int,
                   help="RNG seed; required unless the scenario file "
                        "provides one")
    p.add_argument("--threads", type=int)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--pop-n-iter", type=int, default=2000, dest="pop_n_iter")
    p.add_argument("--pop-n-per", type=int, default=2000, dest="pop_n_per")
    p.add_argument("--transform", choices=("identity", "km"),
                   default="km")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("population", help="population concordance of a "
                       "scenario")
    _add_output_args(p)
    p.add_argument("--generator", choices=GENERATORS, default="ph")
    p.add_argument("--xi", type=float, default=0.025)
    p.add_argument("--censoring", type=float, default=0.0)
    p.add_argument("--n-iter", type=int, default=2000, dest="n_iter")
    p.add_argument("--n-per", type=int, default=2000, dest="n_per")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_cmd_population)
    return parser


def entry(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ValidationError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except NumericalError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3
    except OSError as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(entry())
