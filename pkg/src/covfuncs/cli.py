"""Command-line front end.

Subcommands: estimate, cv, twosample, factor-test, detect, rates, and
simulate <experiment>.  Global flags --seed, --threads, --out, --config.
Exit codes: 0 success, 2 configuration/validation error, 3 numerical
failure.  A config file holds ``key = value`` lines; command-line flags
win over file values.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import estimators, twosample
from .csvio import (read_matrix_csv, read_panel_csvs, read_sample_csv,
                    write_rows_csv)
from .cvselect import CvConfig, cv_threshold
from .detect import calibrate_cutoff, detect_test
from .experiments import (ConfigError, ExperimentConfig, make_threshold_spec,
                          run_detection_hist, run_functional_error,
                          run_relative_error, run_rolling_alpha,
                          run_two_sample, two_sample_records)
from .factortest import FactorPanel, rolling_alpha_tests
from .matgen import CENTER_BY_COLUMN_MEAN, KNOWN_ZERO_MEAN, SampleMatrix
from .rates import RateQuery, kappa_bar, kappa_lower, phi_lr, phi_quad, \
    psi_lr, psi_quad

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line (want key = value): {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _sample_from_args(path: str, centering: str) -> SampleMatrix:
    data = read_sample_csv(path)
    pol = KNOWN_ZERO_MEAN if centering == "zero" else CENTER_BY_COLUMN_MEAN
    return SampleMatrix(data, pol)


def _out_path(args: argparse.Namespace, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--config", type=str, default=None)


def _cmd_estimate(args: argparse.Namespace) -> int:
    x = _sample_from_args(args.sample, args.centering)
    spec = make_threshold_spec(args.threshold_mode, cv_seed=args.seed)
    tau = estimators.resolve_threshold(spec, x.p, x.n, x)
    sigma_hat = estimators.empirical_cov(x)
    est = estimators.threshold(sigma_hat, tau)
    rows = []
    q = estimators.q_offdiag(est)
    d = estimators.d_diag(x)
    frob = estimators.frobenius_sq(est, x, known_unit_diag=args.known_unit_diag)
    rows.append(("q_offdiag", q.value, tau, x.p, x.n, args.seed))
    rows.append(("d_diag", d.value, 0.0, x.p, x.n, args.seed))
    rows.append(("frobenius_sq", frob.value, tau, x.p, x.n, args.seed))
    rows.append(("bs_b2", estimators.bs_b2(x).value, 0.0, x.p, x.n,
                 args.seed))
    if x.n >= 4:
        rows.append(("cq_trace_sq", estimators.trace_sq_ustat(x).value, 0.0,
                     x.p, x.n, args.seed))
    for r in args.r:
        lr = estimators.lr_functional(est, r)
        rows.append((f"lr_functional_r={r:g}", lr.value, tau, x.p, x.n,
                     args.seed))
    out = _out_path(args, "estimates.csv")
    write_rows_csv(out, ("kind", "value", "tau", "p", "n", "seed"), rows)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_cv(args: argparse.Namespace) -> int:
    x = _sample_from_args(args.sample, args.centering)
    cfg = CvConfig(m=args.splits, grid_size=args.grid_size,
                   target=args.target, r=args.r, seed=args.seed)
    trace = cv_threshold(x, cfg)
    rows = trace.rows()
    out = _out_path(args, "cv_trace.csv")
    write_rows_csv(out, ("j", "tau_j", "loss_j"), rows)
    print(f"j_star={trace.j_star} tau_final={trace.tau_final:.6g} "
          f"n_train={trace.n_train}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_twosample(args: argparse.Namespace) -> int:
    x1 = _sample_from_args(args.sample1, "center")
    x2 = _sample_from_args(args.sample2, "center")
    spec = make_threshold_spec(args.threshold_mode, cv_seed=args.seed)
    method = args.method.lower()
    if method in ("bs", "newbs"):
        rep = twosample.bs_test(x1, x2, args.alpha, method == "newbs", spec)
    elif method in ("cq", "newcq"):
        rep = twosample.cq_test(x1, x2, args.alpha, method == "newcq", spec)
    elif method in ("bonferroni", "bh"):
        rep = twosample.marginal_tests(x1, x2, args.alpha, method)
    else:
        raise ConfigError(f"unknown method {args.method!r}")
    out = _out_path(args, "twosample.csv")
    write_rows_csv(out, ("method", "statistic", "z", "p_value", "reject",
                         "alpha"),
                   [(rep.method, rep.statistic,
                     rep.z if rep.z is not None else "",
                     rep.p_value, int(rep.reject), rep.alpha)])
    print(f"{rep.method}: statistic={rep.statistic:.6g} "
          f"p={rep.p_value:.4g} reject={rep.reject}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_factor_test(args: argparse.Namespace) -> int:
    dates, ids, returns, factors = read_panel_csvs(args.returns, args.factors)
    panel = FactorPanel(returns, factors, asset_ids=ids, dates=dates)
    spec = (make_threshold_spec(args.threshold_mode, cv_target="rho_bar_sq")
            if args.threshold_mode else None)
    reports = rolling_alpha_tests(panel, args.window, spec, args.alpha)
    rows = [(r.window_end, r.w_d, r.j_alpha, r.p_value, r.rho_bar_sq_hat,
             r.tau_used) for r in reports]
    out = _out_path(args, "factor_test.csv")
    write_rows_csv(out, ("window_end", "w_d", "j_alpha", "p_value",
                         "rho_bar_sq_hat", "tau"), rows)
    print(f"wrote {out} ({len(rows)} windows)")
    return EXIT_OK


def _cmd_detect(args: argparse.Namespace) -> int:
    x = _sample_from_args(args.sample, args.centering)
    spec = make_threshold_spec(args.threshold_mode, cv_seed=args.seed)
    if args.calibrate:
        cutoff = calibrate_cutoff(args.calibrate, x.p, x.n, args.r,
                                  None, args.alpha, args.seed)
    else:
        cutoff = args.cutoff
    report = detect_test(x, args.r, spec, cutoff)
    out = _out_path(args, "detect.csv")
    write_rows_csv(out, ("l_r_value", "cutoff_s", "reject", "tau", "r"),
                   [(report.l_r_value, report.cutoff_s, int(report.reject),
                     report.tau_used, args.r)])
    print(f"l_{args.r:g} = {report.l_r_value:.6g} cutoff={cutoff:.6g} "
          f"reject={report.reject}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_rates(args: argparse.Namespace) -> int:
    rows = []
    for n in args.n_grid:
        for p in args.p_grid:
            for q in args.q_grid:
                query = RateQuery(n=n, p=p, q=q, R=args.R, r=args.r,
                                  gamma=args.gamma, C=args.C,
                                  nu_const=args.nu)
                row = [n, p, q, args.R, args.r]
                row.append(psi_quad(query) if q < 2 else "")
                import warnings as _w
                with _w.catch_warnings():
                    _w.simplefilter("ignore")
                    row.append(phi_quad(query) if q < 2 else "")
                    row.append(psi_lr(query) if q < args.r else "")
                    row.append(phi_lr(query) if q < args.r else "")
                    row.append(kappa_bar(query, args.delta)
                               if q < args.r else "")
                    try:
                        row.append(kappa_lower(query) if q < args.r else "")
                    except ValueError:
                        row.append("")
                rows.append(tuple(row))
    out = _out_path(args, "rates.csv")
    write_rows_csv(out, ("n", "p", "q", "R", "r", "psi_quad", "phi_quad",
                         "psi_lr", "phi_lr", "kappa_bar", "kappa_lower"),
                   rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig(
        experiment=args.experiment,
        p=args.p, n=args.n,
        n_grid=tuple(args.n_grid) if args.n_grid else None,
        models=tuple(args.models),
        replications=args.reps,
        eta=args.eta, alpha=args.alpha,
        prop_grid=tuple(args.prop_grid),
        threshold_mode=args.threshold_mode,
        rho=args.rho, support_size=args.support_size, r=args.r,
        window=args.window, n_assets=args.n_assets,
        k_factors=args.k_factors, total_t=args.total_t,
        regime_switch=args.regime_switch,
        seed=args.seed, threads=args.threads, out=args.out)
    cfg.validate()
    if cfg.experiment == "functional-error":
        table = run_functional_error(cfg)
    elif cfg.experiment == "two-sample":
        table = run_two_sample(cfg)
    elif cfg.experiment == "relative-error":
        table = run_relative_error(cfg)
    elif cfg.experiment == "detection-hist":
        if args.hist:
            table, raw = run_detection_hist(cfg, collect_raw=True)
            hist_rows = [(series, i, v) for series in sorted(raw)
                         for i, v in enumerate(raw[series])]
            write_rows_csv(args.hist, ("series", "rep", "value"), hist_rows)
            print(f"wrote {args.hist}")
        else:
            table = run_detection_hist(cfg)
    elif cfg.experiment == "rolling-alpha":
        if args.returns and args.factors:
            dates, ids, returns, factors = read_panel_csvs(args.returns,
                                                           args.factors)
            panel = FactorPanel(returns, factors, asset_ids=ids, dates=dates)
            table = run_rolling_alpha(cfg, panel)
        else:
            table = run_rolling_alpha(cfg)
    else:  # pragma: no cover - validate() guards
        raise ConfigError(cfg.experiment)
    out = _out_path(args, f"{cfg.experiment.replace('-', '_')}.csv")
    table.to_csv(out)
    print(f"wrote {out} ({len(table.rows)} rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covfuncs",
        description="Functionals of sparse covariance matrices: estimators, "
                    "tests, and simulation harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="functional estimates from a "
                                            "sample CSV")
    p_est.add_argument("--sample", required=True)
    p_est.add_argument("--centering", choices=("zero", "center"),
                       default="center")
    p_est.add_argument("--threshold-mode", default="cv")
    p_est.add_argument("--known-unit-diag", action="store_true")
    p_est.add_argument("--r", type=float, nargs="*", default=[1.0, 2.0])
    _add_common(p_est)
    p_est.set_defaults(func=_cmd_estimate)

    p_cv = sub.add_parser("cv", help="cross-validated threshold trace")
    p_cv.add_argument("--sample", required=True)
    p_cv.add_argument("--centering", choices=("zero", "center"),
                      default="center")
    p_cv.add_argument("--target", default="q_functional",
                      choices=("q_functional", "lr_functional", "rho_bar_sq"))
    p_cv.add_argument("--splits", type=int, default=10)
    p_cv.add_argument("--grid-size", type=int, default=50)
    p_cv.add_argument("--r", type=float, default=1.0)
    _add_common(p_cv)
    p_cv.set_defaults(func=_cmd_cv)

    p_ts = sub.add_parser("twosample", help="two-sample mean test")
    p_ts.add_argument("--sample1", required=True)
    p_ts.add_argument("--sample2", required=True)
    p_ts.add_argument("--method", default="newCQ",
                      help="BS | newBS | CQ | newCQ | bonferroni | bh")
    p_ts.add_argument("--alpha", type=float, default=0.05)
    p_ts.add_argument("--threshold-mode", default="cv")
    _add_common(p_ts)
    p_ts.set_defaults(func=_cmd_twosample)

    p_ft = sub.add_parser("factor-test", help="rolling alpha tests from "
                                              "returns and factors CSVs")
    p_ft.add_argument("--returns", required=True)
    p_ft.add_argument("--factors", required=True)
    p_ft.add_argument("--window", type=int, default=60)
    p_ft.add_argument("--alpha", type=float, default=0.05)
    p_ft.add_argument("--threshold-mode", default=None)
    _add_common(p_ft)
    p_ft.set_defaults(func=_cmd_factor_test)

    p_dt = sub.add_parser("detect", help="correlation detection test")
    p_dt.add_argument("--sample", required=True)
    p_dt.add_argument("--centering", choices=("zero", "center"),
                      default="center")
    p_dt.add_argument("--r", type=float, default=1.0)
    p_dt.add_argument("--cutoff", type=float, default=None)
    p_dt.add_argument("--calibrate", type=int, default=None,
                      help="number of null draws for empirical calibration")
    p_dt.add_argument("--alpha", type=float, default=0.05)
    p_dt.add_argument("--threshold-mode", default="cv")
    p_dt.add_argument("--hist", type=str, default=None)
    _add_common(p_dt)
    p_dt.set_defaults(func=_cmd_detect)

    p_rt = sub.add_parser("rates", help="rate-formula table over a grid")
    p_rt.add_argument("--n-grid", type=int, nargs="+", default=[100])
    p_rt.add_argument("--p-grid", type=int, nargs="+", default=[500])
    p_rt.add_argument("--q-grid", type=float, nargs="+", default=[0.0, 0.5])
    p_rt.add_argument("--R", type=float, default=1.0)
    p_rt.add_argument("--r", type=float, default=1.0)
    p_rt.add_argument("--gamma", type=float, default=1.0)
    p_rt.add_argument("--C", type=float, default=1.0)
    p_rt.add_argument("--nu", type=float, default=1.0)
    p_rt.add_argument("--delta", type=float, default=0.05)
    _add_common(p_rt)
    p_rt.set_defaults(func=_cmd_rates)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    p_sim.add_argument("experiment", help="functional-error | two-sample | "
                                          "relative-error | detection-hist "
                                          "| rolling-alpha")
    p_sim.add_argument("--p", type=int, default=500)
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--n-grid", type=int, nargs="*", default=None)
    p_sim.add_argument("--models", nargs="*",
                       default=["m1", "m2", "m3", "m4"])
    p_sim.add_argument("--reps", type=int, default=500)
    p_sim.add_argument("--eta", type=float, default=0.1)
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--prop-grid", type=float, nargs="*",
                       default=[0.0, 0.5, 0.95, 1.0])
    p_sim.add_argument("--threshold-mode", default=None)
    p_sim.add_argument("--rho", type=float, default=0.8)
    p_sim.add_argument("--support-size", type=int, default=None)
    p_sim.add_argument("--r", type=float, default=1.0)
    p_sim.add_argument("--window", type=int, default=60)
    p_sim.add_argument("--n-assets", type=int, default=50)
    p_sim.add_argument("--k-factors", type=int, default=3)
    p_sim.add_argument("--total-t", type=int, default=120)
    p_sim.add_argument("--regime-switch", action="store_true")
    p_sim.add_argument("--hist", type=str, default=None)
    p_sim.add_argument("--returns", type=str, default=None)
    p_sim.add_argument("--factors", type=str, default=None)
    _add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser,
                       argv: list[str]) -> list[str]:
    """Inject config-file values as defaults; explicit flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ConfigError("--config needs a path")
    values = _load_config_file(argv[idx + 1])
    extra: list[str] = []
    for key, value in sorted(values.items()):
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue  # explicit flag wins
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                extra.append(flag)
            continue
        extra.extend([flag, *value.split()])
    # insert after the subcommand tokens so argparse assigns them correctly
    return argv + extra


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if getattr(args, "command", None) == "detect":
            if args.cutoff is None and args.calibrate is None:
                raise ConfigError("detect needs --cutoff or --calibrate")
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError,
            ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
