"""Command line front end: emulate, calibrate, screen and bench.

All data exchange is CSV.  Options come from defaults, then an optional
flat key=value config file (dotted keys, # comments), then command line
flags; every run is fully determined by its inputs and seed.  Errors exit
nonzero with a single machine-parseable ``ERROR[code]: ...`` line on
stderr (config 2, data 3, numerical 4).
"""

import argparse
import os
import sys

import numpy as np

from . import bench, calibrate, screen, tables
from .design import DesignMatrix
from .errors import ConfigError, DataError, GaspError
from .fit import FitConfig, FittedEmulator, fit_mode
from .gasp import GaSPModel, predict
from .kernels import (
    CorrelationSpec,
    Kernel1D,
    POWER_EXPONENTIAL,
    Parameterization,
    exponential,
    gaussian,
    matern15,
    matern25,
    power_exponential,
)
from .priors import JR, REFERENCE, JRPriorParams, PriorSpec

_CONFIG_DEFAULTS = {
    "prior.kind": "jr",
    "prior.a": None,
    "prior.b": None,
    "prior.C": None,
    "prior.nugget": None,
    "fit.parameterization": None,
    "fit.multistart": "3",
    "fit.tol": "1e-6",
    "fit.max_iter": "200",
    "fit.seed": "0",
    "kernel.family": "matern25",
    "kernel.alpha": "1.9",
    "mean.basis": "constant",
    "mcmc.s": "20000",
    "mcmc.s0": "4000",
    "sobol.n_mc": "3000",
    "screen.p0": "1",
}

_KERNELS = {
    "matern25": matern25,
    "matern15": matern15,
    "exponential": exponential,
    "gaussian": gaussian,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def parse_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {ln}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_DEFAULTS:
                raise ConfigError(f"{path}: line {ln}: unknown key {key!r}")
            out[key] = value
    return out


def _merged_config(args):
    cfg = dict(_CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    # command line flags win over file values
    if getattr(args, "prior", None):
        cfg["prior.kind"] = args.prior
    if getattr(args, "parameterization", None):
        cfg["fit.parameterization"] = args.parameterization
    return cfg


def _build_kernel(cfg, p):
    family = cfg["kernel.family"]
    if family == "powexp":
        k = power_exponential(float(cfg["kernel.alpha"]))
    elif family in _KERNELS:
        k = _KERNELS[family]()
    else:
        raise ConfigError(f"unknown kernel family {family!r}")
    return CorrelationSpec.uniform(k, p)


def _build_prior(cfg, nugget_default=False):
    kind = cfg["prior.kind"]
    if kind not in (JR, REFERENCE):
        raise ConfigError(f"prior.kind must be jr or reference, got {kind!r}")
    nugget = _parse_bool(cfg["prior.nugget"], default=nugget_default)
    jr_params = None
    if kind == JR and cfg["prior.a"] is not None and cfg["prior.C"] is not None:
        C = np.array([float(v) for v in str(cfg["prior.C"]).split(",")])
        b = float(cfg["prior.b"]) if cfg["prior.b"] is not None else 1.0
        jr_params = JRPriorParams(a=float(cfg["prior.a"]), b=b, C=C)
    return PriorSpec(kind=kind, jr_params=jr_params, nugget_included=nugget), nugget


def _parse_bool(value, default=False):
    if value is None:
        return default
    if str(value).lower() in ("1", "true", "yes", "on"):
        return True
    if str(value).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def _fit_config(cfg, parameterization_default, prior):
    par = cfg["fit.parameterization"] or parameterization_default
    try:
        par = Parameterization(par)
    except ValueError:
        raise ConfigError(f"unknown parameterization {par!r}") from None
    return FitConfig(
        parameterization=par,
        prior=prior,
        max_iter=int(cfg["fit.max_iter"]),
        tol=float(cfg["fit.tol"]),
        multistart=int(cfg["fit.multistart"]),
        seed=int(cfg["fit.seed"]),
    )


def _load_design_and_output(args):
    X, _ = tables.load_table(args.design)
    y, _ = tables.load_table(args.output)
    if y.shape[1] != 1:
        raise DataError(f"output file must have one column, got {y.shape[1]}")
    if y.shape[0] != X.shape[0]:
        raise DataError(
            f"design has {X.shape[0]} rows but output has {y.shape[0]} rows"
        )
    return X, y[:, 0]


def _outdir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_emulate(args):
    cfg = _merged_config(args)
    X, y = _load_design_and_output(args)
    prior, nugget = _build_prior(cfg, nugget_default=False)
    spec = _build_kernel(cfg, X.shape[1])
    model = GaSPModel(
        X, y, spec, mean_basis=cfg["mean.basis"], nugget_enabled=nugget
    )
    fit_cfg = _fit_config(cfg, "xi", prior)
    if args.seed is not None:
        fit_cfg = FitConfig(
            parameterization=fit_cfg.parameterization,
            prior=prior,
            max_iter=fit_cfg.max_iter,
            tol=fit_cfg.tol,
            multistart=fit_cfg.multistart,
            seed=args.seed,
        )
    result = fit_mode(model, fit_cfg)
    out = _outdir(args)

    rows = []
    gamma, beta, xi = result.gamma(), result.beta(), result.xi()
    shares = None
    if result.jr_params is not None:
        weighted = result.jr_params.C * beta
        if weighted.sum() > 0:
            shares = weighted / weighted.sum()
    for l in range(model.p):
        rows.append((f"gamma.{l + 1}", gamma[l]))
        rows.append((f"beta.{l + 1}", beta[l]))
        rows.append((f"xi.{l + 1}", xi[l]))
        if shares is not None:
            rows.append((f"P.{l + 1}", shares[l]))
    rows.append(("eta", result.eta_hat))
    for t, v in enumerate(result.theta_m_hat):
        rows.append((f"theta_m.{t + 1}", v))
    rows.append(("sigma2", result.sigma2_hat))
    rows.append(("log_posterior", result.log_posterior))
    rows.append(("min_offdiag_corr", result.diagnostics.min_offdiag_corr))
    rows.append(("max_offdiag_corr", result.diagnostics.max_offdiag_corr))
    rows.append(("flag_near_identity", int(result.diagnostics.flag_near_identity)))
    rows.append(("flag_near_ones", int(result.diagnostics.flag_near_ones)))
    rows.append(("converged", int(result.trace.converged)))
    tables.write_report(os.path.join(out, "fit_summary.csv"), ["name", "value"], rows)

    if result.diagnostics.flag_near_identity:
        print("WARNING: fitted correlation matrix is near the identity", file=sys.stderr)
    if result.diagnostics.flag_near_ones:
        print("WARNING: fitted correlation matrix is near all-ones", file=sys.stderr)

    if args.new_inputs:
        Xs, _ = tables.load_table(args.new_inputs)
        pred = predict(model, result.params, result.eta_hat, Xs)
        lower, upper = pred.interval(0.95)
        tables.write_table(
            os.path.join(out, "predictions.csv"),
            np.column_stack([Xs, pred.mean, lower, upper]),
            names=[f"x{i + 1}" for i in range(Xs.shape[1])] + ["mean", "lower95", "upper95"],
        )
    return 0


def cmd_screen(args):
    cfg = _merged_config(args)
    X, y = _load_design_and_output(args)
    prior, nugget = _build_prior(cfg, nugget_default=True)
    if prior.kind != JR:
        raise ConfigError("screening requires the JR prior")
    spec = _build_kernel(cfg, X.shape[1])
    model = GaSPModel(
        X, y, spec, mean_basis=cfg["mean.basis"], nugget_enabled=nugget
    )
    fit_cfg = _fit_config(cfg, "beta", prior)
    result = fit_mode(model, fit_cfg)
    p0 = float(args.p0 if args.p0 is not None else cfg["screen.p0"])
    scores = screen.normalized_inverse_ranges(result, p0=p0)
    emu = FittedEmulator(model, result)
    idx = screen.sobol_emulator(
        emu,
        model.design.bounds,
        n_mc=int(cfg["sobol.n_mc"]),
        seed=args.seed or int(cfg["fit.seed"]),
    )
    out = _outdir(args)
    rows = [
        (l + 1, scores.P[l], int(scores.selected[l]), idx.S[l], idx.S_T[l])
        for l in range(model.p)
    ]
    tables.write_report(
        os.path.join(out, "screen.csv"),
        ["input", "P_l", "selected", "S_i", "S_Ti"],
        rows,
    )
    return 0


def _parse_theta_bounds(text):
    try:
        pairs = [tuple(float(v) for v in part.split(":")) for part in text.split(",")]
        bounds = np.array(pairs, dtype=float)
        if bounds.shape[1] != 2:
            raise ValueError
    except ValueError:
        raise ConfigError(
            f"theta bounds must look like 'lo:hi[,lo:hi...]', got {text!r}"
        ) from None
    return bounds


def cmd_calibrate(args):
    cfg = _merged_config(args)
    data, _ = tables.load_table(args.data)
    if data.shape[1] < 2:
        raise DataError("calibration data needs input columns plus one output column")
    X, y = data[:, :-1], data[:, -1]
    prior, _ = _build_prior(cfg, nugget_default=True)
    prior = PriorSpec(kind=prior.kind, jr_params=prior.jr_params, nugget_included=True)
    seed = args.seed if args.seed is not None else int(cfg["fit.seed"])

    if args.model == "ex4":
        model_fn, emulator = bench.ex4_model, None
        theta_bounds = (
            _parse_theta_bounds(args.theta_bounds)
            if args.theta_bounds
            else bench.EX4_THETA_BOUNDS
        )
    elif args.model == "emulator":
        if not (args.model_design and args.model_output):
            raise ConfigError(
                "--model emulator requires --model-design and --model-output"
            )
        runs_X, runs_y = tables.load_table(args.model_design)[0], tables.load_table(
            args.model_output
        )[0][:, 0]
        if args.theta_bounds is None:
            raise ConfigError("--theta-bounds is required with an emulated model")
        theta_bounds = _parse_theta_bounds(args.theta_bounds)
        if runs_X.shape[1] != X.shape[1] + theta_bounds.shape[0]:
            raise DataError(
                "model runs must have input columns for x and theta "
                f"({X.shape[1]} + {theta_bounds.shape[0]}), got {runs_X.shape[1]}"
            )
        model_fn, emulator = None, calibrate.fit_emulator_modular(runs_X, runs_y)
    else:
        raise ConfigError(f"unknown model {args.model!r} (use ex4 or emulator)")

    prob = calibrate.CalibrationProblem(
        design=DesignMatrix(X),
        y=y,
        model_fn=model_fn,
        emulator=emulator,
        theta_bounds=theta_bounds,
        spec=_build_kernel(cfg, X.shape[1]),
        mean_basis=cfg["mean.basis"],
        prior=prior,
    )
    chain = calibrate.run_mcmc(
        prob,
        n_samples=int(args.s if args.s is not None else cfg["mcmc.s"]),
        n_burn=int(args.s0 if args.s0 is not None else cfg["mcmc.s0"]),
        seed=seed,
    )
    out = _outdir(args)
    chain_cols = (
        [f"theta.{i + 1}" for i in range(prob.p_theta)]
        + [f"theta_m.{i + 1}" for i in range(prob.model.q)]
        + ["sigma2"]
        + [f"xi.{i + 1}" for i in range(prob.model.p)]
        + ["log_eta"]
    )
    chain_data = np.column_stack(
        [chain.theta, chain.theta_m, chain.sigma2, chain.xi, chain.log_eta]
    )
    tables.write_table(os.path.join(out, "chain.csv"), chain_data, names=chain_cols)

    Xs = tables.load_table(args.new_inputs)[0] if args.new_inputs else X
    pred = calibrate.predict_calibrated(prob, chain, Xs)
    tables.write_table(
        os.path.join(out, "predictions.csv"),
        np.column_stack([Xs, pred.mean, pred.lower, pred.upper]),
        names=[f"x{i + 1}" for i in range(Xs.shape[1])] + ["mean", "lower95", "upper95"],
    )
    if args.truth:
        truth = tables.load_table(args.truth)[0][:, -1]
        metrics = calibrate.calibration_metrics(
            pred.mean, truth, lower=pred.lower, upper=pred.upper, observed_mean=np.mean(y)
        )
        tables.write_report(
            os.path.join(out, "metrics.csv"),
            ["metric", "value"],
            list(metrics.items()),
        )
    return 0


def cmd_bench(args):
    cfg = _merged_config(args)
    seed = args.seed if args.seed is not None else 0
    out = _outdir(args)
    case = args.case
    if case == "ex4":
        n_samples = 100000 if args.paper_scale else int(cfg["mcmc.s"])
        n_burn = 20000 if args.paper_scale else int(cfg["mcmc.s0"])
        report = bench.calibration_benchmark(
            seed=seed, n_samples=n_samples, n_burn=n_burn
        )
        tables.write_report(
            os.path.join(out, "calibration_report.csv"),
            ["method", "predictor", "nrmse", "p_ci95", "l_ci95", "median_xi"],
            [
                (
                    r["method"],
                    r["predictor"],
                    r["nrmse"],
                    r["p_ci95"] if r["p_ci95"] is not None else "",
                    r["l_ci95"] if r["l_ci95"] is not None else "",
                    r["median_xi"],
                )
                for r in report.rows
            ],
        )
        for key, plot in report.extras.items():
            if not key.startswith("plot_"):
                continue
            tables.write_table(
                os.path.join(out, f"{key}.csv"),
                np.column_stack([plot["x"], plot["mean"], plot["lower"], plot["upper"]]),
                names=["x", "mean", "lower", "upper"],
            )
        for key in list(report.extras):
            if key.startswith("chain_"):
                ch = report.extras[key]
                tables.write_table(
                    os.path.join(out, f"{key}.csv"),
                    np.column_stack(
                        [ch.theta, ch.theta_m, ch.sigma2, ch.xi, ch.log_eta]
                    ),
                    names=["theta", "theta_m", "sigma2", "xi", "log_eta"],
                )
        return 0
    if case.startswith("ex1"):
        n_rep = args.replicates or (200 if args.paper_scale else 20)
        n_heldout = 10000 if args.paper_scale else 2000
        report = bench.emulation_benchmark(
            [case], n_replicates=n_rep, prior_kinds=(JR, REFERENCE), seed=seed,
            n_heldout=n_heldout,
        )
        tables.write_report(
            os.path.join(out, "emulation_report.csv"),
            ["case", "prior", "replicate", "nrmse"],
            [(r["case"], r["prior"], r["replicate"], r["nrmse"]) for r in report.rows],
        )
        tables.write_report(
            os.path.join(out, "emulation_aggregates.csv"),
            ["case", "prior", "avg_nrmse"],
            [(a["case"], a["prior"], a["avg_nrmse"]) for a in report.aggregates],
        )
        return 0
    if case.startswith("ex2") or case.startswith("ex3"):
        n_rep = args.replicates or (1000 if args.paper_scale else 100)
        rep = screen.screening_benchmark(case, n_replicates=n_rep, seed=seed)
        tables.write_report(
            os.path.join(out, "screen_freq.csv"),
            ["input", "selection_freq"],
            [(l + 1, rep.selection_freq[l]) for l in range(rep.selection_freq.size)],
        )
        tables.write_report(
            os.path.join(out, "screen_summary.csv"),
            ["case", "method", "separation_fraction", "n_replicates"],
            [(rep.case, rep.method, rep.separation_fraction, rep.n_replicates)],
        )
        tables.write_table(
            os.path.join(out, "screen_P_samples.csv"),
            rep.P_samples,
            names=[f"P{l + 1}" for l in range(rep.P_samples.shape[1])],
        )
        return 0
    raise ConfigError(f"unknown bench case {case!r}")


def build_parser():
    parser = _Parser(prog="gaspkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("emulate", help="fit an emulator and predict")
    pe.add_argument("--design", required=True)
    pe.add_argument("--output", required=True)
    pe.add_argument("--new-inputs")
    pe.add_argument("--prior", choices=[JR, REFERENCE])
    pe.add_argument("--parameterization", choices=["gamma", "xi", "beta"])
    pe.add_argument("--config")
    pe.add_argument("--seed", type=int)
    pe.add_argument("--out")
    pe.set_defaults(func=cmd_emulate)

    ps = sub.add_parser("screen", help="rank inputs by importance")
    ps.add_argument("--design", required=True)
    ps.add_argument("--output", required=True)
    ps.add_argument("--p0", type=float)
    ps.add_argument("--config")
    ps.add_argument("--seed", type=int)
    ps.add_argument("--out")
    ps.set_defaults(func=cmd_screen)

    pc = sub.add_parser("calibrate", help="posterior sampling for model calibration")
    pc.add_argument("--data", required=True, help="CSV of x columns plus output column")
    pc.add_argument("--model", required=True, help="ex4 or emulator")
    pc.add_argument("--model-design")
    pc.add_argument("--model-output")
    pc.add_argument("--theta-bounds")
    pc.add_argument("--s", type=int)
    pc.add_argument("--s0", type=int)
    pc.add_argument("--new-inputs")
    pc.add_argument("--truth")
    pc.add_argument("--prior", choices=[JR, REFERENCE])
    pc.add_argument("--config")
    pc.add_argument("--seed", type=int)
    pc.add_argument("--out")
    pc.set_defaults(func=cmd_calibrate)

    pb = sub.add_parser("bench", help="run a benchmark case")
    pb.add_argument("--case", required=True)
    pb.add_argument("--replicates", type=int)
    pb.add_argument("--paper-scale", action="store_true")
    pb.add_argument("--config")
    pb.add_argument("--seed", type=int)
    pb.add_argument("--out")
    pb.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except GaspError as exc:
        print(f"ERROR[{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - unexpected failure guard
        print(f"ERROR[error]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
