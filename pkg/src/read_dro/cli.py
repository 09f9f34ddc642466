"""Command-line interface.

Subcommands: ``fit``, ``select-delta``, ``tune-lambda``, ``region``,
``simulate``.  Matrices are read from headerless row-major CSV; estimates are
written as JSON, tables as CSV.  Exit codes: 0 ok, 2 dimension mismatch,
3 parse failure, 4 non-convergence.  Every randomized command requires
``--seed``; ``--threads 0`` (or the ``READ_DRO_THREADS`` environment
variable) means all cores.
"""

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import simharness
from .core import Dataset, Representation
from .errors import ConvergenceError
from .rwpi import confidence_region, select_delta, support_envelope
from .solver import SolverConfig, fit_erm, fit_read, objective_value
from .tuning import TuneConfig, tune_lambda

EXIT_OK = 0
EXIT_DIMENSION = 2
EXIT_PARSE = 3
EXIT_NONCONVERGENCE = 4


class ParseFailure(Exception):
    pass


def _load_matrix(path, name):
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParseFailure(f"failed to parse {name} from {path}: {exc}") from exc
    return arr


def _load_vector(path, name):
    arr = _load_matrix(path, name)
    if arr.shape[1] != 1 and arr.shape[0] != 1:
        raise ParseFailure(f"{name} in {path} is not a vector (shape {arr.shape})")
    return arr.ravel()


def _parse_lambda(text, name="--lambda"):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok.lower() == "inf":
            out.append(float("inf"))
            continue
        try:
            val = float(tok)
        except ValueError as exc:
            raise ParseFailure(f"bad {name} entry {tok!r}") from exc
        out.append(val)
    return np.array(out)


def _representation(args, d):
    if args.theta is None:
        if getattr(args, "lam", None):
            raise ParseFailure("--lambda given without --theta")
        return Representation.empty(d)
    theta = _load_matrix(args.theta, "theta")
    if theta.shape[0] != d:
        raise _dim(f"theta has {theta.shape[0]} rows, expected {d}")
    if not getattr(args, "lam", None):
        raise ParseFailure("--theta requires --lambda")
    lam = _parse_lambda(args.lam)
    if lam.shape[0] != theta.shape[1]:
        raise _dim(
            f"--lambda has {lam.shape[0]} entries but theta has {theta.shape[1]} columns"
        )
    return Representation(theta, lam)


class DimensionFailure(Exception):
    pass


def _dim(msg):
    return DimensionFailure(msg)


def _load_dataset(x_path, y_path):
    X = _load_matrix(x_path, "x")
    y = _load_vector(y_path, "y")
    if X.shape[0] != y.shape[0]:
        raise _dim(f"x has {X.shape[0]} rows but y has {y.shape[0]} entries")
    try:
        return Dataset(X, y)
    except ValueError as exc:
        raise _dim(str(exc)) from exc


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _vec(a):
    return [float(v) for v in np.asarray(a).ravel()]


def _mat(a):
    return [[float(v) for v in row] for row in np.asarray(a)]


def _cmd_fit(args):
    data = _load_dataset(args.x, args.y)
    rep = _representation(args, data.d)
    if args.delta == "auto":
        if args.seed is None:
            raise ParseFailure("--delta auto requires --seed")
        beta_erm = fit_erm(data)
        qe = select_delta(data, beta_erm, rep, args.alpha, args.mc, args.seed)
        print(f"selected eta = {qe.eta!r} (delta = eta/N = {qe.delta!r})", file=sys.stderr)
        delta = qe.delta
    else:
        try:
            delta = float(args.delta)
        except ValueError as exc:
            raise ParseFailure(f"bad --delta value {args.delta!r}") from exc
        if delta < 0:
            raise ParseFailure("--delta must be nonnegative or 'auto'")
    est = fit_read(data, rep, delta)
    _write_json(
        {
            "beta": _vec(est.beta),
            "kappa": _vec(est.kappa),
            "delta": est.delta,
            "objective": est.objective,
            "converged": est.converged,
        },
        args.out,
    )
    return EXIT_OK


def _cmd_select_delta(args):
    data = _load_dataset(args.x, args.y)
    rep = _representation(args, data.d)
    beta_erm = fit_erm(data)
    qe = select_delta(data, beta_erm, rep, args.alpha, args.mc, args.seed)
    _write_json(
        {
            "eta": qe.eta,
            "delta": qe.delta,
            "alpha": qe.alpha,
            "L": qe.L,
            "samples_infinite_fraction": qe.samples_infinite_fraction,
        },
        args.out,
    )
    return EXIT_OK


def _cmd_tune_lambda(args):
    train = _load_dataset(args.x, args.y)
    val = _load_dataset(args.val_x, args.val_y)
    theta = _load_matrix(args.theta, "theta")
    if theta.shape[0] != train.d:
        raise _dim(f"theta has {theta.shape[0]} rows, expected {train.d}")
    cfg = TuneConfig(
        mu=args.mu,
        nu=args.nu,
        a_grid=tuple(_parse_lambda(args.a_grid, "--a-grid")) if args.a_grid else TuneConfig.a_grid,
        b_grid=tuple(_parse_lambda(args.b_grid, "--b-grid")) if args.b_grid else TuneConfig.b_grid,
        alpha=args.alpha,
        L=args.mc,
    )
    res = tune_lambda(train, val, theta, cfg, args.seed, threads=args.threads)
    table = {
        f"{a!r},{b!r}": (v if np.isfinite(v) else "inf")
        for (a, b), v in res.objective_table.items()
    }
    _write_json(
        {
            "lambda": _vec(res.lambda_),
            "delta": res.delta,
            "a_star": res.a_star,
            "b_star": res.b_star,
            "a_dagger": res.a_dagger,
            "objective_table": table,
            "kappa_init": _vec(res.kappa_init),
        },
        args.out,
    )
    return EXIT_OK


def _cmd_region(args):
    data = _load_dataset(args.x, args.y)
    rep = _representation(args, data.d)
    beta_erm = fit_erm(data)
    region = confidence_region(data, beta_erm, rep, args.alpha, args.mc, args.seed)
    _write_json(
        {
            "center": _vec(region.center),
            "Sigma_hat": _mat(region.Sigma_hat),
            "GammaTilde": _mat(region.GammaTilde),
            "eta": region.eta,
            "sigma2_hat": region.sigma2_hat,
            "alpha": region.alpha,
            "n_samples": region.n_samples,
        },
        args.out,
    )
    if args.envelope:
        if not args.envelope_out:
            raise ParseFailure("--envelope requires --envelope-out")
        dirs, offsets = support_envelope(
            data, beta_erm, rep, args.alpha, args.mc, args.seed, args.envelope
        )
        with open(args.envelope_out, "w", newline="") as fh:
            fh.write(",".join(f"v_{j + 1}" for j in range(data.d)) + ",offset\n")
            for v, off in zip(dirs, offsets):
                fh.write(",".join(repr(float(c)) for c in v) + f",{simharness._fmt(off)}\n")
    return EXIT_OK


_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}
_CONFIG_KEYS = {
    f.name for f in dataclasses.fields(simharness.SimConfig) if f.name != "solver"
} | _SOLVER_KEYS


def _apply_config_file(cfg, path):
    """Merge a JSON config document mirroring the simulation, tuning, and
    solver configuration keys; unknown keys are rejected."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ParseFailure(f"failed to parse config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseFailure("config document must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ParseFailure(f"unknown config keys: {sorted(unknown)}")
    solver_doc = {k: doc.pop(k) for k in list(doc) if k in _SOLVER_KEYS}
    for key in ("sweep", "a_grid", "b_grid"):
        if doc.get(key) is not None:
            doc[key] = tuple(doc[key])
    try:
        if solver_doc:
            doc["solver"] = SolverConfig(**solver_doc)
        return dataclasses.replace(cfg, **doc)
    except ValueError as exc:
        raise ParseFailure(f"invalid config value: {exc}") from exc


def _cmd_simulate(args):
    cfg = simharness.default_config(args.experiment, args.reps, args.seed)
    if args.config:
        cfg = _apply_config_file(cfg, args.config)
    overrides = {}
    for flag, key in (
        ("d", "d"), ("n", "N"), ("m", "M"), ("c", "C"), ("rho", "rho"),
        ("k", "K"), ("sigma_noise", "sigma_noise"), ("alpha", "alpha"),
        ("mc", "L"), ("mu", "mu"), ("nu", "nu"),
    ):
        val = getattr(args, flag)
        if val is not None:
            overrides[key] = val
    if args.full_grid:
        overrides["full_lambda_grid"] = True
    if args.timings:
        overrides["timings"] = True
    cfg = dataclasses.replace(cfg, reps=args.reps, seed=args.seed, **overrides)

    if args.experiment == "coverage":
        coverage = simharness.coverage_experiment(cfg, threads=args.threads)
        _write_json(
            {"coverage": coverage, "alpha": cfg.alpha, "reps": cfg.reps},
            args.out,
        )
        return EXIT_OK

    result = simharness.run_experiment(cfg, threads=args.threads)
    simharness.write_rows_csv(result, args.out)
    summary_out = args.summary_out or _default_summary_path(args.out)
    simharness.write_summary_csv(result, summary_out)
    return EXIT_OK


def _default_summary_path(out):
    stem, dot, _ = out.rpartition(".")
    return (stem if dot else out) + ".summary.csv"


def _add_data_args(p, theta_required):
    p.add_argument("--x", required=True, help="covariate CSV (row-major, no header)")
    p.add_argument("--y", required=True, help="response CSV (one column)")
    p.add_argument("--theta", required=theta_required, help="prior-direction CSV (d x M)")
    if not theta_required:
        p.add_argument("--lambda", dest="lam",
                       help="comma list of alignment weights ('inf' allowed)")
    else:
        p.add_argument("--lambda", dest="lam", required=False)


def _add_mc_args(p, seed_required=True):
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--mc", type=int, default=2000, help="Monte Carlo draws")
    p.add_argument("--seed", type=int, required=seed_required)


def build_parser():
    parser = argparse.ArgumentParser(prog="read-dro", description=__doc__)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (0 = all cores; falls back to READ_DRO_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the robust estimator at a fixed or auto radius")
    _add_data_args(p, theta_required=False)
    p.add_argument("--delta", required=True, help="radius (nonnegative float) or 'auto'")
    _add_mc_args(p, seed_required=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("select-delta", help="Monte Carlo radius selection")
    _add_data_args(p, theta_required=False)
    _add_mc_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_select_delta)

    p = sub.add_parser("tune-lambda", help="alignment-weight grid search with validation")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--val-x", required=True, dest="val_x")
    p.add_argument("--val-y", required=True, dest="val_y")
    p.add_argument("--theta", required=True)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--a-grid", dest="a_grid", help="comma list ('inf' allowed)")
    p.add_argument("--b-grid", dest="b_grid", help="comma list")
    _add_mc_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune_lambda)

    p = sub.add_parser("region", help="confidence region (optionally with envelope)")
    _add_data_args(p, theta_required=False)
    _add_mc_args(p)
    p.add_argument("--envelope", type=int, default=0, help="number of half-spaces")
    p.add_argument("--envelope-out", dest="envelope_out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_region)

    p = sub.add_parser("simulate", help="run an experiment family or coverage study")
    p.add_argument("--experiment", required=True, choices=simharness.EXPERIMENTS)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="JSON config mirroring the simulation keys")
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--sigma-noise", dest="sigma_noise", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mc", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--full-grid", action="store_true", dest="full_grid",
                   help="use the 200-point ablation grid")
    p.add_argument("--timings", action="store_true",
                   help="record wall-clock runtimes (breaks byte-level determinism)")
    p.add_argument("--out", required=True)
    p.add_argument("--summary-out", dest="summary_out")
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION


if __name__ == "__main__":
    sys.exit(main())
