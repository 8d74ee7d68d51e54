"""Command-line interface.

One subcommand per experiment type:

  exact        closed-form probability and hyper-parameter CoV vs threshold
  ss-estimate  one subset-simulation run at the nominal hyper-parameters
  double-loop  full pipeline: outer design, inner SS, sparse PCE, Sobol'
  variability  index spread, surrogate route vs pick-and-freeze, same budget
  budget-sweep mean total indices over (inner, outer) budget grids
  darcy-demo   one permeability/pressure realization dumped as CSV grids
  sobol-report indices of a previously saved surrogate

Options come from an optional flat dotted-key config file (`--config`),
overridden by command-line flags.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analytic, darcy, pce, sobol
from ._version import __version__
from .driver import (BudgetSweepResult, ConfigError, ExperimentConfig,
                     VariabilityReport, _build_adapter, budget_sweep,
                     config_from_options, load_config_file, run_double_loop,
                     variability_study)
from .mc import cov_bound
from .pce import NonConvergenceError
from .sampling import RandomStream
from .subset import DegenerateLevelError, SSConfig, run_subset_simulation

_NUMERICAL_ERRORS = (NonConvergenceError, DegenerateLevelError,
                     sobol.ConstantSurrogateError, darcy.SolverError,
                     darcy.DecompositionError, FloatingPointError,
                     np.linalg.LinAlgError)

# command-line flag -> dotted config key
_FLAG_KEYS = {
    "seed": "seed",
    "model": "model",
    "tau": "tau_bar",
    "n_samp": "n_samp",
    "n_ss": "ss.n_per_level",
    "p0": "ss.p0",
    "pce_order": "pce.order",
    "lam": "pce.lam",
    "out": "out_dir",
    "threads": "threads",
}


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="flat dotted-key config file")
    parser.add_argument("--seed", type=int, help="root random seed")
    parser.add_argument("--model", choices=("analytic", "darcy"))
    parser.add_argument("--tau", type=float, help="rare-event threshold tau_bar")
    parser.add_argument("--n-samp", dest="n_samp", type=int, help="outer-loop sample count")
    parser.add_argument("--n-ss", dest="n_ss", type=int, help="subset-simulation samples per level")
    parser.add_argument("--p0", type=float, help="subset-simulation level probability")
    parser.add_argument("--pce-order", dest="pce_order", type=int, help="total polynomial order")
    parser.add_argument("--lambda", dest="lam", type=float, help="l1 radius of the coefficient fit")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, help="parallel outer-loop workers")


def _config_from_args(args) -> ExperimentConfig:
    options: dict = {}
    if args.config is not None:
        options.update(load_config_file(args.config))
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            options[key] = value
    return config_from_options(options)


def _print_index_table(labels, columns: dict, file=None) -> None:
    file = file if file is not None else sys.stdout
    width = max(8, max(len(str(l)) for l in labels) + 2)
    heads = list(columns)
    print("".join(["index".ljust(width)] + [h.rjust(14) for h in heads]), file=file)
    for i, label in enumerate(labels):
        row = [str(label).ljust(width)]
        row += [f"{columns[h][i]:14.6f}" for h in heads]
        print("".join(row), file=file)


def _cmd_exact(args) -> int:
    cfg = _config_from_args(args)
    if cfg.model != "analytic":
        raise ConfigError("the exact table needs the closed-form model (--model analytic)")
    hyper = analytic.AnalyticHyper(np.array(cfg.analytic.means),
                                   np.array(cfg.analytic.variances))
    taus = np.arange(args.tau_min, args.tau_max + 1e-12, args.tau_step)
    curve = analytic.cov_vs_threshold_curve(hyper, taus, cfg.perturbation,
                                            args.n_outer, RandomStream(cfg.seed))
    lines = ["tau_bar,p_nominal,delta"]
    for tau, delta in curve:
        p = analytic.exact_probability(hyper, tau)
        lines.append(f"{tau:.17g},{p:.17g},{delta:.17g}")
    text = "\n".join(lines) + "\n"
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "exact_curve.csv").write_text(text)
        print(f"wrote {out / 'exact_curve.csv'}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_ss_estimate(args) -> int:
    cfg = _config_from_args(args)
    adapter = _build_adapter(cfg)
    xi_nom = adapter.box.midpoint
    qoi = adapter.qoi_for_xi(xi_nom)
    ss_cfg = SSConfig(tau_bar=cfg.tau_bar, n_per_level=cfg.ss.n_per_level,
                      p0=cfg.ss.p0, max_levels=cfg.ss.max_levels,
                      proposal_spread=cfg.ss.proposal_spread)
    res = run_subset_simulation(qoi, adapter.input_dim, ss_cfg, RandomStream(cfg.seed))
    print(f"p_hat            = {res.p_hat:.6e}")
    print(f"levels           = {res.n_levels}")
    print(f"thresholds       = {np.array2string(res.thresholds, precision=4)}")
    print(f"qoi evaluations  = {res.n_evals}")
    print(f"terminated early = {res.terminated_early}")
    if adapter.exact_p is not None:
        truth = float(adapter.exact_p(xi_nom[None, :])[0])
        print(f"exact            = {truth:.6e}   (ratio {res.p_hat / truth:.3f})")
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        record = {"p_hat": res.p_hat, "n_levels": res.n_levels,
                  "thresholds": res.thresholds.tolist(), "n_evals": res.n_evals,
                  "terminated_early": res.terminated_early, "seed": cfg.seed}
        (out / "ss_estimate.json").write_text(json.dumps(record, indent=1))
    return 0


def _cmd_double_loop(args) -> int:
    cfg = _config_from_args(args)
    if cfg.out_dir is None:
        raise ConfigError("double-loop needs an output directory (--out)")
    artifacts = run_double_loop(cfg)
    excluded = int(np.count_nonzero(~artifacts.included))
    print(f"outer samples    = {artifacts.xi_samples.shape[0]} ({excluded} excluded)")
    print(f"total qoi evals  = {artifacts.total_evals}")
    print(f"l1 radius used   = {artifacts.lam_used:g}")
    print(f"surrogate mean   = {artifacts.sobol.mean:.6e}")
    _print_index_table(artifacts.labels,
                       {"first_order": artifacts.sobol.first_order,
                        "total": artifacts.sobol.total})
    print(f"artifacts in {cfg.out_dir}")
    return 0


def _cmd_variability(args) -> int:
    cfg = _config_from_args(args)
    report = variability_study(cfg, args.n_reps)
    _print_index_table(report.labels,
                       {"pce_mean": report.pce_mean,
                        "pce_std": report.pce_std,
                        "saltelli_mean": report.saltelli_mean,
                        "saltelli_std": report.saltelli_std})
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["index,pce_mean,pce_std,saltelli_mean,saltelli_std"]
        for i, label in enumerate(report.labels):
            lines.append(f"{label},{report.pce_mean[i]:.17g},{report.pce_std[i]:.17g},"
                         f"{report.saltelli_mean[i]:.17g},{report.saltelli_std[i]:.17g}")
        (out / "variability.csv").write_text("\n".join(lines) + "\n")
        print(f"wrote {out / 'variability.csv'}")
    return 0


def _cmd_budget_sweep(args) -> int:
    cfg = _config_from_args(args)
    n_ss_grid = [int(v) for v in args.n_ss_grid.split(",")]
    n_samp_grid = [int(v) for v in args.n_samp_grid.split(",")]
    result = budget_sweep(cfg, n_ss_grid, n_samp_grid, n_reps=args.n_reps)
    header = ["n_ss", "n_samp"] + [f"T_{label}" for label in result.labels]
    lines = [",".join(header)]
    for key in sorted(result.mean_totals):
        totals = result.mean_totals[key]
        lines.append(",".join([str(key[0]), str(key[1])]
                              + [f"{t:.17g}" for t in totals]))
    text = "\n".join(lines) + "\n"
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "budget_sweep.csv").write_text(text)
        print(f"wrote {out / 'budget_sweep.csv'}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_darcy_demo(args) -> int:
    cfg = _config_from_args(args)
    grid = darcy.Grid(cfg.darcy.grid_n)
    hyper = darcy.DarcyHyper(cfg.darcy.ell_x, cfg.darcy.ell_y, cfg.darcy.sigma_a)
    n_kl = cfg.darcy.n_kl
    if n_kl is None:
        n_kl = darcy.mode_count_for_box(grid.n, hyper.ell_x, hyper.ell_y,
                                        energy=cfg.darcy.energy,
                                        box_fraction=cfg.perturbation)
    mean_field = None
    if cfg.darcy.mean_field is not None:
        mean_field = darcy.load_mean_field(cfg.darcy.mean_field)
    context = darcy.build_context(hyper, grid, n_kl=n_kl, mean_field=mean_field,
                                  t_cap=cfg.darcy.t_cap, cfl=cfg.darcy.cfl)
    theta = RandomStream(cfg.seed).standard_normal(n_kl)
    realization = darcy.realize_log_perm(context.basis, theta, mean_field, hyper.sigma_a)
    p = darcy.solve_pressure(realization.perm)
    vel = darcy.darcy_velocity(realization.perm, p)
    hit = darcy.hitting_time(vel, x0=context.x0, t_cap=cfg.darcy.t_cap, cfl=cfg.darcy.cfl)
    inflow = float(vel.u[0, :].sum() * vel.h)
    outflow = float(vel.u[-1, :].sum() * vel.h)
    print(f"grid             = {grid.n} x {grid.n}, modes = {n_kl} "
          f"(retained energy {context.basis.energy_fraction:.4f})")
    print(f"pressure range   = [{p.min():.6f}, {p.max():.6f}]")
    print(f"mass balance     = inflow {inflow:.8f}, outflow {outflow:.8f}, "
          f"imbalance {abs(inflow - outflow) / abs(inflow):.3e}")
    print(f"hitting time     = {hit.time:.6f} (censored: {hit.censored})")
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "log_perm.csv", realization.log_perm, delimiter=",", fmt="%.17g")
        np.savetxt(out / "pressure.csv", p, delimiter=",", fmt="%.17g")
        print(f"wrote {out / 'log_perm.csv'} and {out / 'pressure.csv'}")
    return 0


def _cmd_sobol_report(args) -> int:
    try:
        surrogate = pce.loads_surrogate(Path(args.surrogate).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read surrogate file {args.surrogate}: {err}") from err
    subsets = []
    if args.subsets:
        for group in args.subsets.split(";"):
            subsets.append(tuple(int(v) for v in group.split(",")))
    report = sobol.sobol_report(surrogate, subsets=subsets)
    labels = [f"xi_{i+1}" for i in range(surrogate.dim)]
    print(f"surrogate mean = {report.mean:.6e}, variance = {report.variance:.6e}")
    _print_index_table(labels, {"first_order": report.first_order,
                                "total": report.total})
    for (kind, dims), value in report.subset_indices.items():
        names = ",".join(str(d) for d in dims)
        print(f"{kind} index of {{{names}}} = {value:.6f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        record = {"mean": report.mean, "variance": report.variance,
                  "first_order": report.first_order.tolist(),
                  "total": report.total.tolist(),
                  "subset_indices": {f"{kind}:{','.join(str(d) for d in dims)}": value
                                     for (kind, dims), value in report.subset_indices.items()}}
        (out / "sobol_report.json").write_text(json.dumps(record, indent=1))
        print(f"wrote {out / 'sobol_report.json'}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailsense",
        description="Sensitivity of rare-event probabilities to input-law hyper-parameters")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="closed-form probability and CoV vs threshold")
    _add_common_flags(p)
    p.add_argument("--tau-min", type=float, default=2.0)
    p.add_argument("--tau-max", type=float, default=5.0)
    p.add_argument("--tau-step", type=float, default=0.5)
    p.add_argument("--n-outer", dest="n_outer", type=int, default=10_000,
                   help="hyper-parameter ensemble size for the CoV estimate")
    p.set_defaults(handler=_cmd_exact)

    p = sub.add_parser("ss-estimate", help="one subset-simulation run at the nominal point")
    _add_common_flags(p)
    p.set_defaults(handler=_cmd_ss_estimate)

    p = sub.add_parser("double-loop", help="full sensitivity pipeline with artifacts")
    _add_common_flags(p)
    p.set_defaults(handler=_cmd_double_loop)

    p = sub.add_parser("variability", help="index spread: surrogate vs pick-and-freeze")
    _add_common_flags(p)
    p.add_argument("--n-reps", dest="n_reps", type=int, default=100)
    p.set_defaults(handler=_cmd_variability)

    p = sub.add_parser("budget-sweep", help="mean total indices over budget grids")
    _add_common_flags(p)
    p.add_argument("--n-ss-grid", dest="n_ss_grid", default="100,500,1000")
    p.add_argument("--n-samp-grid", dest="n_samp_grid", default="100,1000")
    p.add_argument("--n-reps", dest="n_reps", type=int, default=20)
    p.set_defaults(handler=_cmd_budget_sweep)

    p = sub.add_parser("darcy-demo", help="dump one field/pressure realization")
    _add_common_flags(p)
    p.set_defaults(handler=_cmd_darcy_demo)

    p = sub.add_parser("sobol-report", help="indices of a saved surrogate")
    p.add_argument("--surrogate", required=True, help="path to surrogate.json")
    p.add_argument("--subsets", help="semicolon-separated dimension groups, e.g. '0,1;0,2'")
    p.add_argument("--out", help="output directory")
    p.set_defaults(handler=_cmd_sobol_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        # argparse exits with 2 on bad flags already; normalize other codes
        return 0 if err.code in (0, None) else 2
    try:
        return args.handler(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except RuntimeError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
