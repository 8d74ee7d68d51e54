"""Experiment orchestration: the double loop (outer hyper-parameter design,
inner rare-event estimate, surrogate fit, Sobol' report), the estimator
variability study, the budget sweep, configuration handling, and artifact
persistence.

Randomness discipline: one root stream per experiment, with a fixed
substream layout (0 = outer design, 1..n_samp = one per outer sample,
n_samp+1 = cross-validation).  Each outer sample is fully determined by its
own substream, so parallel execution reproduces the serial run exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import analytic, darcy, pce, sobol
from ._version import __version__
from .mc import saltelli_sobol
from .sampling import RandomStream, UniformBox, lhs_sample
from .subset import DegenerateLevelError, SSConfig, run_subset_simulation

__all__ = [
    "ConfigError",
    "SSSettings",
    "PCESettings",
    "AnalyticSettings",
    "DarcySettings",
    "ExperimentConfig",
    "RunArtifacts",
    "VariabilityReport",
    "BudgetSweepResult",
    "load_config_file",
    "config_from_options",
    "run_double_loop",
    "variability_study",
    "budget_sweep",
    "write_artifacts",
    "read_artifacts",
]


class ConfigError(ValueError):
    """Malformed configuration file, key, or value."""


# --------------------------------------------------------------------------
# Configuration

@dataclass(frozen=True)
class SSSettings:
    n_per_level: int = 1000
    p0: float = 0.1
    max_levels: int = 20
    proposal_spread: float = 1.0


@dataclass(frozen=True)
class PCESettings:
    order: int = 3
    lam: float = 5e-2
    cv_folds: int | None = None      # set to cross-validate lam instead
    cv_grid: tuple[float, ...] | None = None


@dataclass(frozen=True)
class AnalyticSettings:
    means: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    variances: tuple[float, ...] = (10.0, 8.0, 6.0, 4.0, 2.0)


@dataclass(frozen=True)
class DarcySettings:
    grid_n: int = 25
    ell_x: float = 0.4
    ell_y: float = 0.4
    sigma_a: float = 0.8
    t_cap: float = 100.0
    cfl: float = 0.1
    energy: float = 0.90
    n_kl: int | None = None          # None: size for the box automatically
    mean_field: str | None = None    # path to a grid file; None means zero


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "analytic"
    tau_bar: float = 3.0
    n_samp: int = 1000
    perturbation: float = 0.1
    seed: int = 0
    threads: int = 1
    out_dir: str | None = None
    ss: SSSettings = field(default_factory=SSSettings)
    pce: PCESettings = field(default_factory=PCESettings)
    analytic: AnalyticSettings = field(default_factory=AnalyticSettings)
    darcy: DarcySettings = field(default_factory=DarcySettings)

    def __post_init__(self):
        if self.model not in ("analytic", "darcy"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.n_samp < 1:
            raise ConfigError("n_samp must be positive")
        if not 0.0 < self.perturbation < 1.0:
            raise ConfigError("perturbation must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be positive")


def _convert_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert_float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


_OPTION_TYPES = {
    "model": str,
    "tau_bar": float,
    "n_samp": int,
    "perturbation": float,
    "seed": int,
    "threads": int,
    "out_dir": str,
    "ss.n_per_level": int,
    "ss.p0": float,
    "ss.max_levels": int,
    "ss.proposal_spread": float,
    "pce.order": int,
    "pce.lam": float,
    "pce.cv_folds": int,
    "pce.cv_grid": _convert_float_tuple,
    "analytic.means": _convert_float_tuple,
    "analytic.variances": _convert_float_tuple,
    "darcy.grid_n": int,
    "darcy.ell_x": float,
    "darcy.ell_y": float,
    "darcy.sigma_a": float,
    "darcy.t_cap": float,
    "darcy.cfl": float,
    "darcy.energy": float,
    "darcy.n_kl": int,
    "darcy.mean_field": str,
}


def load_config_file(path) -> dict[str, str]:
    """Parse a flat dotted-key config file: `key = value` lines, # comments."""
    options: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        options[key] = value
    return options


def config_from_options(options: dict) -> ExperimentConfig:
    """Build a typed ExperimentConfig from dotted string options.

    Values may already be typed (e.g. when merged from command-line flags);
    strings are coerced per key.  Unknown keys are an error.
    """
    sections: dict[str, dict] = {"": {}, "ss": {}, "pce": {}, "analytic": {}, "darcy": {}}
    for key, value in options.items():
        if value is None:
            continue
        if key not in _OPTION_TYPES:
            raise ConfigError(f"unknown configuration key {key!r}")
        conv = _OPTION_TYPES[key]
        if isinstance(value, str) and conv is not str:
            try:
                value = conv(value)
            except ValueError as err:
                raise ConfigError(f"bad value for {key}: {value!r} ({err})") from err
        section, _, name = key.rpartition(".")
        sections[section][name] = value
    try:
        return ExperimentConfig(
            ss=SSSettings(**sections["ss"]),
            pce=PCESettings(**sections["pce"]),
            analytic=AnalyticSettings(**sections["analytic"]),
            darcy=DarcySettings(**sections["darcy"]),
            **sections[""],
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


# --------------------------------------------------------------------------
# Model adapters

@dataclass(frozen=True)
class _ModelAdapter:
    """Uniform view of a model for the outer loop.

    qoi_for_xi maps one hyper-parameter row to a batched QoI over standard
    normal coordinates; exact_p (when the model admits one) maps a matrix of
    hyper-parameter rows straight to exceedance probabilities.
    """

    box: UniformBox
    input_dim: int
    labels: tuple[str, ...]
    qoi_for_xi: object
    exact_p: object | None = None


def _build_adapter(cfg: ExperimentConfig) -> _ModelAdapter:
    if cfg.model == "analytic":
        nominal = analytic.AnalyticHyper(np.array(cfg.analytic.means),
                                         np.array(cfg.analytic.variances))
        box = analytic.hyper_box(nominal, cfg.perturbation)
        d = nominal.d
        labels = tuple(f"mu_{i+1}" for i in range(d)) + tuple(f"var_{i+1}" for i in range(d))

        def qoi_for_xi(xi_row):
            return analytic.standard_space_qoi(analytic.hyper_from_xi(xi_row))

        def exact_p(xi_matrix):
            return analytic.probability_from_xi(xi_matrix, cfg.tau_bar)

        return _ModelAdapter(box=box, input_dim=d, labels=labels,
                             qoi_for_xi=qoi_for_xi, exact_p=exact_p)

    grid = darcy.Grid(cfg.darcy.grid_n)
    nominal = darcy.DarcyHyper(cfg.darcy.ell_x, cfg.darcy.ell_y, cfg.darcy.sigma_a)
    xi_nom = nominal.xi
    box = UniformBox(xi_nom * (1.0 - cfg.perturbation), xi_nom * (1.0 + cfg.perturbation))
    n_kl = cfg.darcy.n_kl
    if n_kl is None:
        n_kl = darcy.mode_count_for_box(grid.n, nominal.ell_x, nominal.ell_y,
                                        energy=cfg.darcy.energy,
                                        box_fraction=cfg.perturbation)
    mean_field = None
    if cfg.darcy.mean_field is not None:
        mean_field = darcy.load_mean_field(cfg.darcy.mean_field)

    def qoi_for_xi(xi_row):
        hyper = darcy.DarcyHyper(*xi_row)
        context = darcy.build_context(hyper, grid, n_kl=n_kl, mean_field=mean_field,
                                      t_cap=cfg.darcy.t_cap, cfl=cfg.darcy.cfl)

        def qoi(thetas):
            return darcy.qoi_darcy_batch(thetas, hyper, context)

        return qoi

    return _ModelAdapter(box=box, input_dim=int(n_kl),
                         labels=("ell_x", "ell_y", "sigma_a"),
                         qoi_for_xi=qoi_for_xi, exact_p=None)


# --------------------------------------------------------------------------
# The double loop

@dataclass(eq=False)
class RunArtifacts:
    config: ExperimentConfig
    labels: tuple[str, ...]
    xi_samples: np.ndarray          # (n_samp, M) outer design, all rows
    included: np.ndarray            # bool (n_samp,), rows used in the fit
    p_hats: np.ndarray              # (n_included,) in included-row order
    n_levels: np.ndarray            # (n_samp,)
    n_evals: np.ndarray             # (n_samp,) instrumented QoI rows per sample
    terminated_early: np.ndarray    # bool (n_samp,)
    degenerate: np.ndarray          # bool (n_samp,)
    surrogate: pce.PCESurrogate
    sobol: sobol.SobolReport
    total_evals: int
    lam_used: float


def _counted(qoi):
    counter = {"rows": 0}

    def wrapped(thetas):
        counter["rows"] += int(np.asarray(thetas).shape[0])
        return qoi(thetas)

    return wrapped, counter


def _ss_one_sample(adapter: _ModelAdapter, xi_row, ss_cfg: SSConfig, stream: RandomStream):
    """(p_hat, n_levels, n_evals, terminated_early, degenerate) for one row."""
    qoi, counter = _counted(adapter.qoi_for_xi(xi_row))
    try:
        res = run_subset_simulation(qoi, adapter.input_dim, ss_cfg, stream)
    except DegenerateLevelError:
        return math.nan, 0, counter["rows"], False, True
    return res.p_hat, res.n_levels, counter["rows"], res.terminated_early, False


def _fit_surrogate(cfg: ExperimentConfig, box: UniformBox, xi, y, cv_stream: RandomStream):
    basis = pce.total_order_basis(box.dim, cfg.pce.order)
    A = pce.design_matrix(xi, basis, box, "legendre")
    lam = cfg.pce.lam
    if cfg.pce.cv_folds is not None:
        lam, _ = pce.cross_validate_lambda(A, y, cv_stream, k=cfg.pce.cv_folds,
                                           grid=cfg.pce.cv_grid)
    beta = pce.fit_sparse(A, y, lam)
    surrogate = pce.PCESurrogate(box=box, basis=tuple(basis), coeffs=beta,
                                 family=("legendre",) * box.dim)
    return surrogate, lam


def run_double_loop(cfg: ExperimentConfig) -> RunArtifacts:
    """Outer LHS design -> per-sample subset simulation -> sparse PCE ->
    closed-form Sobol' report.

    Samples whose inner estimator degenerates (no strict threshold gap) or
    exhausts its level budget are excluded from the fit; more than 10%
    exclusions abort the run.  Artifacts are persisted when cfg.out_dir is
    set.
    """
    adapter = _build_adapter(cfg)
    root = RandomStream(cfg.seed)
    xi = lhs_sample(adapter.box, cfg.n_samp, root.substream(0))
    ss_cfg = SSConfig(tau_bar=cfg.tau_bar, n_per_level=cfg.ss.n_per_level,
                      p0=cfg.ss.p0, max_levels=cfg.ss.max_levels,
                      proposal_spread=cfg.ss.proposal_spread)
    tasks = ((xi[j], root.substream(j + 1)) for j in range(cfg.n_samp))
    if cfg.threads > 1:
        records = Parallel(n_jobs=cfg.threads, prefer="threads")(
            delayed(_ss_one_sample)(adapter, row, ss_cfg, s) for row, s in tasks)
    else:
        records = [_ss_one_sample(adapter, row, ss_cfg, s) for row, s in tasks]

    p_all = np.array([r[0] for r in records])
    n_levels = np.array([r[1] for r in records], dtype=int)
    n_evals = np.array([r[2] for r in records], dtype=int)
    terminated = np.array([r[3] for r in records], dtype=bool)
    degenerate = np.array([r[4] for r in records], dtype=bool)
    included = ~(terminated | degenerate)
    n_excluded = int(np.count_nonzero(~included))
    if n_excluded > 0.10 * cfg.n_samp:
        raise RuntimeError(
            f"{n_excluded}/{cfg.n_samp} outer samples failed their inner estimate "
            "(degenerate or early-terminated); run aborted at the 10% ceiling")
    if int(np.count_nonzero(included)) < 2:
        raise RuntimeError("fewer than two usable outer samples: surrogate fit is underdetermined")

    surrogate, lam = _fit_surrogate(cfg, adapter.box, xi[included], p_all[included],
                                    root.substream(cfg.n_samp + 1))
    report = sobol.sobol_report(surrogate)
    artifacts = RunArtifacts(config=cfg, labels=adapter.labels, xi_samples=xi,
                             included=included, p_hats=p_all[included],
                             n_levels=n_levels, n_evals=n_evals,
                             terminated_early=terminated, degenerate=degenerate,
                             surrogate=surrogate, sobol=report,
                             total_evals=int(n_evals.sum()), lam_used=float(lam))
    if cfg.out_dir is not None:
        write_artifacts(artifacts, cfg.out_dir)
    return artifacts


# --------------------------------------------------------------------------
# Estimator variability at matched budget

@dataclass(eq=False)
class VariabilityReport:
    """Per-index spread of the two total-index pipelines over repetitions.

    Both pipelines spend the same outer budget per repetition: n_samp
    probability evaluations for the surrogate route, floor(n_samp / (M+2))
    base samples for pick-and-freeze.
    """

    labels: tuple[str, ...]
    pce_totals: np.ndarray        # (n_reps, M)
    saltelli_totals: np.ndarray   # (n_reps, M)
    budget: int

    @property
    def pce_std(self) -> np.ndarray:
        return self.pce_totals.std(axis=0, ddof=1)

    @property
    def saltelli_std(self) -> np.ndarray:
        return self.saltelli_totals.std(axis=0, ddof=1)

    @property
    def pce_mean(self) -> np.ndarray:
        return self.pce_totals.mean(axis=0)

    @property
    def saltelli_mean(self) -> np.ndarray:
        return self.saltelli_totals.mean(axis=0)


def variability_study(cfg: ExperimentConfig, n_reps: int) -> VariabilityReport:
    """Repeat both index pipelines on noiseless probabilities and collect
    the per-index dispersion.

    Requires a model with a closed-form probability (the point is to compare
    estimator noise, not inner-loop noise).
    """
    if n_reps < 2:
        raise ConfigError("need at least two repetitions for a standard deviation")
    adapter = _build_adapter(cfg)
    if adapter.exact_p is None:
        raise ConfigError("variability study needs a closed-form probability model")
    M = adapter.box.dim
    n_base = cfg.n_samp // (M + 2)
    if n_base < 2:
        raise ConfigError("budget too small for the pick-and-freeze baseline")
    root = RandomStream(cfg.seed)
    pce_totals = np.empty((n_reps, M))
    sal_totals = np.empty((n_reps, M))
    for rep in range(n_reps):
        s_pce = root.substream(2 * rep)
        s_sal = root.substream(2 * rep + 1)
        xi = lhs_sample(adapter.box, cfg.n_samp, s_pce)
        y = adapter.exact_p(xi)
        surrogate, _ = _fit_surrogate(cfg, adapter.box, xi, y, s_pce)
        pce_totals[rep] = sobol.total_indices(surrogate)
        sal_totals[rep] = saltelli_sobol(adapter.exact_p, adapter.box, n_base, s_sal).total
    return VariabilityReport(labels=adapter.labels, pce_totals=pce_totals,
                             saltelli_totals=sal_totals, budget=cfg.n_samp)


# --------------------------------------------------------------------------
# Budget sweep

@dataclass(eq=False)
class BudgetSweepResult:
    """Mean total indices per (inner budget, outer budget) cell.

    mean_totals[(n_ss, n_samp)] averages the fitted total indices over
    n_reps independent repetitions; smaller outer designs are prefixes of
    the largest one within each repetition, so cells differ only by how
    much data the fit sees.
    """

    labels: tuple[str, ...]
    n_ss_grid: tuple[int, ...]
    n_samp_grid: tuple[int, ...]
    n_reps: int
    mean_totals: dict
    excluded: dict


def budget_sweep(cfg: ExperimentConfig, n_ss_grid, n_samp_grid,
                 n_reps: int = 20) -> BudgetSweepResult:
    """Sweep inner and outer sample budgets on a common nested design."""
    n_ss_grid = tuple(int(v) for v in n_ss_grid)
    n_samp_grid = tuple(int(v) for v in n_samp_grid)
    if not n_ss_grid or not n_samp_grid:
        raise ConfigError("both budget grids must be nonempty")
    adapter = _build_adapter(cfg)
    n_max = max(n_samp_grid)
    root = RandomStream(cfg.seed)
    sums = {key: np.zeros(adapter.box.dim)
            for key in ((s, m) for s in n_ss_grid for m in n_samp_grid)}
    excluded = {key: 0 for key in sums}
    for rep in range(n_reps):
        rep_stream = root.substream(rep)
        xi = lhs_sample(adapter.box, n_max, rep_stream.substream(0))
        for s_idx, n_ss in enumerate(n_ss_grid):
            ss_cfg = SSConfig(tau_bar=cfg.tau_bar, n_per_level=n_ss, p0=cfg.ss.p0,
                              max_levels=cfg.ss.max_levels,
                              proposal_spread=cfg.ss.proposal_spread)
            tasks = ((xi[j], rep_stream.substream(1 + s_idx * n_max + j))
                     for j in range(n_max))
            if cfg.threads > 1:
                records = Parallel(n_jobs=cfg.threads, prefer="threads")(
                    delayed(_ss_one_sample)(adapter, row, ss_cfg, s) for row, s in tasks)
            else:
                records = [_ss_one_sample(adapter, row, ss_cfg, s) for row, s in tasks]
            p_all = np.array([r[0] for r in records])
            ok = ~np.array([r[3] or r[4] for r in records], dtype=bool)
            for n_samp in n_samp_grid:
                rows = ok[:n_samp]
                excluded[(n_ss, n_samp)] += int(np.count_nonzero(~rows))
                surrogate, _ = _fit_surrogate(cfg, adapter.box, xi[:n_samp][rows],
                                              p_all[:n_samp][rows],
                                              rep_stream.substream(1 + len(n_ss_grid) * n_max))
                sums[(n_ss, n_samp)] += sobol.total_indices(surrogate)
    means = {key: val / n_reps for key, val in sums.items()}
    return BudgetSweepResult(labels=adapter.labels, n_ss_grid=n_ss_grid,
                             n_samp_grid=n_samp_grid, n_reps=n_reps,
                             mean_totals=means, excluded=excluded)


# --------------------------------------------------------------------------
# Persistence

def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = len(columns[0])
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for r in range(rows):
            fields = []
            for col in columns:
                v = col[r]
                if isinstance(v, (np.bool_, bool)):
                    fields.append(str(int(v)))
                elif isinstance(v, (np.integer, int)):
                    fields.append(str(int(v)))
                else:
                    fields.append(f"{float(v):.17g}")
            fh.write(",".join(fields) + "\n")


def write_artifacts(artifacts: RunArtifacts, out_dir) -> None:
    """Persist a run: CSV tables, surrogate and Sobol' records, manifest.

    Floats are written with 17 significant digits, so reading back
    reproduces every value bit for bit.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    M = artifacts.xi_samples.shape[1]
    _write_csv(out / "xi_samples.csv", list(artifacts.labels),
               [artifacts.xi_samples[:, j] for j in range(M)])
    inc_idx = np.flatnonzero(artifacts.included)
    _write_csv(out / "p_hats.csv", ["sample_index", "p_hat"],
               [inc_idx, artifacts.p_hats])
    _write_csv(out / "ss_diagnostics.csv",
               ["sample_index", "n_levels", "n_evals", "terminated_early",
                "degenerate", "included"],
               [np.arange(artifacts.xi_samples.shape[0]), artifacts.n_levels,
                artifacts.n_evals, artifacts.terminated_early,
                artifacts.degenerate, artifacts.included])
    (out / "surrogate.json").write_text(pce.dumps_surrogate(artifacts.surrogate))
    report = {
        "first_order": artifacts.sobol.first_order.tolist(),
        "total": artifacts.sobol.total.tolist(),
        "mean": artifacts.sobol.mean,
        "variance": artifacts.sobol.variance,
    }
    (out / "sobol.json").write_text(json.dumps(report, indent=1))
    manifest = {
        "format": "tailsense-run",
        "version": __version__,
        "seed": artifacts.config.seed,
        "model": artifacts.config.model,
        "labels": list(artifacts.labels),
        "n_samp": int(artifacts.xi_samples.shape[0]),
        "n_included": int(np.count_nonzero(artifacts.included)),
        "total_evals": artifacts.total_evals,
        "lam_used": artifacts.lam_used,
        "config": asdict(artifacts.config),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))


def _read_csv(path: Path):
    try:
        text = path.read_text()
    except OSError as err:
        raise IOError(f"missing or unreadable artifact file {path}: {err}") from err
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    data = [line.split(",") for line in lines[1:]]
    cols = list(zip(*data)) if data else [[] for _ in header]
    return header, [np.array([float(v) for v in col]) for col in cols]


def read_artifacts(run_dir) -> RunArtifacts:
    """Rebuild RunArtifacts from a directory written by write_artifacts."""
    run = Path(run_dir)
    try:
        manifest = json.loads((run / "manifest.json").read_text())
    except OSError as err:
        raise IOError(f"missing manifest in {run}: {err}") from err
    if manifest.get("format") != "tailsense-run":
        raise IOError(f"{run} does not look like a run directory")
    raw_cfg = manifest["config"]
    cfg = ExperimentConfig(
        ss=SSSettings(**raw_cfg.pop("ss")),
        pce=PCESettings(**{k: (tuple(v) if isinstance(v, list) else v)
                           for k, v in raw_cfg.pop("pce").items()}),
        analytic=AnalyticSettings(**{k: tuple(v) for k, v in raw_cfg.pop("analytic").items()}),
        darcy=DarcySettings(**raw_cfg.pop("darcy")),
        **raw_cfg,
    )
    _, xi_cols = _read_csv(run / "xi_samples.csv")
    xi = np.column_stack(xi_cols)
    _, p_cols = _read_csv(run / "p_hats.csv")
    _, diag_cols = _read_csv(run / "ss_diagnostics.csv")
    surrogate = pce.loads_surrogate((run / "surrogate.json").read_text())
    report_raw = json.loads((run / "sobol.json").read_text())
    report = sobol.SobolReport(first_order=np.array(report_raw["first_order"]),
                               total=np.array(report_raw["total"]),
                               mean=report_raw["mean"],
                               variance=report_raw["variance"])
    return RunArtifacts(config=cfg, labels=tuple(manifest["labels"]),
                        xi_samples=xi,
                        included=diag_cols[5].astype(bool),
                        p_hats=p_cols[1],
                        n_levels=diag_cols[1].astype(int),
                        n_evals=diag_cols[2].astype(int),
                        terminated_early=diag_cols[3].astype(bool),
                        degenerate=diag_cols[4].astype(bool),
                        surrogate=surrogate, sobol=report,
                        total_evals=int(manifest["total_evals"]),
                        lam_used=float(manifest["lam_used"]))
