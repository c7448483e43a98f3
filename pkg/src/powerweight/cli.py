"""Command-line front end.

Subcommands write plain CSV (time-indexed tables) and JSON (summaries) into
an output directory. Every file carries provenance: a hash of the run
configuration, the seed and the package version. Wall-clock timings go to a
separate ``timings.json`` so the other files are byte-identical across runs
with the same configuration.

Exit codes: 0 success, 1 invalid input or configuration, 2 computation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import __version__
from . import backtest as bt
from .bma import available_models, enumerate_models, model_weight_paths
from .data import IngestError, ingest
from .experiments import run_capm_study, run_stationary_study
from .hier import GibbsConfig, estimate_alphas_plugin, estimate_alphas_separate, fit_predict_terminal, plugin_terminal
from .normal import DegenerateError
from .synthetic import PRESETS, StationaryMeanConfig, dump_panel_csv, gen_hier_capm, replication_rngs

BACKTEST_METHODS = ("stationary", "window", "sep-pwd", "hier-pwd", "stationary-hier", "ss-lr", "pwd-bma", "stat-bma")
FIT_METHODS = ("sep-pwd", "hier-pwd", "stationary-hier", "stationary")
SCALES = {"none": 1.0, "percent-to-decimal": 0.01, "decimal-to-percent": 100.0}


class ValidationError(ValueError):
    """Bad command-line arguments or configuration."""


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated settings shared by the subcommands."""

    command: str
    seed: int = 0
    data: Optional[str] = None
    factors: tuple = ("MKT",)
    portfolios: Optional[tuple] = None
    rf: Optional[str] = None
    excess: bool = False
    scale: str = "none"
    start_date: Optional[int] = None
    end_date: Optional[int] = None
    intercept: bool = True
    methods: tuple = ()
    benchmark: str = "stationary"
    window: int = 60
    grid_lo: float = 0.5
    grid_hi: float = 1.0
    grid_size: int = 100
    iterations: int = 500
    burn_in: int = 100
    refit_every: int = 1
    bma_refresh: int = 12
    start_index: Optional[int] = None
    setting: str = "stationary"
    reps: int = 100
    target: Optional[str] = None
    dump_panels: int = 0

    def __post_init__(self):
        if not 0.0 < self.grid_lo <= self.grid_hi <= 1.0:
            raise ValidationError("alpha grid must satisfy 0 < lo <= hi <= 1")
        if self.grid_size < 1:
            raise ValidationError("grid size must be positive")
        if self.burn_in >= self.iterations or self.burn_in < 0:
            raise ValidationError("burn-in must be nonnegative and below the iteration count")
        if self.window < 2:
            raise ValidationError("window must be at least 2")
        if self.refit_every < 1 or self.bma_refresh < 1:
            raise ValidationError("refit cadences must be positive")
        if self.scale not in SCALES:
            raise ValidationError(f"scale must be one of {sorted(SCALES)}")
        if self.reps < 1:
            raise ValidationError("reps must be positive")
        if self.target not in (None, "signal", "observed"):
            raise ValidationError("target must be 'signal' or 'observed'")
        if self.setting not in ("stationary",) + tuple(PRESETS):
            raise ValidationError(f"unknown setting {self.setting!r}")
        for m in self.methods:
            allowed = FIT_METHODS if self.command == "fit" else BACKTEST_METHODS
            if m not in allowed:
                raise ValidationError(f"unknown method {m!r}; choose from {', '.join(allowed)}")
        if self.command == "backtest" and self.benchmark not in self.methods:
            raise ValidationError(f"benchmark {self.benchmark!r} must be one of the methods")

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise ValidationError(f"unknown configuration keys: {', '.join(unknown)}")
        clean = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
        return cls(**clean)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_lo, self.grid_hi, self.grid_size)

    @property
    def gibbs(self) -> GibbsConfig:
        return GibbsConfig(iterations=self.iterations, burn_in=self.burn_in, seed=self.seed)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# output helpers


class Writer:
    def __init__(self, out: Path, cfg: RunConfig):
        self.out = out
        self.cfg = cfg
        out.mkdir(parents=True, exist_ok=True)
        self.files = []

    @property
    def provenance(self) -> dict:
        return {"config_hash": self.cfg.digest(), "seed": self.cfg.seed, "version": __version__}

    def csv(self, name: str, frame: pd.DataFrame, index: bool = True) -> None:
        path = self.out / name
        prov = self.provenance
        with path.open("w", newline="") as fh:
            fh.write(f"# config_hash={prov['config_hash']} seed={prov['seed']} version={prov['version']}\n")
            frame.to_csv(fh, index=index, float_format="%.10g")
        self.files.append(name)

    def json(self, name: str, payload: dict, provenance: bool = True) -> None:
        body = {"provenance": self.provenance, **payload} if provenance else payload
        (self.out / name).write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n")
        self.files.append(name)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _frame_records(frame: pd.DataFrame) -> dict:
    return {str(i): {k: v for k, v in row.items()} for i, row in frame.iterrows()}


# ---------------------------------------------------------------------------
# subcommands


def _load_panel(cfg: RunConfig, intercept: bool):
    if not cfg.data:
        raise ValidationError("--data is required")
    return ingest(
        cfg.data,
        factors=cfg.factors,
        portfolios=cfg.portfolios,
        rf=cfg.rf,
        excess=cfg.excess,
        scale=SCALES[cfg.scale],
        start=cfg.start_date,
        end=cfg.end_date,
        intercept=intercept,
    )


def cmd_simulate(cfg: RunConfig, w: Writer) -> None:
    if cfg.setting == "stationary":
        scfg = StationaryMeanConfig(replications=cfg.reps, seed=cfg.seed)
        res = run_stationary_study(scfg, target=cfg.target or "signal")
        table = res.summary()
        extra = {"median_alpha_star": float(np.median(res.extra["alpha_star"]))}
    else:
        hcfg = dataclasses.replace(PRESETS[cfg.setting], replications=cfg.reps, seed=cfg.seed)
        res = run_capm_study(hcfg, target=cfg.target or "observed", gibbs=cfg.gibbs, grid=cfg.grid)
        table = res.summary(scale=1e4)
        other = "signal" if res.target == "observed" else "observed"
        alt = dataclasses.replace(res, sq_error=res.extra[f"sq_error_{other}"], target=other)
        alt.rmse = {m: np.sqrt(e) for m, e in alt.sq_error.items()}
        extra = {"mse_scale": 1e4, f"table_{other}": _frame_records(alt.summary(scale=1e4).drop(columns="ms_per_rep"))}
        for i, rng in enumerate(replication_rngs(cfg.seed, min(cfg.dump_panels, cfg.reps))):
            sim = gen_hier_capm(hcfg, rng)
            path = w.out / f"panel_{i:04d}.csv"
            prov = w.provenance
            dump_panel_csv(sim.panel, path, header_lines=[f"config_hash={prov['config_hash']} seed={cfg.seed} "
                                                          f"version={prov['version']} replication={i}"])
            w.files.append(path.name)
    timings = table["ms_per_rep"].to_dict()
    table = table.drop(columns="ms_per_rep")
    reps = pd.DataFrame({m: res.rmse[m] for m in res.methods})
    reps.index.name = "replication"
    w.csv("replications.csv", reps)
    w.json(
        "summary.json",
        {
            "command": "simulate",
            "setting": cfg.setting,
            "replications": cfg.reps,
            "target": res.target,
            "reference": res.reference,
            "table": _frame_records(table),
            **extra,
        },
    )
    w.json("timings.json", {"ms_per_replication": timings}, provenance=False)


def cmd_fit(cfg: RunConfig, w: Writer) -> None:
    panel = _load_panel(cfg, cfg.intercept)
    method = cfg.methods[0] if cfg.methods else "hier-pwd"
    gibbs = cfg.gibbs
    if method == "hier-pwd":
        res = estimate_alphas_plugin(panel, cfg.grid, gibbs)
        alphas, converged = res.alphas, res.converged
    elif method == "sep-pwd":
        alphas = np.array([e.alpha_star for e in estimate_alphas_separate(panel, cfg.grid)])
        converged = True
    else:
        alphas, converged = np.ones(panel.J), True
    if method in ("sep-pwd", "stationary"):
        fits = [plugin_terminal(panel.X[j], panel.y[j], float(alphas[j])) for j in range(panel.J)]
        beta = np.stack([f[0] for f in fits])
        sd = np.stack([np.sqrt(np.diag(f[1])) for f in fits])
        global_part = {}
    else:
        fit = fit_predict_terminal(panel, alphas, gibbs)
        beta, sd = fit.beta_mean, fit.beta_sd
        global_part = {
            "beta0_mean": dict(zip(panel.covariates, fit.beta0_mean)),
            "beta0_sd": dict(zip(panel.covariates, fit.beta0_sd)),
            "tau2_mean": dict(zip(panel.covariates, fit.tau2_mean)),
        }
    table = pd.DataFrame({"alpha_star": alphas}, index=pd.Index(panel.groups, name="group"))
    for k, c in enumerate(panel.covariates):
        table[f"beta_{c}"] = beta[:, k]
        table[f"sd_{c}"] = sd[:, k]
    w.csv("fit.csv", table)
    w.json(
        "summary.json",
        {"command": "fit", "method": method, "converged": bool(converged), "T": panel.T, "J": panel.J,
         "groups": _frame_records(table), **global_part},
    )


def _build_methods(cfg: RunConfig, factors):
    table = {
        "stationary": lambda: bt.Stationary(),
        "window": lambda: bt.Window(cfg.window),
        "sep-pwd": lambda: bt.SepPWD(cfg.grid, cfg.refit_every),
        "hier-pwd": lambda: bt.HierPWD(cfg.grid, cfg.gibbs, cfg.refit_every),
        "stationary-hier": lambda: bt.HierPWD(cfg.grid, cfg.gibbs, cfg.refit_every, fixed_alpha=1.0),
        "ss-lr": lambda: bt.StateSpaceLR(cfg.refit_every),
        "pwd-bma": lambda: bt.PWDBMA(factors, cfg.grid, cfg.bma_refresh),
        "stat-bma": lambda: bt.PWDBMA(factors, [1.0], cfg.bma_refresh, name="Stat-BMA"),
    }
    return {m: table[m]() for m in cfg.methods}


def cmd_backtest(cfg: RunConfig, w: Writer) -> None:
    panel = _load_panel(cfg, cfg.intercept)
    factors = [c for c in panel.covariates if c != "const"]
    methods = _build_methods(cfg, factors)
    need = max(m.min_history(panel.p) for m in methods.values())
    start = need - 1 if cfg.start_index is None else cfg.start_index
    if start + 1 < need:
        raise ValidationError(f"start index {start} leaves fewer than {need} rows of history")
    if start >= panel.T - 1:
        raise ValidationError("start index leaves nothing to predict")
    bench = methods[cfg.benchmark].name
    report = bt.run_backtest(panel, list(methods.values()), start, bt.BacktestConfig(benchmark=bench))
    w.csv("delta_sspe.csv", report.delta_frame())
    rows = []
    for m in report.methods:
        for j, g in enumerate(report.groups):
            rows.append(pd.DataFrame({"date": report.dates, "method": m, "group": g,
                                      "actual": report.actual[j], "prediction": report.predictions[m][j]}))
    preds = pd.concat(rows, ignore_index=True)
    preds["spe"] = (preds["actual"] - preds["prediction"]) ** 2
    w.csv("predictions.csv", preds, index=False)
    for m, arr in report.alpha.items():
        frame = pd.DataFrame(arr.T, index=pd.Index(report.dates, name="date"), columns=list(report.groups))
        w.csv(f"alpha_{_slug(m)}.csv", frame)
    for m, arr in report.beta.items():
        parts = {f"{g}:{c}": arr[j, :, k] for j, g in enumerate(report.groups) for k, c in enumerate(report.covariates)}
        w.csv(f"beta_{_slug(m)}.csv", pd.DataFrame(parts, index=pd.Index(report.dates, name="date")))
    for m, arr in report.inclusion.items():
        fac = report.inclusion_factors[m]
        parts = {f"{g}:{f}": arr[j, :, k] for j, g in enumerate(report.groups) for k, f in enumerate(fac)}
        w.csv(f"inclusion_{_slug(m)}.csv", pd.DataFrame(parts, index=pd.Index(report.dates, name="date")))
    summary = report.summary()
    w.json(
        "summary.json",
        {
            "command": "backtest",
            "benchmark": bench,
            "start_date": int(report.dates[0]),
            "steps": int(report.times.size),
            "valid_steps": int(report.valid.sum()),
            "failures": report.failures,
            "methods": _frame_records(summary),
        },
    )
    w.json("timings.json", {"seconds": report.timings}, provenance=False)


def cmd_bma(cfg: RunConfig, w: Writer) -> None:
    panel = _load_panel(cfg, intercept=False)
    models = available_models(enumerate_models(cfg.factors), panel.covariates)
    paths = model_weight_paths(panel, models, cfg.grid, cfg.bma_refresh)
    rows = []
    for j, g in enumerate(panel.groups):
        frame = pd.DataFrame(paths.probs[j].T, columns=[m.name for m in models])
        frame.insert(0, "group", g)
        frame.insert(0, "date", panel.dates)
        rows.append(frame)
    w.csv("model_probs.csv", pd.concat(rows, ignore_index=True), index=False)
    inc = {}
    for f in cfg.factors:
        if any(f in m for m in models):
            traj = paths.inclusion(f)
            for j, g in enumerate(panel.groups):
                inc[f"{g}:{f}"] = traj[j]
            inc[f"mean:{f}"] = traj.mean(axis=0)
    w.csv("inclusion.csv", pd.DataFrame(inc, index=pd.Index(panel.dates, name="date")))
    final = {f: float(v[-1]) for f, v in inc.items() if f.startswith("mean:")}
    w.json("summary.json", {"command": "bma", "models": [m.name for m in models], "final_inclusion": final})


def cmd_report(runs, out: Path) -> dict:
    index = {}
    for run in runs:
        run = Path(run)
        summ = run / "summary.json"
        if not summ.exists():
            raise ValidationError(f"no summary.json in {run}")
        body = json.loads(summ.read_text())
        files = sorted(p.name for p in run.iterdir() if p.is_file())
        index[run.name] = {"summary": body, "files": files}
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"version": __version__, "runs": index}, indent=2, sort_keys=True) + "\n")
    return index


def _slug(name: str) -> str:
    return name.lower().replace(" ", "_")


# ---------------------------------------------------------------------------
# argument parsing


def _csv_list(text: str) -> tuple:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON file with run settings; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="panel CSV (relative paths also resolved under $POWERWEIGHT_DATA_DIR)")
    p.add_argument("--factors", type=_csv_list, help="comma-separated factor columns")
    p.add_argument("--portfolios", type=_csv_list, help="comma-separated portfolio columns (default: all others)")
    p.add_argument("--rf", help="risk-free column")
    p.add_argument("--excess", action="store_true", default=None, help="subtract the risk-free column")
    p.add_argument("--scale", choices=sorted(SCALES))
    p.add_argument("--start-date", type=int, help="first YYYYMM row to use")
    p.add_argument("--end-date", type=int, help="last YYYYMM row to use")
    p.add_argument("--no-intercept", dest="intercept", action="store_false", default=None)


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-lo", type=float)
    p.add_argument("--grid-hi", type=float)
    p.add_argument("--grid-size", type=int)
    p.add_argument("--iterations", type=int, help="Gibbs iterations")
    p.add_argument("--burn-in", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="powerweight", description="Power-weighted forecasting and backtests.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation study")
    _common(p)
    _model_args(p)
    p.add_argument("--setting", choices=("stationary",) + tuple(PRESETS))
    p.add_argument("--reps", type=int)
    p.add_argument("--target", choices=("signal", "observed"))
    p.add_argument("--dump-panels", type=int, help="write the first N generated panels as CSV")

    p = sub.add_parser("fit", help="fit terminal coefficients and decays")
    _common(p)
    _data_args(p)
    _model_args(p)
    p.add_argument("--method", dest="methods", type=lambda s: (s,), help=", ".join(FIT_METHODS))

    p = sub.add_parser("backtest", help="rolling one-step-ahead evaluation")
    _common(p)
    _data_args(p)
    _model_args(p)
    p.add_argument("--methods", type=_csv_list, help=", ".join(BACKTEST_METHODS))
    p.add_argument("--benchmark")
    p.add_argument("--window", type=int)
    p.add_argument("--refit-every", type=int)
    p.add_argument("--bma-refresh", type=int)
    p.add_argument("--start-index", type=int, help="index of the last training row at the first step")

    p = sub.add_parser("bma", help="model weights and inclusion probabilities over time")
    _common(p)
    _data_args(p)
    _model_args(p)
    p.add_argument("--bma-refresh", type=int)

    p = sub.add_parser("report", help="index several run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", default="report.json")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise ValidationError("config file must hold a JSON object")
    skip = {"command", "out", "config", "verbose"}
    for key, val in vars(args).items():
        if key in skip or val is None:
            continue
        values[key] = val
    values["command"] = args.command
    if args.command == "backtest":
        values.setdefault("methods", ("stationary", "sep-pwd"))
    if args.command == "bma":
        values.setdefault("factors", ("MKT", "SMB", "HML", "MOM"))
    return RunConfig.from_mapping(values)


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            cmd_report(args.runs, Path(args.out))
            return 0
        cfg = config_from_args(args)
        writer = Writer(Path(args.out), cfg)
        {"simulate": cmd_simulate, "fit": cmd_fit, "backtest": cmd_backtest, "bma": cmd_bma}[args.command](cfg, writer)
    except (ValidationError, IngestError, TypeError) as exc:
        return _fail(1, exc)
    except (DegenerateError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        return _fail(2, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
