"""Command-line entry point: simulate, synthesize, season, fit, report."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import shutil
import sys
import warnings
from pathlib import Path

import numpy as np

from . import plotting
from .config import RunConfig, load_config
from .data import (SeasonWindow, extract_season, historical_mean, historical_weekly_mean,
                   load_series, season_to_series, synthesize_dataset, write_series)
from .errors import ConfigError, NonConvergenceWarning, ParseError, TwoPathogenError
from .inference import PosteriorSample, fit_report, histogram_table, run_chains
from .model import COMPARTMENTS, crossover_times, integrate, replacement_numbers
from .observation import THETA_NAMES, LogPosterior, initial_state
from .stochastic import gillespie_on_grid

log = logging.getLogger("twopathogen")

DRAW_COLUMNS = ("chain",) + THETA_NAMES + ("log_post",)


# ---------------------------------------------------------------------------
# output helpers


def make_run_dir(base, seed: int) -> Path:
    """``base/run-<UTC timestamp>-<seed>``, suffixed when the name is taken."""
    base = Path(base)
    base.mkdir(parents=True, exist_ok=True)
    stamp = dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
    path = base / f"run-{stamp}-{seed}"
    k = 1
    while path.exists():
        path = base / f"run-{stamp}-{seed}-{k}"
        k += 1
    path.mkdir()
    return path


def write_csv(path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return Path(path)


def write_json(path, obj) -> Path:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return Path(path)


def save_config(cfg: RunConfig, run_dir: Path) -> None:
    if cfg.source:
        shutil.copyfile(cfg.source, run_dir / "config.toml")
    (run_dir / "effective_config.json").write_text(cfg.dumps(), encoding="utf-8")


def write_draws(sample: PosteriorSample, path) -> Path:
    rows = ([int(c)] + list(d) + [lp]
            for c, d, lp in zip(sample.chain, sample.draws, sample.log_post))
    return write_csv(path, DRAW_COLUMNS, rows)


def read_draws(path) -> PosteriorSample:
    """Parse a draws table written by :func:`write_draws`."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read draws {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != DRAW_COLUMNS:
            raise ParseError(f"{path}: expected header {','.join(DRAW_COLUMNS)}", line=1)
        chain, draws, lps = [], [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(DRAW_COLUMNS):
                raise ParseError(f"{path}: expected {len(DRAW_COLUMNS)} fields", line=line)
            try:
                chain.append(int(row[0]))
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", line=line) from exc
            if not all(np.isfinite(values)) or min(values[:-1]) <= 0:
                raise ParseError(f"{path}: draw outside the support", line=line)
            draws.append(values[:-1])
            lps.append(values[-1])
    if not draws:
        raise ParseError(f"{path}: no draws")
    return PosteriorSample(np.array(draws), np.array(lps), chain=np.array(chain))


def _trajectory_rows(times, states):
    return ([t] + list(s) for t, s in zip(times, states))


def write_report_artifacts(report, sample: PosteriorSample, run_dir: Path) -> dict:
    """Report JSON, histogram tables, per-day tables and figures."""
    d = report.to_dict()
    write_json(run_dir / "report.json", d)
    hists = {n: histogram_table(sample.draws[:, j]) for j, n in enumerate(THETA_NAMES)}
    write_csv(run_dir / "histograms.csv", ("parameter", "lo", "hi", "count"),
              ([n, b["lo"], b["hi"], b["count"]] for n in THETA_NAMES for b in hists[n]))
    write_csv(run_dir / "trajectory.csv", ("t_days",) + tuple(f"x_{c}" for c in COMPARTMENTS),
              _trajectory_rows(report.times, report.map_states))
    write_csv(run_dir / "replacement.csv", ("t_days", "r1", "r2"),
              zip(report.times, report.r1, report.r2))
    edges = report.week_edges
    write_csv(run_dir / "incidence.csv", ("week_start_days", "week_end_days", "observed",
                                          "map_expected"),
              zip(edges[:-1], edges[1:], report.observed, report.map_expected))
    plotting.report_figures(d, hists, run_dir)
    return d


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, out: Path, stochastic: bool = False) -> Path:
    """Daily state table and replacement numbers for the configured theta."""
    theta = cfg.theta_vector()
    fixed = cfg.fixed_params()
    params = theta.model_params(fixed)
    x0 = initial_state(theta, fixed.n_pop)
    times = np.arange(0.0, cfg.t_end + 1e-9, 1.0)
    run_dir = make_run_dir(out, cfg.seed)
    save_config(cfg, run_dir)
    if stochastic:
        if np.any(x0 != np.round(x0)):
            raise ConfigError("stochastic runs need whole-number initial infectives")
        states, _ = gillespie_on_grid(np.round(x0).astype(np.int64), params, times, cfg.seed)
        states = states.astype(float)
    else:
        states = integrate(x0, params, (0.0, float(times[-1])), cfg.tol)(times)
    r1, r2 = replacement_numbers(states, params)
    write_csv(run_dir / "trajectory.csv", ("t_days",) + tuple(f"x_{c}" for c in COMPARTMENTS),
              _trajectory_rows(times, states))
    write_csv(run_dir / "replacement.csv", ("t_days", "r1", "r2"), zip(times, r1, r2))
    crossings = crossover_times(times, r1, r2)
    write_json(run_dir / "simulation.json", {
        "mode": "stochastic" if stochastic else "deterministic", "seed": cfg.seed,
        "theta": theta.to_dict(), "crossover_times": crossings,
        "leading_pathogen": 1 if r1[0] > r2[0] else 2})
    print(f"simulate: {len(times)} days, crossovers={len(crossings)}, out={run_dir}")
    return run_dir


def cmd_synthesize(cfg: RunConfig, out: Path) -> Path:
    """Poisson counts at the configured theta, saved as a season and a series."""
    season = synthesize_dataset(cfg.theta_vector(), cfg.fixed_params(), cfg.weeks, cfg.seed,
                                tol=cfg.tol)
    run_dir = make_run_dir(out, cfg.seed)
    save_config(cfg, run_dir)
    season.save(run_dir / "season.json")
    write_series(season_to_series(season), run_dir / "series.csv")
    print(f"synthesize: {len(season.counts)} weeks, total={sum(season.counts)}, out={run_dir}")
    return run_dir


def _season_from_series(cfg: RunConfig, path, year) -> SeasonWindow:
    if year is None:
        raise ConfigError("a season start year is needed to cut a season from a series")
    series = load_series(path)
    exclude = set(cfg.exclude_years)
    if cfg.exclude_self:
        exclude |= {year, year + 1}
    if cfg.baseline == "per_week":
        baseline = historical_weekly_mean(series, exclude)
    else:
        baseline = historical_mean(series, exclude)
    return extract_season(series, baseline, year, cfg.onset_band, cfg.offset_band)


def load_season(cfg: RunConfig, path, year=None) -> SeasonWindow:
    """A season JSON as written by ``synthesize``/``season``, or a raw series CSV."""
    if path is None:
        raise ConfigError("no data path given")
    if str(path).endswith(".json"):
        if not Path(path).exists():
            raise ParseError(f"data file {path} not found")
        return SeasonWindow.load(path)
    return _season_from_series(cfg, path, year if year is not None else cfg.season_start_year)


def cmd_season(cfg: RunConfig, data, year, out: Path) -> Path:
    season = _season_from_series(cfg, data, year if year is not None else cfg.season_start_year)
    run_dir = make_run_dir(out, cfg.seed)
    save_config(cfg, run_dir)
    season.save(run_dir / "season.json")
    print(f"season: {season.start[0]}-W{season.start[1]:02d} to "
          f"{season.end[0]}-W{season.end[1]:02d}, baseline={season.baseline:.1f}, "
          f"floored={season.n_floored}, out={run_dir}")
    return run_dir


def cmd_fit(cfg: RunConfig, data, year, out: Path) -> Path:
    season = load_season(cfg, data, year)
    window = season.window()
    fixed = cfg.fixed_params()
    logpost = LogPosterior(window, cfg.prior_spec(), fixed, cfg.tol)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergenceWarning)
        sample = run_chains(logpost, cfg.sampler_config(), cfg.chains)
    for w in caught:
        log.warning("%s", w.message)
    report = fit_report(sample, window, fixed, logpost=logpost if cfg.polish else None,
                        polish=cfg.polish, rel_tol=cfg.regime_rel_tol, tol=cfg.tol)
    run_dir = make_run_dir(out, cfg.seed)
    save_config(cfg, run_dir)
    season.save(run_dir / "season.json")
    write_draws(sample, run_dir / "draws.csv")
    write_json(run_dir / "sampler.json", {"acceptance": sample.acceptance,
                                          "n_solves": logpost.n_solves,
                                          "n_failures": logpost.n_failures})
    write_report_artifacts(report, sample, run_dir)
    print(f"fit: map_log_post={report.map_log_post:.3f} "
          f"acceptance={sample.overall_acceptance:.3f} regime_mode={report.regime_mode} "
          f"crossovers={len(report.crossover_times)} out={run_dir}")
    return run_dir


def cmd_report(cfg: RunConfig, draws_path, data, year, out: Path | None) -> Path:
    """Rebuild the report from stored draws without sampling again."""
    sample = read_draws(draws_path)
    draws_dir = Path(draws_path).parent
    if data is None and (draws_dir / "season.json").exists():
        data = draws_dir / "season.json"
    season = load_season(cfg, data, year)
    fixed = cfg.fixed_params()
    logpost = LogPosterior(season.window(), cfg.prior_spec(), fixed, cfg.tol)
    report = fit_report(sample, season.window(), fixed, logpost=logpost if cfg.polish else None,
                        polish=cfg.polish, rel_tol=cfg.regime_rel_tol, tol=cfg.tol)
    run_dir = Path(out) if out is not None else draws_dir / "report"
    run_dir.mkdir(parents=True, exist_ok=True)
    write_report_artifacts(report, sample, run_dir)
    print(f"report: map_log_post={report.map_log_post:.3f} regime_mode={report.regime_mode} "
          f"crossovers={len(report.crossover_times)} out={run_dir}")
    return run_dir


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory (default: config paths.out)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="twopathogen", description="Two-pathogen SIR modelling and inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="integrate or simulate the model")
    p.add_argument("--stochastic", action="store_true", help="exact stochastic simulation")

    sub.add_parser("synthesize", parents=[common], help="Poisson counts from a known theta")

    for name, text in (("season", "cut a high season from a weekly series"),
                       ("fit", "sample the posterior for one season")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--data", help="series CSV or season JSON (default: config paths.data)")
        p.add_argument("--year", type=int, help="season start year")
        if name == "fit":
            p.add_argument("--chains", type=int, help="independent chains (default 1)")

    p = sub.add_parser("report", parents=[common], help="rebuild a report from stored draws")
    p.add_argument("--draws", required=True, help="draws CSV written by fit")
    p.add_argument("--data", help="season JSON (default: next to the draws)")
    p.add_argument("--year", type=int, help="season start year when --data is a series")
    return parser


def _effective(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "chains", None) is not None:
        cfg.chains = args.chains
    if getattr(args, "data", None) is not None:
        cfg.data = args.data
    if args.out is not None:
        cfg.out = args.out
    return RunConfig(**{k: getattr(cfg, k) for k in cfg.__dataclass_fields__})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _effective(args)
        if args.command == "simulate":
            cmd_simulate(cfg, Path(cfg.out), args.stochastic)
        elif args.command == "synthesize":
            cmd_synthesize(cfg, Path(cfg.out))
        elif args.command == "season":
            cmd_season(cfg, cfg.data, args.year, Path(cfg.out))
        elif args.command == "fit":
            cmd_fit(cfg, cfg.data, args.year, Path(cfg.out))
        else:
            cmd_report(cfg, args.draws, args.data, args.year, args.out)
    except TwoPathogenError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
