"""Command-line interface: simulate, estimate, metrics, replicate, report."""

from __future__ import annotations

import csv
import json
import os
import sys
import time

import click
import numpy as np

from .adapt import AdaptConfig
from .data import (CASE_IDS, load_dataset, load_truth, save_dataset,
                   save_truth, simulate_case)
from .em import EmConfig
from .harness import (CLI_MODES, DETAIL_FIELDS, RunConfig, read_rows,
                      replicate, run_estimator, write_rows)
from .metrics import compute_report
from .mixture import MixingDistribution
from .weights import WeightSolveConfig

TRACE_FIELDS = ["round", "step", "ll", "n_components", "max_D"]


@click.group()
def main():
    """Nonparametric mixing-distribution estimation for discrete choice."""


def _write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        writer.writeheader()
        for row in trace:
            out = dict(row)
            out["ll"] = f"{out['ll']:.12g}"
            out["max_D"] = "" if np.isnan(out["max_D"]) else f"{out['max_D']:.6g}"
            writer.writerow(out)


def _adapt_options(f):
    opts = [
        click.option("--grid-target", default=1000, show_default=True,
                     help="Initial grid size target (x^d close to this)."),
        click.option("--outer-rounds", default=5, show_default=True,
                     help="Rounds of the combined EM driver."),
        click.option("--grid-iters", default=15, show_default=True,
                     help="Refinement rounds of the adaptive grid."),
        click.option("--n-em", default=5, show_default=True,
                     help="EM steps per round."),
        click.option("--n-g", default=100, show_default=True,
                     help="MH candidates per round."),
        click.option("--eps-tol", default=1e-3, show_default=True,
                     help="Weight pruning threshold."),
        click.option("--cov0", default=0.1, show_default=True,
                     help="Initial per-coordinate component variance."),
        click.option("--bound", default=4.0, show_default=True,
                     help="Half-width of the symmetric coordinate box."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _configs(grid_target, outer_rounds, grid_iters, n_em, n_g, eps_tol, cov0,
             bound):
    adapt = AdaptConfig(
        n_g=n_g, grid_target=grid_target, grid_iters=grid_iters,
        outer_rounds=outer_rounds, eps_tol=eps_tol,
        bounds=((-bound, bound),), cov0=cov0)
    return EmConfig(n_em=n_em), adapt, WeightSolveConfig(active_tol=eps_tol)


@main.command()
@click.option("--case", required=True, type=click.Choice(CASE_IDS))
@click.option("--n", required=True, type=int, help="Number of individuals.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(),
              help="Output directory (data.csv, truth.json).")
def simulate(case, n, seed, out):
    """Simulate one dataset for a built-in case."""
    os.makedirs(out, exist_ok=True)
    dataset, truth = simulate_case(case, n, seed)
    save_dataset(dataset, os.path.join(out, "data.csv"))
    save_truth(truth, os.path.join(out, "truth.json"),
               scenario={"case": case, "n": n, "seed": seed})
    click.echo(f"wrote {out}/data.csv ({n} rows) and {out}/truth.json")


@main.command()
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True), help="Dataset CSV.")
@click.option("--case", required=True, type=click.Choice(CASE_IDS),
              help="Which built-in model specification to estimate.")
@click.option("--mode", default="EM", show_default=True,
              type=click.Choice(CLI_MODES, case_sensitive=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(),
              help="Output directory (mixing.json, trace.csv).")
@_adapt_options
def estimate(data_path, case, mode, seed, out, **cfg_kw):
    """Estimate the mixing distribution on a dataset."""
    os.makedirs(out, exist_ok=True)
    dataset = load_dataset(data_path)
    em_cfg, adapt_cfg, wcfg = _configs(**cfg_kw)
    t0 = time.perf_counter()
    mixing, trace, summary = run_estimator(
        dataset, case, mode.upper(), seed, em_cfg, adapt_cfg, wcfg)
    elapsed = time.perf_counter() - t0
    mixing.save(os.path.join(out, "mixing.json"))
    _write_trace(trace, os.path.join(out, "trace.csv"))
    line = (f"mode={mode.upper()} ll={summary['ll']:.6f} "
            f"components={summary['n_components']} time={elapsed:.1f}s")
    if "winner" in summary:
        line += f" winner={summary['winner']}"
    click.echo(line)


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--mixing", "mixing_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None,
              help="Optional CSV file for the metrics row.")
def metrics(data_path, truth_path, mixing_path, out):
    """Score a fitted mixture against the generating process."""
    dataset = load_dataset(data_path)
    truth = load_truth(truth_path)
    mixing = MixingDistribution.load(mixing_path)
    report = compute_report(dataset, mixing, truth)
    row = report.as_row()
    fields = list(row)
    if out:
        with open(out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerow({k: _num(v) for k, v in row.items()})
    click.echo(",".join(fields))
    click.echo(",".join(str(_num(v)) for v in row.values()))


def _num(v):
    return f"{v:.12g}" if isinstance(v, float) else v


@main.command("replicate")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON study descriptor; flags override it.")
@click.option("--case", "cases", multiple=True, type=click.Choice(CASE_IDS))
@click.option("--n", "ns", multiple=True, type=int)
@click.option("--mode", "modes", multiple=True,
              type=click.Choice(CLI_MODES, case_sensitive=False))
@click.option("--reps", default=None, type=int, help="Replications per cell.")
@click.option("--seed", default=None, type=int, help="Master seed.")
@click.option("--threads", default=1, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render metric figures next to the CSV output.")
@_adapt_options
def replicate_cmd(config_path, cases, ns, modes, reps, seed, threads, out,
                  figures, **cfg_kw):
    """Run a Monte Carlo replication study."""
    base = {}
    if config_path:
        with open(config_path) as fh:
            base = json.load(fh)
    em_cfg, adapt_cfg, wcfg = _configs(**cfg_kw)
    cfg = RunConfig(
        cases=tuple(cases) or tuple(base.get("cases", ("1b",))),
        ns=tuple(ns) or tuple(base.get("ns", (250, 500, 1000))),
        modes=tuple(m.upper() for m in modes) or tuple(base.get("modes", ("EM",))),
        reps=reps if reps is not None else int(base.get("reps", 20)),
        master_seed=seed if seed is not None else int(base.get("seed", 0)),
        threads=threads, em=em_cfg, adapt=adapt_cfg, weights=wcfg)
    os.makedirs(out, exist_ok=True)
    detail, aggregate = replicate(cfg)
    write_rows(detail, os.path.join(out, "details.csv"))
    write_rows(aggregate, os.path.join(out, "aggregate.csv"))
    n_err = sum(1 for r in detail if r["status"] != "ok")
    click.echo(f"wrote {out}/details.csv ({len(detail)} rows, {n_err} failures) "
               f"and {out}/aggregate.csv")
    if figures:
        from .report import render_study_figures
        for path in render_study_figures(aggregate, out):
            click.echo(f"wrote {path}")
    if n_err:
        sys.exit(1)


@main.command()
@click.option("--results", required=True, type=click.Path(exists=True),
              help="aggregate.csv from a replication run.")
@click.option("--out", required=True, type=click.Path())
def report(results, out):
    """Render metric figures from replication results."""
    from .report import render_study_figures
    os.makedirs(out, exist_ok=True)
    rows = read_rows(results)
    written = render_study_figures(rows, out)
    for path in written:
        click.echo(f"wrote {path}")
    if not written:
        click.echo("no plottable metrics found", err=True)
        sys.exit(1)


def entry():  # console-script shim keeping env-var overrides on
    main(auto_envvar_prefix="NPMIX")


if __name__ == "__main__":
    entry()
