"""Command-line entry points: run experiments, validate datasets, emit plot data."""

from __future__ import annotations

import sys

import click

from .experiment import ExperimentConfig, regenerate_plot_data, run_experiment
from .tntp import load_dataset


@click.group()
def main() -> None:
    """Edge-load prediction with conformal intervals on road networks."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="flat key = value config file")
@click.option("--dataset-dir", type=click.Path(exists=True), default=None)
@click.option("--method", default=None,
              help="comma-separated subset of cp,cqr,cp-erc,cqr-erc,qr")
@click.option("--model", default=None, type=click.Choice(["gae", "digae", "lgnn"]))
@click.option("--layer", default=None, type=click.Choice(["gcnconv", "graphconv"]))
@click.option("--alpha", default=None, type=float)
@click.option("--fill-mode", default=None, type=click.Choice(["zero", "mean", "bootstrap"]))
@click.option("--runs", "n_runs", default=None, type=int)
@click.option("--resplits", "n_resplits", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out-dir", default=None, type=click.Path())
@click.option("--retrain-per-resplit", is_flag=True, default=None)
@click.option("--wsc/--no-wsc", "compute_wsc", default=None)
def run_cmd(config_path, dataset_dir, method, model, layer, alpha, fill_mode,
            n_runs, n_resplits, seed, out_dir, retrain_per_resplit, compute_wsc):
    """Run the full experiment protocol and write results under --out-dir."""
    overrides = {
        "dataset_dir": dataset_dir,
        "methods": tuple(m.strip() for m in method.split(",")) if method else None,
        "model": model,
        "layer": layer,
        "alpha": alpha,
        "fill_mode": fill_mode,
        "n_runs": n_runs,
        "n_resplits": n_resplits,
        "seed": seed,
        "out_dir": out_dir,
        "retrain_per_resplit": retrain_per_resplit,
        "compute_wsc": compute_wsc,
    }
    if config_path:
        config = ExperimentConfig.from_file(config_path, **overrides)
    else:
        kwargs = {k: v for k, v in overrides.items() if v is not None}
        if "dataset_dir" not in kwargs:
            raise click.UsageError("either --config or --dataset-dir is required")
        config = ExperimentConfig(**kwargs)

    result = run_experiment(config)
    click.echo(f"dataset: {result.dataset}  rows: {len(result.rows)}  "
               f"out: {result.out_dir}")
    if result.diverged_runs:
        click.echo(f"warning: diverged runs excluded: {result.diverged_runs}", err=True)
    from .experiment import render_table
    click.echo(render_table(result.table, "markdown"))


@main.command("ingest")
@click.option("--dataset-dir", type=click.Path(exists=True), required=True)
def ingest_cmd(dataset_dir):
    """Parse and validate a dataset directory without running anything."""
    name, graph, report = load_dataset(dataset_dir)
    click.echo(f"dataset: {name}")
    click.echo(f"nodes: {graph.num_nodes}  edges: {graph.num_edges}")
    click.echo(f"dropped zero-flow links: {report.dropped_zero_flow}")
    click.echo(f"dropped self-loops: {report.dropped_self_loops}")
    click.echo(f"dropped isolated nodes: {report.dropped_isolated_nodes}")
    w = graph.weights
    click.echo(f"volume min/mean/max: {w.min():.1f} / {w.mean():.1f} / {w.max():.1f}")


@main.command("plot-data")
@click.option("--run-dir", type=click.Path(exists=True), required=True)
def plot_data_cmd(run_dir):
    """Regenerate the per-edge CSVs of a completed run from its checkpoints."""
    paths = regenerate_plot_data(run_dir)
    if not paths:
        click.echo("no checkpoints found in run directory", err=True)
        sys.exit(1)
    for p in paths:
        click.echo(str(p))


if __name__ == "__main__":
    main()
