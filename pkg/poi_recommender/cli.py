"""
Command-line interface for the POI recommender.

Subcommands generate synthetic check-ins, train one model, evaluate the base
experiment cell, run the full sweep, and inspect a checkpoint. Progress and
messages go to standard error; results only go to files.
"""

from pathlib import Path
from typing import List, Optional, get_args

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from .collection.transitions import dump_raw_matrix
from .core.config import ExperimentConfig, Method, parse_config, settings
from .core.exceptions import InvalidParameterError, PoiRecommenderError
from .core.experiment import build_cells, load_dataset, run_experiment, train_config_for, train_method
from .data.checkins import write_checkins
from .data.synthetic import SyntheticManifest, generate_from_manifest, load_manifest, preset_manifest
from .evaluation.metrics import MetricsReport, evaluate_result
from .training.model import load_model, save_model
from .training.trainer import budget_audit
from .utils.helpers import ensure_directory, get_timestamp
from .utils.logging import logger, set_level

# Initialize the Typer app
app = typer.Typer(help="poiflake - private successive POI recommendation experiments")
console = Console(stderr=True)

METHODS = get_args(Method)

ConfigOption = typer.Option(None, "--config", "-c", help="Experiment config (TOML)")
OutputOption = typer.Option(None, "--output", "-o", help="Output directory")
SeedOption = typer.Option(None, "--seed", help="Seed (first seed for multi-seed runs)")
NoPrivacyOption = typer.Option(False, "--no-privacy", help="Non-private diagnostic mode")


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    """Private successive POI recommendation under local differential privacy."""
    if verbose:
        set_level("DEBUG")


def _fail(e: Exception) -> None:
    console.print(f"[red]Error: {e}[/red]")
    raise typer.Exit(code=1)


def _load(config_path: Optional[Path], output: Optional[Path], seed: Optional[int]) -> ExperimentConfig:
    config = parse_config(config_path)
    if output is not None:
        config.output.directory = str(output)
    elif config_path is None:
        config.output.directory = settings.output_dir
    if seed is not None:
        config.evaluation.seed = seed
    return config


def _metrics_table(reports: List[MetricsReport], title: str) -> Table:
    ks = reports[0].ks if reports else []
    table = Table(title=title)
    for column in ["method", "epsilon", "split", "k-iter"]:
        table.add_column(column)
    for k in ks:
        table.add_column(f"R@{k}", justify="right")
    table.add_column("MRR", justify="right")
    for report in reports:
        meta = report.metadata
        eps = meta.get("epsilon")
        split = meta.get("split_ratio")
        table.add_row(
            str(meta.get("method")),
            "inf" if eps is None else f"{eps:g}",
            "-" if split is None else f"{split:g}",
            str(meta.get("iterations")),
            *[f"{report.recall_at[k]:.4f}" for k in ks],
            f"{report.mrr:.4f}",
        )
    return table


@app.command()
def generate(
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Check-in file to write"),
    m: Optional[int] = typer.Option(None, "--m", help="Number of users"),
    n: Optional[int] = typer.Option(None, "--n", help="Number of POIs"),
    length: Optional[int] = typer.Option(None, "--len", help="Check-ins per user"),
    seed: int = typer.Option(0, "--seed", help="Generator seed"),
    preset: Optional[str] = typer.Option(None, "--preset", help="gowalla-like, taxitrip-small or taxitrip"),
    manifest: Optional[Path] = typer.Option(None, "--manifest", help="Synthetic manifest (TOML)"),
    neighbors: int = typer.Option(3, "--neighbors", help="Random-walk successors per POI"),
    restart: float = typer.Option(0.05, "--restart", help="Random-walk restart probability"),
    stay: float = typer.Option(0.0, "--stay", help="Random-walk probability of staying at the same POI"),
):
    """
    Generate a synthetic check-in file.
    """
    try:
        if manifest is not None:
            population = load_manifest(manifest)
            dataset = generate_from_manifest(population, base_dir=manifest.parent)
        elif m is not None or n is not None or length is not None:
            if m is None or n is None or length is None:
                raise InvalidParameterError("--m, --n and --len must be given together")
            population = SyntheticManifest(
                m=m, n=n, length=length, seed=seed, neighbors=neighbors, restart=restart, stay=stay
            )
            dataset = generate_from_manifest(population)
        else:
            population = preset_manifest(preset or "taxitrip-small", seed=seed)
            dataset = generate_from_manifest(population)

        stem = f"{population.name or 'synthetic'}_{population.m}x{population.n}x{population.length}"
        path = output or Path(settings.data_dir) / f"{stem}.csv"
        with console.status("[bold green]Writing check-ins...[/bold green]"):
            write_checkins(dataset, path)
        console.print(f"[green]Wrote {dataset.m} users over {dataset.n} POIs to {path}[/green]")
    except (PoiRecommenderError, ValueError, OSError) as e:
        _fail(e)


@app.command()
def train(
    config_path: Optional[Path] = ConfigOption,
    output: Optional[Path] = OutputOption,
    seed: Optional[int] = SeedOption,
    method: str = typer.Option("spirel", "--method", help="spirel, npb or pb"),
    no_privacy: bool = NoPrivacyOption,
    trace: bool = typer.Option(False, "--trace", help="Record P-RMSE and Q-RMSE per iteration"),
):
    """
    Train one model and write its checkpoint.
    """
    try:
        if method not in METHODS:
            raise InvalidParameterError(f"unknown method {method!r}, expected one of {list(METHODS)}")
        config = _load(config_path, output, seed)
        private = not no_privacy and config.privacy.enabled
        if not private:
            console.print("[yellow]Non-private diagnostic run: no LDP guarantee[/yellow]")
        dataset = load_dataset(config.dataset)
        config.evaluation.methods = [method]
        cell = build_cells(config, private=private)[0]
        run_seed = config.evaluation.seed
        train_config = train_config_for(cell, config, run_seed, track_trace=trace)

        result = train_method(dataset, cell, train_config, show_progress=True)
        report = evaluate_result(result, [k for k in config.evaluation.ks if k <= dataset.n], {"dataset": dataset.name})

        out_dir = ensure_directory(config.output.directory)
        stem = f"{method}_{get_timestamp()}"
        metadata = {
            **report.metadata,
            "split_ratio": cell.split_ratio,
            "normalize_q": train_config.normalize_q,
            "recall_at": {str(k): v for k, v in report.recall_at.items()},
            "mrr": report.mrr,
        }
        checkpoint = save_model(result.model, out_dir / f"{stem}.model", metadata=metadata)
        console.print(f"[green]Checkpoint written to {checkpoint}[/green]")

        if result.transitions is not None:
            raw_path = dump_raw_matrix(result.transitions.raw, out_dir / f"{stem}.transitions")
            console.print(f"[green]Transition counts written to {raw_path}[/green]")
        if result.trace is not None:
            trace_path = result.trace.write_csv(out_dir / f"{stem}_trace.csv")
            console.print(f"[green]Trace written to {trace_path}[/green]")
            if result.trace.diverged:
                console.print("[yellow]Training diverged; remaining trace entries are inf[/yellow]")
        if result.ledgers:
            audit = budget_audit(result)
            console.print(
                f"Budget audit: {audit['clients']} clients, "
                f"{audit['transition_reports'] + audit['gradient_reports'] + audit['spend']} violations"
            )
        console.print(_metrics_table([report], f"{method} on {dataset.name}"))
    except (PoiRecommenderError, ValueError, OSError) as e:
        _fail(e)


@app.command()
def evaluate(
    config_path: Optional[Path] = ConfigOption,
    output: Optional[Path] = OutputOption,
    seed: Optional[int] = SeedOption,
    jobs: int = typer.Option(1, "--jobs", "-j", help="Parallel cells (-1 for all cores)"),
    no_privacy: bool = NoPrivacyOption,
):
    """
    Evaluate every configured method at the base settings.
    """
    try:
        config = _load(config_path, output, seed)
        csv_path = Path(config.output.directory) / "metrics.csv"
        reports = run_experiment(config, sweep=False, private=not no_privacy, jobs=jobs, csv_path=csv_path)
        console.print(_metrics_table(reports, f"Metrics over {config.evaluation.seed_count} seeds"))
        console.print(f"[green]Metrics written to {csv_path}[/green]")
    except (PoiRecommenderError, ValueError, OSError) as e:
        _fail(e)


@app.command()
def sweep(
    config_path: Optional[Path] = ConfigOption,
    output: Optional[Path] = OutputOption,
    seed: Optional[int] = SeedOption,
    jobs: int = typer.Option(1, "--jobs", "-j", help="Parallel cells (-1 for all cores)"),
    no_privacy: bool = NoPrivacyOption,
):
    """
    Run the full experiment grid from the [sweep] section.
    """
    try:
        config = _load(config_path, output, seed)
        csv_path = Path(config.output.directory) / "sweep.csv"
        reports = run_experiment(config, sweep=True, private=not no_privacy, jobs=jobs, csv_path=csv_path)
        console.print(_metrics_table(reports, f"Sweep over {config.evaluation.seed_count} seeds"))
        console.print(f"[green]Sweep written to {csv_path}[/green]")
    except (PoiRecommenderError, ValueError, OSError) as e:
        _fail(e)


@app.command()
def inspect(
    checkpoint: Path = typer.Argument(..., help="Checkpoint written by train"),
    top: int = typer.Option(10, "--top", help="Strongest POI pairs to list"),
):
    """
    Summarise a checkpoint.
    """
    try:
        if not checkpoint.is_file():
            raise InvalidParameterError(f"checkpoint not found: {checkpoint}")
        model, metadata = load_model(checkpoint)
        V = model.V

        summary = Table(title=str(checkpoint), show_header=False)
        summary.add_row("POIs (n)", str(model.n))
        summary.add_row("latent dimension (d)", str(model.d))
        summary.add_row("Adam steps", str(model.adam_state.step))
        summary.add_row("||V||_F", f"{np.linalg.norm(V):.6g}")
        summary.add_row("max |V|", f"{np.max(np.abs(V)):.6g}")
        for key in ("method", "dataset", "epsilon", "iterations", "seed", "evaluated_users", "mrr"):
            if key in metadata:
                summary.add_row(key, str(metadata[key]))
        console.print(summary)

        affinity = V @ V.T
        np.fill_diagonal(affinity, -np.inf)
        count = max(0, min(top, model.n * (model.n - 1)))
        order = np.argsort(-affinity, axis=None, kind="stable")[:count]
        pairs = Table(title="Strongest POI -> POI affinities (v_j . v_k)")
        pairs.add_column("from", justify="right")
        pairs.add_column("to", justify="right")
        pairs.add_column("affinity", justify="right")
        for flat in order:
            j, k = divmod(int(flat), model.n)
            pairs.add_row(str(j), str(k), f"{affinity[j, k]:.6g}")
        console.print(pairs)
    except (PoiRecommenderError, ValueError, OSError) as e:
        _fail(e)


if __name__ == "__main__":
    logger.debug("Starting CLI")
    app()
