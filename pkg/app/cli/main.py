"""
CLI Interface - Primary user interface.
Uses Typer for clean command-line experience.

Exit codes:
- 0: EM converged (or command succeeded)
- 1: EM stopped at max_outer_iters without converging
- 2: Usage or validation error
- 3: I/O error
- 4: Numerical or data error
"""

import json
import logging
import sys
from enum import IntEnum
from pathlib import Path
from typing import Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.progress import Progress
from rich.table import Table

from app.core.config_loader import ConfigLoader, load_sweep_spec
from app.core.exceptions import BMFError
from app.core.models import ConfigurationSchema, SynthConfig
from app.core.settings import get_settings
from app.services.benchmark_service import BenchmarkService, BenchRow, write_table
from app.services.factorization_service import FactorizationReport, FactorizationService

app = typer.Typer(help="Probabilistic Boolean Matrix Factorization", no_args_is_help=True)
console = Console()
logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    OK = 0
    CAPPED = 1
    USAGE = 2
    IO = 3
    NUMERICAL = 4


def setup_logging(verbose: bool) -> None:
    """Configure logging based on verbosity."""
    level = logging.DEBUG if verbose else get_settings().log_level.upper()
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def _load_config(config_path: Optional[Path]) -> ConfigurationSchema:
    return ConfigLoader.load(config_path or get_settings().config_path)


def _fail(message: str, code: ExitCode, json_output: bool) -> None:
    if json_output:
        print(json.dumps({"error": message}))
    else:
        console.print(f"[red]Error:[/red] {message}")
    sys.exit(code)


def _handle_errors(e: Exception, json_output: bool, verbose: bool) -> None:
    logger.debug(f"Command failed with {type(e).__name__}: {e}")
    if isinstance(e, OSError):
        _fail(str(e), ExitCode.IO, json_output)
    # MatrixFormatError and friends are ValueErrors too but count as data errors
    if isinstance(e, BMFError):
        _fail(str(e), ExitCode.NUMERICAL, json_output)
    if isinstance(e, (ValidationError, ValueError)):
        _fail(str(e), ExitCode.USAGE, json_output)
    if verbose:
        console.print_exception()
    _fail(f"Unexpected error: {e}", ExitCode.NUMERICAL, json_output)


RankOption = typer.Option(..., "--rank", "-r", min=1, help="Latent rank L")
AlphaOption = typer.Option(None, "--alpha", help="Beta prior alpha [config: 0.95]")
BetaOption = typer.Option(None, "--beta", help="Beta prior beta [config: 0.95]")
EpsTolOption = typer.Option(None, "--eps-tol", help="EM tolerance on epsilon [config: 0.001]")
MaxOuterOption = typer.Option(None, "--max-outer", help="Max EM iterations [config: 50]")
SeedOption = typer.Option(None, "--seed", help="Initialization seed [config: 0]")
ConfigOption = typer.Option(None, "--config", "-c", help="Custom configuration file path")
JsonOption = typer.Option(False, "--json", help="Output report as JSON")
VerboseOption = typer.Option(False, "--verbose", "-v", help="Enable verbose logging")


@app.command()
def factorize(
    input_path: Path = typer.Option(..., "--input", "-i", help="bmf-dense or bmf-sparse matrix"),
    rank: int = RankOption,
    output_dir: Path = typer.Option(Path("bmf_output"), "--output-dir", "-o", help="Result directory"),
    alpha: Optional[float] = AlphaOption,
    beta: Optional[float] = BetaOption,
    eps_tol: Optional[float] = EpsTolOption,
    max_outer: Optional[int] = MaxOuterOption,
    seed: Optional[int] = SeedOption,
    config_path: Optional[Path] = ConfigOption,
    json_output: bool = JsonOption,
    verbose: bool = VerboseOption,
) -> None:
    """
    Factorize a binary matrix; writes mu.txt, zeta.txt, reconstruction.bmf and report.tsv.
    """
    setup_logging(verbose)

    try:
        service = FactorizationService(_load_config(config_path))
        em_config = service.em_config(
            rank=rank, alpha=alpha, beta=beta, eps_tolerance=eps_tol,
            max_outer_iters=max_outer, seed=seed,
        )
        _, report = service.factorize_file(input_path, output_dir, em_config)
    except Exception as e:
        _handle_errors(e, json_output, verbose)
        return

    _output_report(report, output_dir, json_output)
    sys.exit(ExitCode.OK if report.converged else ExitCode.CAPPED)


@app.command()
def complete(
    input_path: Path = typer.Option(..., "--input", "-i", help="Matrix with missing cells"),
    rank: int = RankOption,
    output_dir: Path = typer.Option(Path("bmf_output"), "--output-dir", "-o", help="Result directory"),
    heldout_out: Optional[Path] = typer.Option(
        None, "--heldout-out", help="Write imputed missing cells as bmf-sparse"
    ),
    alpha: Optional[float] = AlphaOption,
    beta: Optional[float] = BetaOption,
    eps_tol: Optional[float] = EpsTolOption,
    max_outer: Optional[int] = MaxOuterOption,
    seed: Optional[int] = SeedOption,
    config_path: Optional[Path] = ConfigOption,
    json_output: bool = JsonOption,
    verbose: bool = VerboseOption,
) -> None:
    """
    Impute missing cells with the denoised reconstruction.
    """
    setup_logging(verbose)

    try:
        service = FactorizationService(_load_config(config_path))
        em_config = service.em_config(
            rank=rank, alpha=alpha, beta=beta, eps_tolerance=eps_tol,
            max_outer_iters=max_outer, seed=seed,
        )
        _, report = service.complete_file(input_path, output_dir, em_config, heldout_out)
    except Exception as e:
        _handle_errors(e, json_output, verbose)
        return

    _output_report(report, output_dir, json_output)
    sys.exit(ExitCode.OK if report.converged else ExitCode.CAPPED)


@app.command()
def synth(
    n: Optional[int] = typer.Option(None, "--n", min=1, help="Rows [config: 200]"),
    m: Optional[int] = typer.Option(None, "--m", min=1, help="Columns [config: 200]"),
    rank: Optional[int] = typer.Option(None, "--rank", "-r", min=1, help="Boolean rank L [config: 5]"),
    density: Optional[float] = typer.Option(None, "--density", help="Target Pr(X=1) [config: 0.5]"),
    noise: Optional[float] = typer.Option(None, "--noise", help="Flip probability [config: 0.0]"),
    observed: Optional[float] = typer.Option(None, "--observed", help="Observed fraction [config: 1.0]"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Sampling seed [config: 0]"),
    spread: Optional[float] = typer.Option(None, "--spread", help="Half-width of per-column prior [config: 0.2]"),
    vary_priors: Optional[bool] = typer.Option(
        None, "--vary-priors/--fixed-priors", help="Vary column priors [config: vary]"
    ),
    output_dir: Path = typer.Option(Path("synth_output"), "--output-dir", "-o", help="Instance directory"),
    config_path: Optional[Path] = ConfigOption,
    json_output: bool = JsonOption,
    verbose: bool = VerboseOption,
) -> None:
    """
    Sample a synthetic benchmark instance (matrices plus metadata.yaml).
    """
    setup_logging(verbose)

    overrides = {
        "n": n,
        "m": m,
        "rank": rank,
        "target_density": density,
        "prior_spread": spread,
        "noise": noise,
        "observed_fraction": observed,
        "seed": seed,
        "vary_priors": vary_priors,
    }
    try:
        config = _load_config(config_path)
        synth_config = SynthConfig(
            **{**config.synth.model_dump(), **{k: v for k, v in overrides.items() if v is not None}}
        )
        instance = FactorizationService(config).synthesize(synth_config, output_dir)
    except Exception as e:
        _handle_errors(e, json_output, verbose)
        return

    summary = {
        "output_dir": str(output_dir),
        "p": instance.p,
        "true_epsilon": instance.true_epsilon,
        "realized_flip_fraction": instance.realized_flip_fraction,
        "realized_density": instance.realized_density,
    }
    if json_output:
        print(json.dumps(summary, indent=2))
    else:
        table = Table(title="Synthetic Instance", show_header=True)
        table.add_column("Field", style="cyan")
        table.add_column("Value", style="white")
        for key, value in summary.items():
            table.add_row(key, f"{value:.5f}" if isinstance(value, float) else str(value))
        console.print(table)


@app.command()
def bench(
    spec_path: Path = typer.Option(..., "--spec", help="YAML sweep specification"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Override results path"),
    workers: Optional[int] = typer.Option(
        None, "--workers", min=1, help="Parallel repetitions [env: BMF_NUM_WORKERS, default 1]"
    ),
    config_path: Optional[Path] = ConfigOption,
    verbose: bool = VerboseOption,
) -> None:
    """
    Run a noise, completion, MovieLens or scaling sweep and write a TSV table.
    """
    setup_logging(verbose)

    try:
        spec = load_sweep_spec(spec_path, _load_config(config_path))
    except Exception as e:
        _handle_errors(e, False, verbose)
        return

    if output is not None:
        spec = spec.model_copy(update={"output": output})
    service = BenchmarkService(spec, num_workers=workers or get_settings().num_workers)

    total = len(spec.grid) * spec.repetitions
    with Progress(console=console, transient=True) as progress:
        task = progress.add_task(f"{spec.mode}", total=total)

        def _advance(row: BenchRow) -> None:
            progress.advance(task)

        rows = service.run(on_row=_advance)

    try:
        write_table(rows, spec.output)
    except OSError as e:
        _fail(str(e), ExitCode.IO, False)

    _output_summaries([r for r in rows if r.kind == "summary"], spec.output)


def _output_report(report: FactorizationReport, output_dir: Path, json_output: bool) -> None:
    """Output factorization report."""
    if json_output:
        print(json.dumps({**report.model_dump(), "output_dir": str(output_dir)}, indent=2))
        return

    color = "green" if report.converged else "yellow"
    console.print(
        f"\n[bold]Factorization:[/bold] {report.n_rows}x{report.n_cols}, rank {report.rank} "
        f"([{color}]{'converged' if report.converged else 'capped'}[/{color}])\n"
    )
    table = Table(title="Report", show_header=True)
    table.add_column("Field", style="cyan")
    table.add_column("Value", style="white")
    table.add_row("Observed cells", str(report.n_observed))
    table.add_row("Flip probability", f"{report.epsilon:.4f}")
    table.add_row("Log-posterior", f"{report.objective:.4f}")
    table.add_row("EM iterations", str(report.outer_iters))
    table.add_row("Inner iterations", str(report.inner_iters))
    table.add_row("Wall time", f"{report.wall_time_s:.2f}s")
    console.print(table)
    console.print(f"Results written to {output_dir}\n")


def _output_summaries(summaries: list[BenchRow], path: Path) -> None:
    table = Table(title="Sweep Summary", show_header=True)
    table.add_column("Grid", style="cyan")
    table.add_column("Runs")
    table.add_column("Recon. error")
    table.add_column("Accuracy")
    table.add_column("Epsilon")
    for row in summaries:
        table.add_row(
            f"{row.grid_value:g}",
            str(row.repetition),
            _mean_std(row.reconstruction_error, row.reconstruction_error_std),
            _mean_std(row.completion_accuracy, row.completion_accuracy_std),
            _mean_std(row.estimated_epsilon, row.estimated_epsilon_std),
        )
    console.print(table)
    console.print(f"Results written to {path}")


def _mean_std(mean: Optional[float], std: Optional[float]) -> str:
    if mean is None:
        return "-"
    return f"{mean:.4f} ± {std or 0.0:.4f}"


if __name__ == "__main__":
    app()
