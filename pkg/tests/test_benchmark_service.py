"""
Unit tests for the sweep runner.
Tests row accounting, seed reproducibility and summary statistics.
"""

import numpy as np
import pytest

from app.core.engine import EMEngine
from app.core.metrics import evaluate
from app.core.models import EmConfig, RpropConfig, SweepSpec
from app.datasets.synthetic_generator import generate
from app.services.benchmark_service import (
    TABLE_COLUMNS,
    BenchmarkService,
    BenchRow,
    cell_seed,
    measure_iteration_time,
    read_table,
    summarize,
    write_table,
)

QUICK_EM = EmConfig(rank=2, max_outer_iters=4, rprop=RpropConfig(max_inner_iters=150))


def _spec(**overrides):
    fields = dict(
        mode="noise-sweep",
        grid=[0.0, 0.1, 0.2],
        repetitions=2,
        n=16,
        m=14,
        rank=2,
        base_seed=5,
        em=QUICK_EM,
    )
    fields.update(overrides)
    return SweepSpec(**fields)


def _strip_time(row):
    return row.model_dump(exclude={"wall_time_s"})


@pytest.fixture
def noise_rows():
    """Rows of a small serial noise sweep."""
    return BenchmarkService(_spec()).run()


def test_cell_seed_reproducible_and_distinct():
    """Seeds depend on base seed, grid index and repetition."""
    assert cell_seed(0, 1, 2) == cell_seed(0, 1, 2)
    seeds = {cell_seed(0, g, r) for g in range(4) for r in range(5)}
    assert len(seeds) == 20
    assert cell_seed(1, 0, 0) != cell_seed(0, 0, 0)


def test_row_accounting(noise_rows):
    """grid x repetitions run rows followed by one summary per grid point."""
    runs = [r for r in noise_rows if r.kind == "run"]
    summaries = [r for r in noise_rows if r.kind == "summary"]
    assert len(runs) == 6
    assert len(summaries) == 3
    assert noise_rows[-3:] == summaries
    assert all(r.status == "ok" for r in runs)
    assert [s.grid_value for s in summaries] == [0.0, 0.1, 0.2]


def test_run_rows_carry_metrics(noise_rows):
    """Synthetic runs report error, noise estimates and their seed."""
    for row in noise_rows:
        if row.kind != "run":
            continue
        assert row.seed is not None
        assert 0.0 <= row.reconstruction_error <= 1.0
        assert row.true_epsilon == row.grid_value
        assert row.completion_accuracy is None


def test_summaries_recompute_from_runs(noise_rows):
    """Summary means and sample deviations follow from the run rows."""
    spec = _spec()
    runs = [r for r in noise_rows if r.kind == "run"]
    assert summarize(runs, spec) == noise_rows[-3:]

    for summary in noise_rows[-3:]:
        errors = [r.reconstruction_error for r in runs if r.grid_value == summary.grid_value]
        assert summary.repetition == 2
        assert summary.reconstruction_error == float(np.mean(errors))
        assert summary.reconstruction_error_std == float(np.std(errors, ddof=1))


def test_cell_rerun_reproduces_row(noise_rows):
    """Rerunning a cell from its recorded seed gives the same row."""
    service = BenchmarkService(_spec())
    cell = service.cells()[3]
    row = service.run_cell(cell)
    assert _strip_time(row) == _strip_time(noise_rows[3])


def test_parallel_matches_serial(noise_rows):
    """Worker count does not change results or row order."""
    parallel = BenchmarkService(_spec(), num_workers=3).run()
    assert [_strip_time(r) for r in parallel] == [_strip_time(r) for r in noise_rows]


def test_completion_sweep_scores_heldout_cells():
    """Completion runs report accuracy on held-out cells."""
    spec = _spec(mode="completion-sweep", grid=[0.5], noise=0.1)
    runs = [r for r in BenchmarkService(spec).run() if r.kind == "run"]
    assert all(0.0 <= r.completion_accuracy <= 1.0 for r in runs)


def test_failed_cells_recorded(monkeypatch):
    """A failing cell becomes an error row and the sweep continues."""
    service = BenchmarkService(_spec(grid=[0.1], repetitions=3))
    original = service._dispatch

    def flaky(cell):
        if cell.repetition == 1:
            raise RuntimeError("boom")
        return original(cell)

    monkeypatch.setattr(service, "_dispatch", flaky)
    rows = service.run()

    failed = [r for r in rows if r.status == "error"]
    assert len(failed) == 1
    assert failed[0].error == "RuntimeError: boom"
    assert rows[-1].kind == "summary"
    assert rows[-1].repetition == 2


def test_movielens_mode(tmp_path):
    """Ratings are binarized once and split per cell."""
    rng = np.random.default_rng(0)
    lines = [
        f"{u}::{i}::{int(rng.integers(1, 6))}::0"
        for u in range(12)
        for i in range(10)
        if rng.random() < 0.8
    ]
    path = tmp_path / "ratings.dat"
    path.write_text("\n".join(lines) + "\n")

    spec = _spec(mode="movielens", grid=[0.5], ratings_path=path, ratings_delimiter="::")
    rows = BenchmarkService(spec).run()
    runs = [r for r in rows if r.kind == "run"]
    assert len(runs) == 2
    assert all(r.status == "ok" for r in runs)
    assert all(0.0 <= r.completion_accuracy <= 1.0 for r in runs)


def test_scaling_mode_reports_iteration_time():
    """Scaling rows carry the mean time per gradient update."""
    spec = _spec(mode="scaling", grid=[10, 20], repetitions=1, scaling_iterations=3)
    runs = [r for r in BenchmarkService(spec).run() if r.kind == "run"]
    assert [r.grid_value for r in runs] == [10.0, 20.0]
    assert all(r.per_iteration_s > 0 for r in runs)


def test_sweep_spec_validation(tmp_path):
    """Grids must fit their mode."""
    with pytest.raises(ValueError):
        _spec(grid=[0.6])
    with pytest.raises(ValueError):
        _spec(mode="completion-sweep", grid=[1.0])
    with pytest.raises(ValueError):
        _spec(mode="movielens", grid=[0.5])
    with pytest.raises(ValueError):
        _spec(mode="scaling", grid=[10.5])
    with pytest.raises(ValueError):
        _spec(grid=[])


def test_write_and_read_table(tmp_path, noise_rows):
    """Tables use the fixed column order and lowercase booleans."""
    path = tmp_path / "results" / "bench.tsv"
    write_table(noise_rows, path)

    assert path.read_text().splitlines()[0].split("\t") == TABLE_COLUMNS
    table = read_table(path)
    assert len(table) == 9
    assert table[0]["kind"] == "run"
    assert table[0]["converged"] in ("true", "false")
    assert table[-1]["seed"] == ""
    assert float(table[0]["reconstruction_error"]) == noise_rows[0].reconstruction_error


def test_bench_row_defaults():
    """Only identity columns are required."""
    row = BenchRow(kind="run", mode="noise-sweep", grid_value=0.1, repetition=0)
    assert row.status == "ok"
    assert row.error is None


@pytest.mark.slow
def test_iteration_time_scales_linearly_in_rows():
    """Doubling N roughly doubles the per-iteration cost."""
    spec = _spec(mode="scaling", grid=[400, 800], m=400, rank=5, repetitions=1, scaling_iterations=10)
    service = BenchmarkService(spec)

    def best_time(n_rows):
        instance = generate(service._synth_config(seed=0, noise=spec.noise, observed=1.0, n=n_rows))
        return min(measure_iteration_time(instance.x_noisy, spec, seed=0) for _ in range(3))

    ratio = best_time(800) / best_time(400)
    assert 1.4 <= ratio <= 2.6


def test_duplicate_grid_values_rejected():
    """Each grid point must be distinct so summaries map one to one."""
    with pytest.raises(ValueError, match="distinct"):
        _spec(grid=[0.1, 0.1])


def test_run_row_metrics_come_from_evaluation_report():
    """A synthetic run row carries exactly the evaluation report of its fit."""
    service = BenchmarkService(_spec(mode="completion-sweep", grid=[0.5], noise=0.1, repetitions=1))
    cell = service.cells()[0]
    row = service.run_cell(cell)

    instance = generate(service._synth_config(cell.seed, noise=0.1, observed=0.5))
    result = EMEngine(service.spec.em_config(cell.seed)).fit(instance.x_noisy)
    report = evaluate(result, x_clean=instance.x_clean, true_epsilon=0.1, heldout_mask=instance.heldout_mask)
    for field, value in report.model_dump().items():
        assert getattr(row, field) == value
    assert row.outer_iters == result.outer_iters
