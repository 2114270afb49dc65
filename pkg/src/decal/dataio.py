"""CSV formats: potential-outcomes datasets, aggregated results, raw traces.

All numbers are serialized with 17 significant digits so a write/read
round-trip reproduces the exact float64 values, and files are written with
"\n" line endings so identical studies produce byte-identical output.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .exceptions import DatasetFormatError
from .experiment import AggregateRow, MetricTrace, PotentialOutcomesDataset

__all__ = [
    "dataset_header",
    "save_dataset_csv",
    "load_dataset_csv",
    "write_results_csv",
    "write_trace_csv",
    "format_float",
]


def format_float(value: float) -> str:
    return f"{value:.17g}"


def dataset_header(dim: int, n_decisions: int) -> list[str]:
    """Exact column sequence: x1..xp, y_true_1..K, y_obs_1..K, d (1-based)."""
    return ([f"x{i}" for i in range(1, dim + 1)]
            + [f"y_true_{k}" for k in range(1, n_decisions + 1)]
            + [f"y_obs_{k}" for k in range(1, n_decisions + 1)]
            + ["d"])


def save_dataset_csv(ds: PotentialOutcomesDataset, path) -> None:
    header = dataset_header(ds.dim, ds.n_decisions)
    lines = [",".join(header)]
    for i in range(ds.n_points):
        cells = [format_float(v) for v in ds.X[i]]
        cells += [format_float(v) for v in ds.y_true[i]]
        cells += [format_float(v) for v in ds.y_obs[i]]
        cells.append(str(int(ds.assigned[i]) + 1))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _infer_shape(header: list[str]) -> tuple[int, int]:
    dim = 0
    while dim < len(header) and header[dim] == f"x{dim + 1}":
        dim += 1
    n_decisions = 0
    pos = dim
    while pos < len(header) and header[pos] == f"y_true_{n_decisions + 1}":
        n_decisions += 1
        pos += 1
    if dim < 1 or n_decisions < 2:
        raise DatasetFormatError(
            f"malformed header {header[:6]}...: expected x1..xp then y_true_1..K (K >= 2)")
    expected = dataset_header(dim, n_decisions)
    if header != expected:
        raise DatasetFormatError(
            f"malformed header: expected columns {expected}, got {header}")
    return dim, n_decisions


def load_dataset_csv(path) -> PotentialOutcomesDataset:
    """Parse and validate the dataset schema; errors cite the row and column."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: file is empty") from None
        dim, n_decisions = _infer_shape([h.strip() for h in header])
        width = dim + 2 * n_decisions + 1
        x_rows, true_rows, obs_rows, assigned = [], [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DatasetFormatError(
                    f"{path}: row {row_no} has {len(row)} cells, expected {width}")
            values = []
            for col, cell in zip(dataset_header(dim, n_decisions), row[:-1]):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DatasetFormatError(
                        f"{path}: row {row_no}, column {col}: "
                        f"non-numeric cell {cell!r}") from None
            try:
                d = int(row[-1])
            except ValueError:
                raise DatasetFormatError(
                    f"{path}: row {row_no}, column d: non-integer cell "
                    f"{row[-1]!r}") from None
            if not 1 <= d <= n_decisions:
                raise DatasetFormatError(
                    f"{path}: row {row_no}: d={d} outside 1..{n_decisions}")
            x_rows.append(values[:dim])
            true_rows.append(values[dim:dim + n_decisions])
            obs_rows.append(values[dim + n_decisions:])
            assigned.append(d - 1)
    if not x_rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return PotentialOutcomesDataset(
        np.array(x_rows), np.array(true_rows), np.array(obs_rows),
        np.array(assigned), provenance="external")


RESULTS_HEADER = "strategy,step,mean_A,sem_A,mean_H,sem_H,n_ok,n_failed"


def write_results_csv(path, rows: list[AggregateRow], echo: dict[str, object]) -> None:
    """Aggregated results preceded by '#'-prefixed effective-config comments."""
    lines = [f"# {key} = {echo[key]}" for key in sorted(echo)]
    lines.append(RESULTS_HEADER)
    for row in rows:
        lines.append(",".join([
            row.strategy, str(row.step),
            format_float(row.mean_accuracy), format_float(row.sem_accuracy),
            format_float(row.mean_entropy), format_float(row.sem_entropy),
            str(row.n_ok), str(row.n_failed),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


TRACE_HEADER = "strategy,replication,step,A,H,selected_row,selected_d,seconds"


def write_trace_csv(path, traces: dict[str, list[MetricTrace | None]]) -> None:
    """Raw per-replication traces; selected_* are empty at step 0 and `d` is 1-based."""
    lines = [TRACE_HEADER]
    for strategy, trace_list in traces.items():
        for m, trace in enumerate(trace_list):
            if trace is None:
                continue
            for step in range(trace.accuracy.size):
                sel_row = str(trace.selected_rows[step - 1]) if step else ""
                sel_d = str(trace.selected_decisions[step - 1] + 1) if step else ""
                lines.append(",".join([
                    strategy, str(m), str(step), str(int(trace.accuracy[step])),
                    format_float(trace.entropy[step]), sel_row, sel_d,
                    format_float(trace.seconds[step]),
                ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
