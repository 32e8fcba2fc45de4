"""
Benchmark report writer and reader.

A report directory holds:

    results.json   schema-versioned rows (deterministic for fixed seeds)
    results.txt    aligned text table of the same rows
    timings.json   per-method test wall times, which vary from run to run
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence

from pydantic import ValidationError

from sagerl.models.experiment import REPORT_SCHEMA_VERSION, Report, ResultRow

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.json"
TABLE_FILE = "results.txt"
TIMINGS_FILE = "timings.json"


class ReportError(Exception):
    """Raised when a report cannot be written or read back."""

    pass


def format_table(rows: Sequence[ResultRow], with_time: bool = True) -> str:
    """
    Aligned text table with one line per row.

    Args:
        rows: Result rows
        with_time: Include the mean test time column (omitted from results.txt)

    Returns:
        Table text ending in a newline
    """
    header = ["Method", "Dataset", "F1", "F1 per seed"]
    if with_time:
        header.append("Time (s)")
    header += ["Par (MB)", "Epochs"]

    lines = [header]
    for row in rows:
        cells = [
            row.method,
            row.dataset,
            f"{row.f1_mean:.3f}",
            " ".join(f"{f1:.3f}" for f1 in row.f1_per_seed),
        ]
        if with_time:
            cells.append(f"{row.test_time_mean:.3f}")
        cells += [f"{row.param_mb:.2f}", str(row.epochs)]
        lines.append(cells)

    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    text = [
        "  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip()
        for line in lines
    ]
    text.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(text) + "\n"


def report(rows: Sequence[ResultRow], out_dir: str | Path) -> Path:
    """
    Write the report files, overwriting any previous report in out_dir.

    Args:
        rows: Result rows (may be empty)
        out_dir: Report directory (created if needed)

    Returns:
        Path of results.json

    Raises:
        ReportError: If the directory cannot be written
    """
    out_dir = Path(out_dir)
    results = Report(rows=list(rows)).model_dump(
        mode="json", exclude={"rows": {"__all__": {"test_time_s"}}}
    )
    timings: Dict[str, List[float]] = {row.method: row.test_time_s for row in rows}

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / RESULTS_FILE).write_text(
            json.dumps(results, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out_dir / TABLE_FILE).write_text(format_table(rows, with_time=False), encoding="utf-8")
        (out_dir / TIMINGS_FILE).write_text(
            json.dumps(timings, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as e:
        raise ReportError(f"cannot write report to {out_dir}: {e}") from e

    logger.info(f"Wrote report with {len(rows)} rows to {out_dir}")
    return out_dir / RESULTS_FILE


def load_report(out_dir: str | Path) -> List[ResultRow]:
    """
    Read a report directory back into rows, merging timings when present.

    Raises:
        ReportError: On a missing file, unknown schema version or invalid row
    """
    out_dir = Path(out_dir)
    try:
        raw = json.loads((out_dir / RESULTS_FILE).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ReportError(f"cannot read {out_dir / RESULTS_FILE}: {e}") from e

    if raw.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ReportError(f"unsupported report schema version {raw.get('schema_version')}")

    timings: Dict[str, List[float]] = {}
    timings_path = out_dir / TIMINGS_FILE
    if timings_path.is_file():
        timings = json.loads(timings_path.read_text(encoding="utf-8"))

    try:
        rows = [
            ResultRow.model_validate({**row, "test_time_s": timings.get(row["method"], [])})
            for row in raw.get("rows", [])
        ]
    except ValidationError as e:
        raise ReportError(f"invalid row in {out_dir / RESULTS_FILE}: {e}") from e
    return rows
