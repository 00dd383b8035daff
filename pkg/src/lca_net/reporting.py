"""Delimiter-separated metric files and aligned text tables."""

import csv
from pathlib import Path
from typing import Mapping, Optional, Sequence


def metrics_path(output_dir: Path, dataset: str, command: str, seed: int) -> Path:
    return Path(output_dir) / f"{dataset}_{command}_{seed}.csv"


def _cell(value, digits: int) -> str:
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return "-" if value is None else str(value)


def write_rows(rows: Sequence[Mapping], path: Path) -> Path:
    """Write rows with a header taken from the first row's keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]) if rows else [])
        writer.writeheader()
        writer.writerows(rows)
    return path


def format_table(rows: Sequence[Mapping], columns: Optional[Sequence[str]] = None, digits: int = 4) -> str:
    """Right-aligned plain-text table."""
    if not rows:
        return ""
    columns = list(columns or rows[0])
    cells = [[_cell(row.get(column), digits) for column in columns] for row in rows]
    widths = [max(len(column), *(len(line[i]) for line in cells)) for i, column in enumerate(columns)]
    lines = ["  ".join(column.rjust(width) for column, width in zip(columns, widths))]
    lines.append("  ".join("-" * width for width in widths))
    lines.extend("  ".join(cell.rjust(width) for cell, width in zip(line, widths)) for line in cells)
    return "\n".join(lines)
