"""CSV tables with round-trippable doubles (17 significant digits)."""
from __future__ import annotations

import csv
from pathlib import Path


def _fmt(v) -> str:
    if isinstance(v, bool) or isinstance(v, str):
        return str(v)
    if isinstance(v, int):
        return str(v)
    if v is None:
        return ""
    return format(float(v), ".17g")


def write_csv(path, header, rows) -> None:
    """Header row first, then one row per record, ``\\r\\n`` line endings."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Returns ``(header, rows)`` with numeric cells parsed as float (int if integral text)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for raw in reader:
            rows.append([_parse(c) for c in raw])
    return header, rows


def _parse(cell: str):
    if cell == "":
        return None
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell
