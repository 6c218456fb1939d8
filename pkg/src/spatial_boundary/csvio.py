"""CSV ingestion and report serialisation.

CSV dialect: comma separated, UTF-8, header row required, '.' as the decimal
mark.  Floats are written with ``repr`` so a write/read cycle is exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError

REPORT_SCHEMA = "spatial-boundary-report/1"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def read_table(
    path: str | Path,
    numeric: Sequence[str],
    text: Sequence[str] = (),
    *,
    optional: Sequence[str] = (),
    allow_empty: Sequence[str] = (),
) -> dict[str, np.ndarray]:
    """Read the named columns of a CSV file.

    ``numeric`` and ``text`` columns are required; ``optional`` numeric
    columns are read when present.  Columns in ``allow_empty`` map an empty
    cell to NaN.  Any malformed row raises :class:`ParseError` with its
    1-based line number.
    """
    path = str(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty; a header row is required", line=1, path=path) from None
        header = [h.strip() for h in header]
        missing = [c for c in (*numeric, *text) if c not in header]
        if missing:
            raise ParseError(
                f"missing required column(s) {', '.join(missing)}; header is {','.join(header)}",
                line=1, path=path,
            )
        num_cols = list(numeric) + [c for c in optional if c in header]
        pos = {c: header.index(c) for c in (*num_cols, *text)}
        out_num: dict[str, list[float]] = {c: [] for c in num_cols}
        out_txt: dict[str, list[str]] = {c: [] for c in text}
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(row)}", line=line, path=path
                )
            for c in num_cols:
                cell = row[pos[c]].strip()
                if cell == "" and c in allow_empty:
                    out_num[c].append(math.nan)
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(
                        f"column {c!r}: cannot parse {cell!r} as a number", line=line, path=path
                    ) from None
                if not math.isfinite(value):
                    raise ParseError(f"column {c!r}: non-finite value {cell!r}", line=line, path=path)
                out_num[c].append(value)
            for c in text:
                out_txt[c].append(row[pos[c]].strip())
    result: dict[str, np.ndarray] = {c: np.asarray(v, dtype=float) for c, v in out_num.items()}
    result.update({c: np.asarray(v, dtype=object) for c, v in out_txt.items()})
    return result


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_columns(path: str | Path, columns: Mapping[str, Sequence]) -> None:
    names = list(columns)
    write_table(path, names, zip(*(columns[c] for c in names)))


def to_jsonable(obj):
    """Plain JSON types only; NaN and infinities become ``null``."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def render_report(command: str, version: str, config: Mapping, results: Mapping) -> str:
    """Serialise a report.  No timestamps, so identical runs give identical bytes."""
    doc = {
        "schema": REPORT_SCHEMA,
        "command": command,
        "version": version,
        "config": config,
        "results": results,
    }
    return json.dumps(to_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"
