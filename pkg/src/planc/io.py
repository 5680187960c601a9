"""Trace files.

Two interchangeable encodings of the same table:

* columnar text: comma-separated, one header line with the fixed column list,
  floats written as their shortest round-tripping decimal (``repr``),
  ``stance_index`` as an integer and ``event`` as ``;``-joined names;
* structured JSON: ``{"schema", "columns", "rows"}`` with the same cells.

Both decode to a :class:`TraceTable`, and encoding a table is canonical, so
text -> JSON -> text reproduces the input bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _layout as lay
from .sim import RolloutTrace, event_bits, event_names

__all__ = [
    "TRACE_SCHEMA",
    "TraceFormatError",
    "TraceTable",
    "trace_table",
    "dumps_csv",
    "loads_csv",
    "dumps_json",
    "loads_json",
    "loads_any",
    "convert",
]

TRACE_SCHEMA = "planc.trace/1"
COLUMNS = lay.TRACE_COLUMNS
_NUMERIC = COLUMNS[:-1]
_INT_COLUMNS = ("stance_index",)


class TraceFormatError(ValueError):
    """Malformed trace; ``column`` names the offending column when known."""

    def __init__(self, message: str, column: str | None = None):
        super().__init__(f"column {column!r}: {message}" if column else message)
        self.column = column


@dataclass(frozen=True)
class TraceTable:
    values: np.ndarray  # (n, len(COLUMNS) - 1) floats
    events: tuple[tuple[str, ...], ...]

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name not in _NUMERIC:
            raise KeyError(name)
        return self.values[:, _NUMERIC.index(name)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceTable):
            return NotImplemented
        return self.events == other.events and np.array_equal(self.values, other.values, equal_nan=True)


def trace_table(trace: RolloutTrace) -> TraceTable:
    n = len(_NUMERIC)
    vals = np.array(trace.rows[:, :n], dtype=np.float64).reshape(-1, n)
    return TraceTable(vals, tuple(event_names(int(b)) for b in trace.events))


def _fmt(name: str, v: float) -> str:
    if name in _INT_COLUMNS:
        return str(int(v))
    return repr(float(v))


def _cells(table: TraceTable):
    for row, ev in zip(table.values, table.events):
        yield [_fmt(name, v) for name, v in zip(_NUMERIC, row)], ";".join(ev)


def dumps_csv(table: TraceTable) -> str:
    lines = [",".join(COLUMNS)]
    for cells, ev in _cells(table):
        lines.append(",".join(cells + [ev]))
    return "\n".join(lines) + "\n"


def _check_header(cols) -> None:
    for c in cols:
        if c not in COLUMNS:
            raise TraceFormatError("unknown column", c)
    for c in COLUMNS:
        if c not in cols:
            raise TraceFormatError("missing column", c)
    if tuple(cols) != COLUMNS:
        raise TraceFormatError(f"columns out of order; expected {', '.join(COLUMNS)}")


def _parse_float(cell, name: str, line: int) -> float:
    try:
        v = float(cell)
    except (TypeError, ValueError):
        raise TraceFormatError(f"row {line}: not a number: {cell!r}", name) from None
    if name in _INT_COLUMNS and not (math.isfinite(v) and v.is_integer()):
        raise TraceFormatError(f"row {line}: not an integer: {cell!r}", name)
    return v


def _parse_events(cell: str, line: int) -> tuple[str, ...]:
    names = tuple(cell.split(";")) if cell else ()
    try:
        event_bits(names)
    except ValueError as exc:
        raise TraceFormatError(f"row {line}: {exc}", "event") from None
    return names


def _build(values: list, events: list) -> TraceTable:
    arr = np.array(values, dtype=np.float64).reshape(-1, len(_NUMERIC))
    return TraceTable(arr, tuple(events))


def loads_csv(text: str) -> TraceTable:
    lines = text.splitlines()
    if not lines:
        raise TraceFormatError("empty file: missing header")
    _check_header(lines[0].split(","))
    values, events = [], []
    for i, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != len(COLUMNS):
            raise TraceFormatError(f"row {i}: expected {len(COLUMNS)} cells, got {len(cells)}")
        values.append([_parse_float(c, name, i) for c, name in zip(cells, _NUMERIC)])
        events.append(_parse_events(cells[-1], i))
    return _build(values, events)


def dumps_json(table: TraceTable) -> str:
    # cells keep their text form so the two encodings share one canonical spelling
    rows = [cells + [ev] for cells, ev in _cells(table)]
    doc = {"schema": TRACE_SCHEMA, "columns": list(COLUMNS), "rows": rows}
    return json.dumps(doc, indent=1) + "\n"


def loads_json(text: str) -> TraceTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema") != TRACE_SCHEMA:
        raise TraceFormatError(f"expected schema {TRACE_SCHEMA!r}")
    cols = doc.get("columns")
    if not isinstance(cols, list):
        raise TraceFormatError("missing column list")
    _check_header(cols)
    values, events = [], []
    for i, row in enumerate(doc.get("rows", []), start=1):
        if not isinstance(row, list) or len(row) != len(COLUMNS):
            raise TraceFormatError(f"row {i}: expected {len(COLUMNS)} cells")
        if not all(isinstance(c, str) for c in row):
            raise TraceFormatError(f"row {i}: cells must be strings")
        values.append([_parse_float(c, name, i) for c, name in zip(row, _NUMERIC)])
        events.append(_parse_events(row[-1], i))
    return _build(values, events)


def loads_any(text: str) -> tuple[TraceTable, str]:
    """Decode either encoding; returns ``(table, "json" | "csv")``."""
    if text.lstrip().startswith("{"):
        return loads_json(text), "json"
    return loads_csv(text), "csv"


def convert(text: str, fmt: str) -> str:
    table, _ = loads_any(text)
    if fmt == "json":
        return dumps_json(table)
    if fmt == "csv":
        return dumps_csv(table)
    raise ValueError(f"unknown trace format {fmt!r} (csv or json)")
