"""Core table data model: ingestion, type inference, sanitization, row-index joins.

Tables are immutable once constructed. Every table carries a synthetic integer
``row_id`` column at position 0 (values 0..n-1), and every cell keeps both its
original text and a coerced value so prompts can show raw strings while SQL sees
typed data.
"""

from __future__ import annotations

import csv
import datetime as dt
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    EmptyHeaderError,
    InvariantError,
    RaggedInputError,
    RowCountMismatchError,
)

ROW_ID = "row_id"

# Fraction of non-null cells that must parse as numbers for an int/real column.
NUMERIC_SHARE = 0.8

_CURRENCY_CHARS = "$€£¥"
_INT_RE = re.compile(r"^[+-]?\d+$")
_NUM_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)$")
_DATE_RE = re.compile(r"^(\d{4})-(\d{1,2})-(\d{1,2})$")


class ColumnType(str, Enum):
    INT = "int"
    REAL = "real"
    TEXT = "text"
    DATE = "date"


class Provenance(str, Enum):
    ORIGINAL = "original"
    AUGMENTING = "augmenting"
    JOINED = "joined"


@dataclass(frozen=True)
class Cell:
    """One table cell: original text plus the type-coerced value."""

    raw: str
    value: int | float | str | dt.date | None

    def sql_value(self) -> int | float | str | None:
        """Value as stored in the SQL engine (dates as ISO-8601 text)."""
        if isinstance(self.value, dt.date):
            return self.value.isoformat()
        return self.value


@dataclass(frozen=True)
class Column:
    raw_name: str
    sanitized_name: str
    inferred_type: ColumnType


@dataclass(frozen=True)
class Table:
    """Immutable rectangular relation with a synthetic row_id column."""

    name: str
    columns: tuple[Column, ...]
    rows: tuple[tuple[Cell, ...], ...]
    provenance: Provenance = Provenance.ORIGINAL
    title: str = ""

    def __post_init__(self) -> None:
        width = len(self.columns)
        if width == 0:
            raise InvariantError(f"table {self.name!r} has no columns")
        names = [c.sanitized_name for c in self.columns]
        if len(set(names)) != len(names):
            raise InvariantError(f"table {self.name!r} has duplicate column names")
        if any(not n for n in names):
            raise InvariantError(f"table {self.name!r} has an empty column name")
        if names[0] != ROW_ID:
            raise InvariantError(f"table {self.name!r} must have {ROW_ID} at position 0")
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise InvariantError(
                    f"table {self.name!r} row {i} has {len(row)} cells, expected {width}"
                )
            if row[0].value != i:
                raise InvariantError(
                    f"table {self.name!r} row {i} has {ROW_ID}={row[0].raw!r}"
                )

    @property
    def row_count(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.sanitized_name for c in self.columns)

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.sanitized_name == name:
                return i
        raise KeyError(name)

    def column_cells(self, name: str) -> tuple[Cell, ...]:
        i = self.column_index(name)
        return tuple(row[i] for row in self.rows)

    def to_dict(self) -> dict:
        """JSON-serializable snapshot used by run artifacts."""
        return {
            "name": self.name,
            "title": self.title,
            "provenance": self.provenance.value,
            "columns": [
                {"raw_name": c.raw_name, "name": c.sanitized_name, "type": c.inferred_type.value}
                for c in self.columns
            ],
            "rows": [[cell.raw for cell in row] for row in self.rows],
        }


def sanitize_identifier(raw: object) -> str:
    """Make a usable column identifier; idempotent and never empty.

    Names are kept close to verbatim (backtick quoting handles specials in SQL);
    only backticks are dropped and whitespace runs collapsed.
    """
    text = str(raw).replace("`", "")
    text = " ".join(text.split())
    return text or "col"


def uniquify_names(names: Iterable[str], reserved: Iterable[str] = ()) -> list[str]:
    """Resolve duplicate names with numeric suffixes (_2, _3, ...)."""
    taken = set(reserved)
    out: list[str] = []
    for name in names:
        candidate = name
        suffix = 2
        while candidate in taken:
            candidate = f"{name}_{suffix}"
            suffix += 1
        taken.add(candidate)
        out.append(candidate)
    return out


def _is_null(raw: str) -> bool:
    return not raw.strip()


def numeric_text(raw: str) -> str | None:
    """Cleaned numeric string, or None if the cell is not number-like.

    Strips surrounding whitespace, one leading currency symbol, and commas.
    """
    text = raw.strip()
    if text and text[0] in _CURRENCY_CHARS:
        text = text[1:].strip()
    text = text.replace(",", "")
    if _NUM_RE.match(text):
        return text
    return None


def _date_value(raw: str) -> dt.date | None:
    m = _DATE_RE.match(raw.strip())
    if not m:
        return None
    try:
        return dt.date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    except ValueError:
        return None


def infer_column_type(raw_cells: Sequence[str]) -> ColumnType:
    """Deterministic type inference over a column's raw cell texts.

    date only when every non-null cell full-matches ISO / YYYY-M-D; int/real when
    at least NUMERIC_SHARE of non-null cells parse numerically after stripping one
    leading currency symbol and commas; otherwise text.
    """
    non_null = [c for c in raw_cells if not _is_null(c)]
    if not non_null:
        return ColumnType.TEXT
    if all(_date_value(c) is not None for c in non_null):
        return ColumnType.DATE
    numeric = [numeric_text(c) for c in non_null]
    parsed = [n for n in numeric if n is not None]
    if len(parsed) / len(non_null) >= NUMERIC_SHARE:
        if all(_INT_RE.match(n) for n in parsed):
            return ColumnType.INT
        return ColumnType.REAL
    return ColumnType.TEXT


def coerce_cell(raw: str, ctype: ColumnType) -> Cell:
    """Build a Cell whose value follows the column's inferred type.

    Cells that fail coercion keep their raw text as the value (the SQL engine
    stores them with text affinity).
    """
    if _is_null(raw):
        return Cell(raw=raw, value=None)
    if ctype is ColumnType.DATE:
        d = _date_value(raw)
        return Cell(raw=raw, value=d if d is not None else raw)
    if ctype in (ColumnType.INT, ColumnType.REAL):
        text = numeric_text(raw)
        if text is None:
            return Cell(raw=raw, value=raw)
        if ctype is ColumnType.INT and _INT_RE.match(text):
            return Cell(raw=raw, value=int(text))
        return Cell(raw=raw, value=float(text))
    return Cell(raw=raw, value=raw)


def ingest_table(
    raw: Sequence[Sequence[object]],
    name: str,
    title: str = "",
    provenance: Provenance = Provenance.ORIGINAL,
) -> Table:
    """Build a Table from a header row plus zero or more data rows.

    Prepends the synthetic row_id column, sanitizes and dedupes names, infers
    column types, and coerces cells.
    """
    if not raw:
        raise EmptyHeaderError(f"table {name!r}: no header row")
    header = [str(h) for h in raw[0]]
    if not header or all(not h.strip() for h in header):
        raise EmptyHeaderError(f"table {name!r}: header row is empty")
    width = len(header)
    data: list[list[str]] = []
    for i, row in enumerate(raw[1:]):
        if len(row) != width:
            raise RaggedInputError(
                f"table {name!r}: row {i} has {len(row)} cells, expected {width}"
            )
        data.append([str(c) for c in row])

    sanitized = uniquify_names(
        [sanitize_identifier(h) for h in header], reserved=[ROW_ID]
    )
    columns = [Column(raw_name=ROW_ID, sanitized_name=ROW_ID, inferred_type=ColumnType.INT)]
    col_types = []
    for j, (raw_name, san) in enumerate(zip(header, sanitized)):
        ctype = infer_column_type([row[j] for row in data])
        col_types.append(ctype)
        columns.append(Column(raw_name=raw_name, sanitized_name=san, inferred_type=ctype))

    rows = []
    for i, row in enumerate(data):
        cells = [Cell(raw=str(i), value=i)]
        cells.extend(coerce_cell(cell, ctype) for cell, ctype in zip(row, col_types))
        rows.append(tuple(cells))
    return Table(
        name=name,
        columns=tuple(columns),
        rows=tuple(rows),
        provenance=provenance,
        title=title,
    )


def ingest_csv(
    path: str | Path,
    name: str,
    title: str = "",
    delimiter: str | None = None,
) -> Table:
    """Ingest a CSV/TSV file (header row first); delimiter inferred from suffix."""
    p = Path(path)
    if delimiter is None:
        delimiter = "\t" if p.suffix.lower() in (".tsv", ".tab") else ","
    with p.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    return ingest_table(rows, name=name, title=title)


def join_on_row_id(base: Table, aug: Table) -> Table:
    """Join an augmenting table onto the base by row index.

    Base columns come first and are preserved bitwise; the augmenting table's
    row_id is dropped; name collisions are suffixed.
    """
    if aug.row_count != base.row_count:
        raise RowCountMismatchError(
            f"augmenting table has {aug.row_count} rows, base has {base.row_count}"
        )
    extra = [c for c in aug.columns if c.sanitized_name != ROW_ID]
    new_names = uniquify_names(
        [c.sanitized_name for c in extra], reserved=base.column_names
    )
    columns = list(base.columns)
    columns.extend(
        Column(raw_name=c.raw_name, sanitized_name=n, inferred_type=c.inferred_type)
        for c, n in zip(extra, new_names)
    )
    aug_idx = [aug.column_index(c.sanitized_name) for c in extra]
    rows = tuple(
        tuple(base_row) + tuple(aug_row[i] for i in aug_idx)
        for base_row, aug_row in zip(base.rows, aug.rows)
    )
    return Table(
        name=base.name,
        columns=tuple(columns),
        rows=rows,
        provenance=Provenance.JOINED,
        title=base.title,
    )
