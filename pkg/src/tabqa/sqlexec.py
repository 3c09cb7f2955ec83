"""In-memory SQL sandbox: loads a bundle, runs candidates read-only, classifies outcomes.

Each question gets a fresh hermetic sqlite database. Write statements are denied
through the authorizer and classified as syntax errors; execution failures never
propagate out of execute().
"""

from __future__ import annotations

import sqlite3
import time
from dataclasses import dataclass
from enum import Enum

from .augment import BundleMode, TableBundle
from .sqlgen import SqlCandidate
from .tabular import ColumnType, Table

DEFAULT_TIMEOUT = 5.0
_PROGRESS_INTERVAL = 2000  # VM instructions between timeout checks

_SQLITE_TYPE = {
    ColumnType.INT: "INTEGER",
    ColumnType.REAL: "REAL",
    ColumnType.TEXT: "TEXT",
    ColumnType.DATE: "TEXT",
}

_READ_ACTIONS = {
    sqlite3.SQLITE_SELECT,
    sqlite3.SQLITE_READ,
    sqlite3.SQLITE_FUNCTION,
    sqlite3.SQLITE_RECURSIVE,
}


class ExecStatus(str, Enum):
    OK = "ok"
    SYNTAX_ERROR = "syntax_error"
    MISSING_IDENTIFIER = "missing_identifier"
    TYPE_ERROR = "type_error"
    EMPTY_RESULT = "empty_result"
    ENGINE_ERROR = "engine_error"


ERROR_STATUSES = frozenset(
    {
        ExecStatus.SYNTAX_ERROR,
        ExecStatus.MISSING_IDENTIFIER,
        ExecStatus.TYPE_ERROR,
        ExecStatus.ENGINE_ERROR,
    }
)


@dataclass(frozen=True)
class ExecutionOutcome:
    status: ExecStatus
    value: tuple[tuple, ...] | None = None
    message: str = ""

    def __post_init__(self) -> None:
        if (self.status is ExecStatus.OK) != (self.value is not None):
            raise ValueError("value must be present exactly when status is ok")
        if self.status not in (ExecStatus.OK,) and not self.message:
            raise ValueError("non-ok outcomes need a message")

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "value": [list(r) for r in self.value] if self.value is not None else None,
            "message": self.message,
        }


class SqlSession:
    """One loaded in-memory database; confined to a single worker."""

    def __init__(self, conn: sqlite3.Connection, table_names: list[str]):
        self._conn = conn
        self.table_names = table_names

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "SqlSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _quote(name: str) -> str:
    return "`" + name.replace("`", "") + "`"


def _create_table(conn: sqlite3.Connection, table: Table) -> None:
    cols = ", ".join(
        f"{_quote(c.sanitized_name)} {_SQLITE_TYPE[c.inferred_type]}" for c in table.columns
    )
    conn.execute(f"CREATE TABLE {_quote(table.name)}({cols})")
    placeholders = ", ".join("?" for _ in table.columns)
    conn.executemany(
        f"INSERT INTO {_quote(table.name)} VALUES ({placeholders})",
        [tuple(cell.sql_value() for cell in row) for row in table.rows],
    )


def _authorizer(action, *_args):
    if action in _READ_ACTIONS:
        return sqlite3.SQLITE_OK
    return sqlite3.SQLITE_DENY


def load_bundle(bundle: TableBundle) -> SqlSession:
    """Fresh session per question: t1 is the joined table in open mode or the
    base table in closed mode; t2 is created when an augmenting table exists."""
    conn = sqlite3.connect(":memory:")
    tables: list[Table] = []
    if bundle.mode is BundleMode.OPEN_JOINED:
        tables.append(bundle.primary_table)
    else:
        tables.append(bundle.base)
        if bundle.augmenting is not None:
            tables.append(bundle.augmenting)
    for t in tables:
        _create_table(conn, t)
    conn.commit()
    conn.set_authorizer(_authorizer)  # everything after loading is read-only
    return SqlSession(conn, [t.name for t in tables])


def _classify(exc: Exception) -> ExecStatus:
    msg = str(exc).lower()
    if isinstance(exc, sqlite3.Warning):
        return ExecStatus.SYNTAX_ERROR  # e.g. multiple statements in one call
    if isinstance(exc, sqlite3.ProgrammingError):
        return ExecStatus.SYNTAX_ERROR
    if "not authorized" in msg or "syntax error" in msg or "unrecognized token" in msg or "incomplete input" in msg:
        return ExecStatus.SYNTAX_ERROR
    if "no such column" in msg or "no such table" in msg or "no such function" in msg or "ambiguous column name" in msg:
        return ExecStatus.MISSING_IDENTIFIER
    if (
        "datatype mismatch" in msg
        or "wrong number of arguments" in msg
        or "row value misused" in msg
        or "sub-select returns" in msg
    ):
        return ExecStatus.TYPE_ERROR
    return ExecStatus.ENGINE_ERROR


def execute(
    session: SqlSession, candidate: SqlCandidate, timeout: float = DEFAULT_TIMEOUT
) -> ExecutionOutcome:
    """Run one candidate read-only and classify the outcome; never raises."""
    if not candidate.valid or not candidate.sql.strip():
        return ExecutionOutcome(
            status=ExecStatus.SYNTAX_ERROR, message="no SQL extracted from response"
        )
    conn = session._conn
    deadline = time.monotonic() + timeout

    def _tick():
        return 1 if time.monotonic() > deadline else 0

    conn.set_progress_handler(_tick, _PROGRESS_INTERVAL)
    try:
        cursor = conn.execute(candidate.sql)
        rows = cursor.fetchall()
    except Exception as exc:  # classified, never propagated
        status = _classify(exc)
        message = str(exc)
        if "interrupted" in message.lower():
            message = f"query exceeded {timeout:g}s timeout"
        return ExecutionOutcome(status=status, message=message)
    finally:
        conn.set_progress_handler(None, 0)
    if not rows:
        return ExecutionOutcome(
            status=ExecStatus.EMPTY_RESULT, message="query returned no rows"
        )
    return ExecutionOutcome(status=ExecStatus.OK, value=tuple(tuple(r) for r in rows))
