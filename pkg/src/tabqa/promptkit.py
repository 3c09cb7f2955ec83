"""Table renderings and few-shot prompt assembly.

Templates are data files shipped with the package (one per dataset and step),
holding the system instructions and the in-context example pairs verbatim.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import TemplateError, TokenBudgetExceededError
from .tabular import ColumnType, Table

PIPE_SEP = " | "
DEFAULT_TOKEN_LIMIT = 16000

_TEMPLATE_DIR = Path(__file__).parent / "templates"
_SECTION_RE = re.compile(r"^#---\s*(system|shot-input|shot-output)\s*$")

_SQL_TYPE = {
    ColumnType.INT: "int",
    ColumnType.REAL: "real",
    ColumnType.TEXT: "text",
    ColumnType.DATE: "text",
}


class RenderMode(str, Enum):
    PIPE_ROWS = "pipe_rows"
    CREATE_TABLE_PREVIEW = "create_table_preview"
    CREATE_TABLE_FULL = "create_table_full"


@dataclass(frozen=True)
class TableRendering:
    mode: RenderMode
    text: str
    token_estimate: int


def estimate_tokens(text: str) -> int:
    """Cheap ~4-characters-per-token estimate used for budgeting and bucketing."""
    return (len(text) + 3) // 4


def _pipe_safe(text: str) -> str:
    # keep the pipe format unambiguous for cells containing the separator
    return text.replace(" | ", " / ")


def render_pipe(table: Table) -> TableRendering:
    """Linearize a table: header then rows, columns joined by " | "."""
    lines = [PIPE_SEP.join(_pipe_safe(c.sanitized_name) for c in table.columns)]
    for row in table.rows:
        lines.append(PIPE_SEP.join(_pipe_safe(cell.raw) for cell in row))
    text = "\n".join(lines)
    return TableRendering(RenderMode.PIPE_ROWS, text, estimate_tokens(text))


def aligned_block(header: list[str], rows: list[list[str]], gap: int = 4) -> str:
    """Space-aligned columns: each column padded to its widest value plus a gap."""
    if not rows:
        widths = [len(h) for h in header]
    else:
        widths = [
            max(len(header[j]), max(len(r[j]) for r in rows))
            for j in range(len(header))
        ]
    def fmt(values: list[str]) -> str:
        parts = [v.ljust(widths[j] + gap) for j, v in enumerate(values[:-1])]
        parts.append(values[-1])
        return "".join(parts).rstrip()
    return "\n".join([fmt(header)] + [fmt(r) for r in rows])


def render_create_table(
    table: Table, preview_rows: int = 3, full: bool = False
) -> TableRendering:
    """CREATE TABLE schema block plus a commented row preview.

    full=True lists every row tab-separated ("All rows of the table:");
    otherwise up to preview_rows rows are shown space-aligned
    ("N example rows: ... LIMIT N"); preview_rows=0 emits the schema alone.
    """
    if preview_rows < 0:
        raise ValueError("preview_rows must be >= 0")
    col_lines = [
        f"    {c.sanitized_name} {_SQL_TYPE[c.inferred_type]}" for c in table.columns
    ]
    schema = f"CREATE TABLE {table.name}(\n" + ",\n".join(col_lines) + ")"
    names = [c.sanitized_name for c in table.columns]
    if full:
        body = [names] + [[cell.raw for cell in row] for row in table.rows]
        comment = (
            "/*\nAll rows of the table:\n"
            f"SELECT * FROM {table.name};\n"
            + "\n".join("\t".join(r) for r in body)
            + "\n*/"
        )
        text = schema + "\n" + comment
        mode = RenderMode.CREATE_TABLE_FULL
    elif preview_rows > 0:
        shown = [[cell.raw for cell in row] for row in table.rows[:preview_rows]]
        comment = (
            f"/*\n{preview_rows} example rows:\n"
            f"SELECT * FROM {table.name} LIMIT {preview_rows};\n"
            + aligned_block(names, shown)
            + "\n*/"
        )
        text = schema + "\n" + comment
        mode = RenderMode.CREATE_TABLE_PREVIEW
    else:
        text = schema
        mode = RenderMode.CREATE_TABLE_PREVIEW
    return TableRendering(mode, text, estimate_tokens(text))


@dataclass(frozen=True)
class PromptTemplate:
    """System instructions plus ordered in-context example pairs."""

    template_id: str
    step: str
    dataset: str
    num_shots: int
    system_text: str
    shots: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if self.num_shots != len(self.shots):
            raise TemplateError(
                f"template {self.template_id!r}: num_shots={self.num_shots} "
                f"but {len(self.shots)} shots present"
            )


def _clean_section(lines: list[str]) -> str:
    text = "\n".join(lines)
    return text.strip("\n")


def parse_template(text: str, origin: str = "<string>") -> PromptTemplate:
    lines = text.splitlines()
    meta: dict[str, str] = {}
    i = 0
    while i < len(lines) and not _SECTION_RE.match(lines[i]):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if ":" not in line:
            raise TemplateError(f"{origin}: bad front-matter line {line!r}")
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    for required in ("id", "step", "dataset", "num_shots"):
        if required not in meta:
            raise TemplateError(f"{origin}: missing front-matter key {required!r}")

    sections: list[tuple[str, str]] = []
    current: str | None = None
    buf: list[str] = []
    for line in lines[i:]:
        m = _SECTION_RE.match(line)
        if m:
            if current is not None:
                sections.append((current, _clean_section(buf)))
            current = m.group(1)
            buf = []
        else:
            buf.append(line)
    if current is not None:
        sections.append((current, _clean_section(buf)))

    if not sections or sections[0][0] != "system":
        raise TemplateError(f"{origin}: first section must be '#--- system'")
    system_text = sections[0][1]
    shots: list[tuple[str, str]] = []
    rest = sections[1:]
    if len(rest) % 2 != 0:
        raise TemplateError(f"{origin}: unpaired shot sections")
    for j in range(0, len(rest), 2):
        if rest[j][0] != "shot-input" or rest[j + 1][0] != "shot-output":
            raise TemplateError(f"{origin}: shots must alternate input/output")
        shots.append((rest[j][1], rest[j + 1][1]))

    return PromptTemplate(
        template_id=meta["id"],
        step=meta["step"],
        dataset=meta["dataset"],
        num_shots=int(meta["num_shots"]),
        system_text=system_text,
        shots=tuple(shots),
    )


def load_template(path: str | Path) -> PromptTemplate:
    p = Path(path)
    return parse_template(p.read_text(encoding="utf-8"), origin=str(p))


def builtin_template(dataset: str, step: str) -> PromptTemplate:
    """Load one of the packaged templates (named '<dataset>_<step>.txt')."""
    path = _TEMPLATE_DIR / f"{dataset}_{step}.txt"
    if not path.exists():
        raise TemplateError(f"no builtin template for dataset={dataset!r} step={step!r}")
    return load_template(path)


def build_prompt(
    template: PromptTemplate,
    task_rendering: str,
    token_limit: int | None = DEFAULT_TOKEN_LIMIT,
) -> list[dict]:
    """Assemble the message sequence: system, shot pairs in order, then the task."""
    messages = [{"role": "system", "content": template.system_text}]
    for shot_in, shot_out in template.shots:
        messages.append({"role": "user", "content": shot_in})
        messages.append({"role": "assistant", "content": shot_out})
    messages.append({"role": "user", "content": task_rendering})
    if token_limit is not None:
        estimate = sum(estimate_tokens(m["content"]) for m in messages)
        if estimate > token_limit:
            raise TokenBudgetExceededError(estimate, token_limit)
    return messages
