"""Question analysis: augmentation-plan parsing and closed-domain JSON extraction.

Open domain: the model lists new columns in the line format
``` `new_column` = @("question"; [relevant_columns]) ``` after a
"Final output:" marker, or "None" when the table is already sufficient.
Closed domain: the analysis and extraction are merged into one call whose final
output is a JSON object mapping new column names to equal-length value lists.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from .errors import LengthMismatchError, ParseError, TokenBudgetExceededError
from .llmclient import GenerationParams, KnowledgeSource, default_params
from .promptkit import (
    PromptTemplate,
    build_prompt,
    builtin_template,
    render_create_table,
    render_pipe,
)
from .tabular import Provenance, Table, ingest_table, numeric_text, sanitize_identifier

logger = logging.getLogger(__name__)

FINAL_OUTPUT_MARKER = "Final output:"

_QUERY_RE = re.compile(
    r'^`(?P<name>[^`]+)`\s*=\s*@\(\s*"(?P<question>[^"]*)"\s*;\s*\[(?P<cols>[^\]]*)\]\s*\)\s*,?\s*$'
)


@dataclass(frozen=True)
class AugmentationQuery:
    """One requested new column: its name, per-row question, and input columns."""

    new_column: str
    question: str
    relevant_columns: tuple[str, ...]


@dataclass(frozen=True)
class AugmentationPlan:
    queries: tuple[AugmentationQuery, ...]
    raw_response: str
    reasoning: str

    @property
    def needs_augmentation(self) -> bool:
        return bool(self.queries)


@dataclass(frozen=True)
class ClosedDomainExtraction:
    """Columns extracted from the document, already numerically coerced."""

    columns: dict[str, tuple]
    raw_response: str

    def to_table(self, name: str = "t2") -> Table:
        header = list(self.columns)
        n = len(next(iter(self.columns.values())))
        rows = [header] + [
            [_value_text(self.columns[c][i]) for c in header] for i in range(n)
        ]
        return ingest_table(rows, name=name, provenance=Provenance.AUGMENTING)


def _value_text(value) -> str:
    return str(value)


def _final_block(response: str) -> str:
    """Text after the LAST "Final output:" marker (reasoning may mention it earlier)."""
    idx = response.rfind(FINAL_OUTPUT_MARKER)
    if idx < 0:
        raise ParseError(f"no {FINAL_OUTPUT_MARKER!r} marker in response")
    return response[idx + len(FINAL_OUTPUT_MARKER):].strip()


def _column_lookup(table: Table) -> dict[str, str]:
    lookup: dict[str, str] = {}
    for col in table.columns:
        lookup.setdefault(col.raw_name.strip().casefold(), col.sanitized_name)
        lookup.setdefault(col.sanitized_name.casefold(), col.sanitized_name)
    return lookup


def _resolve_columns(cols_text: str, table: Table) -> tuple[str, ...]:
    lookup = _column_lookup(table)

    def resolve_one(name: str) -> str | None:
        return lookup.get(name.strip().strip("`").casefold())

    parts = [p for p in (s.strip() for s in cols_text.split(",")) if p]
    if parts:
        resolved = [resolve_one(p) for p in parts]
        if all(r is not None for r in resolved):
            return tuple(resolved)  # type: ignore[arg-type]
    # names may themselves contain commas; retry the bracket content whole
    whole = resolve_one(cols_text)
    if whole is not None:
        return (whole,)
    raise ParseError(f"unknown column(s) in [{cols_text}]")


def parse_plan(response: str, table: Table) -> list[AugmentationQuery]:
    """Parse the final output block into augmentation queries.

    "None" yields an empty list; any other non-matching line raises ParseError,
    as does a question naming a column absent from the table.
    """
    block = _final_block(response)
    if block == "None":
        return []
    queries: list[AugmentationQuery] = []
    for line in block.splitlines():
        line = line.strip()
        if not line:
            continue
        m = _QUERY_RE.match(line)
        if not m:
            raise ParseError(f"line does not match the plan format: {line!r}")
        question = m.group("question").strip()
        if not question:
            raise ParseError(f"empty question in plan line: {line!r}")
        queries.append(
            AugmentationQuery(
                new_column=sanitize_identifier(m.group("name")),
                question=question,
                relevant_columns=_resolve_columns(m.group("cols"), table),
            )
        )
    return queries


def render_plan(queries: list[AugmentationQuery] | tuple[AugmentationQuery, ...]) -> str:
    """Inverse of parse_plan for well-formed plans (used by round-trip tests)."""
    if not queries:
        return f"{FINAL_OUTPUT_MARKER}\nNone"
    lines = [
        f'`{q.new_column}` = @("{q.question}"; [{", ".join(q.relevant_columns)}])'
        for q in queries
    ]
    return FINAL_OUTPUT_MARKER + "\n" + "\n".join(lines)


def analysis_rendering(table: Table, question: str, preview_rows: int = 3) -> str:
    """Open-domain step-1 task: title, schema with row preview, then the question."""
    title = f"Title: {table.title}\n" if table.title else ""
    schema = render_create_table(table, preview_rows=preview_rows).text
    return f"{title}{schema}\n\nQ: {question}"


def analysis_messages(
    question: str,
    table: Table,
    template: PromptTemplate,
    preview_rows: int = 3,
    token_limit: int | None = None,
) -> list[dict]:
    """Step-1 messages; over-budget prompts retry with a halved row preview."""
    while True:
        task = analysis_rendering(table, question, preview_rows=preview_rows)
        try:
            return build_prompt(template, task, token_limit=token_limit)
        except TokenBudgetExceededError:
            if preview_rows <= 1:
                raise
            preview_rows //= 2
            logger.warning("prompt over token budget; shrinking preview to %d rows", preview_rows)


def plan_augmentation(
    question: str,
    table: Table,
    source: KnowledgeSource,
    params: GenerationParams | None = None,
    template: PromptTemplate | None = None,
    preview_rows: int = 3,
    token_limit: int | None = None,
) -> list[AugmentationPlan]:
    """Sample augmentation plans for an open-domain question.

    Returns one plan per sample (n_samples of them). A response that fails to
    parse degrades to an empty plan with a warning; the pipeline then attempts
    SQL over the original table.
    """
    if params is None:
        params = default_params("analyze", "greedy", "wikitq")
    if template is None:
        template = builtin_template("wikitq", "analyze")
    messages = analysis_messages(
        question, table, template, preview_rows=preview_rows, token_limit=token_limit
    )
    texts = source.complete(messages, params)
    plans = []
    for text in texts:
        reasoning = text[: text.rfind(FINAL_OUTPUT_MARKER)].strip() if FINAL_OUTPUT_MARKER in text else text.strip()
        try:
            queries = parse_plan(text, table)
        except ParseError as exc:
            logger.warning("augmentation plan rejected (%s); continuing without augmentation", exc)
            queries = []
        plans.append(
            AugmentationPlan(queries=tuple(queries), raw_response=text, reasoning=reasoning)
        )
    return plans


def _strip_fences(block: str) -> str:
    m = re.search(r"```[^\n]*\n(.*?)```", block, re.DOTALL)
    return m.group(1).strip() if m else block


def _coerce_extraction_value(value):
    """Numeric-looking strings become numbers; integral floats become ints."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, (int, float)):
        return value
    text = str(value)
    cleaned = numeric_text(text)
    if cleaned is None:
        return text
    try:
        return int(cleaned)
    except ValueError:
        f = float(cleaned)
        return int(f) if f.is_integer() else f


def parse_extraction(response: str) -> dict[str, tuple] | None:
    """Parse the closed-domain final output into a column map, or None for "None".

    Accepts fenced or bare JSON and tolerates trailing prose. Ragged columns
    raise LengthMismatchError; null/NaN/empty values raise ParseError.
    """
    block = _strip_fences(_final_block(response))
    if block == "None":
        return None
    start = block.find("{")
    if start < 0:
        raise ParseError("final output is neither 'None' nor a JSON object")
    try:
        obj, _ = json.JSONDecoder().raw_decode(block[start:])
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in final output: {exc}") from exc
    if not isinstance(obj, dict) or not obj:
        raise ParseError("final output JSON must be a non-empty object")

    columns: dict[str, tuple] = {}
    length: int | None = None
    for key, values in obj.items():
        if not isinstance(values, list):
            values = [values]
        if not values:
            raise LengthMismatchError(f"column {key!r} has no values")
        if length is None:
            length = len(values)
        elif len(values) != length:
            raise LengthMismatchError(
                f"column {key!r} has {len(values)} values, expected {length}"
            )
        coerced = []
        for v in values:
            if v is None or (isinstance(v, float) and v != v) or str(v).strip() == "":
                raise ParseError(f"column {key!r} contains an empty/NaN value")
            coerced.append(_coerce_extraction_value(v))
        columns[sanitize_identifier(key)] = tuple(coerced)
    return columns


def extraction_rendering(table: Table, question: str, document: str) -> str:
    """Closed-domain merged step-1/2 task: report, linearized table, question."""
    return f"Report:\n{document}\nTables:\n{render_pipe(table).text}\n\nQuestion: {question}"


def extract_closed_domain(
    question: str,
    table: Table,
    document: str,
    source: KnowledgeSource,
    params: GenerationParams | None = None,
    template: PromptTemplate | None = None,
    dataset: str = "tatqa",
    token_limit: int | None = None,
) -> list[ClosedDomainExtraction | None]:
    """Sample closed-domain extractions; one entry per sample, None when the
    model judged the table sufficient or its output was unusable."""
    if not document:
        raise ValueError("closed-domain extraction requires a non-empty document")
    if params is None:
        params = default_params("analyze", "greedy", dataset)
    if template is None:
        template = builtin_template(dataset, "analyze")
    messages = build_prompt(
        template, extraction_rendering(table, question, document), token_limit=token_limit
    )
    texts = source.complete(messages, params)
    out: list[ClosedDomainExtraction | None] = []
    for text in texts:
        try:
            columns = parse_extraction(text)
        except (ParseError, LengthMismatchError) as exc:
            logger.warning("extraction rejected (%s); continuing without augmentation", exc)
            columns = None
        if columns is None:
            out.append(None)
        else:
            out.append(ClosedDomainExtraction(columns=columns, raw_response=text))
    return out
