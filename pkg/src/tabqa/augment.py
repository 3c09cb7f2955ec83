"""Materialize augmentation queries into an augmenting table and bundle it.

Open domain: each query is answered row by row by the knowledge source and the
resulting columns are joined onto the base table by row index. Closed domain:
the extracted column map becomes a small second table rendered separately.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum

from .analysis import AugmentationPlan, AugmentationQuery, ClosedDomainExtraction
from .errors import AlignmentError
from .llmclient import GenerationParams, KnowledgeSource, default_params
from .promptkit import PromptTemplate, aligned_block, build_prompt, builtin_template
from .tabular import ROW_ID, Provenance, Table, ingest_table, join_on_row_id

logger = logging.getLogger(__name__)


class BundleMode(str, Enum):
    OPEN_JOINED = "open_joined"
    CLOSED_SEPARATE = "closed_separate"


@dataclass(frozen=True)
class TableBundle:
    """The original table plus (optionally) its augmentation.

    In open_joined mode the augmenting columns are folded into `joined`; in
    closed_separate mode the augmenting table stays a separate t2.
    """

    base: Table
    augmenting: Table | None
    joined: Table | None
    mode: BundleMode
    dropped_queries: tuple[str, ...] = ()

    @property
    def primary_table(self) -> Table:
        """The table SQL generation treats as t1."""
        return self.joined if self.joined is not None else self.base


def rowwise_rendering(query: AugmentationQuery, table: Table) -> str:
    """Fig-style request: row_id plus the relevant columns, then the question."""
    header = [ROW_ID, *query.relevant_columns]
    idx = [table.column_index(name) for name in header]
    rows = [[row[i].raw for i in idx] for row in table.rows]
    title = table.title or table.name
    return (
        "Give a database as shown below:\n"
        f"Table: {title}\n"
        "/*\n"
        f"{aligned_block(header, rows)}\n"
        "*/\n"
        f'Q: Answer question "{query.question}" row by row.'
    )


def parse_rowwise(response: str, expected_row_ids: list[int]) -> list[str]:
    """Extract one answer per row from a row-wise response.

    Data lines are split on runs of 2+ spaces or tabs; the last field is the
    answer. Alignment is keyed on echoed row ids when every line carries one,
    positional otherwise.
    """
    rows: list[list[str]] = []
    for line in response.splitlines():
        stripped = line.strip()
        if stripped in ("", "/*", "*/", "Output:") or stripped.startswith("Table:"):
            continue
        fields = [f for f in _split_fields(stripped) if f]
        if len(fields) < 2:
            continue
        if fields[0].casefold() == ROW_ID:  # header echo
            continue
        rows.append(fields)

    expected = list(expected_row_ids)
    if not expected:
        return []
    by_id: dict[int, str] = {}
    all_ids = True
    for fields in rows:
        try:
            rid = int(fields[0])
        except ValueError:
            all_ids = False
            break
        by_id[rid] = fields[-1]
    if all_ids and set(by_id) == set(expected):
        return [by_id[r] for r in expected]
    if len(rows) == len(expected):
        return [fields[-1] for fields in rows]
    raise AlignmentError(
        f"expected {len(expected)} row answers, parsed {len(rows)} "
        f"(ids {sorted(by_id)[:8]}…)"
    )


def _split_fields(line: str) -> list[str]:
    return re.split(r"\t|\s{2,}", line)


def answer_rowwise(
    query: AugmentationQuery,
    table: Table,
    source: KnowledgeSource,
    params: GenerationParams | None = None,
    template: PromptTemplate | None = None,
    token_limit: int | None = None,
) -> list[str]:
    """Answer one augmentation query for every table row.

    Returns exactly table.row_count values aligned by row_id. A misaligned
    response is retried once (effective only against live endpoints; replay
    serves the identical cached response).
    """
    if table.row_count == 0:
        return []
    if params is None:
        params = default_params("augment", "greedy", "wikitq")
    if template is None:
        template = builtin_template("wikitq", "augment")
    messages = build_prompt(template, rowwise_rendering(query, table), token_limit=token_limit)
    expected = [row[0].value for row in table.rows]
    last_error: AlignmentError | None = None
    for _ in range(2):
        text = source.complete(messages, params)[0]
        try:
            return parse_rowwise(text, expected)
        except AlignmentError as exc:
            last_error = exc
            logger.warning("row-wise answer misaligned for %r: %s", query.new_column, exc)
    raise last_error  # type: ignore[misc]


def build_bundle(
    plan: AugmentationPlan | ClosedDomainExtraction | None,
    base: Table,
    source: KnowledgeSource | None = None,
    params: GenerationParams | None = None,
    template: PromptTemplate | None = None,
    token_limit: int | None = None,
) -> TableBundle:
    """Materialize a step-1 result into a TableBundle.

    AugmentationPlan -> open_joined (one row-wise call per query, columns joined
    in plan order; queries that stay misaligned are dropped and recorded).
    ClosedDomainExtraction/None -> closed_separate with t2 when present.
    """
    if isinstance(plan, ClosedDomainExtraction):
        return TableBundle(
            base=base,
            augmenting=plan.to_table("t2"),
            joined=None,
            mode=BundleMode.CLOSED_SEPARATE,
        )
    if plan is None:
        return TableBundle(base=base, augmenting=None, joined=None, mode=BundleMode.CLOSED_SEPARATE)

    if not plan.queries:
        return TableBundle(base=base, augmenting=None, joined=None, mode=BundleMode.OPEN_JOINED)
    if source is None:
        raise ValueError("open-domain augmentation requires a knowledge source")

    names: list[str] = []
    columns: list[list[str]] = []
    dropped: list[str] = []
    for query in plan.queries:
        try:
            values = answer_rowwise(
                query, base, source, params=params, template=template, token_limit=token_limit
            )
        except AlignmentError:
            logger.warning("dropping augmentation query %r after retry", query.new_column)
            dropped.append(query.new_column)
            continue
        names.append(query.new_column)
        columns.append(values)

    if not names:
        return TableBundle(
            base=base,
            augmenting=None,
            joined=None,
            mode=BundleMode.OPEN_JOINED,
            dropped_queries=tuple(dropped),
        )
    aug_rows = [names] + [
        [columns[j][i] for j in range(len(names))] for i in range(base.row_count)
    ]
    augmenting = ingest_table(aug_rows, name="aug", provenance=Provenance.AUGMENTING)
    joined = join_on_row_id(base, augmenting)
    return TableBundle(
        base=base,
        augmenting=augmenting,
        joined=joined,
        mode=BundleMode.OPEN_JOINED,
        dropped_queries=tuple(dropped),
    )
