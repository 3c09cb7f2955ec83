"""SQL candidate generation over a table bundle and clean-SQL extraction."""

from __future__ import annotations

import dataclasses
import logging
import re
from dataclasses import dataclass

from .augment import BundleMode, TableBundle
from .errors import NoFenceFoundError, TokenBudgetExceededError
from .llmclient import GenerationParams, KnowledgeSource, default_params
from .promptkit import PromptTemplate, build_prompt, builtin_template, render_create_table

logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```(.*?)```", re.DOTALL)
_UNITS_RE = re.compile(r'Units:\s*"([^"]*)"')
_BARE_SQL_RE = re.compile(r"^(select|with)\b", re.IGNORECASE)


@dataclass(frozen=True)
class SqlCandidate:
    """One generated SQL string; invalid candidates keep the raw response as
    reasoning and count as execution errors downstream."""

    sql: str
    reasoning: str
    units: str | None
    sample_index: int
    valid: bool = True


_LANGUAGE_TAGS = {"sql", "sqlite", "sqlite3", "mysql", "postgresql", "code"}


def _fence_body(fence: str) -> str:
    body = fence.strip("\n")
    first, _, rest = body.partition("\n")
    if rest and first.strip().lower() in _LANGUAGE_TAGS:
        return rest.strip()
    return body.strip()


def _extract(response: str) -> tuple[str, str | None, str]:
    """(sql, units, reasoning) from one response; see extract_sql."""
    matches = [m for m in _FENCE_RE.finditer(response) if m.group(1).strip()]
    if matches:
        last = matches[-1]
        sql = _fence_body(last.group(1))
        units_match = _UNITS_RE.search(response[last.end():])
        units = units_match.group(1) if units_match else None
        reasoning = response[: last.start()].strip()
        return sql, units, reasoning
    stripped = response.strip()
    if _BARE_SQL_RE.match(stripped):
        units_match = _UNITS_RE.search(stripped)
        units = units_match.group(1) if units_match else None
        if units_match:
            stripped = (stripped[: units_match.start()] + stripped[units_match.end():]).strip()
        return stripped, units, ""
    raise NoFenceFoundError("response has no fenced SQL and does not start with SELECT/WITH")


def extract_sql(response: str) -> tuple[str, str | None]:
    """Pull the final SQL (last fenced block) and an optional Units annotation.

    Responses with no fence are accepted when they start with SELECT/WITH;
    anything else raises NoFenceFoundError.
    """
    sql, units, _ = _extract(response)
    return sql, units


def sql_rendering(
    question: str,
    bundle: TableBundle,
    document: str | None = None,
    preview_rows: int = 3,
) -> str:
    """Step-3 task: open mode shows the joined t1 with a row preview; closed
    mode shows the report plus every row of t1 (and t2 when present)."""
    if bundle.mode is BundleMode.OPEN_JOINED:
        table = bundle.primary_table
        title = f"Title: {table.title}\n" if table.title else ""
        schema = render_create_table(table, preview_rows=preview_rows).text
        return f"{title}{schema}\n\nQ: {question}"
    blocks = [render_create_table(bundle.base, full=True).text]
    if bundle.augmenting is not None:
        blocks.append(render_create_table(bundle.augmenting, full=True).text)
    tables = "\n\n".join(blocks)
    report = f"Report:\n{document}\n" if document else ""
    return f"{report}Tables:\n{tables}\n\nQ: {question}"


def sql_messages(
    question: str,
    bundle: TableBundle,
    template: PromptTemplate,
    document: str | None = None,
    preview_rows: int = 3,
    token_limit: int | None = None,
) -> list[dict]:
    while True:
        task = sql_rendering(question, bundle, document=document, preview_rows=preview_rows)
        try:
            return build_prompt(template, task, token_limit=token_limit)
        except TokenBudgetExceededError:
            # closed-domain prompts need every row and cannot be truncated
            if bundle.mode is not BundleMode.OPEN_JOINED or preview_rows <= 1:
                raise
            preview_rows //= 2
            logger.warning("SQL prompt over token budget; shrinking preview to %d rows", preview_rows)


def generate_sql(
    question: str,
    bundle: TableBundle,
    source: KnowledgeSource,
    k: int = 1,
    params: GenerationParams | None = None,
    template: PromptTemplate | None = None,
    dataset: str = "wikitq",
    document: str | None = None,
    preview_rows: int = 3,
    token_limit: int | None = None,
) -> list[SqlCandidate]:
    """Generate exactly k SQL candidates (greedy when k=1, sampled otherwise).

    Extraction failures are flagged invalid rather than dropped so the sample
    accounting stays exact.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if params is None:
        params = default_params("sql", "greedy" if k == 1 else "ensemble", dataset)
    params = dataclasses.replace(params, n_samples=k)
    if template is None:
        template = builtin_template(dataset, "sql")
    messages = sql_messages(
        question,
        bundle,
        template,
        document=document,
        preview_rows=preview_rows,
        token_limit=token_limit,
    )
    texts = source.complete(messages, params)
    candidates: list[SqlCandidate] = []
    for i, text in enumerate(texts):
        try:
            sql, units, reasoning = _extract(text)
            candidates.append(
                SqlCandidate(sql=sql, reasoning=reasoning, units=units, sample_index=i)
            )
        except NoFenceFoundError:
            logger.warning("sample %d: no SQL found in response", i)
            candidates.append(
                SqlCandidate(sql="", reasoning=text.strip(), units=None, sample_index=i, valid=False)
            )
    return candidates
