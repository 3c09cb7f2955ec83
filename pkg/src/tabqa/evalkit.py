"""Dataset loading, answer normalization, exact match, and breakdown reports."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MissingFileError
from .sqlexec import ERROR_STATUSES, ExecStatus
from .tabular import Table, ingest_table

logger = logging.getLogger(__name__)

NUMERIC_TOLERANCE = 1e-2
SCALE_VARIANTS = (1.0, 100.0, 0.01)  # absorbs percent/ratio ambiguity
_FRACTION_DIGITS = 6
LIST_SEP = ", "

WIKITQ_TEST_FILE = "data/pristine-unseen-tables.tsv"
TATQA_DEV_FILE = "tatqa_dataset_dev.json"
FINQA_TEST_FILE = "test.json"
FILLED_COLUMN_NAME = "filledcolumnname"


@dataclass(frozen=True)
class QuestionInstance:
    """One evaluation question with its table and gold answer(s)."""

    question_id: str
    dataset: str
    question: str
    table: Table
    gold: list
    document: str | None = None
    required_cells: int | None = None
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvalRecord:
    question_id: str
    dataset: str
    gold: list
    predicted: str | None
    em: bool
    outcome_status: ExecStatus
    table_tokens: int
    required_cells: int | None = None

    def __post_init__(self) -> None:
        if self.em and self.predicted is None:
            raise ValueError("em=True requires a prediction")
        if self.table_tokens < 0:
            raise ValueError("table_tokens must be >= 0")


def _format_number(x: float) -> str:
    text = f"{round(float(x), _FRACTION_DIGITS):.{_FRACTION_DIGITS}f}"
    text = text.rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def _canon_scalar(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return _format_number(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    text = str(value).strip().lower()
    text = text.replace(",", "")
    for symbol in "$€£¥":
        text = text.replace(symbol, "")
    if text.endswith("%"):
        text = text[:-1]
    text = text.strip()
    try:
        return _format_number(float(text))
    except (ValueError, OverflowError):
        return text


def canonicalize(answer) -> str:
    """Canonical answer string: lowercased, currency/commas/percent stripped,
    numbers rounded to 6 fractional digits; result rows flatten row-major."""
    if isinstance(answer, (list, tuple)):
        parts = []
        for item in answer:
            if isinstance(item, (list, tuple)):
                parts.extend(item)
            else:
                parts.append(item)
        return LIST_SEP.join(_canon_scalar(p) for p in parts)
    return _canon_scalar(answer)


def _as_float(text: str) -> float | None:
    try:
        return float(text)
    except (ValueError, OverflowError):
        return None


def _scalar_match(a: str, b: str) -> bool:
    if a == b:
        return True
    fa, fb = _as_float(a), _as_float(b)
    if fa is None or fb is None:
        return False
    for scale in SCALE_VARIANTS:
        if abs(fa * scale - fb) <= NUMERIC_TOLERANCE:
            return True
        if abs(fb * scale - fa) <= NUMERIC_TOLERANCE:
            return True
    return False


def exact_match(pred, gold) -> bool:
    """Exact match after canonicalization.

    Scalars match on string equality or numerically within 1e-2 across the
    {x, x/100, 100x} scale variants (both directions); lists must agree as
    multisets, with a numeric pairing fallback for all-numeric lists.
    """
    pred_c = canonicalize(pred)
    gold_c = canonicalize(gold)
    pred_parts = pred_c.split(LIST_SEP) if LIST_SEP in pred_c else [pred_c]
    gold_parts = gold_c.split(LIST_SEP) if LIST_SEP in gold_c else [gold_c]
    if len(pred_parts) == 1 and len(gold_parts) == 1:
        return _scalar_match(pred_c, gold_c)
    if Counter(pred_parts) == Counter(gold_parts):
        return True
    if len(pred_parts) != len(gold_parts):
        return False
    pf = [_as_float(p) for p in pred_parts]
    gf = [_as_float(g) for g in gold_parts]
    if any(v is None for v in pf) or any(v is None for v in gf):
        return False
    pred_sorted = sorted(pred_parts, key=float)
    gold_sorted = sorted(gold_parts, key=float)
    return all(_scalar_match(p, g) for p, g in zip(pred_sorted, gold_sorted))


# ---------------------------------------------------------------------------
# Dataset loaders


def _resolve(path: str | Path, default_name: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / default_name
    if not p.exists():
        raise MissingFileError(f"dataset file not found: {p}")
    return p


def subset_indices(total: int = 4000, step: int = 4) -> list[int]:
    """Evaluation subset: one question in every four of the first 4000."""
    return list(range(0, total, step))


def load_wikitq(path: str | Path, subset: bool = False) -> list[QuestionInstance]:
    """Load the release-format test questions (TSV) and their CSV tables.

    subset=True keeps indices 0,4,...,3996 of the split (1000 questions).
    An optional fifth TSV column provides a display title. Malformed records
    are skipped with a count.
    """
    qfile = _resolve(path, WIKITQ_TEST_FILE)
    root = qfile.parent.parent if qfile.parent.name == "data" else qfile.parent
    with qfile.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE))
    if rows and rows[0][:2] == ["id", "utterance"]:
        rows = rows[1:]
    if subset:
        rows = [rows[i] for i in subset_indices() if i < len(rows)]
    out: list[QuestionInstance] = []
    skipped = 0
    for row in rows:
        try:
            qid, utterance, context, target = row[0], row[1], row[2], row[3]
            title = row[4] if len(row) > 4 else ""
            table_path = root / context
            with table_path.open(newline="", encoding="utf-8") as fh:
                table_rows = list(csv.reader(fh))
            table = ingest_table(table_rows, name="t1", title=title)
            gold = target.split("|")
        except Exception as exc:  # noqa: BLE001 - malformed records are data, not bugs
            skipped += 1
            logger.warning("skipping malformed record %s: %s", row[:1], exc)
            continue
        out.append(
            QuestionInstance(
                question_id=qid,
                dataset="wikitq",
                question=utterance,
                table=table,
                gold=gold,
            )
        )
    if skipped:
        logger.warning("skipped %d malformed records", skipped)
    return out


def _fill_headers(table_rows: list[list[str]]) -> list[list[str]]:
    if not table_rows:
        return table_rows
    header = [
        cell if str(cell).strip() else FILLED_COLUMN_NAME for cell in table_rows[0]
    ]
    return [header] + table_rows[1:]


def load_tatqa(path: str | Path) -> list[QuestionInstance]:
    """Load the dev split, keeping only questions answered from table and text."""
    p = _resolve(path, TATQA_DEV_FILE)
    data = json.loads(p.read_text(encoding="utf-8"))
    out: list[QuestionInstance] = []
    skipped = 0
    for block in data:
        try:
            table_rows = _fill_headers([[str(c) for c in r] for r in block["table"]["table"]])
            table = ingest_table(table_rows, name="t1")
            paragraphs = sorted(block.get("paragraphs", []), key=lambda p: p.get("order", 0))
            document = "\n".join(p["text"] for p in paragraphs)
        except Exception as exc:  # noqa: BLE001
            skipped += 1
            logger.warning("skipping malformed block %s: %s", block.get("table", {}).get("uid"), exc)
            continue
        for q in block.get("questions", []):
            if q.get("answer_from") != "table-text":
                continue
            gold = q.get("answer")
            gold_list = list(gold) if isinstance(gold, list) else [gold]
            out.append(
                QuestionInstance(
                    question_id=q.get("uid", ""),
                    dataset="tatqa",
                    question=q.get("question", ""),
                    table=table,
                    gold=gold_list,
                    document=document,
                    extras={"scale": q.get("scale", "")},
                )
            )
    if skipped:
        logger.warning("skipped %d malformed blocks", skipped)
    return out


def load_finqa(path: str | Path) -> list[QuestionInstance]:
    """Load the test split, keeping questions whose gold evidence spans at least
    one table row and one document sentence."""
    p = _resolve(path, FINQA_TEST_FILE)
    data = json.loads(p.read_text(encoding="utf-8"))
    out: list[QuestionInstance] = []
    skipped = 0
    for rec in data:
        try:
            qa = rec["qa"]
            gold_inds = qa.get("gold_inds", {})
            keys = list(gold_inds)
            table_rows_used = [k for k in keys if k.startswith("table_")]
            text_used = [k for k in keys if k.startswith("text_")]
            if not table_rows_used or not text_used:
                continue
            table = ingest_table(
                _fill_headers([[str(c) for c in r] for r in rec["table"]]), name="t1"
            )
            document = "\n".join(list(rec.get("pre_text", [])) + list(rec.get("post_text", [])))
            gold = qa.get("exe_ans", qa.get("answer"))
        except Exception as exc:  # noqa: BLE001
            skipped += 1
            logger.warning("skipping malformed record %s: %s", rec.get("id"), exc)
            continue
        out.append(
            QuestionInstance(
                question_id=rec.get("id", ""),
                dataset="finqa",
                question=qa.get("question", ""),
                table=table,
                gold=[gold],
                document=document,
                required_cells=len(table_rows_used),
            )
        )
    if skipped:
        logger.warning("skipped %d malformed records", skipped)
    return out


# ---------------------------------------------------------------------------
# Reports


def _pct(part: int, whole: int) -> float:
    return round(100.0 * part / whole, 2) if whole else 0.0


def _em_pct(records: list[EvalRecord]) -> float:
    return _pct(sum(r.em for r in records), len(records))


def report(records: list[EvalRecord]) -> dict:
    """Overall EM and execution-error rate, plus EM bucketed by table-token
    quartiles and by required cell count (1, 2, >=3) where known."""
    if not records:
        raise ValueError("report requires at least one record")
    n = len(records)
    errors = sum(r.outcome_status in ERROR_STATUSES for r in records)
    status_counts = Counter(r.outcome_status.value for r in records)

    tokens = [r.table_tokens for r in records]
    if len(set(tokens)) == 1:
        q1 = q2 = q3 = float(tokens[0])
    else:
        q1, q2, q3 = statistics.quantiles(tokens, n=4, method="inclusive")
    buckets = [[], [], [], []]
    for r in records:
        t = r.table_tokens
        if t <= q1:
            buckets[0].append(r)
        elif t <= q2:
            buckets[1].append(r)
        elif t <= q3:
            buckets[2].append(r)
        else:
            buckets[3].append(r)
    token_rows = []
    labels = [f"<= {q1:g}", f"<= {q2:g}", f"<= {q3:g}", f"> {q3:g}"]
    for label, bucket in zip(labels, buckets):
        token_rows.append(
            {"bucket": label, "questions": len(bucket), "em_pct": _em_pct(bucket)}
        )

    known = [r for r in records if r.required_cells is not None]
    cell_rows = []
    for label, pred in (("1", lambda c: c == 1), ("2", lambda c: c == 2), (">=3", lambda c: c >= 3)):
        bucket = [r for r in known if pred(r.required_cells)]
        cell_rows.append(
            {"bucket": label, "questions": len(bucket), "em_pct": _em_pct(bucket)}
        )

    return {
        "overall": {
            "questions": n,
            "em_pct": _em_pct(records),
            "execution_error_pct": _pct(errors, n),
        },
        "by_status": dict(sorted(status_counts.items())),
        "by_table_tokens": token_rows,
        "by_required_cells": cell_rows,
        "required_cells_known": len(known),
    }


def render_report_text(rep: dict) -> str:
    lines = [
        f"questions              {rep['overall']['questions']}",
        f"exact match            {rep['overall']['em_pct']:.2f}%",
        f"execution errors       {rep['overall']['execution_error_pct']:.2f}%",
        "",
        "by outcome status:",
    ]
    for status, count in rep["by_status"].items():
        lines.append(f"  {status:<20} {count}")
    lines.append("")
    lines.append("EM by table tokens (quartiles):")
    for row in rep["by_table_tokens"]:
        lines.append(f"  {row['bucket']:<12} n={row['questions']:<6} em={row['em_pct']:.2f}%")
    if rep["required_cells_known"]:
        lines.append("")
        lines.append("EM by required cells:")
        for row in rep["by_required_cells"]:
            lines.append(f"  {row['bucket']:<12} n={row['questions']:<6} em={row['em_pct']:.2f}%")
    return "\n".join(lines) + "\n"
