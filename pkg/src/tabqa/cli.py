"""Batch and single-question entry points, configuration, run artifacts.

Artifacts are JSON-lines (one object per question) plus report.json/report.txt;
timestamps live only in a run_meta.json sidecar so replay runs stay
byte-identical.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import evalkit
from .analysis import AugmentationPlan, ClosedDomainExtraction
from .ensemble import QuestionRun, Templates, run_question
from .errors import ConfigError, TabqaError
from .evalkit import EvalRecord, QuestionInstance, exact_match
from .llmclient import (
    DEFAULT_MODEL_ID,
    GenerationParams,
    KnowledgeSource,
    LiveClient,
    RecordingClient,
    ReplayClient,
)
from .promptkit import DEFAULT_TOKEN_LIMIT, build_prompt, load_template, render_pipe
from .sqlexec import ExecStatus
from .tabular import ingest_csv

logger = logging.getLogger(__name__)

_TEMPLATE_DIR = Path(__file__).parent / "templates"

DATASET_MODES = {"wikitq": "open", "tatqa": "closed", "finqa": "closed"}


@dataclass
class RunConfig:
    dataset: str = "wikitq"
    mode: str = "open"
    data: str = ""
    subset: bool = False
    limit: int | None = None
    llm_mode: str = "replay"
    transcripts: str = ""
    endpoint: str = ""
    model_id: str = DEFAULT_MODEL_ID
    credential_env: str = "OPENAI_API_KEY"
    m: int = 1
    k: int = 1
    preview_rows: int = 3
    token_limit: int = DEFAULT_TOKEN_LIMIT
    timeout: float = 5.0
    baseline: str = "none"
    profile: str = "gpt"
    output_dir: str = "runs/out"
    workers: int = 4

    def validate(self) -> None:
        if self.dataset not in DATASET_MODES:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.mode not in ("open", "closed"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode != DATASET_MODES[self.dataset]:
            raise ConfigError(
                f"dataset {self.dataset!r} runs in {DATASET_MODES[self.dataset]!r} mode"
            )
        if self.llm_mode not in ("live", "replay", "record"):
            raise ConfigError(f"unknown llm mode {self.llm_mode!r}")
        if self.m < 1 or self.k < 1:
            raise ConfigError("m and k must be >= 1")
        if self.baseline not in ("none", "direct_answer"):
            raise ConfigError(f"unknown baseline {self.baseline!r}")
        if self.llm_mode == "replay":
            if not self.transcripts:
                raise ConfigError("replay mode requires --transcripts")
        else:
            if not self.endpoint:
                raise ConfigError(f"{self.llm_mode} mode requires --endpoint")
            if not os.environ.get(self.credential_env):
                raise ConfigError(
                    f"{self.llm_mode} mode requires the {self.credential_env} "
                    "environment variable"
                )
            if self.llm_mode == "record" and not self.transcripts:
                raise ConfigError("record mode requires --transcripts")


def build_source(config: RunConfig) -> KnowledgeSource:
    if config.llm_mode == "replay":
        return ReplayClient(config.transcripts)
    live = LiveClient(
        endpoint=config.endpoint,
        api_key=os.environ.get(config.credential_env, ""),
        max_in_flight=config.workers,
    )
    if config.llm_mode == "record":
        return RecordingClient(live, config.transcripts)
    return live


def load_questions(config: RunConfig) -> list[QuestionInstance]:
    if not config.data:
        raise ConfigError("--data is required")
    if config.dataset == "wikitq":
        questions = evalkit.load_wikitq(config.data, subset=config.subset)
    elif config.dataset == "tatqa":
        questions = evalkit.load_tatqa(config.data)
    else:
        questions = evalkit.load_finqa(config.data)
    if config.limit is not None:
        questions = questions[: config.limit]
    return questions


def run_direct(
    question: QuestionInstance, source: KnowledgeSource, config: RunConfig
) -> QuestionRun:
    """Trivial baseline: ask the model for the answer directly, no SQL."""
    from .ensemble import SampleBudget, VoteRecord
    from .sqlexec import ExecutionOutcome

    template = load_template(_TEMPLATE_DIR / "direct_answer.txt")
    parts = []
    if question.document:
        parts.append(f"Report:\n{question.document}")
    title = f"Title: {question.table.title}\n" if question.table.title else ""
    parts.append(f"{title}Table:\n{render_pipe(question.table).text}")
    parts.append(f"Q: {question.question}")
    messages = build_prompt(template, "\n".join(parts), token_limit=config.token_limit)
    params = GenerationParams(model_id=config.model_id, num_shots=0)
    text = source.complete(messages, params)[0].strip()
    answer = text.splitlines()[-1].strip() if text else ""
    if answer.lower().startswith("answer:"):
        answer = answer[len("answer:"):].strip()
    outcome = ExecutionOutcome(status=ExecStatus.OK, value=((answer,),))
    winner = evalkit.canonicalize(answer)
    return QuestionRun(
        question=question.question,
        answer=winner,
        vote=VoteRecord(
            outcomes=(("direct", outcome),),
            normalized_answers=(winner,),
            winner=winner,
            sample_budget=SampleBudget(m=1, alpha_observed=0.0, k=0, total=1),
        ),
        status=ExecStatus.OK,
        source_samples_used=1,
    )


def _plan_artifact(plan) -> dict:
    if isinstance(plan, AugmentationPlan):
        return {
            "kind": "plan",
            "queries": [
                {
                    "new_column": q.new_column,
                    "question": q.question,
                    "relevant_columns": list(q.relevant_columns),
                }
                for q in plan.queries
            ],
            "raw_response": plan.raw_response,
        }
    if isinstance(plan, ClosedDomainExtraction):
        return {
            "kind": "extraction",
            "columns": {k: list(v) for k, v in plan.columns.items()},
            "raw_response": plan.raw_response,
        }
    return {"kind": "none"}


def _question_artifact(
    q: QuestionInstance, run: QuestionRun, record: EvalRecord
) -> dict:
    return {
        "question_id": q.question_id,
        "dataset": q.dataset,
        "question": q.question,
        "gold": q.gold,
        "answer": run.answer,
        "em": record.em,
        "status": run.status.value,
        "plans": [_plan_artifact(p) for p in run.plans],
        "augmenting_tables": [
            b.augmenting.to_dict() for b in run.bundles if b.augmenting is not None
        ],
        "dropped_queries": list(run.dropped_queries),
        "sql_candidates": [
            {
                "sql": c.sql,
                "units": c.units,
                "sample_index": c.sample_index,
                "valid": c.valid,
            }
            for c in run.candidates
        ],
        "outcomes": [
            {"candidate": cid, **outcome.to_dict()} for cid, outcome in run.vote.outcomes
        ],
        "vote": {
            "winner": run.vote.winner,
            "normalized_answers": list(run.vote.normalized_answers),
            "budget": {
                "m": run.vote.sample_budget.m,
                "alpha_observed": run.vote.sample_budget.alpha_observed,
                "k": run.vote.sample_budget.k,
                "total": run.vote.sample_budget.total,
            },
            "source_samples_used": run.source_samples_used,
        },
        "table_tokens": record.table_tokens,
        "required_cells": record.required_cells,
    }


def _answer_one(
    q: QuestionInstance,
    source: KnowledgeSource,
    config: RunConfig,
    templates: Templates | None,
) -> tuple[EvalRecord, dict]:
    if config.baseline == "direct_answer":
        run = run_direct(q, source, config)
    else:
        run = run_question(
            q.question,
            q.table,
            source,
            m=config.m,
            k=config.k,
            dataset=q.dataset,
            mode=config.mode,
            document=q.document,
            preview_rows=config.preview_rows,
            token_limit=config.token_limit,
            timeout=config.timeout,
            profile=config.profile,
            templates=templates,
        )
    em = exact_match(run.answer, q.gold) if run.answer is not None else False
    record = EvalRecord(
        question_id=q.question_id,
        dataset=q.dataset,
        gold=q.gold,
        predicted=run.answer,
        em=em,
        outcome_status=run.status,
        table_tokens=render_pipe(q.table).token_estimate,
        required_cells=q.required_cells,
    )
    return record, _question_artifact(q, run, record)


def _prepare_out_dir(out: str | Path) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("artifacts.jsonl", "report.json", "report.txt"):
        if (out_dir / name).exists():
            raise ConfigError(
                f"{out_dir / name} already exists; artifacts are append-only, "
                "choose a fresh --out directory"
            )
    return out_dir


def run_dataset(config: RunConfig) -> dict:
    """Run the pipeline over a dataset and write artifacts plus the report."""
    config.validate()
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    out_dir = _prepare_out_dir(config.output_dir)
    questions = load_questions(config)
    if not questions:
        raise ConfigError("no questions to run")
    source = build_source(config)
    templates = None
    if config.baseline == "none":
        templates = Templates.for_dataset(config.dataset)

    results: list[tuple[EvalRecord, dict]]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(
                pool.map(lambda q: _answer_one(q, source, config, templates), questions)
            )
    else:
        results = [_answer_one(q, source, config, templates) for q in questions]

    records = [r for r, _ in results]
    with (out_dir / "artifacts.jsonl").open("w", encoding="utf-8") as fh:
        for _, artifact in results:
            fh.write(json.dumps(artifact, sort_keys=True, ensure_ascii=False) + "\n")
    rep = evalkit.report(records)
    (out_dir / "report.json").write_text(
        json.dumps(rep, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    (out_dir / "report.txt").write_text(evalkit.render_report_text(rep), encoding="utf-8")
    meta = {
        "started_at": started,
        "finished_at": dt.datetime.now(dt.timezone.utc).isoformat(),
        "config": {k: v for k, v in vars(config).items()},
        "source_samples_issued": source.samples_issued,
    }
    (out_dir / "run_meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return rep


def run_single(
    question: str,
    table_path: str | Path,
    document_path: str | Path | None,
    config: RunConfig,
    title: str = "",
) -> tuple[str, Path]:
    """Answer one question from files; returns (answer text, artifact path)."""
    config.validate()
    out_dir = _prepare_out_dir(config.output_dir)
    try:
        table = ingest_csv(table_path, name="t1", title=title)
    except (OSError, TabqaError) as exc:
        raise ConfigError(f"cannot read table {table_path}: {exc}") from exc
    document = None
    if document_path is not None:
        document = Path(document_path).read_text(encoding="utf-8")
    q = QuestionInstance(
        question_id="single",
        dataset=config.dataset,
        question=question,
        table=table,
        gold=[],
        document=document,
    )
    source = build_source(config)
    templates = Templates.for_dataset(config.dataset) if config.baseline == "none" else None
    if config.baseline == "direct_answer":
        run = run_direct(q, source, config)
    else:
        run = run_question(
            question,
            table,
            source,
            m=config.m,
            k=config.k,
            dataset=config.dataset,
            mode=config.mode,
            document=document,
            preview_rows=config.preview_rows,
            token_limit=config.token_limit,
            timeout=config.timeout,
            profile=config.profile,
            templates=templates,
        )
    record = EvalRecord(
        question_id="single",
        dataset=config.dataset,
        gold=[],
        predicted=run.answer,
        em=False,
        outcome_status=run.status,
        table_tokens=render_pipe(table).token_estimate,
    )
    artifact = _question_artifact(q, run, record)
    path = out_dir / "artifacts.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(artifact, sort_keys=True, ensure_ascii=False) + "\n")
    if run.answer is None:
        return f"none ({run.status.value})", path
    return run.answer, path


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--dataset", choices=sorted(DATASET_MODES))
    p.add_argument("--mode", choices=["open", "closed"])
    p.add_argument("--llm-mode", choices=["live", "replay", "record"], dest="llm_mode")
    p.add_argument("--transcripts", help="transcript JSONL path (replay/record)")
    p.add_argument("--endpoint", help="OpenAI-compatible endpoint base URL")
    p.add_argument("--model", dest="model_id", help="model identifier")
    p.add_argument("--credential-env", dest="credential_env", help="env var holding the API key")
    p.add_argument("--m", type=int, help="step-1 samples per question")
    p.add_argument("--k", type=int, help="SQL samples per augmentation")
    p.add_argument("--preview-rows", type=int, dest="preview_rows")
    p.add_argument("--baseline", choices=["none", "direct_answer"])
    p.add_argument("--out", dest="output_dir", help="artifact output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--timeout", type=float, help="per-query SQL timeout (seconds)")
    p.add_argument("--profile", choices=["gpt", "llama"])


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        try:
            file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        for key, value in file_values.items():
            if not hasattr(config, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(config, key, value)
    for key in vars(config):
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "dataset", None) and not getattr(args, "mode", None):
        config.mode = DATASET_MODES[config.dataset]
    return config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tabqa",
        description="Answer table questions by augmenting the table and executing SQL.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a dataset batch")
    _add_common_flags(run_p)
    run_p.add_argument("--data", help="dataset directory or file")
    run_p.add_argument("--subset", action="store_true", help="use the 1000-question subset")
    run_p.add_argument("--limit", type=int, help="run only the first N questions")

    ask_p = sub.add_parser("ask", help="answer a single question")
    _add_common_flags(ask_p)
    ask_p.add_argument("--question", required=True)
    ask_p.add_argument("--table", required=True, help="CSV/TSV table file")
    ask_p.add_argument("--title", default="", help="display title for the table")
    ask_p.add_argument("--document", help="report text file (closed mode)")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config_from_args(args)
        if args.command == "run":
            rep = run_dataset(config)
            print(evalkit.render_report_text(rep), end="")
            print(f"artifacts: {Path(config.output_dir) / 'artifacts.jsonl'}")
            return 0
        answer, path = run_single(
            args.question,
            args.table,
            args.document,
            config,
            title=args.title,
        )
        print(answer)
        print(f"artifact: {path}", file=sys.stderr)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TabqaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
