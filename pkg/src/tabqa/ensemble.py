"""Majority vote over execution results from sampled augmentations x SQL candidates.

One question runs as: sample m step-1 outputs; materialize each plan that needs
augmentation (one row-wise sample per query); sample k SQL candidates per
augmentation context; execute everything; majority-vote the canonicalized ok
results. Greedy decoding is the m=1, k=1 special case.
"""

from __future__ import annotations

import dataclasses
import logging
from collections import Counter
from dataclasses import dataclass, field

from .analysis import (
    AugmentationPlan,
    ClosedDomainExtraction,
    extract_closed_domain,
    plan_augmentation,
)
from .augment import TableBundle, build_bundle
from .evalkit import canonicalize
from .llmclient import KnowledgeSource, default_params
from .promptkit import PromptTemplate, builtin_template
from .sqlexec import ERROR_STATUSES, ExecStatus, ExecutionOutcome, execute, load_bundle
from .sqlgen import SqlCandidate, generate_sql
from .tabular import Table

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleBudget:
    """Generated-sample accounting for one question: m + round(alpha*m) + m*k.

    alpha is measured, not configured: the observed fraction of step-1 samples
    whose plans need additional information. Closed-domain runs merge steps 1
    and 2 into one call, so alpha is 0 and the total is m + m*k.
    """

    m: int
    alpha_observed: float
    k: int
    total: int


@dataclass(frozen=True)
class VoteRecord:
    outcomes: tuple[tuple[str, ExecutionOutcome], ...]
    normalized_answers: tuple[str, ...]
    winner: str | None
    sample_budget: SampleBudget


@dataclass
class QuestionRun:
    """Everything the CLI needs to write a per-question artifact."""

    question: str
    answer: str | None
    vote: VoteRecord
    status: ExecStatus
    plans: list = field(default_factory=list)
    bundles: list[TableBundle] = field(default_factory=list)
    candidates: list[SqlCandidate] = field(default_factory=list)
    dropped_queries: tuple[str, ...] = ()
    source_samples_used: int = 0


def majority_vote(outcomes: list[ExecutionOutcome]) -> str | None:
    """Most frequent canonicalized ok answer; ties go to the answer whose first
    appearance is earliest; None when nothing executed ok."""
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    for i, outcome in enumerate(outcomes):
        if outcome.status is not ExecStatus.OK:
            continue
        answer = canonicalize(outcome.value)
        counts[answer] += 1
        first_seen.setdefault(answer, i)
    if not counts:
        return None
    return min(counts, key=lambda a: (-counts[a], first_seen[a]))


def _aggregate_status(winner: str | None, outcomes: list[ExecutionOutcome]) -> ExecStatus:
    if winner is not None:
        return ExecStatus.OK
    error_counts: Counter[ExecStatus] = Counter()
    first_seen: dict[ExecStatus, int] = {}
    for i, o in enumerate(outcomes):
        if o.status in ERROR_STATUSES:
            error_counts[o.status] += 1
            first_seen.setdefault(o.status, i)
    if error_counts:
        return min(error_counts, key=lambda s: (-error_counts[s], first_seen[s]))
    return ExecStatus.EMPTY_RESULT


@dataclass(frozen=True)
class Templates:
    analyze: PromptTemplate
    sql: PromptTemplate
    augment: PromptTemplate | None = None

    @classmethod
    def for_dataset(cls, dataset: str) -> "Templates":
        return cls(
            analyze=builtin_template(dataset, "analyze"),
            sql=builtin_template(dataset, "sql"),
            augment=builtin_template("wikitq", "augment") if dataset == "wikitq" else None,
        )


def run_question(
    question: str,
    table: Table,
    source: KnowledgeSource,
    m: int = 1,
    k: int = 1,
    dataset: str = "wikitq",
    mode: str = "open",
    document: str | None = None,
    preview_rows: int = 3,
    token_limit: int | None = None,
    timeout: float = 5.0,
    profile: str = "gpt",
    templates: Templates | None = None,
) -> QuestionRun:
    """Run the full pipeline for one question and vote over all outcomes."""
    if m < 1 or k < 1:
        raise ValueError("m and k must be >= 1")
    if mode not in ("open", "closed"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "closed" and not document:
        raise ValueError("closed mode requires a document")
    if templates is None:
        templates = Templates.for_dataset(dataset)
    decode_mode = "greedy" if (m == 1 and k == 1) else "ensemble"
    samples_before = source.samples_issued

    plans: list[AugmentationPlan | ClosedDomainExtraction | None]
    if mode == "open":
        analyze_params = dataclasses.replace(
            default_params("analyze", decode_mode, dataset, profile), n_samples=m
        )
        plans = list(
            plan_augmentation(
                question,
                table,
                source,
                params=analyze_params,
                template=templates.analyze,
                preview_rows=preview_rows,
                token_limit=token_limit,
            )
        )
        augment_params = dataclasses.replace(
            default_params("augment", decode_mode, dataset, profile), n_samples=1
        )
        bundles = [
            build_bundle(
                plan,
                table,
                source,
                params=augment_params,
                template=templates.augment,
                token_limit=token_limit,
            )
            for plan in plans
        ]
        augmented = sum(
            1 for p in plans if isinstance(p, AugmentationPlan) and p.needs_augmentation
        )
        alpha = augmented / m
        total = m + round(alpha * m) + m * k
    else:
        extract_params = dataclasses.replace(
            default_params("analyze", decode_mode, dataset, profile), n_samples=m
        )
        plans = list(
            extract_closed_domain(
                question,
                table,
                document,
                source,
                params=extract_params,
                template=templates.analyze,
                dataset=dataset,
                token_limit=token_limit,
            )
        )
        bundles = [build_bundle(plan, table) for plan in plans]
        alpha = 0.0  # steps 1 and 2 are merged; no separate augmentation calls
        total = m + m * k

    sql_params = dataclasses.replace(
        default_params("sql", decode_mode, dataset, profile), n_samples=k
    )
    all_candidates: list[SqlCandidate] = []
    outcome_pairs: list[tuple[str, ExecutionOutcome]] = []
    outcomes: list[ExecutionOutcome] = []
    dropped: list[str] = []
    for i, bundle in enumerate(bundles):
        dropped.extend(bundle.dropped_queries)
        candidates = generate_sql(
            question,
            bundle,
            source,
            k=k,
            params=sql_params,
            template=templates.sql,
            dataset=dataset,
            document=document if mode == "closed" else None,
            preview_rows=preview_rows,
            token_limit=token_limit,
        )
        all_candidates.extend(candidates)
        with load_bundle(bundle) as session:
            for candidate in candidates:
                outcome = execute(session, candidate, timeout=timeout)
                outcome_pairs.append((f"a{i}.s{candidate.sample_index}", outcome))
                outcomes.append(outcome)

    winner = majority_vote(outcomes)
    normalized = tuple(
        canonicalize(o.value) for o in outcomes if o.status is ExecStatus.OK
    )
    vote = VoteRecord(
        outcomes=tuple(outcome_pairs),
        normalized_answers=normalized,
        winner=winner,
        sample_budget=SampleBudget(m=m, alpha_observed=alpha, k=k, total=total),
    )
    return QuestionRun(
        question=question,
        answer=winner,
        vote=vote,
        status=_aggregate_status(winner, outcomes),
        plans=plans,
        bundles=bundles,
        candidates=all_candidates,
        dropped_queries=tuple(dropped),
        source_samples_used=source.samples_issued - samples_before,
    )


def run_ensemble(
    question: str,
    table: Table,
    source: KnowledgeSource,
    m: int,
    k: int,
    **kwargs,
) -> tuple[str | None, VoteRecord]:
    """Spec-shaped entry point: the voted answer and its vote record."""
    run = run_question(question, table, source, m=m, k=k, **kwargs)
    return run.answer, run.vote
