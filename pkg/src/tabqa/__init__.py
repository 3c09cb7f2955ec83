"""Table QA by table augmentation: analyze the question, build an augmenting
table from a knowledge source, then generate and execute SQL over the tables."""

from .analysis import (
    AugmentationPlan,
    AugmentationQuery,
    ClosedDomainExtraction,
    extract_closed_domain,
    parse_plan,
    plan_augmentation,
)
from .augment import BundleMode, TableBundle, answer_rowwise, build_bundle
from .ensemble import QuestionRun, VoteRecord, majority_vote, run_ensemble, run_question
from .evalkit import canonicalize, exact_match, load_finqa, load_tatqa, load_wikitq, report
from .llmclient import (
    GenerationParams,
    KnowledgeSource,
    LiveClient,
    RecordingClient,
    ReplayClient,
    default_params,
)
from .promptkit import PromptTemplate, build_prompt, render_create_table, render_pipe
from .sqlexec import ExecStatus, ExecutionOutcome, execute, load_bundle
from .sqlgen import SqlCandidate, extract_sql, generate_sql
from .tabular import Table, ingest_csv, ingest_table, join_on_row_id, sanitize_identifier

__version__ = "0.1.0"

__all__ = [
    "AugmentationPlan",
    "AugmentationQuery",
    "BundleMode",
    "ClosedDomainExtraction",
    "ExecStatus",
    "ExecutionOutcome",
    "GenerationParams",
    "KnowledgeSource",
    "LiveClient",
    "PromptTemplate",
    "QuestionRun",
    "RecordingClient",
    "ReplayClient",
    "SqlCandidate",
    "Table",
    "TableBundle",
    "VoteRecord",
    "answer_rowwise",
    "build_bundle",
    "build_prompt",
    "canonicalize",
    "default_params",
    "exact_match",
    "execute",
    "extract_closed_domain",
    "extract_sql",
    "generate_sql",
    "ingest_csv",
    "ingest_table",
    "join_on_row_id",
    "load_bundle",
    "load_finqa",
    "load_tatqa",
    "load_wikitq",
    "majority_vote",
    "parse_plan",
    "plan_augmentation",
    "render_create_table",
    "render_pipe",
    "report",
    "run_ensemble",
    "run_question",
    "sanitize_identifier",
]
