from __future__ import annotations

import random

import pytest

from tabqa import promptkit, tabular
from tabqa.errors import TemplateError, TokenBudgetExceededError
from tabqa.promptkit import (
    PromptTemplate,
    RenderMode,
    build_prompt,
    builtin_template,
    parse_template,
    render_create_table,
    render_pipe,
)

FIG_PROPERTY_PIPE = """\
row_id | filledcolumnname | 2019 | 2018
0 | computer equipment | 137763 | 94384
1 | furniture and fixtures | 187167 | 159648
2 | subtotal | 324930 | 254032
3 | less accumulated depreciation | 148916 | 104702
4 | property and equipment, net | 176014 | 149330"""


def test_render_pipe_matches_worked_example(property_table):
    assert render_pipe(property_table).text == FIG_PROPERTY_PIPE


def test_render_pipe_zero_rows():
    t = tabular.ingest_table([["a", "b"]], name="t")
    assert render_pipe(t).text == "row_id | a | b"


def test_render_pipe_minimal():
    t = tabular.ingest_table([["x"], ["a"]], name="t")
    assert render_pipe(t).text.splitlines() == ["row_id | x", "0 | a"]


def test_render_pipe_separator_escaped():
    t = tabular.ingest_table([["x"], ["a | b"]], name="t")
    lines = render_pipe(t).text.splitlines()
    assert lines[1] == "0 | a / b"


def test_pipe_round_trip_property():
    rng = random.Random(3)
    alphabet = "abc $%/-’é0123456789"
    for _ in range(40):
        n_cols = rng.randrange(1, 4)
        n_rows = rng.randrange(0, 5)
        header = [f"c{j}" for j in range(n_cols)]
        rows = [
            ["".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 8))) or "x"
             for _ in range(n_cols)]
            for _ in range(n_rows)
        ]
        t = tabular.ingest_table([header] + rows, name="t")
        lines = render_pipe(t).text.splitlines()
        for i, row in enumerate(t.rows):
            assert lines[1 + i].split(" | ") == [cell.raw for cell in row]


def test_render_create_table_full_tabs(property_table):
    aug = tabular.ingest_table(
        [["depreciation_expense_2019"], ["80206"]],
        name="t2",
        provenance=tabular.Provenance.AUGMENTING,
    )
    r = render_create_table(aug, full=True)
    assert r.mode == RenderMode.CREATE_TABLE_FULL
    assert r.text.startswith("CREATE TABLE t2(\n    row_id int,\n    depreciation_expense_2019 int)")
    assert "All rows of the table:\nSELECT * FROM t2;" in r.text
    assert r.text.endswith("row_id\tdepreciation_expense_2019\n0\t80206\n*/")


def test_render_create_table_schema_only(property_table):
    r = render_create_table(property_table, preview_rows=0, full=False)
    assert "/*" not in r.text
    assert r.text.count("CREATE TABLE") == 1


def test_create_table_column_count_property():
    rng = random.Random(5)
    for _ in range(20):
        n_cols = rng.randrange(1, 5)
        t = tabular.ingest_table(
            [[f"c{j}" for j in range(n_cols)]] + [["1"] * n_cols], name="t"
        )
        text = render_create_table(t, preview_rows=2).text
        assert text.count("CREATE TABLE") == 1
        schema = text[: text.index(")")]
        assert schema.count("\n") == t.width  # one line per column


def test_preview_limits_rows(saints_table):
    r = render_create_table(saints_table, preview_rows=2)
    assert "SELECT * FROM t1 LIMIT 2;" in r.text
    assert "2007-9-24" not in r.text


def _synthetic_template(num_shots: int) -> PromptTemplate:
    shots = tuple((f"in {i}", f"out {i}") for i in range(num_shots))
    return PromptTemplate(
        template_id="syn", step="analyze", dataset="wikitq",
        num_shots=num_shots, system_text="sys", shots=shots,
    )


def test_build_prompt_shot_cardinality():
    messages = build_prompt(_synthetic_template(8), "task")
    assert len(messages) == 1 + 16 + 1
    assert messages[0]["role"] == "system"
    assert [m["role"] for m in messages[1:5]] == ["user", "assistant", "user", "assistant"]
    assert messages[-1] == {"role": "user", "content": "task"}


def test_build_prompt_zero_shot():
    messages = build_prompt(_synthetic_template(0), "task")
    assert len(messages) == 2


def test_build_prompt_deterministic():
    t = _synthetic_template(2)
    assert build_prompt(t, "task") == build_prompt(t, "task")


def test_build_prompt_token_budget():
    with pytest.raises(TokenBudgetExceededError):
        build_prompt(_synthetic_template(0), "x" * 400, token_limit=10)


def test_builtin_templates_load():
    for dataset, steps in (
        ("wikitq", ("analyze", "augment", "sql")),
        ("tatqa", ("analyze", "sql")),
        ("finqa", ("analyze", "sql")),
    ):
        for step in steps:
            tpl = builtin_template(dataset, step)
            assert tpl.dataset == dataset
            assert tpl.step == step
            assert tpl.num_shots == len(tpl.shots)
            assert tpl.system_text


def test_wikitq_analyze_shot_content():
    tpl = builtin_template("wikitq", "analyze")
    shot_in, shot_out = tpl.shots[0]
    assert shot_in.startswith("Title: 2007 New Orleans Saints season")
    assert '`is_loss` = @("Is it a loss?"; [result/score])' in shot_out
    assert tpl.system_text.startswith("Task Description:")


def test_parse_template_errors():
    with pytest.raises(TemplateError):
        parse_template("id: x\nstep: s\n#--- system\nhi")  # missing keys
    with pytest.raises(TemplateError):
        parse_template(
            "id: x\nstep: s\ndataset: d\nnum_shots: 1\n#--- system\nhi"
        )  # num_shots mismatch
    with pytest.raises(TemplateError):
        parse_template(
            "id: x\nstep: s\ndataset: d\nnum_shots: 0\n#--- shot-input\nhi"
        )  # system must come first


def test_token_estimate_monotone():
    assert promptkit.estimate_tokens("") == 0
    assert promptkit.estimate_tokens("abcd") == 1
    assert promptkit.estimate_tokens("x" * 400) == 100
