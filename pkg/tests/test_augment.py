from __future__ import annotations

import pytest

from tabqa.analysis import AugmentationPlan, AugmentationQuery, ClosedDomainExtraction
from tabqa.augment import (
    BundleMode,
    TableBundle,
    answer_rowwise,
    build_bundle,
    parse_rowwise,
    rowwise_rendering,
)
from tabqa.errors import AlignmentError
from tabqa.tabular import ColumnType, ingest_table

from conftest import StubSource

COUNTRY_QUERY = AugmentationQuery(
    "driver_country", "What is his/her country?", ("driver",)
)

# row-wise transcript for the drivers table, in the format the shot demonstrates
COUNTRY_RESPONSE = """Output:
/*
row_id  driver
0    jim clark        scotland
1    richie ginther   united states
2    graham hill      england
3    jack brabham     australia
4    tony maggs       south africa
*/"""

EXPECTED_COUNTRIES = ["scotland", "united states", "england", "australia", "south africa"]


def test_rowwise_rendering(drivers_table):
    text = rowwise_rendering(COUNTRY_QUERY, drivers_table)
    lines = text.splitlines()
    assert lines[0] == "Give a database as shown below:"
    assert lines[1] == "Table: 1963 International Gold Cup"
    assert lines[2] == "/*"
    assert lines[3] == "row_id    driver"
    assert lines[4] == "0         jim clark"
    assert lines[-1] == 'Q: Answer question "What is his/her country?" row by row.'


def test_parse_rowwise_worked_example():
    assert parse_rowwise(COUNTRY_RESPONSE, [0, 1, 2, 3, 4]) == EXPECTED_COUNTRIES


def test_parse_rowwise_shuffled_ids():
    response = "2  c  z\n0  a  x\n1  b  y"
    assert parse_rowwise(response, [0, 1, 2]) == ["x", "y", "z"]


def test_parse_rowwise_positional_fallback():
    response = "jim clark    scotland\nrichie ginther    united states"
    assert parse_rowwise(response, [0, 1]) == ["scotland", "united states"]


def test_parse_rowwise_count_mismatch():
    with pytest.raises(AlignmentError):
        parse_rowwise("0  a  x\n1  b  y", [0, 1, 2])


def test_answer_rowwise(drivers_table):
    source = StubSource([[COUNTRY_RESPONSE]])
    values = answer_rowwise(COUNTRY_QUERY, drivers_table, source)
    assert values == EXPECTED_COUNTRIES
    messages, params = source.requests[0]
    assert params.n_samples == 1
    assert 'row by row' in messages[-1]["content"]


def test_answer_rowwise_empty_table():
    table = ingest_table([["driver"]], name="t1")
    source = StubSource([])
    assert answer_rowwise(COUNTRY_QUERY, table, source) == []
    assert source.requests == []


def test_answer_rowwise_retry_then_fail(drivers_table):
    bad = "0  jim clark  scotland"  # one row for a five-row table
    source = StubSource([[bad], [bad]])
    with pytest.raises(AlignmentError):
        answer_rowwise(COUNTRY_QUERY, drivers_table, source)
    assert len(source.requests) == 2  # one retry


SAINTS_PLAN = AugmentationPlan(
    queries=(
        AugmentationQuery("is_loss", "Is it a loss?", ("result/score",)),
        AugmentationQuery(
            "is_home_game", "Is it the home court of New Orleans Saints?", ("game site",)
        ),
    ),
    raw_response="",
    reasoning="",
)

IS_LOSS_RESPONSE = """Output:
/*
row_id    result/score    is_loss
0         l 41-10         yes
1         l 31-14         yes
2         l 31-14         yes
*/"""

IS_HOME_RESPONSE = """Output:
/*
row_id    game site                is_home_game
0         rca dome                 no
1         raymond james stadium    no
2         louisiana superdome      yes
*/"""


def test_build_bundle_saints(saints_table):
    source = StubSource([[IS_LOSS_RESPONSE], [IS_HOME_RESPONSE]])
    bundle = build_bundle(SAINTS_PLAN, saints_table, source)
    assert bundle.mode == BundleMode.OPEN_JOINED
    assert bundle.joined is not None
    assert bundle.joined.column_names == (
        "row_id", "date", "game site", "result/score", "is_loss", "is_home_game",
    )
    # base cells appear verbatim in the joined table
    for i in range(3):
        assert bundle.joined.rows[i][: saints_table.width] == saints_table.rows[i]
    assert [r[4].raw for r in bundle.joined.rows] == ["yes", "yes", "yes"]
    assert [r[5].raw for r in bundle.joined.rows] == ["no", "no", "yes"]
    assert bundle.dropped_queries == ()
    assert bundle.primary_table is bundle.joined


def test_build_bundle_empty_plan(saints_table):
    plan = AugmentationPlan(queries=(), raw_response="", reasoning="")
    bundle = build_bundle(plan, saints_table, StubSource([]))
    assert bundle.augmenting is None
    assert bundle.joined is None
    assert bundle.mode == BundleMode.OPEN_JOINED
    assert bundle.primary_table is saints_table


def test_build_bundle_drops_failed_query(saints_table, caplog):
    bad = "0  x  y"  # misaligned for three rows
    source = StubSource([[IS_LOSS_RESPONSE], [bad], [bad]])
    with caplog.at_level("WARNING"):
        bundle = build_bundle(SAINTS_PLAN, saints_table, source)
    assert bundle.joined is not None
    assert bundle.joined.column_names[-1] == "is_loss"
    assert bundle.dropped_queries == ("is_home_game",)


def test_build_bundle_all_queries_dropped(saints_table):
    bad = "0  x  y"
    source = StubSource([[bad]] * 4)
    bundle = build_bundle(SAINTS_PLAN, saints_table, source)
    assert bundle.augmenting is None
    assert bundle.dropped_queries == ("is_loss", "is_home_game")


def test_build_bundle_columns_in_plan_order(drivers_table):
    plan = AugmentationPlan(
        queries=(
            AugmentationQuery("b_col", "b?", ("driver",)),
            AugmentationQuery("a_col", "a?", ("driver",)),
        ),
        raw_response="",
        reasoning="",
    )
    ok = "\n".join(f"{i}  d  v{i}" for i in range(5))
    source = StubSource([[ok], [ok]])
    bundle = build_bundle(plan, drivers_table, source)
    assert bundle.joined.column_names[-2:] == ("b_col", "a_col")


def test_build_bundle_closed_extraction(property_table):
    extraction = ClosedDomainExtraction(
        columns={"depreciation_expense_2019": (80206,)}, raw_response=""
    )
    bundle = build_bundle(extraction, property_table)
    assert bundle.mode == BundleMode.CLOSED_SEPARATE
    assert bundle.joined is None
    assert bundle.augmenting.name == "t2"
    assert bundle.augmenting.row_count == 1
    assert bundle.augmenting.rows[0][1].value == 80206
    assert bundle.primary_table is property_table


def test_build_bundle_closed_none(property_table):
    bundle = build_bundle(None, property_table)
    assert bundle.mode == BundleMode.CLOSED_SEPARATE
    assert bundle.augmenting is None


def test_augmented_values_retyped(drivers_table):
    plan = AugmentationPlan(
        queries=(AugmentationQuery("score", "score?", ("driver",)),),
        raw_response="",
        reasoning="",
    )
    numbers = "\n".join(f"{i}  d  {i * 10}" for i in range(5))
    bundle = build_bundle(plan, drivers_table, StubSource([[numbers]]))
    col = bundle.joined.columns[-1]
    assert col.inferred_type == ColumnType.INT
    assert bundle.joined.rows[3][-1].value == 30
