from __future__ import annotations

import random

import pytest

from tabqa import tabular
from tabqa.errors import (
    EmptyHeaderError,
    InvariantError,
    RaggedInputError,
    RowCountMismatchError,
)
from tabqa.tabular import Cell, Column, ColumnType, Provenance, Table

from conftest import PROPERTY_ROWS


def test_ingest_saints_table(saints_table):
    assert saints_table.column_names == ("row_id", "date", "game site", "result/score")
    assert saints_table.row_count == 3
    assert saints_table.rows[0][0].value == 0
    assert saints_table.rows[2][2].raw == "louisiana superdome"


def test_ingest_empty_body():
    t = tabular.ingest_table([["a"]], name="t1")
    assert t.column_names == ("row_id", "a")
    assert t.row_count == 0


def test_currency_column_is_int():
    t = tabular.ingest_table([["x"], ["$80,206"], ["$58,423"]], name="t1")
    assert t.columns[1].inferred_type == ColumnType.INT
    assert t.rows[0][1].value == 80206
    assert t.rows[0][1].raw == "$80,206"


def test_ragged_input_rejected():
    with pytest.raises(RaggedInputError):
        tabular.ingest_table([["a", "b"], ["1"]], name="t1")


def test_empty_header_rejected():
    with pytest.raises(EmptyHeaderError):
        tabular.ingest_table([], name="t1")
    with pytest.raises(EmptyHeaderError):
        tabular.ingest_table([["", "  "]], name="t1")


def test_date_column_inference(saints_table):
    assert saints_table.columns[1].inferred_type == ColumnType.DATE
    assert saints_table.rows[0][1].value.isoformat() == "2007-09-06"
    # mixed column falls back to text
    t = tabular.ingest_table([["d"], ["2007-9-6"], ["monday"]], name="t")
    assert t.columns[1].inferred_type == ColumnType.TEXT


def test_numeric_share_threshold():
    # 3 of 4 numeric = 75% < 80% -> text (matches the repurchase table's n/a column)
    t = tabular.ingest_table(
        [["x"], ["92618000"], ["90743000"], ["87956600"], ["n/a"]], name="t"
    )
    assert t.columns[1].inferred_type == ColumnType.TEXT
    # 4 of 5 = 80% -> int
    t2 = tabular.ingest_table(
        [["x"], ["1"], ["2"], ["3"], ["4"], ["n/a"]], name="t"
    )
    assert t2.columns[1].inferred_type == ColumnType.INT
    assert t2.rows[4][1].value == "n/a"


def test_real_column():
    t = tabular.ingest_table([["p"], ["107.59"], ["119.84"]], name="t")
    assert t.columns[1].inferred_type == ColumnType.REAL
    assert t.rows[0][1].value == pytest.approx(107.59)


def test_null_cells_are_none():
    t = tabular.ingest_table([["a", "b"], ["", "x"], ["2", ""]], name="t")
    assert t.rows[0][1].value is None
    assert t.rows[1][2].value is None


class TestSanitize:
    def test_kept_verbatim(self):
        assert tabular.sanitize_identifier("result/score") == "result/score"
        assert tabular.sanitize_identifier("filledcolumnname") == "filledcolumnname"

    def test_empty_becomes_placeholder(self):
        assert tabular.sanitize_identifier("") == "col"
        assert tabular.sanitize_identifier("``") == "col"

    def test_idempotent_on_random_inputs(self):
        rng = random.Random(7)
        alphabet = "ab `/%$-.,\t\n[]2019é|"
        for _ in range(300):
            raw = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 12)))
            once = tabular.sanitize_identifier(raw)
            assert once
            assert tabular.sanitize_identifier(once) == once

    def test_collisions_suffixed(self):
        t = tabular.ingest_table([["a", "a", "row_id"], ["1", "2", "3"]], name="t")
        assert t.column_names == ("row_id", "a", "a_2", "row_id_2")


def _aug_table(n_rows: int, cols: dict[str, list[str]]) -> Table:
    header = list(cols)
    rows = [header] + [[cols[c][i] for c in header] for i in range(n_rows)]
    return tabular.ingest_table(rows, name="aug", provenance=Provenance.AUGMENTING)


def test_join_saints_matches_worked_example(saints_table):
    aug = _aug_table(
        3,
        {"is_loss": ["yes", "yes", "yes"], "is_home_game": ["no", "no", "yes"]},
    )
    joined = tabular.join_on_row_id(saints_table, aug)
    assert joined.column_names == (
        "row_id",
        "date",
        "game site",
        "result/score",
        "is_loss",
        "is_home_game",
    )
    assert joined.provenance == Provenance.JOINED
    assert joined.row_count == 3
    # base cells preserved bitwise
    for i in range(3):
        assert joined.rows[i][: saints_table.width] == saints_table.rows[i]
    assert joined.rows[2][5].raw == "yes"


def test_identity_join(saints_table):
    empty_aug = Table(
        name="aug",
        columns=(Column("row_id", "row_id", ColumnType.INT),),
        rows=tuple((Cell(str(i), i),) for i in range(3)),
        provenance=Provenance.AUGMENTING,
    )
    joined = tabular.join_on_row_id(saints_table, empty_aug)
    assert joined.column_names == saints_table.column_names
    assert joined.rows == saints_table.rows


def test_join_row_count_mismatch(saints_table):
    aug = _aug_table(2, {"x": ["a", "b"]})
    with pytest.raises(RowCountMismatchError):
        tabular.join_on_row_id(saints_table, aug)


def test_join_collision_suffix(saints_table):
    aug = _aug_table(3, {"date": ["x", "y", "z"]})
    joined = tabular.join_on_row_id(saints_table, aug)
    assert joined.column_names[-1] == "date_2"


def test_join_preserves_rows_property():
    rng = random.Random(11)
    for _ in range(30):
        n = rng.randrange(0, 6)
        base = tabular.ingest_table(
            [["a", "b"]] + [[str(rng.random()), rng.choice("xyz")] for _ in range(n)],
            name="t1",
        )
        aug = _aug_table(n, {"c": [rng.choice("pq") for _ in range(n)]})
        joined = tabular.join_on_row_id(base, aug)
        assert joined.row_count == base.row_count
        for i in range(n):
            assert joined.rows[i][: base.width] == base.rows[i]


def test_inference_deterministic():
    a = tabular.ingest_table(PROPERTY_ROWS, name="t1")
    b = tabular.ingest_table(PROPERTY_ROWS, name="t1")
    assert a == b


def test_invariants_enforced_on_construction():
    col = Column("row_id", "row_id", ColumnType.INT)
    other = Column("a", "a", ColumnType.TEXT)
    with pytest.raises(InvariantError):
        Table(name="t", columns=(col, other), rows=((Cell("0", 0),),))  # ragged
    with pytest.raises(InvariantError):
        Table(name="t", columns=(other,), rows=())  # row_id missing
    with pytest.raises(InvariantError):
        Table(  # row_id not contiguous
            name="t",
            columns=(col,),
            rows=((Cell("1", 1),),),
        )
    with pytest.raises(InvariantError):
        Table(name="t", columns=(col, other, other), rows=())  # duplicate names


def test_property_table_types(property_table):
    # matches the financial fixture: text label column, two int year columns
    types = [c.inferred_type for c in property_table.columns]
    assert types == [ColumnType.INT, ColumnType.TEXT, ColumnType.INT, ColumnType.INT]
    assert property_table.rows[3][2].value == 148916


def test_repurchase_table_types(repurchase_table):
    by_name = {c.sanitized_name: c.inferred_type for c in repurchase_table.columns}
    assert by_name["total number ofsharespurchased[a]"] == ColumnType.INT
    assert by_name["averageprice paidpershare"] == ColumnType.REAL
    assert by_name["maximum number ofshares that may yetbe purchased under the planor program [b]"] == ColumnType.TEXT
