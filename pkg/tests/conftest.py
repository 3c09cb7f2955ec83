"""Shared fixture tables used across the test suite.

The three worked examples (a football-season table, a drivers table, and two
financial-report tables) double as ground truth: expected values in tests were
computed by hand or with independent brute-force oracles, never by running the
code under test.
"""

from __future__ import annotations

import pytest

from tabqa import tabular
from tabqa.llmclient import GenerationParams, KnowledgeSource

SAINTS_ROWS = [
    ["date", "game site", "result/score"],
    ["2007-9-6", "rca dome", "l 41-10"],
    ["2007-9-16", "raymond james stadium", "l 31-14"],
    ["2007-9-24", "louisiana superdome", "l 31-14"],
]

DRIVERS_ROWS = [
    ["driver"],
    ["jim clark"],
    ["richie ginther"],
    ["graham hill"],
    ["jack brabham"],
    ["tony maggs"],
]

PROPERTY_ROWS = [
    ["filledcolumnname", "2019", "2018"],
    ["computer equipment", "137763", "94384"],
    ["furniture and fixtures", "187167", "159648"],
    ["subtotal", "324930", "254032"],
    ["less accumulated depreciation", "148916", "104702"],
    ["property and equipment, net", "176014", "149330"],
]

REPURCHASE_ROWS = [
    [
        "period",
        "total number ofsharespurchased[a]",
        "averageprice paidpershare",
        "total number of sharespurchased as part of apublicly announcedplan or program [b]",
        "maximum number ofshares that may yetbe purchased under the planor program [b]",
    ],
    ["oct . 1 through oct . 31", "3087549", "107.59", "3075000", "92618000"],
    ["nov . 1 through nov . 30", "1877330", "119.84", "1875000", "90743000"],
    ["dec . 1 through dec . 31", "2787108", "116.54", "2786400", "87956600"],
    ["total", "7751987", "113.77", "7736400", "n/a"],
]

PROPERTY_REPORT = (
    "NOTE 5 - PROPERTY AND EQUIPMENT\n"
    "The Company owned equipment recorded at cost, which consisted of the "
    "following as of December 31, 2019 and 2018:\n"
    "Depreciation expense was $80,206 and $58,423 for the years ended "
    "December 31, 2019 and 2018, respectively"
)

REPURCHASE_REPORT = (
    "purchases of equity securities 2013 during 2014 , we repurchased 33035204 "
    "shares of our common stock at an average price of $ 100.24 .\n"
    "[b] effective january 1 , 2014 , our board of directors authorized the "
    "repurchase of up to 120 million shares of our common stock by "
    "december 31 , 2017 ."
)


@pytest.fixture
def saints_table() -> tabular.Table:
    return tabular.ingest_table(
        SAINTS_ROWS, name="t1", title="2007 New Orleans Saints season"
    )


@pytest.fixture
def drivers_table() -> tabular.Table:
    return tabular.ingest_table(
        DRIVERS_ROWS, name="t1", title="1963 International Gold Cup"
    )


@pytest.fixture
def property_table() -> tabular.Table:
    return tabular.ingest_table(PROPERTY_ROWS, name="t1")


@pytest.fixture
def repurchase_table() -> tabular.Table:
    return tabular.ingest_table(REPURCHASE_ROWS, name="t1")


class StubSource(KnowledgeSource):
    """In-memory knowledge source driven by a list of canned response batches.

    Each complete() call pops the next batch and replicates/pads it to
    n_samples; requests are recorded for assertions.
    """

    def __init__(self, batches: list[list[str]]):
        super().__init__()
        self.batches = list(batches)
        self.requests: list[tuple[list[dict], GenerationParams]] = []

    def complete(self, messages: list[dict], params: GenerationParams) -> list[str]:
        self.requests.append(([dict(m) for m in messages], params))
        if not self.batches:
            raise AssertionError("StubSource exhausted")
        batch = self.batches.pop(0)
        if len(batch) < params.n_samples:
            batch = batch + [batch[-1]] * (params.n_samples - len(batch))
        self._count(params.n_samples)
        return batch[: params.n_samples]
