import dataclasses
import math
import random

import pytest

from planc.config import Config
from planc.evaluate import (
    Cell,
    EvalSettings,
    SuccessTable,
    Trial,
    aggregate,
    run_eval,
    run_trial,
    two_proportion_z,
)


def small_cfg(**ev):
    cfg = Config()
    base = dict(families=("flat_stones", "height_varying"), difficulties=(0.5, 1.0), seeds=4)
    base.update(ev)
    sim = dataclasses.replace(cfg.sim, noise=True)
    return dataclasses.replace(cfg, sim=sim, eval=dataclasses.replace(cfg.eval, **base))


@pytest.fixture(scope="module")
def table():
    return run_eval(small_cfg())


def test_cells_cover_grid(table):
    assert [(c.family, c.difficulty) for c in table.cells] == [
        ("flat_stones", 0.5),
        ("flat_stones", 1.0),
        ("height_varying", 0.5),
        ("height_varying", 1.0),
    ]
    for c in table.cells:
        assert c.trials == 4 and sum(c.outcomes.values()) == 4
        assert 0.0 <= c.rate <= 1.0


def test_parallel_matches_serial(table):
    assert run_eval(small_cfg(), jobs=3).to_json() == table.to_json()


def test_order_independent():
    cfg = small_cfg()
    seeds = list(range(6))
    random.Random(0).shuffle(seeds)
    assert run_eval(cfg, seeds=seeds).to_json() == run_eval(cfg, seeds=sorted(seeds)).to_json()


def test_aggregate_ignores_input_order():
    trials = [
        Trial("flat_stones", 0.5, s, "success" if s % 3 else "fall", 0.01 * s, 3, 1e-16 * s, 3) for s in range(30)
    ]
    shuffled = trials[:]
    random.Random(1).shuffle(shuffled)
    assert aggregate(trials) == aggregate(shuffled)
    cell = aggregate(trials).cell("flat_stones", 0.5)
    assert cell.successes == 20 and cell.outcomes == {"success": 20, "fall": 10}
    assert cell.mean_landing_error == pytest.approx(math.fsum(0.01 * s for s in range(30)) / 90, abs=1e-15)


def test_json_round_trip(table):
    text = table.to_json()
    assert SuccessTable.from_json(text) == table
    assert SuccessTable.from_json(text).to_json() == text


def test_text_table(table):
    text = table.to_text()
    lines = text.splitlines()
    assert lines[0].startswith("family") and len(lines) == 2 + len(table.cells) + 1
    assert "noise=True" in lines[-1]


def test_missing_cell(table):
    with pytest.raises(KeyError):
        table.cell("upstairs", 0.5)


def test_wrong_schema():
    with pytest.raises(ValueError):
        SuccessTable.from_json('{"schema": "x", "cells": []}')


def test_trial_records_landing_errors():
    tr = run_trial(small_cfg(), "flat_stones", 0.5, 0, EvalSettings())
    assert tr.landing_count == 19 and tr.energy_count == 19
    assert tr.landing_error_sum > 0.0


def test_empty_grid():
    with pytest.raises(ValueError):
        run_eval(small_cfg(families=()))


class TestTwoProportion:
    def test_reference_value(self):
        # pooled rate 0.8, se = sqrt(0.16 * 2 / 100)
        z, p = two_proportion_z(90, 100, 70, 100)
        assert z == pytest.approx(0.2 / math.sqrt(0.0032), rel=1e-12)
        assert p == pytest.approx(0.5 * math.erfc(z / math.sqrt(2)), rel=1e-12)
        assert p < 0.001

    def test_equal_rates(self):
        z, p = two_proportion_z(50, 100, 50, 100)
        assert z == 0.0 and p == 0.5

    def test_degenerate(self):
        assert two_proportion_z(10, 10, 10, 10) == (0.0, 1.0)
        assert two_proportion_z(10, 10, 0, 10)[1] < 1e-4

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            two_proportion_z(1, 0, 1, 1)


def test_cell_rate():
    assert Cell("flat_stones", 0.5, 4, 3).rate == 0.75
