"""Batch evaluation over the (family, difficulty, seed) grid.

Rollouts fan out over worker processes. Every trial returns a small record
keyed by its grid coordinates; records are sorted by key before aggregation
and sums use ``math.fsum``, so the table does not depend on completion order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from . import _layout as lay
from .config import Config
from .sim import evaluate_success, rollout, rollout_rng
from .terrain import generate_terrain

__all__ = [
    "TABLE_SCHEMA",
    "Trial",
    "Cell",
    "SuccessTable",
    "EvalSettings",
    "run_trial",
    "aggregate",
    "run_eval",
    "two_proportion_z",
]

TABLE_SCHEMA = "planc.table/1"


@dataclass(frozen=True)
class EvalSettings:
    fixed_T: float | None = None
    fixed_udes: float | None = None

    def as_dict(self) -> dict:
        return {"fixed_T": self.fixed_T, "fixed_udes": self.fixed_udes}


class Trial(NamedTuple):
    family: str
    difficulty: float
    seed: int
    outcome: str
    landing_error_sum: float
    landing_count: int
    energy_error_sum: float
    energy_count: int


def run_trial(cfg: Config, family: str, difficulty: float, seed: int, settings: EvalSettings) -> Trial:
    t = cfg.terrain
    seq = generate_terrain(family, difficulty, seed, t.n_stones, t.stone_width)
    trace = rollout(
        seq,
        cfg,
        rollout_rng(family, seed),
        fixed_T=settings.fixed_T,
        fixed_udes=settings.fixed_udes,
        record=False,
    )
    rep = evaluate_success(trace, seq)
    e_star = cfg.planner.e_star
    errs = [abs(e - e_star) for e in rep.energies]
    return Trial(
        family,
        float(difficulty),
        int(seed),
        rep.outcome,
        math.fsum(rep.landing_errors),
        len(rep.landing_errors),
        math.fsum(errs),
        len(errs),
    )


def _run_chunk(args) -> list[Trial]:
    cfg, tasks, settings = args
    return [run_trial(cfg, f, d, s, settings) for f, d, s in tasks]


@dataclass(frozen=True)
class Cell:
    family: str
    difficulty: float
    trials: int
    successes: int
    outcomes: dict = field(default_factory=dict)
    mean_landing_error: float = 0.0
    mean_energy_error: float = 0.0

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    def as_dict(self) -> dict:
        return {
            "family": self.family,
            "difficulty": self.difficulty,
            "trials": self.trials,
            "successes": self.successes,
            "rate": self.rate,
            "outcomes": dict(self.outcomes),
            "mean_landing_error": self.mean_landing_error,
            "mean_energy_error": self.mean_energy_error,
        }


@dataclass(frozen=True)
class SuccessTable:
    cells: tuple[Cell, ...]
    settings: dict = field(default_factory=dict)

    def cell(self, family: str, difficulty: float) -> Cell:
        for c in self.cells:
            if c.family == family and c.difficulty == difficulty:
                return c
        raise KeyError((family, difficulty))

    def to_json(self) -> str:
        doc = {"schema": TABLE_SCHEMA, "settings": self.settings, "cells": [c.as_dict() for c in self.cells]}
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SuccessTable":
        doc = json.loads(text)
        if doc.get("schema") != TABLE_SCHEMA:
            raise ValueError(f"expected schema {TABLE_SCHEMA!r}")
        cells = []
        for c in doc["cells"]:
            cells.append(
                Cell(
                    c["family"],
                    float(c["difficulty"]),
                    int(c["trials"]),
                    int(c["successes"]),
                    dict(c["outcomes"]),
                    float(c["mean_landing_error"]),
                    float(c["mean_energy_error"]),
                )
            )
        return cls(tuple(cells), doc.get("settings", {}))

    def to_text(self) -> str:
        head = f"{'family':<16}{'difficulty':>10}{'trials':>8}{'success':>9}{'landing_err_m':>15}{'|E+-E*|':>12}  outcomes"
        lines = [head, "-" * len(head)]
        for c in self.cells:
            outs = " ".join(f"{k}={v}" for k, v in sorted(c.outcomes.items()))
            lines.append(
                f"{c.family:<16}{c.difficulty:>10.2f}{c.trials:>8d}{c.rate:>9.3f}"
                f"{c.mean_landing_error:>15.3e}{c.mean_energy_error:>12.3e}  {outs}"
            )
        flags = ", ".join(f"{k}={v}" for k, v in self.settings.items() if v is not None)
        if flags:
            lines.append(f"settings: {flags}")
        return "\n".join(lines) + "\n"


def aggregate(trials: Iterable[Trial], settings: dict | None = None) -> SuccessTable:
    groups: dict[tuple[str, float], list[Trial]] = {}
    for tr in sorted(trials):
        groups.setdefault((tr.family, tr.difficulty), []).append(tr)
    cells = []
    for (fam, d), items in groups.items():
        outcomes: dict[str, int] = {}
        for tr in items:
            outcomes[tr.outcome] = outcomes.get(tr.outcome, 0) + 1
        n_land = sum(tr.landing_count for tr in items)
        n_energy = sum(tr.energy_count for tr in items)
        cells.append(
            Cell(
                fam,
                d,
                len(items),
                outcomes.get("success", 0),
                {k: outcomes[k] for k in lay.OUTCOMES if k in outcomes},
                math.fsum(tr.landing_error_sum for tr in items) / n_land if n_land else 0.0,
                math.fsum(tr.energy_error_sum for tr in items) / n_energy if n_energy else 0.0,
            )
        )
    return SuccessTable(tuple(cells), dict(settings or {}))


def grid(cfg: Config, seeds: Sequence[int] | None = None) -> list[tuple[str, float, int]]:
    ev = cfg.eval
    if seeds is None:
        seeds = range(ev.seed_offset, ev.seed_offset + ev.seeds)
    return [(f, float(d), int(s)) for f in ev.families for d in ev.difficulties for s in seeds]


def run_eval(
    cfg: Config,
    *,
    jobs: int = 1,
    settings: EvalSettings = EvalSettings(),
    seeds: Sequence[int] | None = None,
) -> SuccessTable:
    tasks = grid(cfg, seeds)
    if not tasks:
        raise ValueError("evaluation grid is empty")
    meta = {**settings.as_dict(), "noise": cfg.sim.noise, "disturb": cfg.sim.disturb}
    if jobs <= 1:
        return aggregate(_run_chunk((cfg, tasks, settings)), meta)
    n_chunks = min(len(tasks), 4 * jobs)
    chunks = [tasks[i::n_chunks] for i in range(n_chunks)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = pool.map(_run_chunk, [(cfg, ch, settings) for ch in chunks])
        trials = [t for part in parts for t in part]
    return aggregate(trials, meta)


def two_proportion_z(success_a: int, n_a: int, success_b: int, n_b: int) -> tuple[float, float]:
    """One-sided pooled z-test of ``rate_a > rate_b``; returns ``(z, p_value)``."""
    if n_a <= 0 or n_b <= 0:
        raise ValueError("need positive trial counts")
    pa, pb = success_a / n_a, success_b / n_b
    pool = (success_a + success_b) / (n_a + n_b)
    se = math.sqrt(pool * (1.0 - pool) * (1.0 / n_a + 1.0 / n_b))
    if se == 0.0:
        return (math.inf if pa > pb else 0.0), (0.0 if pa > pb else 1.0)
    z = (pa - pb) / se
    return z, 0.5 * math.erfc(z / math.sqrt(2.0))
