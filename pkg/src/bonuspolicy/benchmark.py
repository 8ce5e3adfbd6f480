"""Seeded multi-run benchmark on synthetic cohorts.

Each seed generates a fresh history, designs policies for every program
with all strategies and scores them on the final year. The sampled sets are
built once per seed and shared by both attributes.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from bonuspolicy.applicants import SyntheticConfig, generate_synthetic_history
from bonuspolicy.pipeline import DEFAULT_STRATEGIES, Strategy, Study, build_forecast, run_study, target_programs
from bonuspolicy.policy import DEFAULT_LAMBDA

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttributeReport:
    attribute: str
    bonus_mean: Dict[str, float]
    bonus_sd: Dict[str, float]
    min_objective_error: Dict[str, float]
    consistent: List[str]
    # mean |SPD_b| - |SPD_0| over consistently unequal programs, per strategy
    consistent_spd_delta: Dict[str, float]


@dataclass(frozen=True)
class SeedReport:
    seed: int
    seconds: float
    attributes: Dict[str, AttributeReport]


@dataclass(frozen=True)
class BenchmarkConfig:
    seeds: Sequence[int] = tuple(range(10))
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    strategies: Sequence[str] = DEFAULT_STRATEGIES
    attributes: Sequence[str] = ("gender", "income")


def run_seed(cfg: BenchmarkConfig, seed: int) -> SeedReport:
    start = time.perf_counter()
    years, programs = generate_synthetic_history(replace(cfg.synthetic, seed=seed))
    study = Study.from_years(years, programs)
    strategies = [Strategy.parse(s) for s in cfg.strategies]
    n_sampled = max((s.size for s in strategies if s.kind == "predictive"), default=0)
    forecast = build_forecast(study, n_sampled, seed) if n_sampled else None
    reports = {}
    for attr in cfg.attributes:
        res = run_study(study, strategies, attr, DEFAULT_LAMBDA[attr], seed=seed, mode="all", forecast=forecast)
        consistent = target_programs(study, attr, "consistent")
        deltas = {}
        for name, ev in res.evaluations.items():
            picked = [r.spd_delta for r in ev.rows if r.program in consistent]
            deltas[name] = float(np.mean(picked)) if picked else math.nan
        reports[attr] = AttributeReport(
            attribute=attr,
            bonus_mean={k: ev.bonus.mean for k, ev in res.evaluations.items()},
            bonus_sd={k: ev.bonus.sd for k, ev in res.evaluations.items()},
            min_objective_error={
                k: min(r.objective_error for r in ev.rows) for k, ev in res.evaluations.items()
            },
            consistent=consistent,
            consistent_spd_delta=deltas,
        )
    elapsed = time.perf_counter() - start
    log.info("seed %d done in %.1fs", seed, elapsed)
    return SeedReport(seed, elapsed, reports)


def run_benchmark(cfg: Optional[BenchmarkConfig] = None) -> List[SeedReport]:
    cfg = cfg or BenchmarkConfig()
    return [run_seed(cfg, s) for s in cfg.seeds]
