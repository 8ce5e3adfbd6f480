"""Bonus optimization on application sets and the design strategies built
on it (historical averaging, predictive averaging, hindsight ideal)."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from bonuspolicy.errors import DataError, NotApplicable
from bonuspolicy.fastmatch import Market
from bonuspolicy.model import ApplicationSet, Registry

# objective values closer than this count as tied (smallest bonus wins)
TIE_TOLERANCE = 1e-9

DEFAULT_LAMBDA = {"gender": 23.0, "income": 28.0}


@dataclass(frozen=True)
class BonusGrid:
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not values or values[0] != 0.0:
            raise ValueError("bonus grid must start at 0")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("bonus grid must be strictly increasing")

    @classmethod
    def regular(cls, maximum: float = 50.0, step: float = 1.0) -> "BonusGrid":
        if step <= 0 or maximum < 0:
            raise ValueError("grid step must be positive and maximum non-negative")
        count = int(math.floor(maximum / step + 1e-9))
        return cls(tuple(i * step for i in range(count + 1)))

    def __len__(self):
        return len(self.values)

    @property
    def low(self) -> float:
        return self.values[0]

    @property
    def high(self) -> float:
        return self.values[-1]


DEFAULT_GRID = BonusGrid.regular()


@dataclass(frozen=True)
class PolicySuggestion:
    program: str
    attribute: str
    bonus: float
    strategy: str
    support: int
    per_set: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.support < 1:
            raise ValueError("suggestion support must be >= 1")
        if self.bonus < 0:
            raise ValueError("negative bonus")


def objective_curve(spd_row: np.ndarray, util_row: np.ndarray, lam: float) -> np.ndarray:
    """Objective at every bonus of a curve whose first point is b = 0.
    Works row-wise on (programs, grid) arrays. NaN where undefined."""
    return (util_row[..., :1] - util_row) + lam * np.abs(spd_row)


def argmin_smallest(values: np.ndarray) -> Optional[int]:
    """Index of the minimum defined value, earliest index on ties."""
    defined = ~np.isnan(values)
    if not defined.any():
        return None
    best = np.nanmin(values)
    return int(np.flatnonzero(defined & (values <= best + TIE_TOLERANCE))[0])


def optimal_bonuses(
    market: Market,
    program_ids: Sequence[str],
    attribute: str,
    grid: BonusGrid,
    lam: float,
) -> Dict[str, Optional[float]]:
    """Grid optimum per program on one application set; None where the
    program is not applicable (a group without applicants, or an objective
    undefined at every grid point)."""
    targets = [market.program_index(p) for p in program_ids]
    spd, util = market.curves(attribute, targets, grid.values)
    out: Dict[str, Optional[float]] = {}
    for i, pid in enumerate(program_ids):
        if np.isnan(spd[i, 0]):
            out[pid] = None
            continue
        best = argmin_smallest(objective_curve(spd[i], util[i], lam))
        out[pid] = None if best is None else grid.values[best]
    return out


def optimal_bonus(
    apps: ApplicationSet,
    programs: Registry,
    program_id: str,
    attribute: str,
    grid: BonusGrid = DEFAULT_GRID,
    lam: float = 28.0,
) -> float:
    """Bonus on the grid minimizing the objective for one program on one
    application set."""
    if program_id not in programs:
        raise DataError(f"unknown program {program_id!r}")
    value = optimal_bonuses(Market.build(apps, programs), [program_id], attribute, grid, lam)[program_id]
    if value is None:
        raise NotApplicable(f"{program_id}/{attribute} not applicable in {apps.year_label}")
    return value


def per_set_optima(
    sets: Iterable[Union[ApplicationSet, Market]],
    programs: Registry,
    program_ids: Sequence[str],
    attribute: str,
    grid: BonusGrid,
    lam: float,
) -> Dict[str, List[Optional[float]]]:
    """Grid optimum of every program on every set, in set order. Sets may be
    given as prebuilt markets to skip rebuilding them."""
    optima: Dict[str, List[Optional[float]]] = {p: [] for p in program_ids}
    for apps in sets:
        market = apps if isinstance(apps, Market) else Market.build(apps, programs)
        found = optimal_bonuses(market, program_ids, attribute, grid, lam)
        for p in program_ids:
            optima[p].append(found[p])
    return optima


def average_optima(
    optima: Mapping[str, Sequence[Optional[float]]],
    attribute: str,
    strategy: str,
) -> Dict[str, PolicySuggestion]:
    """Mean of the applicable per-set optima for each program. Programs with
    no applicable set are left out."""
    out: Dict[str, PolicySuggestion] = {}
    for pid in sorted(optima):
        values = [v for v in optima[pid] if v is not None]
        if values:
            out[pid] = PolicySuggestion(
                pid, attribute, math.fsum(values) / len(values), strategy, len(values), tuple(values)
            )
    return out


def _single(suggestions: Dict[str, PolicySuggestion], program_id: str) -> PolicySuggestion:
    try:
        return suggestions[program_id]
    except KeyError:
        raise NotApplicable(f"no applicable application set for {program_id}") from None


def suggest_predictive(
    sampled_sets: Sequence[ApplicationSet],
    programs: Registry,
    program_id: str,
    attribute: str,
    grid: BonusGrid = DEFAULT_GRID,
    lam: float = 28.0,
) -> PolicySuggestion:
    optima = per_set_optima(sampled_sets, programs, [program_id], attribute, grid, lam)
    return _single(average_optima(optima, attribute, f"predictive_{len(sampled_sets)}"), program_id)


def suggest_historical(
    history: Sequence[ApplicationSet],
    programs: Registry,
    program_id: str,
    attribute: str,
    k: int = 1,
    grid: BonusGrid = DEFAULT_GRID,
    lam: float = 28.0,
) -> PolicySuggestion:
    """Mean hindsight optimum over the last ``k`` years of ``history``
    (oldest first). Fewer than ``k`` available years are used as they are."""
    if k < 1:
        raise ValueError("k must be >= 1")
    recent = list(history)[-k:]
    optima = per_set_optima(recent, programs, [program_id], attribute, grid, lam)
    return _single(average_optima(optima, attribute, f"historical_{k}"), program_id)


def ideal_policy(
    realized: ApplicationSet,
    programs: Registry,
    program_id: str,
    attribute: str,
    grid: BonusGrid = DEFAULT_GRID,
    lam: float = 28.0,
) -> PolicySuggestion:
    bonus = optimal_bonus(realized, programs, program_id, attribute, grid, lam)
    return PolicySuggestion(program_id, attribute, bonus, "ideal", 1, (bonus,))


# -- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class EvaluationRow:
    program: str
    bonus: float
    ideal_bonus: float
    objective: float
    ideal_objective: float
    objective_error: float
    spd_0: float
    spd_b: float
    spd_delta: float


@dataclass(frozen=True)
class Stat:
    mean: float
    sd: float
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "Stat":
        if not values:
            return cls(math.nan, math.nan, 0)
        arr = np.asarray(values, dtype=float)
        return cls(float(arr.mean()), float(arr.std()), len(values))


@dataclass(frozen=True)
class Evaluation:
    strategy: str
    attribute: str
    lam: float
    rows: Tuple[EvaluationRow, ...]
    excluded: Tuple[str, ...]

    @property
    def objective_error(self) -> Stat:
        return Stat.of([r.objective_error for r in self.rows])

    @property
    def spd_delta(self) -> Stat:
        return Stat.of([r.spd_delta for r in self.rows])

    @property
    def bonus(self) -> Stat:
        return Stat.of([r.bonus for r in self.rows])

    def summary(self) -> dict:
        return {
            "strategy": self.strategy,
            "attribute": self.attribute,
            "lambda": self.lam,
            "programs": len(self.rows),
            "excluded": len(self.excluded),
            "objective_error": asdict(self.objective_error),
            "spd_delta": asdict(self.spd_delta),
            "bonus": asdict(self.bonus),
        }


def evaluate_strategy(
    suggestions: Mapping[str, PolicySuggestion],
    realized: ApplicationSet,
    programs: Registry,
    attribute: str,
    lam: float,
    grid: BonusGrid = DEFAULT_GRID,
    candidates: Optional[Mapping[str, Iterable[float]]] = None,
    market: Optional[Market] = None,
) -> Evaluation:
    """Score suggested bonuses on the realized application set.

    The ideal reference for each program is the best bonus among the grid,
    the suggested value and any extra ``candidates`` for that program, so
    fractional suggestions between grid points are compared fairly and the
    objective error is never negative.
    """
    if not suggestions:
        raise NotApplicable("no suggestions to evaluate")
    strategies = {s.strategy for s in suggestions.values()}
    if len(strategies) != 1:
        raise ValueError(f"suggestions mix strategies: {sorted(strategies)}")
    for pid in suggestions:
        if pid not in programs:
            raise DataError(f"suggestion for unregistered program {pid!r}")
    market = market or Market.build(realized, programs)
    rows: List[EvaluationRow] = []
    excluded: List[str] = []
    for pid in sorted(suggestions):
        bonus = suggestions[pid].bonus
        extra = set(candidates.get(pid, ())) if candidates else set()
        points = np.array(sorted(set(grid.values) | extra | {bonus}))
        spd_c, util_c = market.curves(attribute, [market.program_index(pid)], points)
        values = objective_curve(spd_c[0], util_c[0], lam)
        mine = values[int(np.searchsorted(points, bonus))]
        best = argmin_smallest(values)
        if np.isnan(spd_c[0, 0]) or math.isnan(mine) or best is None:
            excluded.append(pid)
            continue
        spd_b = float(spd_c[0, int(np.searchsorted(points, bonus))])
        rows.append(
            EvaluationRow(
                program=pid,
                bonus=bonus,
                ideal_bonus=float(points[best]),
                objective=float(mine),
                ideal_objective=float(np.nanmin(values)),
                objective_error=float(mine - np.nanmin(values)),
                spd_0=float(spd_c[0, 0]),
                spd_b=spd_b,
                spd_delta=abs(spd_b) - abs(float(spd_c[0, 0])),
            )
        )
    return Evaluation(strategies.pop(), attribute, lam, tuple(rows), tuple(excluded))


# -- serialization ------------------------------------------------------------


def suggestions_to_json(suggestions: Mapping[str, PolicySuggestion], meta: Optional[dict] = None) -> str:
    doc = dict(meta or {})
    doc["suggestions"] = [
        {
            "program": s.program,
            "attribute": s.attribute,
            "bonus": s.bonus,
            "strategy": s.strategy,
            "support": s.support,
        }
        for _, s in sorted(suggestions.items())
    ]
    return json.dumps(doc, indent=2, sort_keys=True)


def suggestions_from_json(text: str) -> Dict[str, PolicySuggestion]:
    out: Dict[str, PolicySuggestion] = {}
    for row in json.loads(text)["suggestions"]:
        if row["program"] in out:
            raise DataError(f"duplicate suggestion for {row['program']!r}")
        out[row["program"]] = PolicySuggestion(
            row["program"], row["attribute"], float(row["bonus"]), row["strategy"], int(row["support"])
        )
    return out
