"""End-to-end design study for one evaluation year: pick target programs,
produce suggestions for each strategy and score them on the realized year."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

from bonuspolicy.applicants import sample_sets, train
from bonuspolicy.errors import ConfigError, DataError, NotApplicable, UndefinedMetric
from bonuspolicy.fastmatch import Market
from bonuspolicy.matching import match
from bonuspolicy.metrics import INEQUALITY_FLOOR, consistently_unequal, spd
from bonuspolicy.model import ApplicationSet, Registry
from bonuspolicy.policy import (
    DEFAULT_GRID,
    BonusGrid,
    Evaluation,
    PolicySuggestion,
    average_optima,
    evaluate_strategy,
    per_set_optima,
)

log = logging.getLogger(__name__)

STRATEGY_RE = re.compile(r"^(historical|predictive)[-_](\d+)$|^ideal$")
DEFAULT_STRATEGIES = ("historical-1", "historical-3", "historical-5", "predictive-50", "predictive-200", "ideal")


@dataclass(frozen=True)
class Strategy:
    kind: str
    size: int = 1

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        m = STRATEGY_RE.match(text.strip().lower())
        if not m:
            raise ConfigError(
                f"unknown strategy {text!r}; expected historical-K, predictive-N or ideal"
            )
        if text.strip().lower() == "ideal":
            return cls("ideal")
        size = int(m.group(2))
        if size < 1:
            raise ConfigError(f"strategy {text!r} needs a positive size")
        return cls(m.group(1), size)

    @property
    def name(self) -> str:
        return "ideal" if self.kind == "ideal" else f"{self.kind}_{self.size}"


@dataclass(frozen=True)
class Study:
    history: Sequence[ApplicationSet]  # oldest first, evaluation year excluded
    realized: ApplicationSet
    programs: Registry

    @classmethod
    def from_years(cls, years: Sequence[ApplicationSet], programs: Registry, year: Optional[str] = None) -> "Study":
        labels = [y.year_label for y in years]
        if year is None:
            idx = len(years) - 1
        elif year in labels:
            idx = labels.index(year)
        else:
            raise DataError(f"evaluation year {year!r} not in data ({labels})")
        return cls(tuple(years[:idx]), years[idx], programs)


def spd_history(
    history: Sequence[ApplicationSet], programs: Registry, attribute: str, years: int = 3
) -> Dict[str, List[Optional[float]]]:
    """No-bonus SPD per program over the last ``years`` cohorts; None marks
    an undefined year."""
    out: Dict[str, List[Optional[float]]] = {p: [] for p in sorted(programs)}
    for apps in history[-years:]:
        outcome = match(apps, programs)
        for p in out:
            try:
                out[p].append(spd(outcome, p, attribute))
            except UndefinedMetric:
                out[p].append(None)
    return out


def target_programs(
    study: Study, attribute: str, mode: str = "consistent", floor: float = INEQUALITY_FLOOR
) -> List[str]:
    if mode == "all":
        return sorted(study.programs)
    if mode != "consistent":
        raise ConfigError(f"unknown program filter {mode!r}")
    if len(study.history) < 3:
        raise NotApplicable("the consistent-inequality filter needs three historical years")
    targets = []
    for pid, values in spd_history(study.history, study.programs, attribute).items():
        try:
            if consistently_unequal(values, floor=floor):
                targets.append(pid)
        except NotApplicable:
            log.info("%s: skipped by filter, SPD history %s", pid, values)
    return targets


@dataclass
class StudyResult:
    attribute: str
    lam: float
    targets: List[str]
    suggestions: Dict[str, Dict[str, PolicySuggestion]] = field(default_factory=dict)
    evaluations: Dict[str, Evaluation] = field(default_factory=dict)
    skipped: Dict[str, List[str]] = field(default_factory=dict)


def build_forecast(
    study: Study, count: int, seed: int = 0, sample_size: Optional[int] = None
) -> List[Market]:
    """Sampled application sets for the evaluation year from a model trained
    on the most recent historical year."""
    if not study.history:
        raise NotApplicable("predictive strategies need a training year")
    model = train(study.history[-1], study.programs)
    sets = sample_sets(model, study.programs, count, seed, sample_size)
    return [Market.build(s, study.programs) for s in sets]


def suggest(
    study: Study,
    strategies: Sequence[Strategy],
    attribute: str,
    targets: Sequence[str],
    grid: BonusGrid = DEFAULT_GRID,
    lam: float = 28.0,
    seed: int = 0,
    sample_size: Optional[int] = None,
    forecast: Optional[Sequence[Market]] = None,
) -> Dict[str, Dict[str, PolicySuggestion]]:
    """Suggestions per strategy name. Predictive strategies share one stream
    of sampled sets, so predictive-50 averages the first 50 sets that
    predictive-200 uses. ``forecast`` passes sampled sets built earlier."""
    targets = list(targets)
    out: Dict[str, Dict[str, PolicySuggestion]] = {}
    n_sampled = max((s.size for s in strategies if s.kind == "predictive"), default=0)
    sampled_optima: Dict[str, List[Optional[float]]] = {}
    if n_sampled:
        if forecast is None:
            forecast = build_forecast(study, n_sampled, seed, sample_size)
        if len(forecast) < n_sampled:
            raise ConfigError(f"{len(forecast)} sampled sets given, {n_sampled} needed")
        sets = forecast[:n_sampled]
        sampled_optima = per_set_optima(sets, study.programs, targets, attribute, grid, lam)
    for strategy in strategies:
        if strategy.kind == "predictive":
            optima = {p: v[: strategy.size] for p, v in sampled_optima.items()}
        elif strategy.kind == "historical":
            if not study.history:
                raise NotApplicable("historical strategies need at least one past year")
            recent = study.history[-strategy.size:]
            optima = per_set_optima(recent, study.programs, targets, attribute, grid, lam)
        else:
            optima = per_set_optima([study.realized], study.programs, targets, attribute, grid, lam)
        out[strategy.name] = average_optima(optima, attribute, strategy.name)
    return out


def run_study(
    study: Study,
    strategies: Sequence[Strategy],
    attribute: str,
    lam: float,
    grid: BonusGrid = DEFAULT_GRID,
    seed: int = 0,
    mode: str = "consistent",
    sample_size: Optional[int] = None,
    floor: float = INEQUALITY_FLOOR,
    forecast: Optional[Sequence[Market]] = None,
) -> StudyResult:
    targets = target_programs(study, attribute, mode, floor)
    if not targets:
        raise NotApplicable(f"no target programs for {attribute} ({mode} filter)")
    result = StudyResult(attribute, lam, targets)
    result.suggestions = suggest(
        study, strategies, attribute, targets, grid, lam, seed, sample_size, forecast
    )
    for name, sugg in result.suggestions.items():
        result.skipped[name] = [p for p in targets if p not in sugg]
    result.evaluations = evaluate_all(study, result.suggestions, attribute, lam, grid)
    return result


def evaluate_all(
    study: Study,
    suggestions: Mapping[str, Mapping[str, PolicySuggestion]],
    attribute: str,
    lam: float,
    grid: BonusGrid = DEFAULT_GRID,
) -> Dict[str, Evaluation]:
    """Evaluate several strategies against one shared ideal reference per
    program (the grid plus every suggested value)."""
    candidates: Dict[str, set] = {}
    for sugg in suggestions.values():
        for pid, s in sugg.items():
            candidates.setdefault(pid, set()).add(s.bonus)
    market = Market.build(study.realized, study.programs)
    return {
        name: evaluate_strategy(sugg, study.realized, study.programs, attribute, lam, grid, candidates, market)
        for name, sugg in suggestions.items()
        if sugg
    }
