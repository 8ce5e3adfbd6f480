"""Admission-rate parity, utility and the bonus objective."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from bonuspolicy.errors import NotApplicable, UndefinedMetric
from bonuspolicy.matching import MatchOutcome

STRONG_INEQUALITY = 0.1
INEQUALITY_FLOOR = 0.05
PRESTIGE_WINDOW = 3


@dataclass(frozen=True)
class ProgramMetrics:
    program: str
    spd: Optional[float]
    utility: Optional[float]
    admitted_count: int
    applicant_counts: Dict[str, int]

    @property
    def classification(self) -> str:
        return "undefined" if self.spd is None else classify_spd(self.spd)


@dataclass(frozen=True)
class ObjectiveValue:
    value: float
    utility_loss: float
    abs_spd: float
    lam: float


def group_counts(outcome: MatchOutcome, program_id: str, attribute: str):
    """(admitted, applicants) for the protected group and for everyone else."""
    result = outcome._result(program_id)
    students = outcome.apps.by_id
    admitted = set(result.admitted)
    app_p = app_o = adm_p = adm_o = 0
    for sid in result.applicants:
        if students[sid].is_protected(attribute):
            app_p += 1
            adm_p += sid in admitted
        else:
            app_o += 1
            adm_o += sid in admitted
    return (adm_p, app_p), (adm_o, app_o)


def spd(outcome: MatchOutcome, program_id: str, attribute: str) -> float:
    """Admission rate of the protected group minus that of everyone else,
    among students who listed the program."""
    (adm_p, app_p), (adm_o, app_o) = group_counts(outcome, program_id, attribute)
    if app_p == 0 or app_o == 0:
        raise UndefinedMetric(
            f"SPD undefined for {program_id}/{attribute}: "
            f"{app_p} protected and {app_o} other applicants"
        )
    return adm_p / app_p - adm_o / app_o


def utility(outcome: MatchOutcome, program_id: str) -> float:
    """Mean un-bonused admission score of the admitted students."""
    result = outcome._result(program_id)
    if not result.admitted:
        raise UndefinedMetric(f"utility undefined for {program_id}: nobody admitted")
    return math.fsum(result.raw[s] for s in result.admitted) / len(result.admitted)


def objective(
    outcome_b: MatchOutcome,
    outcome_0: MatchOutcome,
    program_id: str,
    attribute: str,
    lam: float,
) -> ObjectiveValue:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    loss = utility(outcome_0, program_id) - utility(outcome_b, program_id)
    abs_spd = abs(spd(outcome_b, program_id, attribute))
    return ObjectiveValue(loss + lam * abs_spd, loss, abs_spd, lam)


def prestige(program_id: str, history: Sequence[MatchOutcome]) -> float:
    """Pooled mean admission score of everyone admitted to the program in
    the last three cohorts of ``history`` (oldest first)."""
    scores: List[float] = []
    for outcome in history[-PRESTIGE_WINDOW:]:
        result = outcome.per_program.get(program_id)
        if result is not None:
            scores.extend(result.raw[s] for s in result.admitted)
    if not scores:
        raise UndefinedMetric(f"no admission history for {program_id}")
    return math.fsum(scores) / len(scores)


def classify_spd(value: float, threshold: float = STRONG_INEQUALITY) -> str:
    return "strongly-unequal" if abs(value) > threshold else "accepted"


def consistently_unequal(
    spd_history: Sequence[Optional[float]],
    floor: float = INEQUALITY_FLOOR,
    strong: float = STRONG_INEQUALITY,
) -> bool:
    """Whether three consecutive yearly SPD values show an unequal gap every
    year, always against the same group, strong in at least two years."""
    values = [v for v in spd_history if v is not None]
    if len(spd_history) != 3 or len(values) != 3:
        raise NotApplicable(f"need 3 defined SPD values, got {list(spd_history)}")
    if not all(abs(v) > floor for v in values):
        return False
    if not (all(v > 0 for v in values) or all(v < 0 for v in values)):
        return False
    return sum(abs(v) > strong for v in values) >= 2


def program_metrics(outcome: MatchOutcome, program_id: str, attribute: str) -> ProgramMetrics:
    (adm_p, app_p), (adm_o, app_o) = group_counts(outcome, program_id, attribute)
    try:
        value: Optional[float] = spd(outcome, program_id, attribute)
    except UndefinedMetric:
        value = None
    try:
        util: Optional[float] = utility(outcome, program_id)
    except UndefinedMetric:
        util = None
    return ProgramMetrics(
        program=program_id,
        spd=value,
        utility=util,
        admitted_count=adm_p + adm_o,
        applicant_counts={"protected": app_p, "other": app_o},
    )
