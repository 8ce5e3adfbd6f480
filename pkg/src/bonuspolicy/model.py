"""Domain types: students, programs, application sets and bonus policies."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Mapping, Optional, Tuple

from bonuspolicy.errors import DataError

MAX_PREFERENCES = 10
GRADES = "grades"
PROVENANCES = ("historical", "sampled", "synthetic")
WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ScoreScale:
    low: float = 150.0
    high: float = 850.0

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


DEFAULT_SCALE = ScoreScale()


@dataclass(frozen=True)
class Student:
    id: str
    grade_score: float
    test_scores: Mapping[str, float]
    # attribute name -> True when the student belongs to the protected group
    group_attrs: Mapping[str, bool]
    preferences: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "preferences", tuple(self.preferences))
        if not 1 <= len(self.preferences) <= MAX_PREFERENCES:
            raise DataError(
                f"student {self.id}: {len(self.preferences)} preferences, "
                f"expected 1..{MAX_PREFERENCES}"
            )
        if len(set(self.preferences)) != len(self.preferences):
            raise DataError(f"student {self.id}: duplicate program in preferences")

    def score(self, component: str) -> float:
        if component == GRADES:
            return self.grade_score
        try:
            return self.test_scores[component]
        except KeyError:
            raise DataError(
                f"student {self.id} has no score for component {component!r}"
            ) from None

    def is_protected(self, attribute: str) -> bool:
        return bool(self.group_attrs.get(attribute, False))

    def check_scale(self, scale: ScoreScale = DEFAULT_SCALE) -> None:
        for name, value in [(GRADES, self.grade_score), *self.test_scores.items()]:
            if not scale.contains(value):
                raise DataError(
                    f"student {self.id}: {name}={value} outside [{scale.low}, {scale.high}]"
                )


@dataclass(frozen=True)
class Program:
    id: str
    capacity: int
    weights: Mapping[str, float]
    prestige: Optional[float] = None

    def __post_init__(self):
        if self.capacity < 1:
            raise DataError(f"program {self.id}: capacity must be >= 1")
        if any(w < 0 for w in self.weights.values()):
            raise DataError(f"program {self.id}: negative weight")
        total = math.fsum(self.weights.values())
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise DataError(f"program {self.id}: weights sum to {total!r}, not 1")


Registry = Mapping[str, Program]


@dataclass(frozen=True)
class ApplicationSet:
    year_label: str
    students: Tuple[Student, ...]
    provenance: str = "historical"

    def __post_init__(self):
        object.__setattr__(self, "students", tuple(self.students))
        if self.provenance not in PROVENANCES:
            raise DataError(f"unknown provenance {self.provenance!r}")
        ids = [s.id for s in self.students]
        if len(set(ids)) != len(ids):
            raise DataError(f"application set {self.year_label}: duplicate student ids")

    def __len__(self):
        return len(self.students)

    @cached_property
    def by_id(self) -> Dict[str, Student]:
        return {s.id: s for s in self.students}

    def check_registry(self, programs: Registry) -> None:
        for s in self.students:
            for p in s.preferences:
                if p not in programs:
                    raise DataError(f"student {s.id} lists unregistered program {p!r}")

    def applicants(self, program_id: str) -> Tuple[Student, ...]:
        return tuple(s for s in self.students if program_id in s.preferences)


@dataclass(frozen=True)
class BonusPolicy:
    """Bonus points per (program id, attribute) pair."""

    entries: Mapping[Tuple[str, str], float] = field(default_factory=dict)
    max_bonus: float = 50.0

    def __post_init__(self):
        for (program, attribute), bonus in self.entries.items():
            if not 0 <= bonus <= self.max_bonus:
                raise DataError(
                    f"bonus {bonus} for ({program}, {attribute}) outside [0, {self.max_bonus}]"
                )

    @classmethod
    def single(cls, program_id: str, attribute: str, bonus: float, **kw) -> "BonusPolicy":
        return cls({(program_id, attribute): float(bonus)}, **kw)

    def bonus_for(self, student: Student, program_id: str) -> float:
        return math.fsum(
            b
            for (p, attribute), b in self.entries.items()
            if p == program_id and student.is_protected(attribute)
        )

    def to_json(self) -> str:
        rows = [
            {"program": p, "attribute": a, "bonus": b}
            for (p, a), b in sorted(self.entries.items())
        ]
        return json.dumps({"entries": rows}, indent=2)

    @classmethod
    def from_json(cls, text: str, **kw) -> "BonusPolicy":
        entries: Dict[Tuple[str, str], float] = {}
        for row in json.loads(text)["entries"]:
            key = (row["program"], row["attribute"])
            if key in entries:
                raise DataError(f"duplicate policy entry {key}")
            entries[key] = float(row["bonus"])
        return cls(entries, **kw)


NO_BONUS = BonusPolicy()


def admission_score(student: Student, program: Program) -> float:
    """Weighted average of the student's score components under the
    program's weights."""
    return math.fsum(
        w * student.score(c) for c, w in program.weights.items() if w > 0
    )


def effective_score(student: Student, program: Program, policy: BonusPolicy) -> float:
    return admission_score(student, program) + policy.bonus_for(student, program.id)


def registry(programs: Iterable[Program]) -> Dict[str, Program]:
    out: Dict[str, Program] = {}
    for p in programs:
        if p.id in out:
            raise DataError(f"duplicate program id {p.id!r}")
        out[p.id] = p
    return out


def components(programs: Registry) -> Tuple[str, ...]:
    """All score components weighted by some program, grades first."""
    names = {c for p in programs.values() for c in p.weights}
    return (GRADES,) * (GRADES in names) + tuple(sorted(names - {GRADES}))
