"""Student-proposing deferred acceptance with score priorities."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

from bonuspolicy.errors import DataError
from bonuspolicy.model import (
    DEFAULT_SCALE,
    NO_BONUS,
    ApplicationSet,
    BonusPolicy,
    Registry,
    ScoreScale,
    admission_score,
    effective_score,
)


@dataclass(frozen=True)
class ProgramResult:
    admitted: Tuple[str, ...]
    applicants: Tuple[str, ...]
    cutoff: float
    # effective and raw admission score of every applicant
    effective: Mapping[str, float]
    raw: Mapping[str, float]


@dataclass(frozen=True)
class MatchOutcome:
    assignment: Mapping[str, Optional[str]]
    per_program: Mapping[str, ProgramResult]
    apps: ApplicationSet
    policy: BonusPolicy

    def admitted(self, program_id: str) -> Tuple[str, ...]:
        return self._result(program_id).admitted

    def _result(self, program_id: str) -> ProgramResult:
        try:
            return self.per_program[program_id]
        except KeyError:
            raise DataError(f"program {program_id!r} not in outcome") from None

    def to_dict(self) -> dict:
        return {
            "year": self.apps.year_label,
            "assignment": {s: self.assignment[s] for s in sorted(self.assignment)},
            "programs": {
                p: {
                    "admitted": list(r.admitted),
                    "applicants": list(r.applicants),
                    "cutoff": r.cutoff,
                }
                for p, r in sorted(self.per_program.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def match(
    apps: ApplicationSet,
    programs: Registry,
    policy: BonusPolicy = NO_BONUS,
    scale: ScoreScale = DEFAULT_SCALE,
) -> MatchOutcome:
    """Student-optimal stable matching of ``apps`` to ``programs``.

    Programs rank applicants by effective score (admission score plus any
    bonus); equal scores are broken by ascending student id.
    """
    apps.check_registry(programs)
    order = {sid: i for i, sid in enumerate(sorted(s.id for s in apps.students))}
    students = {s.id: s for s in apps.students}

    effective: Dict[str, Dict[str, float]] = {p: {} for p in programs}
    raw: Dict[str, Dict[str, float]] = {p: {} for p in programs}
    for s in apps.students:
        for p in s.preferences:
            raw[p][s.id] = admission_score(s, programs[p])
            effective[p][s.id] = effective_score(s, programs[p], policy)

    # min-heap per program: the weakest held applicant sits on top
    held: Dict[str, List[Tuple[float, int, str]]] = {p: [] for p in programs}
    next_choice = {sid: 0 for sid in students}
    free = sorted(students, key=order.__getitem__, reverse=True)
    while free:
        sid = free.pop()
        prefs = students[sid].preferences
        while next_choice[sid] < len(prefs):
            p = prefs[next_choice[sid]]
            key = (effective[p][sid], -order[sid], sid)
            heap = held[p]
            if len(heap) < programs[p].capacity:
                heapq.heappush(heap, key)
                break
            if key > heap[0]:
                _, _, bumped = heapq.heapreplace(heap, key)
                next_choice[bumped] += 1
                free.append(bumped)
                break
            next_choice[sid] += 1

    assignment: Dict[str, Optional[str]] = {sid: None for sid in students}
    per_program: Dict[str, ProgramResult] = {}
    for p, heap in held.items():
        ranked = sorted(heap, reverse=True)
        for _, _, sid in ranked:
            assignment[sid] = p
        full = len(ranked) == programs[p].capacity
        per_program[p] = ProgramResult(
            admitted=tuple(sid for _, _, sid in ranked),
            applicants=tuple(sorted(effective[p], key=order.__getitem__)),
            cutoff=ranked[-1][0] if full else scale.low,
            effective=effective[p],
            raw=raw[p],
        )
    return MatchOutcome(assignment, per_program, apps, policy)


def cutoff(outcome: MatchOutcome, program_id: str) -> float:
    """Lowest effective score admitted, or the scale minimum while seats
    remain free."""
    return outcome._result(program_id).cutoff
