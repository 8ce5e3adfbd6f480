"""Array form of an application set and a compiled deferred-acceptance
kernel for sweeping one program's bonus over a grid.

The grid search runs one full matching per (application set, program,
bonus) triple, which is far too many for the object-level ``match``.
Results are identical to ``matching.match``; the test-suite checks this.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numba
import numpy as np

from bonuspolicy.model import ApplicationSet, Registry, admission_score


@dataclass(frozen=True)
class Market:
    student_ids: Tuple[str, ...]
    program_ids: Tuple[str, ...]
    pref: np.ndarray       # (n_students, max_len) program index, -1 padded
    raw: np.ndarray        # (n_students, max_len) admission score per slot
    capacity: np.ndarray   # (n_programs,)
    offsets: np.ndarray    # (n_programs + 1,) slices of the flat seat heaps
    groups: Dict[str, np.ndarray]

    @classmethod
    def build(cls, apps: ApplicationSet, programs: Registry) -> "Market":
        apps.check_registry(programs)
        program_ids = tuple(sorted(programs))
        pindex = {p: i for i, p in enumerate(program_ids)}
        students = sorted(apps.students, key=lambda s: s.id)
        width = max((len(s.preferences) for s in students), default=1)
        pref = np.full((len(students), width), -1, dtype=np.int64)
        raw = np.zeros((len(students), width), dtype=np.float64)
        for i, s in enumerate(students):
            for k, p in enumerate(s.preferences):
                pref[i, k] = pindex[p]
                raw[i, k] = admission_score(s, programs[p])
        capacity = np.array([programs[p].capacity for p in program_ids], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(capacity)]).astype(np.int64)
        attrs = sorted({a for s in students for a in s.group_attrs})
        groups = {
            a: np.array([s.is_protected(a) for s in students], dtype=np.bool_)
            for a in attrs
        }
        return cls(tuple(s.id for s in students), program_ids, pref, raw, capacity, offsets, groups)

    def protected(self, attribute: str) -> np.ndarray:
        if attribute in self.groups:
            return self.groups[attribute]
        return np.zeros(len(self.student_ids), dtype=np.bool_)

    def program_index(self, program_id: str) -> int:
        return self.program_ids.index(program_id)

    def assign(self, attribute: str = "", target: int = -1, bonus: float = 0.0) -> np.ndarray:
        """Slot index of each student's assigned program, or -1."""
        return _deferred_acceptance(
            self.pref, self.raw, self.capacity, self.offsets,
            self.protected(attribute), target, bonus,
        )

    def curves(self, attribute: str, targets: Sequence[int], grid: Sequence[float]):
        """SPD and utility at every target program for every bonus value.

        Returns ``(spd, utility)`` arrays of shape (len(targets), len(grid)).
        NaN marks an undefined value.
        """
        return _grid_curves(
            self.pref, self.raw, self.capacity, self.offsets,
            self.protected(attribute),
            np.asarray(targets, dtype=np.int64),
            np.asarray(grid, dtype=np.float64),
        )


@numba.njit(cache=True, inline="always")
def _worse(score_a, idx_a, score_b, idx_b):
    return score_a < score_b or (score_a == score_b and idx_a > idx_b)


@numba.njit(cache=True)
def _sift_down(hs, hk, lo, size, pos):
    while True:
        left = 2 * pos + 1
        if left >= size:
            return
        child = left
        right = left + 1
        if right < size and _worse(hk[lo + right], hs[lo + right], hk[lo + left], hs[lo + left]):
            child = right
        if _worse(hk[lo + child], hs[lo + child], hk[lo + pos], hs[lo + pos]):
            hk[lo + child], hk[lo + pos] = hk[lo + pos], hk[lo + child]
            hs[lo + child], hs[lo + pos] = hs[lo + pos], hs[lo + child]
            pos = child
        else:
            return


@numba.njit(cache=True)
def _sift_up(hs, hk, lo, pos):
    while pos > 0:
        parent = (pos - 1) // 2
        if _worse(hk[lo + pos], hs[lo + pos], hk[lo + parent], hs[lo + parent]):
            hk[lo + parent], hk[lo + pos] = hk[lo + pos], hk[lo + parent]
            hs[lo + parent], hs[lo + pos] = hs[lo + pos], hs[lo + parent]
            pos = parent
        else:
            return


@numba.njit(cache=True)
def _propose(pref, raw, capacity, offsets, protected, target, bonus,
             hs, hk, size, slot, assigned, stack, top, hold, parked, n_parked):
    """Run proposals until no student is free. With ``hold`` set, a student
    about to propose to ``target`` is parked instead.

    Deferred acceptance ends in the same matching whatever the order of
    proposals, so parked students can be released later.
    """
    width = pref.shape[1]
    while top > 0:
        top -= 1
        s = stack[top]
        while slot[s] < width and pref[s, slot[s]] >= 0:
            p = pref[s, slot[s]]
            if hold and p == target:
                parked[n_parked] = s
                n_parked += 1
                break
            key = raw[s, slot[s]]
            if p == target and protected[s]:
                key += bonus
            lo = offsets[p]
            if size[p] < capacity[p]:
                hs[lo + size[p]] = s
                hk[lo + size[p]] = key
                _sift_up(hs, hk, lo, size[p])
                size[p] += 1
                assigned[s] = slot[s]
                break
            if _worse(hk[lo], hs[lo], key, s):
                bumped = hs[lo]
                hs[lo] = s
                hk[lo] = key
                _sift_down(hs, hk, lo, size[p], 0)
                assigned[s] = slot[s]
                assigned[bumped] = -1
                slot[bumped] += 1
                stack[top] = bumped
                top += 1
                break
            slot[s] += 1
    return n_parked


@numba.njit(cache=True)
def _parked_state(pref, raw, capacity, offsets, target):
    """Matching state with every proposal to ``target`` held back."""
    n = pref.shape[0]
    n_programs = capacity.shape[0]
    hs = np.empty(offsets[n_programs], dtype=np.int64)
    hk = np.empty(offsets[n_programs], dtype=np.float64)
    size = np.zeros(n_programs, dtype=np.int64)
    slot = np.zeros(n, dtype=np.int64)
    assigned = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    for i in range(n):
        stack[i] = n - 1 - i
    parked = np.empty(n, dtype=np.int64)
    no_group = np.zeros(n, dtype=np.bool_)
    n_parked = _propose(pref, raw, capacity, offsets, no_group, target, 0.0,
                        hs, hk, size, slot, assigned, stack, n, True, parked, 0)
    return hs, hk, size, slot, assigned, parked[:n_parked]


@numba.njit(cache=True)
def _resume(pref, raw, capacity, offsets, protected, target, bonus, state):
    hs0, hk0, size0, slot0, assigned0, parked = state
    hs = hs0.copy()
    hk = hk0.copy()
    size = size0.copy()
    slot = slot0.copy()
    assigned = assigned0.copy()
    stack = np.empty(pref.shape[0], dtype=np.int64)
    top = parked.shape[0]
    # reversed so the lowest student index proposes first
    for i in range(top):
        stack[i] = parked[top - 1 - i]
    _propose(pref, raw, capacity, offsets, protected, target, bonus,
             hs, hk, size, slot, assigned, stack, top, False, stack, 0)
    return assigned


@numba.njit(cache=True)
def _deferred_acceptance(pref, raw, capacity, offsets, protected, target, bonus):
    state = _parked_state(pref, raw, capacity, offsets, target)
    return _resume(pref, raw, capacity, offsets, protected, target, bonus, state)


@numba.njit(cache=True)
def _applicants(pref, target):
    """Students listing ``target`` and the slot where they list it."""
    n, width = pref.shape
    who = np.empty(n, dtype=np.int64)
    where = np.empty(n, dtype=np.int64)
    m = 0
    for s in range(n):
        for k in range(width):
            if pref[s, k] == target:
                who[m] = s
                where[m] = k
                m += 1
                break
    return who[:m], where[:m]


@numba.njit(cache=True)
def _program_stats(raw, assigned, protected, who, where):
    app_p = 0
    app_o = 0
    adm_p = 0
    adm_o = 0
    total = 0.0
    for i in range(who.shape[0]):
        s = who[i]
        admitted = assigned[s] == where[i]
        if protected[s]:
            app_p += 1
            adm_p += admitted
        else:
            app_o += 1
            adm_o += admitted
        if admitted:
            total += raw[s, where[i]]
    return app_p, app_o, adm_p, adm_o, total


@numba.njit(cache=True)
def _grid_curves(pref, raw, capacity, offsets, protected, targets, grid):
    spd = np.full((targets.shape[0], grid.shape[0]), np.nan)
    util = np.full((targets.shape[0], grid.shape[0]), np.nan)
    for i in range(targets.shape[0]):
        t = targets[i]
        who, where = _applicants(pref, t)
        state = _parked_state(pref, raw, capacity, offsets, t)
        for j in range(grid.shape[0]):
            assigned = _resume(pref, raw, capacity, offsets, protected, t, grid[j], state)
            app_p, app_o, adm_p, adm_o, total = _program_stats(raw, assigned, protected, who, where)
            if app_p > 0 and app_o > 0:
                spd[i, j] = adm_p / app_p - adm_o / app_o
            if adm_p + adm_o > 0:
                util[i, j] = total / (adm_p + adm_o)
    return spd, util
