"""Random instances and independent oracles shared by the test modules.

Nothing here calls the matching code under test: the oracles rebuild
priorities from raw scores and enumerate candidate matchings directly.
"""
from __future__ import annotations

import itertools
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from bonuspolicy.model import ApplicationSet, BonusPolicy, Program, Student

ATTRS = ("income", "gender")

# acceptance verdicts: criterion -> (passed, detail), printed at session end
ACCEPTANCE: Dict[str, Tuple[bool, str]] = {}


def make_student(sid, grades, prefs, math_=None, verbal=None, income=False, gender=False):
    return Student(
        id=sid,
        grade_score=float(grades),
        test_scores={"math": float(grades if math_ is None else math_), "verbal": float(grades if verbal is None else verbal)},
        group_attrs={"income": income, "gender": gender},
        preferences=tuple(prefs),
    )


def random_weights(rng: np.random.Generator) -> Dict[str, float]:
    kind = rng.integers(3)
    if kind == 0:
        return {"grades": 1.0}
    if kind == 1:
        return {"grades": 0.5, "math": 0.5}
    return {"grades": 0.25, "math": 0.5, "verbal": 0.25}


def random_instance(
    rng: np.random.Generator,
    max_students: int = 20,
    max_programs: int = 4,
    min_students: int = 1,
    score_step: float = 10.0,
) -> Tuple[ApplicationSet, Dict[str, Program]]:
    """Small market with coarse scores so equal priorities occur often."""
    n_p = int(rng.integers(1, max_programs + 1))
    n_s = int(rng.integers(min_students, max_students + 1))
    programs = {
        f"p{j}": Program(f"p{j}", int(rng.integers(1, 5)), random_weights(rng))
        for j in range(n_p)
    }
    pids = sorted(programs)
    students = []
    for i in range(n_s):
        k = int(rng.integers(1, n_p + 1))
        prefs = [pids[j] for j in rng.permutation(n_p)[:k]]
        scores = 150 + score_step * rng.integers(0, int(700 / score_step) + 1, size=3)
        students.append(
            make_student(
                f"s{i:02d}", scores[0], prefs, scores[1], scores[2],
                income=bool(rng.random() < 0.5), gender=bool(rng.random() < 0.5),
            )
        )
    # shuffle storage order so the id tie-break is exercised independently of it
    order = rng.permutation(n_s)
    return ApplicationSet("t", tuple(students[i] for i in order)), programs


def raw_score(student: Student, program: Program) -> float:
    total = 0.0
    for c, w in program.weights.items():
        value = student.grade_score if c == "grades" else student.test_scores[c]
        total += w * value
    return total


def priority_ranks(apps, programs, policy: Optional[BonusPolicy] = None) -> Dict[str, List[str]]:
    """Applicants of each program from best to worst priority."""
    policy = policy or BonusPolicy()
    out = {}
    for pid, prog in programs.items():
        pool = [s for s in apps.students if pid in s.preferences]
        def key(s):
            bonus = sum(b for (p, a), b in policy.entries.items() if p == pid and s.group_attrs.get(a))
            return (-(raw_score(s, prog) + bonus), s.id)
        out[pid] = [s.id for s in sorted(pool, key=key)]
    return out


def blocking_pairs(apps, programs, assignment, ranks) -> List[Tuple[str, str]]:
    """Every (student, program) pair that would rather deviate together."""
    pos = {pid: {sid: i for i, sid in enumerate(r)} for pid, r in ranks.items()}
    held: Dict[str, List[str]] = {p: [] for p in programs}
    for sid, p in assignment.items():
        if p is not None:
            held[p].append(sid)
    out = []
    for s in apps.students:
        mine = assignment[s.id]
        better = s.preferences if mine is None else s.preferences[: s.preferences.index(mine)]
        for p in better:
            if len(held[p]) < programs[p].capacity:
                out.append((s.id, p))
            elif any(pos[p][s.id] < pos[p][t] for t in held[p]):
                out.append((s.id, p))
    return out


def is_feasible(apps, programs, assignment) -> bool:
    counts: Dict[str, int] = {}
    for s in apps.students:
        p = assignment[s.id]
        if p is None:
            continue
        if p not in s.preferences:
            return False
        counts[p] = counts.get(p, 0) + 1
    return all(counts.get(p, 0) <= prog.capacity for p, prog in programs.items())


def _student_optimal(apps, candidates: List[Dict[str, Optional[str]]]) -> Dict[str, Optional[str]]:
    def rank(s, p):
        return len(s.preferences) if p is None else s.preferences.index(p)

    best = [
        m for m in candidates
        if all(all(rank(s, m[s.id]) <= rank(s, o[s.id]) for s in apps.students) for o in candidates)
    ]
    assert len(best) == 1, "student-optimal stable matching must exist and be unique"
    return best[0]


def stable_by_brute_force(apps, programs, policy=None):
    """All stable matchings by trying every assignment; tiny instances only."""
    ranks = priority_ranks(apps, programs, policy)
    students = list(apps.students)
    options = [list(s.preferences) + [None] for s in students]
    stable = []
    for combo in itertools.product(*options):
        m = {s.id: p for s, p in zip(students, combo)}
        if is_feasible(apps, programs, m) and not blocking_pairs(apps, programs, m, ranks):
            stable.append(m)
    return stable, _student_optimal(apps, stable)


def stable_by_cutoffs(apps, programs, policy=None):
    """All stable matchings by enumerating per-program rank cutoffs.

    Every stable matching is induced by some vector of cutoffs (each student
    takes their favourite program among those that would admit their rank),
    so enumerating cutoff vectors and keeping the feasible, blocking-free
    induced assignments finds them all.
    """
    ranks = priority_ranks(apps, programs, policy)
    pids = sorted(programs)
    students = [s.id for s in apps.students]
    by_id = apps.by_id
    n, m = len(students), len(pids)
    big = 10 ** 6
    rank = np.full((n, m), big, dtype=np.int64)
    pref = np.full((n, m), big, dtype=np.int64)
    for i, sid in enumerate(students):
        for j, p in enumerate(pids):
            if sid in ranks[p]:
                rank[i, j] = ranks[p].index(sid)
                pref[i, j] = by_id[sid].preferences.index(p)
    sizes = [len(ranks[p]) + 1 for p in pids]
    caps = np.array([programs[p].capacity for p in pids])
    seen = set()
    grids = np.stack(np.meshgrid(*[np.arange(k) for k in sizes], indexing="ij"), -1).reshape(-1, m)
    for start in range(0, len(grids), 20000):
        cut = grids[start:start + 20000]
        eligible = rank[None, :, :] < cut[:, None, :]
        score = np.where(eligible, pref[None, :, :], big)
        choice = score.argmin(axis=2)
        choice = np.where(score.min(axis=2) == big, -1, choice)
        counts = np.stack([(choice == j).sum(axis=1) for j in range(m)], axis=1)
        ok = (counts <= caps).all(axis=1)
        for row in np.unique(choice[ok], axis=0):
            seen.add(tuple(int(x) for x in row))
    stable = []
    for row in sorted(seen):
        mtch = {sid: (None if j < 0 else pids[j]) for sid, j in zip(students, row)}
        if not blocking_pairs(apps, programs, mtch, ranks):
            stable.append(mtch)
    return stable, _student_optimal(apps, stable)


def single_program_instance(rng, n_max: int = 20, attribute: str = "income"):
    """One program, every student lists only it."""
    n = int(rng.integers(2, n_max + 1))
    prog = Program("p0", int(rng.integers(1, n)), random_weights(rng))
    students = []
    for i in range(n):
        s = 150 + 5 * rng.integers(0, 141, size=3)
        students.append(make_student(f"s{i:02d}", s[0], ["p0"], s[1], s[2], income=bool(rng.random() < 0.5), gender=bool(rng.random() < 0.5)))
    return ApplicationSet("t", tuple(students)), {"p0": prog}


def quota_admitted(apps, program, attribute, bonus) -> set:
    """Admitted set of a bonus policy rebuilt as a quota: find the number k
    of protected seats for which top-k protected plus top-(c - k) others is
    consistent with the bonus-shifted priority order."""
    def ordered(group):
        pool = [s for s in apps.students if s.is_protected(attribute) == group]
        return sorted(pool, key=lambda s: (-raw_score(s, program), s.id))

    prot, other = ordered(True), ordered(False)
    cap = min(program.capacity, len(apps.students))
    for k in range(0, cap + 1):
        if k > len(prot) or cap - k > len(other):
            continue
        chosen = prot[:k] + other[: cap - k]
        rest = prot[k:] + other[cap - k:]
        def key(s):
            return (raw_score(s, program) + (bonus if s.is_protected(attribute) else 0.0), _neg_id(s.id))
        if not rest or min(key(s) for s in chosen) > max(key(s) for s in rest):
            return {s.id for s in chosen}
    raise AssertionError("no quota split reproduces the order")


def _neg_id(sid: str):
    # larger key = higher priority; smaller ids win ties
    return tuple(-ord(c) for c in sid)


def independent_objectives(apps, programs, pid, attribute, grid, lam):
    """Objective at every grid point, recomputed from scratch per point with
    a plain deferred-acceptance loop written independently of the library."""
    base = _plain_da(apps, programs, None, attribute, 0.0)
    mu0 = _mean_raw(base, apps, programs[pid], pid)
    values = []
    for b in grid:
        assign = _plain_da(apps, programs, pid, attribute, b)
        mu = _mean_raw(assign, apps, programs[pid], pid)
        rate = _rates(assign, apps, pid, attribute)
        if mu0 is None or mu is None or rate is None:
            values.append(math.nan)
        else:
            values.append((mu0 - mu) + lam * abs(rate))
    return values


def _plain_da(apps, programs, target, attribute, bonus):
    prio = {}
    for s in apps.students:
        for p in s.preferences:
            v = raw_score(s, programs[p])
            if p == target and s.is_protected(attribute):
                v += bonus
            prio[(s.id, p)] = (v, _neg_id(s.id))
    nxt = {s.id: 0 for s in apps.students}
    held: Dict[str, List[str]] = {p: [] for p in programs}
    free = [s.id for s in apps.students]
    by_id = apps.by_id
    while free:
        sid = free.pop()
        prefs = by_id[sid].preferences
        if nxt[sid] >= len(prefs):
            continue
        p = prefs[nxt[sid]]
        held[p].append(sid)
        if len(held[p]) > programs[p].capacity:
            worst = min(held[p], key=lambda t: prio[(t, p)])
            held[p].remove(worst)
            nxt[worst] += 1
            free.append(worst)
    return {sid: p for p, ids in held.items() for sid in ids}


def _mean_raw(assign, apps, program, pid):
    vals = [raw_score(apps.by_id[s], program) for s, p in assign.items() if p == pid]
    return sum(vals) / len(vals) if vals else None


def _rates(assign, apps, pid, attribute):
    pool = [s for s in apps.students if pid in s.preferences]
    prot = [s for s in pool if s.is_protected(attribute)]
    other = [s for s in pool if not s.is_protected(attribute)]
    if not prot or not other:
        return None
    a = sum(assign.get(s.id) == pid for s in prot) / len(prot)
    o = sum(assign.get(s.id) == pid for s in other) / len(other)
    return a - o


def smallest_argmin(values: Sequence[float], tol: float = 1e-9) -> Optional[int]:
    finite = [v for v in values if not math.isnan(v)]
    if not finite:
        return None
    best = min(finite)
    return next(i for i, v in enumerate(values) if not math.isnan(v) and v <= best + tol)
