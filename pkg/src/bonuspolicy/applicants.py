"""Synthetic admission cohorts and the application-behavior model used to
forecast application sets for a coming year."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from bonuspolicy.errors import ConfigError, DataError
from bonuspolicy.model import (
    DEFAULT_SCALE,
    GRADES,
    MAX_PREFERENCES,
    ApplicationSet,
    Program,
    Registry,
    ScoreScale,
    Student,
    components,
)

log = logging.getLogger(__name__)

TESTS = ("math", "verbal")
ATTRIBUTES = ("gender", "income")


# -- synthetic cohorts --------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    n_students: int = 2000
    n_programs: int = 48
    n_years: int = 6
    first_year: int = 2012
    # protected-group shift of the test-score mean, in points
    group_score_gap: Mapping[str, float] = field(
        default_factory=lambda: {"gender": 23.0, "income": 28.0}
    )
    grade_gap: Mapping[str, float] = field(
        default_factory=lambda: {"gender": 4.0, "income": 10.0}
    )
    protected_share: Mapping[str, float] = field(
        default_factory=lambda: {"gender": 0.5, "income": 0.5}
    )
    # year-to-year standard deviation of each group's share of the cohort
    share_jitter: float = 0.04
    prestige_preference_strength: float = 1.0
    # sd of the per-(program, year, group) popularity shock in utility units
    popularity_shock: float = 0.5
    capacity_ratio: float = 0.6
    max_preferences: int = MAX_PREFERENCES
    mean_preferences: float = 5.0
    test_sd: float = 50.0
    grade_sd: float = 50.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_students", "n_programs", "n_years", "max_preferences"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.max_preferences > MAX_PREFERENCES:
            raise ConfigError(f"max_preferences above {MAX_PREFERENCES}")
        if self.max_preferences > self.n_programs:
            raise ConfigError(
                f"{self.max_preferences} preference slots but only {self.n_programs} programs"
            )
        if not 1 <= self.mean_preferences <= self.max_preferences:
            raise ConfigError("mean_preferences must lie in [1, max_preferences]")
        for gaps in (self.group_score_gap, self.grade_gap):
            if any(g < 0 for g in gaps.values()):
                raise ConfigError("score gaps must be non-negative")
        if any(not 0 < s < 1 for s in self.protected_share.values()):
            raise ConfigError("protected_share must lie strictly between 0 and 1")
        if min(self.share_jitter, self.popularity_shock, self.test_sd, self.grade_sd) < 0:
            raise ConfigError("spreads must be non-negative")
        if self.capacity_ratio <= 0:
            raise ConfigError("capacity_ratio must be positive")

    @property
    def attributes(self) -> Tuple[str, ...]:
        return tuple(sorted(set(self.group_score_gap) | set(self.grade_gap) | set(self.protected_share)))

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("group_score_gap", "grade_gap", "protected_share"):
            d[key] = dict(sorted(d[key].items()))
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**dict(d))


def _make_programs(cfg: SyntheticConfig, rng: np.random.Generator) -> Tuple[Dict[str, Program], np.ndarray]:
    quality = np.sort(rng.normal(size=cfg.n_programs))[::-1]
    size = rng.lognormal(0.0, 0.5, cfg.n_programs)
    seats = np.maximum(1, np.round(cfg.capacity_ratio * cfg.n_students * size / size.sum())).astype(int)
    programs: Dict[str, Program] = {}
    for j in range(cfg.n_programs):
        grade_w = round(float(rng.uniform(0.1, 0.4)), 2)
        split = rng.dirichlet(np.ones(len(TESTS)))
        test_w = [round(float(x) * (1 - grade_w), 2) for x in split]
        # rounding residue goes to the last test so the weights sum to 1
        test_w[-1] = round(1 - grade_w - sum(test_w[:-1]), 2)
        weights = {c: w for c, w in [(GRADES, grade_w), *zip(TESTS, test_w)] if w > 0}
        pid = f"P{j:03d}"
        programs[pid] = Program(pid, int(seats[j]), weights)
    return programs, quality


def _make_cohort(
    cfg: SyntheticConfig,
    year: int,
    quality: np.ndarray,
    program_ids: Sequence[str],
    scale: ScoreScale,
    rng: np.random.Generator,
) -> ApplicationSet:
    n, attrs = cfg.n_students, cfg.attributes
    ability = rng.normal(size=n)
    groups: Dict[str, np.ndarray] = {}
    for a in attrs:
        share = cfg.protected_share.get(a, 0.5) + cfg.share_jitter * rng.normal()
        groups[a] = rng.random(n) < np.clip(share, 0.05, 0.95)

    def shifted(gaps: Mapping[str, float]) -> np.ndarray:
        return sum((gaps.get(a, 0.0) * groups[a] for a in attrs), np.zeros(n))

    tests = {
        t: 500 + cfg.test_sd * (0.8 * ability + 0.6 * rng.normal(size=n)) - shifted(cfg.group_score_gap)
        for t in TESTS
    }
    grades = 500 + cfg.grade_sd * (0.6 * ability + 0.8 * rng.normal(size=n)) - shifted(cfg.grade_gap)

    def clip(x):
        return np.round(np.clip(x, scale.low, scale.high), 1)

    tests = {t: clip(v) for t, v in tests.items()}
    grades = clip(grades)

    standing = (grades + sum(tests.values())) / (1 + len(tests))
    z = (standing - standing.mean()) / (standing.std() or 1.0)
    utility = np.outer(0.5 + cfg.prestige_preference_strength * z, quality)
    for a in attrs:
        shock = cfg.popularity_shock * rng.normal(size=(2, len(program_ids)))
        utility += shock[groups[a].astype(int)]
    utility += rng.gumbel(size=utility.shape)
    order = np.argsort(-utility, axis=1, kind="stable")
    p_more = (cfg.mean_preferences - 1) / max(cfg.max_preferences - 1, 1)
    lengths = 1 + rng.binomial(cfg.max_preferences - 1, p_more, size=n)

    students = []
    for i in range(n):
        students.append(
            Student(
                id=f"{year}-{i:05d}",
                grade_score=float(grades[i]),
                test_scores={t: float(tests[t][i]) for t in TESTS},
                group_attrs={a: bool(groups[a][i]) for a in attrs},
                preferences=tuple(program_ids[j] for j in order[i, : lengths[i]]),
            )
        )
    return ApplicationSet(str(year), tuple(students), "synthetic")


def generate_synthetic_history(
    cfg: SyntheticConfig, scale: ScoreScale = DEFAULT_SCALE
) -> Tuple[List[ApplicationSet], Dict[str, Program]]:
    """Cohorts for ``cfg.n_years`` consecutive years (oldest first) over a
    fixed set of programs.

    Protected groups score lower on tests by the configured gap. Students
    with higher scores favor higher-quality programs, and every year each
    group gets its own random popularity shock per program, so admission
    gaps wander from year to year.
    """
    rng = np.random.default_rng(cfg.seed)
    programs, quality = _make_programs(cfg, rng)
    program_ids = tuple(programs)
    years = [
        _make_cohort(cfg, cfg.first_year + y, quality, program_ids, scale, rng)
        for y in range(cfg.n_years)
    ]
    return years, programs


# -- application-behavior model -----------------------------------------------


def _score_matrix(students: Sequence[Student], programs: Registry, program_ids: Sequence[str]) -> np.ndarray:
    comps = components(programs)
    values = np.array([[s.score(c) for c in comps] for s in students], dtype=float).reshape(len(students), len(comps))
    weights = np.array([[programs[p].weights.get(c, 0.0) for p in program_ids] for c in comps])
    return values @ weights


def _group_index(students: Sequence[Student], attributes: Sequence[str]) -> np.ndarray:
    idx = np.zeros(len(students), dtype=int)
    for bit, a in enumerate(attributes):
        idx |= np.array([s.is_protected(a) for s in students], dtype=int) << bit
    return idx


@dataclass(frozen=True, eq=False)
class ApplicantModel:
    """Per-program probability of listing the program given the student's
    admission-score bucket at that program and joint group label."""

    program_ids: Tuple[str, ...]
    bucket_edges: np.ndarray            # interior edges, ascending
    attributes: Tuple[str, ...]
    propensity: np.ndarray              # (programs, buckets, 2 ** len(attributes))
    cohort_pool: Tuple[Student, ...]
    rank_noise: float = 1.0

    def buckets(self, scores: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.bucket_edges, scores, side="right")

    def student_propensities(self, students: Sequence[Student], programs: Registry) -> np.ndarray:
        scores = _score_matrix(students, programs, self.program_ids)
        groups = _group_index(students, self.attributes)
        cols = np.arange(len(self.program_ids))
        return self.propensity[cols[None, :], self.buckets(scores), groups[:, None]]

    def to_json(self) -> str:
        doc = {
            "program_ids": list(self.program_ids),
            "bucket_edges": self.bucket_edges.tolist(),
            "attributes": list(self.attributes),
            "propensity": self.propensity.tolist(),
            "rank_noise": self.rank_noise,
            "cohort_pool": [
                {
                    "id": s.id,
                    "grade_score": s.grade_score,
                    "test_scores": dict(s.test_scores),
                    "group_attrs": dict(s.group_attrs),
                    "preferences": list(s.preferences),
                }
                for s in self.cohort_pool
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ApplicantModel":
        doc = json.loads(text)
        return cls(
            program_ids=tuple(doc["program_ids"]),
            bucket_edges=np.array(doc["bucket_edges"], dtype=float),
            attributes=tuple(doc["attributes"]),
            propensity=np.array(doc["propensity"], dtype=float),
            cohort_pool=tuple(Student(**row) for row in doc["cohort_pool"]),
            rank_noise=doc["rank_noise"],
        )


def train(
    history: ApplicationSet,
    programs: Registry,
    bucket_width: float = 50.0,
    attributes: Optional[Sequence[str]] = None,
    scale: ScoreScale = DEFAULT_SCALE,
    rank_noise: float = 1.0,
) -> ApplicantModel:
    """Fit listing propensities on one cohort by counting, per program,
    score bucket and group, the share of students who listed the program.

    A (bucket, group) cell with no students falls back to the bucket rate
    over all groups, then to the program's overall rate.
    """
    if not history.students:
        raise DataError("cannot train on an empty cohort")
    history.check_registry(programs)
    students = history.students
    program_ids = tuple(sorted(programs))
    if attributes is None:
        attributes = sorted({a for s in students for a in s.group_attrs})
    attributes = tuple(attributes)
    edges = np.arange(scale.low + bucket_width, scale.high, bucket_width)
    n_buckets, n_groups = len(edges) + 1, 2 ** len(attributes)

    scores = _score_matrix(students, programs, program_ids)
    bucket = np.searchsorted(edges, scores, side="right")
    group = _group_index(students, attributes)
    pindex = {p: j for j, p in enumerate(program_ids)}
    listed = np.zeros(scores.shape, dtype=bool)
    for i, s in enumerate(students):
        listed[i, [pindex[p] for p in s.preferences]] = True

    P = len(program_ids)
    total = np.zeros((P, n_buckets, n_groups))
    hits = np.zeros((P, n_buckets, n_groups))
    cols = np.broadcast_to(np.arange(P), scores.shape)
    rows_group = np.broadcast_to(group[:, None], scores.shape)
    np.add.at(total, (cols, bucket, rows_group), 1)
    np.add.at(hits, (cols, bucket, rows_group), listed)

    with np.errstate(invalid="ignore", divide="ignore"):
        cell = hits / total
        marginal = hits.sum(axis=2) / total.sum(axis=2)
        overall = hits.sum(axis=(1, 2)) / total.sum(axis=(1, 2))
    marginal = np.where(np.isnan(marginal), overall[:, None], marginal)
    propensity = np.where(np.isnan(cell), marginal[:, :, None], cell)
    return ApplicantModel(program_ids, edges, attributes, propensity, students, rank_noise)


def draw_application_set(
    model: ApplicantModel,
    programs: Registry,
    n_students: int,
    seed,
    year_label: str = "sampled",
) -> Tuple[ApplicationSet, int]:
    """Sample one application set; also returns how many drawn students had
    no program with positive propensity and were dropped."""
    rng = np.random.default_rng(seed)
    pool = model.cohort_pool
    picks = rng.integers(0, len(pool), size=n_students)
    drawn = [pool[i] for i in picks]
    prop = model.student_propensities(drawn, programs)
    with np.errstate(divide="ignore"):
        logp = np.log(prop)
    # Gumbel top-k: keeping the k largest log p + G draws k programs without
    # replacement with probability proportional to p
    pick_key = logp + rng.gumbel(size=prop.shape)
    rank_key = logp + model.rank_noise * rng.gumbel(size=prop.shape)
    chosen = np.argsort(-pick_key, axis=1, kind="stable")
    available = (prop > 0).sum(axis=1)

    students: List[Student] = []
    dropped = 0
    for i, s in enumerate(drawn):
        k = min(len(s.preferences), int(available[i]), MAX_PREFERENCES)
        if k == 0:
            dropped += 1
            continue
        picked = chosen[i, :k]
        ordered = picked[np.argsort(-rank_key[i, picked], kind="stable")]
        students.append(
            Student(
                id=f"{year_label}-{i:05d}",
                grade_score=s.grade_score,
                test_scores=s.test_scores,
                group_attrs=s.group_attrs,
                preferences=tuple(model.program_ids[j] for j in ordered),
            )
        )
    return ApplicationSet(year_label, tuple(students), "sampled"), dropped


def sample_application_set(
    model: ApplicantModel,
    programs: Registry,
    n_students: int,
    seed,
    year_label: str = "sampled",
) -> ApplicationSet:
    """Bootstrap ``n_students`` from the training cohort and give each a
    freshly sampled preference list."""
    apps, dropped = draw_application_set(model, programs, n_students, seed, year_label)
    if dropped:
        log.info("dropped %d sampled students with no program to list", dropped)
    return apps


def sample_sets(
    model: ApplicantModel,
    programs: Registry,
    count: int,
    seed: int,
    n_students: Optional[int] = None,
) -> List[ApplicationSet]:
    """``count`` application sets, set ``i`` seeded by ``(seed, i)`` so any
    prefix of the list is reproducible on its own."""
    n = n_students or len(model.cohort_pool)
    return [
        sample_application_set(model, programs, n, (seed, i), f"sample{i:03d}")
        for i in range(count)
    ]
