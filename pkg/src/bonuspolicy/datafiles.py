"""CSV and JSON files for cohorts, programs and metric tables."""
from __future__ import annotations

import csv
import io
import json
import re
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from bonuspolicy.errors import DataError
from bonuspolicy.metrics import ProgramMetrics
from bonuspolicy.model import (
    GRADES,
    ApplicationSet,
    Program,
    Registry,
    Student,
    components,
    registry,
)

PROGRAMS_FILE = "programs.csv"
STUDENTS_PATTERN = re.compile(r"students_(.+)\.csv$")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def programs_to_csv(programs: Registry, path: Path) -> None:
    comps = components(programs)
    rows = [
        [p.id, p.capacity, *(p.weights.get(c, 0.0) for c in comps), p.prestige]
        for p in (programs[k] for k in sorted(programs))
    ]
    write_csv(path, ["id", "capacity", *comps, "prestige"], rows)


def programs_from_csv(path: Path) -> Dict[str, Program]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "id" not in fields or "capacity" not in fields:
            raise DataError(f"{path}: needs id and capacity columns")
        weight_cols = [c for c in fields if c not in ("id", "capacity", "prestige")]
        out = []
        for row in reader:
            try:
                prestige = row.get("prestige") or None
                out.append(
                    Program(
                        id=row["id"],
                        capacity=int(row["capacity"]),
                        weights={c: float(row[c]) for c in weight_cols if float(row[c]) != 0.0},
                        prestige=None if prestige is None else float(prestige),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: bad program row {row}: {exc}") from None
    return registry(out)


def students_to_csv(apps: ApplicationSet, programs: Registry, path: Path) -> None:
    tests = [c for c in components(programs) if c != GRADES]
    attrs = sorted({a for s in apps.students for a in s.group_attrs})
    rows = [
        [
            s.id,
            s.grade_score,
            *(s.test_scores[t] for t in tests),
            *(int(s.is_protected(a)) for a in attrs),
            "|".join(s.preferences),
        ]
        for s in sorted(apps.students, key=lambda s: s.id)
    ]
    write_csv(path, ["id", "grade_score", *tests, *attrs, "preferences"], rows)


def students_from_csv(
    path: Path, programs: Registry, year_label: str, provenance: str = "historical"
) -> ApplicationSet:
    """Columns named after a program weight component are tests; any other
    column besides id, grade_score and preferences is a 0/1 group attribute."""
    tests = set(components(programs)) - {GRADES}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for required in ("id", "grade_score", "preferences"):
            if required not in fields:
                raise DataError(f"{path}: missing column {required!r}")
        attrs = [c for c in fields if c not in tests and c not in ("id", "grade_score", "preferences")]
        students = []
        for row in reader:
            try:
                group = {}
                for a in attrs:
                    if row[a] not in ("0", "1"):
                        raise ValueError(f"attribute {a} must be 0/1, got {row[a]!r}")
                    group[a] = row[a] == "1"
                students.append(
                    Student(
                        id=row["id"],
                        grade_score=float(row["grade_score"]),
                        test_scores={t: float(row[t]) for t in fields if t in tests},
                        group_attrs=group,
                        preferences=tuple(row["preferences"].split("|")) if row["preferences"] else (),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: bad student row {row.get('id')}: {exc}") from None
    apps = ApplicationSet(year_label, tuple(students), provenance)
    apps.check_registry(programs)
    return apps


def _year_key(label: str):
    return (0, int(label), "") if label.isdigit() else (1, 0, label)


def save_dataset(out_dir: Path, years: Sequence[ApplicationSet], programs: Registry) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / PROGRAMS_FILE]
    programs_to_csv(programs, written[0])
    for apps in years:
        path = out_dir / f"students_{apps.year_label}.csv"
        students_to_csv(apps, programs, path)
        written.append(path)
    return written


def load_dataset(data_dir: Path, provenance: str = "historical") -> Tuple[List[ApplicationSet], Dict[str, Program]]:
    """All cohorts in ``data_dir``, oldest first, and the program registry."""
    data_dir = Path(data_dir)
    if not (data_dir / PROGRAMS_FILE).exists():
        raise DataError(f"{data_dir}: no {PROGRAMS_FILE}")
    programs = programs_from_csv(data_dir / PROGRAMS_FILE)
    labels = []
    for path in data_dir.iterdir():
        m = STUDENTS_PATTERN.match(path.name)
        if m:
            labels.append(m.group(1))
    if not labels:
        raise DataError(f"{data_dir}: no students_<year>.csv files")
    years = [
        students_from_csv(data_dir / f"students_{y}.csv", programs, y, provenance)
        for y in sorted(labels, key=_year_key)
    ]
    return years, programs


def metrics_to_csv(table: Sequence[ProgramMetrics], path: Path) -> None:
    write_csv(
        path,
        ["program", "spd", "utility", "admitted_count", "classification"],
        ([m.program, m.spd, m.utility, m.admitted_count, m.classification] for m in table),
    )


def metrics_to_json(table: Sequence[ProgramMetrics]) -> str:
    return json.dumps(
        [
            {
                "program": m.program,
                "spd": m.spd,
                "utility": m.utility,
                "admitted_count": m.admitted_count,
                "applicant_counts": m.applicant_counts,
                "classification": m.classification,
            }
            for m in table
        ],
        indent=2,
        sort_keys=True,
    )
