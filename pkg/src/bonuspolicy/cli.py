"""Command-line interface: ``bonuspolicy generate|suggest|evaluate|report``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from bonuspolicy import __version__
from bonuspolicy.applicants import SyntheticConfig, generate_synthetic_history
from bonuspolicy.datafiles import load_dataset, metrics_to_csv, metrics_to_json, save_dataset, write_csv
from bonuspolicy.errors import ConfigError, DataError, NotApplicable
from bonuspolicy.matching import match
from bonuspolicy.metrics import program_metrics
from bonuspolicy.pipeline import (
    DEFAULT_STRATEGIES,
    Strategy,
    Study,
    evaluate_all,
    spd_history,
    suggest,
    target_programs,
)
from bonuspolicy.policy import (
    DEFAULT_LAMBDA,
    BonusGrid,
    Evaluation,
    PolicySuggestion,
    suggestions_from_json,
    suggestions_to_json,
)

log = logging.getLogger("bonuspolicy")

OUT_ENV = "BONUSPOLICY_OUT"
EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 1, 2, 3


@dataclass
class RunConfig:
    data: Optional[str] = None
    synthetic: Optional[dict] = None
    attribute: str = "income"
    lam: Optional[float] = None
    grid_max: float = 50.0
    grid_step: float = 1.0
    strategies: List[str] = field(default_factory=lambda: list(DEFAULT_STRATEGIES))
    seed: int = 0
    out: Optional[str] = None
    filter: str = "consistent"
    year: Optional[str] = None
    sample_size: Optional[int] = None
    suggestions: List[str] = field(default_factory=list)

    def validate(self, need_data: bool = True) -> None:
        if need_data and (self.data is None) == (self.synthetic is None):
            raise ConfigError("give exactly one data source: --data or a synthetic config")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("--lambda must be non-negative")
        if self.filter not in ("all", "consistent"):
            raise ConfigError(f"--filter must be all or consistent, not {self.filter!r}")
        for s in self.strategies:
            Strategy.parse(s)
        # resolve derived settings now so a bad value fails before any work
        self.out_dir
        if need_data:
            self.lam_value
            self.grid

    @property
    def lam_value(self) -> float:
        if self.lam is not None:
            return self.lam
        try:
            return DEFAULT_LAMBDA[self.attribute]
        except KeyError:
            raise ConfigError(f"no default lambda for attribute {self.attribute!r}; pass --lambda") from None

    @property
    def grid(self) -> BonusGrid:
        try:
            return BonusGrid.regular(self.grid_max, self.grid_step)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def out_dir(self) -> Path:
        out = self.out or os.environ.get(OUT_ENV)
        if not out:
            raise ConfigError(f"no output directory: pass --out or set {OUT_ENV}")
        return Path(out)


# -- helpers ------------------------------------------------------------------


def _prepare_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path


def _write_manifest(out: Path, command: str, cfg: RunConfig) -> None:
    # the output location is left out and suggestion files are identified by
    # content, so reruns into another directory stay byte-identical
    config = {k: v for k, v in asdict(cfg).items() if k != "out"}
    config["suggestions"] = [
        {"file": Path(p).name, "sha256": hashlib.sha256(Path(p).read_bytes()).hexdigest()}
        for p in cfg.suggestions
    ]
    doc = {"command": command, "version": __version__, "seed": cfg.seed, "config": config}
    if cfg.data is not None:
        doc["data_sha256"] = {
            f.name: hashlib.sha256(f.read_bytes()).hexdigest()
            for f in sorted(Path(cfg.data).glob("*.csv"))
        }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load(cfg: RunConfig):
    if cfg.data is not None:
        return load_dataset(Path(cfg.data))
    return generate_synthetic_history(SyntheticConfig.from_dict({"seed": cfg.seed, **(cfg.synthetic or {})}))


def _study(cfg: RunConfig) -> Study:
    years, programs = _load(cfg)
    return Study.from_years(years, programs, cfg.year)


def _targets(study: Study, cfg: RunConfig) -> List[str]:
    targets = target_programs(study, cfg.attribute, cfg.filter)
    if not targets:
        raise NotApplicable(f"no programs pass the {cfg.filter} filter for {cfg.attribute}")
    log.info("%d target programs (%s filter)", len(targets), cfg.filter)
    return targets


def _write_suggestions(out: Path, cfg: RunConfig, suggestions: Dict[str, Dict[str, PolicySuggestion]]) -> List[Path]:
    paths = []
    for name, sugg in suggestions.items():
        meta = {"attribute": cfg.attribute, "lambda": cfg.lam_value, "strategy": name, "seed": cfg.seed}
        path = out / f"suggestions_{name}.json"
        path.write_text(suggestions_to_json(sugg, meta) + "\n")
        paths.append(path)
    return paths


def _fmt(x: float) -> str:
    return "nan" if x != x else f"{x:.4f}"


def _write_evaluations(out: Path, evaluations: Dict[str, Evaluation]) -> None:
    tables = {
        "summary_objective_error.csv": "objective_error",
        "summary_spd_delta.csv": "spd_delta",
        "summary_bonus.csv": "bonus",
    }
    for filename, attr in tables.items():
        rows = []
        for name, ev in evaluations.items():
            stat = getattr(ev, attr)
            rows.append([name, ev.attribute, stat.mean, stat.sd, stat.n])
        write_csv(out / filename, ["strategy", "attribute", "mean", "sd", "n"], rows)
    detail = [
        [name, r.program, r.bonus, r.ideal_bonus, r.objective, r.ideal_objective,
         r.objective_error, r.spd_0, r.spd_b, r.spd_delta]
        for name, ev in evaluations.items()
        for r in ev.rows
    ]
    write_csv(
        out / "evaluation_detail.csv",
        ["strategy", "program", "bonus", "ideal_bonus", "objective", "ideal_objective",
         "objective_error", "spd_0", "spd_b", "spd_delta"],
        detail,
    )
    summary = {name: ev.summary() for name, ev in evaluations.items()}
    for name, ev in evaluations.items():
        summary[name]["excluded_programs"] = list(ev.excluded)
    (out / "evaluation.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{'strategy':<16}{'obj.err mean':>14}{'sd':>9}{'dSPD mean':>12}{'sd':>9}{'bonus mean':>12}{'sd':>9}{'n':>5}")
    for name, ev in evaluations.items():
        e, d, b = ev.objective_error, ev.spd_delta, ev.bonus
        print(f"{name:<16}{_fmt(e.mean):>14}{_fmt(e.sd):>9}{_fmt(d.mean):>12}{_fmt(d.sd):>9}"
              f"{_fmt(b.mean):>12}{_fmt(b.sd):>9}{e.n:>5}")


# -- commands -----------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> int:
    synth = SyntheticConfig.from_dict({**(cfg.synthetic or {}), "seed": cfg.seed})
    out = _prepare_out(cfg.out_dir)
    years, programs = generate_synthetic_history(synth)
    save_dataset(out, years, programs)
    manifest_cfg = RunConfig(**{**asdict(cfg), "synthetic": synth.to_dict()})
    _write_manifest(out, "generate", manifest_cfg)

    print(f"wrote {len(years)} cohorts and {len(programs)} programs to {out}")
    attrs = synth.attributes
    for a in attrs:
        print(f"\n[{a}] test-score means (protected / other / gap):")
        for apps in years:
            prot = [np.mean(list(s.test_scores.values())) for s in apps.students if s.is_protected(a)]
            other = [np.mean(list(s.test_scores.values())) for s in apps.students if not s.is_protected(a)]
            print(f"  {apps.year_label}: {np.mean(prot):7.2f} / {np.mean(other):7.2f} / {np.mean(other) - np.mean(prot):6.2f}")
    for a in attrs:
        history = spd_history(years, programs, a, years=len(years))
        print(f"\n[{a}] no-bonus SPD by program and year ({', '.join(y.year_label for y in years)}):")
        for pid, values in history.items():
            print(f"  {pid}: " + " ".join("   n/a" if v is None else f"{v:+.3f}" for v in values))
    return 0


def cmd_suggest(cfg: RunConfig) -> int:
    study = _study(cfg)
    strategies = [Strategy.parse(s) for s in cfg.strategies]
    need = max((s.size for s in strategies if s.kind == "historical"), default=0)
    if need > len(study.history):
        log.warning("only %d historical years before %s; historical-%d averages those",
                    len(study.history), study.realized.year_label, need)
    targets = _targets(study, cfg)
    out = _prepare_out(cfg.out_dir)
    suggestions = suggest(study, strategies, cfg.attribute, targets, cfg.grid, cfg.lam_value,
                          cfg.seed, cfg.sample_size)
    for name, sugg in suggestions.items():
        for pid in targets:
            if pid not in sugg:
                log.warning("%s: no suggestion for %s (a group has no applicants in every set used)", name, pid)
    paths = _write_suggestions(out, cfg, suggestions)
    _write_manifest(out, "suggest", cfg)
    for path in paths:
        print(path)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    if not cfg.suggestions:
        raise ConfigError("evaluate needs at least one --suggestions file")
    study = _study(cfg)
    loaded: Dict[str, Dict[str, PolicySuggestion]] = {}
    for path in cfg.suggestions:
        try:
            sugg = suggestions_from_json(Path(path).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read suggestions {path}: {exc}") from None
        if not sugg:
            continue
        unknown = [p for p in sugg if p not in study.programs]
        if unknown:
            raise DataError(f"{path}: programs not in registry: {unknown}")
        wrong = {s.attribute for s in sugg.values()} - {cfg.attribute}
        if wrong:
            raise DataError(f"{path}: suggestions for {sorted(wrong)}, run is for {cfg.attribute}")
        name = next(iter(sugg.values())).strategy
        loaded[name] = sugg
    if not loaded:
        raise NotApplicable("suggestion files are empty")
    out = _prepare_out(cfg.out_dir)
    evaluations = evaluate_all(study, loaded, cfg.attribute, cfg.lam_value, cfg.grid)
    _write_evaluations(out, evaluations)
    _write_manifest(out, "evaluate", cfg)
    return 0


def cmd_report(cfg: RunConfig) -> int:
    """Suggest with every requested strategy, evaluate on the realized year
    and write the metric tables of the realized year."""
    study = _study(cfg)
    strategies = [Strategy.parse(s) for s in cfg.strategies]
    targets = _targets(study, cfg)
    out = _prepare_out(cfg.out_dir)
    suggestions = suggest(study, strategies, cfg.attribute, targets, cfg.grid, cfg.lam_value,
                          cfg.seed, cfg.sample_size)
    _write_suggestions(out, cfg, suggestions)
    evaluations = evaluate_all(study, {k: v for k, v in suggestions.items() if v},
                               cfg.attribute, cfg.lam_value, cfg.grid)
    _write_evaluations(out, evaluations)
    outcome = match(study.realized, study.programs)
    table = [program_metrics(outcome, p, cfg.attribute) for p in sorted(study.programs)]
    metrics_to_csv(table, out / "program_metrics.csv")
    (out / "program_metrics.json").write_text(metrics_to_json(table) + "\n")
    (out / "outcome_no_bonus.json").write_text(outcome.to_json() + "\n")
    _write_manifest(out, "report", cfg)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "suggest": cmd_suggest,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with defaults for any option")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV})")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    study = argparse.ArgumentParser(add_help=False)
    study.add_argument("--data", help="directory with programs.csv and students_<year>.csv")
    study.add_argument("--attribute")
    study.add_argument("--lambda", dest="lam", type=float,
                       help="utility/parity trade-off (default: 23 gender, 28 income)")
    study.add_argument("--grid-max", type=float)
    study.add_argument("--grid-step", type=float)
    study.add_argument("--year", help="evaluation year (default: latest)")
    study.add_argument("--filter", choices=["all", "consistent"])
    study.add_argument("--sample-size", type=int, help="students per sampled application set")

    parser = _Parser(prog="bonuspolicy", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", parents=[common], help="write a synthetic admissions history")
    gen.add_argument("--n-students", type=int)
    gen.add_argument("--n-programs", type=int)
    gen.add_argument("--n-years", type=int)
    gen.add_argument("--gap", action="append", metavar="ATTR=POINTS",
                     help="protected-group test-score gap, e.g. income=28")

    for name, helptext in [("suggest", "suggest bonuses per program"),
                           ("report", "suggest, evaluate and tabulate in one run")]:
        p = sub.add_parser(name, parents=[common, study], help=helptext)
        p.add_argument("--strategy", action="append", dest="strategies",
                       help="historical-K, predictive-N or ideal; repeatable (default: all six)")

    ev = sub.add_parser("evaluate", parents=[common, study], help="score suggestion files on the realized year")
    ev.add_argument("--suggestions", nargs="+")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if "lambda" in values:
            values["lam"] = values.pop("lambda")
    known = {f.name for f in fields(RunConfig)}
    synthetic = dict(values.get("synthetic") or {})
    for key in ("n_students", "n_programs", "n_years"):
        if getattr(args, key, None) is not None:
            synthetic[key] = getattr(args, key)
    for item in getattr(args, "gap", None) or []:
        attr, _, points = item.partition("=")
        try:
            gaps = synthetic.setdefault("group_score_gap", dict(SyntheticConfig().group_score_gap))
            gaps[attr] = float(points)
        except ValueError:
            raise ConfigError(f"bad --gap {item!r}, expected ATTR=POINTS") from None
    for key, value in vars(args).items():
        if key in known and value is not None:
            values[key] = value
    if synthetic:
        values["synthetic"] = synthetic
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = config_from_args(args)
        if args.command == "generate":
            if cfg.data is not None:
                raise ConfigError("generate does not read --data")
            cfg.validate(need_data=False)
        else:
            cfg.validate()
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NotApplicable as exc:
        print(f"infeasible run: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
