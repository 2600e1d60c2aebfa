"""``mktune`` command line.

Subcommands::

    evaluate   score one configuration (defaults for anything not given)
    tune       Bayesian optimisation over a space
    refine     tune, prune C/coef0 ranges, re-tune until the stop rule
    grid       exhaustive evaluation of a small space
    plotdata   running-best series from a database file

Exit status is 0 on success, 2 for invalid input (bad flags, files, spaces or
configurations, refused grids) and 3 when an evaluation or run fails.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import importlib
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import datasets as ds
from .errors import IntegrityError, InvalidInputError, MKTuneError, ParseError, RefusalError
from .objectives import SVMObjective, default_params
from .perfdb import EvaluationRecord, PerformanceDatabase, best_record, load, running_best
from .refine import RefinementPolicy, run_framework
from .space import ParameterSpace, default_space, grid_enumerate, load_space, quantize
from .svm import TrainSettings
from .tuner import BACKENDS, TunerSettings, evaluate_config, run_tuning

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

class EvaluationFailed(MKTuneError):
    pass


@dataclasses.dataclass
class RunConfig:
    objective: object
    space: ParameterSpace
    out: Path
    seed: int
    tuner: TunerSettings
    policy: RefinementPolicy
    n_features: int | None = None


# -- argument parsing --------------------------------------------------------

def _add_objective_args(p):
    g = p.add_argument_group("objective")
    g.add_argument("--dataset", help="CSV file, or rings[:n[:noise]] or blobs[:k[:per_class[:d[:separation[:noise]]]]]")
    g.add_argument("--objective", metavar="MODULE:CALLABLE",
                   help="evaluate this callable instead of an SVM on --dataset")
    g.add_argument("--label-column", default="-1", help="header name or zero-based index (default: last)")
    g.add_argument("--no-header", action="store_true", help="CSV file has no header line")
    g.add_argument("--no-standardize", action="store_true")
    g.add_argument("--metric", choices=("overall", "class-averaged"), default="overall")
    g.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--space", default="default", help="INI space file, or 'default'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("mktune-out"), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_tuner_args(p):
    g = p.add_argument_group("search")
    g.add_argument("--budget", type=int, default=128, help="evaluations per tuning run")
    g.add_argument("--n-initial", type=int, default=16, help="random warm-up evaluations")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--backend", choices=BACKENDS, default="thread")
    g.add_argument("--kappa", type=float, default=1.96)
    g.add_argument("--candidates", type=int, default=512)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mktune", description="Mixed-kernel SVM hyperparameter tuning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score one configuration")
    _add_objective_args(p)
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")

    p = sub.add_parser("tune", help="Bayesian optimisation run")
    _add_objective_args(p)
    _add_tuner_args(p)

    p = sub.add_parser("refine", help="tune with iterative range refinement")
    _add_objective_args(p)
    _add_tuner_args(p)
    p.add_argument("--rounds", type=int, default=4)
    p.add_argument("--fail-threshold", type=float, default=0.2)
    p.add_argument("--prune-margin", type=float, default=0.0)
    p.add_argument("--no-probe", action="store_true", help="do not bisect failure frontiers")

    p = sub.add_parser("grid", help="exhaustive search of a small space")
    _add_objective_args(p)
    p.add_argument("--cap", type=int, default=10_000, help="refuse grids larger than this")

    p = sub.add_parser("plotdata", help="write seq,objective,running_best from a database")
    p.add_argument("db", type=Path)
    p.add_argument("--out", type=Path, default=Path("mktune-out"), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _parse_spec(text: str, defaults: list, kinds: list) -> list:
    parts = text.split(":")[1:]
    if len(parts) > len(defaults):
        raise InvalidInputError(f"too many fields in {text!r}")
    out = list(defaults)
    for i, part in enumerate(parts):
        try:
            out[i] = kinds[i](part)
        except ValueError:
            raise InvalidInputError(f"bad field {part!r} in {text!r}") from None
    return out


def load_dataset(args) -> ds.Dataset:
    spec = args.dataset
    if spec is None:
        raise InvalidInputError("--dataset or --objective is required")
    if spec == "rings" or spec.startswith("rings:"):
        n, noise = _parse_spec(spec, [400, 0.05], [int, float])
        return ds.gen_rings(n, noise, seed=args.seed)
    if spec == "blobs" or spec.startswith("blobs:"):
        k, per, d, sep, noise = _parse_spec(spec, [3, 50, 2, 5.0, 1.0], [int, int, int, float, float])
        return ds.gen_blobs(k, per, d, sep, noise, seed=args.seed)
    label = args.label_column
    label = int(label) if label.lstrip("-").isdigit() else label
    return ds.load_csv(spec, label, has_header=not args.no_header)


def _import_callable(ref: str):
    module, _, attr = ref.partition(":")
    if not module or not attr:
        raise InvalidInputError(f"--objective must look like module:callable, got {ref!r}")
    try:
        obj = getattr(importlib.import_module(module), attr)
    except (ImportError, AttributeError) as exc:
        raise InvalidInputError(f"cannot import {ref!r}: {exc}") from None
    if not callable(obj):
        raise InvalidInputError(f"{ref!r} is not callable")
    return obj


def build_objective(args):
    """Objective callable and, for SVM objectives, the feature count."""
    if args.objective:
        return _import_callable(args.objective), None
    data = load_dataset(args)
    train, test = ds.split(data, args.test_fraction, np.random.default_rng(args.seed), stratified=True)
    if not args.no_standardize:
        s = ds.fit_standardizer(train)
        train, test = ds.apply_standardizer(s, train), ds.apply_standardizer(s, test)
    return SVMObjective(train, test, args.metric, TrainSettings()), data.d


def build_runconfig(args) -> RunConfig:
    space = default_space() if args.space == "default" else load_space(args.space)
    objective, d = build_objective(args)
    tuner = TunerSettings(seed=args.seed)
    if hasattr(args, "budget"):
        tuner = TunerSettings(
            budget=args.budget, n_initial=min(args.n_initial, args.budget), kappa=args.kappa,
            n_candidates=args.candidates, n_workers=args.workers, seed=args.seed,
            backend=args.backend,
        )
    policy = RefinementPolicy()
    if hasattr(args, "rounds"):
        policy = RefinementPolicy(fail_threshold=args.fail_threshold, prune_margin=args.prune_margin,
                                  max_rounds=args.rounds, probe_frontiers=not args.no_probe)
    return RunConfig(objective, space, args.out, args.seed, tuner, policy, d)


# -- outputs -----------------------------------------------------------------

def best_to_text(record: EvaluationRecord, names, round_no: int | None = None) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    best = {"objective": repr(record.objective), "seq": str(record.sequence_index)}
    if round_no is not None:
        best["round"] = str(round_no)
    parser["best"] = best
    parser["config"] = {n: repr(float(record.config[n])) for n in names}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def read_best(path) -> dict:
    """Configuration section of a best-config report."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if not parser.read(path):
        raise ParseError("file not found", path=path)
    return {k: float(v) for k, v in parser["config"].items()}


def series_to_text(db: PerformanceDatabase) -> str:
    lines = ["seq,objective,running_best\n"]
    for r, (seq, best) in zip(db.records, running_best(db)):
        lines.append(f"{seq},{r.objective!r},{best!r}\n")
    return "".join(lines)


def _progress(record: EvaluationRecord, best: float):
    print(f"seq={record.sequence_index} objective={record.objective:.6f} "
          f"elapsed={record.elapsed_seconds:.3f}s best={best:.6f}", flush=True)


def _finish(db, rc: RunConfig, stem: str, round_no=None, record=None):
    record = record or best_record(db)
    (rc.out / "best.ini").write_text(best_to_text(record, rc.space.names, round_no))
    (rc.out / f"{stem}_series.csv").write_text(series_to_text(db))
    print(f"best objective {record.objective:.6f} at seq {record.sequence_index}")
    for n in rc.space.names:
        print(f"  {n} = {record.config[n]!r}")


# -- commands ----------------------------------------------------------------

def _parse_params(items) -> dict:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise InvalidInputError(f"--param expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise InvalidInputError(f"--param {name}: not a number: {value!r}") from None
    return out


def cmd_evaluate(args) -> float:
    rc = build_runconfig(args)
    given = _parse_params(args.param)
    unknown = set(given) - set(rc.space.names)
    if unknown:
        raise InvalidInputError(f"unknown parameters {sorted(unknown)}; space has {rc.space.names}")
    # baseline values snapped onto the space's grid fill in whatever was not given
    base = default_params(rc.n_features).as_config() if rc.n_features else {}
    config = {n: quantize(base[n], rc.space[n]) for n in rc.space.names if n in base}
    config.update(given)
    config = rc.space.validate(config)
    rc.out.mkdir(parents=True, exist_ok=True)
    record = evaluate_config(rc.objective, config, 0)
    PerformanceDatabase(rc.space, [record], path=rc.out / "evaluate.csv")
    if record.failed:
        raise EvaluationFailed(f"evaluation of {config} failed")
    print(f"objective {record.objective:.6f}")
    for n in rc.space.names:
        print(f"  {n} = {config[n]!r}")
    return record.objective


def cmd_tune(args) -> EvaluationRecord:
    rc = build_runconfig(args)
    rc.out.mkdir(parents=True, exist_ok=True)
    db = run_tuning(rc.space, rc.objective, rc.tuner, db_path=rc.out / "tune.csv", progress=_progress)
    _finish(db, rc, "tune")
    return best_record(db)


def cmd_refine(args) -> EvaluationRecord:
    rc = build_runconfig(args)
    result = run_framework(rc.space, rc.objective, rc.policy, rc.tuner, out_dir=rc.out, progress=_progress)
    for k, decision in enumerate(result.decisions, start=1):
        print(f"round {k}: {decision.action} ({decision.reason})")
        for name, rep in decision.reports.items():
            print(f"  {name}: [{rep.old.lower}, {rep.old.upper}] q={rep.old.q} -> "
                  f"[{rep.new.lower}, {rep.new.upper}] q={rep.new.q}")
    if result.budget_stopped:
        print(f"stopped after the maximum of {rc.policy.max_rounds} rounds")
    space, _ = result.history[result.best_round - 1]
    rc = dataclasses.replace(rc, space=space)
    _, db = result.history[result.best_round - 1]
    _finish(db, rc, f"round_{result.best_round}", round_no=result.best_round, record=result.best)
    return result.best


def cmd_grid(args) -> EvaluationRecord:
    rc = build_runconfig(args)
    configs = grid_enumerate(rc.space, args.cap)
    rc.out.mkdir(parents=True, exist_ok=True)
    db = PerformanceDatabase(rc.space, path=rc.out / "grid.csv")
    best = -np.inf
    for i, config in enumerate(configs):
        record = evaluate_config(rc.objective, config, i)
        db.append(record)
        best = max(best, record.objective)
        _progress(record, best)
    _finish(db, rc, "grid")
    return best_record(db)


def cmd_plotdata(args) -> Path:
    db = load(args.db)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.db.stem}_series.csv"
    path.write_text(series_to_text(db))
    print(path)
    return path


COMMANDS = {
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "refine": cmd_refine,
    "grid": cmd_grid,
    "plotdata": cmd_plotdata,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (InvalidInputError, ParseError, IntegrityError, RefusalError) as exc:
        print(f"mktune: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (MKTuneError, ArithmeticError, OSError, RuntimeError) as exc:
        print(f"mktune: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
