"""Iterative range refinement around a tuning loop.

Each round tunes the current space, then looks at the database. Evaluations
scoring at or below ``fail_threshold`` mark a failing region. For every
refinable parameter the range is cut back to the first grid point past the
nearest failing value on each side of the top-scoring records. A side with
no failures shrinks to the top records' span padded by 10% of the current
width. The step q shrinks by ``q_shrink`` and the next round tunes the smaller,
finer space. Refinement stops once the best accuracy stops improving and no
failures remain.

Random sampling rarely lands exactly on a failure frontier, so when an
objective is available the frontier on each failing side is located by
bisection along that parameter with the others held at the best
configuration. These extra evaluations ("probes") are kept in their own
database and only sharpen the failing-value set.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import InvalidInputError, RefusalError
from .perfdb import EvaluationRecord, PerformanceDatabase, best_record, save
from .space import ParameterDef, ParameterSpace, _decimals, save_space
from .tuner import TunerSettings, evaluate_config, run_tuning

__all__ = [
    "RefinementPolicy", "ParameterReport", "RefinementDecision", "FrameworkResult",
    "prune_range", "probe_frontiers", "analyze", "run_framework", "decision_to_text",
]

_PAD_FRACTION = 0.1
_TOP_FRACTION = 0.1
_ANCHOR_TRIES = 4


@dataclass(frozen=True)
class RefinementPolicy:
    fail_threshold: float = 0.2
    prune_margin: float = 0.0
    q_shrink: float = 0.1
    min_improvement: float = 0.001
    max_rounds: int = 4
    refinable: tuple = ("C", "coef0")
    probe_frontiers: bool = True
    max_probes: int = 64

    def __post_init__(self):
        if not 0.0 <= self.fail_threshold <= 1.0:
            raise InvalidInputError("fail_threshold must lie in [0, 1]")
        if self.prune_margin < 0 or self.min_improvement < 0:
            raise InvalidInputError("prune_margin and min_improvement must be non-negative")
        if not 0.0 < self.q_shrink < 1.0:
            raise InvalidInputError("q_shrink must lie in (0, 1)")
        if self.max_rounds < 1 or self.max_probes < 0:
            raise InvalidInputError("max_rounds must be >= 1 and max_probes >= 0")
        object.__setattr__(self, "refinable", tuple(self.refinable))

    def is_failure(self, record: EvaluationRecord) -> bool:
        return record.failed or record.objective <= self.fail_threshold


@dataclass(frozen=True)
class ParameterReport:
    name: str
    old: ParameterDef
    new: ParameterDef
    fail_below: float | None  # nearest failing value under the top records
    fail_above: float | None
    n_failing: int


@dataclass(frozen=True)
class RefinementDecision:
    action: str  # "stop", "refine" or "limit" (round limit reached)
    best: EvaluationRecord
    reason: str
    new_space: ParameterSpace | None = None
    reports: dict = field(default_factory=dict)
    probes: PerformanceDatabase | None = None

    @property
    def stop(self) -> bool:
        return self.action == "stop"


@dataclass
class FrameworkResult:
    best: EvaluationRecord
    best_round: int
    history: list  # (space, db) per round
    decisions: list
    budget_stopped: bool


def _split(records, policy):
    failing = [r for r in records if policy.is_failure(r)]
    survivors = [r for r in records if not policy.is_failure(r)]
    return failing, survivors


def _top(survivors):
    ranked = sorted(survivors, key=lambda r: (-r.objective, r.sequence_index))
    return ranked[:max(1, math.ceil(_TOP_FRACTION * len(ranked)))]


def _envelope(records, name):
    vals = [r.config[name] for r in records]
    return min(vals), max(vals)


def _attributed(failing, survivors, name, refinable, lenient=False):
    """Failing values of ``name`` that plausibly caused their failure.

    A failure counts against ``name`` when every other refinable parameter
    sits inside the survivors' envelope. ``lenient`` also counts failures
    where ``name`` itself lies outside its survivor envelope; those are only
    suggestions for probing.
    """
    own_lo, own_hi = _envelope(survivors, name)
    others = {n: _envelope(survivors, n) for n in refinable if n != name and n in survivors[0].config}
    out = []
    for r in failing:
        v = r.config[name]
        inside_others = all(lo <= r.config[n] <= hi for n, (lo, hi) in others.items())
        if inside_others or (lenient and not own_lo <= v <= own_hi):
            out.append(v)
    return out


def _best(records):
    return min(records, key=lambda r: (-r.objective, r.sequence_index))


def _swapped_in(record, best, name) -> bool:
    """True when ``record`` equals ``best`` except possibly in ``name``."""
    return all(record.config[n] == best.config[n] for n in best.config if n != name)


def _frontiers(records, probes, param, policy):
    failing, survivors = _split(records, policy)
    if not survivors:
        raise RefusalError("no surviving region: every evaluation failed")
    name = param.name
    s_lo, s_hi = _envelope(_top(survivors), name)
    values = _attributed(failing, survivors, name, policy.refinable) if failing else []
    if probes:
        # probes are run in the best configuration's context and override the data
        best = _best(records)
        own = [r for r in probes if _swapped_in(r, best, name)]
        refuted = {r.config[name] for r in own if not policy.is_failure(r)}
        values = [v for v in values if v not in refuted]
        values += [r.config[name] for r in own if policy.is_failure(r)]
    below = [v for v in values if v < s_lo]
    above = [v for v in values if v > s_hi]
    return (max(below) if below else None), (min(above) if above else None), s_lo, s_hi, len(values)


def prune_range(db, param: ParameterDef, policy: RefinementPolicy, probes=()) -> ParameterDef:
    """Shrunken, finer definition of ``param`` based on the evaluations in ``db``.

    ``probes`` are extra records whose failures count toward the frontier but
    which never enter the top set.
    """
    return _prune(db, param, policy, probes)[0]


def _prune(db, param, policy, probes=()):
    records = list(db)
    if not records:
        raise InvalidInputError("cannot prune from an empty database")
    _, survivors = _split(records, policy)
    if not survivors:
        raise RefusalError("no surviving region: every evaluation failed")
    fail_lo, fail_hi, s_lo, s_hi, n_fail = _frontiers(records, list(probes), param, policy)

    q_old, q_new = param.q, param.q * policy.q_shrink
    pad = _PAD_FRACTION * (param.upper - param.lower)
    margin = policy.prune_margin * q_old
    lower = fail_lo + q_old - margin if fail_lo is not None else s_lo - pad
    upper = fail_hi - q_old + margin if fail_hi is not None else s_hi + pad
    lower, upper = max(param.lower, lower), min(param.upper, upper)

    # snap outward onto the new grid anchored at the old lower bound
    k_lo = math.floor((lower - param.lower) / q_new + 1e-6)
    k_hi = math.ceil((upper - param.lower) / q_new - 1e-6)
    k_max = math.floor((param.upper - param.lower) / q_new + 1e-6)
    k_hi = min(k_hi, k_max)
    if k_hi <= k_lo:
        if k_lo < k_max:
            k_hi = k_lo + 1
        else:
            k_lo = k_hi - 1
    q_new = round(q_new, 12 - math.floor(math.log10(q_new)))
    digits = min(15, max(_decimals(param.lower), _decimals(q_new)))
    new = ParameterDef(
        param.name,
        round(param.lower + k_lo * q_new, digits),
        round(param.lower + k_hi * q_new, digits),
        q_new,
        param.scale,
    )
    report = ParameterReport(param.name, param, new, fail_lo, fail_hi, n_fail)
    return new, report


def probe_frontiers(db, space: ParameterSpace, policy: RefinementPolicy,
                    objective: Callable[[dict], float]) -> PerformanceDatabase:
    """Locate failure frontiers by bisection; returns the probe evaluations.

    Every probe is the best configuration with one refinable parameter
    changed. On each side of the top records the nearest suspicious failing
    values, then the range edge, are tried until one fails; the gap between
    that value and the best configuration's own value is then bisected on
    the parameter's current grid. At most ``policy.max_probes`` evaluations.
    """
    records = list(db)
    probes = PerformanceDatabase(space)
    best = best_record(db)
    seen: dict[tuple, EvaluationRecord] = {}

    def run(config):
        key = space.key(config)
        if key not in seen:
            if len(probes) >= policy.max_probes:
                return None
            seen[key] = evaluate_config(objective, config, len(probes))
            probes.append(seen[key])
        return policy.is_failure(seen[key])

    failing, survivors = _split(records, policy)
    if not survivors:
        return probes
    for name in policy.refinable:
        param = space[name]
        s_lo, s_hi = _envelope(_top(survivors), name)
        values = sorted(set(_attributed(failing, survivors, name, policy.refinable, lenient=True)))
        # nearest suspects first, then the range edge itself
        below = sorted((v for v in values if v < s_lo), reverse=True)[:_ANCHOR_TRIES]
        above = sorted(v for v in values if v > s_hi)[:_ANCHOR_TRIES]
        sides = []
        if param.lower < s_lo:
            sides.append(below + [param.lower])
        if param.upper > s_hi:
            sides.append(above + [float(param.value_at(param.n_steps))])
        for candidates in sides:
            fail_at = None
            for v in dict.fromkeys(candidates):
                outcome = run({**best.config, name: v})
                if outcome is None:
                    break
                if outcome:
                    fail_at = v
                    break
            if fail_at is None:
                continue
            # bisection on grid steps: bad end fails, good end survives
            bad = round((fail_at - param.lower) / param.q)
            good = round((best.config[name] - param.lower) / param.q)
            while abs(good - bad) > 1:
                mid = (good + bad) // 2
                outcome = run({**best.config, name: float(param.value_at(mid))})
                if outcome is None:
                    break
                if outcome:
                    bad = mid
                else:
                    good = mid
    return probes


def analyze(db, space: ParameterSpace, prev_best: float | None, policy: RefinementPolicy,
            objective: Callable[[dict], float] | None = None) -> RefinementDecision:
    """Stop, or refine the space for another round.

    Stops when ``prev_best`` is given, the improvement over it is below
    ``policy.min_improvement`` and no evaluation failed. Otherwise every
    refinable parameter is pruned. Passing ``objective`` enables frontier
    probing (see :func:`probe_frontiers`).
    """
    if not len(db):
        raise InvalidInputError("cannot analyze an empty database")
    unknown = set(policy.refinable) - set(space.names)
    if unknown:
        raise InvalidInputError(f"refinable parameters {sorted(unknown)} are not in the space")
    best = best_record(db)
    failing, survivors = _split(db.records, policy)
    if prev_best is not None and best.objective - prev_best < policy.min_improvement and not failing:
        return RefinementDecision(
            "stop", best,
            f"no improvement: best {best.objective:.6g} vs previous {prev_best:.6g}, no failures",
        )
    if not survivors:
        raise RefusalError("no surviving region: every evaluation failed")
    probes = None
    if objective is not None and policy.probe_frontiers and failing:
        probes = probe_frontiers(db, space, policy, objective)
    reports = {}
    for name in policy.refinable:
        _, reports[name] = _prune(db, space[name], policy, probes if probes is not None else ())
    new_space = space.replace(**{name: rep.new for name, rep in reports.items()})
    reason = f"{len(failing)} failing evaluations" if failing else "improving"
    return RefinementDecision("refine", best, reason, new_space, reports, probes)


def decision_to_text(decision: RefinementDecision, round_no: int | None = None) -> str:
    """INI report: a [decision] section plus one section per refined parameter."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    head = {"action": decision.action, "reason": decision.reason,
            "best_objective": repr(decision.best.objective)}
    if round_no is not None:
        head["round"] = str(round_no)
    if decision.probes is not None:
        head["probes"] = str(len(decision.probes))
    parser["decision"] = head
    for name, rep in decision.reports.items():
        parser[name] = {
            "old_lower": repr(rep.old.lower), "old_upper": repr(rep.old.upper), "old_q": repr(rep.old.q),
            "new_lower": repr(rep.new.lower), "new_upper": repr(rep.new.upper), "new_q": repr(rep.new.q),
            "fail_below": "none" if rep.fail_below is None else repr(rep.fail_below),
            "fail_above": "none" if rep.fail_above is None else repr(rep.fail_above),
            "n_failing": str(rep.n_failing),
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _final_decision(db, space, prev_best, policy, round_best):
    # no further round: only the stop rule matters, a refined space would go unused
    try:
        decision = analyze(db, space, prev_best, policy)
    except RefusalError:
        decision = None
    if decision is not None and decision.stop:
        return decision
    return RefinementDecision("limit", round_best, f"round limit {policy.max_rounds} reached")


def run_framework(initial_space: ParameterSpace, objective: Callable[[dict], float],
                  policy: RefinementPolicy | None = None, tuner: TunerSettings | None = None,
                  out_dir=None, progress=None) -> FrameworkResult:
    """Alternate tuning and refinement until the stop rule or ``max_rounds``.

    Round k tunes with seed ``tuner.seed + k - 1`` and a fresh surrogate. With
    ``out_dir`` each round writes ``round_k.csv`` (database),
    ``round_k_space.ini``, ``round_k_report.ini`` and, when probing ran,
    ``round_k_probes.csv``.
    """
    policy = policy or RefinementPolicy()
    tuner = tuner or TunerSettings()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    space = initial_space
    history, decisions = [], []
    best, best_round, prev_best = None, 0, None
    stopped = False
    for k in range(1, policy.max_rounds + 1):
        if out is not None:
            save_space(space, out / f"round_{k}_space.ini")
        settings = dataclasses.replace(tuner, seed=tuner.seed + k - 1)
        db = run_tuning(space, objective, settings,
                        db_path=out / f"round_{k}.csv" if out is not None else None,
                        progress=progress)
        history.append((space, db))
        round_best = best_record(db)
        if best is None or round_best.objective > best.objective:
            best, best_round = round_best, k
        if k < policy.max_rounds:
            decision = analyze(db, space, prev_best, policy, objective)
        else:
            decision = _final_decision(db, space, prev_best, policy, round_best)
        decisions.append(decision)
        if out is not None:
            (out / f"round_{k}_report.ini").write_text(decision_to_text(decision, k))
            if decision.probes is not None:
                save(decision.probes, out / f"round_{k}_probes.csv")
        if decision.stop:
            stopped = True
            break
        prev_best = round_best.objective if prev_best is None else max(prev_best, round_best.objective)
        space = decision.new_space
    return FrameworkResult(best, best_round, history, decisions, budget_stopped=not stopped)

