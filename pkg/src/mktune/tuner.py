"""Bayesian optimisation with a random-forest surrogate and asynchronous workers.

A single manager owns the search state (history, surrogate, in-flight set).
Workers only evaluate: the manager sends each one a configuration and
receives ``(worker_id, objective, elapsed, error)`` back on a shared queue.
Whenever a result arrives it is recorded, the surrogate is refit and the now
idle worker gets a new configuration straight away, without waiting for the
others.

The surrogate models loss = 1 - objective and candidates are ranked by the
lower confidence bound ``mean - kappa * std`` of that loss.
"""
from __future__ import annotations

import logging
import math
import multiprocessing as mp
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import forest as rf
from .errors import InvalidInputError
from .perfdb import FAILURE, EvaluationRecord, PerformanceDatabase, best_record, running_best
from .space import ParameterSpace, sample

__all__ = [
    "TunerSettings", "lcb", "propose", "run_tuning", "random_search", "evaluate_config", "best_record",
    "running_best", "EvaluationRecord",
]

log = logging.getLogger(__name__)

BACKENDS = ("thread", "process")


@dataclass(frozen=True)
class TunerSettings:
    budget: int = 128
    n_initial: int = 16
    kappa: float = 1.96
    n_candidates: int = 512
    retrain_every: int = 1
    n_workers: int = 1
    seed: int = 0
    backend: str = "thread"
    forest: rf.ForestParams = field(default_factory=rf.ForestParams)

    def __post_init__(self):
        if self.budget < 1 or self.n_initial < 1:
            raise InvalidInputError("budget and n_initial must be >= 1")
        if self.n_initial > self.budget:
            raise InvalidInputError(f"n_initial ({self.n_initial}) exceeds budget ({self.budget})")
        if not self.kappa >= 0:
            raise InvalidInputError("kappa must be non-negative")
        if self.n_candidates < 1 or self.retrain_every < 1 or self.n_workers < 1:
            raise InvalidInputError("n_candidates, retrain_every and n_workers must be >= 1")
        if self.backend not in BACKENDS:
            raise InvalidInputError(f"backend must be one of {BACKENDS}")


def lcb(mean, std, kappa: float):
    """Lower confidence bound of a loss: ``mean - kappa * std``."""
    return mean - kappa * std


def _losses(records) -> np.ndarray:
    return np.array([r.loss for r in records], dtype=np.float64)


def fit_surrogate(history, space: ParameterSpace, params: rf.ForestParams) -> rf.RandomForest:
    configs = np.array([space.key(r.config) for r in history], dtype=np.float64)
    return rf.fit(space.encode_array(configs), _losses(history), params)


def _propose(history, space, forest, settings, rng, pending=()):
    seen = {space.key(r.config) for r in history}
    seen.update(pending)
    pool = space.sample_array(rng, settings.n_candidates)
    keep, keys = [], set()
    for i, row in enumerate(pool):
        key = tuple(float(v) for v in row)
        if key in seen or key in keys:
            continue
        keys.add(key)
        keep.append(i)
    if not keep:
        return sample(space, rng), True
    cand = pool[keep]
    mean, std = forest.predict_mean_std_batch(space.encode_array(cand))
    # argmin picks the first candidate in draw order on ties
    best = int(np.argmin(lcb(mean, std, settings.kappa)))
    return space.row_to_config(cand[best]), False


def propose(history, space: ParameterSpace, forest: rf.RandomForest, settings: TunerSettings,
            rng: np.random.Generator, pending=()) -> dict:
    """Next configuration to evaluate.

    Draws ``settings.n_candidates`` random configurations, discards those
    already evaluated (``history``) or in flight (``pending``, a collection of
    :meth:`ParameterSpace.key` tuples) and returns the one with the lowest
    LCB of predicted loss. If every candidate is a duplicate a fresh random
    configuration is returned instead.
    """
    return _propose(history, space, forest, settings, rng, pending)[0]


# -- worker pools ------------------------------------------------------------

def _evaluate(objective, config):
    t0 = time.perf_counter()
    try:
        value, error = float(objective(config)), None
    except Exception as exc:  # a crashing evaluation becomes a failure record
        value, error = None, f"{type(exc).__name__}: {exc}"
    return value, time.perf_counter() - t0, error


def evaluate_config(objective, config, sequence_index: int, worker_id: int = 0) -> EvaluationRecord:
    """Evaluate one configuration synchronously, mapping any failure to the sentinel."""
    value, elapsed, error = _evaluate(objective, config)
    return EvaluationRecord(config, _clean_objective(value, error, config), max(0.0, elapsed),
                            sequence_index, worker_id)


def _worker_loop(worker_id, objective, inbox, outbox):
    while True:
        config = inbox.get()
        if config is None:
            return
        value, elapsed, error = _evaluate(objective, config)
        outbox.put((worker_id, value, elapsed, error))


class _InlinePool:
    """Single worker evaluated on the manager's thread."""

    def __init__(self, objective):
        self.objective = objective
        self._task = None

    def send(self, worker_id, config):
        self._task = config

    def recv(self):
        value, elapsed, error = _evaluate(self.objective, self._task)
        self._task = None
        return 0, value, elapsed, error

    def close(self):
        pass


class _QueuePool:
    def __init__(self, objective, n_workers, backend):
        if backend == "process":
            ctx = mp.get_context("spawn")
            make_queue, make_worker = ctx.Queue, ctx.Process
        else:
            make_queue, make_worker = queue.Queue, threading.Thread
        self.outbox = make_queue()
        self.inboxes = [make_queue() for _ in range(n_workers)]
        self.workers = [
            make_worker(target=_worker_loop, args=(w, objective, self.inboxes[w], self.outbox), daemon=True)
            for w in range(n_workers)
        ]
        for w in self.workers:
            w.start()

    def send(self, worker_id, config):
        self.inboxes[worker_id].put(config)

    def recv(self):
        return self.outbox.get()

    def close(self):
        for inbox in self.inboxes:
            inbox.put(None)
        for w in self.workers:
            w.join(timeout=10)


def _make_pool(objective, settings):
    if settings.n_workers == 1:
        return _InlinePool(objective)
    return _QueuePool(objective, settings.n_workers, settings.backend)


# -- manager -----------------------------------------------------------------

def _clean_objective(value, error, config):
    if error is None and value is not None and math.isfinite(value) and 0.0 <= value <= 1.0:
        return value
    if error is None and value is not None and value != FAILURE:
        error = f"objective {value!r} outside [0, 1]"
    if error is not None:
        log.warning("evaluation of %s failed: %s", config, error)
    return FAILURE


def run_tuning(space: ParameterSpace, objective: Callable[[dict], float],
               settings: TunerSettings | None = None, db_path=None,
               progress: Callable[[EvaluationRecord, float], None] | None = None) -> PerformanceDatabase:
    """Search ``space`` for the configuration maximising ``objective``.

    Parameters
    ----------
    space : ParameterSpace
    objective : callable
        Maps a configuration dict to an accuracy in [0, 1]. Exceptions and
        out-of-range values are recorded as failures (objective -1). With the
        process backend it must be picklable.
    settings : TunerSettings, optional
    db_path : path, optional
        Database file, written as results arrive.
    progress : callable, optional
        Called as ``progress(record, best_so_far)`` after each completion.

    Returns
    -------
    PerformanceDatabase
        Exactly ``settings.budget`` records, in completion order.
    """
    settings = settings or TunerSettings()
    rng = np.random.default_rng(settings.seed)
    db = PerformanceDatabase(space, path=db_path)
    pending: dict[int, tuple] = {}
    idle = list(range(settings.n_workers))
    dispatched = completed = 0
    surrogate, trained_at = None, -1
    best = -math.inf

    def next_config():
        nonlocal surrogate, trained_at
        if dispatched < settings.n_initial or completed == 0:
            taken = {space.key(r.config) for r in db.records} | {p[0] for p in pending.values()}
            for _ in range(100):
                config = sample(space, rng)
                if space.key(config) not in taken:
                    return config, False
            return config, True
        if surrogate is None or completed - trained_at >= settings.retrain_every:
            fp = settings.forest
            params = rf.ForestParams(
                n_trees=fp.n_trees, max_depth=fp.max_depth, min_samples_leaf=fp.min_samples_leaf,
                feature_subsample=fp.feature_subsample, bootstrap=fp.bootstrap,
                seed=int(rng.integers(2**31 - 1)),
            )
            surrogate = fit_surrogate(db.records, space, params)
            trained_at = completed
        return _propose(db.records, space, surrogate, settings, rng,
                        pending=[p[0] for p in pending.values()])

    pool = _make_pool(objective, settings)
    try:
        while completed < settings.budget:
            while idle and dispatched < settings.budget:
                worker = idle.pop(0)
                config, fallback = next_config()
                pending[worker] = (space.key(config), config, fallback)
                pool.send(worker, config)
                dispatched += 1
            worker, value, elapsed, error = pool.recv()
            _, config, fallback = pending.pop(worker)
            record = EvaluationRecord(
                config=config,
                objective=_clean_objective(value, error, config),
                elapsed_seconds=max(0.0, elapsed),
                sequence_index=completed,
                worker_id=worker,
                fallback=fallback,
            )
            db.append(record)
            completed += 1
            idle.append(worker)
            best = max(best, record.objective)
            if progress is not None:
                progress(record, best)
    finally:
        pool.close()
    return db


def random_search(space: ParameterSpace, objective: Callable[[dict], float], budget: int,
                  seed: int = 0) -> PerformanceDatabase:
    """Uniform sampling with replacement; the baseline the tuner is compared with."""
    rng = np.random.default_rng(seed)
    db = PerformanceDatabase(space)
    for i in range(budget):
        db.append(evaluate_config(objective, sample(space, rng), i))
    return db
