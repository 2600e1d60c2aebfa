"""Append-only store of evaluation results.

On disk a database is a CSV file::

    # space: <sha256 of the parameter space>
    seq,worker,elapsed_s,objective,<parameter names in space order>
    0,0,0.0132,0.8125,...

An objective of -1 marks an evaluation that failed.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IntegrityError, InvalidInputError, ParseError
from .space import ParameterSpace

FAILURE = -1.0
_FIXED_COLUMNS = ("seq", "worker", "elapsed_s", "objective")
_COMMENT = "# space: "


@dataclass(frozen=True)
class EvaluationRecord:
    """One evaluated configuration.

    ``fallback`` is set when the optimizer ran out of unseen candidates and
    fell back to a random draw. It is not persisted.
    """

    config: dict
    objective: float
    elapsed_seconds: float
    sequence_index: int
    worker_id: int = 0
    fallback: bool = field(default=False, compare=False)

    def __post_init__(self):
        obj = float(self.objective)
        if not (obj == FAILURE or 0.0 <= obj <= 1.0):
            raise InvalidInputError(f"objective must lie in [0, 1] or be {FAILURE}, got {obj}")
        if self.elapsed_seconds < 0:
            raise InvalidInputError("elapsed_seconds must be non-negative")
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "elapsed_seconds", float(self.elapsed_seconds))

    @property
    def failed(self) -> bool:
        return self.objective == FAILURE

    @property
    def loss(self) -> float:
        """1 - objective; a failed evaluation counts as loss 1."""
        return 1.0 if self.failed else 1.0 - self.objective


class PerformanceDatabase:
    """Ordered evaluation records tied to one parameter space.

    When ``path`` is given the file is (re)written immediately and every
    :meth:`append` is flushed to disk before returning.
    """

    def __init__(self, space: ParameterSpace | None = None, records=(), path=None, *,
                 fingerprint: str | None = None, names=None):
        if space is None and (fingerprint is None or names is None):
            raise InvalidInputError("need a space, or both fingerprint and names")
        self.space = space
        self.space_fingerprint = space.fingerprint() if space is not None else fingerprint
        self.names = list(space.names) if space is not None else list(names)
        if fingerprint is not None and fingerprint != self.space_fingerprint:
            raise IntegrityError("fingerprint does not match the supplied space")
        self.records: list[EvaluationRecord] = []
        self.path = None
        for r in records:
            self.append(r)
        if path is not None:
            self.attach(path)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __eq__(self, other):
        if not isinstance(other, PerformanceDatabase):
            return NotImplemented
        return (self.space_fingerprint == other.space_fingerprint
                and self.names == other.names
                and self.records == other.records)

    def __repr__(self):
        return f"PerformanceDatabase({len(self.records)} records, space={self.space_fingerprint[:12]})"

    def attach(self, path) -> None:
        """Write current contents to ``path`` and append there from now on."""
        save(self, path)
        self.path = Path(path)

    def append(self, record: EvaluationRecord) -> "PerformanceDatabase":
        if self.records and record.sequence_index <= self.records[-1].sequence_index:
            raise IntegrityError(
                f"sequence index {record.sequence_index} does not follow "
                f"{self.records[-1].sequence_index}"
            )
        if set(record.config) != set(self.names):
            raise IntegrityError(f"record parameters {sorted(record.config)} do not match {self.names}")
        if self.space is not None and not self.space.is_valid(record.config):
            raise IntegrityError(f"configuration {record.config} is not valid in the database's space")
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(_format_record(record, self.names))
                fh.flush()
                os.fsync(fh.fileno())
        return self

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]


def append(db: PerformanceDatabase, record: EvaluationRecord) -> PerformanceDatabase:
    return db.append(record)


def _format_record(r: EvaluationRecord, names) -> str:
    fields = [str(r.sequence_index), str(r.worker_id), repr(r.elapsed_seconds), repr(r.objective)]
    fields += [repr(float(r.config[n])) for n in names]
    return ",".join(fields) + "\n"


def to_text(db: PerformanceDatabase) -> str:
    lines = [_COMMENT + db.space_fingerprint + "\n", ",".join(_FIXED_COLUMNS + tuple(db.names)) + "\n"]
    lines += [_format_record(r, db.names) for r in db.records]
    return "".join(lines)


def save(db: PerformanceDatabase, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_text(db))
        fh.flush()
        os.fsync(fh.fileno())


def load(path, space: ParameterSpace | None = None) -> PerformanceDatabase:
    """Read a database file.

    Raises
    ------
    ParseError
        For a missing file or any malformed line (the message names the line).
    IntegrityError
        When ``space`` is given and its fingerprint differs from the file's.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(_COMMENT):
        raise ParseError(f"first line must start with {_COMMENT.strip()!r}", path=path, line=1)
    fingerprint = lines[0][len(_COMMENT):].strip()
    if len(lines) < 2:
        raise ParseError("missing header line", path=path, line=2)
    header = lines[1].split(",")
    if tuple(header[:4]) != _FIXED_COLUMNS or len(header) < 5:
        raise ParseError(f"header must start with {','.join(_FIXED_COLUMNS)} and name parameters",
                         path=path, line=2)
    names = header[4:]
    if space is not None:
        if space.fingerprint() != fingerprint:
            raise IntegrityError(f"{path}: database was written for a different parameter space")
        if names != space.names:
            raise IntegrityError(f"{path}: parameter columns {names} do not match {space.names}")
    db = PerformanceDatabase(space, fingerprint=fingerprint, names=names)
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(cells)}", path=path, line=lineno)
        try:
            seq, worker = int(cells[0]), int(cells[1])
        except ValueError:
            raise ParseError("seq and worker must be integers", path=path, line=lineno) from None
        values = []
        for col, cell in enumerate(cells[2:], start=3):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"not a number: {cell!r}", path=path, line=lineno, column=col) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {cell!r}", path=path, line=lineno, column=col)
            values.append(v)
        try:
            record = EvaluationRecord(
                config=dict(zip(names, values[2:])),
                objective=values[1],
                elapsed_seconds=values[0],
                sequence_index=seq,
                worker_id=worker,
            )
            db.append(record)
        except (InvalidInputError, IntegrityError) as exc:
            raise ParseError(str(exc), path=path, line=lineno) from None
    return db


def running_best(db: PerformanceDatabase) -> list[tuple[int, float]]:
    """Prefix maxima of the objective, one pair per record."""
    if not len(db):
        raise InvalidInputError("running_best of an empty database")
    out, best = [], -math.inf
    for r in db.records:
        best = max(best, r.objective)
        out.append((r.sequence_index, best))
    return out


def best_record(db: PerformanceDatabase) -> EvaluationRecord:
    """Highest objective; ties go to the lowest sequence index."""
    if not len(db):
        raise InvalidInputError("best_record of an empty database")
    best = db.records[0]
    for r in db.records[1:]:
        if r.objective > best.objective or (
                r.objective == best.objective and r.sequence_index < best.sequence_index):
            best = r
    return best
