import numpy as np
import pytest

from mktune.errors import IntegrityError, InvalidInputError, ParseError
from mktune.perfdb import (
    FAILURE,
    EvaluationRecord,
    PerformanceDatabase,
    best_record,
    load,
    running_best,
    save,
    to_text,
)
from mktune.space import ParameterDef, ParameterSpace, default_space, sample

SPACE = ParameterSpace([ParameterDef("C", 0.1, 100.0, 0.01), ParameterDef("coef0", -15.0, 15.0, 0.01)])


def rec(seq, objective, c=1.0, coef0=0.0, worker=0, elapsed=0.5):
    return EvaluationRecord({"C": c, "coef0": coef0}, objective, elapsed, seq, worker)


def db_of(objectives):
    return PerformanceDatabase(SPACE, [rec(i, o) for i, o in enumerate(objectives)])


def test_append_and_index_regression():
    db = PerformanceDatabase(SPACE)
    db.append(rec(0, 0.5))
    assert len(db) == 1
    with pytest.raises(IntegrityError):
        db.append(rec(0, 0.6))


def test_append_rejects_foreign_configuration():
    db = PerformanceDatabase(SPACE)
    with pytest.raises(IntegrityError):
        db.append(EvaluationRecord({"C": 1.0}, 0.5, 0.0, 0))
    with pytest.raises(IntegrityError):
        db.append(rec(0, 0.5, c=0.105))


@pytest.mark.parametrize("objective", [1.5, -0.5, float("nan")])
def test_record_objective_range(objective):
    with pytest.raises(InvalidInputError):
        rec(0, objective)


def test_failure_sentinel():
    r = rec(0, FAILURE)
    assert r.failed and r.loss == 1.0
    assert rec(1, 0.8).loss == pytest.approx(0.2)


def test_attached_file_grows_per_append(tmp_path):
    path = tmp_path / "db.csv"
    db = PerformanceDatabase(default_space(), path=path)
    rng = np.random.default_rng(0)
    for i in range(128):
        db.append(EvaluationRecord(sample(default_space(), rng), float(rng.random()), 0.01, i))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# space: ")
    assert lines[1] == "seq,worker,elapsed_s,objective,mixed_ratio,sigmoid_ratio,gaussian_ratio,C,coef0"
    assert len(lines) - 2 == 128
    assert load(path, default_space()) == db


def test_round_trip_three_records(tmp_path):
    db = PerformanceDatabase(SPACE, [rec(0, 0.834, 1.0, 0.0), rec(3, FAILURE, 0.2, -14.99, worker=2),
                                     rec(7, 0.946, 0.37, 0.85, elapsed=12.25)])
    save(db, tmp_path / "x.csv")
    back = load(tmp_path / "x.csv", SPACE)
    assert back == db
    for a, b in zip(db, back):
        assert abs(a.objective - b.objective) <= 1e-12


def test_empty_db_is_header_only(tmp_path):
    save(PerformanceDatabase(SPACE), tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1] == "seq,worker,elapsed_s,objective,C,coef0"
    assert len(load(tmp_path / "e.csv")) == 0


def test_corrupted_objective_names_line(tmp_path):
    path = tmp_path / "c.csv"
    save(db_of([0.5, 0.6, 0.7]), path)
    lines = path.read_text().splitlines()
    cells = lines[3].split(",")
    cells[3] = "zero point six"
    lines[3] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="line 4"):
        load(path)


@pytest.mark.parametrize("mutate", [
    lambda ls: ls[1:],
    lambda ls: [ls[0], "seq,objective,C,coef0"] + ls[2:],
    lambda ls: ls + ["9,0,0.1,0.5,1.0"],
    lambda ls: ls + ["0,0,0.1,0.5,1.0,0.0"],
    lambda ls: ls + ["9,0,0.1,2.0,1.0,0.0"],
])
def test_malformed_files(tmp_path, mutate):
    path = tmp_path / "m.csv"
    save(db_of([0.5]), path)
    path.write_text("\n".join(mutate(path.read_text().splitlines())) + "\n")
    with pytest.raises(ParseError):
        load(path)


def test_fingerprint_mismatch(tmp_path):
    save(db_of([0.5]), tmp_path / "f.csv")
    other = SPACE.replace(C=ParameterDef("C", 0.37, 10.0, 0.001))
    with pytest.raises(IntegrityError):
        load(tmp_path / "f.csv", other)


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load(tmp_path / "none.csv")


def test_text_uses_line_feeds_and_repr_floats():
    text = to_text(db_of([0.1 + 0.2]))
    assert "\r" not in text and text.endswith("\n")
    assert "0.30000000000000004" in text


def test_running_best():
    assert [b for _, b in running_best(db_of([0.5, 0.4, 0.9]))] == [0.5, 0.5, 0.9]
    mono = [0.1, 0.2, 0.3]
    assert [b for _, b in running_best(db_of(mono))] == mono
    series = running_best(db_of([0.7, FAILURE, 0.85, 0.903, 0.6]))
    assert series[-1] == (4, 0.903)
    with pytest.raises(InvalidInputError):
        running_best(PerformanceDatabase(SPACE))


def test_best_record():
    single = db_of([0.4])
    assert best_record(single) is single[0]
    assert best_record(db_of([0.83, 0.946])).objective == 0.946
    tie = PerformanceDatabase(SPACE, [rec(3, 0.9), rec(5, 0.2), rec(7, 0.9)])
    assert best_record(tie).sequence_index == 3
    with pytest.raises(InvalidInputError):
        best_record(PerformanceDatabase(SPACE))
