"""Execution accuracy, program accuracy and retriever recall@k."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Hashable, Sequence, Union

from .dsl import Program, ProgramError, parse_program
from .equivalence import prog_equal
from .executor import ExecutionError, ExecValue, Number, TableContext, YesNo, eval_program

__all__ = [
    "EmptyGold",
    "PredictionRecord",
    "answers_match",
    "execution_accuracy",
    "program_accuracy",
    "recall_at_k",
    "mean_recall_at_k",
    "score_records",
]

DEFAULT_TOLERANCE = 1e-4


class EmptyGold(ValueError):
    pass


@dataclass(frozen=True)
class PredictionRecord:
    """One scored prediction.  ``predicted`` is None when it failed to parse."""

    example_id: str
    predicted: Program | None
    gold_program: Program
    gold_answer: Union[ExecValue, float, bool]
    table: TableContext | None = None

    @classmethod
    def from_text(cls, example_id: str, predicted: str, gold_program: Program | str,
                  gold_answer, table: TableContext | None = None) -> "PredictionRecord":
        try:
            pred = parse_program(predicted)
        except ProgramError:
            pred = None
        if isinstance(gold_program, str):
            gold_program = parse_program(gold_program)
        return cls(example_id, pred, gold_program, gold_answer, table)


def _as_exec_value(value) -> ExecValue:
    if isinstance(value, (Number, YesNo)):
        return value
    if isinstance(value, bool):
        return YesNo(value)
    return Number(float(value))


def answers_match(predicted: ExecValue, gold, tol: float = DEFAULT_TOLERANCE,
                  percent_equivalence: bool = False) -> bool:
    """Relative match ``|p - g| <= tol * max(1, |g|)``; yes/no answers compare exactly.

    With ``percent_equivalence`` a prediction off by a factor of 100 in
    either direction also matches.
    """
    gold = _as_exec_value(gold)
    if isinstance(predicted, YesNo) or isinstance(gold, YesNo):
        return isinstance(predicted, YesNo) and isinstance(gold, YesNo) and predicted.value == gold.value
    g = gold.value
    candidates = [predicted.value]
    if percent_equivalence:
        candidates += [predicted.value * 100.0, predicted.value / 100.0]
    return any(math.isfinite(p) and abs(p - g) <= tol * max(1.0, abs(g)) for p in candidates)


def _exe_correct(rec: PredictionRecord, tol: float, percent_equivalence: bool) -> bool:
    if rec.predicted is None:
        return False
    try:
        value = eval_program(rec.predicted, rec.table)
    except ExecutionError:
        return False
    return answers_match(value, rec.gold_answer, tol, percent_equivalence)


def _prog_correct(rec: PredictionRecord) -> bool:
    return rec.predicted is not None and prog_equal(rec.predicted, rec.gold_program)


def _fraction(flags: Sequence[bool], name: str) -> float:
    if not flags:
        warnings.warn(f"{name} of an empty record set is defined as 0", RuntimeWarning, stacklevel=3)
        return 0.0
    return sum(flags) / len(flags)


def execution_accuracy(records: Sequence[PredictionRecord], tol: float = DEFAULT_TOLERANCE,
                       percent_equivalence: bool = False) -> float:
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    return _fraction([_exe_correct(r, tol, percent_equivalence) for r in records], "execution accuracy")


def program_accuracy(records: Sequence[PredictionRecord]) -> float:
    return _fraction([_prog_correct(r) for r in records], "program accuracy")


def score_records(records: Sequence[PredictionRecord], tol: float = DEFAULT_TOLERANCE,
                  percent_equivalence: bool = False) -> dict:
    """Both accuracies plus the ids of predictions that failed execution matching."""
    exe = [_exe_correct(r, tol, percent_equivalence) for r in records]
    prog = [_prog_correct(r) for r in records]
    return {
        "exe_acc": _fraction(exe, "execution accuracy"),
        "prog_acc": _fraction(prog, "program accuracy"),
        "n": len(records),
        "failures": [r.example_id for r, ok in zip(records, exe) if not ok],
    }


def recall_at_k(scored: Sequence[tuple[Hashable, float]], gold: Sequence[Hashable], k: int) -> float:
    """Share of ``gold`` items among the ``k`` highest-scored candidates.

    Ties keep candidate order (the sort is stable).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    gold = set(gold)
    if not gold:
        raise EmptyGold("recall is undefined without gold evidence")
    ranked = sorted(range(len(scored)), key=lambda i: -scored[i][1])
    top = {scored[i][0] for i in ranked[:k]}
    return len(gold & top) / len(gold)


def mean_recall_at_k(examples: Sequence[tuple[Sequence[tuple[Hashable, float]], Sequence[Hashable]]],
                     k: int) -> float:
    if not examples:
        return 0.0
    return sum(recall_at_k(s, g, k) for s, g in examples) / len(examples)
