"""Program execution against an optional table context."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

from .dsl import ConstantRef, NumberLiteral, Operator, Program, RowRef, StepRef, parse_program

__all__ = [
    "NumericToken",
    "TableContext",
    "Number",
    "YesNo",
    "ExecValue",
    "ExecutionError",
    "DivisionByZero",
    "RowNotFound",
    "EmptyNumericRow",
    "YesNoUsedAsNumber",
    "NonFiniteResult",
    "NotANumber",
    "DuplicateRowHeader",
    "parse_numeric",
    "try_parse_numeric",
    "normalize_header",
    "eval_program",
]


class NotANumber(ValueError):
    pass


class DuplicateRowHeader(ValueError):
    pass


class ExecutionError(ArithmeticError):
    pass


class DivisionByZero(ExecutionError):
    pass


class RowNotFound(ExecutionError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"row {name!r} not found in table")


class EmptyNumericRow(ExecutionError):
    pass


class YesNoUsedAsNumber(ExecutionError):
    pass


class NonFiniteResult(ExecutionError):
    pass


@dataclass(frozen=True)
class NumericToken:
    raw: str
    value: float
    percent: bool


_NUMERIC_BODY = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)\Z")


def parse_numeric(raw: str) -> NumericToken:
    """Parse a report-style number such as ``"$1,760"``, ``"14.1%"`` or ``"(7)"``.

    Percentages keep their face value and only set the flag; accounting
    parentheses denote a negative number.
    """
    text = raw.strip()
    if not text:
        raise NotANumber(f"not a number: {raw!r}")
    negative = False
    if text.startswith("(") and text.endswith(")"):
        negative = True
        text = text[1:-1].strip()
    percent = text.endswith("%")
    if percent:
        text = text[:-1].strip()
    if text.startswith("-$") or text.startswith("+$"):
        text = text[0] + text[2:]
    text = text.lstrip("$").replace(",", "").strip()
    if not _NUMERIC_BODY.match(text):
        raise NotANumber(f"not a number: {raw!r}")
    value = float(text)
    if negative:
        value = -value
    return NumericToken(raw, value, percent)


def try_parse_numeric(raw: str) -> NumericToken | None:
    try:
        return parse_numeric(raw)
    except NotANumber:
        return None


def normalize_header(text: str) -> str:
    return " ".join(text.split()).lower()


@dataclass(frozen=True)
class TableContext:
    """Data rows of a table keyed by row header.

    ``rows`` holds ``(header, cells)`` pairs where each cell is either a
    :class:`NumericToken` or the raw string of a non-numeric cell.
    """

    rows: tuple[tuple[str, tuple[Union[NumericToken, str], ...]], ...]

    def __post_init__(self):
        seen = set()
        for header, _ in self.rows:
            key = normalize_header(header)
            if key in seen:
                raise DuplicateRowHeader(f"duplicate row header {header!r}")
            seen.add(key)

    @classmethod
    def from_raw(cls, table: Sequence[Sequence[str]], header_row: bool = True,
                 drop_duplicates: bool = False) -> "TableContext":
        """Build from a string matrix whose first column holds row headers.

        With ``drop_duplicates`` the first of several rows sharing a
        header is kept instead of raising :class:`DuplicateRowHeader`.
        """
        body = table[1:] if header_row else table
        rows = []
        seen = set()
        for row in body:
            if not row:
                continue
            key = normalize_header(row[0])
            if key in seen:
                if drop_duplicates:
                    continue
                raise DuplicateRowHeader(f"duplicate row header {row[0]!r}")
            seen.add(key)
            cells = tuple(try_parse_numeric(c) or c for c in row[1:])
            rows.append((row[0], cells))
        return cls(tuple(rows))

    def row(self, name: str) -> tuple[Union[NumericToken, str], ...]:
        key = normalize_header(name)
        for header, cells in self.rows:
            if normalize_header(header) == key:
                return cells
        raise RowNotFound(name)

    def numeric_row(self, name: str) -> list[float]:
        return [c.value for c in self.row(name) if isinstance(c, NumericToken)]


@dataclass(frozen=True)
class Number:
    value: float

    def __str__(self) -> str:
        return repr(self.value)


@dataclass(frozen=True)
class YesNo:
    value: bool

    def __str__(self) -> str:
        return "yes" if self.value else "no"


ExecValue = Union[Number, YesNo]


def _operand_value(operand, results: list[ExecValue]) -> float:
    if isinstance(operand, (NumberLiteral, ConstantRef)):
        return operand.value
    if isinstance(operand, StepRef):
        value = results[operand.index]
        if isinstance(value, YesNo):
            raise YesNoUsedAsNumber(f"yes/no result of step #{operand.index} used as a number")
        return value.value
    raise ExecutionError(f"operand {operand} cannot be used arithmetically")


def _table_values(operand, ctx: TableContext | None) -> list[float]:
    if not isinstance(operand, RowRef):
        raise ExecutionError(f"table operation expects a row reference, got {operand}")
    if ctx is None:
        raise RowNotFound(operand.name)
    values = ctx.numeric_row(operand.name)
    if not values:
        raise EmptyNumericRow(f"row {operand.name!r} has no numeric cells")
    return values


def _apply(op: Operator, operands, results, ctx) -> ExecValue:
    if op.is_table:
        values = _table_values(operands[0], ctx)
        if op is Operator.TABLE_SUM:
            return Number(math.fsum(values))
        if op is Operator.TABLE_AVERAGE:
            return Number(math.fsum(values) / len(values))
        if op is Operator.TABLE_MAX:
            return Number(max(values))
        return Number(min(values))
    a, b = (_operand_value(o, results) for o in operands)
    if op is Operator.GREATER:
        return YesNo(a > b)
    if op is Operator.ADD:
        return Number(a + b)
    if op is Operator.SUBTRACT:
        return Number(a - b)
    if op is Operator.MULTIPLY:
        return Number(a * b)
    if op is Operator.DIVIDE:
        if b == 0:
            raise DivisionByZero(f"division of {a!r} by zero")
        return Number(a / b)
    try:
        result = a ** b
    except (OverflowError, ZeroDivisionError) as exc:
        raise NonFiniteResult(f"exp({a!r}, {b!r}): {exc}") from None
    if isinstance(result, complex):
        raise NonFiniteResult(f"exp({a!r}, {b!r}) is not real")
    return Number(result)


def eval_program(program: Program | str, ctx: TableContext | None = None) -> ExecValue:
    """Execute the steps in order and return the value of the last one."""
    if isinstance(program, str):
        program = parse_program(program)
    results: list[ExecValue] = []
    for step in program.steps:
        value = _apply(step.op, step.operands, results, ctx)
        if isinstance(value, Number) and not math.isfinite(value.value):
            raise NonFiniteResult(f"{step} produced {value.value}")
        results.append(value)
    if not results:
        raise ExecutionError("empty program")
    return results[-1]
