"""Solution-program DSL: parsing, rendering, flattening and decomposition.

Programs are stored flattened: a tuple of :class:`Step` objects where an
operand ``#n`` (:class:`StepRef`) points at the result of step ``n``.  The
nested form ``divide(1760, add(279, 320))`` is a derived view produced by
:func:`render_program`.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Mapping, Union

__all__ = [
    "Operator",
    "NumberLiteral",
    "ConstantRef",
    "StepRef",
    "RowRef",
    "Operand",
    "Step",
    "Program",
    "DEFAULT_CONSTANTS",
    "MAX_FINQA_STEPS",
    "ProgramError",
    "ProgramSyntaxError",
    "UnknownOperator",
    "ArityMismatch",
    "UnresolvedStepRef",
    "MalformedToken",
    "NestedFormUnavailable",
    "parse_program",
    "render_program",
    "extract_variable_subprograms",
    "validate_program",
]


class Operator(str, enum.Enum):
    ADD = "add"
    SUBTRACT = "subtract"
    MULTIPLY = "multiply"
    DIVIDE = "divide"
    EXP = "exp"
    GREATER = "greater"
    TABLE_SUM = "table_sum"
    TABLE_AVERAGE = "table_average"
    TABLE_MAX = "table_max"
    TABLE_MIN = "table_min"

    @property
    def is_table(self) -> bool:
        return self.value.startswith("table_")

    @property
    def arity(self) -> int:
        return 1 if self.is_table else 2

    @property
    def is_commutative(self) -> bool:
        return self in (Operator.ADD, Operator.MULTIPLY)

    @property
    def index(self) -> int:
        """Position in the fixed label space used by operator classification."""
        return _OPERATOR_ORDER.index(self)

    def __str__(self) -> str:
        return self.value


_OPERATOR_ORDER = tuple(Operator)
_OPERATORS_BY_NAME = {op.value: op for op in Operator}

# Common FinQA constants.  Any ``const_<digits>`` / ``const_m<digits>`` token
# follows the same convention; entries here (or passed to parse_program)
# take precedence.
DEFAULT_CONSTANTS: dict[str, float] = {
    "const_1": 1.0,
    "const_2": 2.0,
    "const_10": 10.0,
    "const_100": 100.0,
    "const_1000": 1000.0,
    "const_1000000": 1000000.0,
    "const_1000000000": 1000000000.0,
    "const_m1": -1.0,
}

MAX_FINQA_STEPS = 6


@dataclass(frozen=True)
class NumberLiteral:
    value: float
    percent: bool
    raw: str

    def __str__(self) -> str:
        return self.raw


@dataclass(frozen=True)
class ConstantRef:
    token: str
    value: float

    def __str__(self) -> str:
        return self.token


@dataclass(frozen=True)
class StepRef:
    index: int

    def __str__(self) -> str:
        return f"#{self.index}"


@dataclass(frozen=True)
class RowRef:
    name: str

    def __str__(self) -> str:
        return self.name


Operand = Union[NumberLiteral, ConstantRef, StepRef, RowRef]


@dataclass(frozen=True)
class Step:
    op: Operator
    operands: tuple[Operand, ...]

    def __post_init__(self):
        if len(self.operands) != self.op.arity:
            raise ArityMismatch(
                f"{self.op.value} takes {self.op.arity} operand(s), got {len(self.operands)}",
                token=self.op.value,
            )

    def __str__(self) -> str:
        return f"{self.op.value}({', '.join(str(o) for o in self.operands)})"


@dataclass(frozen=True)
class Program:
    steps: tuple[Step, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def __str__(self) -> str:
        return render_program(self, "flattened")

    def reference_counts(self) -> list[int]:
        counts = [0] * len(self.steps)
        for step in self.steps:
            for operand in step.operands:
                if isinstance(operand, StepRef):
                    counts[operand.index] += 1
        return counts


class ProgramError(ValueError):
    pass


class ProgramSyntaxError(ProgramError):
    """Parse failure naming the offending token and its character offset."""

    def __init__(self, message: str, token: str | None = None, offset: int | None = None):
        self.token = token
        self.offset = offset
        where = ""
        if token is not None:
            where += f" token {token!r}"
        if offset is not None:
            where += f" at offset {offset}"
        super().__init__(message + (f" ({where.strip()})" if where else ""))


class UnknownOperator(ProgramSyntaxError):
    pass


class ArityMismatch(ProgramSyntaxError):
    pass


class UnresolvedStepRef(ProgramSyntaxError):
    pass


class MalformedToken(ProgramSyntaxError):
    pass


class NestedFormUnavailable(ProgramError):
    pass


_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_STEPREF_RE = re.compile(r"#(\d+)\Z")
_CONST_RE = re.compile(r"const_(m?)(\d+(?:\.\d+)?)\Z")
_NUMBER_RE = re.compile(r"[+-]?\$?(?:\d+(?:\.\d*)?|\.\d+)%?\Z")


def _constant(token: str, constants: Mapping[str, float]) -> ConstantRef | None:
    if token in constants:
        return ConstantRef(token, float(constants[token]))
    m = _CONST_RE.match(token)
    if m is None:
        return None
    value = float(m.group(2))
    return ConstantRef(token, -value if m.group(1) else value)


def _number(token: str) -> NumberLiteral | None:
    if not _NUMBER_RE.match(token):
        return None
    percent = token.endswith("%")
    body = token.rstrip("%").replace("$", "")
    return NumberLiteral(float(body), percent, token)


class _Parser:
    def __init__(self, text: str, constants: Mapping[str, float]):
        self.text = text
        self.pos = 0
        self.constants = constants
        self.steps: list[Step] = []

    def error(self, cls, message, token=None, offset=None):
        return cls(message, token=token, offset=self.pos if offset is None else offset)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            found = self.text[self.pos] if self.pos < len(self.text) else "<end>"
            raise self.error(MalformedToken, f"expected {ch!r}", token=found)
        self.pos += 1

    def parse(self) -> Program:
        if not self.text.strip():
            raise self.error(MalformedToken, "empty program", token="", offset=0)
        while True:
            self.call()
            if self.peek() == ",":
                self.pos += 1
                continue
            if self.peek():
                raise self.error(MalformedToken, "trailing input", token=self.text[self.pos:])
            break
        return Program(tuple(self.steps))

    def call(self) -> int:
        """Parse one ``name(args)`` call, append its flattened steps and return its index."""
        self.skip_ws()
        start = self.pos
        m = _NAME_RE.match(self.text, self.pos)
        if m is None:
            token = self._raw_arg_text(start) or self.text[start:start + 1]
            raise self.error(MalformedToken, "expected an operator call", token=token, offset=start)
        name = m.group(0)
        self.pos = m.end()
        op = _OPERATORS_BY_NAME.get(name)
        if op is None:
            raise self.error(UnknownOperator, f"unknown operator {name!r}", token=name, offset=start)
        self.expect("(")
        if op.is_table:
            operands = self.table_args(op, start)
        else:
            operands = self.arith_args(op, start)
        self.expect(")")
        index = len(self.steps)
        for operand, offset in operands:
            if isinstance(operand, StepRef) and operand.index >= index:
                raise self.error(
                    UnresolvedStepRef,
                    f"step reference #{operand.index} used by step {index}",
                    token=str(operand),
                    offset=offset,
                )
        self.steps.append(Step(op, tuple(o for o, _ in operands)))
        return index

    def arith_args(self, op: Operator, start: int):
        operands = []
        while True:
            self.skip_ws()
            offset = self.pos
            m = _NAME_RE.match(self.text, self.pos)
            if m is not None and self.text[m.end():].lstrip().startswith("("):
                operands.append((StepRef(self.call()), offset))
            else:
                token = self._raw_arg_text(offset).strip()
                self.pos = offset + len(self._raw_arg_text(offset))
                operands.append((self.atom(token, offset), offset))
            if self.peek() == ",":
                self.pos += 1
                continue
            break
        if len(operands) != op.arity:
            raise self.error(
                ArityMismatch,
                f"{op.value} takes {op.arity} operands, got {len(operands)}",
                token=op.value,
                offset=start,
            )
        return operands

    def table_args(self, op: Operator, start: int):
        args = []
        while True:
            self.skip_ws()
            offset = self.pos
            raw = self._raw_arg_text(offset, allow_parens=True)
            self.pos = offset + len(raw)
            args.append((" ".join(raw.split()), offset))
            if self.peek() == ",":
                self.pos += 1
                continue
            break
        # FinQA writes table operations as ``table_sum(row, none)``.
        if len(args) == 2 and args[1][0].lower() == "none":
            args = args[:1]
        if len(args) != 1:
            raise self.error(
                ArityMismatch,
                f"{op.value} takes a single row reference, got {len(args)} operands",
                token=op.value,
                offset=start,
            )
        name, offset = args[0]
        m = _NAME_RE.match(name)
        if (
            not name
            or name.startswith("#")
            or (m is not None and m.group(0) in _OPERATORS_BY_NAME and name[m.end():].lstrip().startswith("("))
        ):
            raise self.error(MalformedToken, f"{op.value} expects a row name", token=name, offset=offset)
        return [(RowRef(name), offset)]

    def _raw_arg_text(self, offset: int, allow_parens: bool = False) -> str:
        depth = 0
        i = offset
        while i < len(self.text):
            ch = self.text[i]
            if ch == "(":
                if not allow_parens:
                    break
                depth += 1
            elif ch == ")":
                if depth == 0:
                    break
                depth -= 1
            elif ch == "," and depth == 0:
                break
            i += 1
        return self.text[offset:i]

    def atom(self, token: str, offset: int) -> Operand:
        if not token:
            raise self.error(MalformedToken, "empty operand", token=token, offset=offset)
        m = _STEPREF_RE.match(token)
        if m:
            return StepRef(int(m.group(1)))
        if token.startswith("const_"):
            const = _constant(token, self.constants)
            if const is None:
                raise self.error(MalformedToken, "unrecognised constant", token=token, offset=offset)
            return const
        number = _number(token)
        if number is None:
            raise self.error(MalformedToken, "operand is not a number, constant or step reference",
                             token=token, offset=offset)
        return number


def parse_program(text: str, constants: Mapping[str, float] | None = None) -> Program:
    """Parse a nested or flattened program into its flattened form.

    Nested calls are flattened depth-first, left to right, so inner calls
    receive lower step indices::

        >>> str(parse_program("divide(1760, add(279,320))"))
        'add(279, 320), divide(1760, #0)'
    """
    table = dict(DEFAULT_CONSTANTS)
    if constants:
        table.update(constants)
    return _Parser(text, table).parse()


def _render_nested(program: Program, index: int) -> str:
    step = program.steps[index]
    parts = []
    for operand in step.operands:
        if isinstance(operand, StepRef):
            parts.append(_render_nested(program, operand.index))
        else:
            parts.append(str(operand))
    return f"{step.op.value}({', '.join(parts)})"


def render_program(program: Program, form: str = "nested") -> str:
    """Render ``program`` as a string in ``"nested"`` or ``"flattened"`` form.

    A nested rendering needs every intermediate result to be used at most
    once.  Steps whose result is never used become extra top-level
    expressions separated by commas.
    """
    if form == "flattened":
        return ", ".join(str(step) for step in program.steps)
    if form != "nested":
        raise ValueError(f"unknown form {form!r}")
    counts = program.reference_counts()
    for i, c in enumerate(counts):
        if c > 1:
            raise NestedFormUnavailable(f"result of step #{i} is referenced {c} times")
    roots = [i for i, c in enumerate(counts) if c == 0]
    return ", ".join(_render_nested(program, i) for i in roots)


def extract_variable_subprograms(program: Program) -> list[Step]:
    """Steps whose operands are all number literals taken from the evidence."""
    return [
        step for step in program.steps
        if all(isinstance(o, NumberLiteral) for o in step.operands)
    ]


def validate_program(program: Program) -> list[str]:
    """Check structural invariants, returning warnings for soft violations."""
    if not program.steps:
        raise ProgramError("program has no steps")
    for i, step in enumerate(program.steps):
        for operand in step.operands:
            if isinstance(operand, StepRef) and operand.index >= i:
                raise UnresolvedStepRef(f"step {i} references #{operand.index}", token=str(operand))
            if step.op.is_table != isinstance(operand, RowRef):
                raise MalformedToken(f"operand {operand} not allowed in {step.op.value}", token=str(operand))
    warnings = []
    if len(program.steps) > MAX_FINQA_STEPS:
        warnings.append(f"program has {len(program.steps)} steps, more than {MAX_FINQA_STEPS}")
    return warnings
