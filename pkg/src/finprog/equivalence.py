"""Rule-based program equivalence used for program accuracy.

The rules are deliberately conservative: operands are compared by numeric
value (constants included), ``add``/``multiply`` operands are sorted,
steps that do not contribute to the final result are dropped, and the
surviving steps are re-emitted in a canonical depth-first order.  Two
programs that canonicalize identically always execute to the same value.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dsl import ConstantRef, NumberLiteral, Operator, Program, RowRef, Step, StepRef
from .executor import normalize_header

__all__ = ["CanonicalProgram", "canonicalize", "prog_equal"]

# Canonical operands:
#   ("num", value, percent) | ("ref", index) | ("row", normalized name)
# Canonical steps: (op name, operand tuple)


@dataclass(frozen=True)
class CanonicalProgram:
    steps: tuple[tuple[str, tuple[tuple, ...]], ...]

    def __str__(self) -> str:
        def fmt(o):
            if o[0] == "num":
                return f"{o[1]!r}{'%' if o[2] else ''}"
            if o[0] == "ref":
                return f"#{o[1]}"
            return o[1]

        return ", ".join(f"{op}({', '.join(fmt(o) for o in args)})" for op, args in self.steps)


def _literal_key(operand) -> tuple:
    if isinstance(operand, NumberLiteral):
        # 0.0 and -0.0 are equal values; pin the sign so keys stay hashable-equal.
        return ("num", operand.value + 0.0, operand.percent)
    if isinstance(operand, ConstantRef):
        return ("num", operand.value + 0.0, False)
    if isinstance(operand, RowRef):
        return ("row", normalize_header(operand.name))
    raise TypeError(operand)


def canonicalize(program: Program | CanonicalProgram, eliminate_dead_steps: bool = True) -> CanonicalProgram:
    """Normalize ``program`` so that rule-equivalent programs compare equal.

    Canonicalization is idempotent.  With ``eliminate_dead_steps=False``
    unused intermediate steps are kept as additional roots.
    """
    if isinstance(program, CanonicalProgram):
        program = _to_program(program)
    if not program.steps:
        return CanonicalProgram(())
    n = len(program.steps)

    # Structural key of each step's expression tree; StepRefs are expanded so
    # the key does not depend on step numbering.
    tree_keys: dict[int, tuple] = {}

    def operand_tree(o):
        if isinstance(o, StepRef):
            return ("tree", tree_keys[o.index])
        return _literal_key(o)

    for i, step in enumerate(program.steps):
        args = [operand_tree(o) for o in step.operands]
        if step.op.is_commutative:
            args.sort(key=_sort_key)
        tree_keys[i] = (step.op.value, tuple(args))

    out: list[tuple[str, tuple]] = []
    emitted: dict[tuple, int] = {}

    def emit(key: tuple) -> int:
        if key in emitted:
            return emitted[key]
        op, args = key
        canon_args = []
        for a in args:
            if a[0] == "tree":
                canon_args.append(("ref", emit(a[1])))
            else:
                canon_args.append(a)
        out.append((op, tuple(canon_args)))
        emitted[key] = len(out) - 1
        return emitted[key]

    if eliminate_dead_steps:
        roots = [n - 1]
    else:
        referenced = {o.index for s in program.steps for o in s.operands if isinstance(o, StepRef)}
        roots = [i for i in range(n) if i not in referenced]
    for r in roots:
        emit(tree_keys[r])
    return CanonicalProgram(tuple(out))


def _sort_key(arg: tuple):
    if arg[0] == "num":
        return (0, arg[1], arg[2], "")
    if arg[0] == "row":
        return (1, 0.0, False, arg[1])
    return (2, 0.0, False, repr(arg))


def _to_program(canon: CanonicalProgram) -> Program:
    steps = []
    for op, args in canon.steps:
        operands = []
        for a in args:
            if a[0] == "ref":
                operands.append(StepRef(a[1]))
            elif a[0] == "row":
                operands.append(RowRef(a[1]))
            else:
                operands.append(NumberLiteral(a[1], a[2], f"{a[1]!r}{'%' if a[2] else ''}"))
        steps.append(Step(Operator(op), tuple(operands)))
    return Program(tuple(steps))


def prog_equal(a: Program, b: Program, eliminate_dead_steps: bool = True) -> bool:
    return canonicalize(a, eliminate_dead_steps) == canonicalize(b, eliminate_dead_steps)
