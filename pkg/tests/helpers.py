"""Random program generators and synthetic examples shared by the tests."""

from __future__ import annotations

import random

from finprog.corpus import EvidenceItem, HybridExample
from finprog.dsl import (
    NumberLiteral,
    Operator,
    Program,
    Step,
    StepRef,
    parse_program,
)
from finprog.executor import TableContext

ARITH = [op for op in Operator if not op.is_table]
TABLE = [op for op in Operator if op.is_table]
ROW_NAMES = ["net revenue", "total units", "cash flow 2017", "interest expense (net)", "other"]


def random_number_text(rng: random.Random) -> str:
    kind = rng.randrange(6)
    if kind == 0:
        return str(rng.randint(0, 5000))
    if kind == 1:
        return f"{rng.uniform(0, 1000):.{rng.randint(1, 3)}f}"
    if kind == 2:
        return f"-{rng.randint(1, 999)}"
    if kind == 3:
        return f"{rng.uniform(0, 100):.1f}%"
    if kind == 4:
        return f"${rng.randint(1, 9999)}"
    return rng.choice(["const_100", "const_1000", "const_m1", "const_2", "const_1000000"])


def random_nested_text(rng: random.Random, depth: int) -> str:
    """A nested program of at most ``depth`` levels drawing on all ten operators."""
    op = rng.choice(list(Operator))
    if op.is_table:
        return f"{op.value}({rng.choice(ROW_NAMES)})"
    args = []
    for _ in range(2):
        if depth > 1 and rng.random() < 0.45:
            args.append(random_nested_text(rng, depth - 1))
        else:
            args.append(random_number_text(rng))
    sep = rng.choice([",", ", ", " , "])
    return f"{op.value}({sep.join(args)})"


def random_flat_program(rng: random.Random, n_steps: int, ops=ARITH) -> Program:
    """Flattened program where any operand may reference any earlier step."""
    steps = []
    for i in range(n_steps):
        op = rng.choice(ops)
        operands = []
        for _ in range(op.arity):
            if i > 0 and rng.random() < 0.5:
                operands.append(StepRef(rng.randrange(i)))
            else:
                raw = str(rng.randint(1, 99))
                operands.append(NumberLiteral(float(raw), False, raw))
        steps.append(Step(op, tuple(operands)))
    return Program(tuple(steps))


def random_value_program(rng: random.Random, n_steps: int) -> Program:
    """Constant-free arithmetic program with nonzero literals and a single live output."""
    ops = [Operator.ADD, Operator.SUBTRACT, Operator.MULTIPLY, Operator.DIVIDE]
    steps = []
    unused: list[int] = []
    for i in range(n_steps):
        op = rng.choice(ops)
        operands = []
        for _ in range(2):
            if unused and rng.random() < 0.6:
                j = unused.pop(rng.randrange(len(unused)))
                operands.append(StepRef(j))
            elif i > 0 and rng.random() < 0.15:
                operands.append(StepRef(rng.randrange(i)))
            else:
                value = round(rng.uniform(0.5, 500), rng.randint(0, 2))
                raw = repr(value) if value != int(value) else str(int(value))
                operands.append(NumberLiteral(value, False, raw))
        steps.append(Step(op, tuple(operands)))
        unused.append(i)
    return Program(tuple(steps))


def _retext(operand: NumberLiteral, rng: random.Random) -> NumberLiteral:
    value = operand.value
    forms = [operand.raw]
    if value == int(value) and value >= 0:
        forms += [f"{int(value)}.0", f"${int(value)}", f"{int(value)}.00"]
    return NumberLiteral(value, operand.percent, rng.choice(forms))


def equivalent_shuffle(program: Program, rng: random.Random) -> Program:
    """Rewrite ``program`` with transformations the equivalence rules must absorb.

    Swaps add/multiply operands, rewrites literal spellings, inserts unused
    steps and re-numbers steps in a random topological order.
    """
    steps = list(program.steps)
    # commutative swaps and literal spellings
    new_steps = []
    for step in steps:
        operands = list(step.operands)
        if step.op.is_commutative and rng.random() < 0.5:
            operands.reverse()
        operands = [_retext(o, rng) if isinstance(o, NumberLiteral) else o for o in operands]
        new_steps.append(Step(step.op, tuple(operands)))
    steps = new_steps

    # dead steps appended before the final one
    final = len(steps) - 1
    for _ in range(rng.randint(0, 2)):
        dead = Step(rng.choice(ARITH), (NumberLiteral(3.0, False, "3"), NumberLiteral(7.0, False, "7")))
        # every existing reference points below ``final``, so nothing renumbers
        steps.insert(final, dead)
        final += 1

    # random topological order, final step kept last
    n = len(steps)
    deps = {i: {o.index for o in steps[i].operands if isinstance(o, StepRef)} for i in range(n)}
    placed: list[int] = []
    remaining = set(range(n - 1))
    while remaining:
        ready = sorted(i for i in remaining if deps[i] <= set(placed))
        pick = rng.choice(ready)
        placed.append(pick)
        remaining.remove(pick)
    placed.append(n - 1)
    new_index = {old: new for new, old in enumerate(placed)}
    out = []
    for old in placed:
        step = steps[old]
        operands = tuple(StepRef(new_index[o.index]) if isinstance(o, StepRef) else o for o in step.operands)
        out.append(Step(step.op, operands))
    return Program(tuple(out))


def synthetic_example(rng: random.Random, n_gold: int, n_distractors: int, ex_id: str = "syn") -> HybridExample:
    """Text-only example with ``n_gold`` gold and ``n_distractors`` irrelevant sentences."""
    total = n_gold + n_distractors
    gold_idx = set(rng.sample(range(total), n_gold))
    candidates = tuple(
        EvidenceItem(f"text_{i}", f"sentence {i} reports value {rng.randint(1, 999)} .", "text",
                     is_gold=i in gold_idx)
        for i in range(total)
    )
    return HybridExample(
        id=ex_id,
        question="what is the change in value ?",
        candidates=candidates,
        program=parse_program("add(1, 2)"),
        exe_ans=3.0,
        table=TableContext(()),
    )



def masked_runs(tokens, mask: str = "[MASK]") -> list[tuple[int, int]]:
    """Maximal ``[start, end)`` runs of mask sentinels."""
    runs, i = [], 0
    while i < len(tokens):
        if tokens[i] == mask:
            j = i
            while j < len(tokens) and tokens[j] == mask:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def segments_into_repeated_phrases(norm: list[str], a: int, b: int) -> bool:
    """Whether ``norm[a:b]`` splits into pieces that each occur at least twice in ``norm``.

    Adjacent masks of different phrases merge into one run, so a run is legal
    when some segmentation of it consists only of repeated phrases.
    """
    def count(i, j):
        piece = norm[i:j]
        return sum(norm[s:s + len(piece)] == piece for s in range(len(norm) - len(piece) + 1))

    ok = [False] * (b - a + 1)
    ok[0] = True
    for end in range(1, b - a + 1):
        ok[end] = any(ok[start] and count(a + start, a + end) >= 2 for start in range(end))
    return ok[-1]


VOCAB_WORDS = ["revenue", "units", "cash", "net", "total", "2017", "279", "320", "the", "of", "is", "grew"]


def random_sentence(rng: random.Random, n: int | None = None) -> str:
    return " ".join(rng.choices(VOCAB_WORDS, k=n or rng.randint(2, 6)))


def random_rank_pair(rng: random.Random):
    from finprog.pretrain import IntegritySet, RankPair

    def items(k):
        return tuple(EvidenceItem(f"e{i}", random_sentence(rng), "text") for i in range(k))

    return RankPair(IntegritySet(0, items(2), 2), IntegritySet(1, items(2), 1), random_sentence(rng))


def random_operator_example(rng: random.Random, label: Operator | None = None, question: str | None = None):
    from finprog.pretrain import OperandSpan, OperatorExample

    evidence = tuple(EvidenceItem(f"e{i}", random_sentence(rng, 5), "text") for i in range(2))
    spans = tuple(OperandSpan(rng.randrange(2), t, t + 1) for t in rng.sample(range(5), rng.randint(2, 3)))
    return OperatorExample(question if question is not None else random_sentence(rng), evidence, spans,
                           label or rng.choice(list(Operator)))


def random_masked_example(rng: random.Random):
    from finprog.pretrain import MASK, MaskedExample

    tokens = random_sentence(rng, 8).split()
    positions = sorted(rng.sample(range(8), rng.randint(1, 3)))
    targets = tuple((p, tokens[p]) for p in positions)
    for p in positions:
        tokens[p] = MASK
    return MaskedExample("", tuple(tokens), targets)
