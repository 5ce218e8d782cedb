"""Acceptance criteria, one test per criterion.

The terminal summary (see conftest) prints one ACCEPTANCE PASS/FAIL/SKIP
line per test in this module.
"""

import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest

from finprog.corpus import cell_evidence, dataset_stats, example_from_dict, example_from_parts, load_finqa
from finprog.dsl import NumberLiteral, Operator, Program, Step, parse_program, render_program
from finprog.equivalence import prog_equal
from finprog.executor import DivisionByZero, ExecutionError, eval_program
from finprog.gradcheck import numerical_gradient, relative_error
from finprog.keyphrase import TokenGraph, normalize_token, pagerank
from finprog.metrics import PredictionRecord, execution_accuracy, program_accuracy, recall_at_k
from finprog.model import (
    LossHeads,
    TinyEncoder,
    build_vocab,
    evaluate,
    loss_vir,
    loss_vkm,
    loss_vop,
    make_batches,
    train_multitask,
)
from finprog.pretrain import MASK, MaskedExample, gen_vir_pairs, gen_vir_sets, gen_vkm, gen_vop, token_number

from conftest import UNITS_TABLE, finqa_entries, make_units_example
from helpers import (
    VOCAB_WORDS,
    equivalent_shuffle,
    masked_runs,
    random_masked_example,
    random_nested_text,
    random_operator_example,
    random_rank_pair,
    random_value_program,
    segments_into_repeated_phrases,
    synthetic_example,
)


def test_c01_dsl_round_trip_10k_programs():
    rng = random.Random(2024)
    seen_ops = set()
    start = time.perf_counter()
    for _ in range(10_000):
        program = parse_program(random_nested_text(rng, rng.randint(1, 4)))
        seen_ops.update(s.op for s in program)
        for form in ("nested", "flattened"):
            rendered = render_program(program, form)
            reparsed = parse_program(rendered)
            assert reparsed == program
            assert render_program(reparsed, form) == rendered
    elapsed = time.perf_counter() - start
    assert seen_ops == set(Operator)
    assert elapsed < 10.0, f"round trip took {elapsed:.2f}s"


def test_c02_flattening_fidelity():
    nested = "divide(1760, add(279,320))"
    program = parse_program(nested)
    assert render_program(program, "flattened") == "add(279, 320), divide(1760, #0)"
    assert [s.op for s in program] == [Operator.ADD, Operator.DIVIDE]
    flat = parse_program("add(279,320), divide(1760,#0)")
    assert flat == program
    a, b = eval_program(program).value, eval_program(flat).value
    assert a == b and a == 1760 / (279 + 320)


def test_c03_equivalence_soundness_1000_pairs():
    rng = random.Random(11)
    checked = 0
    while checked < 1000:
        p = random_value_program(rng, rng.randint(1, 6))
        q = equivalent_shuffle(p, rng)
        assert prog_equal(p, q)
        try:
            a = eval_program(p).value
        except DivisionByZero:
            continue
        b = eval_program(q).value
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12), (render_program(p, "flattened"),
                                                                 render_program(q, "flattened"))
        checked += 1


def test_c04_vir_combinatorics():
    rng = random.Random(5)
    for k_eff in (1, 2, 3, 4):
        ex = synthetic_example(rng, k_eff + rng.randint(0, 2), k_eff + rng.randint(0, 2), f"k{k_eff}")
        sets = gen_vir_sets(ex, k_eff, seed=1)
        assert len(sets) == k_eff + 1
        assert len(gen_vir_pairs(sets)) == (k_eff + 1) * k_eff // 2
    for i in range(1000):
        n_gold, n_dist = rng.randint(1, 6), rng.randint(1, 6)
        ex = synthetic_example(rng, n_gold, n_dist, f"ex{i}")
        sets = gen_vir_sets(ex, rng.randint(1, 6), seed=i)
        counts = [sum(e.is_gold for e in s.evidence) for s in sets]
        assert counts[0] == n_gold
        assert all(a - b == 1 for a, b in zip(counts, counts[1:]))
        assert counts == [s.gold_count for s in sets]


# Hand-built operator-prediction fixture.  Each entry lists the program, its
# evidence and the (operator, operand values) instances a reader would pick out.
VOP_FIXTURE = [
    dict(program="divide(1760, add(279, 320))", table=UNITS_TABLE, gold=["table_1", "table_2"],
         expected=[("add", (279, 320))]),
    dict(program="subtract(1760, 1500)", pre=["revenue was $1,760 in 2017 and $1,500 in 2016 ."],
         gold=["text_0"], expected=[("subtract", (1760, 1500))]),
    dict(program="divide(subtract(1760, 1500), 1500)", pre=["revenue was $1,760 in 2017 and $1,500 in 2016 ."],
         gold=["text_0"], expected=[("subtract", (1760, 1500))]),
    dict(program="multiply(12.5%, 400)", pre=["the rate was 12.5% on a base of 400 ."],
         gold=["text_0"], expected=[("multiply", (12.5, 400))]),
    dict(program="table_average(revenue)", table=[["", "2017", "2016", "2015"], ["revenue", "10", "20", "30"]],
         gold=["table_1"], expected=[("table_average", (10, 20, 30))]),
    dict(program="table_sum(costs, none)", table=[["", "2017", "2016", "2015"], ["costs", "(5)", "15", "n/a"]],
         gold=["table_1"], expected=[("table_sum", (-5, 15))]),
    dict(program="add(const_100, 5)", pre=["an increase of 5 points ."], gold=["text_0"], expected=[]),
    dict(program="add(7, 9)", pre=["only 7 is mentioned ."], gold=["text_0"], expected=[]),
    dict(program="greater(450, 300)", pre=["sales of 450 units beat the 300 unit target ."],
         gold=["text_0"], expected=[("greater", (450, 300))]),
    dict(program="exp(1.05, 3)", pre=["growth of 1.05 per year over 3 years ."],
         gold=["text_0"], expected=[("exp", (1.05, 3))]),
    dict(program="divide(add(100, 200), subtract(50, 25))",
         pre=["sales were 100 and 200 .", "costs were 50 and 25 ."], gold=["text_0", "text_1"],
         expected=[("add", (100, 200)), ("subtract", (50, 25))]),
    dict(program="subtract(400, 250)", pre=["400 units were sold last year .", "sales were 400 and 250 ."],
         gold=["text_1"], expected=[("subtract", (400, 250))]),
    dict(program="table_max(net income)",
         table=[["", "2017", "2016", "2015"], ["net income", "$1,200", "$1,350", "$990"]],
         gold=["table_1"], expected=[("table_max", (1200, 1350, 990))]),
    dict(program="table_min(debt)", table=[["", "2017", "2016"], ["debt", "5", "n/a"]],
         gold=["table_1"], expected=[]),
    dict(program="add(7, 7)", pre=["7 plus 7 ."], gold=["text_0"], expected=[("add", (7, 7))]),
    dict(program="subtract(-20, 30)", pre=["a change of -20 versus 30 ."], gold=["text_0"],
         expected=[("subtract", (-20, 30))]),
    dict(program="subtract(14.1%, 12.0%)", table=[["", "2017", "2016"], ["margin", "14.1%", "12.0%"]],
         gold=["table_1"], expected=[("subtract", (14.1, 12.0))]),
    dict(program="add(35, 15)", pre=["we had 15 and the total was 35."], gold=["text_0"],
         expected=[("add", (35, 15))]),
    dict(program="multiply(1234567, 2)", pre=["1,234,567 shares grew by a factor of 2 ."], gold=["text_0"],
         expected=[("multiply", (1234567, 2))]),
    dict(program="table_sum(revenue)", pre=["revenue is discussed below ."],
         table=[["", "2017", "2016"], ["revenue", "3", "4"]], gold=["text_0"], expected=[]),
]


def test_c05_vop_extraction():
    extracted, oracle = [], []
    for i, case in enumerate(VOP_FIXTURE):
        ex = example_from_parts(f"vop-{i:02d}", "what is the result ?", case["program"],
                                pre_text=case.get("pre", ()), table=case.get("table", ()),
                                gold_ids=case["gold"])
        values_by_step = {}
        for step in ex.program:
            if all(isinstance(o, NumberLiteral) for o in step.operands):
                values_by_step.setdefault(step.op, []).append(tuple(o.value for o in step.operands))
        for exm in gen_vop(ex):
            values = tuple(token_number(exm.span_text(s)).value for s in exm.spans)
            assert len(values) >= 2
            if not exm.label.is_table:
                assert values in values_by_step[exm.label]
            else:
                (row,) = {s.operands[0].name for s in ex.program if s.op is exm.label}
                assert values == tuple(ex.table.numeric_row(row))
            tokens = exm.sequence_tokens()
            assert [token_number(tokens[p]).value for p in exm.sequence_positions()] == list(values)
            extracted.append((i, exm.label.value, values))
        oracle.extend((i, label, tuple(float(v) for v in vals)) for label, vals in case["expected"])
    assert extracted == oracle


def _vkm_examples():
    examples = [make_units_example()]
    examples += [example_from_dict(e, i) for i, e in enumerate(finqa_entries()[:4])]
    rng = random.Random(9)
    words = ["net", "sales", "growth", "margin", "units", "total", "the", "of", "cash", "revenue"]
    for i in range(200):
        pre = [" ".join(rng.choices(words, k=rng.randint(3, 9))) + " 12 ." for _ in range(3)]
        examples.append(example_from_parts(f"gen-{i}", " ".join(rng.choices(words, k=4)) + " ?", "add(12, 12)",
                                           pre_text=pre, gold_ids=rng.sample(["text_0", "text_1", "text_2"], 2)))
    return examples


def test_c06_vkm_legality():
    masked_spans = 0
    for ex in _vkm_examples():
        for seed in (0, 1):
            out = gen_vkm(ex, seed)
            if not out:
                continue
            (m,) = out
            source = " ".join([ex.question, *cell_evidence(ex)]).split()
            norm = [normalize_token(t) for t in source]
            assert len(m.tokens) == len(source)
            assert all(t == MASK or t == s for t, s in zip(m.tokens, source))
            assert sorted(m.mask_positions) == [i for i, t in enumerate(m.tokens) if t == MASK]
            for a, b in masked_runs(m.tokens):
                assert segments_into_repeated_phrases(norm, a, b), (ex.id, source[a:b])
                masked_spans += 1
    assert masked_spans > 0

    units = make_units_example()
    assert "units" not in units.question.lower()
    for seed in range(20):
        (m,) = gen_vkm(units, seed)
        source = " ".join([units.question, *cell_evidence(units)]).split()
        positions = [i for i, t in enumerate(source) if t == "Units"]
        assert len(positions) == 2
        assert sum(m.tokens[p] == MASK for p in positions) == 1


def test_c07_loss_anchor_values():
    rng = random.Random(0)
    vocab = build_vocab(VOCAB_WORDS)
    enc = TinyEncoder(vocab, d=6, seed=3)
    zero = LossHeads.zeros(6, len(vocab))
    assert abs(loss_vir(random_rank_pair(rng), enc, zero).loss - math.log(2)) <= 1e-9
    assert abs(loss_vop(random_operator_example(rng), enc, zero).loss - math.log(10)) <= 1e-9
    vocab100 = build_vocab([f"tok{i}" for i in range(98)])
    assert len(vocab100) == 100
    enc100 = TinyEncoder(vocab100, d=6, seed=3)
    exm = MaskedExample("", ("tok1", MASK, "tok5", MASK), ((1, "tok2"), (3, "tok7")))
    assert abs(loss_vkm(exm, enc100, LossHeads.zeros(6, 100)).loss - math.log(100)) <= 1e-9


def test_c08_gradient_checks():
    rng = random.Random(42)
    vocab = build_vocab(VOCAB_WORDS)
    start = time.perf_counter()
    worst = {}
    for name, loss_fn, make in (("vir", loss_vir, random_rank_pair),
                                ("vop", loss_vop, random_operator_example),
                                ("vkm", loss_vkm, random_masked_example)):
        errors = []
        for draw in range(100):
            enc = TinyEncoder(vocab, d=4, seed=draw)
            heads = LossHeads(4, len(vocab), seed=draw)
            inst = make(rng)
            res = loss_fn(inst, enc, heads)
            num_e = numerical_gradient(lambda: loss_fn(inst, enc, heads).loss, enc.params)
            num_h = numerical_gradient(lambda: loss_fn(inst, enc, heads).loss, heads.params)
            errors.append(relative_error(np.concatenate([res.grad_encoder, res.grad_heads]),
                                         np.concatenate([num_e, num_h])))
        worst[name] = max(errors)
    elapsed = time.perf_counter() - start
    assert all(e < 1e-4 for e in worst.values()), worst
    assert elapsed < 60.0, f"gradient checks took {elapsed:.1f}s"


def test_c09_multitask_trainer():
    rng = random.Random(1)
    corpora = {
        "vir": [random_rank_pair(rng) for _ in range(7)],
        "vop": [random_operator_example(rng) for _ in range(9)],
        "vkm": [random_masked_example(rng) for _ in range(5)],
    }
    mixed = train_multitask(corpora, batch_size=4, steps=40, lr=0.1, d=8, seed=2)
    batches = {(task, tuple(idx)) for task, idx in make_batches(corpora, 4)}
    for entry in mixed.log:
        assert (entry["task"], tuple(entry["instances"])) in batches

    ops = list(Operator)
    vop = [random_operator_example(rng, label=ops[i % len(ops)]) for i in range(50)]
    first = train_multitask({"vop": vop}, batch_size=5, steps=2000, lr=0.5, d=32, seed=0)
    assert evaluate(first.encoder, first.heads, vop, "vop")["accuracy"] >= 0.95
    second = train_multitask({"vop": vop}, batch_size=5, steps=2000, lr=0.5, d=32, seed=0)
    assert first.log == second.log
    assert np.array_equal(first.encoder.params, second.encoder.params)
    assert np.array_equal(first.heads.params, second.heads.params)


def test_c10_metric_bounds():
    rng = random.Random(8)
    for _ in range(500):
        records = []
        for j in range(rng.randint(1, 10)):
            gold = random_value_program(rng, rng.randint(1, 4))
            try:
                answer = eval_program(gold)
            except ExecutionError:
                continue
            kind = rng.randrange(3)
            if kind == 0:
                pred = equivalent_shuffle(gold, rng)
            elif kind == 1:
                pred = random_value_program(rng, rng.randint(1, 4))
            else:
                # same answer, different program
                pred = Program((Step(Operator.ADD, (NumberLiteral(0.0, False, "0"),
                                                    NumberLiteral(answer.value, False, "x"))),))
            records.append(PredictionRecord(f"p{j}", pred, gold, answer))
        if not records:
            continue
        assert program_accuracy(records) <= execution_accuracy(records)

    for _ in range(500):
        n = rng.randint(1, 15)
        scored = [(i, rng.choice([rng.random(), 0.5])) for i in range(n)]
        gold = rng.sample(range(n), rng.randint(1, n))
        values = [recall_at_k(scored, gold, k) for k in range(1, n + 1)]
        assert all(a <= b for a, b in zip(values, values[1:]))


def _finqa_dir() -> Path | None:
    for candidate in (os.environ.get("FINQA_DIR"), Path(__file__).parent / "data" / "finqa"):
        if candidate and Path(candidate, "train.json").exists():
            return Path(candidate)
    return None


def test_c11_finqa_dataset_statistics():
    root = _finqa_dir()
    if root is None:
        pytest.skip("official FinQA files not provided (set FINQA_DIR)")
    sizes = {"train": 6251, "dev": 883, "test": 1147}
    examples = []
    for split, expected in sizes.items():
        loaded = load_finqa(root / f"{split}.json")
        assert len(loaded) == expected, split
        examples.extend(loaded)
    stats = dataset_stats(examples)
    assert abs(stats["mean_operators"] - 1.54) <= 0.02
    assert abs(stats["mean_gold"] - 1.71) <= 0.02
    assert stats["max_operators"] == 6
    assert stats["max_gold"] == 9


def dense_power_iteration(adjacency: np.ndarray, damping: float, iters: int = 10_000) -> np.ndarray:
    n = adjacency.shape[0]
    transition = adjacency / adjacency.sum(axis=0, keepdims=True)
    x = np.full(n, 1.0 / n)
    for _ in range(iters):
        x = (1 - damping) / n + damping * transition @ x
    return x / x.sum()


def test_c12_pagerank_path_graph():
    g = TokenGraph()
    for a, b in (("a", "b"), ("b", "c"), ("c", "d")):
        g.add_edge(a, b)
    scores = pagerank(g, damping=0.85)
    adjacency = np.array([[0, 1, 0, 0], [1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0]], dtype=float)
    oracle = dense_power_iteration(adjacency, 0.85)
    got = np.array([scores[v] for v in "abcd"])
    assert np.max(np.abs(got - oracle)) <= 1e-6
    assert abs(sum(scores.values()) - 1.0) <= 1e-9
    assert scores["b"] > scores["a"] and scores["c"] > scores["d"]
