"""Command-line entry point: ``finprog <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .corpus import (
    FileUnreadable,
    RejectedExample,
    SchemaMismatch,
    dataset_stats,
    linearize_row,
    load_finqa,
)
from .dsl import ProgramError, parse_program, render_program
from .equivalence import canonicalize, prog_equal
from .executor import ExecutionError, NotANumber, TableContext, eval_program
from .keyphrase import EmptyGraph, extract_header_keyphrases, extract_textrank_keyphrases
from .metrics import PredictionRecord, score_records
from .model import evaluate, save_checkpoint, train_multitask, write_metrics_csv
from .pretrain import (
    build_corpus,
    masked_example_from_record,
    operator_example_from_record,
    pair_from_record,
    read_jsonl,
    write_jsonl,
)

log = logging.getLogger("finprog")

# Split sizes and program statistics reported for the official FinQA release.
FINQA_REFERENCE = {
    "splits": {"train": 6251, "dev": 883, "test": 1147},
    "mean_operators": 1.54,
    "mean_gold": 1.71,
    "max_operators": 6,
    "max_gold": 9,
    "mean_tolerance": 0.02,
}

DATA_ERRORS = (FileUnreadable, SchemaMismatch, RejectedExample, ProgramError, ExecutionError,
               NotANumber, EmptyGraph, OSError, ValueError, KeyError, json.JSONDecodeError)


@dataclass
class RunConfig:
    seed: int = 0
    k: int = 2
    window: int = 2
    damping: float = 0.85
    tol: float = 1e-6
    max_iter: int = 100
    noisy_vir: bool = False
    percent_equiv: bool = False
    exe_tol: float = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _config(args, **overrides) -> dict:
    cfg = RunConfig()
    for name in asdict(cfg):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    for name, value in overrides.items():
        setattr(cfg, name, value)
    return {"finprog": __version__, "command": args.command, **asdict(cfg)}


def _load(path, rejects_path=None):
    rejects: list[dict] = []
    examples = load_finqa(path, rejects)
    if rejects_path:
        write_jsonl(rejects, rejects_path)
    return examples


def cmd_parse(args):
    program = parse_program(args.program)
    print(render_program(program, args.form))


def cmd_exec(args):
    table = None
    if args.table:
        with open(args.table, encoding="utf-8") as f:
            table = TableContext.from_raw(json.load(f))
    print(eval_program(parse_program(args.program), table))


def cmd_equiv(args):
    a, b = parse_program(args.a), parse_program(args.b)
    keep_dead = args.keep_dead_steps
    print("equivalent" if prog_equal(a, b, not keep_dead) else "not equivalent")
    if args.verbose:
        print(canonicalize(a, not keep_dead))
        print(canonicalize(b, not keep_dead))


def cmd_linearize(args):
    with open(args.table, encoding="utf-8") as f:
        table = json.load(f)
    rows = [args.row] if args.row is not None else range(1, len(table))
    for r in rows:
        print(linearize_row(table, r, args.separator, args.terminator))


def cmd_gen(args):
    task = args.task
    if task == "vir" and args.noisy_vir:
        task = "noisy-vir"
    examples = _load(args.data, args.rejects)
    records, skipped = build_corpus(examples, task, seed=args.seed, k=args.k, window=args.window, jobs=args.jobs)
    for msg in skipped:
        log.warning("skipped: %s", msg)
    n = write_jsonl(records, args.out, _config(args, noisy_vir=task == "noisy-vir"))
    print(f"wrote {n} {task} records from {len(examples)} examples to {args.out}")


def cmd_keyphrases(args):
    examples = _load(args.data, args.rejects)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        if args.out:
            out.write(json.dumps({"_config": _config(args)}, sort_keys=True) + "\n")
        for ex in sorted(examples, key=lambda e: e.id):
            evidence = [g.sentence for g in ex.gold]
            textrank = extract_textrank_keyphrases(ex.question, evidence, window=args.window,
                                                   damping=args.damping, tol=args.tol, max_iter=args.max_iter)
            headers = extract_header_keyphrases(ex.raw_table) if ex.raw_table else []
            out.write(json.dumps({
                "id": ex.id,
                "textrank": [{"surface": k.surface, "frequency": k.frequency, "score": k.score} for k in textrank],
                "headers": [{"surface": k.surface, "frequency": k.frequency} for k in headers],
            }, ensure_ascii=False) + "\n")
    finally:
        if args.out:
            out.close()


def cmd_eval(args):
    examples = {ex.id: ex for ex in _load(args.data)}
    records = []
    for rec in read_jsonl(args.predictions):
        ex = examples.get(str(rec["id"]))
        if ex is None:
            raise KeyError(f"prediction for unknown example id {rec['id']!r}")
        records.append(PredictionRecord.from_text(ex.id, rec["program"], ex.program, ex.exe_ans, ex.table))
    report = score_records(records, args.exe_tol, args.percent_equiv)
    report["config"] = _config(args)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
    print(f"{'metric':<10} {'value':>8}")
    print(f"{'exe_acc':<10} {report['exe_acc']:>8.4f}")
    print(f"{'prog_acc':<10} {report['prog_acc']:>8.4f}")
    print(f"{'n':<10} {report['n']:>8d}")


def cmd_train_demo(args):
    corpora = {"vir": [], "vop": [], "vkm": []}
    if args.data:
        examples = _load(args.data)
        for task, key in (("vir", "vir"), ("vop", "vop"), ("vkm", "vkm")):
            records, _ = build_corpus(examples, task, seed=args.seed, k=args.k)
            corpora[key] = records
    for key, path in (("vir", args.vir), ("vop", args.vop), ("vkm", args.vkm)):
        if path:
            corpora[key] = read_jsonl(path)
    corpora = {
        "vir": [pair_from_record(r) for r in corpora["vir"]],
        "vop": [operator_example_from_record(r) for r in corpora["vop"]],
        "vkm": [masked_example_from_record(r) for r in corpora["vkm"]],
    }
    if not any(corpora.values()):
        raise UsageError("train-demo needs --data or at least one of --vir/--vop/--vkm")
    result = train_multitask(corpora, batch_size=args.batch_size, steps=args.steps, lr=args.lr,
                             seed=args.seed, d=args.dim, epochs=args.epochs)
    write_metrics_csv(result.log, args.metrics)
    with open(str(args.metrics) + ".config.json", "w", encoding="utf-8") as f:
        json.dump(_config(args), f, indent=2, sort_keys=True)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, result.encoder, result.heads)
    print(f"{len(result.log)} update steps")
    for task, instances in corpora.items():
        if instances:
            m = evaluate(result.encoder, result.heads, instances, task)
            print(f"{task:<4} n={m['n']:<6d} loss={m['loss']:.4f} accuracy={m['accuracy']:.4f}")


def _split_name(path: Path) -> str | None:
    stem = path.stem.lower()
    for name in FINQA_REFERENCE["splits"]:
        if name in stem:
            return name
    return None


def cmd_validate_dataset(args):
    ref = FINQA_REFERENCE
    all_examples = []
    ok = True
    for path in args.files:
        rejects: list[dict] = []
        examples = load_finqa(path, rejects)
        all_examples.extend(examples)
        split = _split_name(Path(path))
        line = f"{path}: {len(examples)} examples, {len(rejects)} rejected"
        if split is not None:
            expected = ref["splits"][split]
            match = len(examples) == expected
            ok &= match
            line += f" (expected {expected} for {split}: {'ok' if match else 'MISMATCH'})"
        print(line)
    stats = dataset_stats(all_examples)
    checks = [
        ("mean operators", stats["mean_operators"], ref["mean_operators"], True),
        ("mean gold evidence", stats["mean_gold"], ref["mean_gold"], True),
        ("max operators", stats["max_operators"], ref["max_operators"], False),
        ("max gold evidence", stats["max_gold"], ref["max_gold"], False),
    ]
    for name, value, expected, is_mean in checks:
        good = abs(value - expected) <= ref["mean_tolerance"] if is_mean else value == expected
        ok &= good
        shown = f"{value:.4f}" if is_mean else str(value)
        print(f"{name:<20} {shown:>8}  reference {expected}  {'ok' if good else 'differs'}")
    if args.strict and not ok:
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="finprog", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose-log", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("parse", help="parse a program and render it")
    s.add_argument("program")
    s.add_argument("--form", choices=("nested", "flattened"), default="flattened")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("exec", help="execute a program")
    s.add_argument("program")
    s.add_argument("--table", help="JSON file holding the table matrix; first row holds column headers")
    s.set_defaults(func=cmd_exec)

    s = sub.add_parser("equiv", help="check two programs for rule-based equivalence")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--keep-dead-steps", action="store_true")
    s.add_argument("--verbose", action="store_true", help="print canonical forms")
    s.set_defaults(func=cmd_equiv)

    s = sub.add_parser("linearize", help="linearize table rows into evidence sentences")
    s.add_argument("table", help="JSON file holding the table matrix; first row holds column headers")
    s.add_argument("--row", type=int)
    s.add_argument("--separator", default=" ; ")
    s.add_argument("--terminator", default=" .")
    s.set_defaults(func=cmd_linearize)

    s = sub.add_parser("gen", help="generate a pretraining corpus as JSONL")
    s.add_argument("task", choices=("vir", "noisy-vir", "vop", "vkm"))
    s.add_argument("data", help="FinQA-format JSON file")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k", type=int, default=2, help="number of gold replacements")
    s.add_argument("--window", type=int, default=2, help="TextRank co-occurrence window")
    s.add_argument("--noisy-vir", action="store_true", help="same as task noisy-vir")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--rejects", help="write rejected examples to this JSONL file")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("keyphrases", help="extract keyphrases for every example")
    s.add_argument("data")
    s.add_argument("--out")
    s.add_argument("--window", type=int, default=2)
    s.add_argument("--damping", type=float, default=0.85)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--rejects")
    s.set_defaults(func=cmd_keyphrases)

    s = sub.add_parser("eval", help="score predicted programs")
    s.add_argument("data", help="FinQA-format JSON file with gold programs")
    s.add_argument("predictions", help="JSONL of {id, program}")
    s.add_argument("--report", help="write the JSON report here")
    s.add_argument("--exe-tol", type=float, default=1e-4)
    s.add_argument("--percent-equiv", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("train-demo", help="multi-task training of the reference encoder")
    s.add_argument("--data", help="FinQA-format JSON to build all three corpora from")
    s.add_argument("--vir")
    s.add_argument("--vop")
    s.add_argument("--vkm")
    s.add_argument("--metrics", required=True, help="CSV metrics log")
    s.add_argument("--checkpoint")
    s.add_argument("--steps", type=int)
    s.add_argument("--epochs", type=int, default=1)
    s.add_argument("--batch-size", type=int, default=4)
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k", type=int, default=2)
    s.set_defaults(func=cmd_train_demo)

    s = sub.add_parser("validate-dataset", help="split sizes and program statistics")
    s.add_argument("files", nargs="+")
    s.add_argument("--strict", action="store_true", help="exit 2 when statistics differ from the reference")
    s.set_defaults(func=cmd_validate_dataset)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose_log else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"finprog: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
