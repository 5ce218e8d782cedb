"""FinQA-format ingestion and table linearization."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

from .dsl import NumberLiteral, Program, ProgramError, RowRef, parse_program
from .executor import (
    DuplicateRowHeader,
    ExecutionError,
    TableContext,
    eval_program,
    normalize_header,
    try_parse_numeric,
)

__all__ = [
    "EvidenceItem",
    "HybridExample",
    "FileUnreadable",
    "SchemaMismatch",
    "RejectedExample",
    "CELL_SEPARATOR",
    "ROW_TERMINATOR",
    "linearize_cell",
    "linearize_row",
    "example_from_dict",
    "load_finqa",
    "dataset_stats",
    "example_to_record",
    "write_examples_jsonl",
    "cell_evidence",
    "example_from_parts",
]

log = logging.getLogger(__name__)

CELL_SEPARATOR = " ; "
ROW_TERMINATOR = " ."


class FileUnreadable(OSError):
    pass


class SchemaMismatch(ValueError):
    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"schema mismatch at {path}" + (f": {message}" if message else ""))


class RejectedExample(ValueError):
    pass


@dataclass(frozen=True)
class EvidenceItem:
    id: str
    sentence: str
    source: str  # "text" or "table"
    row_index: int | None = None
    is_gold: bool = False


@dataclass(frozen=True)
class HybridExample:
    id: str
    question: str
    candidates: tuple[EvidenceItem, ...]
    program: Program
    exe_ans: Union[float, bool]
    table: TableContext
    raw_table: tuple[tuple[str, ...], ...] = ()
    program_text: str = ""
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    @property
    def gold(self) -> tuple[EvidenceItem, ...]:
        return tuple(c for c in self.candidates if c.is_gold)

    @property
    def distractors(self) -> tuple[EvidenceItem, ...]:
        return tuple(c for c in self.candidates if not c.is_gold)


def _squash(text: str) -> str:
    return " ".join(str(text).split())


def linearize_cell(row_header: str, col_header: str, value: str) -> str:
    """Template a table cell as ``"The {row} of {col} is {value}"``.

    A row header that already starts with "the" is not prefixed again.
    """
    row_header, col_header, value = _squash(row_header), _squash(col_header), _squash(value)
    subject = row_header if row_header.lower().startswith("the ") else f"The {row_header}"
    return _squash(f"{subject} of {col_header} is {value}")


def linearize_row(table: Sequence[Sequence[str]], row_index: int,
                  separator: str = CELL_SEPARATOR, terminator: str = ROW_TERMINATOR) -> str:
    """Concatenate the linearized cells of one data row (row 0 holds column headers)."""
    if not 0 < row_index < len(table):
        raise IndexError(f"row index {row_index} out of range for table with {len(table)} rows")
    headers = table[0]
    row = table[row_index]
    cells = [
        linearize_cell(row[0], headers[j] if j < len(headers) else "", row[j])
        for j in range(1, len(row))
    ]
    if not cells:
        cells = [linearize_cell(row[0] if row else "", "", "")]
    return separator.join(cells) + terminator


def _require(obj, key, path, kind):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaMismatch(f"{path}.{key}", "missing")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaMismatch(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return value


def _parse_answer(raw) -> Union[float, bool]:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, (int, float)):
        return float(raw)
    text = str(raw).strip().lower()
    if text in ("yes", "no"):
        return text == "yes"
    token = try_parse_numeric(text)
    if token is None:
        raise RejectedExample(f"unparseable exe_ans {raw!r}")
    return token.value


def _loosely_matches(stored: str, ours: str) -> bool:
    a, b = _squash(stored).lower(), _squash(ours).lower()
    return a in b or b in a


def example_from_dict(entry: dict, index: int = 0) -> HybridExample:
    """Validate one raw FinQA entry; raises :class:`SchemaMismatch` or :class:`RejectedExample`."""
    path = f"[{index}]"
    pre = _require(entry, "pre_text", path, list)
    post = _require(entry, "post_text", path, list)
    raw_table = _require(entry, "table", path, list)
    qa = _require(entry, "qa", path, dict)
    question = _require(qa, "question", f"{path}.qa", str)
    program_text = _require(qa, "program", f"{path}.qa", str)
    gold_inds = _require(qa, "gold_inds", f"{path}.qa", dict)
    if "exe_ans" not in qa:
        raise SchemaMismatch(f"{path}.qa.exe_ans", "missing")
    for i, row in enumerate(raw_table):
        if not isinstance(row, list):
            raise SchemaMismatch(f"{path}.table[{i}]", "expected list")
    raw_table = tuple(tuple(str(c) for c in row) for row in raw_table)
    ex_id = str(entry.get("id", entry.get("uid", index)))
    diagnostics: list[str] = []

    try:
        program = parse_program(program_text)
    except ProgramError as exc:
        raise RejectedExample(f"program does not parse: {exc}") from None

    gold_ids = set(gold_inds)
    candidates = []
    for i, sentence in enumerate(pre):
        candidates.append(EvidenceItem(f"text_{i}", _squash(sentence), "text"))
    for r in range(1, len(raw_table)):
        candidates.append(EvidenceItem(f"table_{r}", linearize_row(raw_table, r), "table", row_index=r))
    for j, sentence in enumerate(post):
        candidates.append(EvidenceItem(f"text_{len(pre) + j}", _squash(sentence), "text"))
    by_id = {c.id: c for c in candidates}
    for gid in sorted(gold_ids):
        if gid not in by_id:
            raise RejectedExample(f"gold id {gid!r} does not resolve to a candidate")
        if not _loosely_matches(str(gold_inds[gid]), by_id[gid].sentence):
            diagnostics.append(f"gold text for {gid} differs from the candidate sentence")
    if not gold_ids:
        raise RejectedExample("no gold evidence")
    candidates = [
        EvidenceItem(c.id, c.sentence, c.source, c.row_index, c.id in gold_ids) for c in candidates
    ]

    row_names = {normalize_header(o.name) for s in program for o in s.operands if isinstance(o, RowRef)}
    try:
        table = TableContext.from_raw(raw_table)
    except DuplicateRowHeader:
        table = TableContext.from_raw(raw_table, drop_duplicates=True)
        counts: dict[str, int] = {}
        for row in raw_table[1:]:
            if row:
                key = normalize_header(row[0])
                counts[key] = counts.get(key, 0) + 1
        dupes = {k for k, c in counts.items() if c > 1}
        if dupes & row_names:
            raise RejectedExample(f"program references duplicated row header(s) {sorted(dupes & row_names)}")
        diagnostics.append(f"duplicate row headers dropped: {sorted(dupes)}")

    exe_ans = _parse_answer(qa["exe_ans"])
    try:
        eval_program(program, table)
    except ExecutionError as exc:
        raise RejectedExample(f"program fails to execute: {exc}") from None

    for d in diagnostics:
        log.debug("%s: %s", ex_id, d)
    return HybridExample(
        id=ex_id,
        question=_squash(question),
        candidates=tuple(candidates),
        program=program,
        exe_ans=exe_ans,
        table=table,
        raw_table=raw_table,
        program_text=program_text,
        diagnostics=tuple(diagnostics),
    )


def load_finqa(path: str | Path, rejects: list[dict] | None = None) -> list[HybridExample]:
    """Load and validate a FinQA JSON file.

    Entries that fail validation are skipped; a ``{"index", "id", "reason"}``
    record for each is appended to ``rejects`` when given.
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaMismatch("$", "expected a JSON array of examples")
    examples = []
    for i, entry in enumerate(data):
        try:
            examples.append(example_from_dict(entry, i))
        except (SchemaMismatch, RejectedExample) as exc:
            ex_id = entry.get("id") if isinstance(entry, dict) else None
            log.warning("rejected example %s (%s): %s", i, ex_id, exc)
            if rejects is not None:
                rejects.append({"index": i, "id": ex_id, "reason": str(exc)})
    log.info("loaded %d examples from %s (%d rejected)", len(examples), path, len(data) - len(examples))
    return examples


def dataset_stats(examples: Sequence[HybridExample]) -> dict:
    n = len(examples)
    ops = [len(ex.program) for ex in examples]
    gold = [len(ex.gold) for ex in examples]
    return {
        "n": n,
        "mean_operators": sum(ops) / n if n else 0.0,
        "mean_gold": sum(gold) / n if n else 0.0,
        "max_operators": max(ops, default=0),
        "max_gold": max(gold, default=0),
    }


def example_to_record(ex: HybridExample) -> dict:
    answer = ex.exe_ans
    if isinstance(answer, bool):
        answer = "yes" if answer else "no"
    return {
        "id": ex.id,
        "question": ex.question,
        "candidates": [{"id": c.id, "sentence": c.sentence, "gold": c.is_gold} for c in ex.candidates],
        "program": ex.program_text or str(ex.program),
        "exe_ans": answer,
    }


def write_examples_jsonl(examples: Iterable[HybridExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps(example_to_record(ex), ensure_ascii=False) + "\n")


def _program_numbers(program: Program) -> set[float]:
    return {o.value for s in program for o in s.operands if isinstance(o, NumberLiteral)}


def cell_evidence(ex: HybridExample) -> list[str]:
    """Gold evidence with table rows reduced to the cells the program uses.

    Text evidence is kept whole.  For a gold table row only the cells whose
    value appears as a program operand are linearized (rows referenced by a
    table operation keep every cell); a row with no such cell is kept whole.
    """
    numbers = _program_numbers(ex.program)
    table_rows = {normalize_header(o.name) for s in ex.program for o in s.operands if isinstance(o, RowRef)}
    out = []
    for item in ex.gold:
        if item.source != "table" or item.row_index is None:
            out.append(item.sentence)
            continue
        headers = ex.raw_table[0]
        row = ex.raw_table[item.row_index]
        cells = []
        for j in range(1, len(row)):
            sentence = linearize_cell(row[0], headers[j] if j < len(headers) else "", row[j])
            token = try_parse_numeric(row[j])
            if normalize_header(row[0]) in table_rows or (token is not None and token.value in numbers):
                cells.append(sentence)
        if not cells:
            cells = [
                linearize_cell(row[0], headers[j] if j < len(headers) else "", row[j])
                for j in range(1, len(row))
            ]
        out.extend(cells)
    return out



def example_from_parts(example_id: str, question: str, program: str,
                       pre_text: Sequence[str] = (), table: Sequence[Sequence[str]] = (),
                       post_text: Sequence[str] = (), gold_ids: Iterable[str] = (),
                       exe_ans=None) -> HybridExample:
    """Assemble a validated example from its pieces (convenient for fixtures and demos).

    ``exe_ans`` defaults to the program's own result.
    """
    entry = {
        "id": example_id,
        "pre_text": list(pre_text),
        "post_text": list(post_text),
        "table": [list(r) for r in table],
        "qa": {"question": question, "program": program, "gold_inds": {g: "" for g in gold_ids}},
    }
    if exe_ans is None:
        value = eval_program(parse_program(program), TableContext.from_raw(entry["table"], drop_duplicates=True)
                             if entry["table"] else None)
        exe_ans = value.value
    entry["qa"]["exe_ans"] = exe_ans
    return example_from_dict(entry)
