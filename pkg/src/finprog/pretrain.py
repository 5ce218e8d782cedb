"""Construction of the three pretraining corpora.

* integrity ranking: pseudo evidence sets whose gold content drops one item
  per level, paired for pairwise ranking;
* operator prediction: single-step sub-programs whose operands are located
  as tokens in the gold evidence;
* keyphrase masking: one occurrence of every repeated keyphrase masked in
  the question plus cell-level gold evidence.

Every generator is a pure function of its inputs and seed.  Token offsets
always refer to whitespace tokenization (``str.split``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import EvidenceItem, HybridExample, cell_evidence
from .dsl import Operator, RowRef, extract_variable_subprograms
from .executor import ExecutionError, NumericToken, try_parse_numeric
from .keyphrase import (
    Keyphrase,
    extract_header_keyphrases,
    extract_textrank_keyphrases,
    find_occurrences,
    normalize_token,
)

__all__ = [
    "MASK",
    "NoIrrelevantEvidence",
    "IntegritySet",
    "RankPair",
    "OperandSpan",
    "OperatorExample",
    "MaskedExample",
    "example_rng",
    "token_number",
    "gen_vir_sets",
    "gen_noisy_vir_sets",
    "gen_vir_pairs",
    "gen_vop",
    "gen_vkm",
    "vir_pair_record",
    "vop_record",
    "vkm_record",
    "pair_from_record",
    "operator_example_from_record",
    "masked_example_from_record",
    "write_jsonl",
    "read_jsonl",
    "build_corpus",
]

log = logging.getLogger(__name__)

MASK = "[MASK]"


class NoIrrelevantEvidence(ValueError):
    pass


@dataclass(frozen=True)
class IntegritySet:
    level: int
    evidence: tuple[EvidenceItem, ...]
    gold_count: int

    @property
    def sentences(self) -> list[str]:
        return [e.sentence for e in self.evidence]


@dataclass(frozen=True)
class RankPair:
    higher: IntegritySet
    lower: IntegritySet
    question: str
    example_id: str = ""

    def __post_init__(self):
        if self.higher.level >= self.lower.level:
            raise ValueError("higher-integrity set must have the lower level")


@dataclass(frozen=True)
class OperandSpan:
    evidence_index: int
    start: int
    end: int


@dataclass(frozen=True)
class OperatorExample:
    question: str
    evidence: tuple[EvidenceItem, ...]
    spans: tuple[OperandSpan, ...]
    label: Operator
    example_id: str = ""

    def sequence_tokens(self) -> list[str]:
        """Whitespace tokens of the question followed by each evidence sentence."""
        tokens = self.question.split()
        for item in self.evidence:
            tokens.extend(item.sentence.split())
        return tokens

    def sequence_positions(self) -> list[int]:
        """Position of each operand's first token within :meth:`sequence_tokens`."""
        offsets = []
        pos = len(self.question.split())
        for item in self.evidence:
            offsets.append(pos)
            pos += len(item.sentence.split())
        return [offsets[s.evidence_index] + s.start for s in self.spans]

    def span_text(self, span: OperandSpan) -> str:
        return " ".join(self.evidence[span.evidence_index].sentence.split()[span.start:span.end])


@dataclass(frozen=True)
class MaskedExample:
    question: str
    tokens: tuple[str, ...]
    targets: tuple[tuple[int, str], ...]
    example_id: str = ""

    @property
    def mask_positions(self) -> list[int]:
        return [p for p, _ in self.targets]


def example_rng(seed: int, example_id: str) -> random.Random:
    """RNG seeded by the global seed and the example id."""
    digest = hashlib.sha256(f"{seed}:{example_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _ordered(items: Iterable[EvidenceItem], order: dict[str, int]) -> tuple[EvidenceItem, ...]:
    return tuple(sorted(items, key=lambda e: order[e.id]))


def _integrity_sets(ex: HybridExample, k: int, seed: int, extra: int):
    if k < 1:
        raise ValueError("k must be at least 1")
    gold = list(ex.gold)
    pool = list(ex.distractors)
    if not pool:
        raise NoIrrelevantEvidence(f"example {ex.id} has no irrelevant evidence")
    k_eff = min(k, len(gold), len(pool))
    if len(pool) < k_eff + extra:
        raise NoIrrelevantEvidence(
            f"example {ex.id} needs {k_eff + extra} irrelevant sentences, has {len(pool)}"
        )
    order = {c.id: i for i, c in enumerate(ex.candidates)}
    rng = example_rng(seed, ex.id)
    current = list(gold)
    remaining = list(gold)
    sets = [IntegritySet(0, _ordered(current, order), len(gold))]
    for level in range(1, k_eff + 1):
        replaced = remaining.pop(rng.randrange(len(remaining)))
        distractor = pool.pop(rng.randrange(len(pool)))
        current[current.index(replaced)] = distractor
        sets.append(IntegritySet(level, _ordered(current, order), len(gold) - level))
    return sets, pool, rng, order


def gen_vir_sets(ex: HybridExample, k: int, seed: int) -> list[IntegritySet]:
    """Pseudo evidence sets E^0..E^k' with k' = min(k, |gold|, |distractors|).

    E^0 is the gold set; each next level swaps one remaining gold item for
    an unused distractor, both drawn uniformly.
    """
    sets, _, _, _ = _integrity_sets(ex, k, seed, extra=0)
    return sets


def gen_noisy_vir_sets(ex: HybridExample, k: int, seed: int) -> list[IntegritySet]:
    """As :func:`gen_vir_sets`, with one further unused distractor added to every level."""
    sets, pool, rng, order = _integrity_sets(ex, k, seed, extra=1)
    noise = pool[rng.randrange(len(pool))]
    return [
        IntegritySet(s.level, _ordered([*s.evidence, noise], order), s.gold_count)
        for s in sets
    ]


def gen_vir_pairs(sets: Sequence[IntegritySet], question: str = "", example_id: str = "") -> list[RankPair]:
    """Every (E^u, E^v) with u < v: (k'+1)k'/2 pairs."""
    return [
        RankPair(sets[u], sets[v], question, example_id)
        for u in range(len(sets))
        for v in range(u + 1, len(sets))
    ]


def token_number(token: str) -> NumericToken | None:
    """Numeric value of an evidence token, tolerating trailing punctuation."""
    parsed = try_parse_numeric(token)
    if parsed is None:
        trimmed = token.rstrip(".,;:!?\"'")
        if trimmed and trimmed != token:
            parsed = try_parse_numeric(trimmed)
    return parsed


def _locate(values: Sequence[float], evidence: Sequence[EvidenceItem], stats: Counter):
    tokenized = [item.sentence.split() for item in evidence]
    matches_by_value: dict[float, list[tuple[int, int]]] = {}
    for value in set(values):
        matches_by_value[value] = [
            (i, t)
            for i, tokens in enumerate(tokenized)
            for t, tok in enumerate(tokens)
            if (num := token_number(tok)) is not None and num.value == value
        ]
    used: set[tuple[int, int]] = set()
    spans = []
    for value in values:
        matches = matches_by_value[value]
        if not matches:
            return None
        if len(matches) > 1:
            stats["ambiguous_operands"] += 1
        free = [m for m in matches if m not in used]
        i, t = (free or matches)[0]
        used.add((i, t))
        spans.append(OperandSpan(i, t, t + 1))
    return spans


def gen_vop(ex: HybridExample, diagnostics: Counter | None = None) -> list[OperatorExample]:
    """Operator-prediction instances for every all-variable step of the program.

    Each operand is mapped to the first token of the gold evidence (candidate
    order) with the same numeric value; a repeated value prefers a token not
    yet used by the same step.  Table operations contribute one operand per
    numeric cell of their row.  Steps with an operand that cannot be located
    are skipped and counted in ``diagnostics``.
    """
    stats = Counter() if diagnostics is None else diagnostics
    evidence = ex.gold
    out = []
    variable_steps = {id(s) for s in extract_variable_subprograms(ex.program)}
    steps = []
    for step in ex.program:
        if id(step) in variable_steps:
            steps.append((step, [o.value for o in step.operands]))
        elif step.op.is_table and isinstance(step.operands[0], RowRef):
            try:
                steps.append((step, ex.table.numeric_row(step.operands[0].name)))
            except ExecutionError:
                stats["skipped_steps"] += 1
    for step, values in steps:
        stats["steps"] += 1
        if len(values) < 2:
            stats["skipped_steps"] += 1
            continue
        spans = _locate(values, evidence, stats)
        if spans is None:
            stats["skipped_steps"] += 1
            log.debug("%s: could not locate operands of %s", ex.id, step)
            continue
        out.append(OperatorExample(ex.question, evidence, tuple(spans), step.op, ex.id))
    return out


def _merge_keyphrases(*groups: Sequence[Keyphrase]) -> list[Keyphrase]:
    seen = set()
    out = []
    for group in groups:
        for kp in group:
            if kp.tokens not in seen:
                seen.add(kp.tokens)
                out.append(kp)
    return out


def gen_vkm(ex: HybridExample, seed: int, window: int = 2,
            stopwords: frozenset[str] | None = None) -> list[MaskedExample]:
    """Mask one uniformly chosen occurrence of each repeated keyphrase.

    The sequence is the question followed by cell-level gold evidence.
    Keyphrases come from TextRank and from table headers; a phrase is
    masked only if it occurs at least twice in the sequence and has an
    occurrence not overlapping an earlier mask.  Returns zero or one example.
    """
    evidence = cell_evidence(ex)
    raw = " ".join([ex.question, *evidence]).split()
    norm = [normalize_token(t) for t in raw]
    phrases = _merge_keyphrases(
        extract_textrank_keyphrases(ex.question, evidence, window=window, stopwords=stopwords),
        extract_header_keyphrases(ex.raw_table, evidence) if ex.raw_table else [],
    )
    rng = example_rng(seed, ex.id)
    masked: set[int] = set()
    targets: list[tuple[int, str]] = []
    for kp in phrases:
        occurrences = find_occurrences(norm, kp.tokens)
        if len(occurrences) < 2:
            continue
        free = [p for p in occurrences if not masked.intersection(range(p, p + len(kp.tokens)))]
        if not free:
            continue
        start = free[rng.randrange(len(free))]
        for p in range(start, start + len(kp.tokens)):
            masked.add(p)
            targets.append((p, raw[p]))
    if not targets:
        return []
    targets.sort()
    tokens = tuple(MASK if i in masked else t for i, t in enumerate(raw))
    return [MaskedExample(ex.question, tokens, tuple(targets), ex.id)]


# JSONL records ---------------------------------------------------------------

def vir_pair_record(pair: RankPair) -> dict:
    return {
        "id": pair.example_id,
        "question": pair.question,
        "higher": pair.higher.sentences,
        "lower": pair.lower.sentences,
        "levels": [pair.higher.level, pair.lower.level],
        "gold_counts": [pair.higher.gold_count, pair.lower.gold_count],
    }


def vop_record(exm: OperatorExample) -> dict:
    return {
        "id": exm.example_id,
        "question": exm.question,
        "evidence": [e.sentence for e in exm.evidence],
        "spans": [[s.evidence_index, s.start, s.end] for s in exm.spans],
        "label": exm.label.value,
    }


def vkm_record(exm: MaskedExample) -> dict:
    return {
        "id": exm.example_id,
        "question": exm.question,
        "tokens": list(exm.tokens),
        "mask_positions": exm.mask_positions,
        "targets": [t for _, t in exm.targets],
    }


def _items(sentences: Sequence[str]) -> tuple[EvidenceItem, ...]:
    return tuple(EvidenceItem(f"evidence_{i}", s, "text") for i, s in enumerate(sentences))


def pair_from_record(rec: dict) -> RankPair:
    u, v = rec["levels"]
    gu, gv = rec.get("gold_counts", [0, 0])
    return RankPair(
        IntegritySet(u, _items(rec["higher"]), gu),
        IntegritySet(v, _items(rec["lower"]), gv),
        rec["question"],
        rec.get("id", ""),
    )


def operator_example_from_record(rec: dict) -> OperatorExample:
    return OperatorExample(
        rec["question"],
        _items(rec["evidence"]),
        tuple(OperandSpan(*s) for s in rec["spans"]),
        Operator(rec["label"]),
        rec.get("id", ""),
    )


def masked_example_from_record(rec: dict) -> MaskedExample:
    return MaskedExample(
        rec["question"],
        tuple(rec["tokens"]),
        tuple(zip(rec["mask_positions"], rec["targets"])),
        rec.get("id", ""),
    )


def write_jsonl(records: Iterable[dict], path: str | Path, config: dict | None = None) -> int:
    """Write records one per line; ``config`` becomes a leading ``{"_config": ...}`` line."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        if config is not None:
            f.write(json.dumps({"_config": config}, sort_keys=True) + "\n")
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "_config" in rec and len(rec) == 1:
                continue
            out.append(rec)
    return out


def _records_for(ex: HybridExample, task: str, seed: int, k: int, window: int):
    try:
        if task == "vir":
            sets = gen_vir_sets(ex, k, seed)
            return [vir_pair_record(p) for p in gen_vir_pairs(sets, ex.question, ex.id)], None
        if task == "noisy-vir":
            sets = gen_noisy_vir_sets(ex, k, seed)
            return [vir_pair_record(p) for p in gen_vir_pairs(sets, ex.question, ex.id)], None
        if task == "vop":
            return [vop_record(e) for e in gen_vop(ex)], None
        if task == "vkm":
            return [vkm_record(e) for e in gen_vkm(ex, seed, window)], None
    except NoIrrelevantEvidence as exc:
        return [], str(exc)
    raise ValueError(f"unknown task {task!r}")


def build_corpus(examples: Sequence[HybridExample], task: str, seed: int = 0, k: int = 2,
                 window: int = 2, jobs: int = 1) -> tuple[list[dict], list[str]]:
    """Generate records for ``task`` over all examples, ordered by example id.

    Returns the records and a list of per-example skip diagnostics.
    """
    ordered = sorted(examples, key=lambda e: e.id)
    work = partial(_records_for, task=task, seed=seed, k=k, window=window)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, ordered, chunksize=16))
    else:
        results = [work(ex) for ex in ordered]
    records, skipped = [], []
    for recs, err in results:
        records.extend(recs)
        if err:
            skipped.append(err)
    return records, skipped
