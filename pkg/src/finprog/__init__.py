"""Solution-program tooling for table-and-text numerical QA.

Program DSL and executor, rule-based program equivalence, FinQA ingestion,
keyphrase extraction, pretraining-corpus construction for integrity
ranking, operator prediction and keyphrase masking, a small reference
encoder with the matching losses, and evaluation metrics.
"""

from .dsl import Operator, Program, Step, parse_program, render_program, extract_variable_subprograms
from .executor import Number, TableContext, YesNo, eval_program, parse_numeric
from .equivalence import canonicalize, prog_equal
from .corpus import EvidenceItem, HybridExample, linearize_cell, linearize_row, load_finqa
from .keyphrase import extract_header_keyphrases, extract_textrank_keyphrases, pagerank
from .pretrain import gen_noisy_vir_sets, gen_vir_pairs, gen_vir_sets, gen_vkm, gen_vop
from .metrics import execution_accuracy, program_accuracy, recall_at_k

__version__ = "0.1.0"

__all__ = [
    "Operator", "Program", "Step", "parse_program", "render_program", "extract_variable_subprograms",
    "Number", "TableContext", "YesNo", "eval_program", "parse_numeric",
    "canonicalize", "prog_equal",
    "EvidenceItem", "HybridExample", "linearize_cell", "linearize_row", "load_finqa",
    "extract_header_keyphrases", "extract_textrank_keyphrases", "pagerank",
    "gen_noisy_vir_sets", "gen_vir_pairs", "gen_vir_sets", "gen_vkm", "gen_vop",
    "execution_accuracy", "program_accuracy", "recall_at_k",
]
