"""Keyphrase extraction: TextRank over question and evidence, plus table headers."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from .corpus import linearize_cell

__all__ = [
    "EmptyGraph",
    "TokenGraph",
    "Keyphrase",
    "load_stopwords",
    "normalize_token",
    "find_occurrences",
    "build_token_graph",
    "pagerank",
    "extract_textrank_keyphrases",
    "extract_header_keyphrases",
]

STOPLIST_ENV = "FINPROG_STOPLIST"


class EmptyGraph(ValueError):
    pass


@lru_cache(maxsize=8)
def _read_stoplist(path: str | None) -> frozenset[str]:
    if path is None:
        text = resources.files("finprog").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def load_stopwords(path: str | os.PathLike | None = None) -> frozenset[str]:
    """One token per line; ``$FINPROG_STOPLIST`` overrides the bundled English list."""
    if path is None:
        path = os.environ.get(STOPLIST_ENV) or None
    return _read_stoplist(None if path is None else str(path))


def _strip_edges(token: str) -> str:
    start, end = 0, len(token)
    while start < end and not token[start].isalnum():
        start += 1
    while end > start and not token[end - 1].isalnum():
        end -= 1
    return token[start:end]


def normalize_token(token: str) -> str:
    """Lowercase and trim non-alphanumeric characters from both ends."""
    return _strip_edges(token).lower()


def find_occurrences(tokens: Sequence[str], phrase: Sequence[str]) -> list[int]:
    """Start positions where ``phrase`` occurs in the normalized ``tokens``."""
    n = len(phrase)
    if n == 0:
        return []
    phrase = list(phrase)
    return [i for i in range(len(tokens) - n + 1) if list(tokens[i:i + n]) == phrase]


@dataclass
class TokenGraph:
    """Undirected co-occurrence graph; ``nodes`` are kept in first-occurrence order."""

    nodes: list[str] = field(default_factory=list)
    edges: dict[str, dict[str, float]] = field(default_factory=dict)

    def add_node(self, node: str) -> None:
        if node not in self.edges:
            self.nodes.append(node)
            self.edges[node] = {}

    def add_edge(self, a: str, b: str, weight: float = 1.0) -> None:
        if a == b:
            return
        self.add_node(a)
        self.add_node(b)
        self.edges[a][b] = self.edges[a].get(b, 0.0) + weight
        self.edges[b][a] = self.edges[b].get(a, 0.0) + weight

    def __len__(self) -> int:
        return len(self.nodes)


def build_token_graph(tokens: Iterable[str], window: int = 2,
                      stopwords: frozenset[str] | None = None) -> TokenGraph:
    """Link content tokens that co-occur within ``window`` positions of each other.

    Stopwords and tokens without alphanumerics are dropped before windowing.
    """
    if window < 2:
        raise ValueError("window must be at least 2")
    stop = load_stopwords() if stopwords is None else stopwords
    seq = [t for t in (normalize_token(x) for x in tokens) if t and t not in stop]
    graph = TokenGraph()
    for i, tok in enumerate(seq):
        graph.add_node(tok)
        for j in range(i + 1, min(i + window, len(seq))):
            graph.add_edge(tok, seq[j])
    return graph


def pagerank(graph: TokenGraph, damping: float = 0.85, tol: float = 1e-6,
             max_iter: int = 100) -> dict[str, float]:
    """Weighted PageRank by power iteration, normalized to sum to one.

    Iteration stops once the L1 change bounds the distance to the fixed
    point below ``tol``, so every returned score is within ``tol`` of the
    converged value.  Mass of isolated nodes is spread uniformly.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    nodes = graph.nodes
    n = len(nodes)
    if n == 0:
        raise EmptyGraph("cannot rank an empty graph")
    strength = {v: sum(graph.edges[v].values()) for v in nodes}
    scores = {v: 1.0 / n for v in nodes}
    # ||x_k - x*||_1 <= d / (1 - d) * ||x_k - x_{k-1}||_1 for this contraction.
    threshold = tol * (1 - damping) / damping
    for _ in range(max_iter):
        dangling = sum(scores[v] for v in nodes if strength[v] == 0)
        base = (1 - damping) / n + damping * dangling / n
        new = {}
        for v in nodes:
            incoming = sum(w / strength[u] * scores[u] for u, w in graph.edges[v].items())
            new[v] = base + damping * incoming
        delta = sum(abs(new[v] - scores[v]) for v in nodes)
        scores = new
        if delta < threshold:
            break
    total = math.fsum(scores.values())
    return {v: s / total for v, s in scores.items()}


@dataclass(frozen=True)
class Keyphrase:
    tokens: tuple[str, ...]
    surface: str
    frequency: int
    score: float = 0.0
    source: str = "textrank"


def _select_top(scores: dict[str, float], first_pos: dict[str, int], count: int) -> set[str]:
    ranked = sorted(scores, key=lambda v: (-scores[v], first_pos[v]))
    return set(ranked[:count])


def extract_textrank_keyphrases(question: str, gold_evidence: Sequence[str], window: int = 2,
                                stopwords: frozenset[str] | None = None, damping: float = 0.85,
                                tol: float = 1e-6, max_iter: int = 100,
                                min_frequency: int = 2) -> list[Keyphrase]:
    """TextRank keyphrases of ``question`` followed by the gold evidence.

    The top third of ranked tokens are kept, runs of kept tokens that are
    adjacent in the text become phrases, and phrases occurring fewer than
    ``min_frequency`` times are discarded.  Output is ordered by summed
    token score, ties broken by first occurrence.
    """
    raw = " ".join([question, *gold_evidence]).split()
    stop = load_stopwords() if stopwords is None else stopwords
    graph = build_token_graph(raw, window, stop)
    if len(graph) == 0:
        return []
    scores = pagerank(graph, damping, tol, max_iter)
    norm = [normalize_token(t) for t in raw]
    first_pos: dict[str, int] = {}
    for i, t in enumerate(norm):
        first_pos.setdefault(t, i)
    selected = _select_top(scores, first_pos, math.ceil(len(graph) / 3))

    phrases: dict[tuple[str, ...], int] = {}
    i = 0
    while i < len(norm):
        if norm[i] in selected:
            j = i
            while j < len(norm) and norm[j] in selected:
                j += 1
            phrases.setdefault(tuple(norm[i:j]), i)
            i = j
        else:
            i += 1

    out = []
    for phrase, start in phrases.items():
        frequency = len(find_occurrences(norm, phrase))
        if frequency < min_frequency:
            continue
        surface = " ".join(_strip_edges(t) for t in raw[start:start + len(phrase)])
        out.append((-sum(scores[t] for t in phrase), start,
                    Keyphrase(phrase, surface, frequency, sum(scores[t] for t in phrase))))
    out.sort(key=lambda x: (x[0], x[1]))
    return [kp for _, _, kp in out]


def _all_cell_sentences(table: Sequence[Sequence[str]]) -> list[str]:
    headers = table[0]
    return [
        linearize_cell(row[0], headers[j] if j < len(headers) else "", row[j])
        for row in table[1:] if row
        for j in range(1, len(row))
    ]


def extract_header_keyphrases(table: Sequence[Sequence[str]], evidence: Sequence[str] | None = None,
                              min_frequency: int = 2) -> list[Keyphrase]:
    """Row and column headers that occur at least ``min_frequency`` times.

    Occurrences are counted in ``evidence`` (by default every linearized
    cell of the table), so a column header describing k cells has frequency k.
    """
    if not table or len(table) < 2:
        return []
    if evidence is None:
        evidence = _all_cell_sentences(table)
    raw = " ".join(evidence).split()
    norm = [normalize_token(t) for t in raw]
    headers = [h for h in table[0][1:]] + [row[0] for row in table[1:] if row]
    out = []
    seen = set()
    for order, header in enumerate(headers):
        tokens = tuple(t for t in (normalize_token(x) for x in header.split()) if t)
        if not tokens or tokens in seen:
            continue
        seen.add(tokens)
        positions = find_occurrences(norm, tokens)
        if len(positions) < min_frequency:
            continue
        start = positions[0]
        surface = " ".join(_strip_edges(t) for t in raw[start:start + len(tokens)])
        out.append((-len(positions), order, Keyphrase(tokens, surface, len(positions), source="header")))
    out.sort(key=lambda x: (x[0], x[1]))
    return [kp for _, _, kp in out]
