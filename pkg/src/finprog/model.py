"""Desk-scale reference encoder with the ranking, operator and masking losses.

The encoder is a bag of embeddings followed by one tanh layer.  It exists so
the three pretraining objectives can be trained and gradient-checked end to
end; the losses only consume ``h_cls`` and per-token representations and so
do not depend on the encoder's internals.

Representations for a token sequence ``x`` of length ``n``::

    e_bar = mean(E[x])
    h_cls = tanh(W e_bar + b)
    h_t   = tanh(W (E[x_t] + e_bar) + b)

Parameters of the encoder and of the heads each live in one flat float64
vector; the matrices are views into it.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dsl import Operator
from .keyphrase import normalize_token
from .pretrain import MASK, MaskedExample, OperatorExample, RankPair

__all__ = [
    "UNK",
    "N_OPERATORS",
    "SpanOutOfRange",
    "AllCorporaEmpty",
    "vocab_key",
    "build_vocab",
    "TinyEncoder",
    "LossHeads",
    "LossResult",
    "loss_vir",
    "loss_vop",
    "loss_vkm",
    "rank_score",
    "TASKS",
    "TrainResult",
    "make_batches",
    "train_multitask",
    "evaluate",
    "write_metrics_csv",
    "save_checkpoint",
    "load_checkpoint",
]

UNK = "[UNK]"
N_OPERATORS = len(Operator)
TASKS = ("vir", "vop", "vkm")
_LOSSES = {}


class SpanOutOfRange(IndexError):
    pass


class AllCorporaEmpty(ValueError):
    pass


def vocab_key(token: str) -> str:
    if token in (MASK, UNK):
        return token
    key = normalize_token(token)
    return key if key else token.lower()


def build_vocab(tokens: Iterable[str], specials: Sequence[str] = (UNK, MASK)) -> dict[str, int]:
    vocab = {s: i for i, s in enumerate(specials)}
    for key in sorted({vocab_key(t) for t in tokens} - set(specials)):
        vocab[key] = len(vocab)
    return vocab


class TinyEncoder:
    def __init__(self, vocab: dict[str, int], d: int = 32, params: np.ndarray | None = None,
                 seed: int = 0, scale: float = 0.5):
        self.vocab = dict(vocab)
        self.d = d
        v = len(self.vocab)
        n = v * d + d * d + d
        if params is None:
            rng = np.random.default_rng(seed)
            params = np.concatenate([
                rng.normal(0.0, scale, v * d),
                rng.normal(0.0, 1.0 / np.sqrt(d), d * d),
                np.zeros(d),
            ])
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise ValueError(f"expected {n} encoder parameters, got {params.shape}")
        self.params = params
        self.E = params[: v * d].reshape(v, d)
        self.W = params[v * d: v * d + d * d].reshape(d, d)
        self.b = params[v * d + d * d:]

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def ids(self, tokens: Iterable[str]) -> np.ndarray:
        unk = self.vocab[UNK]
        return np.array([self.vocab.get(vocab_key(t), unk) for t in tokens], dtype=np.int64)

    def encode(self, ids: np.ndarray, positions: Sequence[int] = ()):
        """Return ``h_cls``, the representations at ``positions`` and a backward cache."""
        if len(ids) == 0:
            raise ValueError("empty sequence")
        e_bar = self.E[ids].mean(axis=0)
        h_cls = np.tanh(self.W @ e_bar + self.b)
        pos = np.asarray(positions, dtype=np.int64)
        u = self.E[ids[pos]] + e_bar if len(pos) else np.zeros((0, self.d))
        h_pos = np.tanh(u @ self.W.T + self.b)
        return h_cls, h_pos, (ids, pos, e_bar, u, h_cls, h_pos)

    def backward(self, cache, g_cls: np.ndarray | None, g_pos: np.ndarray | None) -> np.ndarray:
        ids, pos, e_bar, u, h_cls, h_pos = cache
        grad = np.zeros_like(self.params)
        v, d = self.E.shape
        dE = grad[: v * d].reshape(v, d)
        dW = grad[v * d: v * d + d * d].reshape(d, d)
        db = grad[v * d + d * d:]
        de_bar = np.zeros(d)
        if g_cls is not None:
            da = g_cls * (1.0 - h_cls ** 2)
            dW += np.outer(da, e_bar)
            db += da
            de_bar += da @ self.W
        if g_pos is not None and len(pos):
            da = g_pos * (1.0 - h_pos ** 2)
            dW += da.T @ u
            db += da.sum(axis=0)
            du = da @ self.W
            np.add.at(dE, ids[pos], du)
            de_bar += du.sum(axis=0)
        np.add.at(dE, ids, de_bar / len(ids))
        return grad


class LossHeads:
    """Ranking head (d->1), operator head (d->10) and masked-token head (d->|V|)."""

    def __init__(self, d: int, vocab_size: int, params: np.ndarray | None = None,
                 seed: int = 0, scale: float | None = None):
        self.d = d
        self.vocab_size = vocab_size
        sizes = [d, 1, N_OPERATORS * d, N_OPERATORS, vocab_size * d, vocab_size]
        n = sum(sizes)
        if params is None:
            rng = np.random.default_rng(seed + 1)
            s = 1.0 / np.sqrt(d) if scale is None else scale
            params = np.concatenate([
                rng.normal(0.0, s, d), np.zeros(1),
                rng.normal(0.0, s, N_OPERATORS * d), np.zeros(N_OPERATORS),
                rng.normal(0.0, s, vocab_size * d), np.zeros(vocab_size),
            ])
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise ValueError(f"expected {n} head parameters, got {params.shape}")
        self.params = params
        offsets = np.cumsum([0, *sizes])
        views = [params[offsets[i]:offsets[i + 1]] for i in range(len(sizes))]
        self.rank_w, self.rank_b = views[0], views[1]
        self.op_W, self.op_b = views[2].reshape(N_OPERATORS, d), views[3]
        self.mlm_W, self.mlm_b = views[4].reshape(vocab_size, d), views[5]
        self._views = views

    @classmethod
    def zeros(cls, d: int, vocab_size: int) -> "LossHeads":
        n = d + 1 + N_OPERATORS * (d + 1) + vocab_size * (d + 1)
        return cls(d, vocab_size, np.zeros(n))

    def zeros_like_grad(self):
        grad = np.zeros_like(self.params)
        offsets = np.cumsum([0, *[len(v) for v in self._views]])
        views = [grad[offsets[i]:offsets[i + 1]] for i in range(len(self._views))]
        return grad, views


@dataclass
class LossResult:
    loss: float
    grad_encoder: np.ndarray
    grad_heads: np.ndarray
    correct: float


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    z = np.exp(x)
    return z / (1.0 + z)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    return logits - (m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True)))


def _set_tokens(question: str, sentences: Sequence[str]) -> list[str]:
    return " ".join([question, *sentences]).split()


def rank_score(question: str, sentences: Sequence[str], enc: TinyEncoder, heads: LossHeads) -> float:
    h, _, _ = enc.encode(enc.ids(_set_tokens(question, sentences)))
    return float(np.tanh(heads.rank_w @ h + heads.rank_b[0]))


def loss_vir(pair: RankPair, enc: TinyEncoder, heads: LossHeads) -> LossResult:
    """Pairwise ranking loss ``-log sigmoid(s_u - s_v)`` with ``s = tanh(FFN(h_cls))``."""
    sides = []
    for s in (pair.higher, pair.lower):
        h, _, cache = enc.encode(enc.ids(_set_tokens(pair.question, s.sentences)))
        score = float(np.tanh(heads.rank_w @ h + heads.rank_b[0]))
        sides.append((h, score, cache))
    (h_u, s_u, c_u), (h_v, s_v, c_v) = sides
    diff = s_u - s_v
    loss = float(np.logaddexp(0.0, -diff))
    g = -_sigmoid(-diff)
    grad_h, views = heads.zeros_like_grad()
    grad_e = np.zeros_like(enc.params)
    for h, s, cache, ds in ((h_u, s_u, c_u, g), (h_v, s_v, c_v, -g)):
        dz = ds * (1.0 - s * s)
        views[0] += dz * h
        views[1] += dz
        grad_e += enc.backward(cache, dz * heads.rank_w, None)
    return LossResult(loss, grad_e, grad_h, float(s_u > s_v))


def loss_vop(exm: OperatorExample, enc: TinyEncoder, heads: LossHeads) -> LossResult:
    """Operator classification from the mean of the operands' first-token representations."""
    tokens = exm.sequence_tokens()
    positions = exm.sequence_positions()
    if len(positions) < 2:
        raise ValueError("operator prediction needs at least two operands")
    if any(p < 0 or p >= len(tokens) for p in positions):
        raise SpanOutOfRange(f"operand position out of range for sequence of length {len(tokens)}")
    _, h_pos, cache = enc.encode(enc.ids(tokens), positions)
    m = len(positions)
    h_op = h_pos.mean(axis=0)
    logits = heads.op_W @ h_op + heads.op_b
    logp = _log_softmax(logits)
    y = exm.label.index
    loss = float(-logp[y])
    dlogits = np.exp(logp)
    dlogits[y] -= 1.0
    grad_h, views = heads.zeros_like_grad()
    views[2] += np.outer(dlogits, h_op).ravel()
    views[3] += dlogits
    dh = dlogits @ heads.op_W
    grad_e = enc.backward(cache, None, np.tile(dh / m, (m, 1)))
    return LossResult(loss, grad_e, grad_h, float(int(np.argmax(logits)) == y))


def loss_vkm(exm: MaskedExample, enc: TinyEncoder, heads: LossHeads) -> LossResult:
    """Mean cross-entropy of the original tokens at ``[MASK]`` positions.

    Targets listed for positions that do not hold the mask sentinel are ignored.
    """
    targets = [(p, t) for p, t in exm.targets if 0 <= p < len(exm.tokens) and exm.tokens[p] == MASK]
    if not targets:
        raise ValueError("masked example has no mask positions")
    positions = [p for p, _ in targets]
    y = enc.ids([t for _, t in targets])
    _, h_pos, cache = enc.encode(enc.ids(exm.tokens), positions)
    m = len(positions)
    logits = h_pos @ heads.mlm_W.T + heads.mlm_b
    logp = _log_softmax(logits)
    rows = np.arange(m)
    loss = float(-logp[rows, y].mean())
    dlogits = np.exp(logp)
    dlogits[rows, y] -= 1.0
    dlogits /= m
    grad_h, views = heads.zeros_like_grad()
    views[4] += (dlogits.T @ h_pos).ravel()
    views[5] += dlogits.sum(axis=0)
    grad_e = enc.backward(cache, None, dlogits @ heads.mlm_W)
    return LossResult(loss, grad_e, grad_h, float((np.argmax(logits, axis=1) == y).mean()))


_LOSSES.update(vir=loss_vir, vop=loss_vop, vkm=loss_vkm)


def _instance_tokens(task: str, inst) -> list[str]:
    if task == "vir":
        return (_set_tokens(inst.question, inst.higher.sentences)
                + _set_tokens(inst.question, inst.lower.sentences))
    if task == "vop":
        return inst.sequence_tokens()
    return list(inst.tokens) + [t for _, t in inst.targets]


@dataclass
class TrainResult:
    encoder: TinyEncoder
    heads: LossHeads
    log: list[dict] = field(default_factory=list)


def _as_corpora(corpora) -> dict[str, list]:
    if isinstance(corpora, dict):
        return {t: list(corpora.get(t) or []) for t in TASKS}
    return {t: list(c or []) for t, c in zip(TASKS, corpora)}


def make_batches(corpora, batch_size: int) -> list[tuple[str, list[int]]]:
    """Fixed single-task mini-batches as ``(task, instance indices)``."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    corpora = _as_corpora(corpora)
    batches = []
    for task in TASKS:
        n = len(corpora[task])
        for start in range(0, n, batch_size):
            batches.append((task, list(range(start, min(start + batch_size, n)))))
    return batches


def train_multitask(corpora, batch_size: int = 4, steps: int | None = None, lr: float = 0.1,
                    seed: int = 0, d: int = 32, epochs: int = 1,
                    vocab: dict[str, int] | None = None) -> TrainResult:
    """Multi-task training with homogeneous mini-batches.

    ``corpora`` maps task name ("vir", "vop", "vkm") to its instances, or is
    a 3-sequence in that order.  The union of fixed batches is shuffled
    once per epoch and each step applies plain gradient descent on one
    batch's task loss.  Runs ``steps`` updates, or ``epochs`` full passes
    when ``steps`` is None.
    """
    corpora = _as_corpora(corpora)
    if not any(corpora.values()):
        raise AllCorporaEmpty("every pretraining corpus is empty")
    if vocab is None:
        vocab = build_vocab(t for task in TASKS for inst in corpora[task] for t in _instance_tokens(task, inst))
    enc = TinyEncoder(vocab, d, seed=seed)
    heads = LossHeads(d, enc.vocab_size, seed=seed)
    batches = make_batches(corpora, batch_size)
    total = steps if steps is not None else epochs * len(batches)
    rng = random.Random(seed)
    log = []
    step = 0
    while step < total:
        order = list(batches)
        rng.shuffle(order)
        for task, idx in order:
            if step >= total:
                break
            loss_fn = _LOSSES[task]
            g_e = np.zeros_like(enc.params)
            g_h = np.zeros_like(heads.params)
            losses, correct = [], []
            for i in idx:
                r = loss_fn(corpora[task][i], enc, heads)
                g_e += r.grad_encoder
                g_h += r.grad_heads
                losses.append(r.loss)
                correct.append(r.correct)
            enc.params -= lr * g_e / len(idx)
            heads.params -= lr * g_h / len(idx)
            log.append({
                "step": step,
                "task": task,
                "loss": float(np.mean(losses)),
                "accuracy": float(np.mean(correct)),
                "instances": list(idx),
            })
            step += 1
    return TrainResult(enc, heads, log)


def evaluate(enc: TinyEncoder, heads: LossHeads, instances: Sequence, task: str) -> dict:
    """Mean loss and accuracy of ``task`` over ``instances``."""
    loss_fn = _LOSSES[task]
    results = [loss_fn(inst, enc, heads) for inst in instances]
    if not results:
        return {"loss": float("nan"), "accuracy": float("nan"), "n": 0}
    return {
        "loss": float(np.mean([r.loss for r in results])),
        "accuracy": float(np.mean([r.correct for r in results])),
        "n": len(results),
    }


def write_metrics_csv(log: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "task", "loss", "accuracy"])
        for row in log:
            writer.writerow([row["step"], row["task"], repr(row["loss"]), repr(row["accuracy"])])


def save_checkpoint(path: str | Path, enc: TinyEncoder, heads: LossHeads) -> None:
    vocab = sorted(enc.vocab, key=enc.vocab.get)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({
            "d": enc.d,
            "vocab": vocab,
            "encoder": enc.params.tolist(),
            "heads": heads.params.tolist(),
        }, f)


def load_checkpoint(path: str | Path) -> tuple[TinyEncoder, LossHeads]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    vocab = {t: i for i, t in enumerate(data["vocab"])}
    enc = TinyEncoder(vocab, data["d"], np.array(data["encoder"]))
    heads = LossHeads(data["d"], len(vocab), np.array(data["heads"]))
    return enc, heads
