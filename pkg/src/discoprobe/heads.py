"""Trainable probe heads over frozen features.

Three head kinds cover the seven tasks: a pair MLP for classification and
candidate scoring, a per-sentence rank labeler whose outputs are decoded into
a permutation, and a per-token binary tagger for EDU boundaries.  Heads are
single hidden layer MLPs (hidden width defaults to the input width) with a
tanh nonlinearity; only head parameters ever receive gradients.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment
from torch import nn

HEAD_PAIR_MLP = "PAIR_MLP"
HEAD_RANK_LABELER = "RANK_LABELER"
HEAD_TOKEN_TAGGER = "TOKEN_TAGGER"

MAX_RANK_CLASSES = 7

DECODE_ASSIGNMENT = "assignment"
DECODE_UNCONSTRAINED = "unconstrained"


class HeadError(Exception):
    pass


@dataclass(frozen=True)
class ProbeConfig:
    input_dim: int
    num_classes: int
    head_kind: str = HEAD_PAIR_MLP
    hidden_dim: int | None = None
    seed: int = 1

    def __post_init__(self):
        if self.head_kind not in (HEAD_PAIR_MLP, HEAD_RANK_LABELER, HEAD_TOKEN_TAGGER):
            raise HeadError(f"unknown head kind {self.head_kind!r}")
        if self.num_classes < 2:
            raise HeadError("num_classes must be at least 2")
        if self.head_kind == HEAD_RANK_LABELER and self.num_classes != MAX_RANK_CLASSES:
            raise HeadError(f"rank labeler needs {MAX_RANK_CLASSES} classes")
        if self.hidden_dim is None:
            object.__setattr__(self, "hidden_dim", self.input_dim)


class ProbeHead(nn.Module):
    """input -> hidden (tanh) -> logits.  The tagger emits one logit per token."""

    def __init__(self, config: ProbeConfig):
        super().__init__()
        self.config = config
        out = 1 if config.head_kind == HEAD_TOKEN_TAGGER else config.num_classes
        torch.manual_seed(config.seed)
        self.hidden = nn.Linear(config.input_dim, config.hidden_dim)
        self.out = nn.Linear(config.hidden_dim, out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.out(torch.tanh(self.hidden(x)))


def build_head(config: ProbeConfig) -> ProbeHead:
    return ProbeHead(config)


def _as_batch(features) -> tuple[torch.Tensor, bool]:
    x = torch.as_tensor(np.asarray(features, dtype=np.float32))
    if x.dim() == 1:
        return x.unsqueeze(0), True
    return x, False


def mlp_forward(head: ProbeHead, features) -> np.ndarray:
    """Class log-probabilities for one feature vector or a batch."""
    x, single = _as_batch(features)
    if x.shape[-1] != head.config.input_dim:
        raise HeadError(f"feature width {x.shape[-1]} != input_dim {head.config.input_dim}")
    with torch.no_grad():
        logp = torch.log_softmax(head(x), dim=-1).numpy(force=True)
    return logp[0] if single else logp


def score_candidates(head: ProbeHead, context_vec, candidate_vecs) -> int:
    """Pick the candidate whose (context, candidate) pair scores highest.

    Each pair goes through the binary head; the index with the largest
    positive-class probability wins, lowest index on ties.
    """
    if len(candidate_vecs) == 0:
        raise HeadError("no candidates to score")
    ctx = np.asarray(context_vec, dtype=np.float32)
    pairs = np.stack([np.concatenate([ctx, np.asarray(c, dtype=np.float32)]) for c in candidate_vecs])
    logp = mlp_forward(head, pairs)
    return int(np.argmax(logp[:, 1]))


def tag_tokens(head: ProbeHead, token_vectors) -> np.ndarray:
    """Per-token boundary probabilities (threshold at 0.5 downstream)."""
    if head.config.head_kind != HEAD_TOKEN_TAGGER:
        raise HeadError("tag_tokens needs a TOKEN_TAGGER head")
    x, _ = _as_batch(token_vectors)
    if x.shape[0] == 0:
        raise HeadError("empty token sequence")
    with torch.no_grad():
        probs = torch.sigmoid(head(x)).squeeze(-1).numpy(force=True)
    return probs


# ---------------------------------------------------------------------------
# Ordering: rank distributions and permutation decoding
# ---------------------------------------------------------------------------

@dataclass
class RankDistribution:
    """Per-sentence probabilities over rank classes 1..7 for an n-sentence instance."""

    probs: np.ndarray
    n: int

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.n > MAX_RANK_CLASSES:
            raise HeadError(f"at most {MAX_RANK_CLASSES} sentences supported, got {self.n}")
        if self.probs.shape != (self.n, MAX_RANK_CLASSES):
            raise HeadError(f"expected a {self.n}x{MAX_RANK_CLASSES} probability grid")
        sums = self.probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise HeadError("rank probability rows must sum to 1")


def rank_distribution(head: ProbeHead, sentence_vecs) -> RankDistribution:
    if head.config.head_kind != HEAD_RANK_LABELER:
        raise HeadError("rank_distribution needs a RANK_LABELER head")
    logp = mlp_forward(head, sentence_vecs)
    return RankDistribution(np.exp(logp), len(sentence_vecs))


def decode_order(dist: RankDistribution, mode: str = DECODE_ASSIGNMENT) -> list[int]:
    """Assign distinct ranks 1..n to the sentences, maximizing sum log P(r|s).

    The default mode solves the optimal assignment problem and then resolves
    exact ties toward the lexicographically smallest permutation.  The
    unconstrained mode takes each sentence's argmax rank independently, so
    its output may repeat ranks.
    """
    n = dist.n
    log_p = np.log(np.maximum(dist.probs[:, :n], 1e-300))
    if mode == DECODE_UNCONSTRAINED:
        return [int(r) + 1 for r in np.argmax(log_p, axis=1)]
    if mode != DECODE_ASSIGNMENT:
        raise HeadError(f"unknown decode mode {mode!r}")

    rows, cols = linear_sum_assignment(-log_p)
    best_total = math.fsum(log_p[r, c] for r, c in zip(rows, cols))

    # Fix ranks sentence by sentence, taking the smallest rank that still
    # admits a completion with the optimal total.  fsum totals are exactly
    # rounded, so equal-valued ties compare equal regardless of order.
    chosen: list[int] = []
    prefix: list[float] = []
    free = list(range(n))
    for i in range(n):
        placed = False
        for r in free:
            rest_rows = list(range(i + 1, n))
            rest_cols = [c for c in free if c != r]
            entries = prefix + [log_p[i, r]]
            if rest_rows:
                sub = log_p[np.ix_(rest_rows, rest_cols)]
                rr, cc = linear_sum_assignment(-sub)
                entries = entries + [sub[a, b] for a, b in zip(rr, cc)]
            if math.fsum(entries) == best_total:
                chosen.append(r)
                prefix.append(log_p[i, r])
                free.remove(r)
                placed = True
                break
        if not placed:
            # float pathology: fall back to exhaustive lexicographic search
            return _exhaustive_order(log_p)
    return [r + 1 for r in chosen]


def _exhaustive_order(log_p: np.ndarray) -> list[int]:
    n = log_p.shape[0]
    best, best_total = None, -np.inf
    for perm in itertools.permutations(range(n)):
        total = math.fsum(log_p[i, r] for i, r in enumerate(perm))
        if total > best_total:
            best, best_total = perm, total
    return [r + 1 for r in best]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_head(head: ProbeHead, path) -> None:
    path = Path(path)
    torch.save(head.state_dict(), path)
    path.with_suffix(".json").write_text(json.dumps(asdict(head.config), indent=1), encoding="utf-8")


def load_head(path) -> ProbeHead:
    path = Path(path)
    config = ProbeConfig(**json.loads(path.with_suffix(".json").read_text(encoding="utf-8")))
    head = ProbeHead(config)
    head.load_state_dict(torch.load(path, weights_only=True))
    head.eval()
    return head
