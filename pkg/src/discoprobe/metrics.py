"""Task metrics, per-seed statistics, and cross-task score aggregation.

Metrics are implemented from their definitions: accuracy as the exact-match
fraction, Spearman's rho through the closed form 1 - 6*sum(d^2)/(n(n^2-1))
for distinct ranks, and macro-F1 as the unweighted mean of per-class F1.
Aggregation min-max normalizes each task's full model-by-layer grid and
averages the normalized grids across tasks.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd


class MetricError(Exception):
    pass


def accuracy(preds: Sequence, golds: Sequence) -> float:
    """Fraction of positions where prediction equals gold."""
    if len(preds) != len(golds):
        raise MetricError(f"length mismatch: {len(preds)} vs {len(golds)}")
    if len(preds) == 0:
        raise MetricError("empty input")
    return sum(p == g for p, g in zip(preds, golds)) / len(preds)


def _check_permutation(ranks: Sequence[int], what: str) -> None:
    if sorted(ranks) != list(range(1, len(ranks) + 1)):
        raise MetricError(f"{what} is not a permutation of 1..{len(ranks)}: {list(ranks)}")


def spearman(pred_ranks: Sequence[int], gold_ranks: Sequence[int]) -> float:
    """Spearman's rho between two rank permutations of 1..n (n >= 2)."""
    if len(pred_ranks) != len(gold_ranks):
        raise MetricError("rank vectors differ in length")
    n = len(pred_ranks)
    if n < 2:
        raise MetricError("need at least 2 items for a rank correlation")
    _check_permutation(pred_ranks, "pred_ranks")
    _check_permutation(gold_ranks, "gold_ranks")
    d2 = sum((p - g) ** 2 for p, g in zip(pred_ranks, gold_ranks))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def mean_spearman(pairs: Iterable[tuple[Sequence[int], Sequence[int]]]) -> float:
    """Dataset-level ordering score: unweighted mean of per-instance rho."""
    rhos = [spearman(p, g) for p, g in pairs]
    if not rhos:
        raise MetricError("no instances")
    return float(np.mean(rhos))


def rank_correlation(pred_ranks: Sequence[float], gold_ranks: Sequence[float]) -> float:
    """Pearson correlation of rank vectors; tolerates tied (repeated) ranks.

    Used when the unconstrained decoder emits non-permutation rank vectors.
    Degenerate constant vectors score 0.
    """
    p = np.asarray(pred_ranks, dtype=float)
    g = np.asarray(gold_ranks, dtype=float)
    if p.std() == 0 or g.std() == 0:
        return 0.0
    return float(np.corrcoef(p, g)[0, 1])


def macro_f1(pred_labels: Sequence, gold_labels: Sequence, classes: Sequence = (0, 1)) -> float:
    """Unweighted mean of per-class F1 over ``classes``.

    A class absent from both predictions and golds contributes an F1 of 0,
    keeping the metric conservative.
    """
    if len(pred_labels) != len(gold_labels):
        raise MetricError(f"length mismatch: {len(pred_labels)} vs {len(gold_labels)}")
    if len(pred_labels) == 0:
        raise MetricError("empty input")
    scores = []
    for c in classes:
        tp = sum(1 for p, g in zip(pred_labels, gold_labels) if p == c and g == c)
        fp = sum(1 for p, g in zip(pred_labels, gold_labels) if p == c and g != c)
        fn = sum(1 for p, g in zip(pred_labels, gold_labels) if p != c and g == c)
        if tp == 0:
            scores.append(0.0)
        else:
            precision = tp / (tp + fp)
            recall = tp / (tp + fn)
            scores.append(2 * precision * recall / (precision + recall))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Seed statistics and the score matrix
# ---------------------------------------------------------------------------

def seed_stats(records: Iterable) -> pd.DataFrame:
    """Mean and sample standard deviation over seeds per (model, layer, task).

    Returns a frame with columns model, layer, task, mean, sd, n_seeds.
    Cells backed by a single record get sd 0.0 (with a warning).
    """
    rows = [
        {"model": r.model, "layer": r.layer, "task": r.task, "value": r.value}
        for r in records
    ]
    if not rows:
        return pd.DataFrame(columns=["model", "layer", "task", "mean", "sd", "n_seeds"])
    df = pd.DataFrame(rows)
    grouped = df.groupby(["model", "layer", "task"])["value"]
    out = grouped.agg(mean="mean", sd=lambda v: v.std(ddof=1), n_seeds="count").reset_index()
    singles = out["n_seeds"] == 1
    if singles.any():
        warnings.warn(f"{int(singles.sum())} cells have a single seed; their sd is 0")
        out.loc[singles, "sd"] = 0.0
    return out


@dataclass
class ScoreMatrix:
    """Per-task grids of mean-over-seed scores (models x layers), plus sds."""

    scores: dict[str, pd.DataFrame] = field(default_factory=dict)
    sds: dict[str, pd.DataFrame] = field(default_factory=dict)

    @property
    def tasks(self) -> list[str]:
        return sorted(self.scores)

    @property
    def models(self) -> list[str]:
        models = set()
        for frame in self.scores.values():
            models.update(frame.index)
        return sorted(models)

    @property
    def layers(self) -> list[int]:
        layers = set()
        for frame in self.scores.values():
            layers.update(frame.columns)
        return sorted(layers)

    def check_complete(self) -> None:
        models, layers = self.models, self.layers
        for task, frame in self.scores.items():
            missing = (
                sorted(set(models) - set(frame.index))
                or sorted(set(layers) - set(frame.columns))
                or ("NaN" if frame.isna().any().any() else None)
            )
            if missing:
                raise MetricError(f"task {task!r} grid is incomplete: {missing}")

    @classmethod
    def from_stats(cls, stats: pd.DataFrame) -> "ScoreMatrix":
        scores, sds = {}, {}
        for task, part in stats.groupby("task"):
            scores[task] = part.pivot(index="model", columns="layer", values="mean")
            if "sd" in part:
                sds[task] = part.pivot(index="model", columns="layer", values="sd")
        return cls(scores, sds)

    @classmethod
    def from_records(cls, records: Iterable) -> "ScoreMatrix":
        return cls.from_stats(seed_stats(records))

    @classmethod
    def from_csv(cls, path) -> "ScoreMatrix":
        """Read rows of ``model,layer,task,mean[,sd]``."""
        df = pd.read_csv(path)
        required = {"model", "layer", "task", "mean"}
        if not required.issubset(df.columns):
            raise MetricError(f"score CSV needs columns {sorted(required)}")
        if "sd" not in df.columns:
            df["sd"] = 0.0
        return cls.from_stats(df)

    def to_csv(self, path) -> None:
        rows = []
        for task, frame in self.scores.items():
            sd_frame = self.sds.get(task)
            for model in frame.index:
                for layer in frame.columns:
                    sd = float(sd_frame.loc[model, layer]) if sd_frame is not None else 0.0
                    rows.append({"model": model, "layer": int(layer), "task": task,
                                 "mean": float(frame.loc[model, layer]), "sd": sd})
        pd.DataFrame(rows).to_csv(path, index=False)


def aggregate(matrix: ScoreMatrix) -> pd.DataFrame:
    """Cross-task normalized average per (model, layer).

    Each task's grid is min-max normalized over all of its cells, then the
    normalized grids are averaged across tasks.  A constant grid normalizes
    to 0.5 everywhere (with a warning) to keep the average defined.
    """
    matrix.check_complete()
    normalized = []
    for task in matrix.tasks:
        frame = matrix.scores[task].astype(float)
        lo, hi = frame.values.min(), frame.values.max()
        if hi == lo:
            warnings.warn(f"task {task!r} grid is constant; normalizing to 0.5")
            normalized.append(frame * 0 + 0.5)
        else:
            normalized.append((frame - lo) / (hi - lo))
    total = normalized[0].copy()
    for frame in normalized[1:]:
        total = total + frame
    return total / len(normalized)


# ---------------------------------------------------------------------------
# Ordering breakdown
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderingDetail:
    """One ordering instance's result: sentence count and its Spearman rho."""

    model: str
    layer: int
    seed: int
    n: int
    rho: float

    def to_json(self) -> dict:
        return {"model": self.model, "layer": self.layer, "seed": self.seed,
                "n": self.n, "rho": self.rho}

    @classmethod
    def from_json(cls, rec: dict) -> "OrderingDetail":
        return cls(rec["model"], rec["layer"], rec["seed"], rec["n"], rec["rho"])


def save_ordering_details(path, details: Iterable[OrderingDetail]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for d in details:
            fh.write(json.dumps(d.to_json()) + "\n")


def load_ordering_details(path) -> list[OrderingDetail]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(OrderingDetail.from_json(json.loads(line)))
    return out


def ordering_breakdown(
    details: Sequence[OrderingDetail], model: str | None = None
) -> tuple[str, int, dict[int, float]]:
    """Per-sentence-count mean rho at a model's best ordering layer.

    The best layer is the one with the highest overall mean rho.  Returns
    (model, best_layer, {n: mean rho}).
    """
    if not details:
        raise MetricError("no per-instance ordering details")
    if model is not None:
        details = [d for d in details if d.model == model]
        if not details:
            raise MetricError(f"no ordering details for model {model!r}")
    models = {d.model for d in details}
    if len(models) > 1:
        raise MetricError(f"details span several models {sorted(models)}; pass model=")
    model = models.pop()

    by_layer: dict[int, list[float]] = {}
    for d in details:
        by_layer.setdefault(d.layer, []).append(d.rho)
    best_layer = max(sorted(by_layer), key=lambda l: np.mean(by_layer[l]))

    by_n: dict[int, list[float]] = {}
    for d in details:
        if d.layer == best_layer:
            by_n.setdefault(d.n, []).append(d.rho)
    return model, best_layer, {n: float(np.mean(by_n[n])) for n in sorted(by_n)}
