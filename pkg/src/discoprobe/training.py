"""Probe training over cached frozen features.

Optimization follows one fixed regime: Adam with epsilon 1e-8 at learning
rate 1e-3, gradient norms clipped at 1.0, a linear warmup over 10% of the
total steps, up to 20 epochs with dev-based early stopping (patience 5 for
NSP-style tasks, 10 for ordering and connectives).  Each run is deterministic
given its seed; reported results average three seeds by default.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from . import metrics
from .encoder import (
    CANDIDATE_BUDGET,
    CONTEXT_BUDGET,
    POOL_MEAN,
    RST_SEGMENT_BUDGET,
    SENTENCE_BUDGET,
    EncoderSpec,
    FeatureCache,
    encode_layers_cached,
    encode_token_runs,
)
from .heads import (
    DECODE_ASSIGNMENT,
    HEAD_PAIR_MLP,
    HEAD_RANK_LABELER,
    HEAD_TOKEN_TAGGER,
    MAX_RANK_CLASSES,
    ProbeConfig,
    ProbeHead,
    RankDistribution,
    decode_order,
)
from .metrics import OrderingDetail
from .tasks import (
    TASK_CLOZE,
    TASK_CONNECTIVE,
    TASK_NSP,
    TASK_NUCLEARITY,
    TASK_ORDERING,
    TASK_RELATION,
    TASK_SEGMENTATION,
    DatasetSplit,
)


class TrainingError(Exception):
    pass


DEFAULT_SEEDS = (1, 2, 3)

#: Early-stopping patience per task (ordering and connectives get 10 epochs).
TASK_PATIENCE = {
    TASK_NSP: 5,
    TASK_CLOZE: 5,
    TASK_NUCLEARITY: 5,
    TASK_RELATION: 5,
    TASK_SEGMENTATION: 5,
    TASK_ORDERING: 10,
    TASK_CONNECTIVE: 10,
}

TASK_METRIC = {
    TASK_NSP: "accuracy",
    TASK_CLOZE: "accuracy",
    TASK_CONNECTIVE: "accuracy",
    TASK_NUCLEARITY: "accuracy",
    TASK_RELATION: "accuracy",
    TASK_ORDERING: "spearman",
    TASK_SEGMENTATION: "macro_f1",
}

METRIC_RANGE = {"accuracy": (0.0, 1.0), "macro_f1": (0.0, 1.0), "spearman": (-1.0, 1.0)}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    adam_epsilon: float = 1e-8
    max_grad_norm: float = 1.0
    max_epochs: int = 20
    warmup_fraction: float = 0.10
    patience: int = 5
    batch_size: int = 32
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self):
        if not 0 < self.warmup_fraction < 1:
            raise TrainingError("warmup_fraction must be in (0, 1)")
        if self.patience > self.max_epochs:
            raise TrainingError("patience cannot exceed max_epochs")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise TrainingError("batch_size and max_epochs must be positive")


def train_config_for_task(task: str, **overrides) -> TrainConfig:
    params = {"patience": TASK_PATIENCE[task]}
    params.update(overrides)
    return TrainConfig(**params)


def warmup_steps(total_steps: int, fraction: float = 0.10) -> int:
    """Linear warmup length: 10% of the total step count, rounded up."""
    return math.ceil(fraction * total_steps)


@dataclass(frozen=True)
class RunRecord:
    """One probing result: (model, layer, task, seed) -> metric value.

    ``layer_kind`` marks whether the layer index reads encoder or decoder
    states (informative for 6+6 encoder-decoder models).
    """

    model: str
    layer: int
    task: str
    seed: int
    metric_name: str
    value: float
    epochs_trained: int
    wall_time_s: float
    layer_kind: str | None = None

    def __post_init__(self):
        lo, hi = METRIC_RANGE[self.metric_name]
        if not lo <= self.value <= hi:
            raise TrainingError(
                f"{self.metric_name} value {self.value} outside [{lo}, {hi}]"
            )

    def to_json(self) -> dict:
        rec = {"model": self.model, "layer": self.layer, "task": self.task,
               "seed": self.seed, "metric": self.metric_name, "value": self.value,
               "epochs": self.epochs_trained, "wall_time_s": self.wall_time_s}
        if self.layer_kind is not None:
            rec["layer_kind"] = self.layer_kind
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "RunRecord":
        return cls(rec["model"], rec["layer"], rec["task"], rec["seed"],
                   rec["metric"], rec["value"], rec["epochs"], rec["wall_time_s"],
                   rec.get("layer_kind"))


def append_records(path, records: Sequence[RunRecord]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")


def load_records(path) -> list[RunRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(RunRecord.from_json(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Featurized task data
# ---------------------------------------------------------------------------

@dataclass
class ProbeData:
    """Frozen features and labels for one split of one task.

    ``group`` ties rows to instances where an instance spans several rows
    (candidate pairs, sentences, tokens); ``gold`` holds the per-instance
    correct candidate index for selection tasks.
    """

    task: str
    X: np.ndarray
    y: np.ndarray
    group: np.ndarray | None = None
    gold: np.ndarray | None = None

    def __post_init__(self):
        if len(self.X) != len(self.y):
            raise TrainingError(f"feature/label count mismatch: {len(self.X)} vs {len(self.y)}")

    @property
    def n_rows(self) -> int:
        return len(self.X)


def head_kind_for_task(task: str) -> str:
    if task == TASK_ORDERING:
        return HEAD_RANK_LABELER
    if task == TASK_SEGMENTATION:
        return HEAD_TOKEN_TAGGER
    return HEAD_PAIR_MLP


def probe_config_for(task: str, data: ProbeData, seed: int, hidden_dim: int | None = None) -> ProbeConfig:
    kind = head_kind_for_task(task)
    if kind == HEAD_RANK_LABELER:
        classes = MAX_RANK_CLASSES
    elif kind == HEAD_TOKEN_TAGGER:
        classes = 2
    else:
        classes = max(2, int(data.y.max()) + 1)
    return ProbeConfig(input_dim=data.X.shape[1], num_classes=classes,
                       head_kind=kind, hidden_dim=hidden_dim, seed=seed)


# -- featurizers ------------------------------------------------------------

def featurize_selection(instances, spec: EncoderSpec, layers, pooling=None,
                        cache: FeatureCache | None = None, batch_size: int = 32,
                        context_pooling: str = "whole") -> dict[int, ProbeData]:
    """NSP and cloze: one row per (context, candidate) pair, binary labels.

    Contexts are pooled as a single segment (``context_pooling="whole"``) so
    the head input width stays constant across context sizes.
    """
    if context_pooling != "whole":
        raise TrainingError(f"unsupported context_pooling {context_pooling!r}")
    texts, budgets = [], []
    ctx_index, cand_index, gold, task = [], [], [], None
    for inst in instances:
        task = inst.task if hasattr(inst, "task") else TASK_CLOZE
        if task == TASK_CLOZE or not hasattr(inst, "segments"):
            context, cands, label = inst.context, inst.endings, inst.label
        else:
            context, cands, label = " ".join(inst.segments), inst.candidates, inst.label
        ctx_index.append(len(texts))
        texts.append(context)
        budgets.append(CONTEXT_BUDGET)
        row = []
        for c in cands:
            row.append(len(texts))
            texts.append(c)
            budgets.append(CANDIDATE_BUDGET)
        cand_index.append(row)
        gold.append(label)

    vecs = encode_layers_cached(spec, texts, layers, pooling, budgets, cache, batch_size)
    out = {}
    for layer, V in vecs.items():
        X, y, group = [], [], []
        for i, (ci, row) in enumerate(zip(ctx_index, cand_index)):
            for j, ki in enumerate(row):
                X.append(np.concatenate([V[ci], V[ki]]))
                y.append(1 if j == gold[i] else 0)
                group.append(i)
        out[layer] = ProbeData(task, np.stack(X), np.array(y, dtype=np.int64),
                               np.array(group, dtype=np.int64), np.array(gold, dtype=np.int64))
    return out


def featurize_pairs(instances, spec: EncoderSpec, layers, pooling=None,
                    cache: FeatureCache | None = None, batch_size: int = 32,
                    label_inventory: Sequence | None = None,
                    budget=RST_SEGMENT_BUDGET) -> tuple[dict[int, ProbeData], list]:
    """Two-segment classification (connective, nuclearity, relation).

    Returns the per-layer data plus the label inventory used for class ids
    (built from the given instances when not supplied).
    """
    if label_inventory is None:
        label_inventory = sorted({inst.label for inst in instances})
    label_ids = {lab: i for i, lab in enumerate(label_inventory)}
    texts = []
    for inst in instances:
        if len(inst.segments) != 2:
            raise TrainingError("pair tasks need exactly two segments")
        texts.extend(inst.segments)
    budgets = [budget] * len(texts)
    vecs = encode_layers_cached(spec, texts, layers, pooling, budgets, cache, batch_size)
    labels = []
    for inst in instances:
        if inst.label not in label_ids:
            raise TrainingError(f"label {inst.label!r} missing from the inventory")
        labels.append(label_ids[inst.label])
    y = np.array(labels, dtype=np.int64)
    out = {}
    for layer, V in vecs.items():
        X = np.concatenate([V[0::2], V[1::2]], axis=1)
        out[layer] = ProbeData(instances[0].task, X, y)
    return out, list(label_inventory)


def featurize_ordering(instances, spec: EncoderSpec, layers,
                       cache: FeatureCache | None = None, batch_size: int = 32) -> dict[int, ProbeData]:
    """Sentence ordering: one mean-pooled row per sentence, rank classes 0..6."""
    texts, group, y = [], [], []
    for i, inst in enumerate(instances):
        for sent, rank in zip(inst.sentences, inst.gold_ranks):
            texts.append(sent)
            group.append(i)
            y.append(rank - 1)
    vecs = encode_layers_cached(spec, texts, layers, POOL_MEAN,
                                SENTENCE_BUDGET, cache, batch_size)
    return {
        layer: ProbeData(TASK_ORDERING, V, np.array(y, dtype=np.int64),
                         np.array(group, dtype=np.int64))
        for layer, V in vecs.items()
    }


def featurize_segmentation(instances, spec: EncoderSpec, layers,
                           batch_size: int = 32) -> dict[int, ProbeData]:
    """EDU segmentation: one row per subword token of the concatenated EDUs.

    Token counts come from the encoder's own tokenizer applied per EDU, so
    they are only guaranteed to line up with instances built with that same
    tokenizer (see ``encoder.subword_tokenizer``).
    """
    out = {layer: {"X": [], "y": [], "group": []} for layer in layers}
    for i, inst in enumerate(instances):
        pieces = inst.edu_texts if inst.edu_texts else (inst.text,)
        for layer in layers:
            vectors, counts = encode_token_runs(spec, pieces, layer)
            if len(vectors) != len(inst.boundary_labels):
                raise TrainingError(
                    f"instance {i}: {len(vectors)} encoder tokens vs "
                    f"{len(inst.boundary_labels)} labels; rebuild the dataset with "
                    "this encoder's tokenizer"
                )
            out[layer]["X"].append(vectors)
            out[layer]["y"].append(np.array(inst.boundary_labels, dtype=np.int64))
            out[layer]["group"].append(np.full(len(vectors), i, dtype=np.int64))
    return {
        layer: ProbeData(TASK_SEGMENTATION, np.concatenate(d["X"]),
                         np.concatenate(d["y"]), np.concatenate(d["group"]))
        for layer, d in out.items()
    }


def featurize_task(task, split: DatasetSplit, spec, layers, pooling=None,
                   cache=None, batch_size: int = 32) -> dict[str, dict[int, ProbeData]]:
    """Featurize all three parts of a DatasetSplit for the given layers."""
    parts = {}
    label_inventory = None
    for name, insts in split.parts():
        if not insts:
            parts[name] = {layer: None for layer in layers}
            continue
        if task in (TASK_NSP, TASK_CLOZE):
            parts[name] = featurize_selection(insts, spec, layers, pooling, cache, batch_size)
        elif task in (TASK_CONNECTIVE, TASK_NUCLEARITY, TASK_RELATION):
            budget = SENTENCE_BUDGET if task == TASK_CONNECTIVE else RST_SEGMENT_BUDGET
            if label_inventory is None and name != "train":
                raise TrainingError("train part must be featurized first")
            parts[name], label_inventory = featurize_pairs(
                insts, spec, layers, pooling, cache, batch_size, label_inventory, budget)
        elif task == TASK_ORDERING:
            parts[name] = featurize_ordering(insts, spec, layers, cache, batch_size)
        elif task == TASK_SEGMENTATION:
            parts[name] = featurize_segmentation(insts, spec, layers, batch_size)
        else:
            raise TrainingError(f"unknown task {task!r}")
    return parts


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

def _loss_fn(task: str):
    if task == TASK_SEGMENTATION:
        bce = torch.nn.BCEWithLogitsLoss()
        return lambda logits, y: bce(logits.squeeze(-1), y.float())
    ce = torch.nn.CrossEntropyLoss()
    return lambda logits, y: ce(logits, y)


def _predict_metric(head: ProbeHead, data: ProbeData, decode_mode: str = DECODE_ASSIGNMENT):
    """Task metric on one split, plus per-instance detail for ordering."""
    with torch.no_grad():
        logits = head(torch.from_numpy(data.X)).numpy(force=True)
    task = data.task
    if task in (TASK_NSP, TASK_CLOZE):
        # positive-class log probability per (context, candidate) row
        z = logits - logits.max(axis=1, keepdims=True)
        pos = z[:, 1] - np.log(np.exp(z).sum(axis=1))
        preds = []
        for g in range(data.gold.shape[0]):
            rows = np.where(data.group == g)[0]
            preds.append(int(np.argmax(pos[rows])))
        return metrics.accuracy(preds, list(data.gold)), None
    if task in (TASK_CONNECTIVE, TASK_NUCLEARITY, TASK_RELATION):
        preds = logits.argmax(axis=1)
        return metrics.accuracy(list(preds), list(data.y)), None
    if task == TASK_ORDERING:
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        rhos, detail = [], []
        for g in np.unique(data.group):
            rows = np.where(data.group == g)[0]
            n = len(rows)
            dist = RankDistribution(probs[rows], n)
            pred = decode_order(dist, decode_mode)
            gold = [int(r) + 1 for r in data.y[rows]]
            if sorted(pred) == list(range(1, n + 1)):
                rho = metrics.spearman(pred, gold)
            else:
                rho = metrics.rank_correlation(pred, gold)
            rhos.append(rho)
            detail.append((n, rho))
        return float(np.mean(rhos)), detail
    if task == TASK_SEGMENTATION:
        preds = (1 / (1 + np.exp(-logits.squeeze(-1))) >= 0.5).astype(int)
        return metrics.macro_f1(list(preds), list(data.y)), None
    raise TrainingError(f"unknown task {task!r}")


@dataclass
class TrainResult:
    head: ProbeHead
    record: RunRecord
    history: list[dict] = field(default_factory=list)


def train_probe(
    train: ProbeData,
    dev: ProbeData,
    config: ProbeConfig,
    train_config: TrainConfig | None = None,
    decode_mode: str = DECODE_ASSIGNMENT,
    model_name: str = "unknown",
    layer: int = 0,
) -> TrainResult:
    """Train one probe head; returns the best-dev head and its dev record.

    Stops when the dev metric has not improved for ``patience`` consecutive
    epochs, or at ``max_epochs``.  A NaN loss aborts with a diagnostic.
    """
    if dev.n_rows == 0:
        raise TrainingError("dev split is empty; early stopping needs it")
    tc = train_config or train_config_for_task(train.task)
    start = time.time()

    torch.manual_seed(config.seed)
    head = ProbeHead(config)
    opt = torch.optim.Adam(head.parameters(), lr=tc.learning_rate, eps=tc.adam_epsilon)
    steps_per_epoch = math.ceil(train.n_rows / tc.batch_size)
    total_steps = steps_per_epoch * tc.max_epochs
    warm = warmup_steps(total_steps, tc.warmup_fraction)
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, lambda step: min(1.0, (step + 1) / warm) if warm > 0 else 1.0
    )
    loss_fn = _loss_fn(train.task)

    X = torch.from_numpy(train.X)
    y = torch.from_numpy(train.y)
    order_rng = np.random.default_rng(config.seed)

    best_value, best_state, best_epoch = -np.inf, None, 0
    stale = 0
    history = []
    epochs_trained = 0
    for epoch in range(1, tc.max_epochs + 1):
        head.train()
        perm = order_rng.permutation(train.n_rows)
        epoch_loss = 0.0
        for lo in range(0, train.n_rows, tc.batch_size):
            idx = perm[lo:lo + tc.batch_size]
            opt.zero_grad()
            loss = loss_fn(head(X[idx]), y[idx])
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"NaN/inf loss at epoch {epoch}, step {lo // tc.batch_size} "
                    f"(task={train.task}, seed={config.seed})"
                )
            loss.backward()
            torch.nn.utils.clip_grad_norm_(head.parameters(), tc.max_grad_norm)
            opt.step()
            sched.step()
            epoch_loss += float(loss.detach()) * len(idx)
        head.eval()
        dev_value, _ = _predict_metric(head, dev, decode_mode)
        history.append({"epoch": epoch, "train_loss": epoch_loss / train.n_rows,
                        "dev_metric": dev_value})
        epochs_trained = epoch
        if dev_value > best_value:
            best_value, best_epoch, stale = dev_value, epoch, 0
            best_state = {k: v.clone() for k, v in head.state_dict().items()}
        else:
            stale += 1
            if stale >= tc.patience:
                break

    head.load_state_dict(best_state)
    head.eval()
    record = RunRecord(model_name, layer, train.task, config.seed,
                       TASK_METRIC[train.task], best_value, epochs_trained,
                       round(time.time() - start, 3))
    return TrainResult(head, record, history)


def evaluate(
    head: ProbeHead,
    data: ProbeData,
    model_name: str = "unknown",
    layer: int = 0,
    seed: int = 0,
    decode_mode: str = DECODE_ASSIGNMENT,
) -> tuple[RunRecord, list[OrderingDetail]]:
    """Score a trained head on a split; ordering also yields per-instance detail."""
    if data.n_rows == 0:
        raise TrainingError("cannot evaluate an empty split")
    start = time.time()
    value, detail = _predict_metric(head, data, decode_mode)
    record = RunRecord(model_name, layer, data.task, seed, TASK_METRIC[data.task],
                       value, 0, round(time.time() - start, 3))
    details = [
        OrderingDetail(model_name, layer, seed, n, rho) for n, rho in (detail or [])
    ]
    return record, details


def write_history_csv(path, history: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,dev_metric\n")
        for row in history:
            fh.write(f"{row['epoch']},{row['train_loss']},{row['dev_metric']}\n")
