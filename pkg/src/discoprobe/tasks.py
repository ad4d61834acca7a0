"""Builders for the seven discourse probing datasets.

Each builder turns a corpus or treebank into a train/dev/test
:class:`DatasetSplit` of uniform instances, reproducible bit-for-bit from
(corpus, config, seed).  Instance schemas are documented next to their
dataclasses; JSONL round-trips are provided for all of them.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .corpus import (
    BinaryDiscourseTree,
    BinaryInternal,
    Document,
    Leaf,
    RelationMap,
    internal_nodes,
    leaves,
    span_text,
)

TASK_NSP = "nsp"
TASK_ORDERING = "ordering"
TASK_CONNECTIVE = "connective"
TASK_NUCLEARITY = "nuclearity"
TASK_RELATION = "relation"
TASK_SEGMENTATION = "segmentation"
TASK_CLOZE = "cloze"

ALL_TASKS = (
    TASK_NSP,
    TASK_ORDERING,
    TASK_CONNECTIVE,
    TASK_NUCLEARITY,
    TASK_RELATION,
    TASK_SEGMENTATION,
    TASK_CLOZE,
)

NSP_CONTEXT_SIZES = (2, 4, 6, 8)
ORDERING_SIZES = (3, 4, 5, 6, 7)
CONNECTIVE_MIN_FREQUENCY = 12
OTHER_MARKER = "OTHER"

DEFAULT_NSP_COUNTS = {k: 2500 for k in NSP_CONTEXT_SIZES}
DEFAULT_ORDERING_COUNTS = {n: 2000 for n in ORDERING_SIZES}
DEFAULT_SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


class BuilderError(Exception):
    """Raised when a dataset cannot be built as configured."""


class CorpusExhausted(BuilderError):
    """Raised when the corpus cannot supply the requested instance counts."""


# ---------------------------------------------------------------------------
# Instance types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairInstance:
    """A classification instance over one or more text segments.

    For candidate-selection tasks (NSP, cloze) ``segments`` holds the context,
    ``candidates`` the alternatives, and ``label`` the index of the correct
    candidate.  For two-segment tasks (connective, nuclearity, relation)
    ``segments`` holds the pair and ``label`` the class name.
    """

    task: str
    segments: tuple[str, ...]
    label: object
    candidates: tuple[str, ...] | None = None

    def to_json(self) -> dict:
        rec = {"task": self.task, "segments": list(self.segments), "label": self.label}
        if self.candidates is not None:
            rec["candidates"] = list(self.candidates)
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "PairInstance":
        cands = rec.get("candidates")
        return cls(rec["task"], tuple(rec["segments"]), rec["label"],
                   tuple(cands) if cands is not None else None)


@dataclass(frozen=True)
class OrderingInstance:
    """Shuffled sentences plus the rank each one held in the original order."""

    sentences: tuple[str, ...]
    gold_ranks: tuple[int, ...]

    def __post_init__(self):
        n = len(self.sentences)
        if sorted(self.gold_ranks) != list(range(1, n + 1)):
            raise BuilderError(f"gold_ranks is not a permutation of 1..{n}")
        if not 3 <= n <= 7:
            raise BuilderError(f"ordering instance needs 3..7 sentences, got {n}")

    def to_json(self) -> dict:
        return {"sentences": list(self.sentences), "gold_ranks": list(self.gold_ranks)}

    @classmethod
    def from_json(cls, rec: dict) -> "OrderingInstance":
        return cls(tuple(rec["sentences"]), tuple(rec["gold_ranks"]))


@dataclass(frozen=True)
class SegmentationInstance:
    """Concatenated EDU text with per-token boundary labels.

    ``boundary_labels`` has one 0/1 entry per token under the declared
    tokenizer, with a 1 exactly at the last token of each EDU.
    """

    text: str
    edu_token_lengths: tuple[int, ...]
    boundary_labels: tuple[int, ...]
    edu_texts: tuple[str, ...] = ()

    def __post_init__(self):
        if sum(self.edu_token_lengths) != len(self.boundary_labels):
            raise BuilderError("token lengths do not sum to the label count")
        expect = boundary_labels_from_lengths(self.edu_token_lengths)
        if tuple(self.boundary_labels) != expect:
            raise BuilderError("boundary labels are not at EDU-final tokens")

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "edu_token_lengths": list(self.edu_token_lengths),
            "boundary_labels": list(self.boundary_labels),
            "edu_texts": list(self.edu_texts),
        }

    @classmethod
    def from_json(cls, rec: dict) -> "SegmentationInstance":
        return cls(rec["text"], tuple(rec["edu_token_lengths"]),
                   tuple(rec["boundary_labels"]), tuple(rec.get("edu_texts", ())))


@dataclass(frozen=True)
class ClozeInstance:
    """A merged story context, two candidate endings, and the correct index."""

    context: str
    endings: tuple[str, str]
    label: int

    def __post_init__(self):
        if len(self.endings) != 2:
            raise BuilderError(f"cloze instance needs exactly 2 endings, got {len(self.endings)}")
        if self.label not in (0, 1):
            raise BuilderError(f"cloze label must be 0 or 1, got {self.label}")

    def to_json(self) -> dict:
        return {"context": self.context, "endings": list(self.endings), "label": self.label}

    @classmethod
    def from_json(cls, rec: dict) -> "ClozeInstance":
        return cls(rec["context"], tuple(rec["endings"]), rec["label"])


@dataclass
class DatasetSplit:
    """Train/dev/test instance lists plus provenance metadata."""

    task: str
    train: list
    dev: list
    test: list
    provenance: dict = field(default_factory=dict)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.dev), len(self.test))

    def parts(self):
        return (("train", self.train), ("dev", self.dev), ("test", self.test))

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, insts in self.parts():
            with open(out / f"{name}.jsonl", "w", encoding="utf-8") as fh:
                for inst in insts:
                    fh.write(json.dumps(inst.to_json(), ensure_ascii=False) + "\n")
        manifest = {"task": self.task, "sizes": list(self.sizes), "provenance": self.provenance}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, out_dir) -> "DatasetSplit":
        out = Path(out_dir)
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        task = manifest["task"]
        parse = _INSTANCE_PARSERS[task]
        parts = {}
        for name in ("train", "dev", "test"):
            with open(out / f"{name}.jsonl", encoding="utf-8") as fh:
                parts[name] = [parse(json.loads(line)) for line in fh if line.strip()]
        return cls(task, parts["train"], parts["dev"], parts["test"], manifest.get("provenance", {}))


_INSTANCE_PARSERS = {
    TASK_NSP: PairInstance.from_json,
    TASK_CONNECTIVE: PairInstance.from_json,
    TASK_NUCLEARITY: PairInstance.from_json,
    TASK_RELATION: PairInstance.from_json,
    TASK_ORDERING: OrderingInstance.from_json,
    TASK_SEGMENTATION: SegmentationInstance.from_json,
    TASK_CLOZE: ClozeInstance.from_json,
}


def boundary_labels_from_lengths(edu_token_lengths: Sequence[int]) -> tuple[int, ...]:
    """0/1 labels over the concatenated tokens, 1 at each EDU-final token."""
    labels: list[int] = []
    for n in edu_token_lengths:
        if n < 1:
            raise BuilderError("EDU tokenized to zero tokens")
        labels.extend([0] * (n - 1) + [1])
    return tuple(labels)


# ---------------------------------------------------------------------------
# Shared split helpers
# ---------------------------------------------------------------------------

def _check_fractions(fractions: Sequence[float]) -> tuple[float, float, float]:
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise BuilderError(f"split fractions must be 3 nonnegative numbers summing to 1: {fractions}")
    return tuple(fractions)


def _apportion(total: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of ``total`` into three integer parts."""
    raw = [total * f for f in fractions]
    base = [int(x) for x in raw]
    short = total - sum(base)
    order = sorted(range(3), key=lambda i: raw[i] - base[i], reverse=True)
    for i in order[:short]:
        base[i] += 1
    return base


def _partition_documents(documents: Sequence[Document], fractions, rng) -> dict[str, list[Document]]:
    docs = list(documents)
    rng.shuffle(docs)
    n_train, n_dev, n_test = _apportion(len(docs), fractions)
    return {
        "train": docs[:n_train],
        "dev": docs[n_train:n_train + n_dev],
        "test": docs[n_train + n_dev:],
    }


# ---------------------------------------------------------------------------
# Task 1: next sentence prediction
# ---------------------------------------------------------------------------

def build_nsp(
    documents: Sequence[Document],
    counts_per_context_size: Mapping[int, int] | None = None,
    distractors_per_instance: int = 3,
    seed: int = 1,
    split_fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
) -> DatasetSplit:
    """Build the 4-way next-sentence-prediction dataset.

    Each instance pairs a context of k consecutive sentences (k in 2/4/6/8)
    with the true next sentence and ``distractors_per_instance`` sentences
    sampled from other documents in the same split.  Distractors used in the
    train and dev sets never coincide with any test-set sentence.
    """
    counts = dict(counts_per_context_size or DEFAULT_NSP_COUNTS)
    for k in counts:
        if k not in NSP_CONTEXT_SIZES:
            raise BuilderError(f"context size {k} not in {NSP_CONTEXT_SIZES}")
    fractions = _check_fractions(split_fractions)
    rng = random.Random(seed)
    pools = _partition_documents(documents, fractions, rng)

    test_sentences = {s for d in pools["test"] for s in d.sentences}
    parts: dict[str, list[PairInstance]] = {}
    for part_idx, (part, pool) in enumerate(pools.items()):
        quotas = {k: _apportion(c, fractions)[part_idx] for k, c in counts.items()}
        forbidden = test_sentences if part != "test" else frozenset()
        parts[part] = _nsp_instances(pool, quotas, distractors_per_instance, forbidden, rng, part)

    return DatasetSplit(
        TASK_NSP, parts["train"], parts["dev"], parts["test"],
        provenance={
            "seed": seed,
            "counts_per_context_size": {str(k): v for k, v in counts.items()},
            "distractors_per_instance": distractors_per_instance,
            "split_fractions": list(fractions),
            "n_documents": len(documents),
        },
    )


def _nsp_instances(pool, quotas, n_distractors, forbidden, rng, part) -> list:
    if sum(quotas.values()) == 0:
        return []
    positions = []
    for di, doc in enumerate(pool):
        for k in quotas:
            for start in range(len(doc.sentences) - k):
                positions.append((di, start, k))
    rng.shuffle(positions)

    donors = [s for d in pool for s in d.sentences if s not in forbidden]
    donor_doc = {}
    for d in pool:
        for s in d.sentences:
            donor_doc.setdefault(s, d.id)
    if len(donors) < n_distractors + 1:
        raise CorpusExhausted(f"{part}: not enough distractor sentences in the pool")

    remaining = dict(quotas)
    out = []
    for di, start, k in positions:
        if remaining[k] <= 0:
            continue
        doc = pool[di]
        context = doc.sentences[start:start + k]
        positive = doc.sentences[start + k]
        distractors: list[str] = []
        attempts = 0
        while len(distractors) < n_distractors:
            cand = donors[rng.randrange(len(donors))]
            attempts += 1
            if attempts > 1000 * n_distractors:
                raise CorpusExhausted(f"{part}: cannot draw distinct distractors")
            if cand == positive or cand in distractors or donor_doc[cand] == doc.id:
                continue
            distractors.append(cand)
        gold = rng.randrange(n_distractors + 1)
        candidates = distractors[:gold] + [positive] + distractors[gold:]
        out.append(PairInstance(TASK_NSP, tuple(context), gold, tuple(candidates)))
        remaining[k] -= 1
    missing = {k: v for k, v in remaining.items() if v > 0}
    if missing:
        raise CorpusExhausted(f"{part}: corpus exhausted before quotas met, missing {missing}")
    return out


# ---------------------------------------------------------------------------
# Task 2: sentence ordering
# ---------------------------------------------------------------------------

def build_ordering(
    documents: Sequence[Document],
    counts_per_n: Mapping[int, int] | None = None,
    seed: int = 1,
    split_fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
) -> DatasetSplit:
    """Build the sentence ordering dataset: shuffled runs of 3..7 sentences.

    Shuffles are uniform over non-identity permutations; ``gold_ranks[i]`` is
    the 1-based position the i-th shuffled sentence held originally.
    """
    counts = dict(counts_per_n or DEFAULT_ORDERING_COUNTS)
    for n in counts:
        if n not in ORDERING_SIZES:
            raise BuilderError(f"sentence count {n} not in {ORDERING_SIZES}")
    fractions = _check_fractions(split_fractions)
    rng = random.Random(seed)
    pools = _partition_documents(documents, fractions, rng)

    parts: dict[str, list[OrderingInstance]] = {}
    for part_idx, (part, pool) in enumerate(pools.items()):
        quotas = {n: _apportion(c, fractions)[part_idx] for n, c in counts.items()}
        positions = []
        for di, doc in enumerate(pool):
            for n in quotas:
                for start in range(len(doc.sentences) - n + 1):
                    positions.append((di, start, n))
        rng.shuffle(positions)
        remaining = dict(quotas)
        out = []
        for di, start, n in positions:
            if remaining[n] <= 0:
                continue
            sents = pool[di].sentences[start:start + n]
            perm = list(range(n))
            while True:
                rng.shuffle(perm)
                if perm != sorted(perm):
                    break
            out.append(OrderingInstance(
                tuple(sents[p] for p in perm), tuple(p + 1 for p in perm)
            ))
            remaining[n] -= 1
        missing = {n: v for n, v in remaining.items() if v > 0}
        if missing:
            raise CorpusExhausted(f"{part}: corpus exhausted before quotas met, missing {missing}")
        parts[part] = out

    return DatasetSplit(
        TASK_ORDERING, parts["train"], parts["dev"], parts["test"],
        provenance={
            "seed": seed,
            "counts_per_n": {str(n): c for n, c in counts.items()},
            "split_fractions": list(fractions),
            "n_documents": len(documents),
        },
    )


# ---------------------------------------------------------------------------
# Task 3: discourse connectives
# ---------------------------------------------------------------------------

def read_connective_pairs(path) -> list[tuple[str, str, str]]:
    """Read ``seg_a<TAB>seg_b<TAB>marker`` triples."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise BuilderError(f"{path}:{lineno}: expected 3 tab-separated columns")
            pairs.append(tuple(parts))
    return pairs


def build_connectives(
    labeled_pairs: Sequence[tuple[str, str, str]],
    min_frequency: int = CONNECTIVE_MIN_FREQUENCY,
    seed: int = 1,
    split_fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
) -> DatasetSplit:
    """Build the connective prediction dataset from pre-extracted pairs.

    Markers whose corpus frequency is below ``min_frequency`` are relabeled
    ``OTHER``.  The split is stratified by marker so every label seen in
    dev/test also occurs in train; the achieved label inventory is recorded
    in the provenance.
    """
    if not labeled_pairs:
        raise BuilderError("no labeled connective pairs given")
    fractions = _check_fractions(split_fractions)
    freq = Counter(marker for _, _, marker in labeled_pairs)
    relabeled = [
        (a, b, marker if freq[marker] >= min_frequency else OTHER_MARKER)
        for a, b, marker in labeled_pairs
    ]

    rng = random.Random(seed)
    by_label: dict[str, list] = {}
    for rec in relabeled:
        by_label.setdefault(rec[2], []).append(rec)

    parts = {"train": [], "dev": [], "test": []}
    for label in sorted(by_label):
        group = by_label[label]
        rng.shuffle(group)
        n_train, n_dev, n_test = _apportion(len(group), fractions)
        if n_train == 0 and (n_dev or n_test):
            n_train, n_dev, n_test = len(group), 0, 0
        parts["train"].extend(group[:n_train])
        parts["dev"].extend(group[n_train:n_train + n_dev])
        parts["test"].extend(group[n_train + n_dev:])
    for insts in parts.values():
        rng.shuffle(insts)

    train_labels = {m for _, _, m in parts["train"]}
    for name in ("dev", "test"):
        extra = {m for _, _, m in parts[name]} - train_labels
        if extra:
            raise BuilderError(f"{name} split contains labels absent from train: {sorted(extra)}")

    inventory = sorted({m for _, _, m in relabeled})
    split = DatasetSplit(
        TASK_CONNECTIVE,
        *[[PairInstance(TASK_CONNECTIVE, (a, b), m) for a, b, m in parts[p]]
          for p in ("train", "dev", "test")],
        provenance={
            "seed": seed,
            "min_frequency": min_frequency,
            "label_inventory": inventory,
            "split_fractions": list(fractions),
        },
    )
    return split


# ---------------------------------------------------------------------------
# Tasks 4-5: RST nuclearity and relation pairs
# ---------------------------------------------------------------------------

def build_rst_pairs(
    trees: Sequence[BinaryDiscourseTree] | Mapping[str, Sequence[BinaryDiscourseTree]],
    relation_map: RelationMap,
    seed: int = 1,
    split_fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
) -> tuple[DatasetSplit, DatasetSplit]:
    """Build the nuclearity and relation datasets from binarized trees.

    Every internal node yields one instance: segment a is the text under the
    left child, segment b the text under the right child.  The two datasets
    are index-aligned (same node order).  ``trees`` may be a flat list, in
    which case whole trees are assigned to splits to keep instances from one
    document together, or a dict with explicit train/dev/test tree lists.
    """
    if isinstance(trees, Mapping):
        pools = {p: list(trees.get(p, [])) for p in ("train", "dev", "test")}
    else:
        fractions = _check_fractions(split_fractions)
        rng = random.Random(seed)
        shuffled = list(trees)
        rng.shuffle(shuffled)
        weights = [max(len(leaves(t)) - 1, 0) for t in shuffled]
        total = sum(weights)
        targets = _apportion(total, fractions)
        pools = {"train": [], "dev": [], "test": []}
        acc = 0
        bounds = (targets[0], targets[0] + targets[1])
        for t, w in zip(shuffled, weights):
            part = "train" if acc < bounds[0] else ("dev" if acc < bounds[1] else "test")
            pools[part].append(t)
            acc += w

    nuc_parts, rel_parts = {}, {}
    for part, pool in pools.items():
        nuc, rel = [], []
        for tree in pool:
            for node in internal_nodes(tree):
                if not isinstance(node, BinaryInternal):
                    raise BuilderError("build_rst_pairs requires binarized trees")
                seg_a, seg_b = span_text(node.left), span_text(node.right)
                nuc.append(PairInstance(TASK_NUCLEARITY, (seg_a, seg_b), node.nuclearity))
                rel.append(PairInstance(TASK_RELATION, (seg_a, seg_b), relation_map.map(node.relation)))
        nuc_parts[part], rel_parts[part] = nuc, rel

    prov = {"seed": seed, "n_trees": {p: len(pool) for p, pool in pools.items()},
            "relation_inventory": list(relation_map.coarse_labels)}
    nuc_split = DatasetSplit(TASK_NUCLEARITY, nuc_parts["train"], nuc_parts["dev"],
                             nuc_parts["test"], provenance=dict(prov))
    rel_split = DatasetSplit(TASK_RELATION, rel_parts["train"], rel_parts["dev"],
                             rel_parts["test"], provenance=dict(prov))
    return nuc_split, rel_split


# ---------------------------------------------------------------------------
# Task 6: EDU segmentation
# ---------------------------------------------------------------------------

Tokenizer = Callable[[str], list]


def build_edu_segmentation(
    documents: Sequence | Mapping[str, Sequence],
    tokenizer: Tokenizer,
    max_tokens: int = 512,
    seed: int = 1,
    split_fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
) -> DatasetSplit:
    """Build the token-level EDU boundary dataset.

    ``documents`` is a sequence of per-document EDU text lists (a
    DiscourseTree is also accepted and reduced to its leaf texts), or a dict
    with explicit train/dev/test lists.  Documents longer than ``max_tokens``
    under ``tokenizer`` are split at EDU boundaries, never mid-EDU.
    """
    if isinstance(documents, Mapping):
        pools = {p: [_as_edu_list(d) for d in documents.get(p, [])] for p in ("train", "dev", "test")}
    else:
        fractions = _check_fractions(split_fractions)
        rng = random.Random(seed)
        docs = [_as_edu_list(d) for d in documents]
        rng.shuffle(docs)
        n_train, n_dev, _ = _apportion(len(docs), fractions)
        pools = {"train": docs[:n_train], "dev": docs[n_train:n_train + n_dev],
                 "test": docs[n_train + n_dev:]}

    parts = {}
    for part, pool in pools.items():
        insts = []
        for edus in pool:
            insts.extend(_segmentation_instances(edus, tokenizer, max_tokens))
        parts[part] = insts

    return DatasetSplit(
        TASK_SEGMENTATION, parts["train"], parts["dev"], parts["test"],
        provenance={"seed": seed, "max_tokens": max_tokens,
                    "n_documents": {p: len(pool) for p, pool in pools.items()}},
    )


def _as_edu_list(doc) -> list[str]:
    if isinstance(doc, (Leaf, BinaryInternal)) or hasattr(doc, "children"):
        return [l.text for l in leaves(doc)]
    return list(doc)


def _segmentation_instances(edus: Sequence[str], tokenizer: Tokenizer, max_tokens: int) -> list[SegmentationInstance]:
    lengths = []
    for edu in edus:
        n = len(tokenizer(edu))
        if n == 0:
            raise BuilderError(f"EDU tokenized to zero tokens: {edu!r}")
        if n > max_tokens:
            raise BuilderError(f"single EDU exceeds the {max_tokens}-token budget ({n} tokens)")
        lengths.append(n)

    out, chunk, chunk_len = [], [], 0
    for edu, n in zip(edus, lengths):
        if chunk and chunk_len + n > max_tokens:
            out.append(_make_segmentation(chunk))
            chunk, chunk_len = [], 0
        chunk.append((edu, n))
        chunk_len += n
    if chunk:
        out.append(_make_segmentation(chunk))
    return out


def _make_segmentation(chunk: list[tuple[str, int]]) -> SegmentationInstance:
    texts = tuple(e for e, _ in chunk)
    lengths = tuple(n for _, n in chunk)
    return SegmentationInstance(
        " ".join(texts), lengths, boundary_labels_from_lengths(lengths), texts
    )


# ---------------------------------------------------------------------------
# Task 7: cloze story test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClozeRecord:
    """A raw story record: context sentences, two endings, 1-based answer."""

    context_sentences: tuple[str, ...]
    endings: tuple[str, ...]
    answer: int

    def __post_init__(self):
        if len(self.endings) != 2:
            raise BuilderError(f"cloze record needs exactly 2 endings, got {len(self.endings)}")
        if self.answer not in (1, 2):
            raise BuilderError(f"cloze answer must be 1 or 2, got {self.answer}")


def read_cloze_csv(path) -> list[ClozeRecord]:
    """Read story records from CSV: id, 4 context sentences, 2 endings, answer."""
    import csv

    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 8:
            raise BuilderError(f"{path}: expected at least 8 columns, got {len(header)}")
        for row in reader:
            if not row:
                continue
            records.append(ClozeRecord(tuple(row[1:5]), tuple(row[5:7]), int(row[7])))
    return records


def build_cloze(
    dev_records: Sequence[ClozeRecord],
    test_records: Sequence[ClozeRecord] = (),
    train_fraction: float = 0.9,
    seed: int = 1,
) -> DatasetSplit:
    """Build the story cloze dataset.

    The labeled development set is split into train and validation portions
    (``floor(train_fraction * n)`` records go to train); the labeled test set
    is used as-is.  Context sentences are merged into a single segment and
    the label is the 0-based index of the correct ending.
    """
    if not dev_records:
        raise BuilderError("no cloze records given")
    if not 0 < train_fraction < 1:
        raise BuilderError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = random.Random(seed)
    shuffled = list(dev_records)
    rng.shuffle(shuffled)
    n_train = int(train_fraction * len(shuffled))

    def convert(rec: ClozeRecord) -> ClozeInstance:
        return ClozeInstance(" ".join(rec.context_sentences), tuple(rec.endings), rec.answer - 1)

    return DatasetSplit(
        TASK_CLOZE,
        [convert(r) for r in shuffled[:n_train]],
        [convert(r) for r in shuffled[n_train:]],
        [convert(r) for r in test_records],
        provenance={"seed": seed, "train_fraction": train_fraction,
                    "n_dev_records": len(dev_records), "n_test_records": len(test_records)},
    )
