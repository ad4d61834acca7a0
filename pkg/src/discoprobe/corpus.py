"""Corpus and discourse-treebank ingestion.

Loads plain document corpora (JSONL or one-file-per-document text) and RST
treebanks into canonical in-memory structures.  Treebank support covers the
lisp-style ``.dis`` format, a JSON interchange format for treebanks shipped in
other native formats, tree binarization, and fine-to-coarse relation mapping.

Everything here is a pure function over immutable inputs; nothing keeps
shared mutable state.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Union

NUCLEUS = "N"
SATELLITE = "S"

#: Sentinel relation used when a node's relation cannot be derived from its
#: children (a root whose children all carry the rel2par "span").
ROOT_RELATION = "ROOT"

#: Coarse relation inventory sizes per language (nuclearity is always 3-way).
EXPECTED_COARSE_CLASSES = {"en": 18, "zh": 4, "de": 31, "es": 29}


class CorpusError(Exception):
    """Raised for malformed corpora, treebanks, or mapping files."""


class DisParseError(CorpusError):
    """Raised when a ``.dis`` tree cannot be parsed."""


class RelationMapError(CorpusError):
    """Raised for unmapped relations or a bad mapping file."""


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Document:
    """An ordered list of sentences with a stable id."""

    id: str
    sentences: tuple[str, ...]

    def __post_init__(self):
        if not self.sentences:
            raise CorpusError(f"document {self.id!r} has no sentences")
        for s in self.sentences:
            if not s.strip():
                raise CorpusError(f"document {self.id!r} contains an empty sentence")
        object.__setattr__(self, "sentences", tuple(self.sentences))


_ABBREVIATIONS = ("mr", "mrs", "ms", "dr", "prof", "st", "vs", "etc", "e.g", "i.e", "cf", "no")
_BOUNDARY = re.compile(r'(?<=[.!?])["\')\]]*\s+(?=["\'(\[]?[A-Z0-9])')

Splitter = Callable[[str], list[str]]

_SPLITTERS: dict[str, Splitter] = {}


def register_splitter(name: str, splitter: Splitter) -> None:
    """Register a named sentence splitter (e.g. a spaCy-backed one)."""
    _SPLITTERS[name] = splitter


def _rule_based_split(text: str) -> list[str]:
    pieces, last = [], 0
    for m in _BOUNDARY.finditer(text):
        head = text[last:m.start()].rstrip()
        word = head.rsplit(None, 1)[-1].rstrip(".").lower() if head else ""
        if word in _ABBREVIATIONS:
            continue
        pieces.append(text[last:m.end()])
        last = m.end()
    pieces.append(text[last:])
    return [p.strip() for p in pieces if p.strip()]


register_splitter("en", _rule_based_split)


def sentence_split(raw_text: str, splitter: Union[Splitter, str, None] = None) -> list[str]:
    """Split ``raw_text`` into sentences.

    ``splitter`` may be a callable, the name of a registered splitter, or
    None for the bundled rule-based English default.  The concatenation of
    the output reconstructs the input up to inter-sentence whitespace.
    """
    if not raw_text or not raw_text.strip():
        raise CorpusError("cannot split empty text")
    if splitter is None:
        fn = _rule_based_split
    elif isinstance(splitter, str):
        if splitter not in _SPLITTERS:
            raise CorpusError(f"no sentence splitter registered for {splitter!r}")
        fn = _SPLITTERS[splitter]
    else:
        fn = splitter
    return fn(raw_text)


def load_documents(path, format: str = "jsonl", splitter: Union[Splitter, str, None] = None) -> list[Document]:
    """Load a corpus into Documents, sorted by id.

    ``format="jsonl"``: one record per line with an ``id`` field and either
    ``sentences`` (a list) or ``text`` (raw, passed through ``sentence_split``).
    ``format="plaintext"``: ``path`` is a directory of text files, one document
    per file, id taken from the file stem.
    """
    path = Path(path)
    docs: list[Document] = []
    if format == "jsonl":
        if not path.is_file():
            raise CorpusError(f"corpus file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "id" not in rec:
                    raise CorpusError(f"{path}:{lineno}: record has no id")
                if "sentences" in rec:
                    sents = rec["sentences"]
                elif "text" in rec:
                    sents = sentence_split(rec["text"], splitter)
                else:
                    raise CorpusError(f"{path}:{lineno}: record {rec['id']!r} has neither 'text' nor 'sentences'")
                docs.append(Document(str(rec["id"]), tuple(sents)))
    elif format == "plaintext":
        if not path.is_dir():
            raise CorpusError(f"corpus directory not found: {path}")
        for fp in sorted(path.iterdir()):
            if fp.is_file():
                text = fp.read_text(encoding="utf-8")
                docs.append(Document(fp.stem, tuple(sentence_split(text, splitter))))
    else:
        raise CorpusError(f"unknown corpus format {format!r}")

    docs.sort(key=lambda d: d.id)
    seen = set()
    for d in docs:
        if d.id in seen:
            raise CorpusError(f"duplicate document id {d.id!r}")
        seen.add(d.id)
    return docs


# ---------------------------------------------------------------------------
# Discourse trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    """An elementary discourse unit: 1-based id plus its text span."""

    edu_id: int
    text: str


@dataclass(frozen=True)
class Internal:
    """An n-ary discourse node: >=2 children, per-child N/S marks, one relation.

    The relation is the one holding among the children (for a mononuclear
    node it is the satellite's relation, for a multinuclear node the shared
    relation of the nuclei).
    """

    children: tuple["DiscourseTree", ...]
    nuclearities: tuple[str, ...]
    relation: str

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "nuclearities", tuple(self.nuclearities))
        if len(self.children) < 2:
            raise CorpusError("internal node needs at least 2 children")
        if len(self.nuclearities) != len(self.children):
            raise CorpusError("nuclearity list does not match children")
        if any(n not in (NUCLEUS, SATELLITE) for n in self.nuclearities):
            raise CorpusError(f"bad nuclearity marks {self.nuclearities}")
        if NUCLEUS not in self.nuclearities:
            raise CorpusError("internal node has no nucleus child")


DiscourseTree = Union[Leaf, Internal]


@dataclass(frozen=True)
class BinaryInternal:
    """A strictly binary discourse node; nuclearity is NN, NS, or SN."""

    left: "BinaryDiscourseTree"
    right: "BinaryDiscourseTree"
    nuclearity: str
    relation: str

    def __post_init__(self):
        if self.nuclearity not in ("NN", "NS", "SN"):
            raise CorpusError(f"bad nuclearity pair {self.nuclearity!r}")


BinaryDiscourseTree = Union[Leaf, BinaryInternal]


def leaves(tree) -> list[Leaf]:
    """In-order EDUs of a tree (works for both n-ary and binary trees)."""
    if isinstance(tree, Leaf):
        return [tree]
    if isinstance(tree, Internal):
        out = []
        for c in tree.children:
            out.extend(leaves(c))
        return out
    return leaves(tree.left) + leaves(tree.right)


def edu_texts(tree) -> list[str]:
    return [l.text for l in leaves(tree)]


def span_text(tree) -> str:
    """All EDU text under a node, joined with single spaces."""
    return " ".join(edu_texts(tree))


def internal_nodes(tree) -> list:
    """All internal nodes in top-down, left-to-right order."""
    if isinstance(tree, Leaf):
        return []
    out = [tree]
    kids = tree.children if isinstance(tree, Internal) else (tree.left, tree.right)
    for c in kids:
        out.extend(internal_nodes(c))
    return out


def validate_tree(tree: DiscourseTree) -> None:
    """Check the leaf-id invariant: EDUs numbered 1..k left to right."""
    ids = [l.edu_id for l in leaves(tree)]
    if ids != list(range(1, len(ids) + 1)):
        raise CorpusError(f"EDU ids are not consecutive 1..k: {ids}")
    for l in leaves(tree):
        if not l.text.strip():
            raise CorpusError(f"EDU {l.edu_id} has empty text")


# ---------------------------------------------------------------------------
# .dis parsing
# ---------------------------------------------------------------------------

_DIS_TAGS = ("Root", "Nucleus", "Satellite")
_TEXT_OPEN = "_!"
_TEXT_CLOSE = "_!"


def _tokenize_dis(text: str) -> list[str]:
    """Tokens are '(' , ')' and atoms; an _!...!_ payload is one token."""
    toks, i, n = [], 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            toks.append(ch)
            i += 1
        elif text.startswith(_TEXT_OPEN, i):
            end = text.find(_TEXT_CLOSE, i + len(_TEXT_OPEN))
            if end < 0:
                raise DisParseError("unterminated text payload")
            toks.append(text[i:end + len(_TEXT_CLOSE)])
            i = end + len(_TEXT_CLOSE)
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            toks.append(text[i:j])
            i = j
    return toks


@dataclass
class _RawNode:
    tag: str
    leaf: int | None = None
    rel2par: str | None = None
    text: str | None = None
    children: list = field(default_factory=list)


def _parse_node(toks: list[str], pos: int) -> tuple[_RawNode, int]:
    if pos >= len(toks) or toks[pos] != "(":
        raise DisParseError(f"expected '(' at token {pos}")
    pos += 1
    if pos >= len(toks):
        raise DisParseError("unbalanced parentheses")
    tag = toks[pos]
    if tag not in _DIS_TAGS:
        raise DisParseError(f"unknown node tag {tag!r}")
    node = _RawNode(tag)
    pos += 1
    while pos < len(toks) and toks[pos] == "(":
        nxt = toks[pos + 1] if pos + 1 < len(toks) else None
        if nxt in _DIS_TAGS:
            child, pos = _parse_node(toks, pos)
            node.children.append(child)
        elif nxt in ("span", "leaf", "rel2par", "text"):
            pos = _parse_attr(node, toks, pos)
        else:
            raise DisParseError(f"unexpected token {nxt!r}")
    if pos >= len(toks) or toks[pos] != ")":
        raise DisParseError("unbalanced parentheses")
    return node, pos + 1


def _parse_attr(node: _RawNode, toks: list[str], pos: int) -> int:
    kind = toks[pos + 1]
    pos += 2
    args = []
    while pos < len(toks) and toks[pos] != ")":
        args.append(toks[pos])
        pos += 1
    if pos >= len(toks):
        raise DisParseError("unbalanced parentheses")
    if kind == "leaf":
        node.leaf = int(args[0])
    elif kind == "rel2par":
        node.rel2par = " ".join(args)
    elif kind == "text":
        payload = " ".join(args)
        if not (payload.startswith(_TEXT_OPEN) and payload.endswith(_TEXT_CLOSE)):
            raise DisParseError("text attribute without _!..._! payload")
        node.text = payload[len(_TEXT_OPEN):-len(_TEXT_CLOSE)].strip()
    # (span i j) is redundant with the leaf numbering and is ignored
    return pos + 1


def _convert(raw: _RawNode) -> DiscourseTree:
    if not raw.children:
        if raw.text is None or raw.leaf is None:
            raise DisParseError(f"{raw.tag} leaf without text payload or leaf index")
        return Leaf(raw.leaf, raw.text)
    children = tuple(_convert(c) for c in raw.children)
    marks = tuple(NUCLEUS if c.tag == "Nucleus" else SATELLITE for c in raw.children)
    relation = ROOT_RELATION
    sat_rels = [c.rel2par for c in raw.children if c.tag == "Satellite" and c.rel2par]
    if sat_rels:
        relation = sat_rels[0]
    else:
        for c in raw.children:
            if c.rel2par and c.rel2par.lower() != "span":
                relation = c.rel2par
                break
    return Internal(children, marks, relation)


def parse_dis(text: str) -> DiscourseTree:
    """Parse one lisp-style ``.dis`` tree into a DiscourseTree.

    Leaf texts come from ``_!..._!`` payloads, per-child N/S status from the
    Nucleus/Satellite tags, and each internal node's relation from its
    children's ``rel2par`` attributes (the satellite's relation for a
    mononuclear node, the shared non-span relation for a multinuclear one).
    """
    toks = _tokenize_dis(text)
    if not toks:
        raise DisParseError("empty input")
    raw, pos = _parse_node(toks, 0)
    if pos != len(toks):
        raise DisParseError("trailing tokens after tree")
    tree = _convert(raw)
    validate_tree(tree)
    return tree


def serialize_dis(tree: DiscourseTree) -> str:
    """Render a DiscourseTree in canonical ``.dis`` form.

    ``parse_dis(serialize_dis(t)) == t`` for every valid tree.
    """
    return _serialize(tree, "Root", None, 0)


def _serialize(tree, tag: str, rel2par: str | None, depth: int) -> str:
    pad = "  " * depth
    rel = f" (rel2par {rel2par})" if rel2par else ""
    if isinstance(tree, Leaf):
        return f"{pad}( {tag} (leaf {tree.edu_id}){rel} (text _!{tree.text}_!) )"
    ids = [l.edu_id for l in leaves(tree)]
    multinuclear = all(m == NUCLEUS for m in tree.nuclearities)
    lines = [f"{pad}( {tag} (span {ids[0]} {ids[-1]}){rel}"]
    for child, mark in zip(tree.children, tree.nuclearities):
        ctag = "Nucleus" if mark == NUCLEUS else "Satellite"
        crel = tree.relation if (mark == SATELLITE or multinuclear) else "span"
        lines.append(_serialize(child, ctag, crel, depth + 1))
    lines.append(f"{pad})")
    return "\n".join(lines)


def load_dis(path) -> DiscourseTree:
    return parse_dis(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Binarization
# ---------------------------------------------------------------------------

def binarize(tree: DiscourseTree) -> BinaryDiscourseTree:
    """Convert an n-ary discourse tree to a binary one, preserving leaf order.

    Nodes with more than two children expand right-branching: c1..cn becomes
    (c1, bin(c2..cn)), the introduced node inheriting the parent's relation
    and taking the nucleus mark if it covers any nucleus.  A trailing group
    of satellites is peeled off leftward instead, so no node ever ends up
    satellite-satellite.  Multinuclear spans yield NN pairs throughout.
    """
    if isinstance(tree, Leaf):
        return tree
    return _binarize_group(list(tree.children), list(tree.nuclearities), tree.relation)


def _binarize_group(children: list, marks: list[str], relation: str) -> BinaryInternal:
    if len(children) == 2:
        return BinaryInternal(
            binarize(children[0]), binarize(children[1]), marks[0] + marks[1], relation
        )
    if NUCLEUS in marks[1:]:
        rest = _binarize_group(children[1:], marks[1:], relation)
        return BinaryInternal(binarize(children[0]), rest, marks[0] + NUCLEUS, relation)
    # all remaining marks are satellites: peel the last one off leftward
    head = _binarize_group(children[:-1], marks[:-1], relation)
    return BinaryInternal(head, binarize(children[-1]), NUCLEUS + SATELLITE, relation)


# ---------------------------------------------------------------------------
# Relation mapping
# ---------------------------------------------------------------------------

class RelationMap:
    """Total mapping from fine-grained relation labels to a coarse inventory."""

    def __init__(self, mapping: dict[str, str], expected_classes: int | None = None):
        if not mapping:
            raise RelationMapError("empty relation mapping")
        self._mapping = dict(mapping)
        self.coarse_labels = tuple(sorted(set(mapping.values())))
        if expected_classes is not None and len(self.coarse_labels) != expected_classes:
            raise RelationMapError(
                f"coarse inventory has {len(self.coarse_labels)} classes, expected {expected_classes}"
            )

    @classmethod
    def from_tsv(cls, path, expected_classes: int | None = None) -> "RelationMap":
        """Load a two-column ``fine<TAB>coarse`` mapping file."""
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise RelationMapError(f"{path}:{lineno}: expected two tab-separated columns")
                mapping[parts[0]] = parts[1]
        return cls(mapping, expected_classes)

    def __call__(self, fine: str) -> str:
        return self.map(fine)

    def map(self, fine: str) -> str:
        if fine not in self._mapping:
            raise RelationMapError(f"relation {fine!r} is not in the mapping")
        return self._mapping[fine]

    def __contains__(self, fine: str) -> bool:
        return fine in self._mapping

    def __len__(self) -> int:
        return len(self._mapping)


def map_relation(fine: str, relation_map: RelationMap) -> str:
    """Look up the coarse class for a fine-grained relation label."""
    return relation_map.map(fine)


def bundled_relation_map(language: str = "en") -> RelationMap:
    """The relation mapping shipped with the package (currently English only).

    The mapping file is a swappable resource; treebanks for other languages
    bring their own ``fine<TAB>coarse`` TSV.
    """
    name = f"relation_map_{language}.tsv"
    ref = resources.files("discoprobe.data").joinpath(name)
    if not ref.is_file():
        raise RelationMapError(f"no bundled relation map for language {language!r}")
    with resources.as_file(ref) as fp:
        return RelationMap.from_tsv(fp, EXPECTED_COARSE_CLASSES.get(language))


# ---------------------------------------------------------------------------
# JSON tree interchange
# ---------------------------------------------------------------------------

def tree_to_dict(tree: DiscourseTree) -> dict:
    if isinstance(tree, Leaf):
        return {"type": "leaf", "edu": tree.edu_id, "text": tree.text}
    return {
        "type": "node",
        "relation": tree.relation,
        "nuclearities": list(tree.nuclearities),
        "children": [tree_to_dict(c) for c in tree.children],
    }


def tree_from_dict(obj: dict) -> DiscourseTree:
    if not isinstance(obj, dict) or "type" not in obj:
        raise CorpusError("interchange node must be an object with a 'type' field")
    if obj["type"] == "leaf":
        if "edu" not in obj or "text" not in obj:
            raise CorpusError("leaf node needs 'edu' and 'text'")
        return Leaf(int(obj["edu"]), str(obj["text"]))
    if obj["type"] == "node":
        children = [tree_from_dict(c) for c in obj.get("children", [])]
        return Internal(tuple(children), tuple(obj.get("nuclearities", [])), str(obj.get("relation", "")))
    raise CorpusError(f"unknown interchange node type {obj['type']!r}")


def load_tree_interchange(path) -> list[DiscourseTree]:
    """Load trees from the JSON interchange format (one tree per file or JSONL)."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        raise CorpusError(f"empty interchange file: {path}")
    try:
        payload = json.loads(text)
        objs = payload if isinstance(payload, list) else [payload]
    except json.JSONDecodeError:
        objs = [json.loads(line) for line in text.splitlines() if line.strip()]
    trees = [tree_from_dict(o) for o in objs]
    for t in trees:
        validate_tree(t)
    return trees


def save_tree_interchange(path, trees: Iterable[DiscourseTree]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trees:
            fh.write(json.dumps(tree_to_dict(t), ensure_ascii=False) + "\n")
