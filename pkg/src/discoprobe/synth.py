"""Synthetic topical corpora and treebanks for demos and self-tests.

Real news/Wikipedia corpora and RST treebanks are licensed resources that the
harness consumes through its interchange formats.  This module generates
stand-ins: documents whose sentences share a topic vocabulary (so coherence
tasks are learnable), plus small random discourse trees.  Generation is
deterministic given the seed.
"""

from __future__ import annotations

import random

from .corpus import Document, Internal, Leaf, NUCLEUS, SATELLITE

TOPICS = {
    "astronomy": (["telescope", "comet", "galaxy", "orbit", "nebula", "astronomer", "observatory", "eclipse", "meteor", "quasar"],
                  ["observed", "tracked", "photographed", "measured", "charted"]),
    "cooking": (["chef", "sauce", "oven", "recipe", "skillet", "broth", "pastry", "kitchen", "ladle", "garnish"],
                ["simmered", "whisked", "seasoned", "baked", "tasted"]),
    "football": (["striker", "goalkeeper", "midfielder", "stadium", "referee", "penalty", "defender", "crowd", "corner", "bench"],
                 ["scored", "defended", "fouled", "cheered", "substituted"]),
    "banking": (["loan", "deposit", "branch", "regulator", "mortgage", "auditor", "portfolio", "teller", "ledger", "bond"],
                ["approved", "audited", "transferred", "refinanced", "reported"]),
    "gardening": (["rosebush", "compost", "greenhouse", "seedling", "trowel", "gardener", "hedge", "orchard", "trellis", "fern"],
                  ["pruned", "watered", "planted", "mulched", "harvested"]),
    "aviation": (["pilot", "runway", "altimeter", "hangar", "turbine", "controller", "fuselage", "airline", "cockpit", "beacon"],
                 ["landed", "taxied", "inspected", "refueled", "diverted"]),
    "medicine": (["surgeon", "clinic", "diagnosis", "patient", "vaccine", "ward", "symptom", "nurse", "scalpel", "chart"],
                 ["treated", "examined", "prescribed", "monitored", "discharged"]),
    "music": (["violinist", "concerto", "orchestra", "conductor", "rehearsal", "melody", "quartet", "audience", "podium", "score"],
              ["performed", "rehearsed", "composed", "recorded", "applauded"]),
    "mining": (["shaft", "drill", "geologist", "ore", "tunnel", "quarry", "seam", "conveyor", "helmet", "lantern"],
               ["excavated", "surveyed", "extracted", "blasted", "hauled"]),
    "fishing": (["trawler", "harbor", "netting", "skipper", "catch", "quota", "deckhand", "buoy", "gull", "tide"],
                ["hauled", "sailed", "inspected", "sorted", "docked"]),
    "law": (["attorney", "verdict", "courtroom", "plaintiff", "testimony", "judge", "appeal", "jury", "statute", "docket"],
            ["argued", "ruled", "testified", "appealed", "settled"]),
    "fashion": (["designer", "fabric", "collection", "boutique", "mannequin", "stitch", "atelier", "catwalk", "hem", "swatch"],
                ["unveiled", "tailored", "styled", "photographed", "sold"]),
    "chess": (["grandmaster", "gambit", "endgame", "bishop", "tournament", "clock", "sacrifice", "arbiter", "pawn", "rook"],
              ["castled", "blundered", "resigned", "analyzed", "promoted"]),
    "meteorology": (["forecast", "cyclone", "barometer", "humidity", "radar", "drizzle", "front", "thermometer", "gust", "hail"],
                    ["predicted", "recorded", "warned", "tracked", "updated"]),
    "railways": (["locomotive", "signal", "carriage", "platform", "timetable", "junction", "conductor", "depot", "sleeper", "viaduct"],
                 ["departed", "shunted", "coupled", "delayed", "arrived"]),
    "archaeology": (["excavation", "amphora", "stratum", "mosaic", "artifact", "trench", "curator", "inscription", "relic", "sherd"],
                    ["unearthed", "catalogued", "dated", "restored", "mapped"]),
    "brewing": (["brewer", "malt", "fermenter", "yeast", "cask", "hops", "mash", "kettle", "cellar", "lager"],
                ["brewed", "fermented", "bottled", "sampled", "aged"]),
    "robotics": (["actuator", "sensor", "gripper", "chassis", "firmware", "servo", "gearbox", "battery", "circuit", "lidar"],
                 ["calibrated", "assembled", "programmed", "tested", "welded"]),
    "theatre": (["playwright", "matinee", "costume", "stagehand", "curtain", "monologue", "prop", "director", "spotlight", "wing"],
                ["rehearsed", "performed", "improvised", "staged", "auditioned"]),
    "beekeeping": (["hive", "queen", "drone", "apiary", "honeycomb", "smoker", "swarm", "nectar", "frame", "veil"],
                   ["inspected", "harvested", "requeened", "smoked", "fed"]),
}

_TEMPLATES = [
    "The {a} {v} the {b} before the {c} arrived.",
    "A {a} near the {b} {v} another {c} on Tuesday.",
    "After the {a} was ready, the {b} {v} the {c}.",
    "Local reports said the {a} {v} a {b} beside the {c}.",
    "The {a} slowly {v} the {b} while the {c} waited.",
    "Once the {b} opened, a {a} {v} the {c} again.",
    "Nobody expected that the {a} {v} the {b} behind the {c}.",
    "By noon the {a} had {v} every {b} around the {c}.",
    "Witnesses confirmed the {a} {v} the {b} despite the {c}.",
    "That winter the {a} {v} the {b} without the {c}.",
]


def synthetic_documents(
    n_docs: int,
    min_sentences: int = 10,
    max_sentences: int = 16,
    seed: int = 0,
) -> list[Document]:
    """Generate topic-coherent documents with globally unique sentences."""
    rng = random.Random(seed)
    topics = list(TOPICS)
    docs = []
    seen: set[str] = set()
    for d in range(n_docs):
        topic = topics[d % len(topics)]
        nouns, verbs = TOPICS[topic]
        n_sents = rng.randint(min_sentences, max_sentences)
        sents = []
        while len(sents) < n_sents:
            tpl = rng.choice(_TEMPLATES)
            a, b, c = rng.sample(nouns, 3)
            s = tpl.format(a=a, v=rng.choice(verbs), b=b, c=c)
            if s not in seen:
                seen.add(s)
                sents.append(s)
        docs.append(Document(f"doc{d:05d}", tuple(sents)))
    return docs


def synthetic_connective_pairs(n_pairs: int, seed: int = 0) -> list[tuple[str, str, str]]:
    """Labeled (segment, segment, marker) triples with a long-tail marker mix."""
    markers = ["while", "although", "because", "after", "before", "unless",
               "since", "whereas", "moreover", "however", "meanwhile", "thus",
               "albeit", "notwithstanding"]
    weights = [30, 25, 22, 18, 15, 12, 10, 8, 6, 5, 4, 3, 1, 1]
    rng = random.Random(seed)
    docs = synthetic_documents(max(20, n_pairs // 6 + 1), 8, 10, seed=seed + 1)
    sentences = [s for d in docs for s in d.sentences]
    out = []
    for _ in range(n_pairs):
        a = sentences[rng.randrange(len(sentences))]
        b = sentences[rng.randrange(len(sentences))]
        marker = rng.choices(markers, weights=weights, k=1)[0]
        out.append((a, b, marker))
    return out


def synthetic_tree(n_edus: int, seed: int = 0, max_children: int = 8,
                   relations: tuple[str, ...] = ("elaboration-additional", "contrast",
                                                 "list", "background", "cause")) -> Internal | Leaf:
    """A random n-ary discourse tree over dummy EDU texts."""
    rng = random.Random(seed)
    docs = synthetic_documents(1, n_edus, n_edus, seed=seed)
    leaves_ = [Leaf(i + 1, docs[0].sentences[i]) for i in range(n_edus)]
    return _grow(leaves_, rng, max_children, relations)


def _grow(nodes: list, rng: random.Random, max_children: int, relations) -> Internal | Leaf:
    if len(nodes) == 1:
        return nodes[0]
    width = rng.randint(2, min(max_children, len(nodes)))
    # split nodes into `width` contiguous groups
    cuts = sorted(rng.sample(range(1, len(nodes)), width - 1)) if width > 1 else []
    groups, prev = [], 0
    for cut in cuts + [len(nodes)]:
        groups.append(nodes[prev:cut])
        prev = cut
    children = [_grow(g, rng, max_children, relations) for g in groups]
    roll = rng.random()
    if roll < 0.4:  # multinuclear
        marks = [NUCLEUS] * len(children)
    elif roll < 0.8:  # mononuclear: one nucleus, satellites around it
        marks = [SATELLITE] * len(children)
        marks[rng.randrange(len(marks))] = NUCLEUS
    else:  # mixed marks, at least one nucleus
        marks = [NUCLEUS if rng.random() < 0.5 else SATELLITE for _ in children]
        if NUCLEUS not in marks:
            marks[rng.randrange(len(marks))] = NUCLEUS
    return Internal(tuple(children), tuple(marks), rng.choice(relations))


def synthetic_cloze_records(n_records: int, seed: int = 0):
    """Story records: 4 topic-consistent context sentences and 2 endings."""
    from .tasks import ClozeRecord

    rng = random.Random(seed)
    docs = synthetic_documents(max(10, n_records // 2), 6, 8, seed=seed + 2)
    records = []
    for i in range(n_records):
        doc = docs[rng.randrange(len(docs))]
        start = rng.randrange(len(doc.sentences) - 4)
        context = doc.sentences[start:start + 4]
        true_end = doc.sentences[start + 4]
        other = docs[rng.randrange(len(docs))]
        while other.id == doc.id:
            other = docs[rng.randrange(len(docs))]
        wrong_end = other.sentences[rng.randrange(len(other.sentences))]
        answer = rng.randint(1, 2)
        endings = (true_end, wrong_end) if answer == 1 else (wrong_end, true_end)
        records.append(ClozeRecord(tuple(context), endings, answer))
    return records
