import pytest

from discoprobe import synth
from discoprobe.corpus import Document, binarize, bundled_relation_map, leaves
from discoprobe.tasks import (
    BuilderError,
    ClozeRecord,
    CorpusExhausted,
    DatasetSplit,
    OrderingInstance,
    boundary_labels_from_lengths,
    build_cloze,
    build_connectives,
    build_edu_segmentation,
    build_nsp,
    build_ordering,
    build_rst_pairs,
)


# -- NSP ----------------------------------------------------------------------

def test_nsp_counts_and_structure(synth_docs):
    split = build_nsp(synth_docs, {2: 40, 4: 40, 6: 40, 8: 40}, seed=5)
    assert split.sizes == (128, 16, 16)
    for inst in split.train + split.dev + split.test:
        assert len(inst.segments) in (2, 4, 6, 8)
        assert len(inst.candidates) == 4
        assert len(set(inst.candidates)) == 4
        assert 0 <= inst.label < 4


def test_nsp_positive_is_true_next_sentence(synth_docs):
    split = build_nsp(synth_docs, {2: 30}, seed=5)
    by_doc = {d.id: d.sentences for d in synth_docs}
    for inst in split.train:
        positive = inst.candidates[inst.label]
        hit = False
        for sents in by_doc.values():
            for start in range(len(sents) - 2):
                if tuple(inst.segments) == sents[start:start + 2] and positive == sents[start + 2]:
                    hit = True
        assert hit


def test_nsp_short_document_boundaries():
    # a 3-sentence document yields exactly one k=2 instance; 2-sentence docs none
    docs = [Document("a", ("S1.", "S2.", "S3.")), Document("b", ("T1.", "T2."))] + [
        Document(f"pad{i}", tuple(f"P{i}{j}." for j in range(9))) for i in range(20)
    ]
    # 20 pad docs x 7 positions + 1 from doc "a" = 141 eligible k=2 contexts
    split = build_nsp(docs, {2: 141}, seed=1, split_fractions=(1.0, 0.0, 0.0))
    from_a = [i for i in split.train if i.candidates[i.label] == "S3."]
    assert len(from_a) == 1
    assert tuple(from_a[0].segments) == ("S1.", "S2.")
    assert not any("T" in c for i in split.train for c in i.segments)
    with pytest.raises(CorpusExhausted):
        build_nsp(docs, {2: 142}, seed=1, split_fractions=(1.0, 0.0, 0.0))


def test_nsp_train_distractors_disjoint_from_test(synth_docs):
    split = build_nsp(synth_docs, {2: 60, 4: 60}, seed=7)
    test_sentences = {s for inst in split.test for s in inst.segments}
    test_sentences |= {c for inst in split.test for c in inst.candidates}
    for inst in split.train:
        distractors = [c for i, c in enumerate(inst.candidates) if i != inst.label]
        assert not set(distractors) & test_sentences


def test_nsp_exhaustion():
    docs = [Document("a", ("S1.", "S2.", "S3."))] * 1  # one tiny doc
    with pytest.raises(CorpusExhausted):
        build_nsp(docs, {8: 10}, seed=1, split_fractions=(1.0, 0.0, 0.0))


def test_nsp_reproducible(synth_docs):
    s1 = build_nsp(synth_docs, {2: 50}, seed=3)
    s2 = build_nsp(synth_docs, {2: 50}, seed=3)
    assert s1.train == s2.train and s1.dev == s2.dev and s1.test == s2.test
    s3 = build_nsp(synth_docs, {2: 50}, seed=4)
    assert s3.train != s1.train


def test_nsp_rejects_bad_context_size(synth_docs):
    with pytest.raises(BuilderError):
        build_nsp(synth_docs, {3: 10})


# -- ordering -------------------------------------------------------------------

def test_ordering_counts_and_permutations(synth_docs):
    split = build_ordering(synth_docs, {n: 20 for n in range(3, 8)}, seed=2)
    assert split.sizes == (80, 10, 10)
    sizes = [len(i.sentences) for i in split.train]
    for n in range(3, 8):
        assert sizes.count(n) == 16
    for inst in split.train:
        assert sorted(inst.gold_ranks) == list(range(1, len(inst.sentences) + 1))
        assert list(inst.gold_ranks) != sorted(inst.gold_ranks)  # identity excluded


def test_ordering_gold_ranks_recover_original(synth_docs):
    split = build_ordering(synth_docs, {3: 30}, seed=9)
    originals = {d.id: d.sentences for d in synth_docs}
    for inst in split.train[:10]:
        restored = [s for _, s in sorted(zip(inst.gold_ranks, inst.sentences))]
        found = any(
            tuple(restored) == sents[i:i + 3]
            for sents in originals.values() for i in range(len(sents) - 2)
        )
        assert found


def test_ordering_instance_validation():
    with pytest.raises(BuilderError):
        OrderingInstance(("a", "b", "c"), (1, 1, 2))
    with pytest.raises(BuilderError):
        OrderingInstance(("a", "b"), (2, 1))


# -- connectives ----------------------------------------------------------------

def test_connective_threshold():
    pairs = [("a", "b", "while")] * 12 + [("c", "d", "albeit")] * 11
    split = build_connectives(pairs, min_frequency=12, split_fractions=(0.8, 0.1, 0.1))
    labels = {i.label for i in split.train + split.dev + split.test}
    assert labels == {"while", "OTHER"}
    kept = [i for i in split.train + split.dev + split.test if i.label == "while"]
    assert len(kept) == 12  # marker at exactly the threshold is kept


def test_connective_label_coverage_and_inventory():
    pairs = synth.synthetic_connective_pairs(600, seed=4)
    split = build_connectives(pairs, seed=4)
    train_labels = {i.label for i in split.train}
    assert {i.label for i in split.dev} <= train_labels
    assert {i.label for i in split.test} <= train_labels
    assert sorted(train_labels | {"OTHER"}) >= sorted(split.provenance["label_inventory"])


def test_connective_empty_input():
    with pytest.raises(BuilderError):
        build_connectives([])


# -- RST pairs --------------------------------------------------------------------

def test_rst_pairs_counts_and_alignment():
    rmap = bundled_relation_map("en")
    trees = [binarize(synth.synthetic_tree(5, seed=s)) for s in range(12)]
    nuc, rel = build_rst_pairs(trees, rmap, seed=0)
    # one instance per internal node: 4 per 5-leaf binary tree
    assert sum(nuc.sizes) == sum(len(leaves(t)) - 1 for t in trees) == 48
    assert nuc.sizes == rel.sizes
    for n_inst, r_inst in zip(nuc.train, rel.train):
        assert n_inst.segments == r_inst.segments  # index-aligned
        assert n_inst.label in ("NN", "NS", "SN")
        assert r_inst.label in rmap.coarse_labels


def test_rst_pairs_segments_read_off_node():
    from discoprobe.corpus import BinaryInternal, Leaf

    rmap = bundled_relation_map("en")
    tree = BinaryInternal(Leaf(1, "Left span."), Leaf(2, "Right span."), "NS", "elaboration-additional")
    nuc, rel = build_rst_pairs({"train": [tree], "dev": [], "test": []}, rmap)
    assert nuc.train[0].segments == ("Left span.", "Right span.")
    assert nuc.train[0].label == "NS"
    assert rel.train[0].label == "elaboration"


def test_rst_pairs_requires_binary():
    rmap = bundled_relation_map("en")
    tree = synth.synthetic_tree(6, seed=3)
    with pytest.raises(BuilderError):
        build_rst_pairs({"train": [tree], "dev": [], "test": []}, rmap)


def test_rst_pairs_document_level_split():
    rmap = bundled_relation_map("en")
    trees = [binarize(synth.synthetic_tree(6, seed=s)) for s in range(30)]
    nuc, _ = build_rst_pairs(trees, rmap, seed=1)
    # instances of one tree never straddle splits: segment texts are unique per
    # tree here, so each split's segment set must be disjoint from the others
    seen = {}
    for part, insts in nuc.parts():
        for inst in insts:
            key = inst.segments
            assert seen.setdefault(key, part) == part


# -- segmentation ------------------------------------------------------------------

def test_boundary_labels():
    assert boundary_labels_from_lengths([3, 2]) == (0, 0, 1, 0, 1)
    assert boundary_labels_from_lengths([4]) == (0, 0, 0, 1)
    with pytest.raises(BuilderError):
        boundary_labels_from_lengths([2, 0])


def test_segmentation_invariants():
    docs = [["one two three", "four five", "six"], ["seven eight"]]
    split = build_edu_segmentation({"train": docs, "dev": [], "test": []}, str.split)
    for inst in split.train:
        assert sum(inst.edu_token_lengths) == len(inst.boundary_labels)
        assert sum(inst.boundary_labels) == len(inst.edu_token_lengths)
    assert split.train[0].boundary_labels == (0, 0, 1, 0, 1, 1)


def test_segmentation_budget_chunks_at_edu_boundaries():
    edus = ["a b c d", "e f g", "h i", "j k l m n"]
    split = build_edu_segmentation({"train": [edus], "dev": [], "test": []}, str.split, max_tokens=7)
    chunks = [inst.edu_texts for inst in split.train]
    assert chunks == [("a b c d", "e f g"), ("h i", "j k l m n")]
    for inst in split.train:
        assert sum(inst.edu_token_lengths) <= 7


def test_segmentation_oversized_edu_errors():
    with pytest.raises(BuilderError, match="budget"):
        build_edu_segmentation({"train": [["a " * 600]], "dev": [], "test": []}, str.split)


def test_segmentation_accepts_trees():
    tree = synth.synthetic_tree(4, seed=8)
    split = build_edu_segmentation({"train": [tree], "dev": [], "test": []}, str.split)
    assert sum(split.train[0].boundary_labels) == 4


# -- cloze ----------------------------------------------------------------------

def test_cloze_split_sizes():
    records = synth.synthetic_cloze_records(1871, seed=6)
    split = build_cloze(records, test_records=synth.synthetic_cloze_records(100, seed=7))
    assert split.sizes == (1683, 188, 100)


def test_cloze_label_convention():
    rec = ClozeRecord(("s1", "s2", "s3", "s4"), ("end a", "end b"), answer=2)
    split = build_cloze([rec, rec], train_fraction=0.5)
    assert split.train[0].label == 1  # 1-based answer 2 -> 0-based index 1
    assert split.train[0].context == "s1 s2 s3 s4"


def test_cloze_rejects_three_endings():
    with pytest.raises(BuilderError, match="2 endings"):
        ClozeRecord(("a", "b", "c", "d"), ("x", "y", "z"), answer=1)


# -- persistence -------------------------------------------------------------------

@pytest.mark.parametrize("task", ["nsp", "ordering", "segmentation", "cloze"])
def test_jsonl_roundtrip(tmp_path, synth_docs, task):
    if task == "nsp":
        split = build_nsp(synth_docs, {2: 20}, seed=1)
    elif task == "ordering":
        split = build_ordering(synth_docs, {3: 20}, seed=1)
    elif task == "segmentation":
        split = build_edu_segmentation([d.sentences for d in synth_docs[:9]], str.split)
    else:
        split = build_cloze(synth.synthetic_cloze_records(40, seed=2))
    out = tmp_path / task
    split.save(out)
    loaded = DatasetSplit.load(out)
    assert loaded.train == split.train
    assert loaded.dev == split.dev
    assert loaded.test == split.test
    assert loaded.task == split.task
