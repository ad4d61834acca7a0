"""discoprobe: measure how much discourse structure each layer of a frozen
pretrained language model captures.

Seven probing tasks (next-sentence prediction, sentence ordering, discourse
connectives, RST nuclearity, RST relations, EDU segmentation, and the cloze
story test) are built from corpora and discourse treebanks, lightweight MLP
probes are trained per layer on frozen representations, and results are
aggregated into the cross-task normalized average.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    BinaryDiscourseTree,
    BinaryInternal,
    Document,
    DiscourseTree,
    Internal,
    Leaf,
    RelationMap,
    binarize,
    bundled_relation_map,
    load_documents,
    load_tree_interchange,
    map_relation,
    parse_dis,
    sentence_split,
    serialize_dis,
)
from .encoder import EncoderSpec, FeatureCache, encode, encode_tokens, register_model  # noqa: F401
from .heads import ProbeConfig, ProbeHead, decode_order, mlp_forward, score_candidates, tag_tokens  # noqa: F401
from .metrics import ScoreMatrix, accuracy, aggregate, macro_f1, ordering_breakdown, seed_stats, spearman  # noqa: F401
from .tasks import (  # noqa: F401
    DatasetSplit,
    build_cloze,
    build_connectives,
    build_edu_segmentation,
    build_nsp,
    build_ordering,
    build_rst_pairs,
)
from .training import RunRecord, TrainConfig, evaluate, train_probe  # noqa: F401
