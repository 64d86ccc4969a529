"""Desk-scale span-ranking coreference resolution with segment-based encoding."""

from .corpus import (
    Document,
    GapExample,
    SubwordVocabulary,
    Token,
    build_vocabulary,
    parse_conll,
    parse_gap,
    serialize_conll,
    tokenize_document,
)
from .encoder import EncoderConfig, PrecomputedVectorEncoder, TransformerEncoder, check_encoder_contract
from .segmentation import SegmentationConfig, Segment, segment_document, truncate_document
from .model import (
    AntecedentTable,
    ModelConfig,
    SpanRankingModel,
    load_checkpoint,
    save_checkpoint,
)
from .training import TrainConfig, gradient_check, lr_schedule, train
from .evaluation import (
    GapReport,
    MetricScores,
    Partition,
    b_cubed,
    ceaf_phi4,
    conll_average,
    decode_clusters,
    gap_resolve,
    gap_score,
    muc,
    score_corpus,
)
from .estimator import CoreferenceResolver
from .config import ExperimentConfig

__version__ = "0.1.0"

__all__ = [
    "AntecedentTable", "CoreferenceResolver", "Document", "EncoderConfig",
    "ExperimentConfig", "GapExample", "GapReport", "MetricScores", "ModelConfig",
    "Partition", "PrecomputedVectorEncoder", "Segment", "SegmentationConfig",
    "SpanRankingModel", "SubwordVocabulary", "Token", "TrainConfig",
    "TransformerEncoder", "b_cubed", "build_vocabulary", "ceaf_phi4",
    "check_encoder_contract", "conll_average", "decode_clusters", "gap_resolve",
    "gap_score", "gradient_check", "load_checkpoint", "lr_schedule", "muc",
    "parse_conll", "parse_gap", "save_checkpoint", "score_corpus",
    "segment_document", "serialize_conll", "tokenize_document", "train",
    "truncate_document",
]
