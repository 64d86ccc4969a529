import pathlib

import pytest
import torch

from segcoref.encoder import EncoderConfig
from segcoref.model import ModelConfig, SpanRankingModel
from segcoref.segmentation import SegmentationConfig
from segcoref.synthetic import synthetic_corpus

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> pathlib.Path:
    return FIXTURES


@pytest.fixture()
def tiny_corpus():
    docs, vocab = synthetic_corpus(num_docs=3, seed=7, num_entities=2, mentions_per_entity=3)
    return docs, vocab


def make_model(vocab_size: int, *, variant="independent", max_segment_len=16, hidden=16,
               layers=1, heads=2, max_span_width=2, prune_ratio=1.5, max_antecedents=30,
               refinement_iterations=1, feature_size=4, ffnn_hidden=32, seed=0,
               dropout=0.0) -> SpanRankingModel:
    encoder = EncoderConfig(hidden_size=hidden, num_layers=layers, num_heads=heads,
                            feedforward_size=2 * hidden, max_positions=64,
                            dropout_rate=dropout, vocab_size=vocab_size)
    model_cfg = ModelConfig(max_span_width=max_span_width, ffnn_hidden_size=ffnn_hidden,
                            ffnn_depth=1, feature_size=feature_size, prune_ratio=prune_ratio,
                            max_antecedents=max_antecedents,
                            refinement_iterations=refinement_iterations, dropout=dropout)
    seg = SegmentationConfig(variant=variant, max_segment_len=max_segment_len)
    torch.manual_seed(seed)
    return SpanRankingModel(encoder, model_cfg, seg)
