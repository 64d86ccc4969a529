"""Scikit-learn style front end.

CoreferenceResolver wraps the whole pipeline behind fit/predict/score so it
composes with the surrounding ecosystem (get_params, set_params, clone).
X is a list of tokenized Documents; gold clusters travel inside them, so y
is accepted but unused.
"""

from __future__ import annotations

import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus.types import DEFAULT_GENRES, Document, Span
from .encoder import EncoderConfig
from .evaluation import gold_token_partition, predict_token_partition, score_corpus
from .model import ModelConfig, SpanRankingModel
from .segmentation import SegmentationConfig
from .training import TrainConfig, train
from .validation import check_documents


class CoreferenceResolver(BaseEstimator):
    """Span-ranking coreference resolver with segment-based encoding.

    Parameters mirror the subsystem configs; see EncoderConfig, ModelConfig,
    SegmentationConfig and TrainConfig for semantics. vocab_size=None infers
    the vocabulary size from the training documents at fit time.
    """

    def __init__(self, variant="independent", max_segment_len=128, hidden_size=64,
                 num_layers=2, num_heads=8, feedforward_size=256, max_positions=512,
                 encoder_dropout=0.1, vocab_size=None, dtype="float64",
                 max_span_width=10, ffnn_hidden_size=150, ffnn_depth=1, feature_size=20,
                 prune_ratio=0.4, max_antecedents=50, refinement_iterations=2,
                 dropout=0.3, use_span_width_feature=False, genres=DEFAULT_GENRES,
                 epochs=20, lr_encoder=1e-5, lr_task=2e-4, max_training_segments=11,
                 grad_clip_norm=1.0, resample_truncation=True, seed=0):
        self.variant = variant
        self.max_segment_len = max_segment_len
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.feedforward_size = feedforward_size
        self.max_positions = max_positions
        self.encoder_dropout = encoder_dropout
        self.vocab_size = vocab_size
        self.dtype = dtype
        self.max_span_width = max_span_width
        self.ffnn_hidden_size = ffnn_hidden_size
        self.ffnn_depth = ffnn_depth
        self.feature_size = feature_size
        self.prune_ratio = prune_ratio
        self.max_antecedents = max_antecedents
        self.refinement_iterations = refinement_iterations
        self.dropout = dropout
        self.use_span_width_feature = use_span_width_feature
        self.genres = genres
        self.epochs = epochs
        self.lr_encoder = lr_encoder
        self.lr_task = lr_task
        self.max_training_segments = max_training_segments
        self.grad_clip_norm = grad_clip_norm
        self.resample_truncation = resample_truncation
        self.seed = seed

    def _configs(self, docs: list[Document]):
        vocab_size = self.vocab_size
        if vocab_size is None:
            vocab_size = 1 + max(max(d.word_pieces) for d in docs)
        encoder = EncoderConfig(
            hidden_size=self.hidden_size, num_layers=self.num_layers,
            num_heads=self.num_heads, feedforward_size=self.feedforward_size,
            max_positions=self.max_positions, dropout_rate=self.encoder_dropout,
            vocab_size=vocab_size, dtype=self.dtype)
        model = ModelConfig(
            max_span_width=self.max_span_width, ffnn_hidden_size=self.ffnn_hidden_size,
            ffnn_depth=self.ffnn_depth, feature_size=self.feature_size,
            prune_ratio=self.prune_ratio, max_antecedents=self.max_antecedents,
            refinement_iterations=self.refinement_iterations, dropout=self.dropout,
            use_span_width_feature=self.use_span_width_feature, genres=tuple(self.genres))
        segmentation = SegmentationConfig(variant=self.variant, max_segment_len=self.max_segment_len)
        training = TrainConfig(
            epochs=self.epochs, lr_encoder=self.lr_encoder, lr_task=self.lr_task,
            dropout=self.dropout, max_training_segments=self.max_training_segments,
            seed=self.seed, grad_clip_norm=self.grad_clip_norm,
            resample_truncation=self.resample_truncation)
        return encoder, model, segmentation, training

    def fit(self, X, y=None):
        """Train a fresh model on the given documents."""
        docs = check_documents(X, require_tokenized=True)
        encoder_cfg, model_cfg, seg_cfg, train_cfg = self._configs(docs)
        torch.manual_seed(self.seed)
        model = SpanRankingModel(encoder_cfg, model_cfg, seg_cfg)
        self.loss_history_ = train(docs, model, train_cfg)
        self.model_ = model
        self.vocab_size_ = encoder_cfg.vocab_size
        return self

    def predict(self, X) -> list[list[list[Span]]]:
        """Predicted clusters per document, as lists of token spans."""
        check_is_fitted(self, "model_")
        docs = check_documents(X, require_tokenized=True)
        out = []
        for doc in docs:
            partition = predict_token_partition(self.model_, doc)
            out.append([sorted(c) for c in partition.clusters])
        return out

    def score(self, X, y=None) -> float:
        """Micro-aggregated CoNLL F1 against the documents' gold clusters."""
        check_is_fitted(self, "model_")
        docs = check_documents(X, require_tokenized=True)
        pairs = [(gold_token_partition(d), predict_token_partition(self.model_, d)) for d in docs]
        return score_corpus(pairs).conll_f1

    def __sklearn_is_fitted__(self) -> bool:
        return hasattr(self, "model_")
