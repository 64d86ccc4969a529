"""Experiment configuration: one JSON file with a section per subsystem."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .encoder import EncoderConfig
from .errors import ConfigError
from .model import ModelConfig, SpanRankingModel
from .segmentation import SegmentationConfig
from .training import TrainConfig

_SECTIONS = {
    "encoder": EncoderConfig,
    "model": ModelConfig,
    "segmentation": SegmentationConfig,
    "training": TrainConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    training: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        built = {}
        for section, klass in _SECTIONS.items():
            values = dict(data.get(section, {}))
            known = {f.name for f in fields(klass)}
            bad = set(values) - known
            if bad:
                raise ConfigError(f"unknown key(s) in [{section}]: {sorted(bad)}")
            if section == "model" and "genres" in values:
                values["genres"] = tuple(values["genres"])
            built[section] = klass(**values)
        return cls(**built)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {section: asdict(getattr(self, section)) for section in _SECTIONS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def override(self, *, seed: int | None = None, variant: str | None = None,
                 max_segment_len: int | None = None) -> "ExperimentConfig":
        """Apply the CLI-level flag overrides."""
        out = self
        if seed is not None:
            out = replace(out, training=replace(out.training, seed=seed))
        seg = out.segmentation
        if variant is not None:
            seg = replace(seg, variant=variant)
        if max_segment_len is not None:
            seg = replace(seg, max_segment_len=max_segment_len)
        if seg is not out.segmentation:
            out = replace(out, segmentation=seg)
        return out

    def build_model(self) -> SpanRankingModel:
        return SpanRankingModel(self.encoder, self.model, self.segmentation)


def gradcheck_config() -> ExperimentConfig:
    """Small float64 setup for finite-difference gradient verification.

    Pruning is disabled (infinite ratio and antecedent budget) so tiny
    parameter perturbations cannot flip a discrete selection.
    """
    return ExperimentConfig(
        encoder=EncoderConfig(hidden_size=8, num_layers=1, num_heads=2, feedforward_size=16,
                              max_positions=16, dropout_rate=0.0, vocab_size=64),
        model=ModelConfig(max_span_width=2, ffnn_hidden_size=8, ffnn_depth=1, feature_size=2,
                          prune_ratio=float("inf"), max_antecedents=float("inf"),
                          refinement_iterations=1, dropout=0.0),
        segmentation=SegmentationConfig(variant="overlap", max_segment_len=16),
        training=TrainConfig(seed=4),
    )
