import numpy as np
import pytest
import torch

from segcoref.encoder import (
    EncoderConfig,
    PrecomputedVectorEncoder,
    TransformerEncoder,
    check_encoder_contract,
    read_piece_vectors,
    write_piece_vectors,
)
from segcoref.errors import ConfigError, EncodingError
from segcoref.segmentation import Segment


def config(**kw) -> EncoderConfig:
    base = dict(hidden_size=8, num_layers=1, num_heads=2, feedforward_size=16,
                max_positions=16, dropout_rate=0.0, vocab_size=32)
    base.update(kw)
    return EncoderConfig(**base)


def segment(pieces, start=0):
    return Segment(start=start, pieces=tuple(pieces), segment_index=0)


class TestTransformerEncoder:
    def test_zero_layers_is_embedding_sum(self):
        torch.manual_seed(0)
        enc = TransformerEncoder(config(num_layers=0))
        ids = [3, 1, 4]
        out = enc.encode(segment(ids), "eval")
        expected = enc.token_embeddings.weight[ids] + enc.position_embeddings.weight[:3]
        torch.testing.assert_close(out, expected)

    def test_eval_determinism(self):
        torch.manual_seed(0)
        enc = TransformerEncoder(config(num_layers=2, dropout_rate=0.5))
        a = enc.encode(segment([1, 2, 3, 4]), "eval")
        b = enc.encode(segment([1, 2, 3, 4]), "eval")
        assert torch.equal(a, b)

    def test_permuting_inputs_changes_output(self):
        """Position embeddings break permutation symmetry even at depth 1."""
        torch.manual_seed(1)
        enc = TransformerEncoder(config())
        out1 = enc.encode(segment([5, 6, 7]), "eval")
        out2 = enc.encode(segment([6, 5, 7]), "eval")
        assert not torch.allclose(out1, out2)

    def test_segment_too_long_rejected(self):
        enc = TransformerEncoder(config(max_positions=4))
        with pytest.raises(EncodingError):
            enc.encode(segment([0] * 5), "eval")

    def test_shape_and_dtype(self):
        enc = TransformerEncoder(config())
        out = enc.encode(segment([1, 2, 3, 4, 5]), "eval")
        assert out.shape == (5, 8)
        assert out.dtype == torch.float64

    def test_float32_fast_mode(self):
        enc = TransformerEncoder(config(dtype="float32", layer_norm_eps=1e-6))
        out = enc.encode(segment([1, 2]), "eval")
        assert out.dtype == torch.float32

    def test_bad_head_split_rejected(self):
        with pytest.raises(ConfigError):
            config(hidden_size=8, num_heads=3)


class TestLayerNorm:
    def test_rows_standardized_before_affine(self):
        """Encoder output rows (post-LN, identity affine at init) have mean 0
        and unit variance within 1e-6."""
        torch.manual_seed(0)
        enc = TransformerEncoder(config(num_layers=2))
        out = enc.encode(segment(list(range(10))), "eval")
        means = out.mean(dim=1)
        variances = out.var(dim=1, unbiased=False)
        torch.testing.assert_close(means, torch.zeros_like(means), atol=1e-6, rtol=0)
        torch.testing.assert_close(variances, torch.ones_like(variances), atol=1e-6, rtol=0)


class TestDropout:
    def test_train_mode_zeroing_rate(self):
        """With zero layers the output is dropout(embeddings); the zeroed
        fraction stays within 3 sigma of the configured rate."""
        rate = 0.3
        torch.manual_seed(0)
        enc = TransformerEncoder(config(num_layers=0, dropout_rate=rate, hidden_size=8,
                                        max_positions=16, num_heads=2))
        zeros = total = 0
        for trial in range(100):
            out = enc.encode(segment(list(range(16))), "train")
            zeros += int((out == 0).sum())
            total += out.numel()
        assert total >= 10000
        sigma = (rate * (1 - rate) / total) ** 0.5
        assert abs(zeros / total - rate) < 3 * sigma

    def test_eval_mode_no_zeroing(self):
        torch.manual_seed(0)
        enc = TransformerEncoder(config(num_layers=0, dropout_rate=0.5))
        out = enc.encode(segment(list(range(8))), "eval")
        assert int((out == 0).sum()) == 0


class TestGradients:
    def test_parameter_gradients_match_finite_differences(self):
        """Scalar loss over encode output: analytic vs central differences,
        relative error < 1e-4 at float64 on a d=8 single-layer setup."""
        torch.manual_seed(3)
        enc = TransformerEncoder(config())
        seg = segment([4, 9, 2, 7, 1])
        weights = torch.randn(5, 8, dtype=torch.float64)

        def loss_value():
            return (weights * enc.encode(seg, "eval")).sum()

        loss = loss_value()
        loss.backward()
        h = 3e-4
        worst = 0.0
        for name, param in enc.named_parameters():
            grad = param.grad.view(-1)
            flat = param.data.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + h
                up = float(loss_value().detach())
                flat[i] = orig - h
                down = float(loss_value().detach())
                flat[i] = orig
                fd = (up - down) / (2 * h)
                a = float(grad[i])
                worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-12))
        assert worst < 1e-4, worst


class _WrongRows:
    hidden_size = 8
    max_positions = 16

    def encode(self, seg, mode="eval", doc_key=None):
        return torch.zeros(len(seg) - 1, 8, dtype=torch.float64)


class _FrozenRandom:
    """Context-free provider: a fixed random vector per piece id."""

    hidden_size = 8
    max_positions = 16

    def __init__(self):
        gen = torch.Generator().manual_seed(0)
        self.table = torch.randn(64, 8, dtype=torch.float64, generator=gen)

    def encode(self, seg, mode="eval", doc_key=None):
        if len(seg) > self.max_positions:
            raise EncodingError("too long")
        return self.table[list(seg.pieces)]


class TestContract:
    def test_builtin_transformer_passes(self):
        torch.manual_seed(0)
        enc = TransformerEncoder(config())
        report = check_encoder_contract(enc, segment([1, 2, 3]))
        assert report.passed, str(report)

    def test_wrong_row_count_fails_with_shape_diagnosis(self):
        report = check_encoder_contract(_WrongRows(), segment([1, 2, 3]))
        assert not report.passed
        failing = [c for c in report.checks if not c.passed]
        assert any("shape" in c.name for c in failing)
        assert "expected shape (3, 8)" in failing[0].detail

    def test_frozen_random_provider_passes(self):
        """The contract does not require contextual mixing."""
        report = check_encoder_contract(_FrozenRandom(), segment([1, 2, 3]))
        assert report.passed, str(report)


class TestPrecomputedVectors:
    def test_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        vectors = {
            "nw/a/00/a_000_0": rng.normal(size=(7, 8)),
            "nw/b/00/b_000_0": rng.normal(size=(3, 8)),
        }
        path = tmp_path / "vectors.bin"
        write_piece_vectors(path, vectors)
        back = read_piece_vectors(path)
        assert set(back) == set(vectors)
        for key in vectors:
            np.testing.assert_array_equal(back[key], vectors[key])

    def test_provider_slices_by_segment_coordinates(self, tmp_path):
        rng = np.random.default_rng(1)
        table = rng.normal(size=(10, 8))
        provider = PrecomputedVectorEncoder({"doc_0": table})
        out = provider.encode(segment([0, 0, 0], start=4), doc_key="doc_0")
        np.testing.assert_allclose(out.numpy(), table[4:7])

    def test_provider_requires_doc_key(self):
        provider = PrecomputedVectorEncoder({"doc_0": np.zeros((4, 8))})
        with pytest.raises(EncodingError):
            provider.encode(segment([0]))

    def test_provider_out_of_range(self):
        provider = PrecomputedVectorEncoder({"doc_0": np.zeros((4, 8))})
        with pytest.raises(EncodingError):
            provider.encode(segment([0, 0], start=3), doc_key="doc_0")

    def test_provider_satisfies_contract(self):
        gen = np.random.default_rng(2)
        provider = PrecomputedVectorEncoder({"doc_0": gen.normal(size=(6, 8))})
        report = check_encoder_contract(provider, segment([0, 0, 0], start=1), doc_key="doc_0")
        assert report.passed, str(report)
