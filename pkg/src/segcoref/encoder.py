"""Contextual word-piece encoders.

The built-in encoder is a small post-layer-norm transformer with learned
absolute position embeddings: the same block structure and length limits
as the full-scale pretrained encoders it stands in for, at desk scale.
An alternative provider streams precomputed per-piece vectors from a file;
anything implementing ``encode`` and the two size attributes satisfies the
contract (see check_encoder_contract).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol, runtime_checkable

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, EncodingError, ParseError
from .segmentation import Segment

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class EncoderConfig:
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 8
    feedforward_size: int = 256
    max_positions: int = 512
    dropout_rate: float = 0.1
    vocab_size: int = 1024
    layer_norm_eps: float = 1e-12
    dtype: str = "float64"

    def __post_init__(self):
        if self.hidden_size % self.num_heads:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


@runtime_checkable
class EncoderProvider(Protocol):
    hidden_size: int
    max_positions: int

    def encode(self, segment: Segment, mode: str = EVAL, doc_key: str | None = None) -> torch.Tensor:
        ...


class SelfAttention(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        d, dtype = config.hidden_size, config.torch_dtype
        self.num_heads = config.num_heads
        self.head_dim = d // config.num_heads
        self.query = nn.Linear(d, d, dtype=dtype)
        self.key = nn.Linear(d, d, dtype=dtype)
        self.value = nn.Linear(d, d, dtype=dtype)
        self.output = nn.Linear(d, d, dtype=dtype)
        self.attn_dropout = nn.Dropout(config.dropout_rate)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, d = x.shape
        def split(t):  # [n, d] -> [heads, n, head_dim]
            return t.view(n, self.num_heads, self.head_dim).transpose(0, 1)
        q, k, v = split(self.query(x)), split(self.key(x)), split(self.value(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)  # [heads, n, n]
        probs = self.attn_dropout(torch.softmax(scores, dim=-1))
        mixed = (probs @ v).transpose(0, 1).reshape(n, d)
        return self.output(mixed)


class EncoderLayer(nn.Module):
    """Post-LN block: LN(x + dropout(attn(x))), then LN(x + dropout(ffn(x)))."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        d, dtype, eps = config.hidden_size, config.torch_dtype, config.layer_norm_eps
        self.attention = SelfAttention(config)
        self.attn_norm = nn.LayerNorm(d, eps=eps, dtype=dtype)
        self.ffn_in = nn.Linear(d, config.feedforward_size, dtype=dtype)
        self.ffn_out = nn.Linear(config.feedforward_size, d, dtype=dtype)
        self.ffn_norm = nn.LayerNorm(d, eps=eps, dtype=dtype)
        self.dropout = nn.Dropout(config.dropout_rate)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.attn_norm(x + self.dropout(self.attention(x)))
        h = self.ffn_out(torch.nn.functional.gelu(self.ffn_in(x)))
        return self.ffn_norm(x + self.dropout(h))


class TransformerEncoder(nn.Module):
    """Toy bidirectional transformer over a single segment of word pieces."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.hidden_size = config.hidden_size
        self.max_positions = config.max_positions
        dtype = config.torch_dtype
        self.token_embeddings = nn.Embedding(config.vocab_size, config.hidden_size, dtype=dtype)
        self.position_embeddings = nn.Embedding(config.max_positions, config.hidden_size, dtype=dtype)
        self.embedding_dropout = nn.Dropout(config.dropout_rate)
        self.layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.num_layers))
        with torch.no_grad():
            self.token_embeddings.weight.normal_(0.0, 0.02)
            self.position_embeddings.weight.normal_(0.0, 0.02)

    def forward(self, piece_ids: torch.Tensor) -> torch.Tensor:
        n = piece_ids.shape[0]
        if n > self.max_positions:
            raise EncodingError(f"segment of {n} pieces exceeds max_positions={self.max_positions}")
        positions = torch.arange(n, device=piece_ids.device)
        x = self.token_embeddings(piece_ids) + self.position_embeddings(positions)
        x = self.embedding_dropout(x)
        for layer in self.layers:
            x = layer(x)
        return x

    def encode(self, segment: Segment, mode: str = EVAL, doc_key: str | None = None) -> torch.Tensor:
        # mode switches dropout only; callers own the grad context.
        self.train(mode == TRAIN)
        ids = torch.tensor(segment.pieces, dtype=torch.long)
        return self(ids)


class PrecomputedVectorEncoder:
    """Serves per-piece vectors loaded from a vector file (or mapping)."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise ConfigError("no precomputed vectors given")
        widths = {v.shape[1] for v in vectors.values()}
        if len(widths) != 1:
            raise ConfigError(f"inconsistent vector widths: {sorted(widths)}")
        self.vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        self.hidden_size = widths.pop()
        self.max_positions = max(v.shape[0] for v in vectors.values())

    @classmethod
    def from_file(cls, path) -> "PrecomputedVectorEncoder":
        return cls(read_piece_vectors(path))

    def encode(self, segment: Segment, mode: str = EVAL, doc_key: str | None = None) -> torch.Tensor:
        if doc_key is None:
            raise EncodingError("precomputed encoder needs a doc_key")
        if doc_key not in self.vectors:
            raise EncodingError(f"no precomputed vectors for document {doc_key!r}")
        table = self.vectors[doc_key]
        if segment.stop > table.shape[0] or segment.start < 0:
            raise EncodingError(
                f"segment [{segment.start}, {segment.stop}) outside the {table.shape[0]} "
                f"stored pieces of {doc_key!r}"
            )
        return torch.from_numpy(table[segment.start:segment.stop].copy())


def write_piece_vectors(path, vectors: dict[str, np.ndarray]) -> None:
    """Vector file: per document a text header "doc_key<TAB>count<TAB>d" then
    count*d little-endian 64-bit floats, row-major."""
    with open(path, "wb") as f:
        for doc_key, table in vectors.items():
            arr = np.ascontiguousarray(table, dtype="<f8")
            f.write(f"{doc_key}\t{arr.shape[0]}\t{arr.shape[1]}\n".encode("utf-8"))
            f.write(arr.tobytes())


def read_piece_vectors(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        while True:
            header = f.readline()
            if not header:
                break
            parts = header.decode("utf-8").rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ParseError(f"malformed vector file header {header!r}")
            doc_key, count, d = parts[0], int(parts[1]), int(parts[2])
            payload = f.read(count * d * 8)
            if len(payload) != count * d * 8:
                raise ParseError(f"truncated vector payload for document {doc_key!r}")
            out[doc_key] = np.frombuffer(payload, dtype="<f8").reshape(count, d).copy()
    return out


@dataclass(frozen=True)
class ContractCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ContractReport:
    checks: tuple[ContractCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        return "\n".join(
            f"[{'pass' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else "")
            for c in self.checks
        )


def check_encoder_contract(provider: EncoderProvider, probe: Segment,
                           doc_key: str | None = None) -> ContractReport:
    """Probe shape, finiteness, eval determinism, and length-bound rejection."""
    checks: list[ContractCheck] = []

    out = None
    try:
        out = provider.encode(probe, EVAL, doc_key)
        ok = tuple(out.shape) == (len(probe), provider.hidden_size)
        detail = "" if ok else f"expected shape {(len(probe), provider.hidden_size)}, got {tuple(out.shape)}"
        checks.append(ContractCheck("output shape", ok, detail))
    except Exception as exc:  # a misbehaving provider must not crash the check
        checks.append(ContractCheck("output shape", False, f"encode raised {exc!r}"))

    if out is not None:
        finite = bool(torch.isfinite(out).all())
        checks.append(ContractCheck("finite values", finite))
        try:
            again = provider.encode(probe, EVAL, doc_key)
            same = again.shape == out.shape and bool(torch.equal(again, out))
            checks.append(ContractCheck("eval determinism", same))
        except Exception as exc:
            checks.append(ContractCheck("eval determinism", False, f"second encode raised {exc!r}"))

    too_long = replace(
        probe,
        pieces=tuple(probe.pieces[i % len(probe)] for i in range(provider.max_positions + 1)),
    )
    try:
        provider.encode(too_long, EVAL, doc_key)
        checks.append(ContractCheck("length bound rejected", False,
                                    f"accepted {len(too_long)} > max_positions={provider.max_positions}"))
    except Exception:
        checks.append(ContractCheck("length bound rejected", True))

    return ContractReport(tuple(checks))
