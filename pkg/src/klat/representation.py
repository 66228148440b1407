"""Token embedding, bidirectional recurrent encoding, label embedding.

The contextual embedder is pluggable. The default "frozen_lookup" backend
is a fixed, seeded embedding table: deterministic, network-free, and a
frozen stand-in for a pretrained model at desk scale. A "hf" backend can
load a local pretrained transformer checkpoint when one is available; a
"trainable_lookup" backend (same table, gradients on) backs the ablation
that removes the pretrained embedding stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .corpus import LabelVocabulary
from .errors import ConfigurationError
from .seeding import derive_seed, glorot_uniform_

EMBEDDER_BACKENDS = ("frozen_lookup", "trainable_lookup", "hf")


class TextEmbedder(nn.Module):
    """Maps token ids to contextual (or positionally independent) embeddings."""

    def __init__(
        self,
        backend: str = "frozen_lookup",
        vocab_size: int | None = None,
        dim: int = 300,
        seed: int = 0,
        checkpoint: str | None = None,
    ):
        super().__init__()
        if backend not in EMBEDDER_BACKENDS:
            raise ConfigurationError(f"unknown embedder backend {backend!r}")
        self.backend = backend
        if backend == "hf":
            if not checkpoint or not Path(checkpoint).exists():
                raise ConfigurationError(f"pretrained encoder checkpoint not found: {checkpoint!r}")
            from transformers import AutoModel

            self.plm = AutoModel.from_pretrained(checkpoint)
            self.plm.requires_grad_(False)
            self.dim = self.plm.config.hidden_size
        else:
            if vocab_size is None:
                raise ConfigurationError("vocab_size required for lookup embedders")
            self.dim = dim
            table = torch.empty(vocab_size, dim)
            glorot_uniform_(table, derive_seed(seed, f"embedder_table:{backend}"))
            trainable = backend == "trainable_lookup"
            self.table = nn.Parameter(table, requires_grad=trainable)

    def forward(self, token_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """(B, l) ids, (B, l) mask -> (B, l, dim)."""
        if self.backend == "hf":
            with torch.no_grad():
                out = self.plm(input_ids=token_ids, attention_mask=mask)
            return out.last_hidden_state
        return self.table[token_ids]


def embed_text(token_ids, mask, embedder: TextEmbedder) -> torch.Tensor:
    """Single-sequence convenience wrapper; returns (l, dim)."""
    ids = torch.as_tensor(token_ids, dtype=torch.long).unsqueeze(0)
    m = torch.as_tensor(mask, dtype=torch.long).unsqueeze(0)
    return embedder(ids, m).squeeze(0)


class SequenceEncoder(nn.Module):
    """Linear projection followed by a bidirectional LSTM.

    Output is (B, l, 2H) with the forward pass in columns [0, H) and the
    backward pass in [H, 2H). Sequences are packed to their true lengths,
    so padded positions are ignored by both directions and come out zero.
    """

    def __init__(self, input_dim: int, hidden: int = 300, proj_dim: int = 300):
        super().__init__()
        self.proj = nn.Linear(input_dim, proj_dim)
        self.lstm = nn.LSTM(proj_dim, hidden, batch_first=True, bidirectional=True)
        self.hidden = hidden

    def forward(self, emb: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        lengths = mask.long().sum(dim=1)
        if (lengths == 0).any():
            raise ValueError("fully masked sequence")
        x = torch.tanh(self.proj(emb))
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, _ = self.lstm(packed)
        unpacked, _ = pad_packed_sequence(out, batch_first=True, total_length=emb.shape[1])
        return unpacked


class ProjectionEncoder(nn.Module):
    """Recurrent-free replacement: a direct linear map to the 2H width."""

    def __init__(self, input_dim: int, hidden: int = 300):
        super().__init__()
        self.proj = nn.Linear(input_dim, 2 * hidden)
        self.hidden = hidden

    def forward(self, emb: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        out = torch.tanh(self.proj(emb))
        return out * mask.unsqueeze(-1).to(out.dtype)


def encode_sequence(emb, mask, encoder: SequenceEncoder) -> torch.Tensor:
    """Single-sequence wrapper over the batched encoder; returns (l, 2H)."""
    e = torch.as_tensor(emb, dtype=torch.float32).unsqueeze(0)
    m = torch.as_tensor(mask, dtype=torch.long).unsqueeze(0)
    return encoder(e, m).squeeze(0)


def load_vector_table(path) -> dict[str, np.ndarray]:
    """Read a word-vector table in the plain "token v1 v2 ... vd" format."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"word-vector table not found: {path}")
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            table[parts[0]] = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
    if not table:
        raise ConfigurationError(f"word-vector table is empty: {path}")
    return table


def _label_tokens(name: str) -> list[str]:
    out = name.lower()
    for sep in (".", "-", "_"):
        out = out.replace(sep, " ")
    return out.split()


@dataclass
class LabelEmbeddingMatrix:
    matrix: np.ndarray  # (M, d)
    provenance: list[str]  # per row: pretrained | averaged | random-init


def embed_labels(vocab: LabelVocabulary, table: dict[str, np.ndarray], seed: int) -> LabelEmbeddingMatrix:
    """Build the M x d label matrix from pretrained word vectors.

    Exact-name hits use the stored vector; multi-token names average the
    vectors of their in-table tokens; names with no coverage get a
    reproducible Normal(0, 0.1) row seeded per label name, so the matrix
    permutes exactly with the vocabulary.
    """
    dim = len(next(iter(table.values())))
    rows = np.zeros((len(vocab), dim), dtype=np.float64)
    provenance = []
    for i, name in enumerate(vocab.names):
        key = name.lower()
        if key in table:
            rows[i] = table[key]
            provenance.append("pretrained")
            continue
        hits = [table[tok] for tok in _label_tokens(name) if tok in table]
        if hits:
            rows[i] = np.mean(hits, axis=0)
            provenance.append("averaged")
        else:
            rng = np.random.default_rng(derive_seed(seed, f"label:{name}"))
            rows[i] = rng.normal(0.0, 0.1, size=dim)
            provenance.append("random-init")
    return LabelEmbeddingMatrix(matrix=rows, provenance=provenance)


def random_label_matrix(vocab: LabelVocabulary, dim: int, seed: int) -> LabelEmbeddingMatrix:
    """All-random label matrix (the no-pretrained-label-vectors ablation)."""
    rows = np.zeros((len(vocab), dim), dtype=np.float64)
    for i, name in enumerate(vocab.names):
        rng = np.random.default_rng(derive_seed(seed, f"label:{name}"))
        rows[i] = rng.normal(0.0, 0.1, size=dim)
    return LabelEmbeddingMatrix(matrix=rows, provenance=["random-init"] * len(vocab))
