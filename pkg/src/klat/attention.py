"""Weighted doc-know-label attention fusion.

Per-label self-attention over each branch, sigmoid branch gates, bilinear
label-to-position attention, a convex combination of the two label-attended
poolings, and a final ratio-sum gate with range (0, 2) applied row-wise.

All functions accept batched tensors (B, ...) or single instances (no batch
dim) and are pure given (parameters, inputs). Padded positions get -inf
logits before the softmax of the self-attention and zeroed scores in the
bilinear label attention, so masked content never leaks downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import torch
import torch.nn as nn

from .errors import DegenerateInputError


@dataclass
class AttentionTrace:
    """Every intermediate tensor of the fusion chain, for one document."""

    doc_attention: np.ndarray  # (M, l1) softmax rows
    know_attention: np.ndarray  # (M, l2) softmax rows
    doc_gate: np.ndarray  # (M,) in (0,1)
    know_gate: np.ndarray  # (M,) in (0,1)
    label_doc_attention: np.ndarray  # (M, l1) bilinear scores
    label_know_attention: np.ndarray  # (M, l2)
    fused: np.ndarray  # (M, 2H)
    label_gate: np.ndarray  # (M,) in (0,1)
    dependent_weight: np.ndarray  # (M,) in (0,2)
    final: np.ndarray  # (M, 2H)

    def save(self, path) -> None:
        np.savez(path, **{f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def load(cls, path) -> "AttentionTrace":
        with np.load(path) as data:
            return cls(**{f.name: data[f.name] for f in fields(cls)})


class FusionParameters(nn.Module):
    """Trainable weights of the fusion chain.

    Shapes (M labels, 2H encoder width, d label dim, d_a tanh bottleneck,
    k bilinear projection):
      w1, w2: (d_a, 2H)    w1p, w2p: (M, d_a)    w1pp, w2pp: (2H, 1)
      w3, w4: (d, k)       w3p, w4p: (2H, k)     w5: (2H, 1)
    """

    def __init__(self, n_labels: int, enc_width: int, label_dim: int,
                 bottleneck: int = 300, bilinear: int = 300,
                 beta_doc: float = 0.5, beta_know: float = 0.5,
                 with_knowledge: bool = True):
        super().__init__()
        check_betas(beta_doc, beta_know)
        self.beta_doc = beta_doc
        self.beta_know = beta_know
        self.with_knowledge = with_knowledge
        self.w1 = nn.Parameter(torch.empty(bottleneck, enc_width))
        self.w1p = nn.Parameter(torch.empty(n_labels, bottleneck))
        self.w1pp = nn.Parameter(torch.empty(enc_width, 1))
        self.w3 = nn.Parameter(torch.empty(label_dim, bilinear))
        self.w3p = nn.Parameter(torch.empty(enc_width, bilinear))
        self.w5 = nn.Parameter(torch.empty(enc_width, 1))
        if with_knowledge:
            self.w2 = nn.Parameter(torch.empty(bottleneck, enc_width))
            self.w2p = nn.Parameter(torch.empty(n_labels, bottleneck))
            self.w2pp = nn.Parameter(torch.empty(enc_width, 1))
            self.w4 = nn.Parameter(torch.empty(label_dim, bilinear))
            self.w4p = nn.Parameter(torch.empty(enc_width, bilinear))


def check_betas(beta_doc: float, beta_know: float) -> None:
    if not (0.0 <= beta_doc <= 1.0) or abs(beta_doc + beta_know - 1.0) > 1e-9:
        raise ValueError(f"betas must satisfy b1 in [0,1], b1+b2=1; got {beta_doc}, {beta_know}")


def _batched(*tensors):
    """Promote 2-D/1-D single instances to batch form; report if promoted."""
    squeezed = tensors[0].dim() == 2
    out = [t.unsqueeze(0) if squeezed else t for t in tensors]
    return squeezed, out


def self_attention(en: torch.Tensor, w: torch.Tensor, wp: torch.Tensor, mask: torch.Tensor):
    """Per-label softmax attention over sequence positions.

    en (B, l, 2H), mask (B, l) -> attention (B, M, l), pooled (B, M, 2H).
    """
    squeezed, (en, mask) = _batched(en, mask.unsqueeze(-1))
    mask = mask.squeeze(-1)
    if (mask.sum(dim=1) == 0).any():
        raise DegenerateInputError("all positions masked")
    z = torch.tanh(torch.einsum("ah,blh->bal", w, en))
    logits = torch.einsum("ma,bal->bml", wp, z)
    logits = logits.masked_fill(mask.unsqueeze(1) == 0, float("-inf"))
    attn = torch.softmax(logits, dim=-1)
    pooled = torch.einsum("bml,blh->bmh", attn, en)
    if squeezed:
        return attn.squeeze(0), pooled.squeeze(0)
    return attn, pooled


def independent_weight(pooled: torch.Tensor, wpp: torch.Tensor) -> torch.Tensor:
    """Sigmoid branch gate: (.., M, 2H) @ (2H, 1) -> (.., M) in (0, 1)."""
    return torch.sigmoid(pooled @ wpp).squeeze(-1)


def label_attention(label_emb: torch.Tensor, en: torch.Tensor, w: torch.Tensor,
                    wp: torch.Tensor, mask: torch.Tensor, row_softmax: bool = False):
    """Bilinear label-to-position scores and the attended pooling.

    label_emb (M, d), en (B, l, 2H), mask (B, l) -> scores (B, M, l),
    pooled (B, M, 2H). Scores carry no softmax by default; masked
    positions' scores are zeroed before pooling. row_softmax switches to a
    masked row softmax instead.
    """
    squeezed, (en, mask) = _batched(en, mask.unsqueeze(-1))
    mask = mask.squeeze(-1)
    proj_labels = label_emb @ w  # (M, k)
    proj_states = torch.einsum("blh,hk->blk", en, wp)
    scores = torch.einsum("mk,blk->bml", proj_labels, proj_states)
    if row_softmax:
        scores = scores.masked_fill(mask.unsqueeze(1) == 0, float("-inf"))
        scores = torch.softmax(scores, dim=-1)
    else:
        scores = scores * mask.unsqueeze(1).to(scores.dtype)
    pooled = torch.einsum("bml,blh->bmh", scores, en)
    if squeezed:
        return scores.squeeze(0), pooled.squeeze(0)
    return scores, pooled


def fuse(pooled_doc: torch.Tensor, pooled_know: torch.Tensor,
         beta_doc: float, beta_know: float, w5: torch.Tensor):
    """Convex combination of the two label-attended poolings plus its gate."""
    check_betas(beta_doc, beta_know)
    fused = beta_doc * pooled_doc + beta_know * pooled_know
    label_gate = torch.sigmoid(fused @ w5).squeeze(-1)
    return fused, label_gate


def dependent_weight(label_gate: torch.Tensor, doc_gate: torch.Tensor,
                     know_gate: torch.Tensor | None) -> torch.Tensor:
    """Ratio-sum gate; (0, 2) with both branches, (0, 1) without knowledge."""
    lam = label_gate / (label_gate + doc_gate)
    if know_gate is not None:
        lam = lam + label_gate / (label_gate + know_gate)
    return lam


def final_representation(lam: torch.Tensor, fused: torch.Tensor) -> torch.Tensor:
    """Row-wise scaling: row i of the output is lam[i] * row i of fused."""
    return lam.unsqueeze(-1) * fused


def fusion_forward(params: FusionParameters, label_emb: torch.Tensor,
                   en_doc: torch.Tensor, doc_mask: torch.Tensor,
                   en_know: torch.Tensor | None = None,
                   know_mask: torch.Tensor | None = None,
                   row_softmax: bool = False):
    """Run the full fusion chain; returns (final, intermediates dict).

    With the knowledge branch disabled, the fused representation is the
    document pooling alone and the dependent weight drops the knowledge
    ratio term.
    """
    a_d, pooled_d = self_attention(en_doc, params.w1, params.w1p, doc_mask)
    lam_d = independent_weight(pooled_d, params.w1pp)
    al_d, lpooled_d = label_attention(label_emb, en_doc, params.w3, params.w3p,
                                      doc_mask, row_softmax)
    if params.with_knowledge:
        if en_know is None or know_mask is None:
            raise ValueError("knowledge branch enabled but no knowledge inputs given")
        a_k, pooled_k = self_attention(en_know, params.w2, params.w2p, know_mask)
        lam_k = independent_weight(pooled_k, params.w2pp)
        al_k, lpooled_k = label_attention(label_emb, en_know, params.w4, params.w4p,
                                          know_mask, row_softmax)
        fused, lam_l = fuse(lpooled_d, lpooled_k, params.beta_doc, params.beta_know, params.w5)
    else:
        a_k = lam_k = al_k = None
        fused = lpooled_d
        lam_l = torch.sigmoid(fused @ params.w5).squeeze(-1)
    lam = dependent_weight(lam_l, lam_d, lam_k)
    final = final_representation(lam, fused)
    intermediates = {
        "doc_attention": a_d, "know_attention": a_k,
        "doc_gate": lam_d, "know_gate": lam_k,
        "label_doc_attention": al_d, "label_know_attention": al_k,
        "fused": fused, "label_gate": lam_l,
        "dependent_weight": lam, "final": final,
    }
    return final, intermediates


def trace_from_intermediates(inter: dict, index: int = 0,
                             doc_len: int | None = None,
                             know_len: int | None = None) -> AttentionTrace:
    """Extract one example's AttentionTrace from a batched fusion run."""

    def grab(key, length=None):
        t = inter[key]
        if t is None:
            return np.zeros(0)
        arr = t[index].detach().cpu().numpy()
        if length is not None and arr.ndim == 2:
            arr = arr[:, :length]
        return arr

    return AttentionTrace(
        doc_attention=grab("doc_attention", doc_len),
        know_attention=grab("know_attention", know_len),
        doc_gate=grab("doc_gate"),
        know_gate=grab("know_gate"),
        label_doc_attention=grab("label_doc_attention", doc_len),
        label_know_attention=grab("label_know_attention", know_len),
        fused=grab("fused"),
        label_gate=grab("label_gate"),
        dependent_weight=grab("dependent_weight"),
        final=grab("final"),
    )
