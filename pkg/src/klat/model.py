"""Full classification model and its five ablation variants."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .attention import FusionParameters, fusion_forward
from .classifier import ClassifierHead
from .representation import ProjectionEncoder, SequenceEncoder, TextEmbedder
from .seeding import derive_seed, init_module_parameters

VARIANTS = ("full", "no_KR", "no_DEm", "no_DEn", "no_LEm", "no_DA")

# Which parameter-name prefixes an ablation variant is allowed to touch,
# relative to the full model's inventory. no_DA also resizes the classifier
# input (2H -> 4H concat), so its head weight legitimately changes.
VARIANT_TOUCHED_PREFIXES = {
    "no_KR": ("know_encoder.", "attention.w2", "attention.w4"),
    "no_DEm": ("embedder.",),
    "no_DEn": ("doc_encoder.", "know_encoder."),
    "no_LEm": ("label_embedding",),
    "no_DA": ("attention.", "classifier.w_in"),
}


class KnowledgeLabelModel(nn.Module):
    """Doc + knowledge encoders, label-attention fusion, sigmoid head.

    Variants:
      full    the whole pipeline
      no_KR   knowledge branch removed (document-only fusion)
      no_DEm  frozen embedding table swapped for a trainable one
      no_DEn  recurrent encoders replaced by a linear projection to 2H
      no_LEm  label matrix randomly initialized instead of pretrained
      no_DA   fusion replaced by masked mean pooling tiled across labels
    """

    def __init__(
        self,
        vocab_size: int,
        label_matrix: np.ndarray,
        variant: str = "full",
        plm_dim: int = 300,
        proj_dim: int = 300,
        hidden: int = 300,
        bottleneck: int = 300,
        bilinear: int = 300,
        head_dim: int = 300,
        beta_doc: float = 0.5,
        beta_know: float = 0.5,
        label_attention_softmax: bool = False,
        shared_encoder: bool = False,
        seed: int = 13,
    ):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.variant = variant
        self.hidden = hidden
        self.row_softmax = label_attention_softmax
        n_labels, label_dim = label_matrix.shape

        backend = "trainable_lookup" if variant == "no_DEm" else "frozen_lookup"
        self.embedder = TextEmbedder(backend=backend, vocab_size=vocab_size,
                                     dim=plm_dim, seed=seed)

        if variant == "no_DEn":
            self.doc_encoder = ProjectionEncoder(plm_dim, hidden)
            self.know_encoder = ProjectionEncoder(plm_dim, hidden)
        else:
            self.doc_encoder = SequenceEncoder(plm_dim, hidden, proj_dim)
            if variant == "no_KR":
                self.know_encoder = None
            elif shared_encoder:
                self.know_encoder = self.doc_encoder
            else:
                self.know_encoder = SequenceEncoder(plm_dim, hidden, proj_dim)

        self.register_buffer("label_embedding",
                             torch.as_tensor(label_matrix, dtype=torch.float32))

        enc_width = 2 * hidden
        if variant == "no_DA":
            self.attention = None
            head_width = 2 * enc_width  # doc + knowledge mean pools, concatenated
        else:
            self.attention = FusionParameters(
                n_labels, enc_width, label_dim, bottleneck, bilinear,
                beta_doc, beta_know, with_knowledge=(variant != "no_KR"),
            )
            head_width = enc_width
        self.classifier = ClassifierHead(head_width, head_dim)

        init_module_parameters(self, seed, exclude=("embedder.table",))

    @property
    def uses_knowledge(self) -> bool:
        return self.variant != "no_KR"

    def forward(self, doc_ids, doc_mask, know_ids=None, know_mask=None,
                return_intermediates: bool = False):
        en_doc = self.doc_encoder(self.embedder(doc_ids, doc_mask), doc_mask)
        en_know = None
        if self.uses_knowledge:
            if know_ids is None or know_mask is None:
                raise ValueError("model expects knowledge inputs")
            en_know = self.know_encoder(self.embedder(know_ids, know_mask), know_mask)

        if self.variant == "no_DA":
            final = self._mean_pool_tiled(en_doc, doc_mask, en_know, know_mask)
            inter = {"final": final}
        else:
            final, inter = fusion_forward(
                self.attention, self.label_embedding, en_doc, doc_mask,
                en_know, know_mask, row_softmax=self.row_softmax,
            )
        probs = self.classifier(final)
        if return_intermediates:
            return probs, inter
        return probs

    def _mean_pool_tiled(self, en_doc, doc_mask, en_know, know_mask):
        n_labels = self.label_embedding.shape[0]

        def mean_pool(en, mask):
            m = mask.unsqueeze(-1).to(en.dtype)
            return (en * m).sum(dim=1) / m.sum(dim=1).clamp_min(1.0)

        pooled = mean_pool(en_doc, doc_mask)
        pooled_k = mean_pool(en_know, know_mask)
        both = torch.cat([pooled, pooled_k], dim=-1)  # (B, 4H)
        return both.unsqueeze(1).expand(-1, n_labels, -1)
