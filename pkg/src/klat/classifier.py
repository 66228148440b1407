"""Prediction head: per-label probabilities, loss, and the decision rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

LOG_EPS = 1e-7


@dataclass
class PredictionResult:
    doc_id: str
    probs: np.ndarray  # (M,) in (0,1)
    decided: np.ndarray  # (M,) in {0,1}
    threshold: float


class ClassifierHead(nn.Module):
    """y_hat[i] = sigmoid(tanh(row_i @ w_in) @ w_out), shared across labels."""

    def __init__(self, in_width: int, head_dim: int = 300):
        super().__init__()
        self.w_in = nn.Parameter(torch.empty(in_width, head_dim))
        self.w_out = nn.Parameter(torch.empty(head_dim, 1))

    def forward(self, final_repr: torch.Tensor) -> torch.Tensor:
        return predict(final_repr, self.w_in, self.w_out)


def predict(final_repr: torch.Tensor, w_in: torch.Tensor, w_out: torch.Tensor) -> torch.Tensor:
    """(.., M, 2H) -> (.., M) probabilities, strictly in (0, 1)."""
    return torch.sigmoid(torch.tanh(final_repr @ w_in) @ w_out).squeeze(-1)


def loss(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Per-label binary cross-entropy, averaged over every label slot."""
    p = probs.clamp(LOG_EPS, 1.0 - LOG_EPS)
    t = targets.to(p.dtype)
    return -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).mean()


def decide(probs: np.ndarray, threshold: float = 0.5, nonempty_guard: bool = True) -> np.ndarray:
    """Threshold probabilities into a label set.

    With the guard on, a row where nothing clears the threshold emits its
    argmax label instead of coming back empty.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    probs = np.asarray(probs)
    decided = (probs >= threshold).astype(np.int64)
    if nonempty_guard:
        if probs.ndim == 1:
            if decided.sum() == 0:
                decided[int(np.argmax(probs))] = 1
        else:
            empty = decided.sum(axis=-1) == 0
            for i in np.flatnonzero(empty):
                decided[i, int(np.argmax(probs[i]))] = 1
    return decided
