"""Deterministic seeding helpers.

One master seed fans out to named sub-seeds (data split, parameter init,
shuffle) so that changing one consumer never shifts another's stream.
Parameter tensors are seeded per name, which keeps ablation variants'
shared parameters bit-identical to the full model's.
"""

from __future__ import annotations

import hashlib
import math

import torch


def derive_seed(master: int, purpose: str) -> int:
    digest = hashlib.sha256(f"{master}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def glorot_uniform_(tensor: torch.Tensor, seed: int) -> torch.Tensor:
    """Fan-based uniform init from a dedicated generator."""
    gen = torch.Generator().manual_seed(seed)
    if tensor.dim() >= 2:
        fan_in, fan_out = tensor.shape[-1], tensor.shape[-2]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
    else:
        bound = 1.0 / math.sqrt(max(1, tensor.numel()))
    with torch.no_grad():
        tensor.uniform_(-bound, bound, generator=gen)
    return tensor


def init_module_parameters(module: torch.nn.Module, master_seed: int, prefix: str = "",
                           exclude: tuple[str, ...] = ()) -> None:
    """Re-initialize every parameter with a per-name seed."""
    for name, param in module.named_parameters():
        full = f"{prefix}{name}"
        if full in exclude:
            continue
        if "bias" in name:
            with torch.no_grad():
                param.zero_()
        else:
            glorot_uniform_(param, derive_seed(master_seed, f"param:{full}"))
