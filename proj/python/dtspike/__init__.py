"""Spiking vision transformers with trainable per-layer time-step masks."""

from _dtspike import (  # noqa: F401
    Model,
    active_steps,
    cosine_similarity,
    evaluate,
    lif_forward,
    lif_surrogate,
    make_synthetic,
    mask_window,
    profile,
    project_nonneg,
    step_mask,
    step_scores,
    train,
)

__all__ = [
    "Model",
    "active_steps",
    "cosine_similarity",
    "evaluate",
    "lif_forward",
    "lif_surrogate",
    "make_synthetic",
    "mask_window",
    "profile",
    "project_nonneg",
    "step_mask",
    "step_scores",
    "train",
]
