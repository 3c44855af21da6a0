"""Failure types shared by the model, sampler and CLI."""

from __future__ import annotations

from typing import Optional


class NonFiniteError(RuntimeError):
    """A loss, activation or sampler state left the finite range."""

    def __init__(self, message: str, step: Optional[int] = None, norm: Optional[float] = None):
        detail = message
        if step is not None:
            detail += f" (step={step}"
            detail += f", norm={norm:.4g})" if norm is not None else ")"
        super().__init__(detail)
        self.step = step
        self.norm = norm


class LoraError(RuntimeError):
    """Adapters attached twice, or merged when none are attached."""


class CheckpointError(RuntimeError):
    """Checkpoint directory missing, incomplete or inconsistent."""


class UsageError(ValueError):
    """Command inputs that disagree with each other (e.g. one scRMSD per sample)."""
