"""
Generation by Euler–Maruyama integration of the guided flow SDE/ODE.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol

import numpy as np
import torch

from apps.flow.errors import NonFiniteError
from apps.flow.models.denoiser import Denoiser
from apps.flow.schemas.sampling import StochasticitySchedule
from libs.structures.backbone import Backbone, FoldLabel

from .objective import clean_prediction

logger = logging.getLogger(__name__)


@dataclass
class StepSchedule:
    """Discretisation t_0 = 0 < t_1 < ... < t_N = 1."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 3:
            raise ValueError("A step schedule needs at least two steps")
        if grid[0] != 0.0 or grid[-1] != 1.0:
            raise ValueError(f"Time grid must run from 0 to 1, got [{grid[0]}, {grid[-1]}]")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("Time grid must be strictly increasing")
        self.grid = grid

    @property
    def n_steps(self) -> int:
        return self.grid.size - 1


def build_time_grid(n_steps: int) -> StepSchedule:
    """Log-spaced grid: coarse near t = 0, fine near t = 1."""
    if n_steps < 2:
        raise ValueError(f"n_steps must be >= 2, got {n_steps}")
    t = 1.0 - np.flip(np.logspace(-2, 0, n_steps + 1))
    t = t - t.min()
    t = t / t.max()
    return StepSchedule(t)


def score_from_velocity(v: np.ndarray, x_t: np.ndarray, t: float) -> np.ndarray:
    """Score of the Gaussian-path marginal, s = (t·v − x_t) / (1 − t)."""
    if t >= 1.0:
        raise ValueError(f"Score is undefined at t={t}; use g(t) = 0 near t = 1")
    return (t * v - x_t) / (1.0 - t)


def guided_velocity(
    v_cond: np.ndarray,
    v_uncond: Optional[np.ndarray],
    v_bad: Optional[np.ndarray],
    omega: float,
    alpha: float,
) -> np.ndarray:
    """ω·v_cond + (1 − ω)·[(1 − α)·v_uncond + α·v_bad]; also valid for scores."""
    if alpha > 0 and v_bad is None:
        raise ValueError("alpha > 0 requires the bad model's prediction")
    if omega == 1.0:
        return v_cond
    if alpha < 1 and v_uncond is None:
        raise ValueError("alpha < 1 requires the unconditional prediction")
    if alpha == 0:
        guide = v_uncond
    elif alpha == 1:
        guide = v_bad
    else:
        guide = (1.0 - alpha) * v_uncond + alpha * v_bad
    return omega * v_cond + (1.0 - omega) * guide


def em_step(
    x: np.ndarray,
    t_prev: float,
    t_next: float,
    v: np.ndarray,
    s: Optional[np.ndarray],
    g_value: float,
    gamma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """x + (v + g·s)·δ + sqrt(2·δ·g·γ)·ε; no draw is made when g·γ = 0."""
    delta = t_next - t_prev
    if delta <= 0:
        raise ValueError(f"t_next must exceed t_prev ({t_prev} -> {t_next})")
    if g_value < 0 or gamma < 0:
        raise ValueError("g and gamma must be non-negative")
    drift = v if g_value == 0 else v + g_value * s
    x_next = x + drift * delta
    if g_value * gamma > 0:
        x_next = x_next + np.sqrt(2.0 * delta * g_value * gamma) * rng.standard_normal(x.shape)
    return x_next


class VelocityField(Protocol):
    def __call__(
        self, x: np.ndarray, t: float, x_hat: Optional[np.ndarray], label: Optional[FoldLabel]
    ) -> np.ndarray: ...


class DenoiserField:
    """Numpy float64 adapter around a Denoiser for batched (B, L, 3) states."""

    def __init__(self, model: Denoiser):
        self.model = model.eval()
        param = next(model.parameters())
        self.dtype, self.device = param.dtype, param.device

    @torch.no_grad()
    def __call__(
        self, x: np.ndarray, t: float, x_hat: Optional[np.ndarray], label: Optional[FoldLabel]
    ) -> np.ndarray:
        b = x.shape[0]
        xt = torch.as_tensor(x, dtype=self.dtype, device=self.device)
        hat = None if x_hat is None else torch.as_tensor(x_hat, dtype=self.dtype, device=self.device)
        tt = torch.full((b,), float(t), dtype=self.dtype, device=self.device)
        out = self.model(xt, tt, hat, self.model.label_tensor([label] * b))
        return out.velocity.to(torch.float64).cpu().numpy()


@dataclass
class GuidanceSpec:
    omega: float = 1.0
    alpha: float = 0.0
    label: Optional[FoldLabel] = None
    bad_field: Optional[VelocityField] = None

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.alpha > 0 and self.bad_field is None:
            raise ValueError("alpha > 0 requires a bad model")


def integrate(
    field: VelocityField,
    x0: np.ndarray,
    schedule: StepSchedule,
    g_schedule: StochasticitySchedule,
    gamma: float,
    guidance: GuidanceSpec,
    rng: np.random.Generator,
    self_conditioning: bool = False,
    trajectory: Optional[List[np.ndarray]] = None,
) -> np.ndarray:
    """Run every step of ``schedule`` from ``x0``; the guided score comes from the guided velocity."""
    x = np.array(x0, dtype=np.float64)
    x_hat: Optional[np.ndarray] = None
    if trajectory is not None:
        trajectory.append(x.copy())
    grid = schedule.grid
    for n in range(1, grid.size):
        t_prev, t_next = float(grid[n - 1]), float(grid[n])
        v_cond = field(x, t_prev, x_hat, guidance.label)
        v = v_cond
        if guidance.omega != 1.0:
            v_uncond = field(x, t_prev, x_hat, None) if guidance.alpha < 1 else None
            v_bad = guidance.bad_field(x, t_prev, x_hat, guidance.label) if guidance.alpha > 0 else None
            v = guided_velocity(v_cond, v_uncond, v_bad, guidance.omega, guidance.alpha)
        g = g_schedule.g(t_prev)
        s = score_from_velocity(v, x, t_prev) if g > 0 else None
        next_hat = clean_prediction(x, t_prev, v_cond) if self_conditioning else None
        x = em_step(x, t_prev, t_next, v, s, g, gamma, rng)
        if not np.isfinite(x).all():
            norm = float(np.linalg.norm(np.nan_to_num(x, nan=0.0, posinf=0.0, neginf=0.0)))
            raise NonFiniteError("Sampler state became non-finite", step=n, norm=norm)
        x_hat = next_hat
        if trajectory is not None:
            trajectory.append(x.copy())
    return x


def sample(
    model: Denoiser,
    length: int,
    n_samples: int,
    guidance: GuidanceSpec,
    gamma: float,
    schedule: StepSchedule,
    g_schedule: StochasticitySchedule,
    rng: np.random.Generator,
    self_conditioning: bool = True,
    batch_size: int = 16,
    trajectory: Optional[List[np.ndarray]] = None,
) -> List[Backbone]:
    """Draw ``n_samples`` backbones from the N(0, I) prior over 3L coordinates."""
    field = DenoiserField(model)
    x0 = rng.standard_normal((n_samples, length, 3))
    results: List[Backbone] = []
    per_batch: List[List[np.ndarray]] = []
    for start in range(0, n_samples, batch_size):
        steps: Optional[List[np.ndarray]] = [] if trajectory is not None else None
        final = integrate(
            field, x0[start : start + batch_size], schedule, g_schedule, gamma,
            guidance, rng, self_conditioning, steps,
        )
        results.extend(Backbone(coords) for coords in final)
        if steps is not None:
            per_batch.append(steps)
        logger.debug("Sampled %s/%s backbones", len(results), n_samples)
    if trajectory is not None:
        trajectory.extend(np.concatenate(frames, axis=0) for frames in zip(*per_batch))
    return results
