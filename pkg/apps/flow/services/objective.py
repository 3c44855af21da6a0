"""
Flow-matching training objective
Rectified-flow regression onto x1 − ε, auxiliary distogram loss, self-conditioning
and hierarchical label dropout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from scipy import stats

from apps.flow.errors import NonFiniteError
from apps.flow.models.denoiser import Denoiser
from apps.flow.models.features import distance_bins
from apps.flow.schemas.training import DropoutSchedule, ObjectiveConfig, TimeSampler
from libs.structures.backbone import Backbone, FoldLabel, StructureRecord
from libs.structures.geometry import center_backbone, random_rotation

logger = logging.getLogger(__name__)

T_CLAMP = 1.0 - 1e-6


# ============================================================================
# Time sampling
# ============================================================================

def sample_time(n: int, sampler: TimeSampler, rng: np.random.Generator) -> np.ndarray:
    """``n`` interpolation times in [0, 1); draws equal to 1 are clamped to 1 − 1e-6."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if sampler.kind == "uniform":
        t = rng.random(n)
    elif sampler.kind == "beta":
        t = rng.beta(sampler.beta_a, sampler.beta_b, n)
    elif sampler.kind == "logit_normal":
        t = 1.0 / (1.0 + np.exp(-rng.normal(sampler.logit_mean, sampler.logit_std, n)))
    else:
        use_uniform = rng.random(n) < sampler.uniform_weight
        t = np.where(use_uniform, rng.random(n), rng.beta(sampler.beta_a, sampler.beta_b, n))
    return np.minimum(t, T_CLAMP)


def time_density(t: np.ndarray, sampler: TimeSampler) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    uniform = stats.uniform.pdf(t)
    beta = stats.beta.pdf(t, sampler.beta_a, sampler.beta_b)
    if sampler.kind == "uniform":
        return uniform
    if sampler.kind == "beta":
        return beta
    if sampler.kind == "logit_normal":
        inside = (t > 0) & (t < 1)
        safe = np.clip(t, 1e-300, 1 - 1e-16)
        logit = np.log(safe) - np.log1p(-safe)
        pdf = stats.norm.pdf(logit, sampler.logit_mean, sampler.logit_std) / (safe * (1 - safe))
        return np.where(inside, pdf, 0.0)
    return sampler.uniform_weight * uniform + sampler.beta_weight * beta


def time_cdf(t: np.ndarray, sampler: TimeSampler) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    uniform = stats.uniform.cdf(t)
    beta = stats.beta.cdf(t, sampler.beta_a, sampler.beta_b)
    if sampler.kind == "uniform":
        return uniform
    if sampler.kind == "beta":
        return beta
    if sampler.kind == "logit_normal":
        safe = np.clip(t, 1e-300, 1 - 1e-16)
        cdf = stats.norm.cdf(np.log(safe) - np.log1p(-safe), sampler.logit_mean, sampler.logit_std)
        return np.where(t <= 0, 0.0, np.where(t >= 1, 1.0, cdf))
    return sampler.uniform_weight * uniform + sampler.beta_weight * beta


# ============================================================================
# Interpolant and losses
# ============================================================================

def _broadcast_time(t, like):
    if isinstance(t, torch.Tensor) and t.ndim == 1 and like.ndim == 3:
        return t.to(like.dtype)[:, None, None]
    if isinstance(t, np.ndarray) and t.ndim == 1 and like.ndim == 3:
        return t[:, None, None]
    return t


def interpolate(x1, eps, t):
    """t·x1 + (1 − t)·ε; works on arrays, tensors and Backbones."""
    if isinstance(x1, Backbone):
        x1 = x1.coords
    if x1.shape != eps.shape:
        raise ValueError(f"Shape mismatch: x1 {tuple(x1.shape)} vs eps {tuple(eps.shape)}")
    t = _broadcast_time(t, x1)
    return t * x1 + (1.0 - t) * eps


def clean_prediction(x_t, t, v):
    """x̂ = x_t + (1 − t)·v."""
    return x_t + (1.0 - _broadcast_time(t, x_t)) * v


def cfm_loss(v_pred: torch.Tensor, x1: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """Squared error summed over the 3L entries, divided by L, averaged over the batch."""
    if v_pred.shape != x1.shape or x1.shape != eps.shape:
        raise ValueError("v_pred, x1 and eps must share one shape")
    if v_pred.ndim == 2:
        v_pred, x1, eps = v_pred[None], x1[None], eps[None]
    length = v_pred.shape[-2]
    per_sample = ((v_pred - (x1 - eps)) ** 2).sum(dim=(-1, -2)) / length
    return per_sample.mean()


def distogram_loss(
    logits: torch.Tensor,
    x1: torch.Tensor,
    t: torch.Tensor,
    min_t: float = 0.3,
    d_min: float = 1.0,
    d_max: float = 30.0,
) -> torch.Tensor:
    """Cross-entropy against the binned distances of x1, zero for samples with t < min_t."""
    if logits.ndim == 3:
        logits, x1, t = logits[None], x1[None], torch.as_tensor(t).reshape(1)
    n_bins = logits.shape[-1]
    target = distance_bins(x1, n_bins, d_min, d_max)
    ce = F.cross_entropy(logits.permute(0, 3, 1, 2), target, reduction="none")
    per_sample = ce.mean(dim=(-1, -2))
    gate = (t.to(per_sample.device) >= min_t).to(per_sample.dtype)
    return (gate * per_sample).mean()


# ============================================================================
# Labels
# ============================================================================

def dropout_labels(label: FoldLabel, schedule: DropoutSchedule, rng: np.random.Generator) -> FoldLabel:
    """Keep 0..3 levels with the schedule's probabilities; missing levels fall through to the label's depth."""
    depth = int(rng.choice(4, p=schedule.probabilities))
    return label.truncate(depth)


def pick_label(record: StructureRecord, rng: np.random.Generator) -> FoldLabel:
    if not record.labels:
        return FoldLabel.null()
    return record.labels[int(rng.integers(len(record.labels)))]


# ============================================================================
# Training step
# ============================================================================

@dataclass
class NoisyBatch:
    x1: torch.Tensor  # (B, L, 3) centred, rotated
    eps: torch.Tensor
    t: torch.Tensor  # (B,)
    x_t: torch.Tensor
    labels: List[FoldLabel]

    @property
    def target_v(self) -> torch.Tensor:
        return self.x1 - self.eps


@dataclass
class LossTerms:
    total: torch.Tensor
    cfm: torch.Tensor
    distogram: torch.Tensor


@dataclass
class StepResult:
    loss: float
    cfm: float
    distogram: float
    self_conditioned: bool
    mean_t: float


def prepare_batch(
    batch: Sequence[StructureRecord],
    config: ObjectiveConfig,
    rng: np.random.Generator,
    dtype: torch.dtype = torch.float32,
    device: torch.device | str = "cpu",
) -> NoisyBatch:
    if not batch:
        raise ValueError("Training batch is empty")
    lengths = {record.length for record in batch}
    if len(lengths) != 1:
        raise ValueError(f"Training batches must hold equal-length chains, got lengths {sorted(lengths)}")

    x1s, epss, ts, labels = [], [], [], []
    for record, stream in zip(batch, rng.spawn(len(batch))):
        coords = center_backbone(record.backbone).coords
        x1s.append(random_rotation(stream).apply(coords))
        labels.append(dropout_labels(pick_label(record, stream), config.label_dropout, stream))
        ts.append(sample_time(1, config.time_sampler, stream)[0])
        epss.append(stream.standard_normal(coords.shape))

    x1 = torch.as_tensor(np.stack(x1s), dtype=dtype, device=device)
    eps = torch.as_tensor(np.stack(epss), dtype=dtype, device=device)
    t = torch.as_tensor(np.array(ts), dtype=dtype, device=device)
    return NoisyBatch(x1=x1, eps=eps, t=t, x_t=interpolate(x1, eps, t), labels=labels)


def compute_loss(
    model: Denoiser,
    noisy: NoisyBatch,
    config: ObjectiveConfig,
    x_hat: Optional[torch.Tensor] = None,
) -> LossTerms:
    label_ids = model.label_tensor(noisy.labels)
    out = model(noisy.x_t, noisy.t, x_hat, label_ids)
    cfm = cfm_loss(out.velocity, noisy.x1, noisy.eps)
    if out.distogram_logits is None:
        disto = torch.zeros((), dtype=cfm.dtype, device=cfm.device)
    else:
        mc = model.config
        disto = distogram_loss(
            out.distogram_logits, noisy.x1, noisy.t, config.distogram_min_t, mc.pair_d_min, mc.pair_d_max
        )
    return LossTerms(total=cfm + config.distogram_weight * disto, cfm=cfm, distogram=disto)


def self_condition(model: Denoiser, noisy: NoisyBatch) -> torch.Tensor:
    """x̂ from a no-gradient pass without self-conditioning."""
    with torch.no_grad():
        v = model(noisy.x_t, noisy.t, None, model.label_tensor(noisy.labels)).velocity
    return clean_prediction(noisy.x_t, noisy.t, v).detach()


def training_step(
    model: Denoiser,
    optimizer: torch.optim.Optimizer,
    batch: Sequence[StructureRecord],
    config: ObjectiveConfig,
    rng: np.random.Generator,
    step: int = 0,
) -> StepResult:
    param = next(model.parameters())
    noisy = prepare_batch(batch, config, rng, dtype=param.dtype, device=param.device)
    use_self_cond = bool(rng.random() < config.self_conditioning_prob)
    x_hat = self_condition(model, noisy) if use_self_cond else None

    model.train()
    optimizer.zero_grad(set_to_none=True)
    terms = compute_loss(model, noisy, config, x_hat)
    if not torch.isfinite(terms.total):
        raise NonFiniteError("Non-finite training loss, step skipped", step=step, norm=float(terms.total))
    terms.total.backward()
    optimizer.step()
    return StepResult(
        loss=float(terms.total.detach()),
        cfm=float(terms.cfm.detach()),
        distogram=float(terms.distogram.detach()),
        self_conditioned=use_self_cond,
        mean_t=float(noisy.t.mean()),
    )


def make_optimizer(params, learning_rate: float) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=learning_rate, betas=(0.9, 0.999))
