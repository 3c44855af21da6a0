"""Unit tests for the guided Euler–Maruyama sampler."""

from typing import List

import numpy as np
import pytest
from scipy import special, stats

from apps.flow.errors import NonFiniteError
from apps.flow.schemas.sampling import StochasticitySchedule
from apps.flow.services.objective import clean_prediction
from apps.flow.services.sampler import (
    GuidanceSpec,
    build_time_grid,
    em_step,
    guided_velocity,
    integrate,
    sample,
    score_from_velocity,
)
from libs.structures.backbone import FoldLabel

MEANS = np.array([-2.0, 2.0])
STDS = np.array([0.5, 0.5])
WEIGHTS = np.array([0.3, 0.7])


def mixture_velocity(x: np.ndarray, t: float, x_hat=None, label=None) -> np.ndarray:
    """Exact marginal velocity of the path from N(0, 1) to a 1-D Gaussian mixture."""
    xs = x[..., None]
    var = t**2 * STDS**2 + (1.0 - t) ** 2
    log_w = np.log(WEIGHTS) + stats.norm.logpdf(xs, t * MEANS, np.sqrt(var))
    posterior = special.softmax(log_w, axis=-1)
    per_mode = MEANS + (t * STDS**2 - (1.0 - t)) * (xs - t * MEANS) / var
    return (posterior * per_mode).sum(axis=-1)


def mixture_draws(n: int, rng: np.random.Generator) -> np.ndarray:
    mode = rng.choice(2, size=n, p=WEIGHTS)
    return rng.normal(MEANS[mode], STDS[mode])


def gaussian_velocity(x: np.ndarray, t: float) -> np.ndarray:
    return x * (2.0 * t - 1.0) / (t**2 + (1.0 - t) ** 2)


class RecordingField:
    def __init__(self, scale: float = -0.5):
        self.scale = scale
        self.calls: List[tuple] = []

    def __call__(self, x, t, x_hat, label) -> np.ndarray:
        self.calls.append((t, None if x_hat is None else x_hat.copy(), label))
        return self.scale * x + (0.0 if label is None else 1.0)


ODE = StochasticitySchedule(kind="zero")


@pytest.mark.parametrize("n_steps", [2, 10, 400])
def test_time_grid_matches_closed_form(n_steps: int) -> None:
    n = np.arange(n_steps + 1)
    expected = (1.0 - 10.0 ** (2.0 * (n_steps - n) / n_steps - 2.0)) / 0.99
    grid = build_time_grid(n_steps).grid
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert np.allclose(grid, expected, atol=1e-12)
    assert np.all(np.diff(np.diff(grid)) < 0)


def test_time_grid_needs_two_steps() -> None:
    with pytest.raises(ValueError, match="n_steps"):
        build_time_grid(1)


def test_score_from_velocity_gaussian_identity(rng: np.random.Generator) -> None:
    x = rng.normal(size=(50, 3))
    for t in (0.0, 0.2, 0.5, 0.9):
        expected = -x / (t**2 + (1.0 - t) ** 2)
        assert np.allclose(score_from_velocity(gaussian_velocity(x, t), x, t), expected)
    with pytest.raises(ValueError, match="undefined"):
        score_from_velocity(x, x, 1.0)


def test_guided_velocity_reductions(rng: np.random.Generator) -> None:
    cond, uncond, bad = (rng.normal(size=(4, 3)) for _ in range(3))
    assert guided_velocity(cond, None, None, 1.0, 0.0) is cond
    assert np.allclose(guided_velocity(cond, uncond, bad, 2.0, 0.0), 2.0 * cond - uncond)
    assert np.allclose(guided_velocity(cond, uncond, bad, 2.0, 1.0), 2.0 * cond - bad)
    assert np.allclose(guided_velocity(cond, uncond, None, 0.0, 0.0), uncond)
    mix = guided_velocity(cond, uncond, bad, 3.0, 0.25)
    assert np.allclose(mix, 3.0 * cond - 2.0 * (0.75 * uncond + 0.25 * bad))
    with pytest.raises(ValueError, match="bad model"):
        guided_velocity(cond, uncond, None, 2.0, 0.5)


def test_em_step_draws_noise_only_when_needed(rng: np.random.Generator) -> None:
    x = np.ones((3, 3))
    v = np.full((3, 3), 2.0)
    state = rng.bit_generator.state
    assert np.allclose(em_step(x, 0.2, 0.3, v, None, 0.0, 1.0, rng), x + 0.2)
    assert np.allclose(em_step(x, 0.2, 0.3, v, -x, 4.0, 0.0, rng), x + 0.1 * (v - 4.0 * x))
    assert rng.bit_generator.state == state
    em_step(x, 0.2, 0.3, v, -x, 4.0, 0.5, rng)
    assert rng.bit_generator.state != state
    with pytest.raises(ValueError, match="t_next"):
        em_step(x, 0.3, 0.3, v, None, 0.0, 0.0, rng)


def test_unit_guidance_queries_only_conditional_field(rng: np.random.Generator) -> None:
    field = RecordingField()
    label = FoldLabel(0)
    x0 = rng.normal(size=(2, 5, 3))
    guided = integrate(field, x0, build_time_grid(8), ODE, 0.0, GuidanceSpec(omega=1.0, label=label), rng)
    assert len(field.calls) == 8
    assert all(call[2] == label for call in field.calls)
    plain = integrate(RecordingField(), x0, build_time_grid(8), ODE, 0.0, GuidanceSpec(label=label), rng)
    assert np.array_equal(guided, plain)


def test_guidance_queries_unconditional_field(rng: np.random.Generator) -> None:
    field = RecordingField()
    integrate(field, rng.normal(size=(1, 4, 3)), build_time_grid(5), ODE, 0.0,
              GuidanceSpec(omega=2.0, label=FoldLabel(0)), rng)
    labels = [call[2] for call in field.calls]
    assert labels.count(None) == 5 and len(labels) == 10


def test_self_conditioning_uses_previous_conditional_velocity(rng: np.random.Generator) -> None:
    field = RecordingField()
    x0 = rng.normal(size=(1, 4, 3))
    grid = build_time_grid(4)
    integrate(field, x0, grid, ODE, 0.0, GuidanceSpec(), rng, self_conditioning=True)
    assert field.calls[0][1] is None
    expected = clean_prediction(x0, 0.0, -0.5 * x0)
    assert np.allclose(field.calls[1][1], expected)


@pytest.mark.slow
def test_ode_transports_prior_to_mixture() -> None:
    rng = np.random.default_rng(11)
    x0 = rng.standard_normal((40_000, 1, 1))
    final = integrate(mixture_velocity, x0, build_time_grid(1000), ODE, 0.0, GuidanceSpec(), rng)
    reference = mixture_draws(40_000, np.random.default_rng(12))
    assert stats.wasserstein_distance(final.ravel(), reference) < 0.05


@pytest.mark.slow
def test_unit_gamma_sde_matches_ode_marginal() -> None:
    x0 = np.random.default_rng(21).standard_normal((40_000, 1, 1))
    grid = build_time_grid(1000)
    ode = integrate(mixture_velocity, x0, grid, ODE, 0.0, GuidanceSpec(), np.random.default_rng(22))
    sde = integrate(
        mixture_velocity, x0, grid, StochasticitySchedule(kind="main"), 1.0, GuidanceSpec(),
        np.random.default_rng(23),
    )
    assert stats.ks_2samp(ode.ravel(), sde.ravel()).statistic < 0.02


def test_non_finite_state_raises(rng: np.random.Generator) -> None:
    def exploding(x, t, x_hat, label):
        return np.full_like(x, np.inf)

    with pytest.raises(NonFiniteError, match="step=1"):
        integrate(exploding, rng.normal(size=(1, 3, 3)), build_time_grid(4), ODE, 0.0, GuidanceSpec(), rng)


def test_guidance_spec_validation() -> None:
    with pytest.raises(ValueError, match="omega"):
        GuidanceSpec(omega=-1.0)
    with pytest.raises(ValueError, match="bad model"):
        GuidanceSpec(omega=2.0, alpha=0.5)


def test_sample_with_untrained_denoiser_returns_prior(tiny_denoiser) -> None:
    trajectory: List[np.ndarray] = []
    backbones = sample(
        tiny_denoiser, length=12, n_samples=5, guidance=GuidanceSpec(), gamma=0.0,
        schedule=build_time_grid(6), g_schedule=ODE, rng=np.random.default_rng(4),
        self_conditioning=True, batch_size=2, trajectory=trajectory,
    )
    prior = np.random.default_rng(4).standard_normal((5, 12, 3))
    assert len(backbones) == 5
    assert np.allclose(np.stack([b.coords for b in backbones]), prior)
    assert len(trajectory) == 7
    assert trajectory[0].shape == (5, 12, 3)


def test_sample_is_deterministic_for_seed(tiny_denoiser) -> None:
    def run() -> np.ndarray:
        out = sample(
            tiny_denoiser, length=10, n_samples=3, guidance=GuidanceSpec(), gamma=0.5,
            schedule=build_time_grid(5), g_schedule=StochasticitySchedule(), rng=np.random.default_rng(9),
        )
        return np.stack([b.coords for b in out])

    assert np.array_equal(run(), run())
