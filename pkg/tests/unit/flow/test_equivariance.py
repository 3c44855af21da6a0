"""Unit tests for the rotation-equivariance estimate."""

import numpy as np
import pytest

from apps.flow.services.equivariance import EquivarianceReport, equivariance_analysis

ANCHOR = np.linspace(-5.0, 5.0, 36).reshape(12, 3)


def equivariant_field(x, t, x_hat, label):
    return -x


def invariant_field(x, t, x_hat, label):
    return (ANCHOR[None] - x) / (1.0 - t)


@pytest.fixture
def dataset(rng: np.random.Generator):
    return [np.cumsum(rng.normal(scale=2.0, size=(12, 3)), axis=0) for _ in range(4)]


def test_equivariant_field_has_zero_rotated_error(dataset, rng: np.random.Generator) -> None:
    report = equivariance_analysis(equivariant_field, dataset, [0.2, 0.6], 8, rng)
    assert np.allclose(report.e_rotated, 0.0, atol=1e-9)
    assert np.allclose(report.e_aligned, 0.0, atol=1e-6)
    assert all(e > 0.1 for e in report.e)


def test_invariant_field_has_zero_plain_error(dataset, rng: np.random.Generator) -> None:
    report = equivariance_analysis(invariant_field, dataset, [0.3, 0.7], 8, rng)
    assert np.allclose(report.e, 0.0, atol=1e-9)
    assert all(e > 0.1 for e in report.e_rotated)
    assert all(u <= r + 1e-9 for u, r in zip(report.e_aligned, report.e_rotated))


def test_report_frame_columns(dataset, rng: np.random.Generator) -> None:
    frame = equivariance_analysis(equivariant_field, dataset, [0.5], 2, rng).to_frame()
    assert list(frame.columns) == ["t", "E", "E_r", "E_u"]
    assert frame["t"].tolist() == [0.5]


def test_invalid_inputs(dataset, rng: np.random.Generator) -> None:
    with pytest.raises(ValueError, match="t must lie"):
        equivariance_analysis(equivariant_field, dataset, [1.0], 2, rng)
    with pytest.raises(ValueError, match="non-empty"):
        equivariance_analysis(equivariant_field, [], [0.5], 2, rng)
    with pytest.raises(ValueError, match="exceeds"):
        EquivarianceReport(t=[0.5], e=[1.0], e_rotated=[0.1], e_aligned=[0.2])
