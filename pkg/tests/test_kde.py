import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overlap_ad.kde import (
    DegenerateBatchError,
    DensityEstimate,
    cdf_at,
    make_grid,
    pdf_and_grad,
    pdf_at,
    pdf_grad_wrt_samples,
)

from fdcheck import central_diff, rel_err

INV_SQRT_2PI = 1 / np.sqrt(2 * np.pi)


def test_pdf_single_kernel():
    assert pdf_at(DensityEstimate(np.array([0.0])), [0.0])[0] == pytest.approx(INV_SQRT_2PI, abs=1e-12)


def test_pdf_two_samples():
    v = pdf_at(DensityEstimate(np.array([-1.0, 1.0])), [0.0])[0]
    assert v == pytest.approx(INV_SQRT_2PI * np.exp(-0.5), abs=1e-12)


def test_pdf_bandwidth_scaling():
    s = np.random.default_rng(0).normal(size=20)
    pts = np.linspace(-3, 3, 13)
    lam = 2.5
    np.testing.assert_allclose(
        pdf_at(DensityEstimate(lam * s, lam), lam * pts), pdf_at(DensityEstimate(s, 1.0), pts) / lam, atol=1e-12
    )


def test_density_estimate_validation():
    with pytest.raises(ValueError):
        DensityEstimate(np.array([]))
    with pytest.raises(ValueError):
        DensityEstimate(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        DensityEstimate(np.array([0.0]), bandwidth=0.0)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40), st.floats(-20, 20))
@settings(max_examples=50, deadline=None)
def test_shift_invariance_and_positivity(samples, delta):
    s = np.array(samples)
    pts = np.linspace(s.min() - 2, s.max() + 2, 7)
    a = pdf_at(DensityEstimate(s), pts)
    b = pdf_at(DensityEstimate(s + delta), pts + delta)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-300)
    assert np.all(a > 0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(0.2, 3))
@settings(max_examples=30, deadline=None)
def test_integrates_to_one(samples, h):
    s = np.array(samples)
    pts = np.linspace(s.min() - 6 * h, s.max() + 6 * h, 10_000)
    assert abs(np.trapezoid(pdf_at(DensityEstimate(s, h), pts), pts) - 1) < 1e-3


def test_cdf_matches_numeric_integral():
    s = np.random.default_rng(3).normal(size=15)
    pts = np.linspace(s.min() - 8, 0.3, 20_001)
    integral = np.trapezoid(pdf_at(DensityEstimate(s), pts), pts)
    assert cdf_at(DensityEstimate(s), [0.3])[0] == pytest.approx(integral, abs=1e-7)


def test_grad_symmetry_and_zero_upstream():
    est = DensityEstimate(np.array([-1.0, 1.0]))
    g = pdf_grad_wrt_samples(est, [0.0], [1.0])
    assert g[0] == pytest.approx(-g[1]) and g[0] != 0
    assert not pdf_grad_wrt_samples(est, [0.0, 1.0], [0.0, 0.0]).any()
    with pytest.raises(ValueError):
        pdf_grad_wrt_samples(est, [0.0, 1.0], [1.0])


@pytest.mark.parametrize("seed", range(5))
def test_grad_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=12) * 2
    h = rng.uniform(0.5, 2)
    pts = np.linspace(-4, 4, 9)
    up = rng.normal(size=9)
    analytic = pdf_grad_wrt_samples(DensityEstimate(s, h), pts, up)
    numeric = central_diff(lambda x: float(up @ pdf_at(DensityEstimate(x, h), pts)), s)
    assert rel_err(analytic, numeric).max() < 1e-6


def test_fused_matches_separate():
    rng = np.random.default_rng(0)
    est = DensityEstimate(rng.normal(size=30), 0.7)
    pts, up = np.linspace(-2, 2, 11), rng.normal(size=11)
    v, g = pdf_and_grad(est, pts, up)
    np.testing.assert_allclose(v, pdf_at(est, pts), rtol=1e-14)
    np.testing.assert_allclose(g, pdf_grad_wrt_samples(est, pts, up), rtol=1e-12, atol=1e-16)


def test_make_grid():
    g = make_grid([0.0], [1.0], 4)
    np.testing.assert_allclose(g.points, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.spacing == 0.25 and g.n_intervals == 4
    s_n, s_a = np.array([0.3, -1.2]), np.array([2.5, 0.1])
    g = make_grid(s_n, s_a, 10)
    assert g.points[0] == -1.2 and g.points[-1] == 2.5 and g.lo == -1.2 and g.hi == 2.5
    assert np.all(np.diff(g.points) > 0)
    with pytest.raises(DegenerateBatchError):
        make_grid([1.0, 1.0], [1.0], 10)
    with pytest.raises(ValueError):
        make_grid([0.0], [1.0], 1)
