import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from copulafit.copulas import (
    CopulaFamily,
    DENSITY_CEILING,
    CopulaSpec,
    cdf,
    debye1,
    h_function,
    norm_cdf,
    norm_ppf,
    pdf,
    sample,
    t_cdf,
    t_ppf,
    tau_from_theta,
    theta_from_tau,
)
from copulafit.empirical import kendall_tau_sample
from copulafit.errors import DomainError, ParameterDomainError

F = CopulaFamily

# one representative parameter per family, plus negative dependence where allowed
SPECS = [
    CopulaSpec(F.CLAYTON, 2.0),
    CopulaSpec(F.CLAYTON, -0.4),
    CopulaSpec(F.GUMBEL, 1.8),
    CopulaSpec(F.FRANK, 5.0),
    CopulaSpec(F.FRANK, -3.0),
    CopulaSpec(F.GAUSSIAN, 0.5),
    CopulaSpec(F.GAUSSIAN, -0.6),
    CopulaSpec(F.STUDENT_T, 0.5, nu=4.0),
]
ids = [f"{s.family.value}{s.theta:g}" for s in SPECS]


# -- univariate kernels -------------------------------------------------------

def test_normal_kernels_match_scipy():
    x = np.linspace(-8, 8, 101)
    assert np.allclose(norm_cdf(x), stats.norm.cdf(x), rtol=1e-13, atol=1e-300)
    p = np.linspace(1e-6, 1 - 1e-6, 101)
    assert np.allclose(norm_ppf(p), stats.norm.ppf(p), rtol=1e-12, atol=1e-12)
    assert np.allclose(norm_cdf(norm_ppf(p)), p, rtol=0, atol=1e-14)


def test_t_kernels_round_trip():
    p = np.linspace(0.01, 0.99, 49)
    assert np.allclose(t_cdf(t_ppf(p, 3.0), 3.0), p, atol=1e-12)
    assert np.allclose(t_cdf(1.3, 5.0), stats.t.cdf(1.3, 5.0), atol=1e-13)


# -- parameter space -----------------------------------------------------------

@pytest.mark.parametrize(
    "family, theta",
    [(F.CLAYTON, 0.0), (F.CLAYTON, -1.5), (F.GUMBEL, 0.9), (F.FRANK, 0.0), (F.GAUSSIAN, 1.01), (F.GAUSSIAN, -1.2)],
)
def test_invalid_parameters_rejected(family, theta):
    with pytest.raises(ParameterDomainError):
        CopulaSpec(family, theta)


def test_t_requires_valid_nu():
    with pytest.raises(ParameterDomainError):
        CopulaSpec(F.STUDENT_T, 0.3)
    with pytest.raises(ParameterDomainError):
        CopulaSpec(F.STUDENT_T, 0.3, nu=0.0)


def test_family_aliases():
    assert F.parse("Normal") is F.GAUSSIAN
    assert F.parse("student") is F.STUDENT_T
    with pytest.raises(ParameterDomainError):
        F.parse("joe")


# -- cdf ------------------------------------------------------------------------

def test_clayton_cdf_hand_value():
    assert cdf(CopulaSpec(F.CLAYTON, 2.0), 0.5, 0.5) == pytest.approx(7 ** -0.5, abs=1e-12)


def test_gaussian_independence_cdf_is_product():
    u = np.array([0.1, 0.37, 0.5, 0.93])
    v = np.array([0.8, 0.2, 0.5, 0.05])
    assert np.allclose(cdf(CopulaSpec(F.GAUSSIAN, 0.0), u, v), u * v, atol=1e-14)


@pytest.mark.parametrize("spec", SPECS, ids=ids)
def test_boundary_conditions(spec):
    g = np.linspace(0.0, 1.0, 11)
    assert np.allclose(cdf(spec, g, np.ones_like(g)), g, atol=1e-9)
    assert np.allclose(cdf(spec, np.ones_like(g), g), g, atol=1e-9)
    assert np.allclose(cdf(spec, np.zeros_like(g), g), 0.0, atol=1e-12)
    assert np.allclose(cdf(spec, g, np.zeros_like(g)), 0.0, atol=1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=ids)
def test_two_increasing_on_grid(spec):
    g = np.linspace(0.0, 1.0, 26)
    U, V = np.meshgrid(g, g, indexing="ij")
    C = cdf(spec, U.ravel(), V.ravel()).reshape(U.shape)
    vol = C[1:, 1:] - C[:-1, 1:] - C[1:, :-1] + C[:-1, :-1]
    assert vol.min() >= -1e-9
    assert vol.sum() == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("spec", SPECS, ids=ids)
def test_frechet_bounds(spec):
    rng = np.random.default_rng(0)
    u, v = rng.uniform(size=(2, 200))
    c = cdf(spec, u, v)
    assert np.all(c <= np.minimum(u, v) + 1e-10)
    assert np.all(c >= np.maximum(u + v - 1, 0) - 1e-10)


def test_gaussian_cdf_against_scipy_bivariate_normal():
    rho = 0.63
    u = np.array([0.05, 0.3, 0.5, 0.77, 0.99])
    v = np.array([0.4, 0.9, 0.5, 0.12, 0.98])
    mvn = stats.multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]])
    ref = np.array([mvn.cdf([a, b]) for a, b in zip(norm_ppf(u), norm_ppf(v))])
    assert np.allclose(cdf(CopulaSpec(F.GAUSSIAN, rho), u, v), ref, atol=1e-7)


def test_t_cdf_against_double_integral_of_density():
    spec = CopulaSpec(F.STUDENT_T, 0.4, nu=3.0)
    u0, v0 = 0.35, 0.7
    ref, _ = integrate.dblquad(lambda y, x: pdf(spec, x, y), 1e-12, u0, 1e-12, v0, epsabs=1e-11)
    assert cdf(spec, u0, v0) == pytest.approx(ref, abs=1e-7)


# -- pdf ------------------------------------------------------------------------

def test_gumbel_independence_density():
    rng = np.random.default_rng(1)
    u, v = rng.uniform(0.01, 0.99, size=(2, 50))
    assert np.allclose(pdf(CopulaSpec(F.GUMBEL, 1.0), u, v), 1.0, atol=1e-12)


def test_clayton_density_hand_value():
    # (1 + theta) (uv)^(-theta-1) (u^-theta + v^-theta - 1)^(-1/theta-2) at theta=2
    expected = 3 * 0.25 ** -3 * 7 ** -2.5
    assert pdf(CopulaSpec(F.CLAYTON, 2.0), 0.5, 0.5) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.481004, abs=1e-6)


@pytest.mark.parametrize("spec", SPECS, ids=ids)
def test_density_matches_mixed_difference_of_cdf(spec):
    h = 1e-4
    pts = [(0.3, 0.6), (0.5, 0.5), (0.72, 0.41), (0.2, 0.15)]
    for u, v in pts:
        fd = (cdf(spec, u + h, v + h) - cdf(spec, u + h, v - h) - cdf(spec, u - h, v + h) + cdf(spec, u - h, v - h)) / (4 * h * h)
        assert float(pdf(spec, u, v)) == pytest.approx(float(fd), rel=1e-4)


@pytest.mark.parametrize("spec", SPECS, ids=ids)
def test_h_function_matches_cdf_derivative(spec):
    h = 1e-6
    for u, v in [(0.3, 0.6), (0.5, 0.5), (0.8, 0.25)]:
        fd = (cdf(spec, u + h, v) - cdf(spec, u - h, v)) / (2 * h)
        assert float(h_function(spec, u, v)) == pytest.approx(float(fd), abs=1e-6)


def test_gaussian_density_integrates_to_one():
    m = 400
    g = (np.arange(m) + 0.5) / m
    U, V = np.meshgrid(g, g)
    total = pdf(CopulaSpec(F.GAUSSIAN, 0.5), U.ravel(), V.ravel()).sum() / m**2
    assert total == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("spec", SPECS, ids=ids)
def test_density_integrates_to_one_all_families(spec):
    total, _ = integrate.dblquad(lambda y, x: pdf(spec, x, y), 0, 1, 0, 1, epsabs=1e-6)
    assert total == pytest.approx(1.0, abs=2e-3)


def test_density_rejects_closed_square_points():
    with pytest.raises(DomainError):
        pdf(CopulaSpec(F.CLAYTON, 1.0), 0.0, 0.5)


def test_density_ceiling_flag():
    vals, saturated = pdf(CopulaSpec(F.CLAYTON, 30.0), [1e-12, 0.5], [1e-12, 0.5], with_flag=True)
    assert np.all(np.isfinite(vals))
    assert vals[0] == DENSITY_CEILING and saturated[0]
    assert not saturated[1]


def test_frank_large_theta_is_stable():
    spec = CopulaSpec(F.FRANK, 250.0)
    u = np.array([0.2, 0.5, 0.9])
    vals = pdf(spec, u, u)
    assert np.all(np.isfinite(vals)) and np.all(vals > 1)
    assert np.allclose(cdf(spec, u, u), u, atol=1e-2)


# -- tau maps -------------------------------------------------------------------

def test_tau_examples():
    assert tau_from_theta(CopulaSpec(F.CLAYTON, 2.0)) == pytest.approx(0.5, abs=1e-14)
    assert theta_from_tau(F.CLAYTON, 0.4) == pytest.approx(4 / 3, abs=1e-14)
    assert theta_from_tau(F.GAUSSIAN, 0.5) == pytest.approx(math.sin(math.pi / 4), abs=1e-14)
    assert theta_from_tau(F.GUMBEL, 0.0) == 1.0
    assert tau_from_theta(CopulaSpec(F.FRANK, 5.736)) == pytest.approx(0.5, abs=1e-4)


@pytest.mark.parametrize("family", [F.CLAYTON, F.GUMBEL, F.FRANK, F.GAUSSIAN, F.STUDENT_T])
@pytest.mark.parametrize("tau", [0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.985])
def test_tau_round_trip(family, tau):
    theta = theta_from_tau(family, tau)
    nu = 3.0 if family is F.STUDENT_T else None
    assert tau_from_theta(CopulaSpec(family, theta, nu)) == pytest.approx(tau, abs=1e-8)


@given(tau=st.floats(-0.95, 0.95).filter(lambda t: abs(t) > 1e-3))
@settings(max_examples=60, deadline=None)
def test_tau_round_trip_negative_dependence(tau):
    for family in (F.CLAYTON, F.FRANK, F.GAUSSIAN):
        theta = theta_from_tau(family, tau)
        if family is F.CLAYTON and theta <= -1:
            continue
        assert tau_from_theta(CopulaSpec(family, theta)) == pytest.approx(tau, abs=1e-8)


def test_unattainable_tau_rejected():
    with pytest.raises(ParameterDomainError):
        theta_from_tau(F.GUMBEL, -0.2)
    with pytest.raises(ParameterDomainError):
        theta_from_tau(F.CLAYTON, 0.0)
    with pytest.raises(ParameterDomainError):
        theta_from_tau(F.GAUSSIAN, 1.0)


# -- Debye function -----------------------------------------------------------------

def test_debye1_values():
    assert debye1(1e-9) == pytest.approx(1.0, abs=1e-9)
    assert debye1(1.0) == pytest.approx(0.777505, abs=1e-6)
    # brute-force midpoint rule on the defining integral
    n = 200000
    t = (np.arange(n) + 0.5) / n * 3.0
    ref = np.sum(t / np.expm1(t)) * (3.0 / n) / 3.0
    assert debye1(3.0) == pytest.approx(ref, abs=1e-8)


def test_debye1_negative_argument_identity():
    for x in (0.5, 2.0, 7.0):
        assert debye1(-x) == pytest.approx(debye1(x) + x / 2, abs=1e-12)


# -- sampling ---------------------------------------------------------------------

def test_sample_shape_and_range():
    xy = sample(CopulaSpec(F.FRANK, 3.0), 500, seed=3)
    assert xy.shape == (500, 2)
    assert np.all((xy > 0) & (xy < 1))


def test_sample_is_seeded():
    a = sample(CopulaSpec(F.GUMBEL, 2.0), 50, seed=11)
    b = sample(CopulaSpec(F.GUMBEL, 2.0), 50, seed=11)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_sample_rejects_bad_n(n):
    with pytest.raises(DomainError):
        sample(CopulaSpec(F.CLAYTON, 1.0), n)


def test_gaussian_sample_tau():
    xy = sample(CopulaSpec(F.GAUSSIAN, 0.8), 10000, seed=5)
    assert kendall_tau_sample(xy) == pytest.approx(2 / math.pi * math.asin(0.8), abs=0.03)


def test_gumbel_independence_sample_tau():
    xy = sample(CopulaSpec(F.GUMBEL, 1.0), 5000, seed=6)
    assert abs(kendall_tau_sample(xy)) < 0.03


@pytest.mark.parametrize("spec", SPECS, ids=ids)
def test_sampler_tau_within_four_standard_errors(spec):
    n = 20000
    xy = sample(spec, n, seed=2024)
    tau = tau_from_theta(spec)
    # large-sample SE of Kendall's tau is at most sqrt(2(2n+5)/(9n(n-1))) under independence;
    # under dependence it shrinks, and 4/9n * (1 - tau^2) style bounds are smaller still
    se = math.sqrt(2 * (2 * n + 5) / (9 * n * (n - 1)))
    assert abs(kendall_tau_sample(xy) - tau) < 4 * se


@pytest.mark.parametrize("spec", SPECS, ids=ids)
def test_sample_margins_uniform(spec):
    xy = sample(spec, 4000, seed=9)
    for col in xy.T:
        assert stats.kstest(col, "uniform").pvalue > 1e-3
