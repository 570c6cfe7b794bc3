import math

import numpy as np
import pytest
from scipy import integrate

from copulafit.copulas import CopulaFamily, CopulaSpec, norm_cdf, norm_pdf, norm_ppf, sample, theta_from_tau
from copulafit.empirical import PseudoSample, pseudo_observations
from copulafit.errors import DegenerateDataError, DomainError
from copulafit.llpt import (
    BANDWIDTH_FLOOR,
    Bandwidth,
    ProbitPoints,
    _data_term,
    integral_term,
    llpt_at_sample,
    llpt_density,
    local_fit,
    nn_bandwidth,
    probit_transform,
)

PHI0_SQ = 1.0 / (2.0 * math.pi)  # phi(0)^2


def test_probit_examples():
    pts = probit_transform(PseudoSample([0.5, norm_cdf(1.5)], [0.5, norm_cdf(-0.3)]))
    assert pts.s[0] == 0.0 and pts.t[0] == 0.0
    assert pts.s[1] == pytest.approx(1.5, abs=1e-10)
    assert pts.t[1] == pytest.approx(-0.3, abs=1e-10)
    g = np.arange(1, 101) / 101
    assert abs(probit_transform(PseudoSample(g, g[::-1])).s.mean()) < 0.2


def test_bandwidth_corner_geometry():
    # probit images (0,0), (1,0), (0,1), (1,1): every nearest-neighbour distance is 1
    u = norm_cdf(np.array([0.0, 1.0, 0.0, 1.0]))
    v = norm_cdf(np.array([0.0, 0.0, 1.0, 1.0]))
    bw = nn_bandwidth(probit_transform(PseudoSample(u, v)), k_frac=0.25)
    assert bw.b == pytest.approx(1.0, abs=1e-12)


def test_bandwidth_fixed_fraction_is_stable_in_n():
    # k grows with n, so b tends to the radius holding a k_frac share of the mass
    rng = np.random.default_rng(4)
    bs = [nn_bandwidth(ProbitPoints(*rng.normal(size=(2, n))), 0.3).b for n in (100, 300, 1000, 3000)]
    assert max(bs) / min(bs) < 1.15


def test_bandwidth_fixed_neighbour_count_shrinks_with_n():
    rng = np.random.default_rng(4)
    bs = [nn_bandwidth(ProbitPoints(*rng.normal(size=(2, n))), 10 / n).b for n in (100, 300, 1000)]
    assert bs[0] > bs[1] > bs[2]


def test_bandwidth_floor():
    rng = np.random.default_rng(5)
    s = 0.3 + 1e-6 * rng.normal(size=1000)
    t = -0.2 + 1e-6 * rng.normal(size=1000)
    assert nn_bandwidth(ProbitPoints(s, t), 0.3).b == BANDWIDTH_FLOOR


def test_bandwidth_errors():
    with pytest.raises(DegenerateDataError):
        nn_bandwidth(ProbitPoints(np.zeros(20), np.zeros(20)))
    with pytest.raises(DomainError):
        nn_bandwidth(ProbitPoints(np.arange(20.0), np.arange(20.0)), k_frac=0.0)
    with pytest.raises(DomainError):
        Bandwidth(0.0, 0.3)


@pytest.mark.parametrize("a", [
    [0.1, 0.2, -0.3, -0.4, -0.2, 0.1],
    [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.5, 0.3, 0.1, 0.2],
])
def test_integral_term_closed_form_vs_quadrature(a):
    b = 0.7
    a = np.array(a)

    def f(y, x):
        z = np.array([1, x, y, x * x, y * y, x * y])
        return math.exp(-(x * x + y * y) / (2 * b * b) + z @ a)

    ref, _ = integrate.dblquad(f, -12, 12, -12, 12, epsabs=1e-12)
    assert integral_term(a, b, method="closed") == pytest.approx(ref, rel=1e-8)
    assert integral_term(a, b, method="hermite") == pytest.approx(ref, rel=1e-6)


def test_integral_term_falls_back_when_not_integrable():
    b = 1.0
    a = np.array([0.0, 0.0, 0.0, 0.6, -0.2, 0.0])  # q11 = 1 - 1.2 < 0
    with pytest.raises(DomainError):
        integral_term(a, b, method="closed")
    assert np.isfinite(integral_term(a, b))


def test_local_fit_standard_normal_origin():
    vals = []
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        pts = ProbitPoints(*rng.normal(size=(2, 5000)))
        fit = local_fit(pts, (0.0, 0.0), nn_bandwidth(pts))
        assert fit.converged
        vals.append(fit.density)
    assert all(abs(v - PHI0_SQ) < 0.02 for v in vals)


def test_local_fit_is_stationary():
    rng = np.random.default_rng(7)
    pts = ProbitPoints(*rng.normal(size=(2, 400)))
    bw = nn_bandwidth(pts)
    at = np.array([0.4, -0.7])
    fit = local_fit(pts, at, bw)
    assert fit.converged
    data = _data_term(pts.s, pts.t, at[:1], at[1:], bw.b)[0]

    def objective(a):
        return data @ a - integral_term(a, bw.b, method="closed")

    h = 1e-6
    grad = np.array([(objective(fit.a + h * e) - objective(fit.a - h * e)) / (2 * h) for e in np.eye(6)])
    assert np.linalg.norm(grad) < 1e-6


def test_local_fit_single_datum():
    pts = ProbitPoints(np.array([0.0]), np.array([0.0]))
    fit = local_fit(pts, (0.0, 0.0), Bandwidth(0.5, 1.0))
    assert fit.converged
    assert np.all(np.isfinite(fit.a))


def test_local_fit_symmetric_data_has_zero_slope():
    rng = np.random.default_rng(8)
    half = rng.normal(size=(300, 2))
    data = np.vstack([half, -half])
    pts = ProbitPoints(data[:, 0], data[:, 1])
    fit = local_fit(pts, (0.0, 0.0), nn_bandwidth(pts))
    assert abs(fit.a[1]) < 1e-3 and abs(fit.a[2]) < 1e-3


def test_density_at_centre_is_local_fit_ratio():
    rng = np.random.default_rng(9)
    half = rng.normal(size=(400, 2))
    data = np.vstack([half, -half])
    ps = PseudoSample(norm_cdf(data[:, 0]), norm_cdf(data[:, 1]))
    pts = probit_transform(ps)
    bw = nn_bandwidth(pts)
    fit = local_fit(pts, (0.0, 0.0), bw)
    est = llpt_density(ps, [[0.5, 0.5]], bandwidth=bw)
    assert est.values[0] == pytest.approx(fit.density / PHI0_SQ, rel=1e-12)


def test_probit_consistency_random_queries():
    rng = np.random.default_rng(10)
    ps = pseudo_observations(sample(CopulaSpec(CopulaFamily.GUMBEL, 1.6), 200, 10))
    pts = probit_transform(ps)
    bw = nn_bandwidth(pts)
    q = rng.uniform(0.02, 0.98, size=(20, 2))
    est = llpt_density(ps, q, bandwidth=bw)
    for (u, v), val in zip(q, est.values):
        zs, zt = norm_ppf(u), norm_ppf(v)
        fit = local_fit(pts, (zs, zt), bw)
        assert val == pytest.approx(fit.density / (norm_pdf(zs) * norm_pdf(zt)), rel=1e-12)


def test_independence_data_gives_flat_estimate():
    g = np.linspace(0.1, 0.9, 9)
    U, V = np.meshgrid(g, g)
    q = np.column_stack([U.ravel(), V.ravel()])
    for seed in range(5):
        ps = pseudo_observations(np.random.default_rng(200 + seed).uniform(size=(500, 2)))
        vals = llpt_density(ps, q).values
        assert np.mean((vals >= 0.5) & (vals <= 1.6)) >= 0.95


def test_empty_query():
    ps = pseudo_observations(np.random.default_rng(11).normal(size=(30, 2)))
    est = llpt_density(ps, [])
    assert len(est) == 0


def test_query_outside_open_square_rejected():
    ps = pseudo_observations(np.random.default_rng(12).normal(size=(30, 2)))
    with pytest.raises(DomainError):
        llpt_density(ps, [[0.0, 0.5]])


def test_exchange_symmetry():
    ps = pseudo_observations(sample(CopulaSpec(CopulaFamily.CLAYTON, 2.0), 150, 13))
    q = np.random.default_rng(14).uniform(0.05, 0.95, size=(25, 2))
    a = llpt_density(ps, q).values
    b = llpt_density(ps.swapped(), q[:, ::-1]).values
    assert np.allclose(a, b, rtol=1e-10, atol=0)


def test_values_positive_finite_and_converged():
    ps = pseudo_observations(sample(CopulaSpec(CopulaFamily.FRANK, 8.0), 150, 15))
    est = llpt_at_sample(ps)
    assert np.all(np.isfinite(est.values)) and np.all(est.values >= 0)
    assert est.all_converged


@pytest.mark.parametrize("family", ["clayton", "gumbel", "frank", "gaussian", "t"])
def test_mass_check(family):
    fam = CopulaFamily.parse(family)
    nu = 4.0 if fam is CopulaFamily.STUDENT_T else None
    spec = CopulaSpec(fam, theta_from_tau(fam, 0.4), nu)
    ps = pseudo_observations(sample(spec, 500, 16))
    g = np.linspace(0.5 / 64, 1 - 0.5 / 64, 64)
    U, V = np.meshgrid(g, g, indexing="ij")
    vals = llpt_density(ps, np.column_stack([U.ravel(), V.ravel()])).values.reshape(64, 64)
    mass = np.trapezoid(np.trapezoid(vals, g, axis=1), g)
    assert 0.7 <= mass <= 1.3
