"""Local likelihood probit-transformation (LLPT) copula density estimation.

Pseudo-observations are mapped to R^2 with the standard normal quantile
function; there the log-density is fitted locally by a quadratic polynomial
under a product Gaussian kernel, and the fitted density is mapped back by
dividing by the product of the standard normal marginal densities.

Local polynomial in the offset ``z = x - at``::

    P_a(z) = a0 + a1 z1 + a2 z2 + a3 z1^2 + a4 z2^2 + a5 z1 z2

The kernel is ``K_b(z) = exp(-|z|^2 / (2 b^2))``; its normalising constant
multiplies both terms of the local likelihood and therefore does not change
the maximiser.  The objective is scaled by ``1/n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import hermite, hermite_e
from scipy import spatial

from .copulas import DENSITY_CEILING, norm_ppf
from .empirical import PseudoSample
from .errors import DegenerateDataError, DomainError, InsufficientDataError

__all__ = [
    "ProbitPoints",
    "Bandwidth",
    "LocalFit",
    "LlptEstimate",
    "probit_transform",
    "nn_bandwidth",
    "local_fit",
    "llpt_density",
    "llpt_at_sample",
    "integral_term",
    "DEFAULT_K_FRAC",
]

DEFAULT_K_FRAC = 0.3
BANDWIDTH_FLOOR = 0.1
GRAD_TOL = 1e-8
MAX_ITER = 100

_LOG_2PI = math.log(2.0 * math.pi)

# 3-point probabilists' Gauss-Hermite rule, tensorised: exact for the
# degree <= 4 polynomial moments needed by the Newton system.
_gh_x, _gh_w = hermite_e.hermegauss(3)
_GH_XI = np.array([[a, b] for a in _gh_x for b in _gh_x])
_GH_W = np.array([wa * wb for wa in _gh_w for wb in _gh_w]) / (2.0 * math.pi)

# 32 x 32 physicists' Gauss-Hermite grid for the non-Gaussian fallback.
_gh32_x, _gh32_w = hermite.hermgauss(32)
_GH32_Z = np.array([[a, b] for a in _gh32_x for b in _gh32_x])
_GH32_W = np.array([wa * wb for wa in _gh32_w for wb in _gh32_w])


@dataclass(frozen=True)
class ProbitPoints:
    s: np.ndarray
    t: np.ndarray

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.s, self.t])


@dataclass(frozen=True)
class Bandwidth:
    """Kernel scale ``b`` (standard deviation in probit space)."""

    b: float
    k_frac: float
    per_point: bool = False

    def __post_init__(self):
        if not (self.b > 0 and math.isfinite(self.b)):
            raise DomainError(f"bandwidth must be positive and finite, got {self.b}")


@dataclass(frozen=True)
class LocalFit:
    a: np.ndarray
    converged: bool
    iterations: int

    @property
    def density(self) -> float:
        """Fitted density of the probit-scale sample at the evaluation point."""
        return math.exp(self.a[0])


@dataclass(frozen=True)
class LlptEstimate:
    values: np.ndarray
    bandwidth: Bandwidth
    n: int
    converged: np.ndarray
    iterations: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def probit_transform(ps: PseudoSample) -> ProbitPoints:
    """Map pseudo-observations to R^2 through the standard normal quantile."""
    u, v = np.asarray(ps.u), np.asarray(ps.v)
    if np.any((u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)):
        raise DomainError("probit transform needs coordinates strictly inside (0, 1)")
    return ProbitPoints(norm_ppf(u), norm_ppf(v))


def nn_bandwidth(pts: ProbitPoints, k_frac: float = DEFAULT_K_FRAC) -> Bandwidth:
    """Nearest-neighbour bandwidth.

    ``b`` is the median over the sample of the distance from each point to
    its ``ceil(k_frac * n)``-th nearest neighbour (self excluded), floored at
    ``BANDWIDTH_FLOOR``.
    """
    if not (0.0 < k_frac <= 1.0):
        raise DomainError(f"k_frac must lie in (0, 1], got {k_frac}")
    xy = pts.as_array()
    n = xy.shape[0]
    if n < 2:
        raise InsufficientDataError("nearest-neighbour bandwidth needs at least 2 points")
    if np.all(xy == xy[0]):
        raise DegenerateDataError("all probit points coincide; bandwidth is undefined")
    k = min(max(math.ceil(k_frac * n - 1e-9), 1), n - 1)
    dist, _ = spatial.cKDTree(xy).query(xy, k=k + 1)
    b = float(np.median(dist[:, k]))
    return Bandwidth(max(b, BANDWIDTH_FLOOR), float(k_frac))


# ---------------------------------------------------------------------------
# Local likelihood machinery
# ---------------------------------------------------------------------------

def _features(z1, z2):
    return np.stack([np.ones_like(z1), z1, z2, z1 * z1, z2 * z2, z1 * z2], axis=-1)


def _data_term(s, t, at_s, at_t, b):
    """(1/n) sum_i K_b(x_i - at) phi(x_i - at) for each evaluation point."""
    z1 = s[None, :] - at_s[:, None]
    z2 = t[None, :] - at_t[:, None]
    w = np.exp(-(z1 * z1 + z2 * z2) / (2.0 * b * b))
    return np.einsum("mn,mnk->mk", w, _features(z1, z2)) / s.shape[0]


def _gaussian_form(a, b):
    """Precision ``Q`` and linear term ``g`` of exponent a0 + g.z - z'Qz/2."""
    inv_b2 = 1.0 / (b * b)
    q11 = inv_b2 - 2.0 * a[:, 3]
    q22 = inv_b2 - 2.0 * a[:, 4]
    q12 = -a[:, 5]
    return q11, q22, q12, a[:, 1], a[:, 2]


def _closed_form(a, b):
    """log of the integral term and the Gaussian mean/covariance; NaN where Q is not PD."""
    q11, q22, q12, g1, g2 = _gaussian_form(a, b)
    det = q11 * q22 - q12 * q12
    pd = (q11 > 0) & (det > 0)
    det_safe = np.where(pd, det, 1.0)
    s11, s22, s12 = q22 / det_safe, q11 / det_safe, -q12 / det_safe
    m1 = s11 * g1 + s12 * g2
    m2 = s12 * g1 + s22 * g2
    log_i = a[:, 0] + _LOG_2PI - 0.5 * np.log(det_safe) + 0.5 * (g1 * m1 + g2 * m2)
    log_i = np.where(pd, log_i, np.nan)
    return log_i, (m1, m2), (s11, s22, s12), pd


def _objective(a, data, b):
    log_i, _, _, pd = _closed_form(a, b)
    with np.errstate(over="ignore"):
        val = np.einsum("mk,mk->m", data, a) - np.exp(log_i)
    return np.where(pd, val, -np.inf)


def _moments(a, b):
    """Integral term I(a) together with I*E[phi] and I*E[phi phi'] (closed form)."""
    log_i, (m1, m2), (s11, s22, s12), pd = _closed_form(a, b)
    l11 = np.sqrt(np.where(pd, s11, 1.0))
    l21 = np.where(pd, s12, 0.0) / l11
    l22 = np.sqrt(np.maximum(np.where(pd, s22, 1.0) - l21 * l21, 0.0))
    xi1, xi2 = _GH_XI[:, 0], _GH_XI[:, 1]
    z1 = m1[:, None] + l11[:, None] * xi1[None, :]
    z2 = m2[:, None] + l21[:, None] * xi1[None, :] + l22[:, None] * xi2[None, :]
    phi = _features(z1, z2)
    e1 = np.einsum("j,mjk->mk", _GH_W, phi)
    e2 = np.einsum("j,mjk,mjl->mkl", _GH_W, phi, phi)
    with np.errstate(over="ignore"):
        big_i = np.exp(log_i)
    return big_i, big_i[:, None] * e1, big_i[:, None, None] * e2, pd


def integral_term(a, b: float, *, method: str = "auto") -> float:
    """``int K_b(z) exp(P_a(z)) dz`` for one coefficient vector.

    ``method="auto"`` uses the closed Gaussian form when the quadratic form
    is integrable and a 32 x 32 Gauss-Hermite grid otherwise;
    ``"closed"``/``"hermite"`` force one route.
    """
    a = np.asarray(a, dtype=float).reshape(1, 6)
    log_i, _, _, pd = _closed_form(a, b)
    if method == "closed" or (method == "auto" and pd[0]):
        if not pd[0]:
            raise DomainError("quadratic form is not integrable; closed form unavailable")
        return float(np.exp(log_i[0]))
    z = math.sqrt(2.0) * b * _GH32_Z
    poly = _features(z[:, 0], z[:, 1]) @ a[0]
    return float(2.0 * b * b * np.sum(_GH32_W * np.exp(poly)))


def _pilot_log_density(s, t, at_s, at_t):
    n = s.shape[0]
    bp = n ** (-1.0 / 6.0)
    d2 = (s[None, :] - at_s[:, None]) ** 2 + (t[None, :] - at_t[:, None]) ** 2
    # log-mean-exp keeps far-tail evaluation points finite.
    e = -d2 / (2.0 * bp * bp)
    mx = e.max(axis=1)
    return mx + np.log(np.mean(np.exp(e - mx[:, None]), axis=1)) - _LOG_2PI - 2.0 * math.log(bp)


def _profile_intercept(a, data, b):
    """Maximise the objective over a0 exactly, the other coefficients held fixed."""
    log_i, _, _, pd = _closed_form(a, b)
    ok = pd & (data[:, 0] > 0)
    out = a.copy()
    with np.errstate(divide="ignore"):
        out[ok, 0] = a[ok, 0] + np.log(data[ok, 0]) - log_i[ok]
    return out


def _newton(data, a0, b, max_iter=MAX_ITER, tol=GRAD_TOL):
    """Batched damped Newton ascent on the concave local likelihood.

    After each accepted step the intercept is re-profiled in closed form;
    this keeps the iteration moving when the local data are nearly
    degenerate and the optimum drifts off to infinite curvature.
    """
    m = data.shape[0]
    a = np.zeros((m, 6))
    a[:, 0] = a0
    a = _profile_intercept(a, data, b)
    converged = np.zeros(m, dtype=bool)
    iterations = np.zeros(m, dtype=int)
    active = np.arange(m)
    for it in range(max_iter + 1):
        if active.size == 0:
            break
        aa = a[active]
        big_i, ie1, ie2, _ = _moments(aa, b)
        grad = data[active] - ie1
        gnorm = np.linalg.norm(grad, axis=1)
        done = gnorm <= tol
        converged[active[done]] = True
        iterations[active] = it
        keep = ~done
        if it == max_iter or not np.any(keep):
            break
        active, aa, grad, hess = active[keep], aa[keep], grad[keep], ie2[keep]
        try:
            step = np.linalg.solve(hess, grad[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(h, g, rcond=None)[0] for h, g in zip(hess, grad)])
        f0 = _objective(aa, data[active], b)
        slope = np.einsum("mk,mk->m", grad, step)
        t = np.ones(active.size)
        accepted = np.zeros(active.size, dtype=bool)
        new = aa.copy()
        for _ in range(60):
            pending = ~accepted
            if not np.any(pending):
                break
            trial = aa[pending] + t[pending, None] * step[pending]
            f1 = _objective(trial, data[active[pending]], b)
            ok = np.isfinite(f1) & (f1 >= f0[pending] + 1e-4 * t[pending] * slope[pending])
            idx = np.flatnonzero(pending)
            new[idx[ok]] = trial[ok]
            accepted[idx[ok]] = True
            t[idx[~ok]] *= 0.5
        stalled = ~accepted
        if np.any(stalled):
            # No ascent possible along the Newton direction: at numerical optimum.
            iterations[active[stalled]] = it + 1
            converged[active[stalled]] = gnorm[keep][stalled] <= math.sqrt(tol)
        a[active] = _profile_intercept(new, data[active], b)
        active = active[accepted]
    return a, converged, iterations


def _fit_points(pts: ProbitPoints, at_s, at_t, bw: Bandwidth, chunk: int = 1024):
    at_s = np.asarray(at_s, dtype=float).ravel()
    at_t = np.asarray(at_t, dtype=float).ravel()
    m = at_s.size
    a = np.zeros((m, 6))
    conv = np.zeros(m, dtype=bool)
    iters = np.zeros(m, dtype=int)
    step = max(1, min(chunk, 4_000_000 // max(pts.n, 1)))
    for lo in range(0, m, step):
        sl = slice(lo, lo + step)
        data = _data_term(pts.s, pts.t, at_s[sl], at_t[sl], bw.b)
        init = _pilot_log_density(pts.s, pts.t, at_s[sl], at_t[sl])
        a[sl], conv[sl], iters[sl] = _newton(data, init, bw.b)
    return a, conv, iters


def local_fit(pts: ProbitPoints, at, bw: Bandwidth) -> LocalFit:
    """Local log-quadratic likelihood fit at one point of probit space."""
    at = np.asarray(at, dtype=float).ravel()
    if at.shape != (2,) or not np.all(np.isfinite(at)):
        raise DomainError("evaluation point must be a finite pair")
    a, conv, iters = _fit_points(pts, at[:1], at[1:], bw)
    return LocalFit(a[0], bool(conv[0]), int(iters[0]))


def _estimate(pts: ProbitPoints, qu, qv, bw: Bandwidth, n: int) -> LlptEstimate:
    if qu.size == 0:
        empty = np.zeros(0)
        return LlptEstimate(empty, bw, n, np.zeros(0, dtype=bool), np.zeros(0, dtype=int))
    if np.any((qu <= 0) | (qu >= 1) | (qv <= 0) | (qv >= 1)) or not (
        np.all(np.isfinite(qu)) and np.all(np.isfinite(qv))
    ):
        raise DomainError("LLPT query points must lie in the open unit square")
    qs, qt = norm_ppf(qu), norm_ppf(qv)
    a, conv, iters = _fit_points(pts, qs, qt, bw)
    log_c = a[:, 0] + _LOG_2PI + 0.5 * (qs * qs + qt * qt)
    with np.errstate(over="ignore"):
        values = np.minimum(np.exp(log_c), DENSITY_CEILING)
    values = np.where(np.isnan(values), 0.0, values)
    return LlptEstimate(values, bw, n, conv, iters)


def llpt_density(ps: PseudoSample, query, k_frac: float = DEFAULT_K_FRAC, bandwidth: Bandwidth | None = None) -> LlptEstimate:
    """LLPT copula density estimate at ``query`` (an ``(m, 2)`` array of points).

    ``bandwidth`` overrides the nearest-neighbour choice.
    """
    query = np.asarray(query, dtype=float)
    if query.size == 0:
        query = query.reshape(0, 2)
    if query.ndim != 2 or query.shape[1] != 2:
        raise DomainError(f"query must be an (m, 2) array, got shape {query.shape}")
    pts = probit_transform(ps)
    bw = bandwidth if bandwidth is not None else nn_bandwidth(pts, k_frac)
    return _estimate(pts, query[:, 0], query[:, 1], bw, ps.n)


def llpt_at_sample(ps: PseudoSample, k_frac: float = DEFAULT_K_FRAC, bandwidth: Bandwidth | None = None) -> LlptEstimate:
    """LLPT estimate evaluated at the pseudo-observations themselves."""
    return llpt_density(ps, ps.as_array(), k_frac=k_frac, bandwidth=bandwidth)
