"""Bivariate one-parameter copula families.

Five families are supported: Clayton, Gumbel, Frank (Archimedean) and
Gaussian, Student t (elliptical).  Every function here is vectorised over
the ``u``/``v`` arguments and pure; sampling takes an explicit seed.

The univariate normal and Student t kernels used across the package
(``norm_cdf``, ``norm_ppf``, ``norm_pdf``, ``t_cdf``, ``t_ppf``) live here as
well so that every module evaluates them the same way.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, NumericError, ParameterDomainError

__all__ = [
    "CopulaFamily",
    "CopulaSpec",
    "DENSITY_CEILING",
    "cdf",
    "pdf",
    "h_function",
    "sample",
    "tau_from_theta",
    "theta_from_tau",
    "debye1",
    "norm_cdf",
    "norm_ppf",
    "norm_pdf",
    "t_cdf",
    "t_ppf",
]

#: Densities are clamped at this value; see ``pdf(..., with_flag=True)``.
DENSITY_CEILING = 1e12

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Univariate kernels
# ---------------------------------------------------------------------------

def norm_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def norm_ppf(p):
    """Standard normal quantile function."""
    return special.ndtri(p)


def norm_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - 0.5 * _LOG_2PI)


def t_cdf(x, nu: float):
    """Student t CDF with ``nu`` degrees of freedom."""
    return special.stdtr(nu, x)


def t_ppf(p, nu: float):
    """Student t quantile function with ``nu`` degrees of freedom."""
    return special.stdtrit(nu, p)


# ---------------------------------------------------------------------------
# Families and parameter validation
# ---------------------------------------------------------------------------

class CopulaFamily(str, enum.Enum):
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"
    GAUSSIAN = "gaussian"
    STUDENT_T = "t"

    @classmethod
    def parse(cls, name: "str | CopulaFamily") -> "CopulaFamily":
        if isinstance(name, CopulaFamily):
            return name
        key = str(name).strip().lower()
        aliases = {"normal": "gaussian", "student": "t", "studentt": "t", "student_t": "t"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise ParameterDomainError(f"unknown copula family {name!r} (expected one of {valid})") from None

    @property
    def is_elliptical(self) -> bool:
        return self in (CopulaFamily.GAUSSIAN, CopulaFamily.STUDENT_T)


def _check_theta(family: CopulaFamily, theta: float, nu: Optional[float]) -> None:
    if not math.isfinite(theta):
        raise ParameterDomainError(f"{family.value}: theta must be finite, got {theta}")
    if family is CopulaFamily.CLAYTON:
        ok = theta > -1.0 and theta != 0.0
        space = "(-1, inf) \\ {0}"
    elif family is CopulaFamily.GUMBEL:
        ok = theta >= 1.0
        space = "[1, inf)"
    elif family is CopulaFamily.FRANK:
        ok = theta != 0.0
        space = "(-inf, inf) \\ {0}"
    else:
        ok = -1.0 <= theta <= 1.0
        space = "[-1, 1]"
    if not ok:
        raise ParameterDomainError(f"{family.value}: theta={theta!r} outside parameter space {space}")
    if family is CopulaFamily.STUDENT_T:
        if nu is None or not (nu > 1.0) or not math.isfinite(nu):
            raise ParameterDomainError(f"t copula needs fixed degrees of freedom nu > 1, got {nu!r}")
    elif nu is not None:
        raise ParameterDomainError(f"{family.value}: nu is only meaningful for the t copula")


@dataclass(frozen=True)
class CopulaSpec:
    """A fully specified parametric copula ``C(u, v; theta)``.

    ``nu`` is the (fixed) degrees of freedom and must be given for the t
    copula only.
    """

    family: CopulaFamily
    theta: float
    nu: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", CopulaFamily.parse(self.family))
        object.__setattr__(self, "theta", float(self.theta))
        if self.nu is not None:
            object.__setattr__(self, "nu", float(self.nu))
        _check_theta(self.family, self.theta, self.nu)

    @property
    def tau(self) -> float:
        return tau_from_theta(self)

    def __str__(self) -> str:
        extra = f", nu={self.nu:g}" if self.nu is not None else ""
        return f"{self.family.value}(theta={self.theta:.6g}{extra})"


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _as_pair(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    return u, v


def _check_closed(u, v):
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise DomainError("copula arguments must be finite")
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)):
        raise DomainError("copula arguments must lie in [0, 1]^2")


def _check_open(u, v):
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise DomainError("density arguments must be finite")
    if np.any((u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)):
        raise DomainError("copula density is only defined on the open square (0, 1)^2")


def _log_clayton_inner(u, v, theta):
    """log(u^-theta + v^-theta - 1); -inf where the Clayton support ends."""
    if theta > 0:
        big = special.logsumexp(np.stack([-theta * np.log(u), -theta * np.log(v)]), axis=0)
        return big + np.log1p(-np.exp(-big))
    inner = u ** (-theta) + v ** (-theta) - 1.0
    with np.errstate(divide="ignore"):
        return np.where(inner > 0, np.log(np.maximum(inner, 0.0)), -np.inf)


def _frank_log_denom(u, v, theta):
    """log((1 - e^-t) - (1 - e^-tu)(1 - e^-tv)) for t > 0, as a sum of positive terms.

    The expression equals e^-tu (1 - e^-tv) + e^-tv (1 - e^-t(1-v)).
    """
    with np.errstate(divide="ignore"):
        first = -theta * u + np.log(-np.expm1(-theta * v))
        second = -theta * v + np.log(-np.expm1(-theta * (1.0 - v)))
    return np.logaddexp(first, second)


# ---------------------------------------------------------------------------
# CDF
# ---------------------------------------------------------------------------

def _elliptical_cdf_interior(u, v, rho, nu):
    """Single-integral reduction of the bivariate normal / t CDF.

    Conditioning on the first coordinate, C(u, v) = int_0^u P(Y <= y_v | X = q(p)) dp.
    The integral over p is mapped to [0, 1] and evaluated with a vectorised
    adaptive Gauss-Kronrod rule.
    """
    if nu is None:
        k = norm_ppf(v)
        r = math.sqrt(1.0 - rho * rho)

        def integrand(s):
            x = norm_ppf(s * u)
            return u * norm_cdf((k - rho * x) / r)
    else:
        # t quantiles are expensive, so integrate over x = h - (1 - s)/s instead.
        h = t_ppf(u, nu)
        k = t_ppf(v, nu)
        r2 = (1.0 - rho * rho) / (nu + 1.0)
        log_norm = special.gammaln((nu + 1.0) / 2.0) - special.gammaln(nu / 2.0) - 0.5 * math.log(nu * math.pi)

        def integrand(s):
            if s <= 0.0:
                return np.zeros_like(h)
            x = h - (1.0 - s) / s
            dens = np.exp(log_norm - (nu + 1.0) / 2.0 * np.log1p(x * x / nu))
            scale = np.sqrt(r2 * (nu + x * x))
            return dens * t_cdf((k - rho * x) / scale, nu + 1.0) / (s * s)

    res, err, info = integrate.quad_vec(
        integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10, norm="max", limit=400, full_output=True
    )
    if info.status != 0:
        raise NumericError(
            f"elliptical copula CDF quadrature did not converge (rho={rho}, nu={nu}, "
            f"status={info.status}, error estimate={err:.3g})"
        )
    return np.clip(res, 0.0, np.minimum(u, v))


def cdf(spec: CopulaSpec, u, v):
    """Copula distribution function ``C(u, v; theta)`` on ``[0, 1]^2``."""
    u, v = _as_pair(u, v)
    _check_closed(u, v)
    fam, th = spec.family, spec.theta
    out = np.zeros(u.shape)
    # Boundary values are fixed by the uniform-margin property.
    edge_u1 = u == 1.0
    edge_v1 = v == 1.0
    zero = (u == 0.0) | (v == 0.0)
    out[edge_u1] = v[edge_u1]
    out[edge_v1] = u[edge_v1]
    out[zero] = 0.0
    m = ~(edge_u1 | edge_v1 | zero)
    if not np.any(m):
        return out[()] if out.ndim == 0 else out
    uu, vv = u[m], v[m]

    if fam is CopulaFamily.CLAYTON:
        li = _log_clayton_inner(uu, vv, th)
        with np.errstate(over="ignore"):
            val = np.exp(-li / th)
        val = np.where(np.isfinite(li), val, 0.0)
    elif fam is CopulaFamily.GUMBEL:
        lx, ly = np.log(-np.log(uu)), np.log(-np.log(vv))
        log_a = special.logsumexp(np.stack([th * lx, th * ly]), axis=0)
        val = np.exp(-np.exp(log_a / th))
    elif fam is CopulaFamily.FRANK:
        if th > 0:
            val = (math.log(-math.expm1(-th)) - _frank_log_denom(uu, vv, th)) / th
        else:
            # C_{-t}(u, v) = u - C_t(u, 1 - v)
            val = uu + (math.log(-math.expm1(th)) - _frank_log_denom(uu, 1.0 - vv, -th)) / th
    else:
        nu = spec.nu if fam is CopulaFamily.STUDENT_T else None
        if th == 0.0 and nu is None:
            val = uu * vv
        elif th >= 1.0:
            val = np.minimum(uu, vv)
        elif th <= -1.0:
            val = np.maximum(uu + vv - 1.0, 0.0)
        else:
            val = _elliptical_cdf_interior(uu, vv, th, nu)
    out[m] = np.clip(val, np.maximum(uu + vv - 1.0, 0.0), np.minimum(uu, vv))
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Density
# ---------------------------------------------------------------------------

def _log_pdf(family: CopulaFamily, theta: float, nu, u, v):
    if family is CopulaFamily.CLAYTON:
        li = _log_clayton_inner(u, v, theta)
        lc = math.log1p(theta) - (theta + 1.0) * (np.log(u) + np.log(v)) - (1.0 / theta + 2.0) * li
        return np.where(np.isfinite(li), lc, -np.inf)
    if family is CopulaFamily.GUMBEL:
        x, y = -np.log(u), -np.log(v)
        lx, ly = np.log(x), np.log(y)
        log_a = special.logsumexp(np.stack([theta * lx, theta * ly]), axis=0)
        a_root = np.exp(log_a / theta)
        return (
            -a_root
            + x
            + y
            + (theta - 1.0) * (lx + ly)
            + (2.0 / theta - 2.0) * log_a
            + np.log1p((theta - 1.0) / a_root)
        )
    if family is CopulaFamily.FRANK:
        if theta < 0:
            # c_{-t}(u, v) = c_t(u, 1 - v) keeps every exponential bounded.
            theta, v = -theta, 1.0 - v
        return math.log(-theta * math.expm1(-theta)) - theta * (u + v) - 2.0 * _frank_log_denom(u, v, theta)
    if family is CopulaFamily.GAUSSIAN:
        if abs(theta) >= 1.0:
            raise DomainError("Gaussian copula with |theta| = 1 has no density")
        s, t = norm_ppf(u), norm_ppf(v)
        r2 = 1.0 - theta * theta
        return -0.5 * math.log(r2) - (theta * theta * (s * s + t * t) - 2.0 * theta * s * t) / (2.0 * r2)
    # Student t
    if abs(theta) >= 1.0:
        raise DomainError("t copula with |theta| = 1 has no density")
    s, t = t_ppf(u, nu), t_ppf(v, nu)
    r2 = 1.0 - theta * theta
    log_f2 = (
        special.gammaln((nu + 2.0) / 2.0)
        - special.gammaln(nu / 2.0)
        - math.log(nu * math.pi)
        - 0.5 * math.log(r2)
        - (nu + 2.0) / 2.0 * np.log1p((s * s + t * t - 2.0 * theta * s * t) / (nu * r2))
    )
    log_f1_const = special.gammaln((nu + 1.0) / 2.0) - special.gammaln(nu / 2.0) - 0.5 * math.log(nu * math.pi)
    log_f1 = 2.0 * log_f1_const - (nu + 1.0) / 2.0 * (np.log1p(s * s / nu) + np.log1p(t * t / nu))
    return log_f2 - log_f1


def log_pdf_raw(family: CopulaFamily, theta: float, nu, u, v):
    """Unvalidated log-density used by the estimators' inner loops.

    ``theta == 0`` is accepted for Clayton and Frank and gives the
    independence limit (log-density 0).  Arguments must already be inside
    the open unit square.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if theta == 0.0 and family in (CopulaFamily.CLAYTON, CopulaFamily.FRANK, CopulaFamily.GAUSSIAN):
        return np.zeros(np.broadcast(u, v).shape)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _log_pdf(family, theta, nu, u, v)


def pdf(spec: CopulaSpec, u, v, *, with_flag: bool = False):
    """Copula density ``c(u, v; theta)`` on the open unit square.

    Values are clamped at :data:`DENSITY_CEILING`.  With ``with_flag=True``
    a ``(density, saturated)`` pair is returned where ``saturated`` marks the
    clamped entries.
    """
    u, v = _as_pair(u, v)
    _check_open(u, v)
    lc = log_pdf_raw(spec.family, spec.theta, spec.nu, u, v)
    with np.errstate(over="ignore"):
        dens = np.exp(lc)
    saturated = ~(dens <= DENSITY_CEILING)
    dens = np.where(saturated, DENSITY_CEILING, dens)
    if dens.ndim == 0:
        dens, saturated = dens[()], bool(saturated)
    return (dens, saturated) if with_flag else dens


# ---------------------------------------------------------------------------
# Conditional distribution and sampling
# ---------------------------------------------------------------------------

def h_function(spec: CopulaSpec, u, v):
    """Conditional distribution ``P(V <= v | U = u) = dC/du`` on ``(0, 1)^2``."""
    u, v = _as_pair(u, v)
    _check_open(u, v)
    fam, th = spec.family, spec.theta
    if fam is CopulaFamily.CLAYTON:
        li = _log_clayton_inner(u, v, th)
        with np.errstate(over="ignore"):
            val = np.exp(-(th + 1.0) * np.log(u) - (1.0 / th + 1.0) * li)
        val = np.where(np.isfinite(li), val, 0.0)
    elif fam is CopulaFamily.GUMBEL:
        val = _gumbel_h(u, v, th)
    elif fam is CopulaFamily.FRANK:
        if th > 0:
            val = np.exp(-th * u + np.log(-np.expm1(-th * v)) - _frank_log_denom(u, v, th))
        else:
            val = 1.0 - np.exp(th * u + np.log(-np.expm1(th * (1.0 - v))) - _frank_log_denom(u, 1.0 - v, -th))
    elif fam is CopulaFamily.GAUSSIAN:
        s, t = norm_ppf(u), norm_ppf(v)
        val = norm_cdf((t - th * s) / math.sqrt(1.0 - th * th))
    else:
        nu = spec.nu
        s, t = t_ppf(u, nu), t_ppf(v, nu)
        scale = np.sqrt((1.0 - th * th) * (nu + s * s) / (nu + 1.0))
        val = t_cdf((t - th * s) / scale, nu + 1.0)
    return np.clip(val, 0.0, 1.0)


def _gumbel_h(u, v, theta):
    x, y = -np.log(u), -np.log(v)
    with np.errstate(divide="ignore"):
        lx, ly = np.log(x), np.log(y)
    log_a = np.logaddexp(theta * lx, theta * ly)
    log_h = -np.exp(log_a / theta) + x + (theta - 1.0) * lx + (1.0 / theta - 1.0) * log_a
    return np.exp(log_h)


def _invert_gumbel_h(u, w, theta, tol=1e-10):
    """Solve h(v | u) = w for v by vectorised bisection on [0, 1]."""
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            hm = _gumbel_h(u, mid, theta)
        below = hm < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)


def sample(spec: CopulaSpec, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` i.i.d. pairs from the copula; returns an ``(n, 2)`` array."""
    if int(n) != n or n < 1:
        raise DomainError(f"sample size must be a positive integer, got {n!r}")
    n = int(n)
    rng = np.random.default_rng(seed)
    fam, th = spec.family, spec.theta
    if fam.is_elliptical:
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        x = z1
        y = th * z1 + math.sqrt(max(1.0 - th * th, 0.0)) * z2
        if fam is CopulaFamily.GAUSSIAN:
            u, v = norm_cdf(x), norm_cdf(y)
        else:
            w = np.sqrt(rng.chisquare(spec.nu, n) / spec.nu)
            u, v = t_cdf(x / w, spec.nu), t_cdf(y / w, spec.nu)
        return np.column_stack([u, v])

    u = rng.random(n)
    w = rng.random(n)
    if fam is CopulaFamily.CLAYTON:
        base = (w ** (-th / (1.0 + th)) - 1.0) * u ** (-th) + 1.0
        v = base ** (-1.0 / th)
    elif fam is CopulaFamily.FRANK:
        d = np.expm1(-th)
        v = -np.log1p(w * d / (w + (1.0 - w) * np.exp(-th * u))) / th
    elif th == 1.0:
        v = w
    else:
        v = _invert_gumbel_h(u, w, th)
    return np.column_stack([u, np.clip(v, 0.0, 1.0)])


# ---------------------------------------------------------------------------
# Kendall's tau
# ---------------------------------------------------------------------------

def debye1(x: float) -> float:
    """First-order Debye function ``D1(x) = (1/x) int_0^x t / (e^t - 1) dt``."""
    x = float(x)
    if x == 0.0:
        return 1.0
    if x < 0.0:
        return debye1(-x) - x / 2.0
    if x < 1e-6:
        return 1.0 - x / 4.0 + x * x / 36.0

    def integrand(t):
        return t / math.expm1(t) if t > 0.0 else 1.0

    val, err = integrate.quad(integrand, 0.0, x, epsabs=1e-13, epsrel=1e-13, limit=200)
    if err > 1e-10 * max(x, 1.0):
        raise NumericError(f"debye1({x}) quadrature error estimate {err:.3g}")
    return val / x


def _frank_tau(theta: float) -> float:
    return 1.0 + 4.0 / theta * (debye1(theta) - 1.0)


def tau_from_theta(spec: CopulaSpec) -> float:
    """Kendall's tau implied by a copula specification."""
    return _tau(spec.family, spec.theta)


def _tau(family: CopulaFamily, theta: float) -> float:
    if family is CopulaFamily.CLAYTON:
        return theta / (theta + 2.0)
    if family is CopulaFamily.GUMBEL:
        return (theta - 1.0) / theta
    if family is CopulaFamily.FRANK:
        return 0.0 if theta == 0.0 else _frank_tau(theta)
    return 2.0 / math.pi * math.asin(theta)


def theta_from_tau(family: "CopulaFamily | str", tau: float) -> float:
    """Invert the family's Kendall's tau map."""
    family = CopulaFamily.parse(family)
    tau = float(tau)
    if not (-1.0 < tau < 1.0):
        raise ParameterDomainError(f"Kendall's tau must lie in (-1, 1), got {tau}")
    if family is CopulaFamily.CLAYTON:
        if tau == 0.0:
            raise ParameterDomainError("clayton: tau = 0 maps to the excluded point theta = 0")
        return 2.0 * tau / (1.0 - tau)
    if family is CopulaFamily.GUMBEL:
        if tau < 0.0:
            raise ParameterDomainError(f"gumbel: only tau >= 0 is attainable, got {tau}")
        return 1.0 / (1.0 - tau)
    if family is CopulaFamily.FRANK:
        if tau == 0.0:
            raise ParameterDomainError("frank: tau = 0 maps to the excluded point theta = 0")
        return _frank_theta(tau)
    return math.sin(math.pi * tau / 2.0)


def _frank_theta(tau: float) -> float:
    sign = 1.0 if tau > 0 else -1.0
    target = abs(tau)
    # tau(theta) ~ theta/9 near 0 and ~ 1 - 4/theta for large theta.
    lo = max(1e-12, 4.5 * target)
    while _frank_tau(lo) > target:
        lo /= 2.0
    hi = max(2.0 * lo, 9.0 * target, 8.0 / (1.0 - target))
    while _frank_tau(hi) < target:
        hi *= 2.0
    root = optimize.brentq(lambda th: _frank_tau(th) - target, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return sign * root
