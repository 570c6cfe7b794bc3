"""Maximum pseudo-likelihood and minimum pseudo alpha-divergence estimators.

All estimators search over Kendall's tau in ``[-0.985, 0.985]`` (``[0, 0.985]``
for Gumbel) and map back to the copula parameter through
:func:`copulafit.copulas.theta_from_tau`, which gives every family the same
bounded search interval.  The scalar search is a coarse grid scan followed
by bounded Brent (golden section with parabolic steps) on the bracketing
grid cell.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .copulas import DENSITY_CEILING, CopulaFamily, CopulaSpec, log_pdf_raw, theta_from_tau
from .empirical import PseudoSample
from .errors import DomainError, FitError, InsufficientDataError, ParameterDomainError
from .llpt import DEFAULT_K_FRAC, LlptEstimate, llpt_at_sample

__all__ = [
    "DivergenceKind",
    "HELLINGER",
    "NEYMAN",
    "KULLBACK_LEIBLER",
    "FitResult",
    "pseudo_loglik",
    "alpha_divergence_objective",
    "mpl_fit",
    "mpkld_fit",
    "mpad_fit",
    "tau_bounds",
    "minimize_over_tau",
    "parse_method",
    "fit_copula",
]

TAU_LIMIT = 0.985
TAU_XTOL = 1e-8
MAX_EVALUATIONS = 200
GRID_POINTS = 41
LOGLIK_FLOOR = 1e-300
CHAT_FLOOR = 1e-10
_LOG_CEILING = math.log(DENSITY_CEILING)


@dataclass(frozen=True)
class DivergenceKind:
    """Member of the alpha-divergence family.

    ``alpha=0.5`` (Hellinger) and ``alpha=2`` (Neyman) use their explicit
    empirical sums; ``kl=True`` selects the Kullback-Leibler limit.
    """

    alpha: float
    kl: bool = False

    def __post_init__(self):
        if self.kl:
            object.__setattr__(self, "alpha", 1.0)
        elif not math.isfinite(self.alpha) or self.alpha in (0.0, 1.0):
            raise DomainError(f"alpha must be finite and not in {{0, 1}}, got {self.alpha}")

    @property
    def name(self) -> str:
        if self.kl:
            return "MPKLD"
        if self.alpha == 0.5:
            return "MPHD"
        if self.alpha == 2.0:
            return "MPND"
        return f"MPAD({self.alpha:g})"

    @classmethod
    def parse(cls, text: str) -> "DivergenceKind":
        key = text.strip().lower()
        if key in ("mphd", "hellinger", "hd"):
            return HELLINGER
        if key in ("mpnd", "neyman", "nd"):
            return NEYMAN
        if key in ("mpkld", "kl"):
            return KULLBACK_LEIBLER
        if key.startswith("mpad:"):
            try:
                alpha = float(key.split(":", 1)[1])
            except ValueError:
                raise DomainError(f"cannot parse alpha in {text!r}") from None
            return cls(alpha)
        raise DomainError(f"unknown divergence {text!r}")


HELLINGER = DivergenceKind(0.5)
NEYMAN = DivergenceKind(2.0)
KULLBACK_LEIBLER = DivergenceKind(1.0, kl=True)


@dataclass(frozen=True)
class FitResult:
    method: str
    family: CopulaFamily
    theta_hat: float
    tau_hat: float
    objective_at_opt: float
    evaluations: int
    converged: bool
    nu: Optional[float] = None
    at_bound: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def spec(self) -> CopulaSpec:
        return _spec_or_independence(self.family, self.theta_hat, self.nu)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "family": self.family.value,
            "nu": self.nu,
            "theta": self.theta_hat,
            "tau": self.tau_hat,
            "objective": self.objective_at_opt,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "at_bound": self.at_bound,
        }


# ---------------------------------------------------------------------------
# Parameter mapping
# ---------------------------------------------------------------------------

def tau_bounds(family: CopulaFamily) -> tuple[float, float]:
    family = CopulaFamily.parse(family)
    lo = 0.0 if family is CopulaFamily.GUMBEL else -TAU_LIMIT
    return lo, TAU_LIMIT


@functools.lru_cache(maxsize=8192)
def _theta_cached(family: CopulaFamily, tau: float) -> float:
    return theta_from_tau(family, tau)


def _theta_of_tau(family: CopulaFamily, tau: float) -> float:
    """Parameter for ``tau``; 0 stands for the independence limit of Clayton/Frank."""
    if tau == 0.0 and family in (CopulaFamily.CLAYTON, CopulaFamily.FRANK):
        return 0.0
    if family is CopulaFamily.FRANK:
        return _theta_cached(family, tau)
    return theta_from_tau(family, tau)


def _spec_or_independence(family, theta, nu):
    if theta == 0.0 and family in (CopulaFamily.CLAYTON, CopulaFamily.FRANK):
        # Independence limit: represented by the Gaussian copula with theta = 0.
        return CopulaSpec(CopulaFamily.GAUSSIAN, 0.0)
    return CopulaSpec(family, theta, nu)


def _log_density(family, theta, nu, ps: PseudoSample):
    lc = log_pdf_raw(family, theta, nu, ps.u, ps.v)
    lc = np.where(np.isnan(lc), -np.inf, lc)
    return np.minimum(lc, _LOG_CEILING)


def _check_nu(family: CopulaFamily, nu):
    if family is CopulaFamily.STUDENT_T:
        if nu is None:
            raise ParameterDomainError("t copula fits need a fixed nu")
        return float(nu)
    return None


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def _loglik_from_log_density(lc):
    return float(np.sum(np.maximum(lc, math.log(LOGLIK_FLOOR))))


def pseudo_loglik(spec: CopulaSpec, ps: PseudoSample) -> float:
    """``sum_i log c(u_i, v_i; theta)`` with densities floored at 1e-300."""
    return _loglik_from_log_density(_log_density(spec.family, spec.theta, spec.nu, ps))


def _csiszar_alpha(alpha: float, log_r):
    """Generator ``f(t) = (t^a - a (t - 1) - 1) / (a (a - 1))`` at ``t = exp(log_r)``.

    ``f >= 0`` with equality only at ``t = 1``; ``f`` equals ``2 (1 - sqrt t)^2``
    at ``a = 1/2`` and ``(1 - t)^2 / 2`` at ``a = 2``.
    """
    a = alpha
    with np.errstate(over="ignore", invalid="ignore"):
        f = (np.expm1(a * log_r) - a * np.expm1(log_r)) / (a * (a - 1.0))
    # f >= 0 exactly; clip round-off near t = 1
    return np.where(np.isnan(f), np.inf, np.maximum(f, 0.0))


def _divergence_from_log_ratio(kind: DivergenceKind, log_c, log_chat):
    log_r = log_c - log_chat
    if kind.kl:
        return float(np.mean(-np.maximum(log_c, math.log(LOGLIK_FLOOR)) + log_chat))
    if kind.alpha == 0.5:
        return float(np.mean((1.0 - np.exp(0.5 * log_r)) ** 2))
    if kind.alpha == 2.0:
        return float(np.mean((1.0 - np.exp(log_r)) ** 2))
    return float(np.mean(_csiszar_alpha(kind.alpha, log_r)))


def _chat_log(chat, n: int):
    values = chat.values if isinstance(chat, LlptEstimate) else np.asarray(chat, dtype=float)
    if values.shape != (n,):
        raise DomainError(f"density estimate has {values.shape} values for {n} pseudo-observations")
    return np.log(np.maximum(values, CHAT_FLOOR))


def alpha_divergence_objective(kind: DivergenceKind, chat, spec: CopulaSpec, ps: PseudoSample) -> float:
    """Empirical alpha-divergence between ``chat`` and the parametric density.

    ``chat`` is an :class:`LlptEstimate` (or plain array) aligned with ``ps``.
    Hellinger: ``mean((1 - sqrt(c/chat))^2)``; Neyman: ``mean((1 - c/chat)^2)``;
    other alpha: ``mean(f(c/chat))`` with the alpha-divergence generator
    ``f(t) = (t^alpha - alpha (t - 1) - 1) / (alpha (alpha - 1))``, i.e. the
    density-ratio integral against ``chat`` with ``dC_n`` substituted.
    """
    log_chat = _chat_log(chat, ps.n)
    log_c = _log_density(spec.family, spec.theta, spec.nu, ps)
    return _divergence_from_log_ratio(kind, log_c, log_chat)


# ---------------------------------------------------------------------------
# Scalar optimiser
# ---------------------------------------------------------------------------

@dataclass
class _Search:
    tau: float
    value: float
    evaluations: int
    converged: bool
    at_bound: bool


def minimize_over_tau(objective: Callable[[float], float], lo: float, hi: float, *,
                      grid_points: int = GRID_POINTS, xtol: float = TAU_XTOL,
                      max_evaluations: int = MAX_EVALUATIONS) -> _Search:
    """Grid scan over ``[lo, hi]`` then bounded Brent inside the best grid cell."""
    grid = np.linspace(lo, hi, grid_points)
    values = np.array([objective(float(t)) for t in grid])
    values = np.where(np.isfinite(values), values, np.inf)
    i = int(np.argmin(values))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    res = optimize.minimize_scalar(
        objective,
        bounds=(a, b),
        method="bounded",
        options={"xatol": xtol, "maxiter": max_evaluations - grid_points},
    )
    tau, val = float(res.x), float(res.fun)
    evaluations = grid_points + int(res.nfev)
    if values[i] < val:
        tau, val = float(grid[i]), float(values[i])
    at_bound = abs(tau - lo) <= 1e-6 or abs(tau - hi) <= 1e-6
    return _Search(tau, val, evaluations, bool(res.success) and math.isfinite(val), at_bound)


def _fit(method: str, family, ps: PseudoSample, nu, objective_of_theta, sign: float) -> FitResult:
    family = CopulaFamily.parse(family)
    nu = _check_nu(family, nu)
    if ps.n < 10:
        raise InsufficientDataError(f"parameter estimation needs n >= 10, got {ps.n}")
    lo, hi = tau_bounds(family)

    def objective(tau: float) -> float:
        return sign * objective_of_theta(family, _theta_of_tau(family, tau), nu)

    search = minimize_over_tau(objective, lo, hi)
    if not math.isfinite(search.value):
        raise FitError(f"{method} objective is not finite anywhere on the search interval")
    theta = _theta_of_tau(family, search.tau)
    return FitResult(
        method=method,
        family=family,
        theta_hat=theta,
        tau_hat=search.tau,
        objective_at_opt=sign * search.value,
        evaluations=search.evaluations,
        converged=search.converged,
        nu=nu,
        at_bound=search.at_bound,
    )


def mpl_fit(family, ps: PseudoSample, nu: Optional[float] = None) -> FitResult:
    """Maximum pseudo-likelihood estimate; ``objective_at_opt`` is the log-likelihood."""
    def loglik(fam, theta, nu_):
        return _loglik_from_log_density(_log_density(fam, theta, nu_, ps))

    return _fit("MPL", family, ps, nu, loglik, sign=-1.0)


def mpkld_fit(family, ps: PseudoSample, nu: Optional[float] = None) -> FitResult:
    """Minimum pseudo Kullback-Leibler estimate, ``argmin -(1/n) sum log c``."""
    def kl(fam, theta, nu_):
        return -_loglik_from_log_density(_log_density(fam, theta, nu_, ps)) / ps.n

    return _fit("MPKLD", family, ps, nu, kl, sign=1.0)


def mpad_fit(kind: DivergenceKind, family, ps: PseudoSample, chat, nu: Optional[float] = None) -> FitResult:
    """Minimum pseudo alpha-divergence estimate against a nonparametric density.

    ``chat`` holds the nonparametric density at the pseudo-observations,
    normally ``llpt_at_sample(ps)``.
    """
    if isinstance(kind, str):
        kind = DivergenceKind.parse(kind)
    log_chat = _chat_log(chat, ps.n)

    def divergence(fam, theta, nu_):
        return _divergence_from_log_ratio(kind, _log_density(fam, theta, nu_, ps), log_chat)

    result = _fit(kind.name, family, ps, nu, divergence, sign=1.0)
    if isinstance(chat, LlptEstimate):
        result.diagnostics["llpt_bandwidth"] = chat.bandwidth.b
        result.diagnostics["llpt_nonconverged"] = int(np.sum(~chat.converged))
    return result


def parse_method(method: str) -> "str | DivergenceKind":
    """Normalise a method label: ``"MPL"`` or a :class:`DivergenceKind`."""
    if isinstance(method, DivergenceKind):
        return method
    key = str(method).strip().lower()
    if key == "mpl":
        return "MPL"
    return DivergenceKind.parse(key)


def fit_copula(method, family, ps: PseudoSample, *, nu: Optional[float] = None,
               k_frac: float = DEFAULT_K_FRAC, chat=None) -> FitResult:
    """Fit ``family`` to ``ps`` with the named method (mpl, mphd, mpnd, mpkld, mpad:<alpha>).

    The LLPT density is computed on demand unless ``chat`` is supplied.
    """
    kind = parse_method(method)
    if kind == "MPL":
        return mpl_fit(family, ps, nu=nu)
    if kind.kl:
        return mpkld_fit(family, ps, nu=nu)
    if chat is None:
        chat = llpt_at_sample(ps, k_frac=k_frac)
    return mpad_fit(kind, family, ps, chat, nu=nu)
