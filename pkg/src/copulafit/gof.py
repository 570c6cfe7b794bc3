"""Cramer-von Mises goodness of fit with a parametric bootstrap, and AIC."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .copulas import CopulaFamily, CopulaSpec, cdf, sample
from .empirical import PseudoSample, empirical_copula, pseudo_observations
from .errors import CopulaFitError, DomainError, FitError
from .estimators import FitResult, fit_copula, pseudo_loglik
from .llpt import DEFAULT_K_FRAC

__all__ = ["GofResult", "cvm_statistic", "bootstrap_pvalue", "aic", "MIN_BOOTSTRAP"]

log = logging.getLogger(__name__)

MIN_BOOTSTRAP = 99
MAX_DROP_FRACTION = 0.10


@dataclass(frozen=True)
class GofResult:
    s_n: float
    p_value: float
    bootstrap_reps: int
    aic: float
    method: str
    fit: FitResult
    dropped: int = 0

    def as_dict(self) -> dict:
        return {
            "family": self.fit.family.value,
            "nu": self.fit.nu,
            "method": self.method,
            "theta": self.fit.theta_hat,
            "tau": self.fit.tau_hat,
            "s_n": self.s_n,
            "p_value": self.p_value,
            "bootstrap_reps": self.bootstrap_reps,
            "dropped": self.dropped,
            "aic": self.aic,
        }


def cvm_statistic(spec: CopulaSpec, ps: PseudoSample) -> float:
    """``S_n = sum_i (C_n(u_i, v_i) - C(u_i, v_i; theta))^2``."""
    emp = empirical_copula(ps, ps.u, ps.v)
    model = cdf(spec, ps.u, ps.v)
    return float(np.sum((emp - model) ** 2))


def aic(spec: CopulaSpec, ps: PseudoSample) -> float:
    """Akaike criterion with one free parameter, on the pseudo-likelihood scale."""
    return 2.0 - 2.0 * pseudo_loglik(spec, ps)


def _replicate(spec: CopulaSpec, n: int, method: str, family, nu, k_frac, seed) -> float:
    boot = pseudo_observations(sample(spec, n, seed))
    refit = fit_copula(method, family, boot, nu=nu, k_frac=k_frac)
    return cvm_statistic(refit.spec, boot)


def bootstrap_pvalue(family, ps: PseudoSample, method: str = "mpl", B: int = 200, seed=None, *,
                     nu: Optional[float] = None, k_frac: float = DEFAULT_K_FRAC, jobs: int = 1) -> GofResult:
    """Parametric-bootstrap p-value of the Cramer-von Mises statistic.

    Replicate ``b`` draws from its own generator, spawned from ``seed`` by
    counter, so results do not depend on ``jobs``.
    """
    if B < MIN_BOOTSTRAP:
        raise DomainError(f"need at least {MIN_BOOTSTRAP} bootstrap replicates, got {B}")
    family = CopulaFamily.parse(family)
    fit = fit_copula(method, family, ps, nu=nu, k_frac=k_frac)
    spec = fit.spec
    s_n = cvm_statistic(spec, ps)
    children = np.random.SeedSequence(seed).spawn(B)

    def one(child):
        try:
            return _replicate(spec, ps.n, method, family, nu, k_frac, child)
        except CopulaFitError as exc:
            log.debug("bootstrap replicate dropped: %s", exc)
            return None

    if jobs > 1:
        from joblib import Parallel, delayed

        stats = Parallel(n_jobs=jobs)(delayed(one)(c) for c in children)
    else:
        stats = [one(c) for c in children]
    kept = np.array([s for s in stats if s is not None])
    dropped = B - kept.size
    if dropped > MAX_DROP_FRACTION * B:
        raise FitError(f"{dropped} of {B} bootstrap refits failed")
    p_value = (1.0 + np.sum(kept > s_n)) / (kept.size + 1.0)
    return GofResult(
        s_n=s_n,
        p_value=float(p_value),
        bootstrap_reps=int(kept.size),
        aic=aic(spec, ps),
        method=fit.method,
        fit=fit,
        dropped=int(dropped),
    )
