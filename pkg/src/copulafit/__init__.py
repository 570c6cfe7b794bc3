"""Semiparametric copula estimation by minimum pseudo alpha-divergence.

Divergence-based estimators (Hellinger, Neyman, general alpha) are fitted
against a local-likelihood probit-transform density estimate and compared
with maximum pseudo-likelihood.  Drought pairs derived from SPI series are
supported as an application.
"""

from .copulas import (
    CopulaFamily,
    CopulaSpec,
    cdf,
    debye1,
    h_function,
    pdf,
    sample,
    tau_from_theta,
    theta_from_tau,
)
from .empirical import PseudoSample, empirical_copula, kendall_tau_sample, pseudo_observations
from .errors import (
    CopulaFitError,
    DegenerateDataError,
    DomainError,
    FitError,
    InsufficientDataError,
    NumericError,
    ParameterDomainError,
)
from .estimators import (
    HELLINGER,
    KULLBACK_LEIBLER,
    NEYMAN,
    DivergenceKind,
    FitResult,
    alpha_divergence_objective,
    fit_copula,
    mpad_fit,
    mpkld_fit,
    mpl_fit,
    pseudo_loglik,
)
from .gof import GofResult, aic, bootstrap_pvalue, cvm_statistic
from .llpt import llpt_at_sample, llpt_density, nn_bandwidth, probit_transform
from .simstudy import CellReport, StudyConfig, reports_to_csv, run_cell, run_study

__version__ = "0.1.0"
