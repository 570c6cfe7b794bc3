"""Monte Carlo comparison of copula estimators: bias, MSE and relative MSE.

For every cell (family, tau, n) the harness draws M samples, converts each
to pseudo-observations, computes one LLPT density estimate per sample (shared
by all divergence-based methods) and fits every configured method.

With ``margins="known"`` the simulated uniforms are used directly instead of
their ranks.  This is a diagnostic: rank-based estimates carry extra
variability that grows with the strength of dependence.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .copulas import CopulaFamily, CopulaSpec, sample, theta_from_tau
from .empirical import PseudoSample, pseudo_observations
from .errors import CopulaFitError, DomainError
from .estimators import DivergenceKind, mpad_fit, mpl_fit, parse_method, mpkld_fit
from .llpt import DEFAULT_K_FRAC, llpt_at_sample

__all__ = [
    "FamilyConfig",
    "StudyConfig",
    "CellReport",
    "CellAborted",
    "StudyError",
    "replicate_seed",
    "summarize",
    "run_cell",
    "run_study",
    "reports_to_csv",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("family", "tau", "n", "method", "bias", "mse", "rmse_pct", "failures")
DEFAULT_TAUS = (0.1, 0.2, 0.4, 0.6, 0.8)
DEFAULT_NS = (30, 75, 150)
DEFAULT_METHODS = ("MPL", "MPHD", "MPND")
MAX_FAILURE_FRACTION = 0.05
MARGINS = ("ranks", "known")


class CellAborted(CopulaFitError):
    """Too many replicate fits failed in one cell."""


class StudyError(CopulaFitError):
    """One or more cells of a study were aborted."""

    def __init__(self, message: str, reports: list, aborted: list):
        super().__init__(message)
        self.reports = reports
        self.aborted = aborted


@dataclass(frozen=True)
class FamilyConfig:
    """A family as used in the study grid; ``label`` is e.g. ``clayton`` or ``t2``."""

    family: CopulaFamily
    nu: Optional[float] = None

    @classmethod
    def parse(cls, text: "str | FamilyConfig") -> "FamilyConfig":
        if isinstance(text, FamilyConfig):
            return text
        key = str(text).strip().lower()
        for sep in (":", "="):
            key = key.replace(f"t{sep}", "t")
        if key.startswith("t") and key[1:].replace(".", "", 1).isdigit():
            return cls(CopulaFamily.STUDENT_T, float(key[1:]))
        return cls(CopulaFamily.parse(key))

    @property
    def label(self) -> str:
        if self.family is CopulaFamily.STUDENT_T:
            return f"t{self.nu:g}"
        return self.family.value


DEFAULT_FAMILIES = ("clayton", "gumbel", "frank", "gaussian", "t2")


@dataclass
class StudyConfig:
    families: Sequence = DEFAULT_FAMILIES
    taus: Sequence[float] = DEFAULT_TAUS
    ns: Sequence[int] = DEFAULT_NS
    methods: Sequence[str] = DEFAULT_METHODS
    replications: int = 300
    k_frac: float = DEFAULT_K_FRAC
    master_seed: int = 20240601
    margins: str = "ranks"

    def __post_init__(self):
        if self.margins not in MARGINS:
            raise DomainError(f"margins must be one of {MARGINS}, got {self.margins!r}")
        self.families = [FamilyConfig.parse(f) for f in self.families]
        self.taus = [float(t) for t in self.taus]
        self.ns = [int(n) for n in self.ns]
        self.methods = [_method_label(m) for m in self.methods]
        if self.replications < 2:
            raise DomainError(f"need at least 2 replications, got {self.replications}")
        for fam in self.families:
            for tau in self.taus:
                theta_from_tau(fam.family, tau)  # raises when tau is unattainable
        if any(n < 10 for n in self.ns):
            raise DomainError("sample sizes must be >= 10")


@dataclass(frozen=True)
class CellReport:
    family: str
    tau: float
    n: int
    method: str
    bias: float
    mse: float
    rmse_vs_mpl: Optional[float]
    replicate_failures: int
    theta_true: float = field(default=math.nan, compare=False)
    replications: int = field(default=0, compare=False)

    def row(self) -> dict:
        return {
            "family": self.family,
            "tau": _fmt(self.tau),
            "n": str(self.n),
            "method": self.method,
            "bias": _fmt(self.bias),
            "mse": _fmt(self.mse),
            "rmse_pct": "" if self.rmse_vs_mpl is None else _fmt(self.rmse_vs_mpl),
            "failures": str(self.replicate_failures),
        }


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def _method_label(method) -> str:
    kind = parse_method(method)
    return kind if isinstance(kind, str) else kind.name


def _kind_of(label: str):
    if label == "MPL":
        return "MPL"
    if label == "MPKLD":
        return DivergenceKind(1.0, kl=True)
    if label.startswith("MPAD("):
        return DivergenceKind(float(label[5:-1]))
    return DivergenceKind.parse(label)


def replicate_seed(master_seed: int, family_label: str, tau: float, n: int, r: int) -> np.random.SeedSequence:
    """Seed for replicate ``r`` of a cell: a fixed function of its coordinates."""
    return np.random.SeedSequence(
        [int(master_seed), zlib.crc32(family_label.encode()), int(round(tau * 1_000_000)), int(n), int(r)]
    )


def summarize(theta_hats: Iterable[float], theta_true: float) -> tuple[float, float]:
    """Monte Carlo bias and mean squared error."""
    est = np.asarray(list(theta_hats), dtype=float)
    err = est - theta_true
    return float(np.mean(err)), float(np.mean(err * err))


def relative_rmse(mse_alt: float, mse_mpl: float) -> float:
    """Relative efficiency in percent, ``100 sqrt(MSE(alt) / MSE(MPL))``."""
    return 100.0 * math.sqrt(mse_alt / mse_mpl)


def _one_replicate(fam: FamilyConfig, theta: float, n: int, kinds: dict, k_frac: float, seed,
                   margins: str = "ranks"):
    xy = sample(CopulaSpec(fam.family, theta, fam.nu), n, seed)
    if margins == "known":
        eps = 1e-15
        xy = np.clip(xy, eps, 1.0 - eps)
        ps = PseudoSample(xy[:, 0], xy[:, 1])
    else:
        ps = pseudo_observations(xy)
    chat = None
    out = {}
    for label, kind in kinds.items():
        try:
            if kind == "MPL":
                res = mpl_fit(fam.family, ps, nu=fam.nu)
            elif kind.kl:
                res = mpkld_fit(fam.family, ps, nu=fam.nu)
            else:
                if chat is None:
                    chat = llpt_at_sample(ps, k_frac=k_frac)
                res = mpad_fit(kind, fam.family, ps, chat, nu=fam.nu)
            out[label] = res.theta_hat if res.converged else None
        except CopulaFitError as exc:
            log.debug("replicate fit failed (%s): %s", label, exc)
            out[label] = None
    return out


def run_cell(family, tau: float, n: int, methods: Sequence[str] = DEFAULT_METHODS, M: int = 300,
             seed: int = 0, *, k_frac: float = DEFAULT_K_FRAC, jobs: int = 1,
             margins: str = "ranks") -> list[CellReport]:
    """Simulate one (family, tau, n) cell and report every method."""
    if margins not in MARGINS:
        raise DomainError(f"margins must be one of {MARGINS}, got {margins!r}")
    fam = FamilyConfig.parse(family)
    theta = theta_from_tau(fam.family, tau)
    labels = [_method_label(m) for m in methods]
    kinds = {label: _kind_of(label) for label in labels}
    seeds = [replicate_seed(seed, fam.label, tau, n, r) for r in range(M)]
    if jobs > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs)(
            delayed(_one_replicate)(fam, theta, n, kinds, k_frac, s, margins) for s in seeds
        )
    else:
        results = [_one_replicate(fam, theta, n, kinds, k_frac, s, margins) for s in seeds]

    summaries = {}
    for label in labels:
        values = [r[label] for r in results if r[label] is not None]
        failures = M - len(values)
        if failures > MAX_FAILURE_FRACTION * M:
            raise CellAborted(f"{fam.label} tau={tau} n={n}: {failures}/{M} {label} fits failed")
        summaries[label] = (*summarize(values, theta), failures)

    mse_mpl = summaries["MPL"][1] if "MPL" in summaries else None
    reports = []
    for label in labels:
        bias, mse, failures = summaries[label]
        rel = None
        if label != "MPL" and mse_mpl is not None and mse_mpl > 0:
            rel = relative_rmse(mse, mse_mpl)
        reports.append(CellReport(fam.label, tau, n, label, bias, mse, rel, failures, theta, M))
    return reports


def run_study(cfg: StudyConfig, *, jobs: int = 1) -> list[CellReport]:
    """Run every cell of ``cfg``; aborted cells are collected into a :class:`StudyError`."""
    reports: list[CellReport] = []
    aborted: list[str] = []
    cells = [(f, t, n) for f in cfg.families for t in cfg.taus for n in cfg.ns]
    for i, (fam, tau, n) in enumerate(cells, 1):
        log.info("cell %d/%d: %s tau=%g n=%d (M=%d)", i, len(cells), fam.label, tau, n, cfg.replications)
        try:
            reports.extend(
                run_cell(fam, tau, n, cfg.methods, cfg.replications, cfg.master_seed,
                         k_frac=cfg.k_frac, jobs=jobs, margins=cfg.margins)
            )
        except CellAborted as exc:
            log.warning("%s", exc)
            aborted.append(str(exc))
    if aborted:
        raise StudyError(f"{len(aborted)} of {len(cells)} cells aborted", reports, aborted)
    return reports


def reports_to_csv(reports: Iterable[CellReport], out=None) -> str:
    """Serialise reports with the fixed column set; returns the CSV text."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        writer.writerow(rep.row())
    text = buf.getvalue()
    if out is not None:
        if isinstance(out, (str, os.PathLike)):
            with open(out, "w", newline="") as fh:
                fh.write(text)
        else:
            out.write(text)
    return text
