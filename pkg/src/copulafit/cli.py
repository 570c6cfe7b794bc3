"""Command-line interface: ``copulafit {fit,gof,simulate,spi,droughts}``.

Exit status is 0 on success, 2 for bad input or configuration and 3 when a
fit or numerical step fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import hydro
from .empirical import pseudo_observations
from .errors import (
    CopulaFitError,
    DegenerateDataError,
    DomainError,
    FitError,
    InsufficientDataError,
    NumericError,
    ParameterDomainError,
)
from .estimators import fit_copula, parse_method
from .gof import MIN_BOOTSTRAP, bootstrap_pvalue
from .llpt import DEFAULT_K_FRAC
from .simstudy import (
    DEFAULT_FAMILIES,
    DEFAULT_METHODS,
    DEFAULT_NS,
    DEFAULT_TAUS,
    FamilyConfig,
    StudyConfig,
    StudyError,
    reports_to_csv,
    run_study,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FIT = 3

log = logging.getLogger("copulafit")


class InputError(Exception):
    """Bad command-line input (mapped to exit status 2)."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _open_in(path: str):
    if path == "-":
        return sys.stdin
    try:
        return open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None


def _write_out(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


def read_pairs_csv(fh) -> np.ndarray:
    """Two numeric columns; a non-numeric first row is taken as a header."""
    rows = []
    for lineno, row in enumerate(csv.reader(fh), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if len(row) != 2:
                raise ValueError
            rows.append((float(row[0]), float(row[1])))
        except ValueError:
            if lineno == 1 and not rows:
                continue
            raise InputError(f"row {lineno}: expected two numeric fields, got {','.join(row)!r}") from None
    if not rows:
        raise InputError("no data rows")
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        raise InputError("non-finite value in input")
    return data


def _family(args):
    try:
        fam = FamilyConfig.parse(args.family)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    nu = args.nu if args.nu is not None else fam.nu
    if fam.family.value == "t" and nu is None:
        raise InputError("the t family needs a degrees-of-freedom value (--nu or e.g. --family t4)")
    return fam.family, nu


def _method(text: str) -> str:
    try:
        parse_method(text)
    except (ValueError, CopulaFitError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _jobs_default() -> int:
    raw = os.environ.get("COPULAFIT_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _json_line(d: dict) -> str:
    return json.dumps(d, sort_keys=False) + "\n"


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    family, nu = _family(args)
    with _open_in(args.data) as fh:
        data = read_pairs_csv(fh)
    ps = pseudo_observations(data)
    res = fit_copula(args.method, family, ps, nu=nu, k_frac=args.k_frac)
    _write_out(_json_line(res.as_dict()), args.out)
    if not res.converged:
        print(f"copulafit: {res.method} optimizer did not converge", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


def cmd_gof(args) -> int:
    if args.B < MIN_BOOTSTRAP:
        raise InputError(f"-B must be at least {MIN_BOOTSTRAP}, got {args.B}")
    family, nu = _family(args)
    with _open_in(args.data) as fh:
        data = read_pairs_csv(fh)
    ps = pseudo_observations(data)
    res = bootstrap_pvalue(family, ps, args.method, args.B, args.seed, nu=nu, k_frac=args.k_frac, jobs=args.jobs)
    _write_out(_json_line(res.as_dict()), args.out)
    return EXIT_OK


def _study_config(args) -> StudyConfig:
    settings = {}
    if args.config:
        with _open_in(args.config) as fh:
            try:
                settings = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(settings, dict):
            raise InputError(f"{args.config}: expected a JSON object")
        unknown = set(settings) - {"families", "taus", "ns", "methods", "replications", "k_frac", "master_seed", "margins"}
        if unknown:
            raise InputError(f"{args.config}: unknown keys {sorted(unknown)}")
    overrides = {
        "families": args.families,
        "taus": args.taus,
        "ns": args.ns,
        "methods": args.methods,
        "replications": args.M,
        "k_frac": args.k_frac,
        "master_seed": args.seed,
        "margins": args.margins,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return StudyConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid study configuration: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _study_config(args)
    try:
        reports = run_study(cfg, jobs=args.jobs)
    except StudyError as exc:
        _write_out(reports_to_csv(exc.reports), args.out)
        for msg in exc.aborted:
            print(f"copulafit: aborted cell: {msg}", file=sys.stderr)
        return EXIT_FIT
    _write_out(reports_to_csv(reports), args.out)
    return EXIT_OK


def _spi_from_args(args) -> hydro.SpiSeries:
    with _open_in(args.precip) as fh:
        series = hydro.read_precip_csv(fh)
    return hydro.spi(series, args.timescale)


def cmd_spi(args) -> int:
    _write_out(hydro.write_spi_csv(_spi_from_args(args)), args.out)
    return EXIT_OK


def cmd_droughts(args) -> int:
    if args.from_spi:
        with _open_in(args.precip) as fh:
            s = hydro.read_spi_csv(fh)
    else:
        s = _spi_from_args(args)
    record = hydro.extract_droughts(s)
    if args.pairs is None:
        _write_out(hydro.write_droughts_csv(record, abs_severity=args.abs_severity), args.out)
        return EXIT_OK
    sev_pairs, dur_pairs = hydro.drought_pairs(record, abs_severity=args.abs_severity)
    pairs = sev_pairs if args.pairs == "severity" else dur_pairs
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([args.pairs, "interval"])
    for x, i in pairs:
        w.writerow([int(x) if args.pairs == "duration" else repr(float(x)), int(i)])
    _write_out(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="copulafit", description="Semiparametric copula estimation and drought analysis.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common_fit(sp):
        sp.add_argument("data", help="CSV with two numeric columns ('-' for stdin)")
        sp.add_argument("--family", required=True, help="clayton, gumbel, frank, gaussian, t (or tNU, e.g. t4)")
        sp.add_argument("--nu", type=float, default=None, help="degrees of freedom for the t family")
        sp.add_argument("--method", type=_method, default="mpl", help="mpl, mphd, mpnd, mpkld or mpad:ALPHA")
        sp.add_argument("--k-frac", type=float, default=DEFAULT_K_FRAC, help="LLPT nearest-neighbour fraction")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output file (default stdout)")

    fit = sub.add_parser("fit", help="estimate a copula parameter (JSON line)")
    common_fit(fit)
    fit.set_defaults(func=cmd_fit)

    gof = sub.add_parser("gof", help="Cramer-von Mises bootstrap test and AIC (JSON line)")
    common_fit(gof)
    gof.add_argument("-B", type=int, default=200, help=f"bootstrap replicates (>= {MIN_BOOTSTRAP})")
    gof.add_argument("--jobs", type=int, default=_jobs_default())
    gof.set_defaults(func=cmd_gof)

    sim = sub.add_parser("simulate", help="Monte Carlo bias/MSE study (CSV)")
    sim.add_argument("--config", default=None, help="JSON file with StudyConfig fields")
    sim.add_argument("--families", type=_str_list, default=None, help=f"default {','.join(DEFAULT_FAMILIES)}")
    sim.add_argument("--taus", type=_float_list, default=None, help=f"default {','.join(map(str, DEFAULT_TAUS))}")
    sim.add_argument("--ns", type=_int_list, default=None, help=f"default {','.join(map(str, DEFAULT_NS))}")
    sim.add_argument("--methods", type=_str_list, default=None, help=f"default {','.join(DEFAULT_METHODS)}")
    sim.add_argument("-M", type=int, default=None, help="replications per cell (default 300)")
    sim.add_argument("--k-frac", type=float, default=None)
    sim.add_argument("--seed", type=int, default=None, help="master seed")
    sim.add_argument("--margins", choices=("ranks", "known"), default=None,
                     help="fit on ranks (default) or on the simulated uniforms")
    sim.add_argument("--jobs", type=int, default=_jobs_default())
    sim.add_argument("--out", default=None)
    sim.set_defaults(func=cmd_simulate)

    spi = sub.add_parser("spi", help="Standardized Precipitation Index (CSV)")
    spi.add_argument("precip", help="CSV with header year,month,precip_mm")
    spi.add_argument("--timescale", type=int, default=1)
    spi.add_argument("--out", default=None)
    spi.set_defaults(func=cmd_spi)

    dr = sub.add_parser("droughts", help="drought events or (X, interval) pairs (CSV)")
    dr.add_argument("precip", help="precipitation CSV, or SPI CSV with --from-spi")
    dr.add_argument("--from-spi", action="store_true", help="input is the output of the spi command")
    dr.add_argument("--timescale", type=int, default=1)
    dr.add_argument("--abs-severity", action="store_true", help="report severity as a positive number")
    dr.add_argument("--pairs", choices=("severity", "duration"), default=None,
                    help="emit the two-column pair sample instead of the event table")
    dr.add_argument("--out", default=None)
    dr.set_defaults(func=cmd_droughts)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (InputError, DomainError, ParameterDomainError, InsufficientDataError, DegenerateDataError) as exc:
        print(f"copulafit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, NumericError, CopulaFitError) as exc:
        print(f"copulafit: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
