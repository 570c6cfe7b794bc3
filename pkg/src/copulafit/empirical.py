"""Rank-based pseudo-observations, the empirical copula and sample Kendall's tau."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateDataError, DomainError, InsufficientDataError

__all__ = ["PseudoSample", "pseudo_observations", "empirical_copula", "kendall_tau_sample"]


@dataclass(frozen=True)
class PseudoSample:
    """Rescaled ranks ``(u_i, v_i) = (R_i, S_i) / (n + 1)`` inside ``(0, 1)^2``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != v.shape or u.ndim != 1:
            raise DomainError("pseudo-sample margins must be 1-d arrays of equal length")
        if np.any((u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)):
            raise DomainError("pseudo-observations must lie in the open unit square")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def __len__(self) -> int:
        return self.n

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])

    def swapped(self) -> "PseudoSample":
        return PseudoSample(self.v, self.u)


def _raw_xy(x, y=None):
    if y is None:
        arr = np.asarray(x, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DomainError(f"expected an (n, 2) array of pairs, got shape {arr.shape}")
        x, y = arr[:, 0], arr[:, 1]
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DomainError("x and y must have the same length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("raw sample contains non-finite values")
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {x.size}")
    return x, y


def pseudo_observations(x, y=None) -> PseudoSample:
    """Map a raw bivariate sample to pseudo-observations.

    Accepts either an ``(n, 2)`` array or two 1-d arrays.  Ties receive
    mid-ranks.
    """
    x, y = _raw_xy(x, y)
    n1 = x.size + 1.0
    return PseudoSample(stats.rankdata(x) / n1, stats.rankdata(y) / n1)


def empirical_copula(ps: PseudoSample, u, v):
    """Empirical copula ``C_n(u, v) = (1/n) #{i : u_i <= u, v_i <= v}``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)):
        raise DomainError("empirical copula arguments must lie in [0, 1]^2")
    flat_u, flat_v = u.ravel(), v.ravel()
    out = np.empty(flat_u.size)
    # Chunked to bound the (m, n) comparison matrix.
    step = max(1, 2_000_000 // max(ps.n, 1))
    for lo in range(0, flat_u.size, step):
        cu = flat_u[lo:lo + step, None]
        cv = flat_v[lo:lo + step, None]
        out[lo:lo + step] = np.mean((ps.u[None, :] <= cu) & (ps.v[None, :] <= cv), axis=1)
    out = out.reshape(u.shape)
    return out[()] if out.ndim == 0 else out


def kendall_tau_sample(x, y=None) -> float:
    """Sample Kendall's tau (tau-b when ties are present), O(n log n)."""
    x, y = _raw_xy(x, y)
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateDataError("Kendall's tau is undefined when a margin is constant")
    return float(stats.kendalltau(x, y, variant="b").statistic)
