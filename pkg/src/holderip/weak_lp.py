"""Weak-L^p quasi-norm, the equivalent norm N_p, and related finite checks.

Functions on a probability space are represented either by a finite
sample with equal masses or by a :class:`SimpleFunction` (distinct
non-negative values with their masses).  Every quantity here is computed
exactly from the decreasing rearrangement.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimpleFunction",
    "TailProfile",
    "kappa",
    "weak_norm_exact",
    "simple_weak_bound",
    "np_norm",
    "tail_profile",
    "conditional_coarsen",
    "quasi_norm_pair",
]

_MASS_TOL = 1e-12


@dataclass(frozen=True)
class SimpleFunction:
    """``sum_i a_i 1_{A_i}`` with ``a_0 > a_1 > ... >= 0`` and ``sum mu(A_i) <= 1``."""

    values: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64).ravel()
        m = np.asarray(self.masses, dtype=np.float64).ravel()
        if a.shape != m.shape or a.size == 0:
            raise ValueError("values and masses must be nonempty and of equal length")
        if np.any(a < 0) or np.any(np.diff(a) >= 0):
            raise ValueError("values must be non-negative and strictly decreasing")
        if np.any(m < 0) or m.sum() > 1 + _MASS_TOL:
            raise ValueError("masses must be non-negative with total at most 1")
        object.__setattr__(self, "values", a)
        object.__setattr__(self, "masses", m)

    @classmethod
    def from_atoms(cls, values, masses) -> "SimpleFunction":
        """Sort by decreasing ``|value|`` and merge equal values."""
        a = np.abs(np.asarray(values, dtype=np.float64).ravel())
        m = np.asarray(masses, dtype=np.float64).ravel()
        if a.shape != m.shape or a.size == 0:
            raise ValueError("values and masses must be nonempty and of equal length")
        uniq, inv = np.unique(a, return_inverse=True)
        merged = np.bincount(inv, weights=m, minlength=uniq.size)
        return cls(uniq[::-1].copy(), merged[::-1].copy())

    @classmethod
    def from_sample(cls, x) -> "SimpleFunction":
        """Empirical law of ``|x|``: each observation carries mass ``1/len(x)``."""
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            raise ValueError("empty sample")
        return cls.from_atoms(x, np.full(x.size, 1.0 / x.size))

    @property
    def atoms(self):
        return list(zip(self.values.tolist(), self.masses.tolist()))

    def mean(self) -> float:
        return float(np.dot(self.values, self.masses))


@dataclass(frozen=True)
class TailProfile:
    p: float
    grid: np.ndarray
    values: np.ndarray
    sup_estimate: float


def kappa(p: float) -> float:
    """Constant in ``N_p <= kappa_p ||.||_{p,inf}``: integrating ``min(t**-p, mu(A))`` gives ``p/(p-1)``."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    return p / (p - 1.0)


def _check_p(p, lower=0.0):
    if not p > lower:
        raise ValueError(f"p must exceed {lower:g}")


def _as_simple(f) -> SimpleFunction:
    return f if isinstance(f, SimpleFunction) else SimpleFunction.from_sample(f)


def simple_weak_bound(f: SimpleFunction, p: float) -> float:
    """``max_j a_j**p * sum_{i <= j} mu_i``, the majorant of ``||f||_{p,inf}**p`` for simple ``f``."""
    _check_p(p)
    f = _as_simple(f)
    return float(np.max(f.values**p * np.cumsum(f.masses)))


def weak_norm_exact(f: SimpleFunction, p: float) -> float:
    """``(sup_t t**p mu{|f| > t})**(1/p)``.

    The tail is a step function constant on ``[a_{j+1}, a_j)``, so the sup is
    the limit as ``t`` rises to some ``a_j``.
    """
    _check_p(p)
    f = _as_simple(f)
    return float(np.max(f.values**p * np.cumsum(f.masses))) ** (1.0 / p)


def np_norm(f, p: float) -> float:
    """``N_p(f) = sup_A mu(A)**(1/p - 1) E[|f| 1_A]``.

    For fixed ``mu(A) = s`` the best ``A`` collects the largest values, giving
    the concave piecewise-linear ``F(s)``.  On each linear piece
    ``s**(1/p-1) F(s)`` has only an interior minimum, so the sup is attained
    at a breakpoint, i.e. on a super-level set.
    """
    _check_p(p, 1.0)
    f = _as_simple(f)
    s = np.cumsum(f.masses)
    F = np.cumsum(f.values * f.masses)
    keep = s > 0
    if not keep.any():
        return 0.0
    return float(np.max(s[keep] ** (1.0 / p - 1.0) * F[keep]))


def tail_profile(sample, p: float, grid_size: int = 64) -> TailProfile:
    """``t**p * P{|f| > t}`` on a log grid from the median of ``|f|`` to its maximum."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    x = np.abs(np.asarray(sample, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    top = float(x.max())
    if top == 0.0:
        grid = np.zeros(grid_size)
        return TailProfile(float(p), grid, np.zeros(grid_size), 0.0)
    lo = float(np.quantile(x, 0.5))
    if lo <= 0.0:
        lo = float(x[x > 0].min())
    if lo >= top:
        lo = top / 2.0
    grid = np.geomspace(lo, top, grid_size)
    xs = np.sort(x)
    exceed = (xs.size - np.searchsorted(xs, grid, side="right")) / xs.size
    values = grid**p * exceed
    return TailProfile(float(p), grid, values, float(values.max()))


def conditional_coarsen(f, groups, masses=None) -> SimpleFunction:
    """Conditional expectation of ``f`` on the sigma-algebra generated by ``groups``.

    ``f`` is a :class:`SimpleFunction` (its atoms in stored order) or an
    array of cell values with ``masses``.  ``groups`` lists atom indices;
    each group becomes one cell carrying the mass-weighted average.
    """
    if isinstance(f, SimpleFunction):
        vals, mass = f.values, f.masses
    else:
        vals = np.asarray(f, dtype=np.float64).ravel()
        if masses is None:
            raise ValueError("masses are required for array input")
        mass = np.asarray(masses, dtype=np.float64).ravel()
    seen = np.zeros(vals.size, dtype=int)
    out_v, out_m = [], []
    for grp in groups:
        idx = np.asarray(list(grp), dtype=np.int64)
        if idx.size == 0:
            raise ValueError("empty group")
        seen[idx] += 1
        m = float(mass[idx].sum())
        out_m.append(m)
        out_v.append(float(np.dot(vals[idx], mass[idx]) / m) if m > 0 else 0.0)
    if np.any(seen != 1):
        raise ValueError("groups must cover every atom exactly once")
    return SimpleFunction.from_atoms(out_v, out_m)


def quasi_norm_pair(p: float, resolution: int):
    """Cell values of ``x**(-1/p)`` and its mirror on ``resolution`` equal cells.

    Each function takes its cell minimum (right endpoint for ``f``), so both
    have weak norm exactly 1 while their sum is at least about
    ``2**(1 + 1/p)`` everywhere.
    """
    _check_p(p)
    k = np.arange(1, resolution + 1, dtype=np.float64)
    f = (resolution / k) ** (1.0 / p)
    return f, f[::-1].copy()
