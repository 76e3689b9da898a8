"""Polygonal partial-sum paths and their Hölder / Schauder analysis.

A path is stored by its unscaled vertex values ``S_0 = 0, S_1, ..., S_n`` at
abscissae ``i/n`` together with a multiplier ``scale``.  All norms are exact
for such paths: the Schauder level scan stops with a certified bound on the
remaining levels, and the Hölder modulus is a maximum over finitely many
candidate pairs.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from ._kernels import MAX_LEVEL, max_pair_ratio, schauder_sup

__all__ = [
    "HolderParams",
    "PolygonalPath",
    "SchauderCoeffs",
    "build_polygonal",
    "schauder_coefficients",
    "sequential_norm",
    "holder_modulus",
    "vertex_norm",
    "tightness_statistic",
    "increment_seq_bound",
    "increment_levels",
    "increment_level_split",
    "grid_coefficients",
    "reconstruct",
]


@dataclass(frozen=True)
class HolderParams:
    """Moment index ``p > 2`` and the matching exponent ``alpha = 1/2 - 1/p``."""

    p: float

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p}")

    @property
    def alpha(self) -> float:
        return 0.5 - 1.0 / self.p

    @classmethod
    def from_alpha(cls, alpha: float) -> "HolderParams":
        if not 0 < alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
        return cls(1.0 / (0.5 - alpha))


@dataclass(frozen=True)
class PolygonalPath:
    """Piecewise-linear path through ``(i/n, scale * S_i)``."""

    n: int
    vertices: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.n + 1 or self.n < 1:
            raise ValueError("vertices must hold n + 1 values with n >= 1")
        if v[0] != 0.0:
            raise ValueError("vertices[0] must be 0")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def values(self) -> np.ndarray:
        """Scaled vertex values ``scale * S_i``."""
        return self.scale * self.vertices

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.vertices)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any((t < 0) | (t > 1)):
            raise ValueError("evaluation points must lie in [0, 1]")
        # interpolate in index space so vertices are hit exactly
        return self.scale * np.interp(t * self.n, np.arange(self.n + 1), self.vertices)


def build_polygonal(x, scale: float | None = None) -> PolygonalPath:
    """Polygonal line of the partial sums of ``x``; ``scale`` defaults to ``n**-0.5``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.shape[0]
    if n == 0:
        raise ValueError("need at least one increment")
    if scale is None:
        scale = 1.0 / math.sqrt(n)
    S = np.empty(n + 1)
    S[0] = 0.0
    np.cumsum(x, out=S[1:])
    return PolygonalPath(n, S, float(scale))


# ---------------------------------------------------------------------------
# Schauder coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SchauderCoeffs:
    """Coefficients ``lambda_r`` for ``r = (2k+1) 2**-j`` on levels ``1..J_trunc``.

    Level 0 holds ``(x(0), x(1))``.  Level ``j >= 1`` is a pair ``(k, lam)``
    listing every potentially nonzero coefficient; missing ``k`` are zero.
    ``truncation_bound`` majorises ``2**(j alpha) max |lambda_r|`` for all
    ``j > J_trunc``.
    """

    alpha: float
    levels: list = field(repr=False)
    J_trunc: int
    truncation_bound: float

    def level(self, j: int):
        return self.levels[j]

    def positions(self, j: int) -> np.ndarray:
        if j == 0:
            return np.array([0.0, 1.0])
        k = self.levels[j][0]
        return np.array([math.ldexp(2 * int(q) + 1, -j) for q in k])

    def coefficient(self, j: int, k: int) -> float:
        if j == 0:
            return float(self.levels[0][k])
        if j > self.J_trunc:
            raise IndexError("level beyond truncation")
        ks, lam = self.levels[j]
        hit = np.nonzero(ks == k)[0]
        return float(lam[hit[0]]) if hit.size else 0.0

    def level_max(self, j: int) -> float:
        lam = self.levels[0] if j == 0 else self.levels[j][1]
        return float(np.abs(lam).max()) if len(lam) else 0.0


def _kinks(S: np.ndarray):
    n = S.shape[0] - 1
    if n < 2:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    d = n * np.diff(np.diff(S))
    idx = np.nonzero(d)[0] + 1
    return idx.astype(np.int64), d[idx - 1]


def _level_table(S: np.ndarray, kink_idx, kink_val, j: int):
    """Exact coefficients on level ``j`` from the slope jumps of the path."""
    n = S.shape[0] - 1
    h = math.ldexp(1.0, -j)
    ncell = 1 << (j - 1) if j <= 62 else None
    rem = np.array([(int(i) << (j - 1)) % n for i in kink_idx], dtype=np.int64)
    live = rem != 0
    weight = (n - np.abs(2 * rem - n)).astype(np.float64)
    contrib = -0.5 * h / n * kink_val * weight
    if ncell is not None and ncell <= 2 * n:
        # dense level: one entry per dyadic cell
        cell = np.array([(int(i) << (j - 1)) // n for i in kink_idx], dtype=np.int64)
        lam = np.bincount(cell[live], weights=contrib[live], minlength=ncell)
        return np.arange(ncell, dtype=np.int64), lam
    # sparse level: at most one vertex per cell
    ks = [(int(i) << (j - 1)) // n for i in kink_idx[live]]
    dtype = np.int64 if j <= 62 else object
    return np.array(ks, dtype=dtype), contrib[live]


def schauder_coefficients(path: PolygonalPath, alpha: float, depth: int | None = None) -> SchauderCoeffs:
    """Exact Schauder coefficients down to a certified truncation level.

    ``depth`` forces at least that many levels to be tabulated (useful for
    reconstructing non-dyadic paths to a prescribed accuracy).
    """
    S = path.values
    _, J, tail = schauder_sup(S, alpha)
    if depth is not None and depth > J:
        J = min(int(depth), MAX_LEVEL)
        tail = _tail_after(S, alpha, J)
    kink_idx, kink_val = _kinks(S)
    levels = [np.array([S[0], S[-1]])]
    for j in range(1, J + 1):
        levels.append(_level_table(S, kink_idx, kink_val, j))
    return SchauderCoeffs(float(alpha), levels, J, tail)


def _tail_after(S, alpha, J):
    n = S.shape[0] - 1
    lip = float(np.abs(np.diff(S)).max()) * n
    _, kv = _kinks(S)
    jstar = max(1, math.ceil(math.log2(n)) + 1) if n > 1 else 1
    if kv.size == 0:
        return 0.0
    const = lip
    if J + 1 >= jstar:
        const = min(lip, 0.5 * float(np.abs(kv).max()))
    return const * 2.0 ** ((J + 1) * (alpha - 1.0))


def sequential_norm(coeffs: SchauderCoeffs) -> float:
    """``sup_j 2**(j alpha) max_r |lambda_r|``; exact because the tail is certified smaller."""
    best = 0.0
    for j in range(coeffs.J_trunc + 1):
        best = max(best, 2.0 ** (j * coeffs.alpha) * coeffs.level_max(j))
    return best


def reconstruct(coeffs: SchauderCoeffs, t, upto: int | None = None) -> np.ndarray:
    """Partial Schauder sum through level ``upto`` (default ``J_trunc``) evaluated at ``t``."""
    t = np.asarray(t, dtype=np.float64)
    order = np.argsort(t, kind="stable")
    ts = t[order]
    lam0, lam1 = coeffs.levels[0]
    out = lam0 * (1.0 - ts) + lam1 * ts
    J = coeffs.J_trunc if upto is None else min(upto, coeffs.J_trunc)
    for j in range(1, J + 1):
        h = math.ldexp(1.0, -j)
        ks, lam = coeffs.levels[j]
        nz = np.nonzero(lam)[0]
        if nz.size == 0:
            continue
        r = np.array([math.ldexp(2 * int(ks[q]) + 1, -j) for q in nz])
        lo = np.searchsorted(ts, r - h, side="right")
        hi = np.searchsorted(ts, r + h, side="left")
        for q, a, b, c in zip(nz, lo, hi, r):
            if b > a:
                out[a:b] += lam[q] * (1.0 - np.abs(ts[a:b] - c) / h)
    res = np.empty_like(out)
    res[order] = out
    return res


def tightness_statistic(path: PolygonalPath, alpha: float, J: int) -> float:
    """``sup_{j >= J} 2**(j alpha) max_r |lambda_r|`` with the same exact stopping rule."""
    if J < 0:
        raise ValueError("J must be non-negative")
    return schauder_sup(path.values, alpha, j_start=int(J))[0]


# ---------------------------------------------------------------------------
# Hölder modulus over vertex pairs
# ---------------------------------------------------------------------------


def _pair_max(path: PolygonalPath, alpha: float, max_gap: int) -> float:
    raw = max_pair_ratio(path.values, alpha, max_gap=max_gap)
    return raw * float(path.n) ** alpha


def vertex_norm(path: PolygonalPath, alpha: float) -> float:
    """``max_{i<j} |x(j/n) - x(i/n)| / ((j - i)/n)**alpha``, i.e. the Hölder norm of the path."""
    return _pair_max(path, alpha, path.n)


def holder_modulus(path: PolygonalPath, alpha: float, delta: float) -> float:
    """``w_alpha(x, delta) = sup_{0 < t - s <= delta} |x(t) - x(s)| / (t - s)**alpha``.

    The sup is attained at a corner of the feasible region of some pair of
    segments: either two vertices, or a vertex and the point at distance
    exactly ``delta`` from it.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = path.n
    m = min(float(delta), 1.0) * n
    g = round(m)
    on_grid = abs(m - g) <= 1e-9 * max(1.0, m)
    best = _pair_max(path, alpha, int(g) if on_grid else int(math.floor(m)))
    if on_grid or delta >= 1.0:
        return best
    # vertex paired with the point at distance delta on either side
    d = float(delta)
    grid = np.arange(n + 1)
    v = path.values
    u = grid / n
    fwd = u + d <= 1.0
    if fwd.any():
        far = path(u[fwd] + d)
        best = max(best, float(np.abs(far - v[fwd]).max()) / d**alpha)
    bwd = u - d >= 0.0
    if bwd.any():
        far = path(u[bwd] - d)
        best = max(best, float(np.abs(v[bwd] - far).max()) / d**alpha)
    return best


def increment_levels(path: PolygonalPath, alpha: float) -> np.ndarray:
    """``2**(alpha j) max_k |x((k+1) 2**-j) - x(k 2**-j)|`` for ``j = 1..ceil(log2 2n)``.

    Once ``2**j >= 2n`` every segment contains a full dyadic interval, so the
    level maximum is ``L 2**-j`` with ``L`` the steepest slope and the
    weighted values decrease; later levels never exceed the last entry.
    """
    n = path.n
    j_last = max(1, math.ceil(math.log2(2 * n)))
    out = np.empty(j_last)
    for j in range(1, j_last + 1):
        x = path(np.arange((1 << j) + 1) / (1 << j))
        out[j - 1] = 2.0 ** (alpha * j) * float(np.abs(np.diff(x)).max())
    return out


def increment_seq_bound(path: PolygonalPath, alpha: float) -> float:
    """``sup_{j >= 1} 2**(alpha j) max_k |x((k+1) 2**-j) - x(k 2**-j)|``."""
    return float(increment_levels(path, alpha).max())


def increment_level_split(path: PolygonalPath, alpha: float):
    """The same supremum split into levels with ``2**j <= n`` and ``2**j > n``."""
    lv = increment_levels(path, alpha)
    j = np.arange(1, lv.size + 1)
    low = lv[(1 << j) <= path.n]
    high = lv[(1 << j) > path.n]
    return (float(low.max()) if low.size else 0.0), (float(high.max()) if high.size else 0.0)


def grid_coefficients(path: PolygonalPath, j: int):
    """Exact rational path values on the grid ``k 2**-j`` and the level-``j`` coefficients.

    Returns ``(values, lam)`` where ``values[k] = x(k 2**-j)`` for
    ``k = 0..2**j`` and ``lam[k] = x(r) - (x(r - h) + x(r + h)) / 2`` for
    ``r = (2k+1) h``, ``h = 2**-j``.  The stored vertices and scale are
    taken as exact binary fractions, so nothing is rounded.
    """
    if j < 1:
        raise ValueError("j must be at least 1")
    n = path.n
    S = [Fraction(float(v)) for v in path.vertices]
    c = Fraction(path.scale)
    m = 1 << j
    values = []
    for k in range(m + 1):
        i, rem = divmod(k * n, m)
        v = S[i] if rem == 0 else S[i] + Fraction(rem, m) * (S[i + 1] - S[i])
        values.append(c * v)
    lam = [values[2 * k + 1] - (values[2 * k] + values[2 * k + 2]) / 2 for k in range(m // 2)]
    return values, lam
