"""Rokhlin towers for the golden rotation ``T x = x - theta (mod 1)``.

The base of the level-``n`` tower is ``C = [0, eps)``; its floors are
``T^{-i} C = [i theta, i theta + eps) mod 1`` for ``i < n``.  They are
pairwise disjoint exactly when ``eps`` does not exceed the minimal gap of
``{i theta mod 1 : i < n}``.  The floor of ``x`` is the smallest ``i >= 0``
with ``T^i x in C``, or :data:`OUTSIDE`.

Along an orbit ``x_u = T^u x_0`` the floor index drops by one per step
until it reaches 0, after which the orbit either re-enters at floor
``n - 1`` or leaves the tower; so floors along a path are determined by the
visit times ``v`` of the orbit to ``C`` (``floor(x_u) = v - u`` for the next
visit ``v >= u`` if ``v - u < n``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

__all__ = [
    "OUTSIDE",
    "THETA",
    "RotationTower",
    "build_tower",
    "min_gap",
    "min_gap_direct",
    "is_admissible",
    "next_admissible",
    "frac_multiples",
    "floor_index",
    "visit_times",
]

OUTSIDE = -1

with mpmath.workprec(200):
    _THETA_MP = 2 / (1 + mpmath.sqrt(5))
    THETA = float(_THETA_MP)
    # split theta so that w * _TH_HI is exact for w < 2**26
    _TH_HI = math.ldexp(math.floor(math.ldexp(THETA, 26)), -26)
    _TH_LO = float(_THETA_MP - _TH_HI)

# cover a bit less than the minimal gap so half-open floors never touch
_EPS_SHRINK = 1e-9


def _fib_below(n):
    """Fibonacci numbers ``q`` with ``1 <= q < n`` (golden convergent denominators)."""
    out, a, b = [], 1, 2
    while a < n:
        out.append(a)
        a, b = b, a + b
    return out


@lru_cache(maxsize=None)
def min_gap(n: int) -> float:
    """Minimal circular gap of ``{i theta mod 1 : 0 <= i < n}``.

    Every gap is ``||d theta||`` for some ``1 <= d < n`` and by the best
    approximation property the smallest one sits at the largest golden
    convergent denominator below ``n``.
    """
    if n < 2:
        return 1.0
    with mpmath.workprec(200):
        q = _fib_below(n)[-1]
        x = q * _THETA_MP
        return float(abs(x - mpmath.nint(x)))


def min_gap_direct(n: int) -> float:
    """The same gap by sorting the points (reference for ``n`` up to a few million)."""
    if n < 2:
        return 1.0
    pts = np.sort(frac_multiples(n))
    gaps = np.diff(np.concatenate([pts, [pts[0] + 1.0]]))
    return float(gaps.min())


def is_admissible(n: int) -> bool:
    """A tower of height ``n`` can cover more than half the circle."""
    return n >= 2 and n * min_gap(n) * (1 - _EPS_SHRINK) > 0.5


def next_admissible(n: int) -> int:
    n = max(int(n), 2)
    while not is_admissible(n):
        n += 1
    return n


def frac_multiples(W: int, start: int = 0) -> np.ndarray:
    """``w theta mod 1`` for ``start <= w < start + W`` with about 1e-16 absolute error."""
    w = np.arange(start, start + W, dtype=np.float64)
    if start + W > 1 << 26:
        raise ValueError("orbit length beyond 2**26 is not supported")
    hi = np.mod(w * _TH_HI, 1.0)
    return np.mod(hi + w * _TH_LO, 1.0)


@dataclass
class RotationTower:
    n: int
    eps: float
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def coverage(self) -> float:
        return self.n * self.eps

    def floor_base(self, i):
        """Left endpoint of floor ``i``."""
        return np.mod(np.asarray(i) * THETA, 1.0)

    def _sorted(self, W: int):
        tab = self._tables.get(W)
        if tab is None:
            pts = frac_multiples(W)
            order = np.argsort(pts, kind="stable")
            tab = (pts[order], order)
            if len(self._tables) > 3:
                self._tables.clear()
            self._tables[W] = tab
        return tab

    def visits(self, x0: float, W: int) -> np.ndarray:
        """Sorted times ``0 <= w < W`` with ``T^w x0 in C``.

        ``frac(x0 - w theta) < eps`` iff ``frac(w theta)`` lies in the arc
        ``(x0 - eps, x0]`` taken mod 1.
        """
        pts, order = self._sorted(W)
        lo = x0 - self.eps
        if lo >= 0.0:
            a = np.searchsorted(pts, lo, side="right")
            b = np.searchsorted(pts, x0, side="right")
            hit = order[a:b]
        else:
            b = np.searchsorted(pts, x0, side="right")
            a = np.searchsorted(pts, lo + 1.0, side="right")
            hit = np.concatenate([order[:b], order[a:]])
        return np.sort(hit)

    def floors(self, x0: float, length: int) -> np.ndarray:
        """Floor index of ``T^u x0`` for ``u < length`` (``OUTSIDE`` off the tower)."""
        v = self.visits(x0, length + self.n)
        out = np.full(length, OUTSIDE, dtype=np.int64)
        if v.size == 0:
            return out
        u = np.arange(length)
        nxt = v[np.minimum(np.searchsorted(v, u, side="left"), v.size - 1)]
        d = nxt - u
        ok = (d >= 0) & (d < self.n)
        out[ok] = d[ok]
        return out


def build_tower(n: int) -> RotationTower:
    """Tower of height ``n`` with ``eps`` just under the minimal gap."""
    n = int(n)
    if not is_admissible(n):
        raise ValueError(f"height {n} cannot cover more than half the circle")
    return RotationTower(n, min_gap(n) * (1 - _EPS_SHRINK))


def floor_index(x, tower: RotationTower) -> np.ndarray:
    """Floor of each point ``x`` (vectorised) by searching the sorted floor bases."""
    x = np.mod(np.asarray(x, dtype=np.float64), 1.0)
    pts, order = tower._sorted(tower.n)
    # candidate floor: largest base <= x (circularly)
    pos = np.searchsorted(pts, x, side="right") - 1
    base = np.where(pos >= 0, pts[pos], pts[-1] - 1.0)
    cand = order[pos]
    inside = x - base < tower.eps
    return np.where(inside, cand, OUTSIDE).astype(np.int64)


def visit_times(tower: RotationTower, x0: float, W: int) -> np.ndarray:
    return tower.visits(x0, W)
