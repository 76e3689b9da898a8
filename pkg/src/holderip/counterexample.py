"""Tower counter-example: a stationary martingale difference ``m = g f`` in
weak-``L^p`` whose polygonal partial-sum process is not tight in the
Hölder space of exponent ``1/2 - 1/p``.

``f = sum_l f_l`` where ``f_l`` lives on a Rokhlin tower of height ``n_l``
for the golden rotation and is a staircase in the floor index ``i``:

* ``i < 2**I``: ``(n/2**I)**(1/p) / L``;
* ``2**(I+j) <= i < 2**(I+j+1)``, ``0 <= j < J``: ``(n/2**(I+j))**(1/p) / L``;
* ``i >= k = 2**(I+J)``: 0.

``g`` is an independent Rademacher sequence.  Everything along a path is
computed from visit times of the orbit to the tower bases, so a replica
costs ``O(n)`` regardless of the level heights.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ._kernels import increment_ratio
from .schedule import (
    CounterExampleSchedule,
    InfeasibleScheduleError,
    Level,
    ValidationReport,
    annulus_event_probability,
    annulus_gauss_value,
    annulus_threshold,
    build_schedule,
    static_bound_exact,
    gauss_two_sided_tail,
    schedule_from_text,
    schedule_to_text,
    static_bound,
    validate_schedule,
)
from .tower import OUTSIDE, RotationTower, build_tower
from .weak_lp import SimpleFunction, kappa

__all__ = [
    "CounterExampleSchedule",
    "InfeasibleScheduleError",
    "Level",
    "ValidationReport",
    "build_schedule",
    "validate_schedule",
    "schedule_to_text",
    "schedule_from_text",
    "kappa_prime",
    "f_table",
    "f_l_value",
    "f_l_simple",
    "f_l_weak_power_exact",
    "main_part_closed_form",
    "level_tower",
    "eval_m_path",
    "ratio_statistic",
    "LevelSample",
    "simulate_level",
    "ChainRow",
    "ChainReport",
    "lower_bound_chain",
    "ModulusReport",
    "modulus_event_prob",
    "product_difference",
    "power_lower_bound",
    "MAX_PATH_LENGTH",
]

MAX_PATH_LENGTH = 5 * 10**7


def kappa_prime(p: float) -> float:
    """Constant in ``||f_l||_{p,inf} <= kappa'_p / L_l``: the norm ``N_p`` of base and annuli separately."""
    return kappa(p) * (1.0 + 2.0 ** (1.0 / p))


def _explicit(s: CounterExampleSchedule, l: int) -> Level:
    lv = s.level(l)
    if not lv.is_explicit:
        raise ValueError(f"level {l} has n = 2**{lv.n_exp}; only explicit levels can be evaluated")
    return lv


# ---------------------------------------------------------------------------
# the tower function f_l
# ---------------------------------------------------------------------------


def f_table(s: CounterExampleSchedule, l: int) -> np.ndarray:
    """Values of ``f_l`` on floors ``0..k_l - 1`` (zero above)."""
    lv = _explicit(s, l)
    L = float(lv.L)
    out = np.empty(lv.k)
    out[: 1 << lv.I] = (lv.n / (1 << lv.I)) ** (1.0 / s.p) / L
    for j in range(lv.J):
        lo, hi = 1 << (lv.I + j), 1 << (lv.I + j + 1)
        out[lo:hi] = (lv.n / lo) ** (1.0 / s.p) / L
    return out


def f_l_value(i: int, s: CounterExampleSchedule, l: int) -> float:
    """``f_l`` on floor ``i`` (``OUTSIDE`` or ``i >= k_l`` give 0)."""
    lv = _explicit(s, l)
    if i == OUTSIDE or i >= lv.k:
        return 0.0
    if i < 0:
        raise ValueError("floor index must be non-negative or OUTSIDE")
    e = max(i.bit_length() - 1, lv.I)
    return (lv.n / (1 << e)) ** (1.0 / s.p) / float(lv.L)


def _atoms(lv: Level, main_only: bool):
    """``(n/2**e, number of floors)`` in decreasing order of value."""
    out = []
    for j in range(lv.J):
        cnt = 1 << (lv.I + j)
        if j == 0 and not main_only:
            cnt += 1 << lv.I
        out.append((Fraction(lv.n, 1 << (lv.I + j)), cnt))
    return out


def f_l_simple(s: CounterExampleSchedule, l: int, floor_mass=None, main_only=False) -> SimpleFunction:
    """``f_l`` as a simple function; each floor carries ``floor_mass`` (the tower ``eps`` by default).

    ``main_only`` drops the base block ``i < 2**I``, leaving the annuli.
    """
    lv = _explicit(s, l)
    mu = level_tower(lv.n).eps if floor_mass is None else float(floor_mass)
    atoms = _atoms(lv, main_only)
    vals = [float(a) ** (1.0 / s.p) / float(lv.L) for a, _ in atoms]
    return SimpleFunction(vals, [c * mu for _, c in atoms])


def f_l_weak_power_exact(s: CounterExampleSchedule, l: int, floor_mass, main_only=False) -> Fraction:
    """``L_l**p ||f_l||_{p,inf}**p`` in exact rational arithmetic.

    ``a**p`` is rational for every atom once the common factor ``L**-p`` is
    pulled out, and the weak norm of a simple function is
    ``max_j a_j**p mu{|f| >= a_j}``.
    """
    lv = _explicit(s, l)
    mu = Fraction(floor_mass)
    best, cum = Fraction(0), Fraction(0)
    for ap, cnt in _atoms(lv, main_only):
        cum += cnt * mu
        best = max(best, ap * cum)
    return best


def main_part_closed_form(J: int) -> Fraction:
    """``max_{j<J} sum_{i<=j} 2**(i-j)``, the annuli value when each floor has mass ``1/n``."""
    return max(sum(Fraction(1, 1 << (j - i)) for i in range(j + 1)) for j in range(J))


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def level_tower(n: int) -> RotationTower:
    return build_tower(n)


def _level_paths(s, levels, n, rng, starts=None):
    """Per-level ``f_l`` along ``u = 0..n-1`` and the shared Rademacher ``g``.

    Starting points are drawn in level order, then ``g`` on the support of
    ``f``; ``g`` off the support never enters ``m`` so drawing it there is
    unnecessary.
    """
    if n > MAX_PATH_LENGTH:
        raise MemoryError(f"path length {n} exceeds the budget {MAX_PATH_LENGTH}")
    comps = {}
    for l in levels:
        lv = _explicit(s, l)
        tower = level_tower(lv.n)
        x0 = float(rng.random())
        if starts is not None and l in starts:
            x0 = float(starts[l])
        k = lv.k
        fl = np.zeros(n)
        v = tower.visits(x0, n + k)
        if v.size:
            u = v[:, None] - np.arange(k)[None, :]
            ok = (u >= 0) & (u < n)
            # visits are at least n_l > k apart, so the u's never collide
            fl[u[ok]] = np.broadcast_to(f_table(s, l), u.shape)[ok]
        comps[l] = fl
    support = np.zeros(n, dtype=bool)
    for fl in comps.values():
        support |= fl != 0
    g = np.zeros(n)
    idx = np.flatnonzero(support)
    g[idx] = 2.0 * rng.integers(0, 2, size=idx.size) - 1.0
    return comps, g


def eval_m_path(s: CounterExampleSchedule, active, n: int, rng, starts=None):
    """``(m, f, g)`` along ``u = 0..n-1`` with ``f = sum_{l in active} f_l``.

    ``g`` is returned only on the support of ``f`` (zero elsewhere).
    ``starts`` optionally maps a level to a fixed starting point ``x0``
    (the draw is still consumed so the stream does not shift).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    comps, g = _level_paths(s, sorted(active), int(n), rng, starts)
    f = np.zeros(int(n))
    for fl in comps.values():
        f += fl
    return g * f, f, g


def ratio_statistic(y, n: int, k: int, alpha: float, floor: float = 0.0) -> float:
    """``max_{1<=u<=n-k, 1<=v<=k} |S_{u+v} - S_u| / v**alpha`` with ``S_u = sum_{t<u} y_t`` (unscaled).

    Returns ``floor`` if nothing exceeds it.
    """
    return increment_ratio(np.asarray(y, dtype=np.float64)[:n], alpha, k, 1, n - k, floor)


# ---------------------------------------------------------------------------
# Monte Carlo at one level
# ---------------------------------------------------------------------------


@dataclass
class LevelSample:
    """Per-replica outcomes at level ``l`` over ``u < n_l``.

    ``single``: the ``g f_l`` statistic reaches 1; ``event``: the ``m``
    statistic reaches 1/2; ``mprime``: the ``m'_l`` statistic (exact when
    above ``min(1/2, static bound)``, else that floor); ``active``: some
    ``g f_i``, ``i > l``, is nonzero at a time ``1..n_l``; ``control``: the
    iid Gaussian statistic reaches 1/2.
    """

    level: int
    seed: int
    single: np.ndarray
    event: np.ndarray
    mprime: np.ndarray
    mprime_floor: float
    active: np.ndarray
    control: np.ndarray | None


def _replica(s, l, seed, r, control):
    lv = _explicit(s, l)
    n, k, p, alpha = lv.n, lv.k, s.p, s.alpha
    scale = n ** (1.0 / p)
    rng = np.random.default_rng(np.random.SeedSequence([seed, l, r, 0]))
    levels = list(range(1, len(s) + 1))
    # one extra step so time n_l is covered for the upper levels
    comps, g = _level_paths(s, levels, n + 1, rng)
    single = ratio_statistic(g * comps[l], n, k, alpha, np.nextafter(scale, 0)) >= scale
    f = sum(comps.values())
    half = 0.5 * scale
    event = ratio_statistic(g * f, n, k, alpha, np.nextafter(half, 0)) >= half
    lower = [comps[i] for i in levels if i < l]
    mfloor = min(0.5, float(static_bound(s, l))) * scale
    if lower:
        mp = ratio_statistic(g * sum(lower), n, k, alpha, mfloor) / scale
    else:
        mp = 0.0
    upper = [comps[i] for i in levels if i > l]
    active = bool(upper) and bool(np.any(sum(upper)[1 : n + 1] != 0))
    ctrl = None
    if control:
        grng = np.random.default_rng(np.random.SeedSequence([seed, l, r, 1]))
        z = grng.standard_normal(n)
        ctrl = ratio_statistic(z, n, k, alpha, np.nextafter(half, 0)) >= half
    return single, event, mp, active, ctrl


def simulate_level(
    s: CounterExampleSchedule, l: int, replicas: int, seed: int = 0, control: bool = True, workers: int = 1
) -> LevelSample:
    """Run ``replicas`` independent replicas; results do not depend on ``workers``."""
    if replicas < 1:
        raise ValueError("replicas must be positive")
    lv = _explicit(s, l)
    n = lv.n
    if n + 1 > MAX_PATH_LENGTH:
        raise MemoryError(f"n_{l} = {n} exceeds the path budget")
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(lambda r: _replica(s, l, seed, r, control), range(replicas)))
    else:
        out = [_replica(s, l, seed, r, control) for r in range(replicas)]
    cols = list(zip(*out))
    return LevelSample(
        l,
        seed,
        np.array(cols[0], dtype=bool),
        np.array(cols[1], dtype=bool),
        np.array(cols[2], dtype=float),
        min(0.5, float(static_bound(s, l))),
        np.array(cols[3], dtype=bool),
        np.array(cols[4], dtype=bool) if control else None,
    )


def _freq(x):
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    return m, math.sqrt(max(m * (1 - m), 0.0) / x.size)


@dataclass
class ChainRow:
    name: str
    level: int
    lhs: float
    rhs: float
    se: float
    holds: bool
    note: str = ""

    def as_csv(self) -> str:
        return f"{self.name},{self.level},{self.lhs!r},{self.rhs!r},{self.se!r},{'pass' if self.holds else 'fail'},{self.note}"


@dataclass
class ChainReport:
    level: int
    replicas: int
    rows: list = field(default_factory=list)

    def row(self, name) -> ChainRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def rows_named(self, prefix):
        return [r for r in self.rows if r.name.startswith(prefix)]

    def to_csv(self) -> str:
        return "name,level,lhs,rhs,se,status,note\n" + "".join(r.as_csv() + "\n" for r in self.rows)


def product_difference(a, b):
    """``(|prod a - prod b|, sum |a - b|)`` for families in ``[0, 1]``."""
    a, b = list(a), list(b)
    if len(a) != len(b):
        raise ValueError("families must have equal length")
    if any(not 0 <= x <= 1 for x in a + b):
        raise ValueError("entries must lie in [0, 1]")
    pa = pb = 1 if all(isinstance(x, (int, Fraction)) for x in a + b) else 1.0
    for x in a:
        pa *= x
    for x in b:
        pb *= x
    return abs(pa - pb), sum(abs(x - y) for x, y in zip(a, b))


def power_lower_bound(t, n: int):
    """``(1 - (1 - t)**n, n t - n (n - 1) t**2 / 2)``."""
    if n < 1 or not 0 <= t <= 1:
        raise ValueError("need integer n >= 1 and t in [0, 1]")
    return 1 - (1 - t) ** n, n * t - n * (n - 1) * t * t / 2


def lower_bound_chain(
    s: CounterExampleSchedule,
    l: int,
    replicas: int = 10**4,
    seed: int = 0,
    sample: LevelSample | None = None,
    workers: int = 1,
    sigmas: float = 4.0,
) -> ChainReport:
    """Every finite inequality of the lower-bound chain at level ``l``.

    Monte Carlo rows pass when they hold within ``sigmas`` standard errors;
    rows without sampling error are exact.
    """
    lv = _explicit(s, l)
    p, L, I, J, n, k = s.p, lv.L, lv.I, lv.J, lv.n, lv.k
    if sample is None:
        sample = simulate_level(s, l, replicas, seed, control=False, workers=workers)
    R = sample.single.size
    rep = ChainReport(l, R)
    ks = lv.annulus_sizes()
    be = math.sqrt(2) * 2 ** (-I / 2)

    # annulus events: sums of k_j - 1 independent signs
    arng = np.random.default_rng(np.random.SeedSequence([seed, l, 2]))
    hits = np.empty((J, R), dtype=bool)
    mu_exact, c = [], []
    for j in range(1, J + 1):
        m = ks[j] - 1
        sums = 2.0 * arng.binomial(m, 0.5, size=R) - m
        hits[j - 1] = np.abs(sums) >= annulus_threshold(p, L, ks[j - 1], ks[j])
        mu_exact.append(annulus_event_probability(p, L, ks[j - 1], ks[j]))
        c.append(annulus_gauss_value(p, L, ks[j - 1], ks[j]))
    for j in range(1, J + 1):
        mu_hat, se = _freq(hits[j - 1])
        bound = min((ks[j - 1] - 1) ** -0.5, be)
        rep.rows.append(ChainRow(f"annulus_gauss_gap_mc_j{j}", l, abs(mu_hat - c[j - 1]), bound, se,
                                 abs(mu_hat - c[j - 1]) <= bound + sigmas * se))
        rep.rows.append(ChainRow(f"annulus_gauss_gap_exact_j{j}", l, abs(mu_exact[j - 1] - c[j - 1]), bound, 0.0,
                                 abs(mu_exact[j - 1] - c[j - 1]) <= bound))

    pprime_hat, pprime_se = _freq(hits.any(axis=0))
    pprime_exact = 1.0 - float(np.prod([1.0 - x for x in mu_exact]))
    rep.rows.append(ChainRow("annulus_independence", l, pprime_hat, pprime_exact, pprime_se,
                             abs(pprime_hat - pprime_exact) <= sigmas * pprime_se + 1e-12))

    p_hat, p_se = _freq(sample.single)
    rhs_single = 0.5 * (1 - 2 * k / n) * pprime_exact
    rep.rows.append(ChainRow("single_level_event", l, p_hat, rhs_single, p_se, p_hat + sigmas * p_se >= rhs_single))

    rhs_gauss = 1 - float(np.prod([1 - x for x in c])) - J * be
    rep.rows.append(ChainRow("annulus_union_gauss", l, pprime_hat, rhs_gauss, pprime_se, pprime_hat + sigmas * pprime_se >= rhs_gauss))
    cstar = gauss_two_sided_tail(4 ** (1 / p) * float(L))
    rhs_tail = 1 - (1 - cstar) ** J - J * be
    rep.rows.append(ChainRow("annulus_union_tail", l, pprime_hat, rhs_tail, pprime_se, pprime_hat + sigmas * pprime_se >= rhs_tail))
    rhs_quad = J * cstar - J * J * cstar * cstar / 2 - J * be
    rep.rows.append(ChainRow("annulus_union_quadratic", l, pprime_hat, rhs_quad, pprime_se, pprime_hat + sigmas * pprime_se >= rhs_quad))

    # m'_l: pathwise bound by the static sum, and the 1/2 bound it is meant to imply
    sb = float(static_bound(s, l))
    mp_max = float(sample.mprime.max())
    rep.rows.append(ChainRow("lower_levels_pathwise", l, mp_max, sb, 0.0, mp_max <= sb * (1 + 1e-12),
                             "exact max" if mp_max > sample.mprime_floor else "below floor"))
    rep.rows.append(ChainRow("lower_levels_static_half", l, sb, 0.5, 0.0, sb <= 0.5))
    ex_hat, ex_se = _freq(sample.mprime > 0.5)
    rep.rows.append(ChainRow("lower_levels_exceed_half", l, ex_hat, 0.0, ex_se, ex_hat - sigmas * ex_se <= 0.0,
                             f"max {mp_max:.6g}"))

    act_hat, act_se = _freq(sample.active)
    bound_active = 2 * n * sum(s.level(i).k / s.level(i).n for i in range(l + 1, len(s) + 1))
    rep.rows.append(ChainRow("upper_levels_active", l, act_hat, bound_active, act_se, act_hat - sigmas * act_se <= bound_active))
    rep.rows.append(ChainRow("upper_levels_active_small", l, act_hat, 1 / 32, act_se, act_hat - sigmas * act_se <= 1 / 32))
    ev_hat, ev_se = _freq(sample.event)
    rhs_event = p_hat - act_hat
    rep.rows.append(ChainRow("modulus_event_lower", l, ev_hat, rhs_event, ev_se, ev_hat + sigmas * math.hypot(ev_se, p_se, act_se) >= rhs_event,
                             "needs lower_levels_static_half"))
    return rep


@dataclass
class ModulusReport:
    level: int
    replicas: int
    p_event: float
    se: float
    control: float | None
    control_se: float | None
    static_bound: float
    mprime_max: float


def modulus_event_prob(
    s: CounterExampleSchedule,
    l: int,
    replicas: int = 10**4,
    seed: int = 0,
    control: bool = True,
    sample: LevelSample | None = None,
    workers: int = 1,
) -> ModulusReport:
    """Frequency of ``n_l**(-1/p) max |S_{u+v}(m) - S_u(m)| / v**alpha >= 1/2`` over ``u <= n_l - k_l``, ``v <= k_l``.

    The control runs the same statistic on iid standard Gaussian increments.
    """
    if sample is None:
        sample = simulate_level(s, l, replicas, seed, control=control, workers=workers)
    p_hat, se = _freq(sample.event)
    cp = cse = None
    if sample.control is not None:
        cp, cse = _freq(sample.control)
    return ModulusReport(l, sample.event.size, p_hat, se, cp, cse, float(static_bound(s, l)), float(sample.mprime.max()))
