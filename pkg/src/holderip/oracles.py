"""Numerical oracles for the maximal and tail inequalities behind the
martingale weak invariance principle.

Every check produces :class:`OracleRow` entries ``(check, n, params, lhs,
rhs, se, passed)``.  Proven inequalities pass when ``lhs <= rhs + 4 se``;
exact ones use ``se = 0``.  Inequalities whose constant is only known to
exist are reported as ratios instead of being asserted.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import stats

from .holder import build_polygonal, increment_level_split, vertex_norm
from .processes import GeneratorSpec, SamplePath, generate

__all__ = [
    "OracleRow",
    "OracleReport",
    "QFunction",
    "NagaevParams",
    "q_function",
    "nagaev_bound",
    "nagaev_check",
    "moment_maximal_statistic",
    "doob_type_check",
    "stein_maximal_check",
    "DyadicSum",
    "dyadic_sum_bounds",
    "dyadic_geometric_sum",
    "tail_sum_check",
    "conditional_truncated_moments",
    "truncation_tail_transfer",
    "level_split_check",
    "weak_power",
]

SIGMAS = 4.0


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _fmt_params(params: dict) -> str:
    return ";".join(f"{k}={params[k]}" for k in sorted(params))


@dataclass
class OracleRow:
    check: str
    n: int
    params: dict
    lhs: float
    rhs: float
    se: float
    passed: bool

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / self.rhs

    def as_csv(self) -> list:
        return [self.check, self.n, _fmt_params(self.params), repr(self.lhs), repr(self.rhs), repr(self.se), "pass" if self.passed else "fail"]


@dataclass
class OracleReport:
    rows: list = field(default_factory=list)

    def add(self, check, n, params, lhs, rhs, se=0.0, slack=SIGMAS, passed=None):
        lhs, rhs, se = float(lhs), float(rhs), float(se)
        if passed is None:
            passed = lhs <= rhs + slack * se
        row = OracleRow(check, int(n), dict(params), lhs, rhs, se, bool(passed))
        self.rows.append(row)
        return row

    def extend(self, other: "OracleReport") -> "OracleReport":
        self.rows.extend(other.rows)
        return self

    def violations(self) -> list:
        return [r for r in self.rows if not r.passed]

    def named(self, check: str) -> list:
        return [r for r in self.rows if r.check == check]

    @property
    def ok(self) -> bool:
        return not self.violations()

    def __len__(self):
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "n", "params", "lhs", "rhs", "se", "pass"])
        for r in self.rows:
            w.writerow(r.as_csv())
        return buf.getvalue()


def _mc_se(indicator_mean: float, replicas: int) -> float:
    return math.sqrt(max(indicator_mean * (1 - indicator_mean), 0.0) / replicas) if replicas > 1 else 0.0


def _paths(spec: GeneratorSpec, n: int, replicas: int):
    return [generate(spec, n, replica=r) for r in range(replicas)]


def weak_power(sample, p: float) -> float:
    """``sup_t t**p P{|x| > t}`` for the empirical law of ``sample`` (0 for a null sample)."""
    x = np.abs(np.asarray(sample, dtype=np.float64).ravel())
    if x.size == 0 or not np.any(x > 0):
        return 0.0
    # sup is approached as t rises to the k-th largest value, where k values exceed t
    xs = np.sort(x)[::-1]
    k = np.arange(1, xs.size + 1)
    return float(np.max(xs**p * k) / xs.size)


# ---------------------------------------------------------------------------
# Nagaev's inequality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NagaevParams:
    """``eps_q = eta / q`` and ``c(q, eta) = q exp(3 eta e**(eta+1) - eta - 1) / eta``."""

    q: float
    eta: float = 1.0

    def __post_init__(self):
        if not (self.q > 0 and self.eta > 0):
            raise ValueError("q and eta must be positive")

    @property
    def eps_q(self) -> float:
        return self.eta / self.q

    @property
    def c(self) -> float:
        e = self.eta
        return self.q * math.exp(3 * e * math.exp(e + 1) - e - 1) / e


@dataclass
class QFunction:
    """Empirical ``Q(u) = P{max_j |m_j| > u} + P{(sum_j E[m_j**2 | past])**(1/2) > u}``.

    Both tails are stored through their replica samples, so ``Q`` is exact
    for the empirical law and any grid is just a view of it.
    """

    n: int
    max_increment: np.ndarray
    quad_var: np.ndarray

    def __post_init__(self):
        self.max_increment = np.sort(np.asarray(self.max_increment, dtype=np.float64))
        self.quad_var = np.sort(np.asarray(self.quad_var, dtype=np.float64))
        if self.max_increment.size == 0 or self.max_increment.size != self.quad_var.size:
            raise ValueError("need equally many nonempty samples for both tails")

    @property
    def replicas(self) -> int:
        return self.max_increment.size

    @staticmethod
    def _tail(xs, u):
        u = np.asarray(u, dtype=np.float64)
        return (xs.size - np.searchsorted(xs, u, side="right")) / xs.size

    def max_increment_tail(self, u):
        return self._tail(self.max_increment, u)

    def quad_var_tail(self, u):
        return self._tail(self.quad_var, u)

    def __call__(self, u):
        return self.max_increment_tail(u) + self.quad_var_tail(u)

    def grid(self, size: int = 64) -> np.ndarray:
        """Log grid spanning the positive sample values."""
        both = np.concatenate([self.max_increment, self.quad_var])
        pos = both[(both > 0) & np.isfinite(both)]
        if pos.size == 0:
            return np.geomspace(1e-3, 1.0, size)
        return np.geomspace(pos.min() / 2, pos.max() * 2, size)


def q_function(paths, n: int | None = None) -> QFunction:
    """``Q`` for an ensemble of martingale paths, each cut to its first ``n`` steps."""
    mx, qv = [], []
    for path in paths:
        if not isinstance(path, SamplePath) or not path.is_martingale:
            raise ValueError("generator exposes no conditional second moment")
        k = path.n if n is None else int(n)
        if k < 1 or k > path.n:
            raise ValueError("n out of range for the supplied paths")
        mx.append(float(np.max(np.abs(path.values[:k]))))
        qv.append(math.sqrt(float(np.sum(path.cond_second_moment()[:k]))))
    if not mx:
        raise ValueError("need at least one path")
    return QFunction(int(n if n is not None else paths[0].n), np.array(mx), np.array(qv))


def nagaev_bound(Q: QFunction, y: float, params: NagaevParams) -> float:
    """``c(q, eta) * int_0^1 Q(eps_q u y) u**(q-1) du`` integrated exactly.

    For one sample value ``x`` the indicator ``1{x > eps y u}`` integrates
    against ``u**(q-1)`` to ``min(1, x / (eps y))**q / q``.
    """
    if not y > 0:
        raise ValueError("y must be positive")
    q = params.q
    scale = params.eps_q * y
    tot = 0.0
    for xs in (Q.max_increment, Q.quad_var):
        tot += float(np.sum(np.minimum(1.0, xs / scale) ** q)) / xs.size
    return params.c * tot / q


def nagaev_check(spec: GeneratorSpec, n: int, y_grid, replicas: int, q: float, eta: float = 1.0) -> OracleReport:
    """``P{|S_n| > y} <= nagaev_bound(Q, y)`` on every ``y`` of the grid."""
    paths = _paths(spec, n, replicas)
    Q = q_function(paths, n)
    prm = NagaevParams(q, eta)
    sums = np.abs(np.array([p.values.sum() for p in paths]))
    rep = OracleReport()
    for y in np.asarray(y_grid, dtype=np.float64):
        lhs = float(np.mean(sums > y))
        rep.add("nagaev", n, {"kind": spec.kind, "y": float(y), "q": q, "eta": eta},
                lhs, nagaev_bound(Q, float(y), prm), _mc_se(lhs, replicas))
    return rep


# ---------------------------------------------------------------------------
# moment bound, Doob-type bound, maximal ergodic inequality
# ---------------------------------------------------------------------------


def moment_maximal_statistic(spec: GeneratorSpec, p: float, n_grid, replicas: int) -> OracleReport:
    """Ratio of ``||Holder norm of n**-1/2 S_n^pl||_{p,inf}**p`` to
    ``||m||_{p,inf}**p + E (E[m**2 | past])**(p/2)`` for each ``n``.

    The constant of the moment bound is unspecified, so the row only
    records the ratio (``passed`` is always true); boundedness in ``n`` is
    what callers test.
    """
    alpha = 0.5 - 1.0 / p
    rep = OracleReport()
    for n in n_grid:
        paths = _paths(spec, int(n), replicas)
        if not all(pt.is_martingale for pt in paths):
            raise ValueError("generator exposes no conditional second moment")
        norms = np.array([vertex_norm(build_polygonal(pt.values), alpha) for pt in paths])
        m = np.concatenate([pt.values for pt in paths])
        h = np.concatenate([pt.cond_second_moment() for pt in paths])
        lhs = weak_power(norms, p)
        rhs = weak_power(m, p) + float(np.mean(h ** (p / 2)))
        rep.add("moment_maximal", n, {"kind": spec.kind, "p": p}, lhs, rhs, passed=True)
    return rep


def doob_type_check(spec: GeneratorSpec, n: int, replicas: int) -> OracleReport:
    """``E[max_{j<=n} S_j**2] / n <= 2 E[m**2]``."""
    stat, sq = [], []
    for pt in _paths(spec, n, replicas):
        s = np.cumsum(pt.values)
        stat.append(float(np.max(s * s)) / n)
        sq.append(float(np.mean(pt.values**2)))
    stat = np.array(stat)
    lhs = float(stat.mean())
    se = float(stat.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    rep = OracleReport()
    rep.add("doob_type", n, {"kind": spec.kind}, lhs, 2.0 * float(np.mean(sq)), se)
    return rep


def stein_maximal_check(h, p: float, n_max: int | None = None) -> OracleReport:
    """Ratio ``||sup_{N<=n_max} N**-1 sum_{j<=N} h_j||_{p/2} / ||h||_{p/2}``.

    ``h`` is a ``(replicas, length)`` array of non-negative stationary
    paths.  The maximal constant is unspecified; the row records the ratio.
    """
    if not p > 2:
        raise ValueError("p must exceed 2")
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if np.any(h < 0):
        raise ValueError("h must be non-negative")
    N = h.shape[1] if n_max is None else int(n_max)
    avg = np.cumsum(h[:, :N], axis=1) / np.arange(1, N + 1)
    sup = avg.max(axis=1)
    r = p / 2
    lhs = float(np.mean(sup**r)) ** (1 / r)
    rhs = float(np.mean(h[:, :N] ** r)) ** (1 / r)
    rep = OracleReport()
    rep.add("stein_maximal", N, {"p": p}, lhs, rhs, passed=True)
    return rep


# ---------------------------------------------------------------------------
# dyadic summation bounds
# ---------------------------------------------------------------------------

_DPS = 60


@dataclass(frozen=True)
class DyadicSum:
    p: float
    n: int
    value: mpmath.mpf
    bound: mpmath.mpf

    @property
    def holds(self) -> bool:
        return self.value <= self.bound


def dyadic_geometric_sum(p: float, n: int) -> DyadicSum:
    """``sum_{j=1}^{log2 n} 2**(j(p/2-1)) n**(1-p/2)`` against ``(1 - 2**(1-p/2))**-1``."""
    if not p > 2 or n < 2:
        raise ValueError("need p > 2 and n >= 2")
    n = int(n)
    with mpmath.workdps(_DPS):
        e = mpmath.mpf(p) / 2 - 1
        top = n.bit_length() - 1
        val = mpmath.fsum(mpmath.power(2, j * e) for j in range(1, top + 1)) * mpmath.power(n, -e)
        bound = 1 / (1 - mpmath.power(2, -e))
    return DyadicSum(float(p), n, val, bound)


def tail_sum_check(values, masses, p: float):
    """``sum_{j>=1} 2**j P{g > 2**(2j/p)}`` and ``2 E g**(p/2)`` for a discrete ``g >= 0``.

    For an atom ``x`` the inner sum runs over ``2**j < x**(p/2)`` and is
    ``2**(J+1) - 2`` with ``J`` the largest such ``j``.  Comparisons are
    made at 60 significant digits.
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    ms = np.asarray(masses, dtype=np.float64).ravel()
    if vals.shape != ms.shape or np.any(vals < 0) or np.any(ms < 0):
        raise ValueError("need non-negative values with matching non-negative masses")
    with mpmath.workdps(_DPS):
        half = mpmath.mpf(p) / 2
        lhs = mpmath.mpf(0)
        rhs = mpmath.mpf(0)
        for x, w in zip(vals.tolist(), ms.tolist()):
            if x == 0 or w == 0:
                continue
            y = mpmath.power(mpmath.mpf(x), half)
            J = int(mpmath.floor(mpmath.log(y, 2)))
            while mpmath.power(2, J) >= y:
                J -= 1
            while mpmath.power(2, J + 1) < y:
                J += 1
            if J >= 1:
                lhs += w * (mpmath.power(2, J + 1) - 2)
            rhs += 2 * w * y
    return lhs, rhs


def dyadic_sum_bounds(p: float, n: int):
    """The geometric sum for ``(p, n)`` and the tail-sum checker."""
    return dyadic_geometric_sum(p, n), tail_sum_check


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------


def _pareto_moments(a, beta, xm):
    """``E[|g| 1{|g| > a}]`` and ``E[g**2 1{|g| > a}]`` for a symmetric Pareto ``g``."""
    a = np.maximum(a, xm)
    m1 = beta * xm**beta * a ** (1 - beta) / (beta - 1)
    m2 = beta * xm**beta * a ** (2 - beta) / (beta - 2) if beta > 2 else np.full_like(a, np.inf)
    return m1, m2


def conditional_truncated_moments(path: SamplePath, R: float):
    """``E[|m| 1{|m|>R} | past]``, ``E[m**2 1{|m|>R} | past]`` and ``E[|m| | past]``.

    ``m = f g`` with ``f`` known from the past and ``g`` independent of it;
    supported laws of ``g``: finite atoms, standard Gaussian, symmetric Pareto.
    """
    if not path.is_martingale or "g_law" not in path.aux:
        raise ValueError("generator exposes no conditional structure")
    f = np.abs(path.aux["f"])
    law = path.aux["g_law"]
    pos = f > 0
    a = np.full_like(f, np.inf)
    a[pos] = R / f[pos]
    if isinstance(law, dict):
        m1 = np.zeros_like(f)
        m2 = np.zeros_like(f)
        for v, prob in law.items():
            hit = abs(v) > a
            m1 += prob * abs(v) * hit
            m2 += prob * v * v * hit
    elif law == "gaussian":
        phi = stats.norm.pdf(a)
        sf = stats.norm.sf(a)
        m1 = 2 * phi
        m2 = 2 * (np.where(np.isfinite(a), a, 0.0) * phi + sf)
    elif law == "symmetric" and path.spec.kind == "iid_pareto":
        from .processes import pareto_xmin

        beta = float(path.spec.params["beta"])
        m1, m2 = _pareto_moments(a, beta, pareto_xmin(beta))
    else:
        raise ValueError(f"no closed form for the law {law!r}")
    return f * m1, f * f * m2, path.cond_abs()


def truncation_tail_transfer(spec: GeneratorSpec, n: int, R_grid, p: float, replicas: int = 1, t_points: int = 16) -> OracleReport:
    """The three truncation remainders and the tail-transfer inequalities.

    Per ``R`` the report carries

    * ``trunc_term1``: ``sup_t t**p P{|m| 1{|m|>R} > t}``,
    * ``trunc_term2``: ``sup_t t**p P{E[|m| 1{|m|>R} | past] > t}``,
    * ``trunc_term3``: ``E (E[m**2 1{|m|>R} | past])**(p/2)``,

    each as ``lhs`` with ``rhs`` its value at the previous ``R`` (the terms
    are non-increasing in ``R`` sample by sample, so this is exact), and

    * ``tail_transfer_below``: ``t**p P{C_R > t} <= R**p P{A > R}`` for ``t < R``,
    * ``tail_transfer_above``: ``P{C_R > t} <= P{A > t}`` for ``t >= R``,

    with ``C_R = E[|m| 1{|m|>R} | past]`` and ``A = E[|m| | past]``.  The
    first transfer needs ``|g|`` constant; for other laws it can fail.
    """
    paths = _paths(spec, n, replicas)
    m = np.concatenate([pt.values for pt in paths])
    R_grid = np.sort(np.asarray(R_grid, dtype=np.float64))
    rep = OracleReport()
    prev = None
    base = {"kind": spec.kind, "p": p}
    for R in R_grid:
        parts = [conditional_truncated_moments(pt, float(R)) for pt in paths]
        C = np.concatenate([c for c, _, _ in parts])
        D = np.concatenate([d for _, d, _ in parts])
        A = np.concatenate([a for _, _, a in parts])
        terms = (
            weak_power(np.where(np.abs(m) > R, m, 0.0), p),
            weak_power(C, p),
            float(np.mean(D ** (p / 2))),
        )
        for i, val in enumerate(terms):
            ref = math.inf if prev is None else prev[i]
            rep.add(f"trunc_term{i + 1}", n, {**base, "R": float(R)}, val, ref)
        prev = terms
        right = R**p * float(np.mean(A > R))
        for t in np.geomspace(R / 64, R, t_points, endpoint=False):
            rep.add("tail_transfer_below", n, {**base, "R": float(R), "t": float(t)},
                    t**p * float(np.mean(C > t)), right)
        for t in np.geomspace(R, 8 * R, t_points):
            rep.add("tail_transfer_above", n, {**base, "R": float(R), "t": float(t)},
                    float(np.mean(C > t)), float(np.mean(A > t)))
    return rep


# ---------------------------------------------------------------------------
# split of the dyadic increment statistic
# ---------------------------------------------------------------------------


def level_split_check(spec: GeneratorSpec, n: int, t_grid, p: float, replicas: int) -> OracleReport:
    """Split of the dyadic increment statistic into levels ``2**j <= n`` and ``2**j > n``.

    * ``level_split``: ``t**p P{sup > t} <= t**p P{low > t/2} + t**p P{high > t/2}``
      (pointwise, exact),
    * ``high_level_pointwise``: number of replicas where
      ``high > 2 n**(alpha - 1/2) max |m|`` (exact, must be 0),
    * ``high_level_tail``: ``t**p P{high > t} <= 2**p sup_x x**p P{|m| > x}``
      within Monte Carlo slack.
    """
    alpha = 0.5 - 1.0 / p
    low, high, mx, pool = [], [], [], []
    for pt in _paths(spec, n, replicas):
        a, b = increment_level_split(build_polygonal(pt.values), alpha)
        low.append(a)
        high.append(b)
        mx.append(float(np.max(np.abs(pt.values))))
        pool.append(pt.values)
    low, high, mx = np.array(low), np.array(high), np.array(mx)
    tot = np.maximum(low, high)
    wp = weak_power(np.concatenate(pool), p)
    rep = OracleReport()
    base = {"kind": spec.kind, "p": p}
    bad = int(np.sum(high > 2 * n ** (alpha - 0.5) * mx * (1 + 1e-12)))
    rep.add("high_level_pointwise", n, base, bad, 0)
    for t in np.asarray(t_grid, dtype=np.float64):
        tp = t**p
        rep.add("level_split", n, {**base, "t": float(t)}, tp * np.mean(tot > t),
                tp * np.mean(low > t / 2) + tp * np.mean(high > t / 2))
        ph = float(np.mean(high > t))
        rep.add("high_level_tail", n, {**base, "t": float(t)}, tp * ph, 2**p * wp, tp * _mc_se(ph, replicas))
    return rep
