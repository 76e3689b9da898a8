"""Parameter schedules ``(L_l, J_l, I_l, n_l)`` for the tower counter-example
and their validator.

Two modes:

* ``faithful`` follows the recipe ``L_l = l**2``, ``J_l`` from the Gaussian
  tail, ``I_l`` from the decay requirement on ``J_l 2**(-I_l/2)``, and
  ``n_l`` a power of two large enough for the growth and static-bound
  conditions.  Magnitudes explode immediately, so ``n_l`` is kept as a
  base-2 exponent and all checks run in high-precision log arithmetic.
* ``desk`` picks small parameters that can actually be simulated and
  reports, condition by condition, what holds exactly and what by proxy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
from scipy import stats

from .tower import is_admissible, next_admissible

__all__ = [
    "Level",
    "CounterExampleSchedule",
    "InfeasibleScheduleError",
    "ValidationRow",
    "ValidationReport",
    "build_schedule",
    "validate_schedule",
    "schedule_to_text",
    "schedule_from_text",
    "gauss_two_sided_tail",
    "annulus_event_probability",
    "static_bound",
]

DEFAULT_PREFIX_TOL = Fraction(1, 4)
PROXY_TARGET = 0.5
# desk levels keep L_l below 1, so their partial sums get a declared budget of their own
DESK_PARTIAL_SUM_BUDGET = 6.0


class InfeasibleScheduleError(RuntimeError):
    """No schedule within the declared bounds satisfies the requested conditions."""


@dataclass(frozen=True)
class Level:
    """One level of a schedule.  ``n`` is an int, or ``None`` when only ``n_exp`` (``n = 2**n_exp``) is kept."""

    L: Fraction
    J: int
    I: int
    n: int | None = None
    n_exp: int | None = None

    def __post_init__(self):
        if self.n is None and self.n_exp is None:
            raise ValueError("level needs n or n_exp")
        if self.n is not None and self.n_exp is not None and self.n != 1 << self.n_exp:
            raise ValueError("n and n_exp disagree")
        if not self.L > 0 or self.J < 1 or self.I < 1:
            raise ValueError("need L > 0, J >= 1, I >= 1")

    @property
    def k_exp(self) -> int:
        return self.I + self.J

    @property
    def k(self) -> int:
        return 1 << self.k_exp

    @property
    def is_explicit(self) -> bool:
        return self.n is not None

    def log2_n(self) -> mpmath.mpf:
        if self.n_exp is not None:
            return mpmath.mpf(self.n_exp)
        return mpmath.log(self.n, 2)

    def mp_n(self) -> mpmath.mpf:
        return mpmath.mpf(self.n) if self.n is not None else mpmath.ldexp(1, self.n_exp)

    def annulus_sizes(self) -> list[int]:
        """``k_{l,j} = 2**(I+J-j)`` for ``j = 0..J`` (explicit levels only)."""
        return [1 << (self.I + self.J - j) for j in range(self.J + 1)]


@dataclass(frozen=True)
class CounterExampleSchedule:
    p: float
    mode: str
    levels: tuple
    prefix_tol: Fraction = DEFAULT_PREFIX_TOL
    partial_sum_budget: float = math.pi**2 / 6

    @property
    def alpha(self) -> float:
        return 0.5 - 1.0 / self.p

    def level(self, l: int) -> Level:
        """Levels are numbered from 1."""
        return self.levels[l - 1]

    def __len__(self):
        return len(self.levels)


# ---------------------------------------------------------------------------
# elementary quantities
# ---------------------------------------------------------------------------


def gauss_two_sided_tail(x) -> float:
    """``P(|N| >= x)`` for standard normal ``N``."""
    return float(2.0 * stats.norm.sf(float(x)))


def _tail_mp(x):
    return mpmath.erfc(x / mpmath.sqrt(2))


def tail_count_proxy(p, L) -> float:
    """``J * P(|N| >= 4**(1/p) L)`` without the factor ``J``."""
    return gauss_two_sided_tail(4 ** (1 / p) * float(L))


def annulus_threshold(p: float, L, k_prev: int, k_j: int) -> float:
    """``|sum of k_j - 1 signs| >= L (k_j - 1)**(1/2 - 1/p) k_prev**(1/p)`` defines ``E_j``."""
    return float(L) * (k_j - 1) ** (0.5 - 1 / p) * k_prev ** (1 / p)


def annulus_event_probability(p: float, L, k_prev: int, k_j: int) -> float:
    """Exact ``mu(E_j)`` for Rademacher ``g``: binomial tail of ``k_j - 1`` signs."""
    m = k_j - 1
    thr = annulus_threshold(p, L, k_prev, k_j)
    # |2B - m| >= thr  <=>  B >= (m + thr)/2 or B <= (m - thr)/2
    hi = math.ceil((m + thr) / 2 - 1e-12)
    lo = math.floor((m - thr) / 2 + 1e-12)
    prob = stats.binom.sf(hi - 1, m, 0.5) + stats.binom.cdf(lo, m, 0.5)
    if lo >= hi:
        return 1.0
    return float(min(1.0, prob))


def annulus_gauss_value(p: float, L, k_prev: int, k_j: int) -> float:
    """``c_j = P(|N| >= L (k_prev / (k_j - 1))**(1/p))``."""
    return gauss_two_sided_tail(float(L) * (k_prev / (k_j - 1)) ** (1 / p))


def static_bound(s: CounterExampleSchedule, l: int) -> mpmath.mpf:
    """``sum_{i<l} k_l / (L_i n_l**(1/p)) (n_i / 2**I_i)**(1/p)``, evaluated in high precision."""
    with mpmath.workprec(256):
        lv = s.level(l)
        p = mpmath.mpf(s.p)
        tot = mpmath.mpf(0)
        for i in range(1, l):
            li = s.level(i)
            log_term = lv.k_exp + (li.log2_n() - li.I) / p - lv.log2_n() / p
            tot += mpmath.power(2, log_term) / mpmath.mpf(li.L.numerator) * li.L.denominator
        return +tot


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _faithful_levels(p: float, prefix_length: int):
    levels = []
    with mpmath.workprec(256):
        pm = mpmath.mpf(p)
        prev_log_n = mpmath.mpf(0)
        for l in range(1, prefix_length + 1):
            L = Fraction(l * l)
            tail = _tail_mp(mpmath.power(4, 1 / pm) * l * l)
            J = int(mpmath.ceil(1 / tail))
            I = 2 * int(math.ceil(math.log2(J))) + 2 * l if J > 1 else 2 * l
            k_exp = I + J
            # growth: n_l >= l**2 k_l n_{l-1}; margin: n_l >= 4 k_l
            need = max(mpmath.log(l * l, 2) + k_exp + prev_log_n, k_exp + 2)
            # static bound: sum_{i<l} (k_l / L_i) (n_i / 2**I_i)**(1/p) < n_l**(1/p) / 2
            if levels:
                acc = mpmath.mpf(0)
                for li in levels:
                    acc += mpmath.power(2, (li.log2_n() - li.I) / pm) / float(li.L)
                need = max(need, pm * (1 + k_exp + mpmath.log(acc, 2)))
            e = int(mpmath.floor(need)) + 1
            # a larger n only strengthens every condition, so step up to a tower-admissible height
            while e <= 62 and not is_admissible(1 << e):
                e += 1
            lv = Level(L, J, I, n=(1 << e) if e <= 62 else None, n_exp=e)
            levels.append(lv)
            prev_log_n = mpmath.mpf(e)
    return levels


def _desk_L(p: float, J: int, I: int, grid=100, below=None) -> Fraction:
    """Largest ``L < below`` on a 1/grid lattice meeting the tail proxy and the exact annulus bound."""
    top = 3 * grid if below is None else math.ceil(below * grid) - 1
    for num in range(top, 0, -1):
        L = Fraction(num, grid)
        if J * tail_count_proxy(p, L) < PROXY_TARGET:
            continue
        ks = [1 << (I + J - j) for j in range(J + 1)]
        ok = True
        for j in range(1, J + 1):
            mu = annulus_event_probability(p, L, ks[j - 1], ks[j])
            c = annulus_gauss_value(p, L, ks[j - 1], ks[j])
            if abs(mu - c) > min((ks[j - 1] - 1) ** -0.5, math.sqrt(2) * 2 ** (-I / 2)):
                ok = False
                break
        if ok:
            return L
    raise InfeasibleScheduleError(f"no admissible L for J={J}, I={I}")


def _static_bound_min_n(p, k_l, prev_levels):
    acc = sum((lv.n / (1 << lv.I)) ** (1 / p) / float(lv.L) for lv in prev_levels)
    if acc == 0:
        return 1
    return math.floor((2 * k_l * acc) ** p) + 1


def _desk_pass(p, prefix_length, J, prefix_tol, n_max, enforce5):
    # L must increase with l: pick from the top level down
    Ls, below = [], None
    for l in range(prefix_length, 0, -1):
        below = _desk_L(p, J, l, below=below)
        Ls.append(below)
    Ls.reverse()
    levels = []
    for l in range(1, prefix_length + 1):
        I = l
        k = 1 << (I + J)
        target = 2 * k + 1
        if levels:
            target = max(target, math.ceil(2 * levels[-1].n * k / prefix_tol))
        if enforce5:
            target = max(target, _static_bound_min_n(p, k, levels))
        n = next_admissible(target) if target <= n_max else target
        if n > n_max:
            raise InfeasibleScheduleError(f"level {l}: n = {n} exceeds n_max = {n_max}")
        levels.append(Level(Ls[l - 1], J, I, n=n))
    return levels


def _desk_levels(p, prefix_length, J, prefix_tol, n_max, require_static_bound):
    try:
        return _desk_pass(p, prefix_length, J, prefix_tol, n_max, True)
    except InfeasibleScheduleError:
        if require_static_bound:
            raise
    return _desk_pass(p, prefix_length, J, prefix_tol, n_max, False)


def build_schedule(
    p: float,
    mode: str = "desk",
    prefix_length: int = 3,
    *,
    J: int = 2,
    prefix_tol: Fraction = DEFAULT_PREFIX_TOL,
    n_max: int = 10**6,
    require_static_bound: bool = False,
) -> CounterExampleSchedule:
    """Build a schedule with ``prefix_length`` levels.

    In desk mode ``n_l`` grows just enough for the prefix tolerance on
    ``n_l sum_{i>l} k_i/n_i`` and is moved to the next integer whose
    golden-rotation tower covers more than half the circle.  The static
    bound ``sum_{i<l} (k_l/L_i)(n_i/2**I_i)**(1/p) < n_l**(1/p)/2`` is met when
    that fits under ``n_max``; otherwise it is left violated and reported,
    unless ``require_static_bound`` asks for an error instead.
    """
    if not p > 2:
        raise ValueError("p must exceed 2")
    if prefix_length < 1:
        raise ValueError("prefix_length must be positive")
    prefix_tol = Fraction(prefix_tol)
    if mode == "faithful":
        levels = _faithful_levels(p, prefix_length)
    elif mode == "desk":
        levels = _desk_levels(p, prefix_length, J, prefix_tol, n_max, require_static_bound)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    budget = math.pi**2 / 6 if mode == "faithful" else DESK_PARTIAL_SUM_BUDGET
    return CounterExampleSchedule(float(p), mode, tuple(levels), prefix_tol, budget)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationRow:
    condition: str
    level: int
    value: str
    threshold: str
    status: str  # pass | fail | proxy

    def as_csv(self) -> str:
        return f"{self.condition},{self.level},{self.value},{self.threshold},{self.status}"


@dataclass
class ValidationReport:
    schedule: CounterExampleSchedule
    rows: list = field(default_factory=list)

    def add(self, condition, level, value, threshold, ok, proxy=False):
        status = ("proxy" if proxy else "pass") if ok else "fail"
        self.rows.append(ValidationRow(condition, level, _fmt(value), _fmt(threshold), status))

    def failures(self):
        return [r for r in self.rows if r.status == "fail"]

    @property
    def ok(self) -> bool:
        return not self.failures()

    def status(self, condition: str, level: int | None = None):
        return [r.status for r in self.rows if r.condition == condition and (level is None or r.level == level)]

    def to_csv(self) -> str:
        lines = ["condition,level,value,threshold,status"]
        lines += [r.as_csv() for r in self.rows]
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, mpmath.mpf):
        return mpmath.nstr(x, 12)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _log2_ratio_sum(s, l):
    """``log2(n_l sum_{i>l} k_i / n_i)`` over the prefix (``-inf`` when empty)."""
    lv = s.level(l)
    terms = [mpmath.power(2, s.level(i).k_exp - s.level(i).log2_n()) for i in range(l + 1, len(s) + 1)]
    if not terms:
        return None
    return lv.log2_n() + mpmath.log(mpmath.fsum(terms), 2)


def validate_schedule(s: CounterExampleSchedule) -> ValidationReport:
    """Check every finite-prefix condition; never raises."""
    rep = ValidationReport(s)
    p = s.p
    with mpmath.workprec(256):
        partial = Fraction(0)
        for l, lv in enumerate(s.levels, start=1):
            partial += 1 / lv.L
            rep.add("partial_sum_budget", l, float(partial), s.partial_sum_budget, float(partial) <= s.partial_sum_budget)
        prev_I = 0
        shadow = []
        for l, lv in enumerate(s.levels, start=1):
            tail = _tail_mp(mpmath.power(4, 1 / mpmath.mpf(p)) * mpmath.mpf(lv.L.numerator) / lv.L.denominator)
            val = lv.J * tail
            if s.mode == "faithful":
                rep.add("tail_count", l, val, "1", abs(val - 1) <= tail + mpmath.mpf("1e-30"))
            else:
                rep.add("tail_count", l, val, PROXY_TARGET, val >= PROXY_TARGET, proxy=True)
            sh = lv.J * mpmath.power(2, -mpmath.mpf(lv.I) / 2)
            shadow.append(sh)
            ok3 = len(shadow) == 1 or sh <= shadow[-2]
            rep.add("gauss_error_decreasing", l, sh, "non-increasing", ok3)
            rep.add("I_increasing", l, lv.I, f">{prev_I}" if l > 1 else ">=1", lv.I > prev_I and lv.I >= 1)
            prev_I = lv.I
            # k_{l,j-1} <= 4 (k_{l,j} - 1) for all j; tightest at k_{l,J} = 2**I
            rep.add("annulus_ratio", l, f"2/(1-2^-{lv.I})", "4", (1 << min(lv.I, 64)) >= 2)
            log_ratio = lv.log2_n() - lv.k_exp
            rep.add("n_gt_2k", l, mpmath.power(2, log_ratio), "2", log_ratio > 1)
        for l in range(1, len(s) + 1):
            lr = _log2_ratio_sum(s, l)
            if lr is None:
                continue
            val = mpmath.power(2, lr)
            rep.add("prefix_sum", l, val, s.prefix_tol, val <= mpmath.mpf(s.prefix_tol.numerator) / s.prefix_tol.denominator)
        for l in range(1, len(s) + 1):
            ok, lhs, rhs = static_bound_exact(s, l)
            rep.add("static_bound", l, lhs, rhs, ok)
        for l, lv in enumerate(s.levels, start=1):
            if lv.is_explicit:
                rep.add("tower_cover", l, lv.n, ">1/2", is_admissible(lv.n))
    return rep


def static_bound_exact(s: CounterExampleSchedule, l: int):
    """Strict ``sum_{i<l} (k_l/L_i)(n_i/2**I_i)**(1/p) < n_l**(1/p)/2`` in 512-bit arithmetic.

    mpmath exponents are unbounded, so ``2**n_exp`` levels are handled
    directly; this is independent of the log-domain arithmetic used by the
    builder.  Returns ``(ok, lhs, rhs)``.
    """
    lv = s.level(l)
    with mpmath.workprec(512):
        pm = mpmath.mpf(s.p)
        lhs = mpmath.mpf(0)
        for i in range(1, l):
            li = s.level(i)
            Li = mpmath.mpf(li.L.numerator) / li.L.denominator
            lhs += mpmath.ldexp(1, lv.k_exp) / Li * mpmath.power(li.mp_n() / mpmath.ldexp(1, li.I), 1 / pm)
        rhs = mpmath.power(lv.mp_n(), 1 / pm) / 2
        return bool(lhs < rhs), +lhs, +rhs


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def schedule_to_text(s: CounterExampleSchedule) -> str:
    lines = [f"p={s.p!r}", f"mode={s.mode}", f"levels={len(s)}", f"prefix_tol={s.prefix_tol}", f"partial_sum_budget={s.partial_sum_budget!r}"]
    for l, lv in enumerate(s.levels, start=1):
        lines.append(f"L.{l}={lv.L}")
        lines.append(f"J.{l}={lv.J}")
        lines.append(f"I.{l}={lv.I}")
        lines.append(f"n.{l}=2^{lv.n_exp}" if lv.n_exp is not None else f"n.{l}={lv.n}")
    return "\n".join(lines) + "\n"


def schedule_from_text(text: str) -> CounterExampleSchedule:
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad schedule line {raw!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        kv[key] = val
    try:
        count = int(kv["levels"])
        levels = []
        for l in range(1, count + 1):
            nraw = kv[f"n.{l}"]
            if nraw.startswith("2^"):
                e = int(nraw[2:])
                n, n_exp = ((1 << e) if e <= 62 else None), e
            else:
                n, n_exp = int(nraw), None
            levels.append(Level(Fraction(kv[f"L.{l}"]), int(kv[f"J.{l}"]), int(kv[f"I.{l}"]), n=n, n_exp=n_exp))
        return CounterExampleSchedule(
            float(kv["p"]),
            kv.get("mode", "desk"),
            tuple(levels),
            Fraction(kv.get("prefix_tol", str(DEFAULT_PREFIX_TOL))),
            float(kv.get("partial_sum_budget", repr(math.pi**2 / 6))),
        )
    except KeyError as exc:
        raise ValueError(f"missing schedule key {exc}") from None
