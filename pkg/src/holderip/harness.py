"""Batch experiments: configuration, replica parallelism and CSV reports.

Each replica draws from its own stream ``(seed, replica)`` and results are
gathered in replica order, so a report depends only on the configuration
and never on the number of threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np
from scipy import stats

from . import counterexample as ce
from ._kernels import max_pair_ratio
from .holder import build_polygonal, tightness_statistic, vertex_norm
from .oracles import (
    OracleReport,
    doob_type_check,
    dyadic_geometric_sum,
    level_split_check,
    nagaev_check,
    tail_sum_check,
    truncation_tail_transfer,
)
from .processes import (
    GeneratorSpec,
    generate,
    hannan_projections,
    innovation_p_norm,
    innovations,
    make_rng,
    martingale_coboundary_split,
)

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "ReportRow",
    "ExperimentReport",
    "replica_map",
    "run_experiment",
    "run_donsker",
    "run_tail_boundary",
    "run_counterexample",
    "run_hannan",
    "run_inequalities",
    "pilot_threshold",
    "coboundary_norm_check",
]

EXPERIMENTS = ("donsker", "tail_boundary", "counterexample", "hannan", "inequalities")
SIGMAS = 4.0
KS_REFERENCE_DRAWS = 10**5


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


def _ints(xs, name):
    try:
        out = tuple(int(x) for x in xs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of integers") from exc
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    generator: GeneratorSpec = field(default_factory=lambda: GeneratorSpec("iid_gaussian"))
    p: float = 4.0
    n_grid: tuple = (1024,)
    replicas: int = 100
    seed: int = 0
    J_grid: tuple = (2, 4, 6, 8)
    eps_grid: tuple = (0.5,)
    output_dir: str | None = None
    threads: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not isinstance(self.generator, GeneratorSpec):
            raise ConfigError("generator must be a GeneratorSpec")
        object.__setattr__(self, "n_grid", _ints(self.n_grid, "n_grid"))
        object.__setattr__(self, "J_grid", _ints(self.J_grid, "J_grid"))
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        object.__setattr__(self, "p", float(self.p))
        if not self.n_grid or min(self.n_grid) < 1:
            raise ConfigError("n_grid must be a nonempty list of positive integers")
        if any(J < 0 for J in self.J_grid):
            raise ConfigError("J_grid entries must be non-negative")
        if not self.p > 2:
            raise ConfigError("p must exceed 2")
        if int(self.replicas) < 1:
            raise ConfigError("replicas must be positive")
        if int(self.threads) < 1:
            raise ConfigError("threads must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if any(not e > 0 for e in self.eps_grid):
            raise ConfigError("eps_grid entries must be positive")

    @property
    def alpha(self) -> float:
        return 0.5 - 1.0 / self.p

    @property
    def spec(self) -> GeneratorSpec:
        """The generator reseeded with the experiment seed."""
        return self.generator.with_seed(int(self.seed))

    def replace(self, **kw) -> "ExperimentConfig":
        d = {**self.__dict__, **kw}
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "generator": self.generator.to_dict(),
            "p": self.p,
            "n_grid": list(self.n_grid),
            "replicas": int(self.replicas),
            "seed": int(self.seed),
            "J_grid": list(self.J_grid),
            "eps_grid": list(self.eps_grid),
            "output_dir": self.output_dir,
            "threads": int(self.threads),
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            if "generator" in d:
                d["generator"] = GeneratorSpec.from_dict(d["generator"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


@dataclass
class ReportRow:
    statistic: str
    n: int
    index: int
    estimate: float
    mcse: float | None
    threshold: float | None
    status: str
    seed: int
    params: str = ""

    def as_csv(self) -> list:
        return [self.statistic, self.n, self.index, _num(self.estimate), _num(self.mcse), _num(self.threshold),
                self.status, self.seed, self.params]


CSV_HEADER = ["statistic", "n", "index", "estimate", "mcse", "threshold", "status", "seed", "params"]


@dataclass
class ExperimentReport:
    experiment: str
    seed: int
    rows: list = field(default_factory=list)

    def add(self, statistic, n, index, estimate, mcse=None, threshold=None, status="n/a", **params):
        if isinstance(status, (bool, np.bool_)):
            status = "pass" if status else "fail"
        txt = ";".join(f"{k}={params[k]}" for k in sorted(params))
        row = ReportRow(statistic, int(n), int(index), float(estimate), mcse, threshold, status, int(self.seed), txt)
        self.rows.append(row)
        return row

    def named(self, statistic: str) -> list:
        return [r for r in self.rows if r.statistic == statistic]

    def failures(self) -> list:
        return [r for r in self.rows if r.status == "fail"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.as_csv())
        return buf.getvalue()

    def write(self, output_dir: str) -> str:
        os.makedirs(output_dir, exist_ok=True)
        path = os.path.join(output_dir, f"{self.experiment}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        return path


def replica_map(fn, count: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(count - 1)]`` computed on ``threads`` threads."""
    if threads <= 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, range(count)))


def _freq(x):
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    return m, math.sqrt(max(m * (1 - m), 0.0) / x.size)


def _tightness_rows(rep, cfg, n, stat, label=""):
    """Exceedance frequency per ``J`` and the paired drop between consecutive ``J``."""
    R = stat.shape[0]
    for eps in cfg.eps_grid:
        ind = stat > eps
        for i, J in enumerate(cfg.J_grid):
            est, se = _freq(ind[:, i])
            rep.add(f"{label}tightness_prob", n, J, est, se, eps=eps)
        for i in range(len(cfg.J_grid) - 1):
            # the statistic is non-increasing in J, so exceedances are nested
            d = ind[:, i].astype(float) - ind[:, i + 1].astype(float)
            est = float(d.mean())
            se = float(d.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
            rep.add(f"{label}tightness_step", n, cfg.J_grid[i + 1], est, se, se, est > se, eps=eps)


# ---------------------------------------------------------------------------
# Donsker positive control
# ---------------------------------------------------------------------------


def run_donsker(cfg: ExperimentConfig) -> ExperimentReport:
    """Tightness exceedances across ``J`` and the endpoint law against ``N(0, eta)``."""
    rep = ExperimentReport("donsker", cfg.seed)
    spec, alpha = cfg.spec, cfg.alpha
    for n in cfg.n_grid:
        def one(r):
            x = generate(spec, n, r).values
            path = build_polygonal(x)
            return [tightness_statistic(path, alpha, J) for J in cfg.J_grid], float(x.sum()) / math.sqrt(n)

        out = replica_map(one, cfg.replicas, cfg.threads)
        stat = np.array([o[0] for o in out]).reshape(cfg.replicas, len(cfg.J_grid))
        ends = np.array([o[1] for o in out])
        _tightness_rows(rep, cfg, n, stat)
        eta = float(np.mean(ends**2))
        eta_se = float(np.std(ends**2, ddof=1) / math.sqrt(ends.size)) if ends.size > 1 else 0.0
        rep.add("eta_hat", n, 0, eta, eta_se)
        ref_rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), int(n), 1]))
        ref = math.sqrt(eta) * ref_rng.standard_normal(KS_REFERENCE_DRAWS)
        pval = float(stats.ks_2samp(ends, ref).pvalue) if eta > 0 else 1.0
        rep.add("endpoint_ks", n, 0, pval, None, 0.01, pval > 0.01)
    return rep


# ---------------------------------------------------------------------------
# tail boundary
# ---------------------------------------------------------------------------


def _pareto_norms(p, beta, n, replicas, seed, threads):
    spec = GeneratorSpec("iid_pareto", {"beta": float(beta)}, int(seed))
    alpha = 0.5 - 1.0 / p
    return np.array(replica_map(lambda r: vertex_norm(build_polygonal(generate(spec, n, r).values), alpha), replicas, threads))


def pilot_threshold(p: float, beta: float, n: int, replicas: int, seed: int, quantile: float = 0.5, threads: int = 1) -> float:
    """Quantile of the path Hölder norm under Pareto(``beta``) increments, used to freeze ``M``."""
    return float(np.quantile(_pareto_norms(p, beta, n, replicas, seed, threads), quantile))


def run_tail_boundary(cfg: ExperimentConfig) -> ExperimentReport:
    """``P{||n**-1/2 S_n^pl||_alpha > M}`` across ``n`` for Pareto tails at and beyond ``p``.

    ``params``: ``betas`` (default ``[p, 2p]``) and the frozen threshold
    ``M`` (default: the median norm of a pilot run at the first ``n`` and
    the largest ``beta`` with seed ``seed + 1``).
    """
    p = cfg.p
    betas = [float(b) for b in cfg.params.get("betas", [p, 2 * p])]
    M = cfg.params.get("M")
    if M is None:
        M = pilot_threshold(p, max(betas), cfg.n_grid[0], cfg.replicas, (int(cfg.seed) + 1) % 2**64, threads=cfg.threads)
    M = float(M)
    rep = ExperimentReport("tail_boundary", cfg.seed)
    for b, beta in enumerate(betas):
        est, ses = [], []
        for n in cfg.n_grid:
            norms = _pareto_norms(p, beta, n, cfg.replicas, cfg.seed, cfg.threads)
            e, se = _freq(norms > M)
            est.append(e)
            ses.append(se)
            rep.add("norm_exceed", n, b, e, se, beta=beta, M=M)
            rep.add("norm_median", n, b, float(np.median(norms)), beta=beta)
        heavy = beta <= p
        for i in range(1, len(est)):
            d = est[i] - est[i - 1]
            sd = math.hypot(ses[i], ses[i - 1])
            # at the boundary the statistic must not drop; beyond it it must not rise
            ok = d >= -2 * sd if heavy else d <= 2 * sd
            rep.add("exceed_step", cfg.n_grid[i], b, d, sd, -2 * sd if heavy else 2 * sd, ok, beta=beta)
        if len(est) > 1:
            fit = stats.linregress(np.log2(cfg.n_grid), est)
            total = est[-1] - est[0]
            sd = math.hypot(ses[-1], ses[0])
            ok = fit.slope >= 0 if heavy else (fit.slope < 0 and total < -2 * sd)
            rep.add("exceed_trend", cfg.n_grid[-1], b, float(fit.slope), float(fit.stderr), 0.0, ok,
                    beta=beta, change=total)
    return rep


# ---------------------------------------------------------------------------
# counter-example
# ---------------------------------------------------------------------------


def _schedule_for(cfg):
    src = cfg.params.get("schedule", "desk")
    if src == "desk":
        return ce.build_schedule(cfg.p, "desk", int(cfg.params.get("prefix_length", 3)),
                                 require_static_bound=bool(cfg.params.get("require_static_bound", False)))
    with open(src) as fh:
        return ce.schedule_from_text(fh.read())


def _maybe_float(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return math.nan


def run_counterexample(cfg: ExperimentConfig) -> ExperimentReport:
    """Schedule validation, exact weak norms, modulus events with the Gaussian control, and the chain.

    ``params``: ``prefix_length`` (3), ``floor`` (declared lower floor for the
    modulus event, optional), ``levels`` (default all), ``schedule``
    (``"desk"`` or a schedule text file).
    """
    s = _schedule_for(cfg)
    rep = ExperimentReport("counterexample", cfg.seed)
    val = ce.validate_schedule(s)
    for r in val.rows:
        status = "n/a" if r.status == "proxy" else r.status
        rep.add(f"schedule_{r.condition}", 0, r.level, _maybe_float(r.value), None, _maybe_float(r.threshold),
                status, value=r.value)

    kp = ce.kappa_prime(s.p)
    for l in range(1, len(s) + 1):
        lv = s.level(l)
        if not lv.is_explicit:
            continue
        eps = Fraction(ce.level_tower(lv.n).eps)
        w = ce.f_l_weak_power_exact(s, l, eps)
        with mpmath.workdps(50):
            ok = mpmath.mpf(w.numerator) / w.denominator <= mpmath.mpf(kp) ** s.p
        norm = float(w) ** (1 / s.p) / float(lv.L)
        rep.add("tower_weak_norm", lv.n, l, norm, None, kp / float(lv.L), bool(ok))
        main = ce.f_l_weak_power_exact(s, l, Fraction(1, lv.n), main_only=True)
        closed = ce.main_part_closed_form(lv.J)
        rep.add("main_part_weak_power", lv.n, l, float(main), None, 2.0, main == closed and main <= 2,
                closed_form=float(closed))

    levels = [int(x) for x in cfg.params.get("levels", range(1, len(s) + 1))]
    floor = cfg.params.get("floor")
    ctrl = {}
    for l in levels:
        lv = s.level(l)
        sample = ce.simulate_level(s, l, cfg.replicas, int(cfg.seed), control=True, workers=cfg.threads)
        mod = ce.modulus_event_prob(s, l, sample=sample)
        if floor is None:
            rep.add("modulus_event", lv.n, l, mod.p_event, mod.se)
        else:
            fl = float(floor)
            rep.add("modulus_event", lv.n, l, mod.p_event, mod.se, fl, mod.p_event - SIGMAS * mod.se > fl)
        rep.add("gaussian_control", lv.n, l, mod.control, mod.control_se)
        ctrl[l] = (mod.control, mod.control_se)
        chain = ce.lower_bound_chain(s, l, seed=int(cfg.seed), sample=sample)
        for r in chain.rows:
            rep.add(f"chain_{r.name}", lv.n, l, r.lhs, r.se, r.rhs, r.holds, note=r.note)
    if len(levels) > 1:
        (c1, s1), (cL, sL) = ctrl[levels[0]], ctrl[levels[-1]]
        d = c1 - 2 * cL
        sd = math.hypot(s1, 2 * sL)
        ratio = c1 / cL if cL > 0 else math.inf
        rep.add("control_decay", s.level(levels[-1]).n, levels[-1], ratio, sd, 2.0, d > SIGMAS * sd, difference=d)
    return rep


# ---------------------------------------------------------------------------
# Hannan approximation
# ---------------------------------------------------------------------------


def coboundary_norm_check(g: np.ndarray, p: float):
    """Hölder norm of the polygonal line of ``g_u - g_{u+1}`` and the bound ``2 n**(-1/p) max |g|``.

    Increments of the path are differences of ``g`` evaluated directly,
    and the same factor ``n**(-1/p)`` multiplies both sides, so the
    comparison is exact in floating point.
    """
    g = np.asarray(g, dtype=np.float64)
    n = g.size - 1
    alpha = 0.5 - 1.0 / p
    c = float(n) ** (-1.0 / p)
    stat = max_pair_ratio(g, alpha) * c
    bound = (2.0 * float(np.max(np.abs(g)))) * c
    return stat, bound


def run_hannan(cfg: ExperimentConfig) -> ExperimentReport:
    """Tightness of a linear process and of its residuals after the first ``K`` projections.

    ``params``: ``K_grid`` (default ``[0, 2, 4, 8]``).  The residual
    statistic is the mean over replicas of ``sup_{j >= J} 2**(j alpha) max |lambda_r|``
    for ``J = J_grid[0]``; its ordering across ``K`` is compared with the
    tail sums ``sum_{i > K} ||P_i(f)||_p`` by Kendall's tau.
    """
    spec = cfg.spec
    if spec.kind != "linear_process":
        raise ConfigError("the Hannan experiment needs a linear_process generator")
    a = np.asarray(spec.params["coeffs"], dtype=np.float64)
    inn = spec.params.get("innovation", "gaussian")
    beta = spec.params.get("beta")
    Ks = [int(k) for k in cfg.params.get("K_grid", [0, 2, 4, 8])]
    p, alpha = cfg.p, cfg.alpha
    hr = hannan_projections(a, innovation_p_norm(inn, p, beta), p)
    rep = ExperimentReport("hannan", cfg.seed)
    rep.add("projection_total", 0, 0, hr.total, status="pass" if hr.summable else "n/a", summable=hr.summable)
    tails = [float(hr.tail_sums[K]) if K < hr.tail_sums.size else 0.0 for K in Ks]
    for K, t in zip(Ks, tails):
        rep.add("projection_tail_sum", 0, K, t)
    J0 = cfg.J_grid[0] if cfg.J_grid else 0
    Klen = a.size - 1
    for n in cfg.n_grid:
        def one(r):
            eps = innovations(inn, make_rng(spec.seed, r), n + Klen, beta)
            f = np.convolve(eps, a, mode="valid") if Klen > 0 else a[0] * eps
            full = [tightness_statistic(build_polygonal(f), alpha, J) for J in cfg.J_grid]
            resid, cob = [], []
            for K in Ks:
                aK = np.where(np.arange(a.size) > K, a, 0.0)
                x = np.convolve(eps, aK, mode="valid") if Klen > 0 else aK[0] * eps
                resid.append(tightness_statistic(build_polygonal(x), alpha, J0))
                if K < Klen:
                    sp = martingale_coboundary_split(a, K)
                    cob.append(coboundary_norm_check(sp.g_path(eps[Klen - K:]), p))
            return full, resid, cob

        out = replica_map(one, cfg.replicas, cfg.threads)
        full = np.array([o[0] for o in out]).reshape(cfg.replicas, len(cfg.J_grid))
        resid = np.array([o[1] for o in out])
        if hr.summable:
            _tightness_rows(rep, cfg, n, full)
        else:
            for i, J in enumerate(cfg.J_grid):
                rep.add("tightness_mean", n, J, float(full[:, i].mean()))
        for k, K in enumerate(Ks):
            col = resid[:, k]
            se = float(col.std(ddof=1) / math.sqrt(col.size)) if col.size > 1 else 0.0
            rep.add("residual_tightness", n, K, float(col.mean()), se, J=J0)
        if hr.summable and len(Ks) > 1:
            tau = stats.kendalltau(np.tile(tails, cfg.replicas), resid.ravel())
            stat = float(tau.statistic) if np.isfinite(tau.statistic) else 0.0
            pv = float(tau.pvalue) if np.isfinite(tau.pvalue) else 1.0
            rep.add("residual_kendall_tau", n, 0, stat, None, 0.0, stat > 0 and pv < 0.05, pvalue=pv)
        worst, bad, total = 0.0, 0, 0
        for o in out:
            for st_, bd in o[2]:
                total += 1
                bad += st_ > bd
                worst = max(worst, st_ / bd if bd > 0 else 0.0)
        if total:
            rep.add("coboundary_bound", n, 0, worst, None, 1.0, bad == 0, violations=bad, checks=total)
    return rep


# ---------------------------------------------------------------------------
# inequality oracles
# ---------------------------------------------------------------------------


def _oracle_rows(rep: ExperimentReport, orep: OracleReport, start: int = 0):
    for i, r in enumerate(orep.rows):
        prm = {k: v for k, v in r.params.items()}
        rep.add(r.check, r.n, start + i, r.lhs, r.se, r.rhs, r.passed, **prm)
    return start + len(orep.rows)


def run_inequalities(cfg: ExperimentConfig) -> ExperimentReport:
    """Seeded suite of the proven inequalities.

    ``params``: ``y_points`` (32), ``R_grid`` (``2**k``, ``k = -2..6``),
    ``t_points`` (16), ``dyadic_p_grid`` (``[2.5, 3, 4, 6]``),
    ``dyadic_n_max`` (256), ``tail_sum_cases`` (1000), ``truncation_replicas`` (2).
    The tail-transfer rows assume a generator whose ``|g|`` is constant.
    """
    spec, p = cfg.spec, cfg.p
    prm = cfg.params
    rep = ExperimentReport("inequalities", cfg.seed)
    idx = 0
    y_points = int(prm.get("y_points", 32))
    R_grid = [float(r) for r in prm.get("R_grid", [2.0**k for k in range(-2, 7)])]
    for n in cfg.n_grid:
        y = np.geomspace(0.05 * math.sqrt(n), 20 * math.sqrt(n), y_points)
        idx = _oracle_rows(rep, nagaev_check(spec, n, y, cfg.replicas, q=p + 1, eta=1.0), idx)
        idx = _oracle_rows(rep, doob_type_check(spec, n, cfg.replicas), idx)
        t = np.geomspace(0.05, 20, int(prm.get("t_points", 16)))
        idx = _oracle_rows(rep, level_split_check(spec, n, t, p, cfg.replicas), idx)
        idx = _oracle_rows(rep, truncation_tail_transfer(spec, n, R_grid, p, int(prm.get("truncation_replicas", 2)),
                                                         int(prm.get("t_points", 16))), idx)

    nmax = int(prm.get("dyadic_n_max", 256))
    for pp in prm.get("dyadic_p_grid", [2.5, 3.0, 4.0, 6.0]):
        for n in range(2, nmax + 1):
            d = dyadic_geometric_sum(float(pp), n)
            rep.add("dyadic_geometric", n, idx, float(d.value), 0.0, float(d.bound), d.holds, p=float(pp))
            idx += 1

    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 3]))
    for c in range(int(prm.get("tail_sum_cases", 1000))):
        k = int(rng.integers(1, 6))
        vals = np.exp(rng.uniform(-3, 8, k))
        w = rng.dirichlet(np.ones(k))
        lhs, rhs = tail_sum_check(vals, w, p)
        rep.add("dyadic_tail_sum", 0, idx, float(lhs), 0.0, float(rhs), bool(lhs <= rhs), case=c)
        idx += 1
    return rep


_RUNNERS = {
    "donsker": run_donsker,
    "tail_boundary": run_tail_boundary,
    "counterexample": run_counterexample,
    "hannan": run_hannan,
    "inequalities": run_inequalities,
}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentReport:
    rep = _RUNNERS[cfg.experiment](cfg)
    if write and cfg.output_dir:
        rep.write(cfg.output_dir)
    return rep
