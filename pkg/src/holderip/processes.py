"""Seeded generators for stationary sequences, Hannan projections, and the
martingale-coboundary split of finite linear processes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "GeneratorSpec",
    "SamplePath",
    "KINDS",
    "make_rng",
    "generate",
    "innovations",
    "innovation_p_norm",
    "pareto_xmin",
    "HannanReport",
    "hannan_projections",
    "CoboundarySplit",
    "martingale_coboundary_split",
    "eta_estimate",
    "truncate_martingale",
]

KINDS = (
    "iid_gaussian",
    "iid_rademacher",
    "iid_pareto",
    "linear_process",
    "gf_martingale",
    "bounded_martingale",
    "zero",
)

RADEMACHER = {-1.0: 0.5, 1.0: 0.5}


@dataclass(frozen=True)
class GeneratorSpec:
    """Generator kind, its parameters and a 64-bit base seed.

    Parameters by kind:

    * ``iid_pareto``: ``beta`` (tail exponent), ``symmetric`` (default True)
    * ``linear_process``: ``coeffs`` (a_0..a_K), ``innovation`` (one of
      gaussian, rademacher, pareto) and ``beta`` for pareto innovations
    * ``gf_martingale``: ``schedule`` (a schedule object, a schedule file
      path, or ``"desk"``), ``p`` and ``active_levels``
    * ``bounded_martingale``: ``R`` and ``base`` (a nested spec dict of a
      martingale generator, default iid_gaussian)
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        prm = self.params
        if self.kind == "iid_pareto" and not float(prm.get("beta", 0)) > 0:
            raise ValueError("pareto beta must be positive")
        if self.kind == "linear_process":
            a = np.asarray(prm.get("coeffs", []), dtype=float)
            if a.size == 0 or not np.all(np.isfinite(a)):
                raise ValueError("linear_process needs finite coeffs")
            if prm.get("innovation", "gaussian") not in ("gaussian", "rademacher", "pareto"):
                raise ValueError("unknown innovation kind")
            if prm.get("innovation") == "pareto" and not float(prm.get("beta", 0)) > 0:
                raise ValueError("pareto beta must be positive")
        if self.kind == "bounded_martingale" and not float(prm.get("R", 0)) > 0:
            raise ValueError("bounded_martingale needs R > 0")

    def with_seed(self, seed: int) -> "GeneratorSpec":
        return GeneratorSpec(self.kind, dict(self.params), int(seed))

    def to_dict(self) -> dict:
        prm = {k: v for k, v in self.params.items() if k != "schedule" or isinstance(v, str)}
        return {"kind": self.kind, "params": prm, "seed": int(self.seed)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(d["kind"], dict(d.get("params", {})), int(d.get("seed", 0)))


@dataclass
class SamplePath:
    """``values`` of length ``n`` plus, for martingale generators, the
    conditional structure ``m = g * f`` with ``f`` measurable for the past.

    ``aux`` may hold ``f`` (array), ``g`` (array), ``g_law`` (dict of
    atoms or ``"gaussian"`` / ``"symmetric"``), ``g_m2`` (E g**2) and
    ``g_abs`` (E|g|).
    """

    values: np.ndarray
    spec: GeneratorSpec
    n: int
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.n,):
            raise ValueError("length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite values")

    @property
    def is_martingale(self) -> bool:
        return "f" in self.aux

    def cond_second_moment(self) -> np.ndarray:
        """``E[m**2 | past]`` along the path."""
        if not self.is_martingale:
            raise ValueError("generator exposes no conditional structure")
        return self.aux["f"] ** 2 * self.aux["g_m2"]

    def cond_abs(self) -> np.ndarray:
        """``E[|m| | past]`` along the path."""
        if not self.is_martingale:
            raise ValueError("generator exposes no conditional structure")
        return np.abs(self.aux["f"]) * self.aux["g_abs"]


def make_rng(seed: int, replica: int | None = None) -> np.random.Generator:
    """Independent stream per ``(seed, replica)``."""
    entropy = [int(seed)] if replica is None else [int(seed), int(replica)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def pareto_xmin(beta: float) -> float:
    """Scale giving unit variance for ``beta > 2`` (``E X**2 = x_m**2 beta/(beta-2)``); 1 otherwise."""
    return math.sqrt((beta - 2.0) / beta) if beta > 2 else 1.0


def innovations(kind: str, rng: np.random.Generator, size: int, beta: float | None = None) -> np.ndarray:
    if kind == "gaussian":
        return rng.standard_normal(size)
    if kind == "rademacher":
        return 2.0 * rng.integers(0, 2, size).astype(np.float64) - 1.0
    if kind == "pareto":
        xm = pareto_xmin(beta)
        mag = xm * (1.0 - rng.random(size)) ** (-1.0 / beta)
        sign = 2.0 * rng.integers(0, 2, size).astype(np.float64) - 1.0
        return sign * mag
    raise ValueError(f"unknown innovation kind {kind!r}")


def innovation_p_norm(kind: str, p: float, beta: float | None = None) -> float:
    """``(E|eps|**p)**(1/p)`` in closed form."""
    if kind == "gaussian":
        return (2 ** (p / 2) * special.gamma((p + 1) / 2) / math.sqrt(math.pi)) ** (1 / p)
    if kind == "rademacher":
        return 1.0
    if kind == "pareto":
        if beta <= p:
            return math.inf
        return pareto_xmin(beta) * (beta / (beta - p)) ** (1 / p)
    raise ValueError(f"unknown innovation kind {kind!r}")


def _iid_aux(kind, n, beta=None):
    f = np.ones(n)
    if kind == "gaussian":
        return {"f": f, "g_law": "gaussian", "g_m2": 1.0, "g_abs": math.sqrt(2 / math.pi)}
    if kind == "rademacher":
        return {"f": f, "g_law": RADEMACHER, "g_m2": 1.0, "g_abs": 1.0}
    xm = pareto_xmin(beta)
    m2 = xm**2 * beta / (beta - 2) if beta > 2 else math.inf
    ab = xm * beta / (beta - 1) if beta > 1 else math.inf
    return {"f": f, "g_law": "symmetric", "g_m2": m2, "g_abs": ab}


@lru_cache(maxsize=16)
def _desk_schedule(p, prefix_length):
    from .schedule import build_schedule

    return build_schedule(p, "desk", prefix_length)


def _resolve_schedule(prm):
    from . import counterexample as ce

    sch = prm.get("schedule", "desk")
    if isinstance(sch, ce.CounterExampleSchedule):
        return sch
    if sch == "desk":
        return _desk_schedule(float(prm.get("p", 3.0)), int(prm.get("prefix_length", 3)))
    with open(sch) as fh:
        return ce.schedule_from_text(fh.read())


def generate(spec: GeneratorSpec, n: int, replica: int | None = None) -> SamplePath:
    """Draw ``n`` consecutive values of the stationary sequence described by ``spec``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(spec.seed, replica)
    prm = spec.params
    kind = spec.kind
    if kind == "zero":
        z = np.zeros(n)
        return SamplePath(z, spec, n, {"f": z.copy(), "g": z.copy(), "g_law": "symmetric", "g_m2": 0.0, "g_abs": 0.0})
    if kind in ("iid_gaussian", "iid_rademacher"):
        inn = kind[4:]
        x = innovations(inn, rng, n)
        aux = _iid_aux(inn, n)
        aux["g"] = x
        return SamplePath(x, spec, n, aux)
    if kind == "iid_pareto":
        beta = float(prm["beta"])
        x = innovations("pareto", rng, n, beta)
        if not prm.get("symmetric", True):
            x = np.abs(x)
            return SamplePath(x, spec, n)
        aux = _iid_aux("pareto", n, beta)
        aux["g"] = x
        return SamplePath(x, spec, n, aux)
    if kind == "linear_process":
        a = np.asarray(prm["coeffs"], dtype=np.float64)
        K = a.size - 1
        eps = innovations(prm.get("innovation", "gaussian"), rng, n + K, prm.get("beta"))
        x = np.convolve(eps, a, mode="valid") if K > 0 else a[0] * eps
        return SamplePath(x, spec, n, {"innovations": eps})
    if kind == "gf_martingale":
        from .counterexample import eval_m_path

        sch = _resolve_schedule(prm)
        active = prm.get("active_levels", list(range(1, len(sch.levels) + 1)))
        m, f, g = eval_m_path(sch, active, n, rng)
        return SamplePath(m, spec, n, {"f": f, "g": g, "g_law": RADEMACHER, "g_m2": 1.0, "g_abs": 1.0})
    if kind == "bounded_martingale":
        base = GeneratorSpec.from_dict(prm.get("base", {"kind": "iid_gaussian"})).with_seed(spec.seed)
        path = generate(base, n, replica)
        mR, _ = truncate_martingale(path, float(prm["R"]))
        return SamplePath(mR, spec, n, {"base": path})
    raise ValueError(f"unknown generator kind {kind!r}")


# ---------------------------------------------------------------------------
# Hannan projections
# ---------------------------------------------------------------------------


@dataclass
class HannanReport:
    projections: np.ndarray
    tail_sums: np.ndarray  # tail_sums[K] = sum_{i > K} ||P_i(f)||_p
    total: float
    summable: bool


def hannan_projections(
    a: Sequence[float] | Callable[[int], float],
    innovation_p_norm: float,
    p: float,
    horizon: int = 1 << 16,
) -> HannanReport:
    """``||P_i(f)||_p = |a_i| ||eps||_p`` for a causal linear process.

    A coefficient callable is evaluated on ``0..horizon-1``; the series is
    flagged as divergent when the last doubling block still carries more
    than ``1e-3`` of the running total.
    """
    if callable(a):
        coeffs = np.array([a(i) for i in range(horizon)], dtype=np.float64)
        finite_support = False
    else:
        coeffs = np.asarray(a, dtype=np.float64)
        finite_support = True
    proj = np.abs(coeffs) * innovation_p_norm
    total = float(proj.sum())
    csum = np.cumsum(proj)
    tails = total - csum
    tails[tails < 0] = 0.0
    summable = bool(np.isfinite(total))
    if summable and not finite_support and total > 0:
        block = float(proj[horizon // 2 :].sum())
        summable = block <= 1e-3 * total
    return HannanReport(proj, tails, total, summable)


# ---------------------------------------------------------------------------
# martingale + coboundary split of a finite linear process
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoboundarySplit:
    """``f_K = m_K + g_K - g_K o T`` for ``f_K(t) = sum_{i<=K} a_i eps_{t-i}``.

    ``m_K(t) = A_K eps_t`` with ``A_K = sum_{i<=K} a_i`` and
    ``g_K(t) = sum_{j=1}^K T_j eps_{t-j}`` with ``T_j = sum_{i=j}^K a_i``.
    Path methods take an innovation array ``eps`` with ``eps[K + t] = eps_t``
    for ``t = -K..n-1``.
    """

    a: np.ndarray
    K: int
    A: float
    tails: np.ndarray  # tails[j-1] = T_j

    def _n(self, eps):
        n = eps.shape[0] - self.K
        if n < 1:
            raise ValueError("innovation array too short")
        return n

    def f_path(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=np.float64)
        n = self._n(eps)
        out = np.zeros(n)
        for i in range(self.K + 1):
            out += self.a[i] * eps[self.K - i : self.K - i + n]
        return out

    def m_path(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=np.float64)
        n = self._n(eps)
        return self.A * eps[self.K : self.K + n]

    def g_path(self, eps) -> np.ndarray:
        """``g_K(t)`` for ``t = 0..n`` (one more value than the other paths)."""
        eps = np.asarray(eps, dtype=np.float64)
        n = self._n(eps)
        out = np.zeros(n + 1)
        for j in range(1, self.K + 1):
            out += self.tails[j - 1] * eps[self.K - j : self.K - j + n + 1]
        return out


def martingale_coboundary_split(a, K: int) -> CoboundarySplit:
    a = np.asarray(a, dtype=np.float64)
    if K < 0:
        raise ValueError("K must be non-negative")
    aK = np.zeros(K + 1)
    m = min(K + 1, a.size)
    aK[:m] = a[:m]
    tails = np.array([aK[j:].sum() for j in range(1, K + 1)])
    return CoboundarySplit(aK, int(K), float(aK.sum()), tails)


# ---------------------------------------------------------------------------
# eta and truncation
# ---------------------------------------------------------------------------


def eta_estimate(paths, return_se: bool = False):
    """Monte Carlo mean of ``S_n**2 / n``."""
    vals = []
    for p in paths:
        x = p.values if isinstance(p, SamplePath) else np.asarray(p, dtype=np.float64)
        vals.append(float(np.sum(x)) ** 2 / x.size)
    if not vals:
        raise ValueError("need at least one path")
    est = float(np.mean(vals))
    if return_se:
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.inf
        return est, se
    return est


def _truncated_cond_mean(f, law, R):
    """``E[g 1{|g f| <= R}]`` for each value of ``f``."""
    if isinstance(law, str):
        if law in ("gaussian", "symmetric"):
            return np.zeros_like(f)
        raise ValueError(f"unknown law {law!r}")
    out = np.zeros_like(f)
    af = np.abs(f)
    for v, prob in law.items():
        out += prob * v * (np.abs(v) * af <= R)
    return out


def truncate_martingale(path: SamplePath, R: float):
    """Split ``m = m_R + m'_R`` with ``m_R = m 1{|m|<=R} - E[m 1{|m|<=R} | past]``."""
    if not path.is_martingale or "g_law" not in path.aux:
        raise ValueError("generator exposes no conditional structure")
    if not R > 0:
        raise ValueError("R must be positive")
    m = path.values
    f = path.aux["f"]
    cm = f * _truncated_cond_mean(f, path.aux["g_law"], R)
    mR = np.where(np.abs(m) <= R, m, 0.0) - cm
    return mR, m - mR
