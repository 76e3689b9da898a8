"""End-to-end exit criteria, one test each.

Every test records a PASS/FAIL line that pytest prints in the
``acceptance criteria`` summary section.  Monte Carlo thresholds that were
chosen from pilot runs are frozen here as constants together with the pilot
that produced them.
"""
import math
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from holderip import counterexample as ce
from holderip.harness import ExperimentConfig, run_experiment
from holderip.holder import (
    build_polygonal,
    grid_coefficients,
    holder_modulus,
    increment_seq_bound,
    schauder_coefficients,
    sequential_norm,
    tightness_statistic,
    vertex_norm,
)
from holderip.processes import GeneratorSpec
from holderip.weak_lp import SimpleFunction, kappa, np_norm, quasi_norm_pair, weak_norm_exact

pytestmark = pytest.mark.acceptance

# modulus-event floor: pilot p=3 desk schedule, seed 101, 200 replicas,
# min over levels of (estimate - 4 se) = 0.724, rounded down to a 0.05 grid
MODULUS_FLOOR = 0.70
# tail threshold: 0.95 quantile of the beta = 2p vertex norm, p=3, n=2**10,
# pilot seed 101 with 4000 replicas
TAIL_M = 2.6541444275080255


def _fuzzed_paths(count, n_max, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, n_max + 1))
        kind = rng.integers(3)
        if kind == 0:
            x = rng.standard_normal(n)
        elif kind == 1:
            x = rng.choice([-1.0, 1.0], n) * (1.0 - rng.random(n)) ** -0.4
        else:
            x = rng.integers(-3, 4, n).astype(float)
        p = float(rng.uniform(2.05, 12.0))
        yield build_polygonal(x), 0.5 - 1.0 / p


def _brute_sequential(path, alpha, j_max=24):
    """Weighted coefficient sup from direct path evaluation on levels ``0..j_max``."""
    n = path.n
    best = max(abs(float(path(0.0))), abs(float(path(1.0))))
    kinks = np.arange(1, n)
    for j in range(1, j_max + 1):
        h = 2.0**-j
        cells = 1 << (j - 1)
        if cells <= 4 * n:
            k = np.arange(cells)
        else:
            # only cells meeting a vertex can carry a nonzero coefficient
            c = (kinks * cells) // n
            k = np.unique(np.concatenate([c, np.maximum(c - 1, 0)]))
        if k.size == 0:
            continue
        r = (2 * k + 1) * h
        lam = path(r) - 0.5 * (path(r - h) + path(r + h))
        best = max(best, 2 ** (alpha * j) * float(np.abs(lam).max()))
    return best


def _brute_vertex(path, alpha):
    v = path.values
    n = path.n
    i, j = np.triu_indices(n + 1, 1)
    return float((np.abs(v[j] - v[i]) / ((j - i) / n) ** alpha).max())


def test_norm_engine_exactness(criterion):
    paths = list(_fuzzed_paths(1000, 256, seed=1))
    t0 = time.perf_counter()
    seq = [sequential_norm(schauder_coefficients(p, a)) for p, a in paths]
    vert = [vertex_norm(p, a) for p, a in paths]
    modu = [holder_modulus(p, a, 1.0) for p, a in paths]
    elapsed = time.perf_counter() - t0
    err_seq = max(abs(s - _brute_sequential(p, a)) / max(s, 1e-300) for s, (p, a) in zip(seq, paths))
    err_vm = max(abs(v - m) / max(v, 1e-300) for v, m in zip(vert, modu))
    err_vb = max(abs(v - _brute_vertex(p, a)) / max(v, 1e-300) for v, (p, a) in zip(vert, paths))
    ok = err_seq <= 1e-12 and err_vm <= 1e-12 and err_vb <= 1e-12 and elapsed < 10
    criterion(1, ok, f"seq rel err {err_seq:.1e}, vertex/modulus {err_vm:.1e}, vertex/brute {err_vb:.1e}, "
                     f"{elapsed:.2f} s")
    assert ok


def test_coefficient_increment_inequalities_exact(criterion):
    """Checked in rational arithmetic on the exact path values, so no tolerance."""
    bad, checked = 0, 0
    float_bad = 0
    for path, alpha in _fuzzed_paths(300, 64, seed=2):
        j_last = max(1, math.ceil(math.log2(2 * path.n))) + 2
        for j in range(1, j_last + 1):
            vals, lam = grid_coefficients(path, j)
            inc = [abs(b - a) for a, b in zip(vals, vals[1:])]
            for k, lk in enumerate(lam):
                left, right = inc[2 * k], inc[2 * k + 1]
                checked += 1
                bad += not (abs(lk) <= left / 2 + right / 2 <= max(left, right))
            # level-wise: coefficient max never exceeds the increment max on the same grid
            checked += 1
            bad += not (max(abs(x) for x in lam) <= max(inc))
        # the floating-point quantities inherit the ordering up to rounding
        float_bad += not (tightness_statistic(path, alpha, 1) <= increment_seq_bound(path, alpha) * (1 + 1e-13))
    ok = bad == 0 and float_bad == 0
    criterion(2, ok, f"{checked} exact comparisons, {bad} violations; float ordering violations {float_bad}")
    assert ok


def test_weak_lp_suite(criterion):
    notes, ok = [], True
    for p in (2.5, 3.0, 4.0):
        f, g = quasi_norm_pair(p, 10**6)
        nf = weak_norm_exact(SimpleFunction.from_sample(f), p)
        ng = weak_norm_exact(SimpleFunction.from_sample(g), p)
        nfg = weak_norm_exact(SimpleFunction.from_sample(f + g), p)
        target = 2 ** (1 + 1 / p)
        ok &= nfg >= target * (1 - 1e-3) and abs(nf + ng - 2) <= 1e-3
        notes.append(f"p={p}: |f+g|={nfg:.5f} vs {target:.5f}, |f|+|g|={nf + ng:.6f}")

    # kappa from the extremal profile x**(-1/p): sup_t t**(1/p - 1) int_0^t x**(-1/p) dx
    rng = np.random.default_rng(3)
    sandwich_bad = 0
    with mpmath.workdps(40):
        for p in (1.5, 2.5, 3.0, 4.0, 8.0):
            mp = mpmath.mpf(p)
            derived = mpmath.quad(lambda x: x ** (-1 / mp), [0, 1])
            ok &= abs(float(derived) - kappa(p)) <= 1e-12 * kappa(p)
    for _ in range(10**4):
        p = float(rng.uniform(1.05, 10.0))
        k = int(rng.integers(1, 25))
        f = SimpleFunction.from_atoms(rng.exponential(1.0, k) * rng.choice([-1, 1], k), rng.dirichlet(np.ones(k)))
        w, N = weak_norm_exact(f, p), np_norm(f, p)
        sandwich_bad += not (w * (1 - 1e-12) <= N <= kappa(p) * w * (1 + 1e-12))
    ok &= sandwich_bad == 0
    criterion(3, ok, "; ".join(notes) + f"; sandwich violations {sandwich_bad}/10000")
    assert ok


def _schedules():
    for p in (2.5, 3.0, 4.0, 6.0):
        for mode in ("desk", "faithful"):
            yield ce.build_schedule(p, mode, 3)


def test_tower_weak_norm_exact(criterion):
    checked, bad = 0, []
    for s in _schedules():
        kp = mpmath.mpf(ce.kappa_prime(s.p))
        for l in range(1, len(s) + 1):
            lv = s.level(l)
            if not lv.is_explicit:
                continue
            eps = Fraction(ce.level_tower(lv.n).eps)
            w = ce.f_l_weak_power_exact(s, l, eps)
            main = ce.f_l_weak_power_exact(s, l, Fraction(1, lv.n), main_only=True)
            with mpmath.workdps(60):
                full_ok = mpmath.mpf(w.numerator) / w.denominator <= kp**s.p
            main_ok = main <= 2 and main == ce.main_part_closed_form(lv.J)
            checked += 1
            if not (full_ok and main_ok):
                bad.append((s.p, s.mode, l))
    ok = not bad and checked > 0
    criterion(4, ok, f"{checked} explicit levels, failures {bad}")
    assert ok


def _status_ok(rows):
    return all(r.status == "pass" for r in rows) and len(rows) > 0


def test_counterexample_chain(criterion):
    cfg = ExperimentConfig("counterexample", p=3.0, replicas=10**4, seed=7, params={"floor": MODULUS_FLOOR})
    t0 = time.perf_counter()
    rep = run_experiment(cfg, write=False)
    elapsed = time.perf_counter() - t0
    chain = [r for r in rep.rows if r.statistic.startswith("chain_") and r.status != "n/a"]
    chain_bad = [(r.statistic, r.index) for r in chain if r.status != "pass"]
    modulus = rep.named("modulus_event")
    decay = rep.named("control_decay")
    sizes_ok = max(r.n for r in modulus) <= 10**6 and len(modulus) == 3
    # the literal constants need the faithful schedule: the desk schedule fails
    # the static bound somewhere, the faithful one does not
    desk_static = [r for r in rep.rows if r.statistic == "schedule_static_bound"]
    faithful_ok = ce.validate_schedule(ce.build_schedule(3.0, "faithful", 3)).ok
    documented = any(r.status == "fail" for r in desk_static) and faithful_ok
    ok = (not chain_bad and _status_ok(modulus) and _status_ok(decay) and sizes_ok and documented
          and elapsed < 600)
    mods = ", ".join(f"{r.estimate:.3f}" for r in modulus)
    criterion(5, ok, f"{len(chain)} chain rows, failing {chain_bad}; modulus event {mods} > {MODULUS_FLOOR}; "
                     f"control ratio {decay[0].estimate:.2f}; {elapsed:.0f} s")
    assert ok


def test_inequality_oracles(criterion):
    base = {"y_points": 256, "t_points": 64, "R_grid": [2.0 ** (k / 2) for k in range(-4, 13)],
            "tail_sum_cases": 25000}
    runs = [
        (GeneratorSpec("iid_rademacher"), 11, dict(base, dyadic_n_max=8192)),
        # the dyadic rows do not depend on the generator, so they run once
        (GeneratorSpec("gf_martingale", {"schedule": "desk", "p": 3.0}), 12, dict(base, dyadic_n_max=1)),
    ]
    total, failures = 0, []
    for gen, seed, prm in runs:
        cfg = ExperimentConfig("inequalities", gen, 3.0, (64, 256, 1024, 4096), 500, seed, params=prm)
        rep = run_experiment(cfg, write=False)
        total += sum(r.status in ("pass", "fail") for r in rep.rows)
        failures += [(gen.kind, r.statistic, r.n) for r in rep.failures()]
    ok = total >= 10**5 and not failures
    criterion(6, ok, f"{total} bound evaluations, violations {failures[:5]}")
    assert ok


def test_donsker_control(criterion):
    cfg = ExperimentConfig("donsker", GeneratorSpec("iid_gaussian"), 4.0, (2**14,), 10**4, 7,
                           J_grid=(2, 4, 6, 8), eps_grid=(0.5,))
    rep = run_experiment(cfg, write=False)
    probs = [r.estimate for r in rep.named("tightness_prob")]
    steps = rep.named("tightness_step")
    ks = rep.named("endpoint_ks")[0]
    ok = all(b < a for a, b in zip(probs, probs[1:])) and _status_ok(steps) and ks.status == "pass"
    step_txt = ", ".join(f"{r.estimate:.4f}+-{r.mcse:.4f}" for r in steps)
    criterion(7, ok, f"P(stat > 0.5) over J=2,4,6,8: {', '.join(f'{p:.4f}' for p in probs)}; "
                     f"steps {step_txt}; KS p={ks.estimate:.3f}")
    assert ok


def test_tail_boundary(criterion):
    p = 3.0
    cfg = ExperimentConfig("tail_boundary", GeneratorSpec("iid_pareto", {"beta": p}), p,
                           tuple(2**k for k in range(10, 17)), 10**4, 7, params={"M": TAIL_M})
    rep = run_experiment(cfg, write=False)
    verdict = {}
    for idx, beta in enumerate((p, 2 * p)):
        rows = [r for r in rep.rows if r.index == idx and r.statistic in ("exceed_step", "exceed_trend")]
        verdict[beta] = _status_ok(rows)
    curves = {beta: [r.estimate for r in rep.named("norm_exceed") if r.index == idx]
              for idx, beta in enumerate((p, 2 * p))}
    ok = all(verdict.values())
    detail = "; ".join(f"beta={b}: {'ok' if verdict[b] else 'wrong trend'} "
                       f"[{', '.join(f'{v:.4f}' for v in curves[b])}]" for b in curves)
    criterion(8, ok, f"M={TAIL_M:.4f}; {detail}")
    assert ok


def test_hannan_experiment(criterion):
    spec = GeneratorSpec("linear_process", {"coeffs": [2.0**-i for i in range(16)]})
    cfg = ExperimentConfig("hannan", spec, 4.0, (4096,), 20, 7, params={"K_grid": [0, 2, 4, 8]})
    rep = run_experiment(cfg, write=False)
    tau = rep.named("residual_kendall_tau")[0]
    cob = rep.named("coboundary_bound")[0]
    ok = tau.status == "pass" and cob.status == "pass"
    criterion(9, ok, f"Kendall tau {tau.estimate:.3f} ({tau.params}); coboundary {cob.params}")
    assert ok


def test_determinism_across_threads(criterion, tmp_path):
    configs = [
        ExperimentConfig("donsker", GeneratorSpec("iid_gaussian"), 4.0, (512, 2048), 64, 3, J_grid=(2, 4)),
        ExperimentConfig("tail_boundary", GeneratorSpec("iid_pareto", {"beta": 3.0}), 3.0, (256, 512), 64, 3,
                         params={"M": 2.0}),
        ExperimentConfig("counterexample", p=3.0, replicas=64, seed=3, params={"levels": [1, 2]}),
        ExperimentConfig("hannan", GeneratorSpec("linear_process", {"coeffs": [2.0**-i for i in range(8)]}),
                         4.0, (512,), 16, 3),
        ExperimentConfig("inequalities", GeneratorSpec("iid_rademacher"), 3.0, (128,), 64, 3,
                         params={"tail_sum_cases": 100, "dyadic_n_max": 32}),
    ]
    differ = []
    for cfg in configs:
        blobs = []
        for threads in (1, 4, 8):
            out = tmp_path / f"{cfg.experiment}_{threads}"
            run_experiment(cfg.replace(threads=threads, output_dir=str(out)))
            blobs.append((out / f"{cfg.experiment}.csv").read_bytes())
        if not blobs[0] == blobs[1] == blobs[2]:
            differ.append(cfg.experiment)
    ok = not differ
    criterion(10, ok, f"{len(configs)} experiments x 3 thread counts, differing: {differ}")
    assert ok
