import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats

from holderip.oracles import (
    NagaevParams,
    QFunction,
    conditional_truncated_moments,
    doob_type_check,
    dyadic_geometric_sum,
    dyadic_sum_bounds,
    level_split_check,
    moment_maximal_statistic,
    nagaev_bound,
    nagaev_check,
    q_function,
    stein_maximal_check,
    tail_sum_check,
    truncation_tail_transfer,
    weak_power,
)
from holderip.processes import GeneratorSpec, SamplePath, generate
from holderip.weak_lp import SimpleFunction, weak_norm_exact

GF1 = GeneratorSpec("gf_martingale", {"schedule": "desk", "p": 3.0, "active_levels": [1]}, seed=2)
GF12 = GeneratorSpec("gf_martingale", {"schedule": "desk", "p": 3.0, "active_levels": [1, 2]}, seed=3)


def test_weak_power_matches_simple_function():
    x = np.random.default_rng(0).standard_normal(500)
    assert_allclose(weak_power(x, 3.0), weak_norm_exact(SimpleFunction.from_sample(x), 3.0) ** 3, rtol=1e-12)
    assert weak_power(np.zeros(4), 3.0) == 0.0
    assert weak_power([2.0, 2.0, 0.0, 0.0], 2.0) == 2.0


def test_nagaev_constant_closed_form():
    prm = NagaevParams(4.0, 1.0)
    assert prm.eps_q == 0.25
    ref = 4 * mpmath.exp(3 * mpmath.e**2 - 2)
    assert_allclose(prm.c, float(ref), rtol=1e-13)
    with pytest.raises(ValueError):
        NagaevParams(0.0)


def test_nagaev_bound_trivial_tails():
    prm = NagaevParams(4.0)
    zero = QFunction(8, np.zeros(5), np.zeros(5))
    assert nagaev_bound(zero, 1.0, prm) == 0.0
    full = QFunction(8, np.full(3, np.inf), np.zeros(3))
    assert_allclose(nagaev_bound(full, 2.0, prm), prm.c / prm.q, rtol=1e-15)
    with pytest.raises(ValueError):
        nagaev_bound(zero, 0.0, prm)


def test_nagaev_bound_matches_quadrature():
    rng = np.random.default_rng(4)
    Q = QFunction(16, rng.exponential(size=7), rng.exponential(size=7))
    prm = NagaevParams(3.5, 0.7)
    y = 3.0
    breaks = np.unique(np.concatenate([Q.max_increment, Q.quad_var]) / (prm.eps_q * y))
    breaks = breaks[breaks < 1]
    val = integrate.quad(lambda u: Q(prm.eps_q * u * y) * u ** (prm.q - 1), 0, 1, points=breaks, limit=200)[0]
    assert_allclose(nagaev_bound(Q, y, prm), prm.c * val, rtol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=10), st.floats(0.01, 50), st.floats(0.01, 50))
def test_nagaev_bound_monotone(xs, y1, y2):
    prm = NagaevParams(4.0)
    xs = np.array(xs)
    Q = QFunction(4, xs, xs / 2)
    lo, hi = sorted((y1, y2))
    assert nagaev_bound(Q, hi, prm) <= nagaev_bound(Q, lo, prm) * (1 + 1e-12)
    bigger = QFunction(4, xs + 1, xs / 2)
    assert nagaev_bound(Q, lo, prm) <= nagaev_bound(bigger, lo, prm) * (1 + 1e-12)


def test_q_function_zero_and_bounded():
    zero = [generate(GeneratorSpec("zero"), 32, r) for r in range(5)]
    Q = q_function(zero, 32)
    assert np.all(Q(np.geomspace(1e-6, 10, 20)) == 0)
    rad = [generate(GeneratorSpec("iid_rademacher", seed=1), 64, r) for r in range(20)]
    Q = q_function(rad, 64)
    assert np.all(Q.max_increment_tail([1.0, 2.0]) == 0)
    assert_allclose(Q.quad_var, 8.0)
    assert np.all(np.diff(Q(Q.grid(32))) <= 0)
    with pytest.raises(ValueError):
        q_function([generate(GeneratorSpec("linear_process", {"coeffs": [1.0]}), 8)])


def test_q_function_gaussian_quad_var_constant():
    paths = [generate(GeneratorSpec("iid_gaussian", seed=5), 64, r) for r in range(10)]
    assert_allclose(q_function(paths).quad_var, 8.0)


@pytest.mark.parametrize("spec", [GeneratorSpec("iid_rademacher", seed=1), GF1, GeneratorSpec("zero")])
def test_nagaev_check_no_violations(spec):
    rep = nagaev_check(spec, 256, np.geomspace(0.5, 200, 32), 300, q=4.0)
    assert len(rep) == 32
    assert rep.ok
    if spec.kind == "zero":
        assert all(r.lhs == 0 and r.rhs == 0 for r in rep.rows)


def test_doob_type_bound():
    rep = doob_type_check(GeneratorSpec("iid_gaussian", seed=1), 1024, 400)
    row = rep.rows[0]
    assert row.passed
    assert 1.0 - 4 * row.se <= row.lhs <= 2.0 + 4 * row.se
    assert doob_type_check(GF12, 1024, 200).ok
    zero = doob_type_check(GeneratorSpec("zero"), 64, 3).rows[0]
    assert zero.lhs == 0 and zero.rhs == 0 and zero.passed


def test_stein_trivial_cases():
    assert stein_maximal_check(np.full((4, 30), 2.5), 3.0).rows[0].ratio == pytest.approx(1.0)
    rad = np.stack([generate(GeneratorSpec("iid_rademacher", seed=2), 50, r).values ** 2 for r in range(5)])
    assert stein_maximal_check(rad, 4.0).rows[0].ratio == pytest.approx(1.0)
    with pytest.raises(ValueError):
        stein_maximal_check(-np.ones((2, 2)), 3.0)
    with pytest.raises(ValueError):
        stein_maximal_check(np.ones((2, 2)), 2.0)


def test_stein_ratio_stable_for_heavy_tails():
    beta, p = 6.0, 4.0  # h = g**2 with E h**(p/2) = E g**4 finite but E h**3 infinite
    h = np.stack([generate(GeneratorSpec("iid_pareto", {"beta": beta}, seed=9), 4096, r).values ** 2 for r in range(300)])
    ratios = [stein_maximal_check(h, p, N).rows[0].ratio for N in (256, 1024, 4096)]
    assert max(ratios) < 2 * min(ratios)


def test_moment_statistic_zero_and_bounded():
    rep = moment_maximal_statistic(GeneratorSpec("zero"), 3.0, [16], 3)
    assert rep.rows[0].lhs == 0.0
    bounded = GeneratorSpec("bounded_martingale", {"R": 2.0, "base": {"kind": "iid_rademacher"}}, 1)
    with pytest.raises(ValueError):
        moment_maximal_statistic(bounded, 3.0, [16], 2)
    rep = moment_maximal_statistic(GF1, 3.0, [256, 1024], 100)
    assert all(np.isfinite(r.ratio) for r in rep.rows)


def test_moment_statistic_ratio_levels_off():
    ns = [2**k for k in range(6, 15)]
    rep = moment_maximal_statistic(GeneratorSpec("iid_rademacher", seed=1), 3.0, ns, 300)
    ratio = np.array([r.ratio for r in rep.rows])
    assert ratio.max() < 2.0
    # the ratio approaches its limit from below; on the upper half of the grid
    # no significant upward slope remains
    fit = stats.linregress(np.log2(ns[4:]), ratio[4:])
    assert fit.slope < 2.33 * fit.stderr + 0.01


def test_dyadic_geometric_sum_hand_value():
    d = dyadic_geometric_sum(4.0, 16)
    assert d.value == mpmath.mpf(30) / 16
    assert d.bound == 2
    assert d.holds
    with pytest.raises(ValueError):
        dyadic_geometric_sum(2.0, 16)


@settings(max_examples=200, deadline=None)
@given(st.floats(2.05, 12), st.integers(2, 10**6))
def test_dyadic_geometric_sum_bound(p, n):
    assert dyadic_geometric_sum(p, n).holds


def test_tail_sum_zero_and_two_atoms():
    _, check = dyadic_sum_bounds(4.0, 16)
    assert check([0.0], [1.0], 4.0) == (0, 0)
    # p = 4: {g > 2**(j/2)} for g = 3 holds for 2**j < 9, i.e. j <= 3
    lhs, rhs = check([3.0, 0.5], [0.25, 0.75], 4.0)
    assert lhs == Fraction(1, 4) * (2 + 4 + 8)
    assert rhs == 2 * (0.25 * 9 + 0.75 * 0.25)
    assert lhs <= rhs


def test_tail_sum_boundary_atom_excluded():
    # g**(p/2) = 4 exactly: the event {g > 2**(2j/p)} is strict, so j = 2 is excluded
    lhs, rhs = tail_sum_check([2.0], [1.0], 4.0)
    assert lhs == 2 and rhs == 8


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(0, 1)), min_size=1, max_size=6), st.floats(2.1, 9))
def test_tail_sum_bound(atoms, p):
    vals = [a for a, _ in atoms]
    w = np.array([b for _, b in atoms])
    w = w / w.sum() if w.sum() > 0 else np.full(w.size, 1 / w.size)
    lhs, rhs = tail_sum_check(vals, w, p)
    assert lhs <= rhs


def test_conditional_moments_rademacher_gaussian():
    rad = generate(GF12, 2000)
    C, D, A = conditional_truncated_moments(rad, 1.5)
    f = rad.aux["f"]
    assert_allclose(C, f * (f > 1.5))
    assert_allclose(D, f**2 * (f > 1.5))
    assert_allclose(A, f)
    g = generate(GeneratorSpec("iid_gaussian", seed=1), 3)
    C, D, _ = conditional_truncated_moments(g, 1.0)
    c1 = integrate.quad(lambda x: abs(x) * stats.norm.pdf(x), 1, np.inf)[0] * 2
    c2 = integrate.quad(lambda x: x * x * stats.norm.pdf(x), 1, np.inf)[0] * 2
    assert_allclose(C, c1, rtol=1e-10)
    assert_allclose(D, c2, rtol=1e-10)


def test_conditional_moments_pareto_by_quadrature():
    beta = 5.0
    spec = GeneratorSpec("iid_pareto", {"beta": beta}, seed=1)
    path = generate(spec, 2)
    law = stats.pareto(b=beta, scale=path.aux["g_abs"] * (beta - 1) / beta)
    for R in (0.1, 2.0):
        C, D, _ = conditional_truncated_moments(path, R)
        assert_allclose(C, law.expect(lambda x: x, lb=R) if R > law.support()[0] else law.mean(), rtol=1e-8)
        assert_allclose(D, law.expect(lambda x: x * x, lb=R) if R > law.support()[0] else law.moment(2), rtol=1e-8)


def test_truncation_bounded_terms_vanish():
    rep = truncation_tail_transfer(GeneratorSpec("iid_rademacher", seed=1), 500, [1.5, 3.0], 3.0)
    for name in ("trunc_term1", "trunc_term2", "trunc_term3"):
        assert all(r.lhs == 0 for r in rep.named(name))
    assert rep.ok


def test_truncation_gf_martingale_monotone_and_transfer():
    rep = truncation_tail_transfer(GF12, 4096, [0.5, 1, 2, 4, 8, 16], 3.0, replicas=4)
    assert rep.ok
    for name in ("trunc_term1", "trunc_term2", "trunc_term3"):
        vals = [r.lhs for r in rep.named(name)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert len(rep.named("tail_transfer_below")) == 6 * 16


@pytest.mark.parametrize("spec", [GeneratorSpec("iid_pareto", {"beta": 6.0}, seed=3), GeneratorSpec("iid_gaussian", seed=3)])
def test_tail_transfer_below_fails_without_constant_modulus(spec):
    # E[|m| 1{|m|>R} | past] is a positive constant while E[|m| | past] <= R,
    # so the right side vanishes and small t violate the transfer
    rep = truncation_tail_transfer(spec, 100, [1.2], 3.0, t_points=8)
    below = rep.named("tail_transfer_below")
    assert all(r.rhs == 0 for r in below)
    assert not all(r.passed for r in below)
    assert all(r.passed for r in rep.named("tail_transfer_above"))


def test_level_split_rademacher_and_gf():
    for spec in (GeneratorSpec("iid_rademacher", seed=4), GF1):
        rep = level_split_check(spec, 1024, np.geomspace(0.1, 5, 16), 3.0, 200)
        assert rep.ok
        assert rep.named("high_level_pointwise")[0].lhs == 0


def test_report_csv_layout():
    rep = doob_type_check(GeneratorSpec("zero"), 8, 2)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "check,n,params,lhs,rhs,se,pass"
    assert lines[1].startswith("doob_type,8,kind=zero,")
    assert lines[1].endswith(",pass")


def test_conditional_moments_requires_structure():
    lin = generate(GeneratorSpec("linear_process", {"coeffs": [1.0]}), 4)
    with pytest.raises(ValueError):
        conditional_truncated_moments(lin, 1.0)
    odd = SamplePath(np.ones(2), GeneratorSpec("zero"), 2, {"f": np.ones(2), "g_law": "cauchy", "g_m2": 1.0, "g_abs": 1.0})
    with pytest.raises(ValueError):
        conditional_truncated_moments(odd, 1.0)
