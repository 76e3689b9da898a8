import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from holderip.weak_lp import (
    SimpleFunction,
    conditional_coarsen,
    kappa,
    np_norm,
    quasi_norm_pair,
    simple_weak_bound,
    tail_profile,
    weak_norm_exact,
)


def brute_weak_p(values, masses, p):
    # sup over a fine set of thresholds just below and at each value
    vals = np.abs(np.asarray(values, float))
    masses = np.asarray(masses, float)
    ts = np.concatenate([vals, vals * (1 - 1e-12)])
    ts = ts[ts > 0]
    if ts.size == 0:
        return 0.0
    return max(t**p * masses[vals > t].sum() for t in ts)


def brute_np(values, masses, p):
    # all unions of atoms
    vals = np.abs(np.asarray(values, float))
    masses = np.asarray(masses, float)
    m = vals.size
    best = 0.0
    for bits in range(1, 2**m):
        sel = np.array([(bits >> i) & 1 for i in range(m)], bool)
        mu = masses[sel].sum()
        if mu > 0:
            best = max(best, mu ** (1 / p - 1) * np.dot(vals[sel], masses[sel]))
    return best


def random_simple(rng, n_atoms, total=1.0):
    v = rng.exponential(size=n_atoms) * rng.choice([1, 5], size=n_atoms)
    m = rng.dirichlet(np.ones(n_atoms)) * total
    return v, m


atoms_st = st.integers(1, 7)
seeds = st.integers(0, 2**32 - 1)
ps = st.floats(1.1, 8.0)


def test_indicator():
    f = SimpleFunction([1.0], [1.0])
    assert weak_norm_exact(f, 3.0) == 1.0
    assert simple_weak_bound(f, 3.0) == 1.0
    assert np_norm(f, 3.0) == 1.0


def test_two_atom_hand_value():
    f = SimpleFunction([2.0, 1.0], [0.1, 0.5])
    assert_allclose(weak_norm_exact(f, 3.0), 0.8 ** (1 / 3), rtol=1e-15)


def test_validation():
    with pytest.raises(ValueError):
        SimpleFunction([1.0, 2.0], [0.1, 0.1])
    with pytest.raises(ValueError):
        SimpleFunction([2.0, 1.0], [0.7, 0.7])
    with pytest.raises(ValueError):
        weak_norm_exact(SimpleFunction([1.0], [1.0]), 0.0)
    with pytest.raises(ValueError):
        np_norm(SimpleFunction([1.0], [1.0]), 1.0)


def test_from_atoms_merges():
    f = SimpleFunction.from_atoms([1.0, -3.0, 1.0, 0.0], [0.1, 0.2, 0.3, 0.4])
    assert_allclose(f.values, [3.0, 1.0, 0.0])
    assert_allclose(f.masses, [0.2, 0.4, 0.4])


def test_kappa_from_integral():
    # E[|f| 1_A] <= int_0^inf min(t**-p M**p, mu(A)) dt with M = 1
    for p in (1.5, 3.0, 4.0, 7.0):
        for a in (0.01, 0.3, 1.0):
            t0 = a ** (-1 / p)
            head = a * t0
            tail = integrate.quad(lambda t: t**-p, t0, np.inf)[0]
            assert_allclose((head + tail) / a ** (1 - 1 / p), kappa(p), rtol=1e-9)


def test_power_function_ratio():
    p = 3.0
    f, _ = quasi_norm_pair(p, 10**5)
    sf = SimpleFunction.from_sample(f)
    w = weak_norm_exact(sf, p)
    assert_allclose(w, 1.0, rtol=1e-12)
    assert_allclose(np_norm(sf, p) / w, kappa(p), rtol=1e-2)


def test_triangle_inequality_fails():
    p = 3.0
    f, g = quasi_norm_pair(p, 10**5)
    nf = weak_norm_exact(SimpleFunction.from_sample(f), p)
    ng = weak_norm_exact(SimpleFunction.from_sample(g), p)
    nfg = weak_norm_exact(SimpleFunction.from_sample(f + g), p)
    assert_allclose(nf + ng, 2.0, rtol=1e-12)
    assert nfg >= 2 ** (1 + 1 / p) * (1 - 1e-4)
    assert nfg > nf + ng


def test_tail_profile_zero_and_errors():
    tp = tail_profile(np.zeros(100), 3.0)
    assert np.all(tp.values == 0) and tp.sup_estimate == 0
    with pytest.raises(ValueError):
        tail_profile([1.0, 2.0], 3.0, grid_size=1)
    with pytest.raises(ValueError):
        tail_profile([], 3.0)


def _sym_pareto(rng, beta, size):
    return rng.choice([-1.0, 1.0], size) * (1.0 - rng.random(size)) ** (-1.0 / beta)


def test_tail_profile_pareto_light():
    p = 3.0
    rng = np.random.default_rng(0)
    tp = tail_profile(_sym_pareto(rng, 2 * p, 10**6), p)
    # closed form: t**p P(|X| > t) = t**-p for t >= 1
    ok = tp.values > 200 / 10**6 * tp.grid**p
    sel = ok & (tp.grid > 1.5)
    slope = np.polyfit(np.log(tp.grid[sel]), np.log(tp.values[sel]), 1)[0]
    assert abs(slope + p) < 0.15
    assert tp.sup_estimate == tp.values.max()


def test_tail_profile_pareto_boundary():
    p = 3.0
    rng = np.random.default_rng(1)
    tp = tail_profile(_sym_pareto(rng, p, 10**6), p)
    # closed form: t**p P(|X| > t) = 1 for t >= 1; keep points with >= 1000 exceedances
    sel = tp.values / tp.grid**p * 10**6 >= 1000
    assert sel.sum() > 20
    assert np.all(np.abs(tp.values[sel] - 1.0) < 5 * np.sqrt(tp.grid[sel] ** p / 10**6) * 1.5)


def test_coarsen_examples():
    f = SimpleFunction([3.0, 2.0, 1.0], [0.2, 0.3, 0.5])
    ident = conditional_coarsen(f, [[0], [1], [2]])
    assert_allclose(ident.values, f.values)
    assert_allclose(ident.masses, f.masses)
    const = conditional_coarsen(f, [[0, 1, 2]])
    assert_allclose(const.values, [f.mean()])
    merged = conditional_coarsen([4.0, 0.0], [[0, 1]], masses=[0.1, 0.3])
    assert_allclose(merged.values, [1.0])
    assert_allclose(merged.masses, [0.4])
    with pytest.raises(ValueError):
        conditional_coarsen(f, [[0], [], [1, 2]])
    with pytest.raises(ValueError):
        conditional_coarsen(f, [[0], [1]])


@settings(max_examples=80, deadline=None)
@given(atoms_st, seeds, ps)
def test_weak_norm_matches_threshold_scan(n_atoms, seed, p):
    v, m = random_simple(np.random.default_rng(seed), n_atoms, total=0.9)
    f = SimpleFunction.from_atoms(v, m)
    assert_allclose(weak_norm_exact(f, p) ** p, brute_weak_p(v, m, p), rtol=1e-10)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 5), seeds, ps)
def test_simple_bound_dominates(n_atoms, seed, p):
    v, m = random_simple(np.random.default_rng(seed), n_atoms)
    f = SimpleFunction.from_atoms(v, m)
    b = simple_weak_bound(f, p)
    assert b >= weak_norm_exact(f, p) ** p * (1 - 1e-12)
    assert_allclose(b, weak_norm_exact(f, p) ** p, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(atoms_st, seeds, ps)
def test_np_norm_is_sup_over_all_unions(n_atoms, seed, p):
    v, m = random_simple(np.random.default_rng(seed), n_atoms)
    assert_allclose(np_norm(SimpleFunction.from_atoms(v, m), p), brute_np(v, m, p), rtol=1e-10)


@settings(max_examples=80, deadline=None)
@given(atoms_st, seeds, ps)
def test_np_sandwich(n_atoms, seed, p):
    f = SimpleFunction.from_atoms(*random_simple(np.random.default_rng(seed), n_atoms))
    w = weak_norm_exact(f, p)
    n = np_norm(f, p)
    assert w <= n * (1 + 1e-12)
    assert n <= kappa(p) * w * (1 + 1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 40), seeds, ps)
def test_np_triangle(size, seed, p):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(size) * 3, rng.standard_t(2, size)
    assert np_norm(x + y, p) <= (np_norm(x, p) + np_norm(y, p)) * (1 + 1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 12), seeds, ps, st.integers(1, 6))
def test_coarsening_inequalities(n_atoms, seed, p, n_groups):
    rng = np.random.default_rng(seed)
    v, m = random_simple(rng, n_atoms)
    labels = rng.integers(0, n_groups, n_atoms)
    groups = [np.nonzero(labels == g)[0] for g in np.unique(labels)]
    coarse = conditional_coarsen(v, groups, masses=m)
    fine = SimpleFunction.from_atoms(v, m)
    cw = weak_norm_exact(coarse, p) ** p
    assert cw <= np_norm(fine, p) ** p * (1 + 1e-10)
    assert cw <= kappa(p) ** p * weak_norm_exact(fine, p) ** p * (1 + 1e-10)
