"""Hot inner loops.

Every kernel exists twice: a loop version compiled by numba and a
vectorised numpy version.  The two are written independently (different
traversal orders and pruning rules) and must agree to rounding; the test
suite checks this and ``benchmarks/bench_kernels.py`` times them.

Conventions: ``S`` is the array of vertex values ``S_0..S_n`` of a polygonal
path on the grid ``i/n`` (already multiplied by the path scale).
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

MAX_LEVEL = 1100  # 2**-1100 still representable as a double


def _block_size(n_vertices: int) -> int:
    return max(16, math.isqrt(n_vertices) // 4)


# ---------------------------------------------------------------------------
# Schauder coefficient sup over levels j >= j_start
# ---------------------------------------------------------------------------
#
# On level j >= 1 the support (r - h, r + h), h = 2**-j, of the tent at r is a
# cell of length 2h.  A vertex v = i/n with slope jump D_i contributes
# -D_i (h - |v - r|) / 2 to lambda_r when it lies strictly inside the cell
# (the affine part contributes nothing).  Writing rem = i 2**(j-1) mod n,
# h - |v - r| = h (n - |2 rem - n|) / n, so everything stays in exact integers
# except the final scaling.  Once 2**(j-1) >= n every cell holds at most one
# vertex and |lambda_r| <= |D_i| h / 2; in general |lambda_r| <= L h with L the
# steepest slope.  Both majorants decrease geometrically after weighting by
# 2**(j alpha), which gives an exact stopping rule.


@njit(cache=True, nogil=True)
def _schauder_sup_nb(S, alpha, j_start, j_cap):
    n = S.shape[0] - 1
    delta = np.zeros(n + 1)
    lip = 0.0
    for i in range(n):
        s = abs(S[i + 1] - S[i]) * n
        if s > lip:
            lip = s
    dmax = 0.0
    alive = 0
    for i in range(1, n):
        d = n * ((S[i + 1] - S[i]) - (S[i] - S[i - 1]))
        delta[i] = d
        if abs(d) > dmax:
            dmax = abs(d)
        if d != 0.0:
            alive += 1
    best = 0.0
    if j_start <= 0:
        best = max(abs(S[0]), abs(S[n]))
    jstar = 1
    while (1 << (jstar - 1)) < n:
        jstar += 1
    rem = np.empty(n + 1, np.int64)
    cell = np.zeros(n + 1, np.int64)
    for i in range(n + 1):
        rem[i] = i % n if n > 0 else 0
    acc = np.zeros(n + 1)
    j = 0
    tail = 0.0
    while j < j_cap:
        j += 1
        level_max = 0.0
        if alive > 0:
            if j < jstar:
                ncell = 1 << (j - 1)
                for c in range(ncell):
                    acc[c] = 0.0
                for i in range(1, n):
                    if delta[i] != 0.0 and rem[i] != 0:
                        acc[cell[i]] += delta[i] * (n - abs(2 * rem[i] - n))
                for c in range(ncell):
                    a = abs(acc[c])
                    if a > level_max:
                        level_max = a
            else:
                for i in range(1, n):
                    if delta[i] != 0.0 and rem[i] != 0:
                        a = abs(delta[i]) * (n - abs(2 * rem[i] - n))
                        if a > level_max:
                            level_max = a
        if j >= j_start:
            v = level_max * (2.0 ** (j * (alpha - 1.0)) / (2.0 * n))
            if v > best:
                best = v
        alive = 0
        for i in range(1, n):
            r2 = 2 * rem[i]
            c2 = 2 * cell[i]
            if r2 >= n:
                r2 -= n
                c2 += 1
            rem[i] = r2
            if j + 1 < jstar:
                cell[i] = c2
            if r2 != 0 and delta[i] != 0.0:
                alive += 1
        if alive == 0:
            tail = 0.0
            if j >= j_start:
                break
            continue
        j0 = max(j + 1, j_start)
        const = lip
        if j0 >= jstar and 0.5 * dmax < lip:
            const = 0.5 * dmax
        tail = const * 2.0 ** (j0 * (alpha - 1.0))
        if tail <= best:
            break
    return best, j, tail


def _schauder_sup_np(S, alpha, j_start, j_cap):
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0] - 1
    slopes = np.diff(S) * n
    lip = float(np.abs(slopes).max()) if n > 0 else 0.0
    delta = n * np.diff(np.diff(S)) if n > 1 else np.zeros(0)
    idx = np.arange(1, n, dtype=np.int64)
    keep = delta != 0.0
    delta, idx = delta[keep], idx[keep]
    dmax = float(np.abs(delta).max()) if delta.size else 0.0
    best = max(abs(S[0]), abs(S[n])) if j_start <= 0 else 0.0
    jstar = 1
    while (1 << (jstar - 1)) < n:
        jstar += 1
    rem = idx % n if n > 0 else idx
    cell = np.zeros_like(idx)
    j = 0
    tail = 0.0
    while j < j_cap:
        j += 1
        live = rem != 0
        level_max = 0.0
        if live.any():
            contrib = delta * (n - np.abs(2 * rem - n))
            if j < jstar:
                acc = np.bincount(cell[live], weights=contrib[live], minlength=1 << (j - 1))
                level_max = float(np.abs(acc).max())
            else:
                level_max = float(np.abs(contrib[live]).max())
        if j >= j_start:
            best = max(best, level_max * (2.0 ** (j * (alpha - 1.0)) / (2.0 * n)))
        r2 = 2 * rem
        carry = r2 >= n
        rem = np.where(carry, r2 - n, r2)
        cell = 2 * cell + carry
        if not (rem != 0).any():
            tail = 0.0
            if j >= j_start:
                break
            continue
        j0 = max(j + 1, j_start)
        const = 0.5 * dmax if (j0 >= jstar and 0.5 * dmax < lip) else lip
        tail = const * 2.0 ** (j0 * (alpha - 1.0))
        if tail <= best:
            break
    return best, j, tail


# ---------------------------------------------------------------------------
# max over vertex pairs of |S_j - S_i| / (j - i)**alpha
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _max_pair_ratio_nb(S, alpha, max_gap, i_lo, i_hi, floor, block):
    N = S.shape[0]
    last = N - 1
    if i_hi > last - 1:
        i_hi = last - 1
    if i_lo < 0:
        i_lo = 0
    best = floor
    if i_hi < i_lo or max_gap < 1:
        return best
    G = min(max_gap, last - i_lo)
    invpow = np.empty(G + 1)
    invpow[0] = 0.0
    for g in range(1, G + 1):
        invpow[g] = g ** (-alpha)
    B = block
    nb = (N + B - 1) // B
    bmin = np.empty(nb)
    bmax = np.empty(nb)
    for b in range(nb):
        lo = b * B
        hi = min(lo + B, N)
        mn = S[lo]
        mx = S[lo]
        for t in range(lo + 1, hi):
            if S[t] < mn:
                mn = S[t]
            if S[t] > mx:
                mx = S[t]
        bmin[b] = mn
        bmax[b] = mx
    # cheap incumbent from block-start pairs
    for a in range(nb):
        ia = a * B
        if ia < i_lo or ia > i_hi:
            continue
        for b in range(a + 1, nb):
            g = b * B - ia
            if g > G:
                break
            v = abs(S[b * B] - S[ia]) * invpow[g]
            if v > best:
                best = v
    for a in range(nb):
        a0 = a * B
        a1 = min(a0 + B, N) - 1
        if a1 < i_lo or a0 > i_hi:
            continue
        for b in range(a, nb):
            b0 = b * B
            b1 = min(b0 + B, N) - 1
            gmin = b0 - a1
            if gmin < 1:
                gmin = 1
            if gmin > G:
                break
            if b > a:
                bound = max(bmax[b] - bmin[a], bmax[a] - bmin[b]) * invpow[gmin]
            else:
                bound = (bmax[a] - bmin[a]) * invpow[1]
            if bound <= best:
                continue
            ilo = max(a0, i_lo)
            ihi = min(a1, i_hi)
            for i in range(ilo, ihi + 1):
                si = S[i]
                jlo = max(i + 1, b0)
                jhi = min(b1, i + G)
                for j in range(jlo, jhi + 1):
                    v = abs(S[j] - si) * invpow[j - i]
                    if v > best:
                        best = v
    return best


def _max_pair_ratio_np(S, alpha, max_gap, i_lo, i_hi, floor, block=None):
    S = np.asarray(S, dtype=np.float64)
    last = S.shape[0] - 1
    i_hi = min(i_hi, last - 1)
    i_lo = max(i_lo, 0)
    best = floor
    if i_hi < i_lo or max_gap < 1:
        return best
    G = min(max_gap, last - i_lo)
    spread = float(S.max() - S.min())
    # gaps in increasing order; the global spread over g**alpha bounds every later gap
    for g in range(1, G + 1):
        w = g ** (-alpha)
        if spread * w <= best:
            break
        hi = min(i_hi, last - g)
        if hi < i_lo:
            break
        v = float(np.abs(S[i_lo + g : hi + g + 1] - S[i_lo : hi + 1]).max()) * w
        if v > best:
            best = v
    return best


# ---------------------------------------------------------------------------
# pair ratio with a cumulative envelope
# ---------------------------------------------------------------------------
#
# For paths built from sparse increments: with F non-decreasing and
# |S_j - S_i| <= F_j - F_i, a start index i is skipped whenever
# F_{i+G} - F_i cannot beat the incumbent (every gap has g**alpha >= 1).


@njit(cache=True, nogil=True)
def _envelope_pair_max_nb(S, F, alpha, max_gap, i_lo, i_hi, floor):
    last = S.shape[0] - 1
    if i_hi > last - 1:
        i_hi = last - 1
    if i_lo < 0:
        i_lo = 0
    best = floor
    G = min(max_gap, last)
    w = np.empty(G + 1)
    for g in range(1, G + 1):
        w[g] = g ** (-alpha)
    for i in range(i_lo, i_hi + 1):
        top = i + max_gap
        if top > last:
            top = last
        if F[top] - F[i] <= best:
            continue
        si = S[i]
        for j in range(i + 1, top + 1):
            v = abs(S[j] - si) * w[j - i]
            if v > best:
                best = v
    return best


def _envelope_pair_max_np(S, F, alpha, max_gap, i_lo, i_hi, floor):
    last = S.shape[0] - 1
    i_hi = min(i_hi, last - 1)
    i_lo = max(i_lo, 0)
    best = floor
    if i_hi < i_lo or max_gap < 1:
        return best
    idx = np.arange(i_lo, i_hi + 1)
    top = np.minimum(idx + max_gap, last)
    idx = idx[F[top] - F[idx] > floor]
    for g in range(1, max_gap + 1):
        idx = idx[idx + g <= last]
        if idx.size == 0:
            break
        v = float(np.abs(S[idx + g] - S[idx]).max()) * g ** (-alpha)
        if v > best:
            best = v
    return best


@njit(cache=True, nogil=True)
def _increment_ratio_nb(y, alpha, max_gap, i_lo, i_hi, floor):
    # streaming version of the envelope scan: S and F live in a power-of-two ring
    n = y.shape[0]
    last = n
    if i_hi > last - 1:
        i_hi = last - 1
    if i_lo < 0:
        i_lo = 0
    best = floor
    if i_hi < i_lo or max_gap < 1:
        return best
    G = min(max_gap, last)
    R = 1
    while R < G + 1:
        R *= 2
    M = R - 1
    w = np.empty(G + 1)
    for g in range(1, G + 1):
        w[g] = g ** (-alpha)
    S = np.empty(R)
    F = np.empty(R)
    s_cur = 0.0
    f_cur = 0.0
    S[0] = 0.0
    F[0] = 0.0
    filled = 0  # largest index whose prefix sums are in the ring
    for i in range(0, i_hi + 1):
        top = i + G
        if top > last:
            top = last
        while filled < top:
            s_cur += y[filled]
            f_cur += abs(y[filled])
            filled += 1
            S[filled & M] = s_cur
            F[filled & M] = f_cur
        if i < i_lo:
            continue
        if F[top & M] - F[i & M] <= best:
            continue
        si = S[i & M]
        for j in range(i + 1, top + 1):
            v = abs(S[j & M] - si) * w[j - i]
            if v > best:
                best = v
    return best


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def schauder_sup(S, alpha, j_start=0, j_cap=MAX_LEVEL, use_numba=None):
    """Return ``(sup_{j >= j_start} 2**(j alpha) max_r |lambda_r|, last level, tail bound)``."""
    S = np.ascontiguousarray(S, dtype=np.float64)
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _schauder_sup_nb if use_numba else _schauder_sup_np
    best, j, tail = fn(S, float(alpha), int(j_start), int(j_cap))
    return float(best), int(j), float(tail)


def max_pair_ratio(S, alpha, max_gap=None, i_lo=0, i_hi=None, floor=0.0, use_numba=None):
    """Max of ``|S_j - S_i| / (j - i)**alpha`` over ``i_lo <= i <= i_hi``, ``0 < j - i <= max_gap``.

    Returns ``floor`` when no pair beats it, so passing a threshold as
    ``floor`` turns the kernel into a fast exceedance test.
    """
    S = np.ascontiguousarray(S, dtype=np.float64)
    last = S.shape[0] - 1
    if max_gap is None:
        max_gap = last
    if i_hi is None:
        i_hi = last - 1
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        return float(
            _max_pair_ratio_nb(
                S, float(alpha), int(max_gap), int(i_lo), int(i_hi), float(floor), _block_size(S.shape[0])
            )
        )
    return float(_max_pair_ratio_np(S, float(alpha), int(max_gap), int(i_lo), int(i_hi), float(floor)))


def envelope_pair_max(S, F, alpha, max_gap, i_lo=0, i_hi=None, floor=0.0, use_numba=None):
    """Same maximum as :func:`max_pair_ratio`, pruned by an increasing envelope ``F``.

    ``F`` must satisfy ``|S_j - S_i| <= F_j - F_i`` for ``i < j`` (for example
    the cumulative sum of absolute increments).
    """
    S = np.ascontiguousarray(S, dtype=np.float64)
    F = np.ascontiguousarray(F, dtype=np.float64)
    if F.shape != S.shape:
        raise ValueError("S and F must have the same shape")
    last = S.shape[0] - 1
    if i_hi is None:
        i_hi = last - 1
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _envelope_pair_max_nb if use_numba else _envelope_pair_max_np
    return float(fn(S, F, float(alpha), int(max_gap), int(i_lo), int(i_hi), float(floor)))


def increment_ratio(y, alpha, max_gap, i_lo=0, i_hi=None, floor=0.0, use_numba=None):
    """:func:`envelope_pair_max` for the partial sums ``S_u = sum_{t<u} y_t`` of increments ``y``."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    if i_hi is None:
        i_hi = y.shape[0] - 1
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        return float(_increment_ratio_nb(y, float(alpha), int(max_gap), int(i_lo), int(i_hi), float(floor)))
    S = np.concatenate([[0.0], np.cumsum(y)])
    F = np.concatenate([[0.0], np.cumsum(np.abs(y))])
    return float(_envelope_pair_max_np(S, F, float(alpha), int(max_gap), int(i_lo), int(i_hi), float(floor)))
