"""Compiled inner loops for the depth engines.

The conditional depths are minima over directions of averages of Gaussian
tail probabilities. Terms are non-negative, so a direction whose partial
sum already exceeds the current best times n can be abandoned early. A
strided prepass over the direction set seeds a tight bound first; the
returned minimum and first-argmin are unaffected because a strict minimizer
never trips the bound, and exact ties resolve to the lowest index scanned.
"""

import math

import numpy as np
from numba import njit

_INV_SQRT2 = 0.7071067811865476


@njit(cache=True, inline="always")
def _avg_gauss_row(eta_s, psi_s, e0, p0, fl, l, n, lim):
    """Full or aborted mean of the Gaussian terms for direction row l.

    Returns the complete sum, or a value > lim if the partial sum already
    exceeded lim (terms are non-negative, so the full sum would too).
    """
    acc = 0.0
    for i in range(n):
        d = psi_s[l, i] + p0
        if d < fl:
            d = fl
        z = (eta_s[l, i] - e0) / math.sqrt(d)
        acc += 0.5 * math.erfc(-z * _INV_SQRT2)
        if acc > lim:
            return acc
    return acc


@njit(cache=True)
def min_avg_gauss_batch(eta_s, psi_s, eta_e, psi_e, floors, out_val, out_arg):
    """For each eval column e: min over rows l of
    mean_i Phi((eta_s[l,i] - eta_e[l,e]) / sqrt(psi_s[l,i] + psi_e[l,e]))
    with the variance sum floored at floors[l]. Ties take the lowest row."""
    n_dir, n = eta_s.shape
    n_eval = eta_e.shape[1]
    stride = max(1, n_dir // 64)
    for e in range(n_eval):
        # strided prepass: exact means on a spread subset seed the bound
        bound = np.inf
        for l in range(0, n_dir, stride):
            acc = _avg_gauss_row(eta_s, psi_s, eta_e[l, e], psi_e[l, e], floors[l], l, n, bound * n)
            if acc <= bound * n:
                m = acc / n
                if m < bound:
                    bound = m
        best = bound
        arg = -1
        for l in range(n_dir):
            lim = best * n
            acc = _avg_gauss_row(eta_s, psi_s, eta_e[l, e], psi_e[l, e], floors[l], l, n, lim)
            if acc <= lim:
                m = acc / n
                if m < best:
                    best = m
                    arg = l
                elif m == best and arg == -1:
                    arg = l
        out_val[e] = best
        out_arg[e] = arg


@njit(cache=True)
def scatter_ll_sse(s1s, s2s, ys, e1, e2, yv, h):
    """Held-out squared error of the bivariate local-linear fit.

    Train pairs must be sorted by s1s so the Epanechnikov window can be
    scanned from a binary-searched start. Singular local designs fall back
    to a Nadaraya-Watson average with doubled bandwidth.
    """
    n_train = s1s.size
    sse = 0.0
    for j in range(e1.size):
        a = e1[j]
        b = e2[j]
        lo = np.searchsorted(s1s, a - h)
        s00 = s10 = s01 = s20 = s11 = s02 = 0.0
        t00 = t10 = t01 = 0.0
        cnt = 0
        for p in range(lo, n_train):
            d1 = s1s[p] - a
            if d1 > h:
                break
            u1 = d1 / h
            k1 = 0.75 * (1.0 - u1 * u1)
            if k1 <= 0.0:
                continue
            u2 = (s2s[p] - b) / h
            k2 = 0.75 * (1.0 - u2 * u2)
            if k2 <= 0.0:
                continue
            w = k1 * k2
            cnt += 1
            s00 += w
            s10 += w * u1
            s01 += w * u2
            s20 += w * u1 * u1
            s11 += w * u1 * u2
            s02 += w * u2 * u2
            yw = ys[p]
            t00 += w * yw
            t10 += w * u1 * yw
            t01 += w * u2 * yw
        det = (
            s00 * (s20 * s02 - s11 * s11)
            - s10 * (s10 * s02 - s11 * s01)
            + s01 * (s10 * s11 - s20 * s01)
        )
        smax = s00 if s00 > 0.0 else 0.0
        if cnt >= 3 and det > 1e-10 * smax * smax * smax and det > 0.0:
            pred = (
                t00 * (s20 * s02 - s11 * s11)
                - s10 * (t10 * s02 - s11 * t01)
                + s01 * (t10 * s11 - s20 * t01)
            ) / det
        else:
            h2 = 2.0 * h
            pred = 0.0
            while True:
                sw = 0.0
                sv = 0.0
                for p in range(n_train):
                    u1 = (s1s[p] - a) / h2
                    k1 = 0.75 * (1.0 - u1 * u1)
                    if k1 <= 0.0:
                        continue
                    u2 = (s2s[p] - b) / h2
                    k2 = 0.75 * (1.0 - u2 * u2)
                    if k2 <= 0.0:
                        continue
                    sw += k1 * k2
                    sv += k1 * k2 * ys[p]
                if sw > 0.0:
                    pred = sv / sw
                    break
                h2 *= 2.0
        r = yv[j] - pred
        sse += r * r
    return sse


@njit(cache=True)
def min_count_batch(proj_sorted, proj_e, out_val, out_arg):
    """For each eval column e: min over rows l of
    (1/n) #{i : proj[l,i] >= proj_e[l,e]} using per-row sorted projections."""
    n_dir, n = proj_sorted.shape
    n_eval = proj_e.shape[1]
    for e in range(n_eval):
        best = n + 1
        arg = -1
        for l in range(n_dir):
            q = proj_e[l, e]
            lo = 0
            hi = n
            while lo < hi:
                mid = (lo + hi) // 2
                if proj_sorted[l, mid] < q:
                    lo = mid + 1
                else:
                    hi = mid
            cnt = n - lo
            if cnt < best:
                best = cnt
                arg = l
                if best == 0:
                    break
        out_val[e] = best / n
        out_arg[e] = arg
