"""Brute-force reference implementations used by the tests.

Each one is written independently of the package code: plain loops, exact
rational arithmetic where it is cheap, and no shared helpers.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def nearest_distance(targets, sources):
    out = []
    for tlat, tlon in targets:
        best = math.inf
        for slat, slon in sources:
            dlat = tlat - slat
            dlon = tlon - slon
            best = min(best, 69.0 * math.sqrt(dlat * dlat + dlon * dlon))
        out.append(best)
    return out


def average_ranks(x):
    x = list(x)
    ranks = []
    for xi in x:
        below = sum(1 for xj in x if xj < xi)
        ties = sum(1 for xj in x if xj == xi)
        ranks.append(Fraction(2 * below + ties + 1, 2))
    return ranks


def spearman(x, y):
    rx, ry = average_ranks(x), average_ranks(y)
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    return float(sxy) / math.sqrt(float(sxx) * float(syy))


def chi_squared(table):
    rows = [[Fraction(int(c)) for c in r] for r in table]
    total = sum(sum(r) for r in rows)
    rsum = [sum(r) for r in rows]
    csum = [sum(r[j] for r in rows) for j in range(len(rows[0]))]
    stat = Fraction(0)
    for i, r in enumerate(rows):
        for j, obs in enumerate(r):
            exp = rsum[i] * csum[j] / total
            stat += (obs - exp) ** 2 / exp
    return float(stat)


def _solve_exact(A, b):
    n = len(A)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [a - f * c for a, c in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def ols(columns, y):
    """Intercept-first coefficients from the normal equations in exact arithmetic."""
    n = len(y)
    X = [[Fraction(1)] + [Fraction(float(c[i])) for c in columns] for i in range(n)]
    Y = [Fraction(float(v)) for v in y]
    p = len(X[0])
    XtX = [[sum(X[k][i] * X[k][j] for k in range(n)) for j in range(p)] for i in range(p)]
    XtY = [sum(X[k][i] * Y[k] for k in range(n)) for i in range(p)]
    return [float(v) for v in _solve_exact(XtX, XtY)]


def logistic_loglik(beta, X, y):
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_grid_mle(X, y, center, half_width=1.0, points=41, rounds=12):
    """Maximise the log-likelihood over a 2-D grid, shrinking it around the best cell."""
    c = np.asarray(center, dtype=float)
    w = half_width
    for _ in range(rounds):
        axis0 = np.linspace(c[0] - w, c[0] + w, points)
        axis1 = np.linspace(c[1] - w, c[1] + w, points)
        best, arg = -math.inf, c
        for a in axis0:
            for b in axis1:
                ll = logistic_loglik(np.array([a, b]), X, y)
                if ll > best:
                    best, arg = ll, np.array([a, b])
        c = arg
        w *= 4.0 / (points - 1)
    return c
