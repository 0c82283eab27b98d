"""Slow reference implementations written without numpy, used as test oracles."""
from __future__ import annotations

import math


def sub(a, b):
    return [x - y for x, y in zip(a, b)]


def dot(a, b):
    return math.fsum(x * y for x, y in zip(a, b))


def cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def norm(a):
    return math.sqrt(dot(a, a))


def unit(a):
    n = norm(a)
    return [x / n for x in a]


def cds_stiffness(shoulder, elbow, wrist, alpha1, alpha2, a_cc):
    """Endpoint stiffness as a sum of rank-one terms along the three arm axes."""
    l = sub(wrist, shoulder)
    r = sub(elbow, shoulder)
    n = cross(r, l)
    d1 = norm(l)
    lh = unit(l)
    proj = dot(r, lh)
    d2 = norm([ri - proj * li for ri, li in zip(r, lh)])
    axes = [lh, unit(cross(n, l)), unit(n)]
    raw = [1.0, alpha1 / d1, alpha2 * d2]
    g = (raw[0] * raw[1] * raw[2]) ** (1.0 / 3.0)
    shape = [v / g for v in raw]
    k = [[math.fsum(a_cc * shape[m] * axes[m][i] * axes[m][j] for m in range(3)) for j in range(3)]
         for i in range(3)]
    return k, d1, d2, shape, axes


def cholesky3(k):
    """Textbook Cholesky on a 3x3 list matrix; returns (l11, l21, l22, l31, l32, l33)."""
    l11 = math.sqrt(k[0][0])
    l21 = k[1][0] / l11
    l22 = math.sqrt(k[1][1] - l21 * l21)
    l31 = k[2][0] / l11
    l32 = (k[2][1] - l31 * l21) / l22
    l33 = math.sqrt(k[2][2] - l31 * l31 - l32 * l32)
    return (l11, l21, l22, l31, l32, l33)


def gauss_logpdf(x, mean, cov):
    """Multivariate normal log density via an explicit Cholesky (any small d)."""
    d = len(x)
    low = [[0.0] * d for _ in range(d)]
    for i in range(d):
        for j in range(i + 1):
            s = cov[i][j] - math.fsum(low[i][m] * low[j][m] for m in range(j))
            low[i][j] = math.sqrt(s) if i == j else s / low[j][j]
    diff = [xi - mi for xi, mi in zip(x, mean)]
    y = []
    for i in range(d):
        y.append((diff[i] - math.fsum(low[i][m] * y[m] for m in range(i))) / low[i][i])
    maha = math.fsum(v * v for v in y)
    logdet = 2.0 * math.fsum(math.log(low[i][i]) for i in range(d))
    return -0.5 * (d * math.log(2 * math.pi) + logdet + maha)


def mixture_loglik(points, priors, means, covs):
    total = []
    for x in points:
        logs = [math.log(p) + gauss_logpdf(x, m, c) for p, m, c in zip(priors, means, covs)]
        top = max(logs)
        total.append(top + math.log(math.fsum(math.exp(v - top) for v in logs)))
    return math.fsum(total)


def quintic_scalar(x0, xT, T, t):
    u = t / T
    s = 10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5
    ds = (30 * u ** 2 - 60 * u ** 3 + 30 * u ** 4) / T
    dds = (60 * u - 180 * u ** 2 + 120 * u ** 3) / T ** 2
    dx = xT - x0
    return x0 + dx * s, dx * ds, dx * dds


def pearson(a, b):
    ma = math.fsum(a) / len(a)
    mb = math.fsum(b) / len(b)
    cov = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = math.fsum((x - ma) ** 2 for x in a)
    vb = math.fsum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)
