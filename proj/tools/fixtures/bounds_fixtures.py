"""Generates the bounds-arith fixture table with 40-digit arithmetic.

Run: python3 tools/fixtures/bounds_fixtures.py > tools/fixtures/bounds_fixtures.inc
"""
from mpmath import mp, mpf, log, sqrt

mp.dps = 40


def wasserstein(c, lam, delta, n, diam):
    return (c + log(1 / delta)) / lam + lam * diam**2 / (4 * n)


def manifold(c, lam, delta, n, k, dz):
    return (c + log(1 / delta)) / lam + lam * k**2 * dz / (4 * n)


def tv(c, lam, delta, n):
    return (c + log(1 / delta)) / lam + 4 * lam / n


rows = [
    ("wasserstein", [100, 10, "0.05", 10000, "6.4", 0]),
    ("wasserstein", [0, 4, "0.999999999", 8, 2, 0]),
    ("wasserstein", [3.5, 64, "0.05", 4096, "6.4", 0]),
    ("wasserstein", [1234.5, 10, "0.01", 5120, "11.596551211459383", 0]),
    ("disintegrated", [0, 64, "0.05", 4096, "6.4", 0]),
    ("disintegrated", [-2.5, 10, "0.05", 5120, "6.4", 0]),
    ("disintegrated", [17.25, 3, "0.2", 100, 1, 0]),
    ("manifold", [50, 64, "0.05", 4096, 5, 2]),
    ("manifold", [0, 4, "0.999999999", 8, 2, 2]),
    ("manifold", [7, 10, "0.1", 10240, "1.5", 3]),
    ("tv", [10, 100, "0.1", 1000, 0, 0]),
    ("tv", [0, 32, "0.05", 1024, 0, 0]),
    ("tv", [250, 10, "0.001", 5120, 0, 0]),
]

print("// Generated by bounds_fixtures.py; do not edit.")
for kind, (c, lam, delta, n, a, b) in rows:
    c, lam, delta, n, a, b = mpf(c), mpf(lam), mpf(delta), mpf(n), mpf(a), mpf(b)
    if kind in ("wasserstein", "disintegrated"):
        v = wasserstein(c, lam, delta, n, a)
    elif kind == "manifold":
        v = manifold(c, lam, delta, n, a, b)
    else:
        v = tv(c, lam, delta, n)
    print('{"%s", %s, %s, %s, %s, %s, %s, %s},' % (
        kind, mp.nstr(c, 20), mp.nstr(lam, 20), mp.nstr(delta, 20), mp.nstr(n, 20),
        mp.nstr(a, 20), mp.nstr(b, 20), mp.nstr(v, 25)))
