"""Independent reference values for tests/oracles.rs.

Exclusion moments: brute-force master equation on all 2^m configurations.
Robin semigroup: even/odd split, Gaussian convolution plus the half-line
Robin kernel with the exponential integral done by quadrature (mpmath).
Walk occupations: Bessel integral and symmetric eigendecomposition.
"""
import itertools

import mpmath as mp
import numpy as np
from scipy.linalg import expm

mp.mp.dps = 30


def rate(b, n, alpha):
    return alpha / n if b == 0 else 1.0


def exclusion_moments(lo, hi, n, alpha, rho0, t):
    sites = list(range(lo, hi + 1))
    m = len(sites)
    states = list(itertools.product([0, 1], repeat=m))
    index = {s: i for i, s in enumerate(states)}
    q = np.zeros((len(states), len(states)))
    for s in states:
        i = index[s]
        for k in range(m - 1):
            if s[k] != s[k + 1]:
                t2 = list(s)
                t2[k], t2[k + 1] = t2[k + 1], t2[k]
                r = rate(sites[k], n, alpha) * n * n
                q[i, index[tuple(t2)]] += r
                q[i, i] -= r
    p0 = np.array([np.prod([rho0(x / n) if b else 1 - rho0(x / n) for x, b in zip(sites, s)]) for s in states])
    pt = p0 @ expm(q * t)
    occ = np.array(states, dtype=float)
    rho = pt @ occ
    phi = {}
    for a in range(m):
        for b in range(a + 1, m):
            phi[(sites[a], sites[b])] = pt @ (occ[:, a] * occ[:, b]) - rho[a] * rho[b]
    return sites, rho, phi


def g(u):
    u = mp.mpf(u)
    if u <= 0:
        return mp.exp(-u * u) * (1 + mp.mpf("0.3") * u)
    return mp.mpf("0.6") * mp.exp(-(u - mp.mpf("0.2")) ** 2)


def g_right0():
    return mp.mpf("0.6") * mp.exp(-mp.mpf("0.04"))


def robin(alpha, t, u):
    t = mp.mpf(t)
    h = 2 * mp.mpf(alpha)
    G = lambda z: mp.exp(-z * z / (4 * t)) / mp.sqrt(4 * mp.pi * t)
    ge = lambda y: (g(y) + g(-y)) / 2
    go = lambda y: (g(y) - g(-y)) / 2
    v = abs(mp.mpf(u))
    cut = 12 * mp.sqrt(t)

    def even(x):
        return mp.quad(lambda y: G(x - y) * ge(y), [x - cut, -1e-40, 0, x + cut] if x - cut < 0 < x + cut else [x - cut, x + cut])

    def odd(x):
        def kernel(y):
            tail = mp.quad(lambda z: mp.exp(-h * z) * G(x + y + z), [0, mp.inf])
            return G(x - y) + G(x + y) - 2 * h * tail
        return mp.quad(lambda y: kernel(y) * go(y), [0, x, x + cut] if x > 0 else [0, cut])

    e, o = even(mp.mpf(u)), odd(v)
    # left limit at the origin
    return e + o if u > 0 else e - o


def simple_occupation(t):
    return mp.quad(lambda s: mp.exp(-2 * s) * mp.besseli(0, 2 * s), [0, t])


def slow_occupation(n, alpha, x, t, m=200):
    sites = np.arange(-m, m + 1)
    size = len(sites)
    q = np.zeros((size, size))
    for i in range(size - 1):
        r = rate(sites[i], n, alpha)
        q[i, i + 1] = q[i + 1, i] = r
        q[i, i] -= r
        q[i + 1, i + 1] -= r
    lam, vec = np.linalg.eigh(q)
    micro = t * n * n
    w = np.where(np.abs(lam) < 1e-14, micro, np.expm1(lam * micro) / np.where(lam == 0, 1, lam))
    i = x + m
    occ = vec[i, :] * w @ vec.T
    return float((occ[m] + occ[m + 1]) / n)


def main():
    tanh = lambda u: 0.5 + 0.25 * np.tanh(u)
    step = lambda u: 0.5 if u <= 0 else 0.25
    for name, lo, hi, n, alpha, prof, t in [
        ("TANH", -2, 2, 4, 0.5, tanh, 0.05),
        ("STEP", -3, 3, 3, 0.1, step, 0.08),
    ]:
        sites, rho, phi = exclusion_moments(lo, hi, n, alpha, prof, t)
        print(f"// {name}: window [{lo}, {hi}], n = {n}, alpha = {alpha}, t = {t}")
        print(f"const {name}_RHO: [f64; {len(rho)}] = [{', '.join(repr(float(r)) for r in rho)}];")
        items = ", ".join(f"(({a}, {b}), {float(v)!r})" for (a, b), v in phi.items())
        print(f"const {name}_PHI: [((i64, i64), f64); {len(phi)}] = [{items}];")
    rows = []
    for alpha, t in [(0.7, 0.05), (0.7, 0.3), (3.0, 0.1)]:
        for u in [-1.1, -0.2, 0.0, 0.15, 0.9]:
            rows.append(f"({alpha}, {t}, {u}, {float(robin(alpha, t, u))!r})")
    print(f"const ROBIN: [(f64, f64, f64, f64); {len(rows)}] = [{', '.join(rows)}];")
    print("const SIMPLE_OCC: [(f64, f64); 4] = [" + ", ".join(f"({t}.0, {float(simple_occupation(t))!r})" for t in [1, 4, 16, 64]) + "];")
    rows = [f"({n}, {a}, {x}, {t}, {slow_occupation(n, a, x, t)!r})" for n, a, x, t in [(8, 1.0, 0, 1.0), (8, 0.3, 5, 0.5), (16, 1.0, -3, 0.25)]]
    print(f"const SLOW_OCC: [(u32, f64, i64, f64, f64); {len(rows)}] = [{', '.join(rows)}];")


if __name__ == "__main__":
    main()
