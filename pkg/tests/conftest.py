"""Shared test helpers: random orthogonal matrices and randomly generated
bigraded complexes whose differential squares to zero exactly."""

from fractions import Fraction

import numpy as np

from nilcollapse.numerics import RationalMatrix, solve_exact
from nilcollapse.spectral import BigradedComplex


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_flat_complex(rng, a_max=2, b_max=2, max_dim=3):
    """Random first-quadrant bigraded complex with an exactly flat total
    differential.

    Construction: a nilpotent degree-raising map N built from a matching of
    basis elements (sources and targets disjoint, so N @ N = 0 by
    construction), conjugated by a unimodular filtration-preserving change of
    basis P. D = P N P^-1 then squares to zero exactly and only raises the
    first grading index, which is what the page machinery assumes.
    """
    while True:
        dims = {(a, b): int(rng.integers(0, max_dim + 1))
                for a in range(a_max + 1) for b in range(b_max + 1)}
        if sum(dims.values()) >= 2:
            break
    elems = [(a, b, i) for (a, b) in sorted(dims) for i in range(dims[(a, b)])]
    index = {e: k for k, e in enumerate(elems)}
    n = len(elems)

    # matching: each chosen source maps to one target of total degree + 1
    # sitting at equal or higher filtration; no element is both.
    N = [[Fraction(0)] * n for _ in range(n)]
    used = set()
    for u in elems:
        if u in used or rng.random() < 0.4:
            continue
        a, b, _ = u
        cands = [v for v in elems
                 if v not in used and v != u
                 and v[0] + v[1] == a + b + 1 and v[0] >= a]
        if not cands:
            continue
        v = cands[int(rng.integers(len(cands)))]
        used.add(u)
        used.add(v)
        N[index[v]][index[u]] = Fraction(int(rng.integers(1, 4)))

    # unipotent base change that only moves mass to higher filtration
    P = [[Fraction(1) if r == c else Fraction(0) for c in range(n)]
         for r in range(n)]
    for u in elems:
        for v in elems:
            if u[0] + u[1] == v[0] + v[1] and u[0] > v[0] and rng.random() < 0.5:
                P[index[u]][index[v]] = Fraction(int(rng.integers(-2, 3)))
    P = RationalMatrix(P)
    Pinv = solve_exact(P, RationalMatrix.identity(n))
    D = P @ RationalMatrix(N) @ Pinv

    maps = {}
    for (a, b), d in dims.items():
        if d == 0:
            continue
        for i in range(a_max - a + 1):
            ta, tb = a + i, b + 1 - i
            if tb < 0 or dims.get((ta, tb), 0) == 0:
                continue
            rows = [index[(ta, tb, j)] for j in range(dims[(ta, tb)])]
            cols = [index[(a, b, j)] for j in range(d)]
            block = RationalMatrix([[D.data[r][c] for c in cols] for r in rows],
                                   cols=len(cols))
            if not block.is_zero():
                maps.setdefault(i, {})[(a, b)] = block
    return BigradedComplex({k: v for k, v in dims.items() if v > 0}, maps)
