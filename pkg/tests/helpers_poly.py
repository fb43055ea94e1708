"""Shared builders for polynomial-section test data."""

import random
from fractions import Fraction

from crkernels.polyform import CFrac, Poly


def random_poly(rng: random.Random, n: int, degree: int = 2, nterms: int = 3) -> Poly:
    """Random polynomial in all 4n generators, small integer coefficients."""
    terms = {}
    for _ in range(nterms):
        exps = [0] * (4 * n)
        for _ in range(rng.randint(0, degree)):
            exps[rng.randrange(4 * n)] += 1
        coeff = CFrac(Fraction(rng.randint(-4, 4)), Fraction(rng.randint(-2, 2)))
        key = tuple(exps)
        terms[key] = terms.get(key, CFrac(0)) + coeff
    return Poly.from_terms(n, terms)


def random_section(rng: random.Random, n: int, degree: int = 2):
    """Random polynomial Leray section G = (g_1..g_n), not identically zero."""
    while True:
        G = [random_poly(rng, n, degree) for _ in range(n)]
        if any(not g.is_zero() for g in G):
            return G


def bm_section(n: int):
    """B = conj(zeta - z), the Bochner-Martinelli section."""
    out = []
    for j in range(n):
        zb = Poly.generator(n, n + j)      # conj(zeta_j)
        wb = Poly.generator(n, 3 * n + j)  # conj(z_j)
        out.append(zb - wb)
    return out
