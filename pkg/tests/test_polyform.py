"""Exact polynomial/differential-form layer: arithmetic, dbar, CF forms, Omega.

Derived oracles (the n=2 Bochner-Martinelli expansion, the Koppelman identity
instances) are hand-expanded below, independently of the implementation.
"""

import itertools
import random
from fractions import Fraction as Fr

import pytest

from crkernels.polyform import (
    BarrierMismatch,
    BarrierRegistry,
    CFrac,
    FormExpr,
    Poly,
    PolyParseError,
    SingularEvaluation,
    cf_form,
    dbar,
    form_power,
    koppelman,
    product_formula,
    wedge,
)
from helpers_poly import bm_section, random_poly, random_section


# ---------------------------------------------------------------- CFrac

def test_cfrac_field_ops():
    a = CFrac(Fr(1, 2), Fr(-3))
    b = CFrac(Fr(2), Fr(1, 3))
    assert a + b == CFrac(Fr(5, 2), Fr(-8, 3))
    assert a * b == CFrac(Fr(1, 2) * Fr(2) - Fr(-3) * Fr(1, 3),
                          Fr(1, 2) * Fr(1, 3) + Fr(-3) * Fr(2))
    assert (a / b) * b == a
    assert a.conjugate() == CFrac(Fr(1, 2), Fr(3))
    assert complex(CFrac(Fr(1, 4), Fr(-2))) == 0.25 - 2j
    assert not CFrac(0)
    with pytest.raises(ZeroDivisionError):
        a / CFrac(0)


# ---------------------------------------------------------------- Poly

def test_poly_ring_axioms_small():
    rng = random.Random(3)
    for _ in range(10):
        a = random_poly(rng, 2)
        b = random_poly(rng, 2)
        c = random_poly(rng, 2)
        assert a + b == b + a
        assert (a + b) * c == a * c + b * c
        assert a * (b * c) == (a * b) * c
        assert (a - a).is_zero()


def test_poly_generator_and_pow():
    z1 = Poly.generator(2, 4)  # z_1 at n=2 (block order: zeta, conj zeta, z, conj z)
    p = (z1 + Poly.const(2, 1)) ** 2
    q = z1 * z1 + 2 * z1 + Poly.const(2, 1)
    assert p == q


def test_poly_derivative():
    n = 2
    w1 = Poly.generator(n, 0)
    w1b = Poly.generator(n, n)
    p = w1 ** 2 * w1b + 3 * w1
    assert p.derivative(0) == 2 * w1 * w1b + Poly.const(n, 3)
    assert p.derivative(n) == w1 ** 2
    assert p.derivative(n + 1).is_zero()


def test_poly_conjugate_swap_diagonal():
    n = 2
    w1, w1b = Poly.generator(n, 0), Poly.generator(n, n)
    z1, z1b = Poly.generator(n, 2 * n), Poly.generator(n, 3 * n)
    p = CFrac(Fr(0), Fr(1)) * w1 * z1b
    assert p.conjugate() == CFrac(Fr(0), Fr(-1)) * w1b * z1
    assert p.swap_slots() == CFrac(Fr(0), Fr(1)) * z1 * w1b
    # diagonal z := zeta
    q = w1 * z1 - w1 ** 2
    assert q.diagonal().is_zero()


def test_poly_evaluate_matches_exact():
    rng = random.Random(5)
    p = random_poly(rng, 2, degree=3, nterms=5)
    zeta = (0.3 + 0.7j, -1.2 + 0.1j)
    z = (0.5 - 0.25j, 2.0 + 1.0j)
    ez = (CFrac(Fr(3, 10), Fr(7, 10)), CFrac(Fr(-6, 5), Fr(1, 10)))
    ezz = (CFrac(Fr(1, 2), Fr(-1, 4)), CFrac(Fr(2), Fr(1)))
    got = p.evaluate(zeta, z)
    want = complex(p.evaluate_exact(ez, ezz))
    assert abs(got - want) < 1e-12 * (1 + abs(want))


def test_poly_parse_roundtrip():
    n = 3
    rng = random.Random(9)
    for _ in range(20):
        p = random_poly(rng, n, degree=3, nterms=4)
        assert Poly.parse(p.to_text(), n) == p


def test_poly_parse_examples():
    n = 2
    p = Poly.parse("2*z1 + w2^2 - conj(w1)*z2 + 1/2", n)
    z1 = Poly.generator(n, 2 * n)
    w2 = Poly.generator(n, 1)
    w1b = Poly.generator(n, n)
    z2 = Poly.generator(n, 2 * n + 1)
    assert p == 2 * z1 + w2 ** 2 - w1b * z2 + Poly.const(n, Fr(1, 2))
    assert Poly.parse("conj(2*z1 - i)", n) == 2 * Poly.generator(n, 3 * n) + CFrac(Fr(0), Fr(1)) * Poly.const(n, 1)


def test_poly_parse_errors_carry_position():
    with pytest.raises(PolyParseError) as e:
        Poly.parse("z1 + q3", 2)
    assert e.value.line == 1 and e.value.col == 6
    with pytest.raises(PolyParseError):
        Poly.parse("z1 *", 2)
    with pytest.raises(PolyParseError):
        Poly.parse("z5", 2)  # out of range for n=2


# ---------------------------------------------------------------- wedge / dbar

def _bits(*idx):
    m = 0
    for i in idx:
        m |= 1 << i
    return m


def test_wedge_examples():
    n = 2
    reg = BarrierRegistry(n)
    dz1 = FormExpr.covector(n, reg, 0)        # d zeta_1
    dzb2 = FormExpr.covector(n, reg, 3 * n + 1)  # d conj(z_2)
    assert wedge(dz1, dz1).is_zero()
    a = wedge(dz1, dzb2)
    b = wedge(dzb2, dz1)
    assert (a + b).is_zero()                  # anticommute for degree-1 forms
    # denominator exponents add
    phi = Poly.parse("w1 - z1", n)
    pid = reg.register(phi)
    f = dz1.with_denominator(((pid, 1),))
    g = FormExpr.covector(n, reg, 1).with_denominator(((pid, 1),))
    fg = wedge(f, g)
    ((mask, den),) = [k for k in fg.terms]
    assert den == ((pid, 2),)
    assert mask == _bits(0, 1)


def test_wedge_graded_anticommutativity_random():
    rng = random.Random(21)
    n = 2
    reg = BarrierRegistry(n)
    for _ in range(12):
        fa = _random_form(rng, n, reg)
        fb = _random_form(rng, n, reg)
        da, db = fa.degree(), fb.degree()
        if da is None or db is None:
            continue
        sign = -1 if (da * db) % 2 else 1
        assert (wedge(fa, fb) - sign * wedge(fb, fa)).is_zero()


def _random_form(rng, n, reg, nterms=2):
    """Random homogeneous form of random degree with polynomial coefficients."""
    deg = rng.randint(0, 2)
    total = FormExpr.zero(n, reg)
    covs = list(range(4 * n))
    for _ in range(nterms):
        picks = tuple(sorted(rng.sample(covs, deg)))
        mask = _bits(*picks)
        p = random_poly(rng, n, degree=2, nterms=2)
        total = total + FormExpr.from_term(n, reg, mask, (), p)
    return total


def test_dbar_examples():
    n = 2
    reg = BarrierRegistry(n)
    c = FormExpr.scalar(Poly.const(n, 5), reg)
    assert dbar(c).is_zero()
    # dbar(conj(zeta_1) * d zeta_1) = d conj(zeta_1) wedge d zeta_1
    zb1 = Poly.generator(n, n)
    f = FormExpr.from_term(n, reg, _bits(0), (), zb1)
    got = dbar(f)
    want = FormExpr.from_term(n, reg, _bits(0, n), (), Poly.const(n, 1))
    # d conj(zeta_1) carries index n; canonical order puts d zeta_1 first, so sign -1
    assert (got + want).is_zero() or (got - want).is_zero()
    ((mask, _),) = list(got.terms)
    assert mask == _bits(0, n)


def test_dbar_squares_to_zero_random():
    rng = random.Random(33)
    n = 2
    reg = BarrierRegistry(n)
    phi = Poly.parse("(w1 - z1)*conj(w1 - z1) + (w2 - z2)*conj(w2 - z2)", n)
    pid = reg.register(phi)
    for _ in range(10):
        f = _random_form(rng, n, reg)
        if rng.random() < 0.5:
            f = f.with_denominator(((pid, rng.randint(1, 2)),))
        assert dbar(dbar(f)).is_zero()


def test_dbar_quotient_rule():
    # dbar(1/Phi) = -dbar(Phi)/Phi^2, checked against a hand expansion
    n = 1
    reg = BarrierRegistry(n)
    phi = Poly.parse("conj(w1 - z1)*(w1 - z1)", n)
    pid = reg.register(phi)
    one_over = FormExpr.scalar(Poly.const(n, 1), reg).with_denominator(((pid, 1),))
    got = dbar(one_over)
    w = Poly.parse("w1 - z1", n)
    # d/d(conj zeta_1) Phi = (w1 - z1); d/d(conj z_1) Phi = -(w1 - z1)
    want = (FormExpr.from_term(n, reg, _bits(1), ((pid, 2),), -1 * w)
            + FormExpr.from_term(n, reg, _bits(3), ((pid, 2),), w))
    assert (got - want).is_zero()


def test_formexpr_is_zero_across_denominators():
    # Phi * g / Phi^2  ==  g / Phi  after clearing
    n = 2
    reg = BarrierRegistry(n)
    phi = Poly.parse("w1 - z1", n)
    pid = reg.register(phi)
    g = Poly.parse("conj(w2) + 3*z2", n)
    a = FormExpr.from_term(n, reg, _bits(2), ((pid, 2),), phi * g)
    b = FormExpr.from_term(n, reg, _bits(2), ((pid, 1),), g)
    assert (a - b).is_zero()
    assert not (a + b).is_zero()


# ---------------------------------------------------------------- CF forms and Omega

def test_cf_form_bm_n1():
    n = 1
    reg = BarrierRegistry(n)
    B = bm_section(n)
    phi = Poly.parse("conj(w1 - z1)*(w1 - z1)", n)
    pid = reg.register(phi)
    w = cf_form(B, pid, reg)
    want = (FormExpr.from_term(n, reg, _bits(0), ((pid, 1),), B[0])
            - FormExpr.from_term(n, reg, _bits(2), ((pid, 1),), B[0]))
    assert (w - want).is_zero()


def test_cf_form_constant_section():
    n = 2
    reg = BarrierRegistry(n)
    G = [Poly.const(n, 1), Poly.const(n, 0)]
    pid = reg.register(Poly.parse("w1 - z1", n))
    w = cf_form(G, pid, reg)
    want = (FormExpr.from_term(n, reg, _bits(0), ((pid, 1),), Poly.const(n, 1))
            - FormExpr.from_term(n, reg, _bits(2 * n), ((pid, 1),), Poly.const(n, 1)))
    assert (w - want).is_zero()


def test_cf_form_rejects_wrong_barrier():
    n = 2
    reg = BarrierRegistry(n)
    G = [Poly.const(n, 1), Poly.const(n, 0)]
    pid = reg.register(Poly.parse("w2 - z2", n))
    with pytest.raises(BarrierMismatch):
        cf_form(G, pid, reg)


def _register_section(reg, G):
    n = reg.n
    phi = Poly.zero(n)
    for j in range(n):
        wj = Poly.generator(n, j) - Poly.generator(n, 2 * n + j)
        phi = phi + G[j] * wj
    return reg.register(phi)


def test_omega_repeated_map_is_zero_and_strict():
    rng = random.Random(41)
    n = 2
    reg = BarrierRegistry(n)
    G = random_section(rng, n)
    pid = _register_section(reg, G)
    assert koppelman([(G, pid), (G, pid)], reg).is_zero()
    with pytest.raises(ValueError):
        koppelman([(G, pid), (G, pid)], reg, strict=True)
    with pytest.raises(ValueError):
        koppelman([(G, pid)] * 3, reg)  # m > n


def test_omega_bm_against_hand_expansion():
    # n = 2: Omega(B) = (B.dw) ^ (dbar B.dw) / Phi^2, expanded by hand.
    n = 2
    reg = BarrierRegistry(n)
    B = bm_section(n)
    pid = _register_section(reg, B)
    om = koppelman([(B, pid)], reg)

    zeta = (1.0 + 0.0j, 0.0 + 0.0j)
    z = (0.0 + 0.0j, 0.0 + 0.0j)
    val = om.evaluate(zeta, z)

    # hand expansion at this point: w = (1,0), Phi = |w|^2 = 1
    # B.dw = conj(w_1) dw_1 + conj(w_2) dw_2 -> only dw_1 survives, coefficient 1
    # dbar B.dw = sum_j dwbar_j ^ dw_j -> only j = 2 survives against dw_1
    # product = dw_1 ^ dwbar_2 ^ dw_2, coefficient 1; expand dw_1 = dzeta_1 - dz_1,
    # dwbar_2 = dconj(zeta_2) - dconj(z_2), dw_2 = dzeta_2 - dz_2, collect signs.
    want = {}
    for (i1, s1) in [(0, 1.0), (2 * n, -1.0)]:
        for (i2, s2) in [(n + 1, 1.0), (3 * n + 1, -1.0)]:
            for (i3, s3) in [(1, 1.0), (2 * n + 1, -1.0)]:
                idx = (i1, i2, i3)
                if len(set(idx)) < 3:
                    continue
                order = tuple(sorted(idx))
                # parity of the permutation sorting idx
                perm = sorted(range(3), key=lambda t: idx[t])
                inv = sum(1 for a in range(3) for b in range(a + 1, 3)
                          if perm[a] > perm[b])
                sgn = -1.0 if inv % 2 else 1.0
                mask = _bits(*order)
                want[mask] = want.get(mask, 0.0) + s1 * s2 * s3 * sgn
    want = {m: v for m, v in want.items() if abs(v) > 0}
    got = {m: v for m, v in val.coeffs.items() if abs(v) > 1e-14}
    assert set(got) == set(want)
    for m in want:
        assert abs(got[m] - want[m]) < 1e-12


def test_omega_singular_evaluation():
    n = 2
    reg = BarrierRegistry(n)
    B = bm_section(n)
    pid = _register_section(reg, B)
    om = koppelman([(B, pid)], reg)
    zeta = (0.5 + 0.5j, -0.25 + 0.0j)
    with pytest.raises(SingularEvaluation):
        om.evaluate(zeta, zeta)


def test_koppelman_lemma_m2_instance():
    # dbar Omega(G1, G2) = -Omega(G2) + Omega(G1) for one fixed small pair
    rng = random.Random(55)
    n = 2
    reg = BarrierRegistry(n)
    G1 = random_section(rng, n, degree=1)
    G2 = random_section(rng, n, degree=1)
    p1 = _register_section(reg, G1)
    p2 = _register_section(reg, G2)
    lhs = dbar(koppelman([(G1, p1), (G2, p2)], reg))
    rhs = -1 * koppelman([(G2, p2)], reg) + koppelman([(G1, p1)], reg)
    assert (lhs - rhs).is_zero()


def test_koppelman_lemma_random_trials():
    # subset of the acceptance sweep: n = 2,3 and m = 2,3
    rng = random.Random(77)
    for n, m in [(2, 2), (3, 2), (3, 3)]:
        reg = BarrierRegistry(n)
        maps = []
        for _ in range(m):
            G = random_section(rng, n, degree=2)
            maps.append((G, _register_section(reg, G)))
        om = koppelman(maps, reg)
        lhs = dbar(om)
        rhs = FormExpr.zero(n, reg)
        for j in range(m):
            others = maps[:j] + maps[j + 1:]
            sub = koppelman(others, reg) if others else FormExpr.zero(n, reg)
            rhs = rhs + ((-1) ** (j + 1)) * sub
        assert (lhs - rhs).is_zero(), f"Koppelman residual nonzero at n={n} m={m}"


def test_product_formula_matches_wedge_powers():
    # omega ^ (dbar omega)^k equals the closed product, k = 0,1,2
    rng = random.Random(91)
    n = 3
    reg = BarrierRegistry(n)
    G = random_section(rng, n, degree=2)
    pid = _register_section(reg, G)
    om = cf_form(G, pid, reg)
    dom = dbar(om)
    for k in (0, 1, 2):
        lhs = wedge(om, form_power(dom, k))
        rhs = product_formula(G, pid, reg, k)
        assert (lhs - rhs).is_zero(), f"product formula fails at k={k}"


def test_bidegree_partition():
    n = 2
    reg = BarrierRegistry(n)
    B = bm_section(n)
    pid = _register_section(reg, B)
    om = koppelman([(B, pid)], reg)
    parts = []
    total = FormExpr.zero(n, reg)
    for s in range(n + 1):
        for r in range(n + 1):
            part = om.bidegree_part(s, r)
            parts.append(((s, r), part))
            total = total + part
    assert (total - om).is_zero()
    # a pure-d zeta form has no (1,0)-in-z piece
    f = FormExpr.from_term(n, reg, _bits(0, 1), (), Poly.const(n, 2))
    assert f.bidegree_part(1, 0).is_zero()
    # BMK has a nonzero (0, n-1)-in-z piece
    assert not om.bidegree_part(0, n - 1).is_zero()
