"""Barrier construction on the two bundled model manifolds.

The frozen matrices and rational constants below were derived by hand from
the model defining functions (mixed Hessians of low-degree polynomials and
2x2 eigenproblems), not read back from the implementation.
"""

from fractions import Fraction as Fr

import pytest

from crkernels.barrier import (
    BarrierViolation,
    CalibrationError,
    IrrationalSpectrum,
    ModelError,
    ModelManifold,
    build_leray_datum,
    convexify,
    count_holomorphic_directions,
    holomorphy_check,
    leray,
    levi,
    matrix_rank_exact,
    model_a,
    model_b,
    tangent_fields,
    validate_barrier,
)
from crkernels.polyform import BarrierRegistry, CFrac, Poly


def P(text, n):
    return Poly.parse(text, n)


def cf(a, b=0):
    return CFrac(Fr(a), Fr(b))


# ---------------------------------------------------------------- models


def test_model_a_shape():
    m = model_a()
    assert (m.n, m.k, m.q) == (3, 1, 1)
    rho = m.rho_hat[0]
    assert (rho.conjugate() - rho).is_zero()
    assert m.C == 1


def test_model_b_shape():
    m = model_b()
    assert (m.n, m.k, m.q) == (4, 2, 1)
    for rho in m.rho_hat:
        assert (rho.conjugate() - rho).is_zero()


def test_base_point_off_manifold_rejected():
    with pytest.raises(ModelError):
        ModelManifold(
            n=3, k=1, q=1,
            rho_hat=[P("z3 + conj(z3) + z1*conj(z1) - z2*conj(z2)", 3)],
            C=Fr(1), base_point=(cf(1), cf(0), cf(0)),
            radius=Fr(1, 2), alpha_floor=Fr(1, 100))


def test_cr_genericity_rejected():
    # d-bar of |z1|^2 vanishes at the origin, so the quadric z2 = -|z1|^2
    # written without a linear term cannot pass the genericity test.
    with pytest.raises(ModelError):
        ModelManifold(
            n=2, k=1, q=0,
            rho_hat=[P("z1*conj(z1)", 2)],
            C=Fr(1), base_point=(cf(0), cf(0)),
            radius=Fr(1, 2), alpha_floor=Fr(1, 100))


def test_q_concavity_rejected():
    # strictly pseudoconvex side only: no negative Levi eigenvalue for x=+1
    with pytest.raises(ModelError):
        ModelManifold(
            n=2, k=1, q=1,
            rho_hat=[P("z2 + conj(z2) + z1*conj(z1)", 2)],
            C=Fr(1), base_point=(cf(0), cf(0)),
            radius=Fr(1, 2), alpha_floor=Fr(1, 100))


def test_nonreal_rho_rejected():
    with pytest.raises(ModelError):
        ModelManifold(
            n=2, k=1, q=0,
            rho_hat=[P("z2 + z1*conj(z1)", 2)],
            C=Fr(1), base_point=(cf(0), cf(0)),
            radius=Fr(1, 2), alpha_floor=Fr(1, 100))


# ---------------------------------------------------------------- levi


def test_levi_unit_quadric():
    H = levi(P("z1*conj(z1)", 3), (cf(0), cf(0), cf(0)))
    want = [[1, 0, 0], [0, 0, 0], [0, 0, 0]]
    for i in range(3):
        for j in range(3):
            assert H[i][j] == cf(want[i][j])


def test_levi_pluriharmonic_is_zero():
    H = levi(P("z3 + conj(z3)", 3), (cf(1), cf(2), cf(-1)))
    assert all(not H[i][j] for i in range(3) for j in range(3))


def test_levi_model_a_quadric():
    m = model_a()
    H = levi(m.rho_hat[0], m.base_point)
    diag = [cf(1), cf(-1), cf(0)]
    for i in range(3):
        for j in range(3):
            assert H[i][j] == (diag[i] if i == j else cf(0))


def test_levi_convexified_model_a():
    m = model_a()
    rho = convexify(m)[1]
    H = levi(rho, m.base_point)
    diag = [cf(1), cf(-1), cf(2)]
    for i in range(3):
        for j in range(3):
            assert H[i][j] == (diag[i] if i == j else cf(0))


def test_levi_hermitian_on_random_real_polys(rng_seed=29):
    import random

    rnd = random.Random(rng_seed)
    n = 3
    for _ in range(10):
        p = Poly.zero(n)
        for _ in range(4):
            i = rnd.randrange(n)
            j = rnd.randrange(n)
            c = CFrac(Fr(rnd.randint(-3, 3)), Fr(rnd.randint(-3, 3)))
            mono = Poly.generator(n, i) * Poly.generator(n, n + j)
            p = p + c * mono
        p = p + p.conjugate()
        pt = tuple(cf(Fr(rnd.randint(-2, 2), 3)) for _ in range(n))
        H = levi(p, pt)
        for i in range(n):
            for j in range(n):
                assert H[i][j] == H[j][i].conjugate()


# ---------------------------------------------------------------- convexify


def test_convexify_model_a_polynomials():
    m = model_a()
    rhos = convexify(m)
    assert set(rhos) == {1, -1}
    rh = m.rho_hat[0]
    assert (rhos[1] - (rh + rh * rh)).is_zero()
    assert (rhos[-1] - (-1 * rh + rh * rh)).is_zero()
    zero = (cf(0), cf(0), cf(0))
    assert not rhos[-1].evaluate_exact(zero, zero)


def test_convexify_model_b_runs():
    rhos = convexify(model_b())
    assert set(rhos) == {1, 2, -1, -2}


# ---------------------------------------------------------------- leray


def test_leray_model_a_projection_and_constants():
    m = model_a()
    reg = BarrierRegistry(3)
    d = leray(m, (Fr(1),), reg)
    want_Q = [[0, 0, 0], [0, 1, 0], [0, 0, 0]]
    for i in range(3):
        for j in range(3):
            assert d.Q[i][j] == cf(want_Q[i][j])
    assert d.d == 2
    assert d.alpha == Fr(1, 2)
    assert d.A == 2
    assert d.R_used == Fr(1, 8)
    assert reg.poly(d.phi_id) == d.Phi


def test_leray_phi_identity_model_a():
    m = model_a()
    reg = BarrierRegistry(3)
    d = leray(m, (Fr(1),), reg)
    n = 3
    w2 = Poly.generator(n, 1) - Poly.generator(n, 2 * n + 1)
    w2b = Poly.generator(n, n + 1) - Poly.generator(n, 3 * n + 1)
    assert (d.Phi - d.F_tilde - 2 * (w2b * w2)).is_zero()
    # Phi really is G.(zeta-z)
    acc = Poly.zero(n)
    for j in range(n):
        wj = Poly.generator(n, j) - Poly.generator(n, 2 * n + j)
        acc = acc + d.G[j] * wj
    assert (acc - d.Phi).is_zero()


def test_quadric_part_has_no_holomorphic_hessian():
    m = model_a()
    rh = m.rho_hat[0]
    for kk in range(3):
        for jj in range(3):
            assert rh.derivative(kk).derivative(jj).is_zero()


def test_leray_model_a_negative_direction():
    m = model_a()
    reg = BarrierRegistry(3)
    d = leray(m, (Fr(-1),), reg)
    # Levi of rho_{-1} at 0 is diag(-1, 1, 2); the negative space is e1.
    want_Q = [[1, 0, 0], [0, 0, 0], [0, 0, 0]]
    for i in range(3):
        for j in range(3):
            assert d.Q[i][j] == cf(want_Q[i][j])
    assert d.d == 2


def test_leray_model_b_apex():
    m = model_b()
    reg = BarrierRegistry(4)
    d = leray(m, (Fr(3, 7), Fr(4, 7)), reg)
    assert d.d == 3
    assert d.alpha == Fr(5, 14)
    block = [[Fr(1, 5), Fr(-2, 5)], [Fr(-2, 5), Fr(4, 5)]]
    for i in range(4):
        for j in range(4):
            want = block[i][j] if i < 2 and j < 2 else Fr(0)
            assert d.Q[i][j] == CFrac(want)


def test_leray_irrational_spectrum_refused():
    m = model_b()
    reg = BarrierRegistry(4)
    with pytest.raises(IrrationalSpectrum):
        leray(m, (Fr(1, 2), Fr(1, 2)), reg)


def test_projection_properties_both_models():
    cases = [
        (model_a(), (Fr(1),)),
        (model_a(), (Fr(-1),)),
        (model_b(), (Fr(3, 7), Fr(4, 7))),
        (model_b(), (Fr(1), Fr(0))),
    ]
    for m, a in cases:
        reg = BarrierRegistry(m.n)
        dat = leray(m, a, reg)
        n = m.n
        Q = dat.Q
        QQ = [[sum((Q[i][t] * Q[t][j] for t in range(n)), CFrac(0))
               for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(n):
                assert QQ[i][j] == Q[i][j]
                assert Q[j][i].conjugate() == Q[i][j]
        assert matrix_rank_exact(Q) == n - dat.d


def test_direction_weights_must_sum_to_one():
    m = model_a()
    reg = BarrierRegistry(3)
    with pytest.raises(ValueError):
        leray(m, (Fr(1, 2),), reg)


# ---------------------------------------------------------------- validation


def test_validate_barrier_model_a():
    m = model_a()
    reg = BarrierRegistry(3)
    d = leray(m, (Fr(1),), reg)
    rep = validate_barrier(d, samples=20_000, seed=42)
    assert rep.samples == 20_000
    assert rep.min_slack >= -1e-12


def test_validate_barrier_model_b_apex():
    m = model_b()
    reg = BarrierRegistry(4)
    d = leray(m, (Fr(3, 7), Fr(4, 7)), reg)
    rep = validate_barrier(d, samples=20_000, seed=43)
    assert rep.min_slack >= -1e-12


def test_zero_A_breaks_the_inequality():
    m = model_a()
    reg = BarrierRegistry(3)
    d = build_leray_datum(m, (Fr(1),), reg, A=Fr(0), alpha=Fr(1, 2),
                          radius=Fr(1, 2))
    with pytest.raises(BarrierViolation):
        validate_barrier(d, samples=20_000, seed=44)


def test_phi_vanishes_on_the_diagonal():
    m = model_a()
    reg = BarrierRegistry(3)
    d = leray(m, (Fr(1),), reg)
    assert d.Phi.diagonal().is_zero()


# ---------------------------------------------------------------- holomorphy


def test_holomorphy_model_a():
    m = model_a()
    reg = BarrierRegistry(3)
    d = leray(m, (Fr(1),), reg)
    assert holomorphy_check(d) == 2


def test_holomorphy_counts_bm_and_constant_sections():
    n = 3
    B = [Poly.generator(n, n + j) - Poly.generator(n, 3 * n + j)
         for j in range(n)]
    phi_bm = Poly.zero(n)
    for j in range(n):
        wj = Poly.generator(n, j) - Poly.generator(n, 2 * n + j)
        phi_bm = phi_bm + B[j] * wj
    axes = [tuple(cf(1 if t == j else 0) for t in range(n)) for j in range(n)]
    assert count_holomorphic_directions(B, phi_bm, axes) == 0

    const = [Poly.const(n, 1), Poly.zero(n), Poly.zero(n)]
    phi_c = Poly.generator(n, 0) - Poly.generator(n, 2 * n)
    assert count_holomorphic_directions(const, phi_c, axes) == 3


def test_holomorphy_model_b_apex():
    m = model_b()
    reg = BarrierRegistry(4)
    d = leray(m, (Fr(3, 7), Fr(4, 7)), reg)
    assert holomorphy_check(d) == 3


# ---------------------------------------------------------------- tangent fields


def test_tangent_fields_model_a():
    m = model_a()
    tf = tangent_fields(m, [(Fr(1),)])
    assert tf.nu == (3,)
    assert not tf.detB.evaluate_exact(
        (cf(0), cf(0), cf(0)), (cf(0), cf(0), cf(0))) - cf(1)
    assert tf.apply_cleared(0, tf.rho[0]).is_zero()


def test_tangent_fields_model_a_kronecker():
    m = model_a()
    reg = BarrierRegistry(3)
    dat = leray(m, (Fr(1),), reg)
    tf = tangent_fields(m, [(Fr(1),)], barriers=[dat])
    got = tf.apply_cleared(0, dat.Phi).diagonal()
    scale = 2 * (tf.detA * tf.detB)
    assert (got - scale).is_zero()


def test_tangent_fields_model_b():
    m = model_b()
    dirs = [(Fr(1), Fr(0)), (Fr(0), Fr(1))]
    tf = tangent_fields(m, dirs)
    assert tf.nu == (3, 4)
    for i in range(2):
        for j in range(2):
            assert tf.apply_cleared(i, tf.rho[j]).is_zero()


def test_tangent_fields_model_b_kronecker():
    m = model_b()
    reg = BarrierRegistry(4)
    dats = [leray(m, (Fr(1), Fr(0)), reg), leray(m, (Fr(0), Fr(1)), reg)]
    tf = tangent_fields(m, [(Fr(1), Fr(0)), (Fr(0), Fr(1))], barriers=dats)
    scale = 2 * (tf.detA * tf.detB)
    for i in range(2):
        for j in range(2):
            got = tf.apply_cleared(i, dats[j].Phi).diagonal()
            want = scale if i == j else Poly.zero(4)
            assert (got - want).is_zero()


def test_tangent_fields_dependent_directions_rejected():
    m = model_b()
    with pytest.raises(ValueError):
        tangent_fields(m, [(Fr(1), Fr(0)), (Fr(1), Fr(0))])
