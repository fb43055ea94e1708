"""Kernel assembly layer: index combinatorics, bundles, identities, extraction.

The expected forms for the codimension-one model are frozen here as direct
Omega constructions (hand-derived), so the bundle assembly is checked against
independently built expressions rather than against itself.
"""

from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings, strategies as st

from crkernels.barrier import model_a, model_b
from crkernels.kernels import (
    ApexError,
    IndexSet,
    KernelError,
    SubdivisionError,
    apex_admissible,
    assemble,
    build_bundle,
    direction_vector,
    extract_solution_kernel,
    index_machinery,
    index_sets,
    index_sets_prime,
    sigma_chain,
    verify_identity,
)
from crkernels.polyform import BarrierRegistry, koppelman
from crkernels.simplicial import Chain, boundary


@pytest.fixture(scope="module")
def bundle_a():
    reg = BarrierRegistry(3)
    return build_bundle(model_a(), reg)


@pytest.fixture(scope="module")
def bundle_b():
    # select_m refuses this model (tested separately); depth 0 is forced.
    reg = BarrierRegistry(4)
    return build_bundle(model_b(), reg, m=0)


# ---------------------------------------------------------------- index sets

def test_index_set_ordering_sign_and_deletion():
    I = IndexSet((1, -2))
    assert I.elements == (1, -2)
    assert len(I) == 2
    assert I.element(1) == 1
    assert I.element(2) == -2
    assert I.sgn == -1
    assert I.drop(2) == IndexSet((1,))
    assert I.drop(1) == IndexSet((-2,))
    assert IndexSet((2, 1)).elements == (1, 2)
    assert IndexSet((-1,)).sgn == -1
    assert IndexSet((1, 2, -3)).sgn == -1


def test_index_set_rejects_bad_elements():
    with pytest.raises(ValueError):
        IndexSet((1, -1))
    with pytest.raises(ValueError):
        IndexSet((0,))


def test_family_sizes():
    assert len(index_sets(3, 1)) == 6
    assert len(index_sets(3, 2)) == 12
    assert len(index_sets(3, 3)) == 8
    for ell in (1, 2, 3):
        assert len(index_sets_prime(3, ell)) == 2 ** ell


def test_prime_family_k1_signs():
    fam = index_sets_prime(1, 1)
    assert [i.elements for i in fam] == [(1,), (-1,)]
    assert [i.sgn for i in fam] == [1, -1]


def test_prime_family_enumeration_order_k2():
    fam = index_sets_prime(2, 2)
    assert [i.elements for i in fam] == [(1, 2), (1, -2), (-1, 2), (-1, -2)]


def test_index_machinery_bundle_and_bound():
    fam = index_machinery(2)
    assert set(fam["all"]) == {1, 2}
    assert fam["prime"][2] == index_sets_prime(2, 2)
    with pytest.raises(ValueError):
        index_machinery(5)


def test_sign_weighted_boundary_sum_vanishes():
    for k in (1, 2, 3):
        total = Chain()
        for I in index_sets_prime(k, k):
            total = total + I.sgn * boundary(sigma_chain(I, k))
        assert total.is_zero()


def test_sigma_chain_vertices():
    ch = sigma_chain(IndexSet((1, -2)), 2)
    (s,) = ch.simplices()
    assert s == ((Fr(1), Fr(0)), (Fr(0), Fr(-1)))
    assert direction_vector(-2, 2) == (Fr(0), Fr(-1))


# ---------------------------------------------------------------- bundles, model A

def test_model_a_bundle_constants(bundle_a):
    assert bundle_a.m == 0
    assert bundle_a.apex == (Fr(1),)
    assert set(bundle_a.data) == {(Fr(1),), (Fr(-1),)}


def test_model_a_kernels_equal_directly_built_forms(bundle_a):
    b = bundle_a
    reg = b.reg
    bm = (b.bm_section, b.bm_id)
    p1 = b.leray_pair((Fr(1),))
    p2 = b.leray_pair((Fr(-1),))
    i1, i2 = IndexSet((1,)), IndexSet((-1,))
    assert (b.B_I[i1] - koppelman([bm], reg)).is_zero()
    assert (b.K_I[i1] - koppelman([bm, p1], reg)).is_zero()
    assert (b.K - (b.K_I[i1] - b.K_I[i2])).is_zero()
    # the apex slot repeats the first direction, so one of the two Omega
    # summands collapses and R reduces to a single two-section form
    assert (b.R - (-1) * koppelman([p1, p2], reg)).is_zero()
    assert (b.E - (-1) * koppelman([bm, p1, p2], reg)).is_zero()
    assert (assemble(b, "K") - b.K).is_zero()
    assert (assemble(b, "B_I", i2) - koppelman([bm], reg)).is_zero()


def test_degenerate_simplex_evaluates_to_zero(bundle_a):
    e1 = (Fr(1),)
    ch = Chain.of((e1, e1))
    assert bundle_a.omega(ch, with_b=False).is_zero()
    assert bundle_a.omega(ch, with_b=True).is_zero()


def test_identities_vanish_model_a(bundle_a):
    for I in index_sets_prime(1, 1):
        assert verify_identity(bundle_a, "two_two", I).is_zero()
        assert verify_identity(bundle_a, "two_three", I).is_zero()
        assert verify_identity(bundle_a, "lemma23i", I).is_zero()
        assert verify_identity(bundle_a, "lemma22i", I).is_zero()
        assert verify_identity(bundle_a, "lemma22ii", I).is_zero()
    assert verify_identity(bundle_a, "two_seventeen").is_zero()


def test_koppelman_chain_identity_on_explicit_chain(bundle_a):
    e1, e2 = (Fr(1),), (Fr(-1),)
    ch = 3 * Chain.of((e1, e2)) - 2 * Chain.of((e2, e1))
    assert verify_identity(bundle_a, "koppelman_chain", chain=ch).is_zero()


@settings(max_examples=12, deadline=None)
@given(st.lists(
    st.tuples(st.sampled_from([((Fr(1),), (Fr(-1),)), ((Fr(-1),), (Fr(1),)),
                               ((Fr(1),), (Fr(1),))]),
              st.integers(min_value=-3, max_value=3)),
    min_size=1, max_size=4))
def test_koppelman_chain_identity_random_chains(bundle_a, terms):
    ch = Chain()
    for s, c in terms:
        ch = ch + c * Chain.of(s)
    assert verify_identity(bundle_a, "koppelman_chain", chain=ch).is_zero()


def test_kernel_denominator_structure(bundle_a):
    n = 3
    for I, form in bundle_a.K_I.items():
        want = {bundle_a.bm_id} | {
            bundle_a.leray_pair(direction_vector(j, 1))[1] for j in I}
        for (_, den) in form.terms:
            ids = {bid for bid, _ in den}
            assert ids == want
            assert all(e >= 1 for _, e in den)
            assert sum(e for _, e in den) == n


def test_r_kernel_has_no_bm_denominator(bundle_a):
    for (_, den) in bundle_a.R.terms:
        ids = {bid for bid, _ in den}
        assert bundle_a.bm_id not in ids
        assert sum(e for _, e in den) == 3


def test_registry_coverage(bundle_a):
    valid = {bundle_a.bm_id} | {d.phi_id for d in bundle_a.data.values()}
    for form in (bundle_a.K, bundle_a.E, bundle_a.R):
        for (_, den) in form.terms:
            for bid, _ in den:
                assert bid in valid


def test_solution_kernel_extraction_model_a(bundle_a):
    R = bundle_a.R
    k2 = extract_solution_kernel(bundle_a, 2)
    assert k2.orientation_sign == 1 and not k2.swapped
    assert (k2.expr - R.bidegree_part(0, 2)).is_zero()
    k1 = extract_solution_kernel(bundle_a, 1)
    assert k1.orientation_sign == 1 and not k1.swapped
    assert (k1.expr - R.bidegree_part(0, 1)).is_zero()
    k0 = extract_solution_kernel(bundle_a, 0)
    assert k0.orientation_sign == 1 and k0.swapped
    assert (k0.expr - R.bidegree_part(3, 1).swap_slots()).is_zero()
    assert not k0.expr.is_zero()
    for bad in (-1, 3):
        with pytest.raises(ValueError):
            extract_solution_kernel(bundle_a, bad)


def test_apex_admissibility(bundle_a):
    assert apex_admissible(bundle_a, (Fr(1),))
    assert apex_admissible(bundle_a, (Fr(-1),))


def test_bundle_text_dump_is_stable(bundle_a):
    txt = bundle_a.to_text()
    assert txt == bundle_a.to_text()
    assert "kernel K" in txt
    assert "kernel R" in txt
    assert "I={1}" in txt


# ---------------------------------------------------------------- bundles, model B

def test_model_b_select_m_refuses():
    reg = BarrierRegistry(4)
    with pytest.raises(SubdivisionError):
        build_bundle(model_b(), reg)


def test_model_b_bundle_with_forced_depth(bundle_b):
    b = bundle_b
    assert b.m == 0
    assert b.apex == (Fr(3, 7), Fr(4, 7))
    assert set(b.data) == {(Fr(1), Fr(0)), (Fr(0), Fr(1)), (Fr(-1), Fr(0)),
                           (Fr(0), Fr(-1)), (Fr(3, 7), Fr(4, 7))}


def test_model_b_apex_rejects_collinear_candidate(bundle_b):
    assert not apex_admissible(bundle_b, (Fr(1), Fr(0)))
    assert apex_admissible(bundle_b, (Fr(3, 7), Fr(4, 7)))


def test_model_b_b_kernel_consistency(bundle_b):
    # the alternating sum over deleted indices must agree with the boundary
    # expression, built here independently from the boundary chain
    for I in index_sets_prime(2, 2):
        alt = bundle_b.omega(boundary(sigma_chain(I, 2)), with_b=True)
        assert (bundle_b.B_I[I] - (-1) * alt).is_zero()


def test_model_b_identities(bundle_b):
    for I in index_sets_prime(2, 2):
        assert verify_identity(bundle_b, "two_two", I).is_zero()
        assert verify_identity(bundle_b, "lemma23i", I).is_zero()
    for I in index_sets_prime(2, 1):
        assert verify_identity(bundle_b, "lemma22i", I).is_zero()
        assert verify_identity(bundle_b, "lemma22ii", I).is_zero()
    assert verify_identity(bundle_b, "two_seventeen").is_zero()


def test_model_b_bidegree_vanishing_fails_at_full_depth(bundle_b):
    # the holomorphy spans of the two coordinate directions overlap in only
    # two dimensions, one short of q + k, so the vanishing genuinely fails
    bad = [I for I in index_sets_prime(2, 2)
           if not verify_identity(bundle_b, "lemma22i", I).is_zero()]
    assert bad


def test_model_b_solution_kernels(bundle_b):
    R = bundle_b.R
    k2 = extract_solution_kernel(bundle_b, 2)
    assert k2.orientation_sign == 1 and not k2.swapped
    assert (k2.expr - R.bidegree_part(0, 2)).is_zero()
    k1 = extract_solution_kernel(bundle_b, 1)
    assert k1.orientation_sign == -1 and not k1.swapped
    assert (k1.expr - (-1) * R.bidegree_part(0, 1)).is_zero()
    k0 = extract_solution_kernel(bundle_b, 0)
    assert k0.swapped
    assert (k0.expr - R.bidegree_part(4, 1).swap_slots()).is_zero()
    with pytest.raises(ValueError):
        extract_solution_kernel(bundle_b, 3)


def test_forced_inadmissible_apex_rejected():
    reg = BarrierRegistry(3)
    with pytest.raises(ApexError):
        build_bundle(model_a(), reg, m=0, apex=(Fr(0),))


def test_assemble_rejects_unknown_kind(bundle_a):
    with pytest.raises(KernelError):
        assemble(bundle_a, "Q")
