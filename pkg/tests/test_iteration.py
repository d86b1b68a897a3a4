from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowuplab.exponents import Variant, gamma, lifespan_exponent, strauss
from blowuplab.iteration import (IterationSpec, J_growth_rate, J_of_t, bound_constants,
                                 closed_form_exponents, envelope_log, iterate, lifespan_bound,
                                 series_limit, sp_infinity, sp_partial, sp_tail_bound)


def general(n: int, p: float, eps: float = 0.1, C3: float = 0.05, C4: float = 0.02) -> IterationSpec:
    return IterationSpec(Variant.GENERAL, n, p, eps, C3, C4=C4)


def p_grid(n: int) -> np.ndarray:
    top = strauss(n) - 0.05 if n >= 2 else 4.0
    return np.linspace(1.2, top, 8)


def test_general_sequence_example():
    seq = iterate(general(3, 2.0), 6)
    assert list(seq.a) == [2, 7, 17, 37, 77, 157]
    assert list(seq.b[:3]) == [4, 10, 22]


def test_two_d_low_p_sequence_example():
    spec = IterationSpec(Variant.TWO_D_LOW_P, 2, 1.5, 0.1, 0.05, C11=0.01)
    seq = iterate(spec, 3)
    assert seq.a == pytest.approx([0.5, 1.75, 3.625], abs=1e-14)
    assert seq.b == pytest.approx([3.0, 6.5, 11.75], abs=1e-14)


def test_one_d_sequence_example():
    spec = IterationSpec(Variant.ONE_D, 1, 3.0, 0.1, 0.05, C11=0.01)
    seq = iterate(spec, 4)
    assert list(seq.a) == [0, 2, 8, 26]
    assert list(seq.b) == [3, 11, 35, 107]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_recurrence_matches_closed_form(n):
    for p in p_grid(n):
        seq = iterate(general(n, p), 40)
        for j in range(1, 41):
            a, b = closed_form_exponents(general(n, p), j)
            assert seq.a[j - 1] == pytest.approx(a, rel=1e-10, abs=1e-12)
            assert seq.b[j - 1] == pytest.approx(b, rel=1e-10)


@pytest.mark.parametrize("variant,n", [(Variant.TWO_D_LOW_P, 2), (Variant.ONE_D, 1)])
def test_variant_recurrence_matches_closed_form(variant, n):
    for p in np.linspace(1.1, 1.95, 8):
        spec = IterationSpec(variant, n, p, 0.1, 0.05, C11=0.01)
        seq = iterate(spec, 40)
        q = p ** np.arange(40.0)
        if variant is Variant.TWO_D_LOW_P:
            assert seq.a == pytest.approx(q * (p + 1) - 2, rel=1e-10)
        assert seq.b == pytest.approx((3 + 2 / (p - 1)) * q - 2 / (p - 1), rel=1e-10)


def test_spec_validation():
    with pytest.raises(ValueError, match="C4"):
        IterationSpec(Variant.GENERAL, 3, 2.0, 0.1, 0.05)
    with pytest.raises(ValueError, match="n = 2"):
        IterationSpec(Variant.TWO_D_LOW_P, 3, 1.5, 0.1, 0.05, C11=0.01)
    with pytest.raises(ValueError, match="p > 1"):
        general(3, 1.0)
    with pytest.raises(ValueError, match="j_max"):
        iterate(general(3, 2.0), 0)


def test_sp_infinity_examples():
    assert sp_infinity(2.0, 1.0) == pytest.approx(4 * math.log(2), abs=1e-12)
    p = 1.5
    C5 = math.exp(2 * p * math.log(p) / (p - 1))
    assert sp_infinity(p, C5) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("p", [1.1, 1.5, 2.0, 3.0, 5.0])
@pytest.mark.parametrize("C", [1e-6, 1e-2, 0.5, 1.0, 3.0])
def test_sp_closed_form_matches_partial_sums(p, C):
    J = 4000 if p < 1.2 else 800
    assert sp_partial(p, C, J) == pytest.approx(sp_infinity(p, C), rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("p,C,J", [(1.5, 0.01, 5), (2.0, 1.0, 10), (1.2, 3.0, 30), (3.0, 1e-4, 3)])
def test_sp_tail_bound_holds(p, C, J):
    assert abs(sp_partial(p, C, J) - sp_infinity(p, C)) <= sp_tail_bound(p, C, J) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([2, 3, 4, 5]), st.floats(0.01, 0.99), st.floats(1e-8, 1.0))
def test_C6_positive(n, frac, C3):
    p = 1 + frac * (strauss(n) - 1)
    if gamma(p, n) <= 1e-9:
        return
    assert bound_constants(n, p, C3, C4=1.0).C6 > 0


@pytest.mark.parametrize("n,p", [(2, 1.5), (3, 2.0), (3, 1.3), (4, 1.8)])
def test_C7_exponent_and_homogeneity(n, p):
    c = bound_constants(n, p, 0.05, C4=0.02)
    c2 = bound_constants(n, p, 0.05, C4=0.04)
    k = 2 * (p - 1) / gamma(p, n)
    assert c2.C7 / c.C7 == pytest.approx(2.0 ** (-k), rel=1e-12)
    assert c.lifespan_exponent == pytest.approx(lifespan_exponent(n, p, "General"))


def test_bound_constants_reject_super_strauss():
    with pytest.raises(ValueError, match="not below p_S"):
        bound_constants(3, 2.5, 0.05, C4=0.02)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_log_envelope_inequality(n):
    for p in p_grid(n):
        for C3 in (1e-3, 0.1, 1.0):
            seq = iterate(general(n, p, C3=C3), 40)
            assert np.all(seq.logD_scaled >= seq.envelope_scaled - 1e-12)


@pytest.mark.parametrize("variant,n,p", [(Variant.TWO_D_LOW_P, 2, 1.5), (Variant.ONE_D, 1, 3.0)])
def test_variant_envelope_needs_C11_below_C3(variant, n, p):
    seq = iterate(IterationSpec(variant, n, p, 0.1, 0.05, C11=0.01), 40)
    assert np.all(seq.logD_scaled >= seq.envelope_scaled - 1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_b_growth_bound(n):
    for p in p_grid(n):
        seq = iterate(general(n, p), 40)
        bound = p ** np.arange(1.0, 41.0) * (n + 1 + 2 / (p - 1))
        assert np.all(seq.b <= bound)


def test_large_j_does_not_overflow():
    seq = iterate(general(3, 2.0), 10000)
    assert np.all(np.isfinite(seq.logD_scaled))
    assert math.isinf(seq.logD[-1]) or seq.logD[-1] > 0 or seq.logD[-1] < 0


def test_J_growth_and_divergence_mechanism():
    n, p = 3, 2.0
    spec = general(n, p)
    assert J_growth_rate(spec) == pytest.approx(gamma(p, n) / (2 * (p - 1)))
    consts = bound_constants(n, p, spec.C3, C4=spec.C4)
    t_star = consts.C7 * spec.eps ** (-lifespan_exponent(n, p, "General"))
    t = 2 * t_star
    assert J_of_t(t, spec, consts) > 0
    # the envelope then diverges as j grows
    logs = [envelope_log(t, j, spec, consts) for j in (5, 10, 20, 40)]
    assert all(b > a for a, b in zip(logs, logs[1:]))


def test_J_requires_positive_time():
    with pytest.raises(ValueError):
        J_of_t(0.0, general(3, 2.0))


def test_series_limit_matches_bound_constants():
    spec = general(3, 2.0)
    assert series_limit(spec) == pytest.approx(bound_constants(3, 2.0, spec.C3, C4=spec.C4).Sp_inf)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(1.5, 4.0))
def test_lifespan_bound_scaling(eps, factor):
    spec = general(3, 2.0, eps=eps)
    consts = bound_constants(3, 2.0, spec.C3, C4=spec.C4)
    ratio = lifespan_bound(eps / factor, spec, consts) / lifespan_bound(eps, spec, consts)
    assert ratio == pytest.approx(factor ** consts.lifespan_exponent, rel=1e-10)


def test_variant_bound_constants():
    c = bound_constants(2, 1.8, 0.05, C11=0.01, variant="TwoDLowP")
    assert c.lifespan_exponent == pytest.approx(lifespan_exponent(2, 1.8, "TwoDLowP"))
    assert c.C13 > 0 and c.lifespan_constant > 0 and not c.by_analogy
    one = bound_constants(1, 3.0, 0.05, C11=0.01, variant="OneD")
    assert one.lifespan_exponent == pytest.approx(lifespan_exponent(1, 3.0, "OneD"))
    assert one.by_analogy
    with pytest.raises(ValueError, match="C11"):
        bound_constants(1, 3.0, 0.05, variant="OneD")
