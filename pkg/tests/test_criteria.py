"""Phase criteria and the four inequality audits."""

import math

import numpy as np
import pytest

from drphase.criteria import (
    STRICTNESS_BAND,
    SUBCRITICAL,
    SUPERCRITICAL,
    UNDETERMINED,
    classify,
    d0,
    lemma1_growth_check,
    lemma2_tail_check,
    lemma3_contraction_check,
    lemma4_association_check,
    offspring_association_check,
)
from drphase.dists import FinitePmf, ModelSpec, OffspringLaw

from conftest import rand_model_light
from test_dists import rand_pmf


def two_point(p, a=1, high=2, law=None):
    return ModelSpec(a=a, x0=FinitePmf.from_dict({0: 1.0 - p, high: p}),
                     offspring=law or OffspringLaw.deterministic(2))


# -- criterion functional -----------------------------------------------------

def test_d0_symbolic_line_a1():
    # a=1, x0={0:1-p, 2:p}: d0(2, 2) = 5p - 1
    for p in (0.1, 0.2, 0.5, 0.9):
        assert d0(two_point(p), 2.0, 2.0) == pytest.approx(5.0 * p - 1.0,
                                                           abs=1e-14)


def test_d0_symbolic_line_a2():
    # a=2, x0={0:1-p, 3:p}, s=sqrt 2, m=2: d0 = (2 sqrt 2 + 2) p - 2
    for p in (0.3, 0.5):
        model = two_point(p, a=2, high=3)
        expect = (2.0 * math.sqrt(2.0) + 2.0) * p - 2.0
        assert d0(model, math.sqrt(2.0), 2.0) == pytest.approx(expect,
                                                               abs=1e-13)
    assert d0(two_point(0.5, a=2, high=3), math.sqrt(2.0), 2.0) \
        == pytest.approx(0.41421356, abs=1e-7)


def test_d0_with_unit_m_is_negative():
    rng = np.random.default_rng(41)
    for _ in range(10):
        model = rand_model_light(rng)
        s = 1.0 + 2.0 * float(rng.random())
        from drphase.dists import pgf_eval
        assert d0(model, s, 1.0) == pytest.approx(
            -model.a * pgf_eval(model.x0, s), rel=1e-14)
        assert d0(model, s, 1.0) < 0.0


def test_d0_linear_in_weights():
    rng = np.random.default_rng(42)
    law = OffspringLaw.deterministic(2)
    for _ in range(10):
        p, q = rand_pmf(rng), rand_pmf(rng)
        lam = float(rng.random())
        mixed = {}
        for v in set(p.as_dict()) | set(q.as_dict()):
            mixed[v] = lam * p.mass_at(v) + (1.0 - lam) * q.mass_at(v)
        mixed[max(mixed)] += 1.0 - sum(mixed.values())  # float repair
        mp = ModelSpec(a=1, x0=FinitePmf.from_dict(mixed), offspring=law)
        s, m = 1.7, 2.0
        lhs = d0(mp, s, m)
        rhs = (lam * d0(ModelSpec(a=1, x0=p, offspring=law), s, m)
               + (1.0 - lam) * d0(ModelSpec(a=1, x0=q, offspring=law), s, m))
        assert lhs == pytest.approx(rhs, abs=1e-12)


# -- classification -----------------------------------------------------------

def test_classify_supercritical_pinned():
    v = classify(two_point(0.5))
    assert v.verdict == SUPERCRITICAL
    assert v.d_super == pytest.approx(1.5, abs=1e-14)
    assert v.d_sub == pytest.approx(1.5, abs=1e-14)
    assert v.details["offspring_mean"] == 2.0


def test_classify_subcritical_pinned():
    v = classify(two_point(0.1))
    assert v.verdict == SUBCRITICAL
    assert v.d_sub == pytest.approx(-0.5, abs=1e-14)


def test_classify_undetermined_gap_pinned():
    model = ModelSpec(a=2, x0=FinitePmf.from_dict({0: 0.6, 3: 0.4}),
                      offspring=OffspringLaw.deterministic(2))
    v = classify(model)
    assert v.verdict == UNDETERMINED
    assert v.d_super == pytest.approx((2.0 * math.sqrt(2.0) + 2.0) * 0.4 - 2.0,
                                      abs=1e-13)
    assert v.d_sub == pytest.approx(5.375 * 0.4 - 2.0, abs=1e-13)
    assert v.d_super < 0.0 < v.d_sub


def test_classify_exact_boundary_is_undetermined():
    # 5p - 1 = 0 at p = 0.2: both criterion values sit inside the
    # strictness band, no phase may be claimed from rounding noise
    v = classify(two_point(0.2))
    assert v.verdict == UNDETERMINED
    assert abs(v.d_super) <= STRICTNESS_BAND


def test_classify_geometric_has_no_subcritical_criterion():
    model = ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.9, 2: 0.1}),
                      offspring=OffspringLaw.geometric(0.5))
    v = classify(model)
    assert v.d_sub is None
    assert v.verdict in (SUPERCRITICAL, UNDETERMINED)
    # same x0 with bounded N classifies Subcritical; unbounded never does
    assert classify(two_point(0.1)).verdict == SUBCRITICAL
    assert v.verdict == UNDETERMINED


def test_classify_criteria_coincide_for_unit_tax_deterministic():
    # a=1, deterministic N: both evaluation points are s=N, so the two
    # criterion values are equal and exactly one side can fire
    rng = np.random.default_rng(43)
    for _ in range(10):
        p = rand_pmf(rng, max_val=4)
        model = ModelSpec(a=1, x0=p, offspring=OffspringLaw.deterministic(3))
        v = classify(model)
        assert v.d_sub == pytest.approx(v.d_super, rel=1e-14)
        assert v.details["s_super"] == pytest.approx(v.details["s_sub"])


def test_classify_depends_only_on_the_pmf():
    # same weights supplied in a different insertion order: same verdict
    # and criterion values (classification is a function of F_0 alone)
    w = {0: 0.25, 2: 0.25, 5: 0.5}
    a = classify(ModelSpec(a=2, x0=FinitePmf.from_dict(w),
                           offspring=OffspringLaw.deterministic(2)))
    b = classify(ModelSpec(a=2, x0=FinitePmf.from_dict(dict(reversed(list(w.items())))),
                           offspring=OffspringLaw.deterministic(2)))
    assert a.verdict == b.verdict
    assert a.d_super == b.d_super
    assert a.d_sub == b.d_sub


# -- pointwise inequalities behind the theorems -------------------------------

def test_supercritical_pointwise_inequality_grid():
    # y(EN-1) + a >= a s^y for y in {1..a}, s <= (EN)^(1/a)
    for mu, a in ((2.0, 1), (2.0, 3), (3.0, 2), (4.0, 3)):
        s_top = mu ** (1.0 / a)
        for s in np.linspace(1.0, s_top, 9):
            for y in range(1, a + 1):
                assert y * (mu - 1.0) + a >= a * s**y - 1e-12


def test_contraction_pointwise_inequality_grid():
    # y(M-1) + a <= a s^y for s >= 1 + (M-1)/a, y >= 1
    for m, a in ((2, 1), (2, 3), (3, 2), (4, 3)):
        s0 = 1.0 + (m - 1.0) / a
        for s in (s0, 1.5 * s0, 2.0 * s0):
            for y in range(1, 30):
                assert y * (m - 1.0) + a <= a * s**y + 1e-9


# -- lemma audits -------------------------------------------------------------

def test_lemma1_growth_pinned_instance():
    model = two_point(0.5)
    rows = lemma1_growth_check(model, s=1.9, steps=8)
    assert rows[0].lhs == pytest.approx(1.305, abs=1e-12)
    assert rows[0].geometric_floor == pytest.approx(rows[0].lhs, rel=1e-14)
    for row in rows:
        assert row.holds
    # floors grow like (mu/s^a)^n
    ratio = rows[3].geometric_floor / rows[2].geometric_floor
    assert ratio == pytest.approx(2.0 / 1.9, rel=1e-12)


def test_lemma1_rejects_s_outside_window():
    model = two_point(0.5)
    with pytest.raises(ValueError):
        lemma1_growth_check(model, s=1.0, steps=4)
    with pytest.raises(ValueError):
        lemma1_growth_check(model, s=2.0, steps=4)


def test_lemma2_tail_pinned_instance():
    model = two_point(0.1)
    worst = lemma2_tail_check(model, steps=20)
    assert worst <= 1.0 + 1e-9
    assert worst > 0.0


def test_lemma2_refuses_non_subcritical():
    with pytest.raises(ValueError, match="Subcritical"):
        lemma2_tail_check(two_point(0.5), steps=5)


def test_lemma3_contraction_pinned_instance():
    model = two_point(0.1)
    rows = lemma3_contraction_check(model, s=2.0, steps=10)
    assert rows[0].contraction_bound is None  # input-only row
    for row in rows[1:]:
        assert row.holds
    # sign persistence: d0 < 0 at s=2 propagates through every generation
    assert rows[0].d_next < 0.0
    for row in rows:
        assert row.d_next < 0.0


def test_lemma3_requires_bounded_and_threshold():
    geo = ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.9, 2: 0.1}),
                    offspring=OffspringLaw.geometric(0.5))
    with pytest.raises(ValueError):
        lemma3_contraction_check(geo, s=2.0, steps=3)
    with pytest.raises(ValueError):
        lemma3_contraction_check(two_point(0.1), s=1.5, steps=3)  # below 1+(M-1)/a


def test_lemma4_pinned_pairs():
    lhs, rhs = lemma4_association_check(
        FinitePmf.from_dict({0: 0.5, 1: 0.5}), 2.0)
    assert (lhs, rhs) == (1.0, 0.75)
    lhs, rhs = lemma4_association_check(
        FinitePmf.from_dict({0: 0.9, 2: 0.1}), 2.0)
    assert lhs == pytest.approx(0.8)
    assert rhs == pytest.approx(0.26)
    # constants give exact equality
    lhs, rhs = lemma4_association_check(FinitePmf.delta(3), 1.5)
    assert lhs == pytest.approx(rhs, rel=1e-14)


def test_lemma4_association_property():
    rng = np.random.default_rng(44)
    for _ in range(50):
        p = rand_pmf(rng)
        s = 1.0 + 3.0 * float(rng.random()) + 1e-9
        lhs, rhs = lemma4_association_check(p, s)
        assert lhs >= rhs - 1e-12


def test_lemma4_requires_s_above_one():
    with pytest.raises(ValueError):
        lemma4_association_check(FinitePmf.from_dict({0: 0.5, 1: 0.5}), 1.0)


def test_offspring_association_pinned():
    law = OffspringLaw.finite_support({1: 0.5, 3: 0.5})
    vgp, lower, upper = offspring_association_check(law, 2.0)
    assert (vgp, lower, upper) == (13.0, 10.0, 15.0)
    # deterministic N: equality at the lower bound
    vgp, lower, upper = offspring_association_check(
        OffspringLaw.deterministic(2), 3.0)
    assert vgp == lower == 18.0
    assert upper == 18.0
    # v=1: lower bound is EN exactly
    vgp, lower, _ = offspring_association_check(law, 1.0)
    assert vgp == pytest.approx(law.mean)
    assert lower == pytest.approx(law.mean)


def test_offspring_association_geometric_has_no_upper():
    law = OffspringLaw.geometric(0.6)
    vgp, lower, upper = offspring_association_check(law, 1.2)
    assert upper is None
    assert vgp >= lower - 1e-12


def test_offspring_association_property():
    rng = np.random.default_rng(45)
    for _ in range(50):
        high = int(rng.integers(2, 5))
        weights = {high: 0.3 + 0.7 * float(rng.random())}
        if rng.random() < 0.7:
            weights[1] = 1.0 - weights[high]
        else:
            weights[high] = 1.0
        law = OffspringLaw.finite_support(weights)
        for v in (1.0, 1.5, 2.0):
            vgp, lower, upper = offspring_association_check(law, v)
            assert lower <= vgp + 1e-12
            assert vgp <= upper + 1e-12
