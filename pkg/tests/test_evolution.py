"""Law evolution: pinned one-step oracles, bound formulas, trace invariants."""

import math

import numpy as np
import pytest

from drphase.dists import FinitePmf, ModelSpec, OffspringLaw, pgf_deriv, pgf_eval
from drphase.evolution import (
    LeakBudgetExceeded,
    SupportCapExceeded,
    evolve,
    gf_step_deriv,
    gf_step_deriv_log,
    gf_step_eval,
    gf_step_eval_log,
    q_bounds,
    step,
)

from conftest import rand_model_light  # noqa: F401  (fixture-less helper)


def base_model():
    return ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.5, 2: 0.5}),
                     offspring=OffspringLaw.deterministic(2))


# -- pinned one-step laws ----------------------------------------------------

def test_step_enumeration_deterministic_two():
    out = step(base_model().x0, base_model(), tail_eps=0.0)
    assert out.as_dict() == pytest.approx({0: 0.25, 1: 0.5, 3: 0.25})
    assert out.leaked_mass == 0.0


def test_step_enumeration_uniform_mixture():
    model = ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.5, 2: 0.5}),
                      offspring=OffspringLaw.finite_support({1: 0.5, 2: 0.5}))
    out = step(model.x0, model, tail_eps=0.0)
    assert out.as_dict() == pytest.approx({0: 0.375, 1: 0.5, 3: 0.125})


def test_step_zero_is_absorbing():
    for law in (OffspringLaw.deterministic(2),
                OffspringLaw.finite_support({1: 0.3, 4: 0.7})):
        model = ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.9, 2: 0.1}),
                          offspring=law)
        out = step(FinitePmf.delta(0), model, tail_eps=0.0)
        assert out.as_dict() == {0: 1.0}
    # geometric N materializes at a 1e-14 cutoff: absorbing up to the
    # audited truncation leak, support still {0}
    model = ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.9, 2: 0.1}),
                      offspring=OffspringLaw.geometric(0.5))
    out = step(FinitePmf.delta(0), model, tail_eps=0.0)
    assert out.support.tolist() == [0]
    assert out.mass_at(0) + out.leaked_mass == pytest.approx(1.0, abs=1e-15)
    assert out.leaked_mass < 1e-13


def test_step_mass_conserved_leak_free():
    rng = np.random.default_rng(31)
    for _ in range(10):
        model = rand_model_light(rng)
        x = model.x0
        for _ in range(5):
            x = step(x, model, tail_eps=0.0)
            assert abs(x.total_mass + x.leaked_mass - 1.0) <= 1e-12


# -- generating-function route ------------------------------------------------

def test_gf_step_eval_pinned():
    model = base_model()
    assert gf_step_eval(model.x0, model, 2.0) == pytest.approx(3.25, abs=1e-14)


def test_gf_step_deriv_pinned():
    model = base_model()
    assert gf_step_deriv(model.x0, model, 2.0) == pytest.approx(3.5, abs=1e-14)


def test_gf_step_absorbing_input():
    model = base_model()
    delta = FinitePmf.delta(0)
    for s in (1.1, 2.0, 5.0):
        assert gf_step_eval(delta, model, s) == pytest.approx(1.0, abs=1e-14)
        assert gf_step_deriv(delta, model, s) == pytest.approx(0.0, abs=1e-14)


def test_gf_step_matches_step_pgf():
    rng = np.random.default_rng(32)
    for _ in range(10):
        model = rand_model_light(rng)
        out = step(model.x0, model, tail_eps=0.0)
        for s in (1.1, 1.5, 2.0, 3.0):
            assert gf_step_eval(model.x0, model, s) == pytest.approx(
                pgf_eval(out, s), rel=1e-10)
            assert gf_step_deriv(model.x0, model, s) == pytest.approx(
                pgf_deriv(out, s), rel=1e-10)


def test_gf_step_finite_difference_consistency():
    model = base_model()
    h = 1e-6
    for s in (1.5, 2.0, 2.5):
        fd = (gf_step_eval(model.x0, model, s + h)
              - gf_step_eval(model.x0, model, s - h)) / (2.0 * h)
        assert gf_step_deriv(model.x0, model, s) == pytest.approx(fd, rel=1e-5)


def test_gf_step_requires_cutoff_for_geometric():
    model = ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.5, 2: 0.5}),
                      offspring=OffspringLaw.geometric(0.5))
    with pytest.raises(ValueError, match="with_cutoff"):
        gf_step_eval(model.x0, model, 2.0)
    cut = ModelSpec(a=1, x0=model.x0,
                    offspring=model.offspring.with_cutoff())
    stepped = step(model.x0, model, tail_eps=0.0)
    assert gf_step_eval(cut.x0, cut, 1.5) == pytest.approx(
        pgf_eval(stepped, 1.5), rel=1e-10)


def test_gf_step_log_variants_match_plain():
    model = base_model()
    for s in (1.1, 2.0, 3.0):
        assert gf_step_eval_log(model.x0, model, s).to_float() == pytest.approx(
            gf_step_eval(model.x0, model, s), rel=1e-12)
        assert gf_step_deriv_log(model.x0, model, s).to_float() == pytest.approx(
            gf_step_deriv(model.x0, model, s), rel=1e-12)


# -- bound formulas -----------------------------------------------------------

def test_q_bounds_pinned():
    model = base_model()
    assert q_bounds(1.0, 0, model) == (1.0, 0.0)
    assert q_bounds(0.0, 5, model) == (0.0, -1.0 / 32.0)
    assert q_bounds(1.25, 1, model) == (0.625, 0.125)


def test_q_bounds_log_space_deep():
    # (EN)^n overflows float64 beyond n ~ 1024; the bounds must still be
    # finite and ordered
    model = base_model()
    up, lo = q_bounds(1.5, 2000, model)
    assert math.isfinite(up) and math.isfinite(lo)
    assert lo <= up
    assert up >= 0.0


def test_q_bounds_rejects_unit_mean():
    # no offspring law with EN <= 1 is constructible, so the formula's
    # EN > 1 precondition is enforced upstream
    with pytest.raises(ValueError):
        OffspringLaw.finite_support({1: 1.0})


# -- traces -------------------------------------------------------------------

def test_evolve_pinned_means():
    tr = evolve(base_model(), 2, tail_eps=0.0)
    assert [r.mean_xn for r in tr.rows] == pytest.approx([1.0, 1.25, 1.5625])
    assert [r.n for r in tr.rows] == [0, 1, 2]
    assert tr.rows[1].q_upper == pytest.approx(0.625)
    assert tr.rows[1].q_lower == pytest.approx(0.125)


def test_evolve_zero_steps():
    tr = evolve(base_model(), 0)
    assert len(tr.rows) == 1
    assert tr.rows[0].mean_xn == 1.0


def test_evolve_monotone_bracket_and_sandwich():
    rng = np.random.default_rng(33)
    for _ in range(8):
        model = rand_model_light(rng)
        tr = evolve(model, 12, tail_eps=0.0)
        mu = model.offspring.mean
        for prev, cur in zip(tr.rows, tr.rows[1:]):
            scale = max(abs(prev.q_upper), abs(cur.q_upper), 1.0)
            assert cur.q_upper <= prev.q_upper + 1e-12 * scale
            scale = max(abs(prev.q_lower), abs(cur.q_lower), 1.0)
            assert cur.q_lower >= prev.q_lower - 1e-12 * scale
            assert cur.q_lower <= cur.q_upper
            lo = mu * prev.mean_xn - model.a
            hi = mu * prev.mean_xn
            slack = 1e-12 * max(abs(lo), abs(hi), 1.0)
            assert lo - slack <= cur.mean_xn <= hi + slack


def test_evolve_subcritical_mean_stays_below_tax_ratio():
    model = ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.9, 2: 0.1}),
                      offspring=OffspringLaw.deterministic(2))
    tr = evolve(model, 25, tail_eps=0.0)
    bound = model.a / (model.offspring.mean - 1.0)
    for row in tr.rows:
        assert row.mean_xn <= bound + 1e-12
    assert tr.rows[-1].q_upper < tr.rows[0].q_upper
    assert tr.rows[-1].q_upper < 1e-4


def test_evolve_first_certified_step():
    tr = evolve(base_model(), 5, tail_eps=0.0)
    assert tr.first_certified_step() == 1
    sub = ModelSpec(a=1, x0=FinitePmf.from_dict({0: 0.9, 2: 0.1}),
                    offspring=OffspringLaw.deterministic(2))
    assert evolve(sub, 10).first_certified_step() is None


def test_evolve_keep_pmfs():
    tr = evolve(base_model(), 3, tail_eps=0.0, keep_pmfs=True)
    assert len(tr.pmfs) == 4
    assert tr.pmfs[1].as_dict() == pytest.approx({0: 0.25, 1: 0.5, 3: 0.25})
    assert evolve(base_model(), 3).pmfs is None


def test_evolve_leak_budget_failure_carries_partial_rows():
    model = base_model()
    with pytest.raises(LeakBudgetExceeded) as exc:
        evolve(model, 10, tail_eps=1e-3, leak_budget=1e-12)
    rows = exc.value.rows
    assert len(rows) >= 2
    assert rows[0].mean_xn == 1.0
    assert rows[-1].cumulative_leak > 1e-12


def test_evolve_support_cap_failure_carries_partial_rows():
    with pytest.raises(SupportCapExceeded) as exc:
        evolve(base_model(), 10, tail_eps=0.0, support_cap=8)
    assert exc.value.rows[-1].support_max > 8


def test_evolve_rejects_negative_steps():
    with pytest.raises(ValueError):
        evolve(base_model(), -1)
