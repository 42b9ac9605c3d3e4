"""Phase criteria and numeric audits of the supporting inequalities.

The classifier evaluates the criterion functional

    d0(s, m) = (m - 1) * s * F0'(s) - a * F0(s)

at two designated points: s = mu^(1/a) with m = mu (mean offspring count)
for the supercritical test, and s = 1 + (M-1)/a with m = M (the essential
supremum) for the subcritical test.  Both conditions are sufficient, not
necessary, so three verdicts exist; values within a narrow band of zero are
never promoted to a phase claim.

The lemma*_check functions re-verify the inequality chain behind the
criteria on concrete evolved laws.  They return evidence rows rather than
booleans so the CLI audit command and the tests can report margins.
Comparisons run in signed log space: the audited quantities overflow
float64 within a few generations on growing instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dists
from .dists import FinitePmf, ModelSpec, OffspringLaw
from .evolution import evolve
from .logreal import LogReal

# |value| <= band counts as "indistinguishable from zero": no phase claim.
STRICTNESS_BAND = 1e-12
# Absolute slack for the growth-floor audit, relative slack for contraction.
GROWTH_SLACK = 1e-9
CONTRACTION_SLACK = 1e-9

SUPERCRITICAL = "Supercritical"
SUBCRITICAL = "Subcritical"
UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class PhaseVerdict:
    """Outcome of both sufficient conditions on one model.

    d_sub is None when the offspring law is unbounded: the subcritical
    condition is only proved for essentially bounded counts, so such models
    can never be declared Subcritical here.
    """

    verdict: str
    d_super: float
    d_sub: float | None
    details: dict

    def __str__(self) -> str:
        return self.verdict


def d0(model: ModelSpec, s: float, m: float) -> float:
    """Criterion functional of the initial law at multiplier m."""
    with np.errstate(over="ignore"):
        first = (m - 1.0) * s * dists.pgf_deriv(model.x0, s)
        second = model.a * dists.pgf_eval(model.x0, s)
    if math.isfinite(first) and math.isfinite(second):
        return first - second
    # A wide initial law evaluated past its radius of convergence overflows
    # float64; only the sign decides the verdict, so finish in log space.
    return _d_log(model.x0, s, m, model.a).to_float()


def classify(model: ModelSpec) -> PhaseVerdict:
    """Apply both sufficient conditions with a +/- 1e-12 strictness band."""
    mu = model.offspring.mean
    a = model.a
    s_super = mu ** (1.0 / a)
    d_super = d0(model, s_super, mu)
    bound = model.offspring.bound
    d_sub: float | None = None
    s_sub: float | None = None
    if bound is not None:
        s_sub = 1.0 + (bound - 1.0) / a
        d_sub = d0(model, s_sub, float(bound))
    if d_super > STRICTNESS_BAND:
        verdict = SUPERCRITICAL
    elif d_sub is not None and d_sub < -STRICTNESS_BAND:
        verdict = SUBCRITICAL
    else:
        verdict = UNDETERMINED
    details = {"s_super": s_super, "s_sub": s_sub,
               "offspring_mean": mu, "offspring_bound": bound}
    return PhaseVerdict(verdict, d_super, d_sub, details)


def _d_log(x: FinitePmf, s: float, m: float, a: int) -> LogReal:
    """(m-1) s F'(s) - a F(s) for an evolved law, in signed log space."""
    first = LogReal.from_float((m - 1.0) * s) \
        * LogReal.from_log(dists.log_pgf_deriv(x, s))
    second = LogReal.from_float(float(a)) \
        * LogReal.from_log(dists.log_pgf_eval(x, s))
    return first - second


@dataclass(frozen=True)
class GrowthRow:
    """One generation of the growth-floor audit (float views may be inf)."""

    n: int
    lhs: float
    geometric_floor: float
    holds: bool
    lhs_log: LogReal
    floor_log: LogReal


def lemma1_growth_check(model: ModelSpec, s: float, steps: int, *,
                        support_cap: int | None = None) -> list[GrowthRow]:
    """Audit lhs(n) >= (mu/s^a)^n * lhs(0) on a leak-free evolution.

    lhs(n) = (mu-1) s F_n'(s) - a F_n(s); the claim is the geometric growth
    of the supercritical criterion value, valid for 1 < s < mu^(1/a).
    """
    mu = model.offspring.mean
    a = model.a
    if not 1.0 < s < mu ** (1.0 / a):
        raise ValueError(
            f"s must lie in the open interval (1, {mu ** (1.0 / a)}), got {s}")
    trace = evolve(model, steps, tail_eps=0.0, keep_pmfs=True,
                   support_cap=support_cap)
    log_rate = math.log(mu) - a * math.log(s)
    slack = LogReal.from_float(GROWTH_SLACK)
    rows: list[GrowthRow] = []
    lhs0 = _d_log(trace.pmfs[0], s, mu, a)
    for n, x in enumerate(trace.pmfs):
        lhs = _d_log(x, s, mu, a)
        floor = lhs0 * LogReal.from_log(n * log_rate)
        holds = (lhs - floor + slack).sign >= 0
        rows.append(GrowthRow(n, lhs.to_float(), floor.to_float(), holds,
                              lhs, floor))
    return rows


def lemma2_tail_check(model: ModelSpec, steps: int) -> float:
    """Worst P(X_n >= a k + 1) * (mu - 1) * mu^k / a over n <= steps, k >= 1.

    The tail bound is only claimed for models the subcritical condition
    accepts, so any other verdict is refused.
    """
    verdict = classify(model)
    if verdict.verdict != SUBCRITICAL:
        raise ValueError(f"tail bound requires a Subcritical verdict, "
                         f"model classified {verdict.verdict}")
    mu = model.offspring.mean
    a = model.a
    trace = evolve(model, steps, tail_eps=0.0, keep_pmfs=True)
    log_mu = math.log(mu)
    log_pref = math.log(mu - 1.0) - math.log(a)
    worst = 0.0
    for x in trace.pmfs:
        if x.probs.size <= a + 1:
            continue
        suffix = np.cumsum(x.probs[::-1])[::-1]
        kmax = (x.support_max - 1) // a
        for k in range(1, kmax + 1):
            tail = float(suffix[a * k + 1])
            if tail <= 0.0:
                continue
            log_ratio = math.log(tail) + log_pref + k * log_mu
            worst = max(worst, math.exp(min(log_ratio, 700.0)))
    return worst


@dataclass(frozen=True)
class ContractionRow:
    """One generation of the contraction audit; row 0 carries no bound."""

    n: int
    d_next: float
    contraction_bound: float | None
    holds: bool
    d_next_log: LogReal
    bound_log: LogReal | None


def lemma3_contraction_check(model: ModelSpec, s: float, steps: int, *,
                             support_cap: int | None = None
                             ) -> list[ContractionRow]:
    """Audit D_{n+1}(s) <= (M G(F_n(s)) / (F_n(s) s^a)) * D_n(s).

    Requires an essentially bounded offspring law (bound M) and
    s >= 1 + (M-1)/a.  A negative D being contracted stays negative, which
    is the sign-persistence consequence the subcritical argument uses.
    """
    bound = model.offspring.bound
    if bound is None:
        raise ValueError("contraction audit requires bounded offspring counts")
    a = model.a
    threshold = 1.0 + (bound - 1.0) / a
    if s < threshold:
        raise ValueError(f"s must be >= {threshold}, got {s}")
    m = float(bound)
    law = model.offspring
    trace = evolve(model, steps, tail_eps=0.0, keep_pmfs=True,
                   support_cap=support_cap)
    log_s = math.log(s)
    rows: list[ContractionRow] = []
    d_prev: LogReal | None = None
    factor_prev: LogReal | None = None
    for n, x in enumerate(trace.pmfs):
        d_here = _d_log(x, s, m, a)
        if n == 0:
            rows.append(ContractionRow(0, d_here.to_float(), None, True,
                                       d_here, None))
        else:
            bnd = factor_prev * d_prev
            # slack is relative to |bound|, one-sided upward
            rhs = bnd + LogReal.from_log(bnd.log + math.log(CONTRACTION_SLACK))
            holds = (d_here - rhs).sign <= 0
            rows.append(ContractionRow(n, d_here.to_float(), bnd.to_float(),
                                       holds, d_here, bnd))
        log_f = dists.log_pgf_eval(x, s)
        factor_prev = LogReal.from_log(
            math.log(m) + law.log_pgf(log_f) - log_f - a * log_s)
        d_prev = d_here
    return rows


def lemma4_association_check(p: FinitePmf, s: float) -> tuple[float, float]:
    """(E X s^X, E X * E s^X); the first dominates for s > 1."""
    if s <= 1.0:
        raise ValueError(f"association inequality is claimed for s > 1, got {s}")
    lhs = s * dists.pgf_deriv(p, s)
    rhs = dists.mean(p) * dists.pgf_eval(p, s)
    return lhs, rhs


def lemma4_association_check_log(p: FinitePmf, s: float
                                 ) -> tuple[LogReal, LogReal]:
    """lemma4_association_check in signed log space, for laws whose
    generating function overflows float64."""
    if s <= 1.0:
        raise ValueError(f"association inequality is claimed for s > 1, got {s}")
    lhs = LogReal.from_float(s) * LogReal.from_log(dists.log_pgf_deriv(p, s))
    rhs = LogReal.from_float(dists.mean(p)) \
        * LogReal.from_log(dists.log_pgf_eval(p, s))
    return lhs, rhs


def offspring_association_check(law: OffspringLaw, v: float
                                ) -> tuple[float, float, float | None]:
    """(v G'(v), mu G(v), M G(v) or None): the middle and last sandwich
    the first for v >= 1, using the ideal (untruncated) law."""
    if v < 1.0:
        raise ValueError(f"offspring sandwich is claimed for v >= 1, got {v}")
    g = law.pgf_exact(v)
    gp = law.pgf_deriv_exact(v)
    upper = None if law.bound is None else law.bound * g
    return v * gp, law.mean * g, upper
